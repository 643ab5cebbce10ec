//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use senseq::dataset::{BinaryMatrix, TimesliceSequence};
use senseq::features::FeatureSequence;
use senseq::models::{BernoulliEmissions, CrfModel, HmmModel, HsmmModel};

/// Every labeling of length `t` over `c` classes, in lexicographic order.
pub fn all_paths(c: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(c.pow(t as u32));
    let mut cur = vec![0usize; t];
    loop {
        out.push(cur.clone());
        let mut i = t;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < c {
                break;
            }
            cur[i] = 0;
        }
    }
}

pub fn lse(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Probability vector with entries bounded away from zero.
pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

pub fn random_features(rng: &mut ChaCha8Rng, t: usize, f: usize, labels: Vec<usize>) -> FeatureSequence {
    let rows: Vec<Vec<u8>> = (0..t)
        .map(|_| (0..f).map(|_| rng.gen_bool(0.4) as u8).collect())
        .collect();
    FeatureSequence::from_dense(f, &rows, labels).unwrap()
}

pub fn random_emissions(rng: &mut ChaCha8Rng, c: usize, f: usize) -> BernoulliEmissions {
    let log_theta = (0..c * f).map(|_| rng.gen_range(0.02f64..0.98).ln()).collect();
    BernoulliEmissions::from_log_theta(c, f, log_theta).unwrap()
}

/// `log p(x_t | k)` straight from the Bernoulli definition.
pub fn bernoulli_log_prob(e: &BernoulliEmissions, seq: &FeatureSequence, t: usize, k: usize) -> f64 {
    let f = e.n_features();
    let row = seq.f.dense_row(t);
    (0..f)
        .map(|i| {
            let lt = e.log_theta()[k * f + i];
            if row[i] == 1 {
                lt
            } else {
                (1.0 - lt.exp()).ln()
            }
        })
        .sum()
}

pub fn hmm_path_score(m: &HmmModel, seq: &FeatureSequence, path: &[usize]) -> f64 {
    let c = m.n_classes();
    let mut s = m.log_pi[path[0]];
    for t in 0..path.len() {
        if t > 0 {
            s += m.log_a[path[t - 1] * c + path[t]];
        }
        s += bernoulli_log_prob(&m.emissions, seq, t, path[t]);
    }
    s
}

/// Best labeling under the tie rule: among the paths within `tol` of the
/// maximum, the lexicographically smallest.
pub fn lex_best(paths: &[Vec<usize>], scores: &[f64], tol: f64) -> (Vec<usize>, f64) {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let i = scores.iter().position(|&s| s >= best - tol).unwrap();
    (paths[i].clone(), best)
}

/// Every segmentation of `0..t` as `(label, length)` runs with adjacent
/// labels distinct.
pub fn all_segmentations(c: usize, t: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(c: usize, left: usize, prev: Option<usize>, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for k in 0..c {
            if Some(k) == prev {
                continue;
            }
            for d in 1..=left {
                cur.push((k, d));
                rec(c, left - d, Some(k), cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(c, t, None, &mut Vec::new(), &mut out);
    out
}

pub fn hsmm_segmentation_score(m: &HsmmModel, seq: &FeatureSequence, segs: &[(usize, usize)]) -> f64 {
    let c = m.n_classes();
    let mut s = 0.0;
    let mut pos = 0;
    for (i, &(k, d)) in segs.iter().enumerate() {
        s += if i == 0 {
            m.log_pi[k]
        } else {
            m.log_a[segs[i - 1].0 * c + k]
        };
        s += m.log_d[k * m.d_max + d.min(m.d_max) - 1];
        for t in pos..pos + d {
            s += bernoulli_log_prob(&m.emissions, seq, t, k);
        }
        pos += d;
    }
    s
}

pub fn expand_segments(segs: &[(usize, usize)]) -> Vec<usize> {
    segs.iter().flat_map(|&(k, d)| std::iter::repeat(k).take(d)).collect()
}

pub fn crf_path_score(m: &CrfModel, seq: &FeatureSequence, path: &[usize]) -> f64 {
    let c = m.n_classes();
    let f = m.n_features();
    let mut s = m.w_init[path[0]];
    for t in 0..path.len() {
        let k = path[t];
        if t > 0 {
            s += m.w_trans[path[t - 1] * c + k];
        }
        let row = seq.f.dense_row(t);
        s += m.w_emit[k * (f + 1) + f];
        for i in 0..f {
            if row[i] == 1 {
                s += m.w_emit[k * (f + 1) + i];
            }
        }
    }
    s
}

pub fn random_timeslices(rng: &mut ChaCha8Rng, t: usize, n: usize, c: usize, p_flip: f64) -> TimesliceSequence {
    let mut x = BinaryMatrix::zeros(t, n);
    let mut state: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.3) as u8).collect();
    let mut y = Vec::with_capacity(t);
    let mut label = rng.gen_range(0..c);
    for r in 0..t {
        for (i, s) in state.iter_mut().enumerate() {
            if rng.gen_bool(p_flip) {
                *s ^= 1;
            }
            x.set(r, i, *s);
        }
        if rng.gen_bool(p_flip) {
            label = rng.gen_range(0..c);
        }
        y.push(label);
    }
    let start = rng.gen_range(0..3 * 1440);
    TimesliceSequence::new(start, x, y).unwrap()
}
