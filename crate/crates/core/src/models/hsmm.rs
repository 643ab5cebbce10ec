//! Explicit-duration HSMM with supervised fitting and exact MAP segmentation.
//!
//! Durations are counted in data points. Run lengths of `d_max` or more share
//! the last duration bucket, both when fitting and when decoding, so a
//! segment may be arbitrarily long. Self-transitions are structurally
//! impossible: the duration table owns persistence.

use serde::{Deserialize, Serialize};

use super::nb::{check_training_data, BernoulliEmissions};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;

#[derive(Debug, Clone, PartialEq)]
pub struct HsmmModel {
    pub log_pi: Vec<f64>,
    /// Row-major `C×C` segment-to-segment transitions; diagonal is `-inf`.
    pub log_a: Vec<f64>,
    /// Row-major `C×d_max`; column `d-1` holds `log p(d | c)`, the last
    /// column covers every `d ≥ d_max`.
    pub log_d: Vec<f64>,
    pub d_max: usize,
    pub emissions: BernoulliEmissions,
}

/// Maximal constant-label runs as `(label, length)`.
pub fn label_runs(labels: &[usize]) -> Vec<(usize, usize)> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for &y in labels {
        match runs.last_mut() {
            Some((c, n)) if *c == y => *n += 1,
            _ => runs.push((y, 1)),
        }
    }
    runs
}

#[derive(Debug, Clone, Copy)]
pub struct HsmmSmoothing {
    pub trans: f64,
    pub emit: f64,
    pub duration: f64,
}

impl HsmmModel {
    pub fn fit(
        data: &[FeatureSequence],
        n_classes: usize,
        d_max: usize,
        alphas: HsmmSmoothing,
    ) -> Result<Self> {
        check_training_data(data, n_classes)?;
        if d_max == 0 {
            return Err(Error::Domain("d_max must be at least 1".into()));
        }
        if !(alphas.trans > 0.0 && alphas.duration > 0.0) {
            return Err(Error::Domain("smoothing constants must be > 0".into()));
        }
        let c = n_classes;
        let emissions = BernoulliEmissions::fit(data, c, alphas.emit)?;

        let mut first = vec![0.0; c];
        let mut trans = vec![0.0; c * c];
        let mut dur = vec![0.0; c * d_max];
        for seq in data.iter().filter(|s| !s.is_empty()) {
            let runs = label_runs(&seq.labels);
            first[runs[0].0] += 1.0;
            for &(y, len) in &runs {
                dur[y * d_max + len.min(d_max) - 1] += 1.0;
            }
            for w in runs.windows(2) {
                trans[w[0].0 * c + w[1].0] += 1.0;
            }
        }

        let smooth = |counts: &[f64], alpha: f64| -> Vec<f64> {
            crate::logspace::smoothed_log_probs(counts, alpha)
        };
        let mut log_a = vec![f64::NEG_INFINITY; c * c];
        for i in 0..c {
            let others: Vec<usize> = (0..c).filter(|&j| j != i).collect();
            let counts: Vec<f64> = others.iter().map(|&j| trans[i * c + j]).collect();
            for (&j, lp) in others.iter().zip(smooth(&counts, alphas.trans)) {
                log_a[i * c + j] = lp;
            }
        }
        let log_d = dur.chunks(d_max).flat_map(|row| smooth(row, alphas.duration)).collect();

        Ok(Self {
            log_pi: smooth(&first, alphas.trans),
            log_a,
            log_d,
            d_max,
            emissions,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.log_pi.len()
    }

    pub fn n_features(&self) -> usize {
        self.emissions.n_features()
    }

    #[inline]
    pub fn log_duration(&self, class: usize, d: usize) -> f64 {
        self.log_d[class * self.d_max + d.min(self.d_max) - 1]
    }

    pub fn viterbi(&self, seq: &FeatureSequence) -> Result<Vec<usize>> {
        Ok(self.viterbi_with_score(seq)?.0)
    }

    /// MAP segmentation by dynamic programming over (end position, class,
    /// duration). Ties prefer the smaller class, then the shorter segment.
    pub fn viterbi_with_score(&self, seq: &FeatureSequence) -> Result<(Vec<usize>, f64)> {
        let c = self.n_classes();
        let t_len = seq.len();
        if t_len == 0 {
            return Ok((Vec::new(), 0.0));
        }
        let node = self.emissions.score_table(seq)?;
        let dm = self.d_max;

        // prefix[k][t] = Σ_{u<t} node[u][k]
        let mut prefix = vec![0.0; c * (t_len + 1)];
        for k in 0..c {
            let p = &mut prefix[k * (t_len + 1)..(k + 1) * (t_len + 1)];
            for t in 0..t_len {
                p[t + 1] = p[t] + node[t * c + k];
            }
        }
        let seg_emit = |k: usize, s: usize, e: usize| prefix[k * (t_len + 1) + e] - prefix[k * (t_len + 1) + s];

        let neg = f64::NEG_INFINITY;
        // entry[s][k]: best score of everything before s, then entering k at s
        let mut entry = vec![neg; t_len * c];
        let mut entry_from = vec![usize::MAX; t_len * c];
        // end[t][k]: best score of a segmentation of 0..=t whose last segment is k
        let mut end = vec![neg; t_len * c];
        let mut end_dur = vec![0usize; t_len * c];
        // running best of entry[s][k] - prefix[k][s] over s ≤ t+1-dm (segments
        // of length ≥ dm ending at t), with the latest such s on ties
        let mut tail = vec![(neg, 0usize); c];

        for t in 0..t_len {
            for k in 0..c {
                entry[t * c + k] = if t == 0 {
                    self.log_pi[k]
                } else {
                    let mut best = (neg, usize::MAX);
                    for j in 0..c {
                        let v = end[(t - 1) * c + j] + self.log_a[j * c + k];
                        if v > best.0 {
                            best = (v, j);
                        }
                    }
                    entry_from[t * c + k] = best.1;
                    best.0
                };
            }
            for k in 0..c {
                if t + 1 >= dm {
                    let s = t + 1 - dm;
                    let v = entry[s * c + k] - prefix[k * (t_len + 1) + s];
                    if v >= tail[k].0 && v > neg {
                        tail[k] = (v, s);
                    }
                }
                let mut best = (neg, 0usize);
                for d in 1..=(dm - 1).min(t + 1) {
                    let s = t + 1 - d;
                    let v = entry[s * c + k] + self.log_d[k * dm + d - 1] + seg_emit(k, s, t + 1);
                    if v > best.0 {
                        best = (v, d);
                    }
                }
                if tail[k].0 > neg {
                    let s = tail[k].1;
                    let v = entry[s * c + k] + self.log_d[k * dm + dm - 1] + seg_emit(k, s, t + 1);
                    if v > best.0 {
                        best = (v, t + 1 - s);
                    }
                }
                end[t * c + k] = best.0;
                end_dur[t * c + k] = best.1;
            }
        }

        let last = &end[(t_len - 1) * c..];
        let mut k = crate::logspace::argmax(last);
        let score = last[k];
        if score == neg {
            return Err(Error::Numerical(
                "no segmentation has positive probability".into(),
            ));
        }
        let mut labels = vec![0usize; t_len];
        let mut t = t_len - 1;
        loop {
            let d = end_dur[t * c + k];
            let s = t + 1 - d;
            labels[s..=t].fill(k);
            if s == 0 {
                break;
            }
            k = entry_from[s * c + k];
            t = s - 1;
        }
        Ok((labels, score))
    }

    /// Joint log-probability of a labeling read as its maximal runs.
    pub fn log_joint(&self, seq: &FeatureSequence, labels: &[usize]) -> Result<f64> {
        let node = self.emissions.score_table(seq)?;
        let c = self.n_classes();
        let mut score = 0.0;
        let mut pos = 0;
        let runs = label_runs(labels);
        for (r, &(k, len)) in runs.iter().enumerate() {
            score += if r == 0 {
                self.log_pi[k]
            } else {
                self.log_a[runs[r - 1].0 * c + k]
            };
            score += self.log_duration(k, len);
            score += (pos..pos + len).map(|u| node[u * c + k]).sum::<f64>();
            pos += len;
        }
        Ok(score)
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct HsmmParams {
    pub d_max: usize,
    #[serde(with = "super::log_rows")]
    pub log_pi: Vec<Vec<f64>>,
    #[serde(with = "super::log_rows")]
    pub log_a: Vec<Vec<f64>>,
    #[serde(with = "super::log_rows")]
    pub log_d: Vec<Vec<f64>>,
    pub log_theta: Vec<Vec<f64>>,
}

impl From<&HsmmModel> for HsmmParams {
    fn from(m: &HsmmModel) -> Self {
        Self {
            d_max: m.d_max,
            log_pi: vec![m.log_pi.clone()],
            log_a: super::to_rows(&m.log_a, m.n_classes()),
            log_d: super::to_rows(&m.log_d, m.d_max),
            log_theta: super::to_rows(m.emissions.log_theta(), m.n_features()),
        }
    }
}

impl HsmmParams {
    pub fn into_model(self, c: usize, f: usize) -> Result<HsmmModel> {
        if self.d_max == 0 {
            return Err(Error::Domain("d_max must be at least 1".into()));
        }
        Ok(HsmmModel {
            log_pi: super::from_rows(self.log_pi, 1, c)?,
            log_a: super::from_rows(self.log_a, c, c)?,
            log_d: super::from_rows(self.log_d, c, self.d_max)?,
            d_max: self.d_max,
            emissions: BernoulliEmissions::from_log_theta(c, f, super::from_rows(self.log_theta, c, f)?)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fs(labels: &[usize]) -> FeatureSequence {
        let rows = vec![[0u8]; labels.len()];
        FeatureSequence::from_dense(1, &rows, labels.to_vec()).unwrap()
    }

    const A: HsmmSmoothing = HsmmSmoothing {
        trans: 0.01,
        emit: 0.01,
        duration: 0.01,
    };

    #[test]
    fn runs() {
        assert_eq!(label_runs(&[0, 0, 0, 1]), vec![(0, 3), (1, 1)]);
        assert_eq!(label_runs(&[]), vec![]);
    }

    #[test]
    fn duration_histogram() {
        let m = HsmmModel::fit(&[fs(&[0, 0, 0, 1])], 2, 4, A).unwrap();
        let row0: Vec<f64> = (1..=4).map(|d| m.log_duration(0, d)).collect();
        assert_eq!(crate::logspace::argmax(&row0), 2);
        assert_eq!(m.log_a[0], f64::NEG_INFINITY);
        assert_eq!(m.log_a[3], f64::NEG_INFINITY);
        assert!((m.log_a[1].exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_run_transitions_uniform_over_others() {
        let m = HsmmModel::fit(&[fs(&[1, 1, 1])], 3, 5, A).unwrap();
        assert_eq!(m.log_a[4], f64::NEG_INFINITY);
        assert!((m.log_a[3].exp() - 0.5).abs() < 1e-12);
        assert!((m.log_a[5].exp() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn long_runs_clip_to_last_bucket() {
        let m = HsmmModel::fit(&[fs(&[0; 10])], 2, 3, A).unwrap();
        let p3 = m.log_duration(0, 3).exp();
        assert!((p3 - 1.01 / 1.03).abs() < 1e-12);
        assert_eq!(m.log_duration(0, 10), m.log_duration(0, 3));
    }

    #[test]
    fn normalized() {
        let m = HsmmModel::fit(&[fs(&[0, 0, 2, 1, 1, 1, 0]), fs(&[2, 2, 2, 2])], 3, 3, A).unwrap();
        for rows in [&m.log_a[..], &m.log_d[..], &m.log_pi[..]] {
            let width = rows.len() / if rows.len() == 3 { 1 } else { 3 };
            for row in rows.chunks(width) {
                let s: f64 = row.iter().map(|v| v.exp()).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_class_is_one_run() {
        let m = HsmmModel::fit(&[fs(&[0, 0, 0])], 1, 2, A).unwrap();
        assert_eq!(m.viterbi(&fs(&[0; 7])).unwrap(), vec![0; 7]);
    }

    #[test]
    fn forced_duration_two() {
        let neg = f64::NEG_INFINITY;
        let mut m = HsmmModel {
            log_pi: vec![0.6f64.ln(), 0.4f64.ln()],
            log_a: vec![neg, 0.0, 0.0, neg],
            log_d: vec![neg, 0.0, neg, neg, 0.0, neg],
            d_max: 3,
            emissions: BernoulliEmissions::from_log_theta(2, 1, vec![0.5f64.ln(); 2]).unwrap(),
        };
        let (path, score) = m.viterbi_with_score(&fs(&[0; 4])).unwrap();
        assert_eq!(path, vec![0, 0, 1, 1]);
        assert!((score - (0.6f64.ln() + 4.0 * 0.5f64.ln())).abs() < 1e-12);

        // symmetric start: both orders tie, the final segment takes class 0
        m.log_pi = vec![0.5f64.ln(); 2];
        assert_eq!(m.viterbi(&fs(&[0; 4])).unwrap(), vec![1, 1, 0, 0]);
    }

    #[test]
    fn ties_prefer_shorter_final_segment() {
        let neg = f64::NEG_INFINITY;
        // d=1 and d=2 equally likely for class 1; path 0,1,1 vs 0,0,1 tie
        let m = HsmmModel {
            log_pi: vec![0.0, neg],
            log_a: vec![neg, 0.0, 0.0, neg],
            log_d: vec![0.5f64.ln(), 0.5f64.ln(), neg, 0.5f64.ln(), 0.5f64.ln(), neg],
            d_max: 3,
            emissions: BernoulliEmissions::from_log_theta(2, 1, vec![0.5f64.ln(); 2]).unwrap(),
        };
        assert_eq!(m.viterbi(&fs(&[0; 3])).unwrap(), vec![0, 0, 1]);
    }

    #[test]
    fn impossible_sequence_errors() {
        let neg = f64::NEG_INFINITY;
        let m = HsmmModel {
            log_pi: vec![0.0],
            log_a: vec![neg],
            log_d: vec![neg, 0.0, neg],
            d_max: 3,
            emissions: BernoulliEmissions::from_log_theta(1, 1, vec![0.5f64.ln()]).unwrap(),
        };
        assert!(matches!(m.viterbi(&fs(&[0; 3])), Err(Error::Numerical(_))));
    }
}
