//! MAP decoding for first-order chains scored by `init[y0] + Σ node[t][y_t] +
//! Σ trans[y_{t-1}][y_t]`.
//!
//! Max-suffix scores are computed right to left and the path is then read
//! off greedily left to right, always taking the smallest class that still
//! attains the optimum. That yields the lexicographically smallest optimal
//! labeling rather than whatever a backpointer table happens to keep.

/// Returns the lexicographically smallest optimal labeling and its score.
/// `trans` and `node` are row-major (`C×C` and `T×C`).
pub fn viterbi_lex(init: &[f64], trans: &[f64], node: &[f64], c: usize) -> (Vec<usize>, f64) {
    debug_assert_eq!(init.len(), c);
    debug_assert_eq!(trans.len(), c * c);
    let t_len = node.len() / c;
    if t_len == 0 {
        return (Vec::new(), 0.0);
    }

    // suffix[t][k]: best score of positions t.. given y_t = k.
    let mut suffix = vec![0.0; t_len * c];
    suffix[(t_len - 1) * c..].copy_from_slice(&node[(t_len - 1) * c..]);
    for t in (0..t_len - 1).rev() {
        let (head, tail) = suffix.split_at_mut((t + 1) * c);
        let next = &tail[..c];
        for k in 0..c {
            let row = &trans[k * c..(k + 1) * c];
            let best = row
                .iter()
                .zip(next)
                .map(|(a, b)| a + b)
                .fold(f64::NEG_INFINITY, f64::max);
            head[t * c + k] = node[t * c + k] + best;
        }
    }

    let mut path = Vec::with_capacity(t_len);
    let first: Vec<f64> = (0..c).map(|k| init[k] + suffix[k]).collect();
    let y0 = crate::logspace::argmax(&first);
    let score = first[y0];
    path.push(y0);
    for t in 1..t_len {
        let prev = path[t - 1];
        let cand: Vec<f64> = (0..c)
            .map(|k| trans[prev * c + k] + suffix[t * c + k])
            .collect();
        path.push(crate::logspace::argmax(&cand));
    }
    (path, score)
}

/// Score of a fixed labeling under the same parameterization.
pub fn path_score(init: &[f64], trans: &[f64], node: &[f64], c: usize, path: &[usize]) -> f64 {
    let mut s = 0.0;
    for (t, &y) in path.iter().enumerate() {
        s += node[t * c + y];
        s += if t == 0 {
            init[y]
        } else {
            trans[path[t - 1] * c + y]
        };
    }
    s
}
