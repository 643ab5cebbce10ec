//! Log-domain helpers shared by the sequence models.

/// `log(sum(exp(values)))` without overflow; `-inf` for an empty or
/// all-`-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Log of additively smoothed frequencies: `log((count_i + alpha) / (total + k*alpha))`.
pub fn smoothed_log_probs(counts: &[f64], alpha: f64) -> Vec<f64> {
    let total: f64 = counts.iter().sum::<f64>() + alpha * counts.len() as f64;
    counts.iter().map(|&c| ((c + alpha) / total).ln()).collect()
}

/// Index of the first maximum (ties to the lowest index).
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
