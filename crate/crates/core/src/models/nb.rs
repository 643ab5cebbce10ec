use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::logspace::{argmax, smoothed_log_probs};

/// Per-class independent Bernoulli emissions over binary features.
///
/// Only `log_theta` (log p(x_i = 1 | c)) is stored; the complement and the
/// all-off baseline are derived on construction so a row's score costs one
/// add per active feature.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliEmissions {
    n_classes: usize,
    n_features: usize,
    log_theta: Vec<f64>,
    active_gain: Vec<f64>,
    baseline: Vec<f64>,
}

impl BernoulliEmissions {
    pub fn from_log_theta(n_classes: usize, n_features: usize, log_theta: Vec<f64>) -> Result<Self> {
        if log_theta.len() != n_classes * n_features {
            return Err(Error::Dimension(format!(
                "log_theta has {} entries, expected {n_classes}×{n_features}",
                log_theta.len()
            )));
        }
        if log_theta.iter().any(|&v| !(v < 0.0) || !v.is_finite()) {
            return Err(Error::Domain(
                "emission probabilities must lie strictly inside (0, 1)".into(),
            ));
        }
        let log_off: Vec<f64> = log_theta.iter().map(|&l| (-l.exp()).ln_1p()).collect();
        let active_gain = log_theta.iter().zip(&log_off).map(|(a, b)| a - b).collect();
        let baseline = log_off.chunks(n_features.max(1)).map(|r| r.iter().sum()).collect();
        let baseline = if n_features == 0 { vec![0.0; n_classes] } else { baseline };
        Ok(Self {
            n_classes,
            n_features,
            log_theta,
            active_gain,
            baseline,
        })
    }

    /// Smoothed MLE: `(ones + alpha) / (rows + 2 alpha)` per class and feature.
    pub fn fit(data: &[FeatureSequence], n_classes: usize, alpha: f64) -> Result<Self> {
        let f = check_training_data(data, n_classes)?;
        if !(alpha > 0.0) {
            return Err(Error::Domain(format!("smoothing alpha must be > 0, got {alpha}")));
        }
        let mut ones = vec![0.0f64; n_classes * f];
        let mut rows = vec![0.0f64; n_classes];
        for seq in data {
            for (t, &y) in seq.labels.iter().enumerate() {
                rows[y] += 1.0;
                for &i in seq.f.row(t) {
                    ones[y * f + i as usize] += 1.0;
                }
            }
        }
        let log_theta = ones
            .iter()
            .enumerate()
            .map(|(k, &n1)| ((n1 + alpha) / (rows[k / f] + 2.0 * alpha)).ln())
            .collect();
        Self::from_log_theta(n_classes, f, log_theta)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn log_theta(&self) -> &[f64] {
        &self.log_theta
    }

    #[inline]
    pub fn score(&self, class: usize, active: &[u32]) -> f64 {
        let gain = &self.active_gain[class * self.n_features..(class + 1) * self.n_features];
        self.baseline[class] + active.iter().map(|&i| gain[i as usize]).sum::<f64>()
    }

    /// Row-major `T×C` table of `log p(x_t | c)`.
    pub fn score_table(&self, seq: &FeatureSequence) -> Result<Vec<f64>> {
        self.check_width(seq)?;
        let c = self.n_classes;
        let mut out = vec![0.0; seq.len() * c];
        for t in 0..seq.len() {
            let row = seq.f.row(t);
            for k in 0..c {
                out[t * c + k] = self.score(k, row);
            }
        }
        Ok(out)
    }

    pub fn check_width(&self, seq: &FeatureSequence) -> Result<()> {
        if seq.width() != self.n_features {
            return Err(Error::Dimension(format!(
                "sequence has {} features, model expects {}",
                seq.width(),
                self.n_features
            )));
        }
        Ok(())
    }
}

/// Validates labels and widths; returns the shared feature width.
pub(crate) fn check_training_data(data: &[FeatureSequence], n_classes: usize) -> Result<usize> {
    let first = data
        .iter()
        .find(|s| !s.is_empty())
        .ok_or(Error::EmptyTrainingSet)?;
    let f = first.width();
    for seq in data {
        if seq.width() != f {
            return Err(Error::Dimension(format!(
                "training sequences disagree on width ({} vs {f})",
                seq.width()
            )));
        }
        if let Some(&y) = seq.labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::Domain(format!("label {y} out of range 0..{n_classes}")));
        }
    }
    Ok(f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NbModel {
    pub log_prior: Vec<f64>,
    pub emissions: BernoulliEmissions,
    pub alpha: f64,
}

impl NbModel {
    pub fn fit(data: &[FeatureSequence], n_classes: usize, alpha: f64) -> Result<Self> {
        let emissions = BernoulliEmissions::fit(data, n_classes, alpha)?;
        let mut counts = vec![0.0; n_classes];
        for seq in data {
            for &y in &seq.labels {
                counts[y] += 1.0;
            }
        }
        Ok(Self {
            log_prior: smoothed_log_probs(&counts, alpha),
            emissions,
            alpha,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.log_prior.len()
    }

    pub fn n_features(&self) -> usize {
        self.emissions.n_features()
    }

    /// Per-row argmax of the joint; ties go to the lowest class.
    pub fn predict(&self, seq: &FeatureSequence) -> Result<Vec<usize>> {
        let c = self.n_classes();
        let table = self.emissions.score_table(seq)?;
        Ok(table
            .chunks(c)
            .map(|row| {
                let scores: Vec<f64> = row.iter().zip(&self.log_prior).map(|(e, p)| e + p).collect();
                argmax(&scores)
            })
            .collect())
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct NbParams {
    pub alpha: f64,
    pub log_prior: Vec<f64>,
    pub log_theta: Vec<Vec<f64>>,
}

impl From<&NbModel> for NbParams {
    fn from(m: &NbModel) -> Self {
        Self {
            alpha: m.alpha,
            log_prior: m.log_prior.clone(),
            log_theta: super::to_rows(m.emissions.log_theta(), m.n_features()),
        }
    }
}

impl NbParams {
    pub fn into_model(self, c: usize, f: usize) -> Result<NbModel> {
        if self.log_prior.len() != c {
            return Err(Error::Dimension("log_prior length differs from C".into()));
        }
        let theta = super::from_rows(self.log_theta, c, f)?;
        Ok(NbModel {
            log_prior: self.log_prior,
            emissions: BernoulliEmissions::from_log_theta(c, f, theta)?,
            alpha: self.alpha,
        })
    }
}
