use serde::{Deserialize, Serialize};

use super::nb::{check_training_data, BernoulliEmissions};
use crate::chain::viterbi_lex;
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::logspace::smoothed_log_probs;

/// Supervised first-order HMM over Bernoulli emissions.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    pub log_pi: Vec<f64>,
    /// Row-major `C×C`, `log_a[i*C + j] = log p(y_t = j | y_{t-1} = i)`.
    pub log_a: Vec<f64>,
    pub emissions: BernoulliEmissions,
}

impl HmmModel {
    pub fn fit(
        data: &[FeatureSequence],
        n_classes: usize,
        alpha_trans: f64,
        alpha_emit: f64,
    ) -> Result<Self> {
        check_training_data(data, n_classes)?;
        if !(alpha_trans > 0.0) {
            return Err(Error::Domain(format!(
                "transition smoothing must be > 0, got {alpha_trans}"
            )));
        }
        let c = n_classes;
        let emissions = BernoulliEmissions::fit(data, c, alpha_emit)?;
        let mut first = vec![0.0; c];
        let mut bigrams = vec![0.0; c * c];
        for seq in data.iter().filter(|s| !s.is_empty()) {
            first[seq.labels[0]] += 1.0;
            for w in seq.labels.windows(2) {
                bigrams[w[0] * c + w[1]] += 1.0;
            }
        }
        let log_a = bigrams
            .chunks(c)
            .flat_map(|row| smoothed_log_probs(row, alpha_trans))
            .collect();
        Ok(Self {
            log_pi: smoothed_log_probs(&first, alpha_trans),
            log_a,
            emissions,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.log_pi.len()
    }

    pub fn n_features(&self) -> usize {
        self.emissions.n_features()
    }

    /// Lexicographically smallest MAP label sequence.
    pub fn viterbi(&self, seq: &FeatureSequence) -> Result<Vec<usize>> {
        Ok(self.viterbi_with_score(seq)?.0)
    }

    pub fn viterbi_with_score(&self, seq: &FeatureSequence) -> Result<(Vec<usize>, f64)> {
        let node = self.emissions.score_table(seq)?;
        Ok(viterbi_lex(&self.log_pi, &self.log_a, &node, self.n_classes()))
    }

    /// Joint log-probability `log p(y, X)` of a given labeling.
    pub fn log_joint(&self, seq: &FeatureSequence, labels: &[usize]) -> Result<f64> {
        let node = self.emissions.score_table(seq)?;
        Ok(crate::chain::path_score(
            &self.log_pi,
            &self.log_a,
            &node,
            self.n_classes(),
            labels,
        ))
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct HmmParams {
    pub log_pi: Vec<f64>,
    pub log_a: Vec<Vec<f64>>,
    pub log_theta: Vec<Vec<f64>>,
}

impl From<&HmmModel> for HmmParams {
    fn from(m: &HmmModel) -> Self {
        Self {
            log_pi: m.log_pi.clone(),
            log_a: super::to_rows(&m.log_a, m.n_classes()),
            log_theta: super::to_rows(m.emissions.log_theta(), m.n_features()),
        }
    }
}

impl HmmParams {
    pub fn into_model(self, c: usize, f: usize) -> Result<HmmModel> {
        if self.log_pi.len() != c {
            return Err(Error::Dimension("log_pi length differs from C".into()));
        }
        Ok(HmmModel {
            log_pi: self.log_pi,
            log_a: super::from_rows(self.log_a, c, c)?,
            emissions: BernoulliEmissions::from_log_theta(c, f, super::from_rows(self.log_theta, c, f)?)?,
        })
    }
}
