//! Sequence models sharing a fit/predict contract and a versioned JSON
//! document format.

pub mod crf;
pub mod hmm;
pub mod hsmm;
pub mod nb;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use crf::{CrfFitReport, CrfModel};
pub use hmm::HmmModel;
pub use hsmm::{HsmmModel, HsmmSmoothing};
pub use nb::{BernoulliEmissions, NbModel};

use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureSequence};
use crate::optim::LbfgsOptions;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Nb,
    Hmm,
    Hsmm,
    Crf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Nb, ModelKind::Hmm, ModelKind::Hsmm, ModelKind::Crf];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Nb => "nb",
            ModelKind::Hmm => "hmm",
            ModelKind::Hsmm => "hsmm",
            ModelKind::Crf => "crf",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameters for every model family; each model reads what it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOptions {
    pub alpha_emit: f64,
    pub alpha_trans: f64,
    pub alpha_dur: f64,
    pub d_max: usize,
    pub lambda_reg: f64,
    pub lbfgs: LbfgsOptions,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            alpha_emit: 0.01,
            alpha_trans: 0.01,
            alpha_dur: 0.01,
            d_max: 120,
            lambda_reg: 1.0,
            lbfgs: LbfgsOptions::default(),
        }
    }
}

impl ModelOptions {
    /// Sets all three smoothing constants.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha_emit = alpha;
        self.alpha_trans = alpha;
        self.alpha_dur = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, a) in [
            ("alpha_emit", self.alpha_emit),
            ("alpha_trans", self.alpha_trans),
            ("alpha_dur", self.alpha_dur),
        ] {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive and finite, got {a}")));
            }
        }
        if self.d_max == 0 {
            return Err(Error::Domain("d_max must be at least 1".into()));
        }
        if !(self.lambda_reg.is_finite() && self.lambda_reg >= 0.0) {
            return Err(Error::Domain(format!(
                "regularization must be non-negative and finite, got {}",
                self.lambda_reg
            )));
        }
        if self.lbfgs.max_iter == 0 {
            return Err(Error::Domain("max_iter must be at least 1".into()));
        }
        self.lbfgs.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Nb(NbModel),
    Hmm(HmmModel),
    Hsmm(HsmmModel),
    Crf(CrfModel),
}

impl Model {
    pub fn fit(
        kind: ModelKind,
        data: &[FeatureSequence],
        n_classes: usize,
        opts: &ModelOptions,
    ) -> Result<Self> {
        opts.validate()?;
        Ok(match kind {
            ModelKind::Nb => Model::Nb(NbModel::fit(data, n_classes, opts.alpha_emit)?),
            ModelKind::Hmm => Model::Hmm(HmmModel::fit(
                data,
                n_classes,
                opts.alpha_trans,
                opts.alpha_emit,
            )?),
            ModelKind::Hsmm => Model::Hsmm(HsmmModel::fit(
                data,
                n_classes,
                opts.d_max,
                HsmmSmoothing {
                    trans: opts.alpha_trans,
                    emit: opts.alpha_emit,
                    duration: opts.alpha_dur,
                },
            )?),
            ModelKind::Crf => {
                let (model, _report) = CrfModel::fit(data, n_classes, opts.lambda_reg, &opts.lbfgs)?;
                Model::Crf(model)
            }
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Nb(_) => ModelKind::Nb,
            Model::Hmm(_) => ModelKind::Hmm,
            Model::Hsmm(_) => ModelKind::Hsmm,
            Model::Crf(_) => ModelKind::Crf,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Model::Nb(m) => m.n_classes(),
            Model::Hmm(m) => m.n_classes(),
            Model::Hsmm(m) => m.n_classes(),
            Model::Crf(m) => m.n_classes(),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Nb(m) => m.n_features(),
            Model::Hmm(m) => m.n_features(),
            Model::Hsmm(m) => m.n_features(),
            Model::Crf(m) => m.n_features(),
        }
    }

    /// One label per row of `seq`.
    pub fn predict(&self, seq: &FeatureSequence) -> Result<Vec<usize>> {
        match self {
            Model::Nb(m) => m.predict(seq),
            Model::Hmm(m) => m.viterbi(seq),
            Model::Hsmm(m) => m.viterbi(seq),
            Model::Crf(m) => m.viterbi(seq),
        }
    }
}

/// On-disk model: parameters plus the feature recipe they were trained on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    pub model: ModelKind,
    #[serde(rename = "C")]
    pub n_classes: usize,
    #[serde(rename = "F")]
    pub n_features: usize,
    pub config: FeatureConfig,
    pub params: serde_json::Value,
}

impl ModelDocument {
    pub fn new(model: &Model, config: FeatureConfig) -> Result<Self> {
        let params = match model {
            Model::Nb(m) => serde_json::to_value(nb::NbParams::from(m))?,
            Model::Hmm(m) => serde_json::to_value(hmm::HmmParams::from(m))?,
            Model::Hsmm(m) => serde_json::to_value(hsmm::HsmmParams::from(m))?,
            Model::Crf(m) => serde_json::to_value(crf::CrfParams::from(m))?,
        };
        Ok(Self {
            version: MODEL_FORMAT_VERSION,
            model: model.kind(),
            n_classes: model.n_classes(),
            n_features: model.n_features(),
            config,
            params,
        })
    }

    pub fn to_model(&self) -> Result<Model> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelMismatch(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                self.version
            )));
        }
        let (c, f) = (self.n_classes, self.n_features);
        let p = self.params.clone();
        Ok(match self.model {
            ModelKind::Nb => Model::Nb(serde_json::from_value::<nb::NbParams>(p)?.into_model(c, f)?),
            ModelKind::Hmm => Model::Hmm(serde_json::from_value::<hmm::HmmParams>(p)?.into_model(c, f)?),
            ModelKind::Hsmm => {
                Model::Hsmm(serde_json::from_value::<hsmm::HsmmParams>(p)?.into_model(c, f)?)
            }
            ModelKind::Crf => Model::Crf(serde_json::from_value::<crf::CrfParams>(p)?.into_model(c, f)?),
        })
    }

    /// Checks that data with `n_sensors` sensors and `n_classes` activities,
    /// featurized with `config`, fits this model. The error lists every
    /// differing field.
    pub fn check_compatible(&self, config: &FeatureConfig, n_sensors: usize, n_classes: usize) -> Result<()> {
        let mut diff = Vec::new();
        let ours = serde_json::to_value(self.config)?;
        let theirs = serde_json::to_value(config)?;
        if let (Some(a), Some(b)) = (ours.as_object(), theirs.as_object()) {
            for (key, va) in a {
                let vb = &b[key];
                if va != vb {
                    diff.push(format!("  {key}: model {va}, requested {vb}"));
                }
            }
        }
        let width = config.feature_width(n_sensors);
        if width != self.n_features {
            diff.push(format!(
                "  F: model has {} features, data gives {width}",
                self.n_features
            ));
        }
        if n_classes != self.n_classes {
            diff.push(format!(
                "  C: model has {} classes, data has {n_classes}",
                self.n_classes
            ));
        }
        if diff.is_empty() {
            Ok(())
        } else {
            Err(Error::ModelMismatch(diff.join("\n")))
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub(crate) fn to_rows(flat: &[f64], width: usize) -> Vec<Vec<f64>> {
    if width == 0 {
        return Vec::new();
    }
    flat.chunks(width).map(<[f64]>::to_vec).collect()
}

pub(crate) fn from_rows(rows: Vec<Vec<f64>>, n_rows: usize, width: usize) -> Result<Vec<f64>> {
    if width > 0 && (rows.len() != n_rows || rows.iter().any(|r| r.len() != width)) {
        return Err(Error::Dimension(format!(
            "parameter table is not {n_rows}×{width}"
        )));
    }
    Ok(rows.into_iter().flatten().collect())
}

/// JSON has no `-inf`; log-probability tables write it as `null`.
pub(crate) mod log_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let mapped: Vec<Vec<Option<f64>>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| v.is_finite().then_some(v)).collect())
            .collect();
        mapped.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let rows: Vec<Vec<Option<f64>>> = Vec::deserialize(d)?;
        Ok(rows
            .into_iter()
            .map(|r| r.into_iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect())
            .collect())
    }
}
