//! Activity recognition from binary sensor streams: minute timeslices,
//! feature representations, NB/HMM/HSMM/CRF models and leave-one-day-out
//! evaluation.

pub mod chain;
pub mod container;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod logspace;
pub mod models;
pub mod optim;
pub mod synth;

pub use dataset::{HouseMeta, IntervalEvent, TimesliceSequence};
pub use error::{Error, Result};
pub use eval::{cross_validate, CvOptions, CvReport, MpcaAggregation};
pub use features::{featurize, FeatureConfig, FeatureSequence};
pub use models::{Model, ModelDocument, ModelKind, ModelOptions};
pub use optim::{LbfgsOptions, Termination};
