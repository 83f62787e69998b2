//! Deterministic mass-action chemical reaction network classifier.
//!
//! A network selects feature subsets from a few samples, then learns output
//! weights with an exponentially weighted average forecaster realized in
//! chemical kinetics. Every phase has a closed form, cross-checked against
//! fixed-step RK4 integration of the rate equations.
//!
//! ```
//! use crn::kinetics::{flux, FeatureSubset};
//!
//! let s = FeatureSubset::new(vec![0, 2]).unwrap();
//! assert_eq!(flux(&s, &[0.5, 9.0, 0.5]).unwrap(), 0.25);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod analysis;
pub mod config;
pub mod dataio;
pub mod error;
pub mod kinetics;
pub mod learner;
pub mod pipeline;
pub mod selection;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use kinetics::{FeatureSubset, RateConstants, RenormTime, Schedule};
pub use learner::{Mode, TrainedModel};
pub use selection::{SelectionOutcome, SigmoidSpec};
