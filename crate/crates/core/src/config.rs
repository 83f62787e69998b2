//! Experiment configuration (JSON).
//!
//! Every field has a default, so `{}` is a valid configuration describing the
//! digits benchmark at depth 1. The learning rate defaults by depth when the
//! `rates` object does not set `eta` explicitly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::{EncodingSpec, SplitSpec};
use crate::error::{Error, Result};
use crate::kinetics::{RateConstants, RenormTime, Schedule};
use crate::learner::Mode;

/// Learning rate used when the configuration leaves it unset.
pub fn default_eta(depth: usize) -> f64 {
    if depth >= 2 {
        0.0001
    } else {
        0.0005
    }
}

pub fn bundled_digits_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("digits.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Number of subsets to keep (top-K mode).
    pub complexity: Option<usize>,
    /// Flux threshold (threshold mode); ignored when `complexity` is set.
    pub theta: Option<f64>,
    pub rho: f64,
    pub fmax: f64,
    /// Exposure of each selection sample.
    pub sample_duration: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            complexity: None,
            theta: None,
            rho: 0.01,
            fmax: 1.0,
            sample_duration: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub depth: usize,
    pub selection: SelectionConfig,
    /// Complexities visited by `sweep`; empty means 1..=C(|I|, n).
    pub grid: Vec<usize>,
    pub rates: RateConstants,
    pub schedule: Schedule,
    pub encoding: EncodingSpec,
    pub split: SplitSpec,
    /// Upper bound α on every flux.
    pub flux_bound: f64,
    pub repetitions: usize,
    pub seed: u64,
    pub mode: Mode,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: bundled_digits_path(),
            depth: 1,
            selection: SelectionConfig::default(),
            grid: Vec::new(),
            rates: RateConstants::default(),
            schedule: Schedule {
                t_sel: 1.0,
                t_renorm: RenormTime::Equilibrium,
                t_learn: 4.0,
            },
            encoding: EncodingSpec::default(),
            split: SplitSpec::default(),
            flux_bound: 1.0,
            repetitions: 10,
            seed: 0,
            mode: Mode::Simplified,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Parses a configuration; relative paths are resolved against `base`.
    pub fn from_json(text: &str, base: Option<&Path>) -> Result<Self> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        let eta_given = raw
            .get("rates")
            .and_then(|r| r.get("eta"))
            .is_some();
        let mut cfg: ExperimentConfig =
            serde_json::from_value(raw).map_err(|e| Error::Config(e.to_string()))?;
        if !eta_given {
            cfg.rates.eta = default_eta(cfg.depth);
        }
        if let Some(base) = base {
            if cfg.dataset.is_relative() && text.contains("\"dataset\"") {
                cfg.dataset = base.join(&cfg.dataset);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text, path.parent())
    }

    /// Canonical digits configuration at the given depth.
    pub fn canonical(depth: usize) -> Self {
        let mut cfg = Self {
            depth,
            ..Self::default()
        };
        cfg.rates.eta = default_eta(depth);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("depth must be >= 1".into()));
        }
        self.rates.validate()?;
        self.schedule.validate()?;
        self.encoding.validate()?;
        if !(self.flux_bound > 0.0) {
            return Err(Error::Config(format!("flux bound must be > 0, got {}", self.flux_bound)));
        }
        let delta = self.rates.flux_margin(self.flux_bound);
        if !(delta > 0.0) {
            return Err(Error::Config(format!(
                "bounded-flux margin s0 - 2(b1/b2)alpha = {delta} must be > 0"
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        if !(self.selection.rho > 0.0) || !(self.selection.fmax > 0.0) {
            return Err(Error::Config("sigmoid rho and fmax must be > 0".into()));
        }
        if !(self.selection.sample_duration > 0.0) {
            return Err(Error::Config("selection sample duration must be > 0".into()));
        }
        if self.grid.contains(&0) || self.selection.complexity == Some(0) {
            return Err(Error::Config("complexities must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_canonical() {
        let c = ExperimentConfig::from_json("{}", None).unwrap();
        assert_eq!(c, ExperimentConfig::canonical(1));
        assert_eq!(c.rates.eta, 0.0005);
        assert_eq!(c.rates.s0, 3.0);
        assert_eq!(c.encoding.sigma2, 1e-5);
        assert!(c.schedule.t_renorm.is_equilibrium());
        let c2 = ExperimentConfig::from_json(r#"{"depth": 2}"#, None).unwrap();
        assert_eq!(c2.rates.eta, 0.0001);
        let c3 = ExperimentConfig::from_json(r#"{"depth": 2, "rates": {"eta": 0.3}}"#, None).unwrap();
        assert_eq!(c3.rates.eta, 0.3);
    }

    #[test]
    fn rejects_nonpositive_margin() {
        let e = ExperimentConfig::from_json(r#"{"rates": {"s0": 2.0}}"#, None).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        assert_eq!(e.exit_code(), 1);
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#, None).is_err());
    }
}
