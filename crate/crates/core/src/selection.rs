//! Selection phase: which feature subsets get a weight species, and how much.
//!
//! During selection the network is exposed to a sequence of samples, each held
//! constant for its own duration. A subset `j` produces its weight species at
//! rate `f(Φ^j)` where `f` is a sigmoidal ramp; with piecewise-constant inputs
//! the produced amount is the exact sum `Σ f(Φ^j)·duration`. Subsets whose
//! flux never exceeds the threshold are never materialized.
//!
//! The top-K variant ranks subsets by their maximum flux over the selection
//! samples and keeps the K largest, which is the same as thresholding at the
//! (K+1)-th largest maximum whenever that value is not tied with the K-th.

use std::collections::{BTreeMap, BTreeSet};

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{flux_unchecked, relax_linear, FeatureSubset, RateConstants, RenormTime};

/// Piecewise-linear sigmoidal production rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidSpec {
    /// Flux threshold below which nothing is produced.
    pub theta: f64,
    /// Width of the linear ramp.
    pub rho: f64,
    /// Plateau value.
    pub fmax: f64,
}

impl SigmoidSpec {
    pub fn new(theta: f64, rho: f64, fmax: f64) -> Result<Self> {
        let spec = Self { theta, rho, fmax };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::Config(format!("sigmoid ramp width must be > 0, got {}", self.rho)));
        }
        if !(self.fmax > 0.0) {
            return Err(Error::Config(format!("sigmoid plateau must be > 0, got {}", self.fmax)));
        }
        if !(self.theta >= 0.0) {
            return Err(Error::Config(format!("threshold must be >= 0, got {}", self.theta)));
        }
        Ok(())
    }
}

pub fn sigmoid_f(phi: f64, spec: &SigmoidSpec) -> Result<f64> {
    if !(spec.rho > 0.0) {
        return Err(Error::Config(format!("sigmoid ramp width must be > 0, got {}", spec.rho)));
    }
    Ok(ramp(phi, spec))
}

#[inline]
fn ramp(phi: f64, spec: &SigmoidSpec) -> f64 {
    if phi <= spec.theta {
        0.0
    } else if phi >= spec.theta + spec.rho {
        spec.fmax
    } else {
        spec.fmax * (phi - spec.theta) / spec.rho
    }
}

/// One selection-phase presentation: constant concentrations over `duration`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSample {
    pub concentrations: Vec<f64>,
    pub duration: f64,
}

impl SelectionSample {
    pub fn new(concentrations: Vec<f64>, duration: f64) -> Self {
        Self {
            concentrations,
            duration,
        }
    }
}

/// The selected subsets and the concentration of their weight species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub depth: usize,
    pub n_features: usize,
    /// Selected subsets in canonical (lexicographic) order.
    pub subsets: Vec<FeatureSubset>,
    /// Weight-species concentration aligned with `subsets`.
    pub weights: Vec<f64>,
    /// Threshold implied by a top-K selection.
    pub implied_theta: Option<f64>,
    /// Total length of the selection phase.
    pub t_sel: f64,
}

impl SelectionOutcome {
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn weight(&self, subset: &FeatureSubset) -> Option<f64> {
        self.subsets
            .binary_search(subset)
            .ok()
            .map(|i| self.weights[i])
    }
}

/// Number of size-`n` subsets of `n_features` features, saturating at `u64::MAX`.
pub fn n_choose_k(n_features: usize, n: usize) -> u64 {
    if n > n_features {
        return 0;
    }
    let k = n.min(n_features - n) as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n_features as u128 - i) / (i + 1);
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

fn check_samples(samples: &[SelectionSample], depth: usize) -> Result<usize> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Config("selection requires at least one sample".into()))?;
    let n_features = first.concentrations.len();
    if depth == 0 {
        return Err(Error::Config("depth must be >= 1".into()));
    }
    if depth > n_features {
        return Err(Error::Config(format!(
            "depth {depth} exceeds the number of features {n_features}"
        )));
    }
    for (m, s) in samples.iter().enumerate() {
        if s.concentrations.len() != n_features {
            return Err(Error::InputShape(format!(
                "selection sample {m} has {} features, expected {n_features}",
                s.concentrations.len()
            )));
        }
        if s.concentrations.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InputShape(format!(
                "selection sample {m} has a negative or non-finite concentration"
            )));
        }
        if !(s.duration > 0.0) {
            return Err(Error::Config(format!(
                "selection sample {m} has non-positive duration {}",
                s.duration
            )));
        }
    }
    Ok(n_features)
}

/// Subsets of the support of `x` of size `depth`, with their flux.
fn active_subsets(x: &[f64], depth: usize) -> impl Iterator<Item = (FeatureSubset, f64)> + '_ {
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 0.0).collect();
    support
        .into_iter()
        .combinations(depth)
        .map(move |idx| {
            let s = FeatureSubset::new(idx).expect("combinations are distinct and nonempty");
            let phi = flux_unchecked(&s, x);
            (s, phi)
        })
}

/// Threshold selection: every subset whose flux exceeds `spec.theta` during at
/// least one sample window.
pub fn run_selection_threshold(
    samples: &[SelectionSample],
    depth: usize,
    spec: &SigmoidSpec,
) -> Result<SelectionOutcome> {
    spec.validate()?;
    let n_features = check_samples(samples, depth)?;
    let mut produced: BTreeMap<FeatureSubset, f64> = BTreeMap::new();
    for s in samples {
        for (subset, phi) in active_subsets(&s.concentrations, depth) {
            if phi > spec.theta {
                *produced.entry(subset).or_insert(0.0) += ramp(phi, spec) * s.duration;
            }
        }
    }
    let (subsets, weights) = produced.into_iter().unzip();
    Ok(SelectionOutcome {
        depth,
        n_features,
        subsets,
        weights,
        implied_theta: None,
        t_sel: samples.iter().map(|s| s.duration).sum(),
    })
}

/// Maximum flux over the selection samples for every subset with nonzero flux somewhere.
pub fn max_fluxes(samples: &[SelectionSample], depth: usize) -> Result<BTreeMap<FeatureSubset, f64>> {
    check_samples(samples, depth)?;
    let mut best: BTreeMap<FeatureSubset, f64> = BTreeMap::new();
    for s in samples {
        for (subset, phi) in active_subsets(&s.concentrations, depth) {
            let e = best.entry(subset).or_insert(0.0);
            if phi > *e {
                *e = phi;
            }
        }
    }
    Ok(best)
}

/// Top-K selection by maximum flux, ties broken by canonical subset order.
///
/// `ramp` supplies the ramp width and plateau; its threshold is replaced by
/// the implied one before weights are produced.
pub fn run_selection_topk(
    samples: &[SelectionSample],
    depth: usize,
    k: usize,
    ramp_spec: &SigmoidSpec,
) -> Result<SelectionOutcome> {
    let n_features = check_samples(samples, depth)?;
    let total = n_choose_k(n_features, depth);
    if k == 0 || k as u64 > total {
        return Err(Error::Config(format!(
            "number of selected subsets must be in 1..={total}, got {k}"
        )));
    }
    let maxima = max_fluxes(samples, depth)?;
    let mut ranked: Vec<(FeatureSubset, f64)> = maxima.into_iter().collect();
    // BTreeMap order is canonical, so a stable sort on flux keeps the tie-break.
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut chosen: Vec<FeatureSubset> = ranked.iter().take(k).map(|(s, _)| s.clone()).collect();
    let implied_theta = if (k as u64) < total {
        Some(ranked.get(k).map(|(_, phi)| *phi).unwrap_or(0.0))
    } else {
        None
    };
    if chosen.len() < k {
        // Fill with never-active subsets in lexicographic order.
        let present: BTreeSet<FeatureSubset> = ranked.iter().map(|(s, _)| s.clone()).collect();
        for idx in (0..n_features).combinations(depth) {
            if chosen.len() == k {
                break;
            }
            let s = FeatureSubset::new(idx).expect("distinct");
            if !present.contains(&s) {
                chosen.push(s);
            }
        }
    }
    chosen.sort();

    let spec = SigmoidSpec {
        theta: implied_theta.unwrap_or(0.0),
        ..*ramp_spec
    };
    spec.validate()?;
    let weights = chosen
        .iter()
        .map(|s| {
            samples
                .iter()
                .map(|smp| ramp(flux_unchecked(s, &smp.concentrations), &spec) * smp.duration)
                .sum()
        })
        .collect();
    Ok(SelectionOutcome {
        depth,
        n_features,
        subsets: chosen,
        weights,
        implied_theta,
        t_sel: samples.iter().map(|s| s.duration).sum(),
    })
}

/// Runs the catalytic renormalization network on the produced weights.
pub fn renormalize_selection(
    outcome: &SelectionOutcome,
    t_renorm: RenormTime,
    rates: &RateConstants,
) -> Result<SelectionOutcome> {
    let weights = outcome
        .weights
        .iter()
        .map(|&w| relax_linear(w, rates.b1 * rates.a0, rates.b2 * rates.a0, t_renorm))
        .collect::<Result<Vec<_>>>()?;
    Ok(SelectionOutcome {
        weights,
        ..outcome.clone()
    })
}

/// Upper bound on |w^j − b1/b2| after renormalizing for `t_renorm`:
/// max{b1/b2, fmax·T_sel}·exp(−b2·a0·t_renorm).
pub fn renormalization_bound(rates: &RateConstants, fmax: f64, t_sel: f64, t_renorm: RenormTime) -> f64 {
    match t_renorm {
        RenormTime::Equilibrium => 0.0,
        RenormTime::Finite(t) => {
            rates.weight_scale().max(fmax * t_sel) * (-rates.b2 * rates.a0 * t).exp()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(theta: f64, rho: f64, fmax: f64) -> SigmoidSpec {
        SigmoidSpec::new(theta, rho, fmax).unwrap()
    }

    fn sub(v: &[usize]) -> FeatureSubset {
        FeatureSubset::new(v.to_vec()).unwrap()
    }

    #[test]
    fn sigmoid_examples() {
        let s = spec(1.0, 2.0, 4.0);
        assert_eq!(sigmoid_f(1.0, &s).unwrap(), 0.0);
        assert_eq!(sigmoid_f(3.0, &s).unwrap(), 4.0);
        assert_eq!(sigmoid_f(2.0, &s).unwrap(), 2.0);
        assert_eq!(sigmoid_f(0.0, &s).unwrap(), 0.0);
        assert_eq!(sigmoid_f(100.0, &s).unwrap(), 4.0);
        let bad = SigmoidSpec {
            theta: 1.0,
            rho: 0.0,
            fmax: 1.0,
        };
        assert!(matches!(sigmoid_f(1.5, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn threshold_all_zero_samples_select_nothing() {
        let samples = vec![SelectionSample::new(vec![0.0; 4], 1.0)];
        let out = run_selection_threshold(&samples, 2, &spec(0.1, 0.5, 1.0)).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn threshold_single_feature_saturated() {
        let samples = vec![SelectionSample::new(vec![2.0, 0.0, 0.5], 1.0)];
        let out = run_selection_threshold(&samples, 1, &spec(1.0, 0.5, 1.0)).unwrap();
        assert_eq!(out.subsets, vec![sub(&[0])]);
        assert_eq!(out.weights, vec![1.0]);
    }

    #[test]
    fn threshold_pairs() {
        let samples = vec![SelectionSample::new(vec![2.0, 2.0, 0.0], 1.0)];
        let out = run_selection_threshold(&samples, 2, &spec(1.0, 0.5, 1.0)).unwrap();
        assert_eq!(out.subsets, vec![sub(&[0, 1])]);
    }

    #[test]
    fn threshold_integrates_over_windows() {
        // flux 1.25 on window 1 (ramp value 0.5), 2.0 on window 2 (plateau)
        let samples = vec![
            SelectionSample::new(vec![1.25], 2.0),
            SelectionSample::new(vec![2.0], 0.5),
        ];
        let out = run_selection_threshold(&samples, 1, &spec(1.0, 0.5, 1.0)).unwrap();
        assert!((out.weights[0] - (0.5 * 2.0 + 1.0 * 0.5)).abs() < 1e-15);
        assert_eq!(out.t_sel, 2.5);
    }

    #[test]
    fn depth_larger_than_features_is_config_error() {
        let samples = vec![SelectionSample::new(vec![1.0, 1.0], 1.0)];
        assert!(matches!(
            run_selection_threshold(&samples, 3, &spec(0.1, 0.1, 1.0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn topk_keep_everything() {
        let samples = vec![SelectionSample::new(vec![0.3, 0.0, 0.9, 0.0], 1.0)];
        let out = run_selection_topk(&samples, 2, 6, &spec(0.0, 0.1, 1.0)).unwrap();
        assert_eq!(out.len(), 6);
        assert_eq!(out.implied_theta, None);
    }

    #[test]
    fn topk_ranks_by_max_flux() {
        let samples = vec![
            SelectionSample::new(vec![5.0, 0.5, 3.0], 1.0),
            SelectionSample::new(vec![1.0, 1.0, 0.1], 1.0),
        ];
        let out = run_selection_topk(&samples, 1, 2, &spec(0.0, 0.1, 1.0)).unwrap();
        assert_eq!(out.subsets, vec![sub(&[0]), sub(&[2])]);
        assert_eq!(out.implied_theta, Some(1.0));
    }

    #[test]
    fn topk_lexicographic_tie_break() {
        let samples = vec![SelectionSample::new(vec![0.5; 5], 1.0)];
        let out = run_selection_topk(&samples, 3, 1, &spec(0.0, 0.1, 1.0)).unwrap();
        assert_eq!(out.subsets, vec![sub(&[0, 1, 2])]);
    }

    #[test]
    fn topk_out_of_range() {
        let samples = vec![SelectionSample::new(vec![0.5; 3], 1.0)];
        assert!(run_selection_topk(&samples, 1, 0, &spec(0.0, 0.1, 1.0)).is_err());
        assert!(run_selection_topk(&samples, 1, 4, &spec(0.0, 0.1, 1.0)).is_err());
    }

    #[test]
    fn renormalize_examples() {
        let rates = RateConstants::default();
        let samples = vec![SelectionSample::new(vec![2.0, 0.7, 1.4], 1.0)];
        let out = run_selection_threshold(&samples, 1, &spec(0.5, 1.0, 3.0)).unwrap();
        let eq = renormalize_selection(&out, RenormTime::Equilibrium, &rates).unwrap();
        assert!(eq.weights.iter().all(|&w| w == 1.0));

        let zero = SelectionOutcome {
            weights: vec![0.0],
            subsets: vec![sub(&[0])],
            ..out.clone()
        };
        let r = renormalize_selection(&zero, RenormTime::Finite(3.0), &rates).unwrap();
        assert!((r.weights[0] - (1.0 - (-3.0f64).exp())).abs() < 1e-15);
        assert!((r.weights[0] - 0.9502).abs() < 1e-4);
    }

    #[test]
    fn renormalization_respects_bound() {
        let rates = RateConstants {
            b1: 2.0,
            b2: 0.5,
            a0: 1.5,
            ..Default::default()
        };
        let samples = vec![
            SelectionSample::new(vec![2.0, 0.7, 1.4, 0.0], 1.0),
            SelectionSample::new(vec![0.2, 1.9, 1.0, 3.0], 2.0),
        ];
        let s = spec(0.5, 1.0, 3.0);
        let out = run_selection_threshold(&samples, 1, &s).unwrap();
        for t in [1.0, 2.0, 4.0, 8.0] {
            let r = renormalize_selection(&out, RenormTime::Finite(t), &rates).unwrap();
            let bound = renormalization_bound(&rates, s.fmax, out.t_sel, RenormTime::Finite(t));
            for w in &r.weights {
                assert!((w - rates.weight_scale()).abs() <= bound);
            }
        }
    }

    #[test]
    fn binomial() {
        assert_eq!(n_choose_k(64, 2), 2016);
        assert_eq!(n_choose_k(64, 1), 64);
        assert_eq!(n_choose_k(3, 4), 0);
        assert_eq!(n_choose_k(5, 0), 1);
    }
}
