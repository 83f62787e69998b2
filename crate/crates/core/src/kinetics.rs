//! Mass-action kinetics of the classifier network.
//!
//! Every reaction interval of the network has a closed-form solution when the
//! input concentrations are held constant over the interval: production at a
//! constant rate, first-order relaxation toward a fixed point, or pure
//! exponential growth of the gain species. The closed forms live here and in
//! the `selection`/`learner` modules. This module additionally exposes the raw
//! right-hand side of the rate equations and a fixed-step RK4 integrator, used
//! only to certify the closed forms in tests.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::selection::{sigmoid_f, SigmoidSpec};

/// A sorted set of distinct feature indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct FeatureSubset(Vec<usize>);

impl FeatureSubset {
    /// Builds the canonical (sorted) form. Duplicates and empty sets are rejected.
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InputShape("feature subset must be nonempty".into()));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InputShape(format!(
                "feature subset has repeated indices: {indices:?}"
            )));
        }
        Ok(Self(indices))
    }

    pub fn singleton(i: usize) -> Self {
        Self(vec![i])
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    /// True when every feature of `self` is also in `other` (`other` given as a bit mask).
    pub fn activated_by_mask(&self, mask: u64) -> bool {
        self.0.iter().all(|&i| i < 64 && mask & (1u64 << i) != 0)
    }

    pub fn is_disjoint(&self, other: &FeatureSubset) -> bool {
        self.0.iter().all(|i| !other.0.contains(i))
    }

    pub fn union(&self, other: &FeatureSubset) -> FeatureSubset {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        v.sort_unstable();
        v.dedup();
        FeatureSubset(v)
    }
}

impl TryFrom<Vec<usize>> for FeatureSubset {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        let sorted = v.windows(2).all(|w| w[0] < w[1]);
        if !sorted {
            return Err(Error::Load(format!(
                "feature subset {v:?} is not strictly increasing"
            )));
        }
        FeatureSubset::new(v)
    }
}

impl From<FeatureSubset> for Vec<usize> {
    fn from(s: FeatureSubset) -> Self {
        s.0
    }
}

impl fmt::Display for FeatureSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (n, i) in self.0.iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// Product of the input concentrations over `subset`.
pub fn flux(subset: &FeatureSubset, x: &[f64]) -> Result<f64> {
    let mut phi = 1.0;
    for &i in subset.indices() {
        let v = *x.get(i).ok_or_else(|| {
            Error::InputShape(format!(
                "feature {i} out of range for concentration vector of length {}",
                x.len()
            ))
        })?;
        phi *= v;
    }
    Ok(phi)
}

/// Unchecked variant of [`flux`] for hot loops where the subset was validated up front.
#[inline]
pub(crate) fn flux_unchecked(subset: &FeatureSubset, x: &[f64]) -> f64 {
    subset.indices().iter().map(|&i| x[i]).product()
}

/// Rate constants and catalyst/initial concentrations of the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateConstants {
    /// Forward-pass rate.
    pub a1: f64,
    /// Output decay rate.
    pub a2: f64,
    /// Weight production rate of both renormalization networks.
    pub b1: f64,
    /// Weight degradation rate of both renormalization networks.
    pub b2: f64,
    /// EWA learning rate.
    pub eta: f64,
    /// Concentration of the renormalization catalyst A.
    pub a0: f64,
    /// Concentration of the gain-positivity catalyst S.
    pub s0: f64,
    /// Common initial concentration of the gain species.
    pub h0: f64,
}

impl Default for RateConstants {
    fn default() -> Self {
        Self {
            a1: 1.0,
            a2: 1.0,
            b1: 1.0,
            b2: 1.0,
            eta: 0.0005,
            a0: 1.0,
            s0: 3.0,
            h0: 1.0,
        }
    }
}

impl RateConstants {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("a1", self.a1),
            ("a2", self.a2),
            ("b1", self.b1),
            ("b2", self.b2),
            ("eta", self.eta),
            ("a0", self.a0),
            ("s0", self.s0),
            ("h0", self.h0),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "rate constant {name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Equilibrium concentration b1/b2 of both renormalization networks.
    pub fn weight_scale(&self) -> f64 {
        self.b1 / self.b2
    }

    /// Margin δ = s0 − 2·(b1/b2)·α for a flux bound α.
    pub fn flux_margin(&self, flux_bound: f64) -> f64 {
        self.s0 - 2.0 * self.weight_scale() * flux_bound
    }
}

/// Duration of a renormalization interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RenormTime {
    Finite(f64),
    /// Evaluate the interval at the exact fixed point of its relaxation.
    Equilibrium,
}

impl RenormTime {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RenormTime::Finite(t) if !(t.is_finite() && t >= 0.0) => Err(Error::Config(format!(
                "renormalization duration must be finite and >= 0, got {t}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn is_equilibrium(&self) -> bool {
        matches!(self, RenormTime::Equilibrium)
    }
}

impl fmt::Display for RenormTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RenormTime::Finite(t) => write!(f, "{t}"),
            RenormTime::Equilibrium => write!(f, "equilibrium"),
        }
    }
}

impl Serialize for RenormTime {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RenormTime::Finite(t) => s.serialize_f64(*t),
            RenormTime::Equilibrium => s.serialize_str("equilibrium"),
        }
    }
}

impl<'de> Deserialize<'de> for RenormTime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t) => Ok(RenormTime::Finite(t)),
            Raw::Str(s) if s.eq_ignore_ascii_case("equilibrium") => Ok(RenormTime::Equilibrium),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"equilibrium\", got {s:?}"
            ))),
        }
    }
}

/// Interval lengths of the selection and learning phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    /// Presentation length of each selection sample.
    pub t_sel: f64,
    pub t_renorm: RenormTime,
    /// Presentation length of each learning (and inference) sample.
    pub t_learn: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            t_sel: 1.0,
            t_renorm: RenormTime::Equilibrium,
            t_learn: 1.0,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("t_sel", self.t_sel), ("t_learn", self.t_learn)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        self.t_renorm.validate()
    }
}

/// Solution of dy/dt = production − decay·y after `duration`.
pub fn relax_linear(y0: f64, production: f64, decay: f64, duration: RenormTime) -> Result<f64> {
    if !(decay > 0.0) {
        return Err(Error::Domain(format!("decay rate must be > 0, got {decay}")));
    }
    let fixed = production / decay;
    match duration {
        RenormTime::Equilibrium => Ok(fixed),
        RenormTime::Finite(t) => {
            if t < 0.0 {
                return Err(Error::Domain(format!("duration must be >= 0, got {t}")));
            }
            Ok(fixed + (y0 - fixed) * (-decay * t).exp())
        }
    }
}

/// Active reaction subsystem during one interval of the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Weight production through the sigmoidal rate; state = `[w^j]`.
    Selection,
    /// Catalytic renormalization of the input weights; state = `[w^j]`.
    SelectionRenorm,
    /// Forward pass and EWA network; state = `[x^k | h^{j→k} | w^{j→k}]`.
    Learn,
    /// Output-weight renormalization and output decay; same layout as `Learn`.
    LearnRenorm,
}

/// Static description of the network needed to evaluate the rate equations.
#[derive(Debug, Clone)]
pub struct NetworkLayout {
    pub subsets: Vec<FeatureSubset>,
    pub n_classes: usize,
    /// Frozen input weights w^j used during learning.
    pub input_weights: Vec<f64>,
    pub sigmoid: SigmoidSpec,
    /// Gain rate d_k for every class.
    pub gain_rates: Vec<f64>,
    /// Loss rate c_k for every class.
    pub loss_rates: Vec<f64>,
}

impl NetworkLayout {
    pub fn state_len(&self, phase: Phase) -> usize {
        match phase {
            Phase::Selection | Phase::SelectionRenorm => self.subsets.len(),
            Phase::Learn | Phase::LearnRenorm => {
                self.n_classes + 2 * self.subsets.len() * self.n_classes
            }
        }
    }

    /// Offset of h^{j→k} in a learning-phase state vector.
    pub fn h_index(&self, j: usize, k: usize) -> usize {
        self.n_classes + j * self.n_classes + k
    }

    /// Offset of w^{j→k} in a learning-phase state vector.
    pub fn w_index(&self, j: usize, k: usize) -> usize {
        self.n_classes + self.subsets.len() * self.n_classes + j * self.n_classes + k
    }
}

/// Right-hand side of the mass-action rate equations of the active subsystem.
pub fn mass_action_rhs(
    phase: Phase,
    layout: &NetworkLayout,
    state: &[f64],
    inputs: &[f64],
    rates: &RateConstants,
    true_class: Option<usize>,
) -> Result<Vec<f64>> {
    let n_sub = layout.subsets.len();
    let n_cls = layout.n_classes;
    if state.len() != layout.state_len(phase) {
        return Err(Error::InputShape(format!(
            "state has length {}, phase {phase:?} expects {}",
            state.len(),
            layout.state_len(phase)
        )));
    }
    let mut out = vec![0.0; state.len()];
    match phase {
        Phase::Selection => {
            for (j, subset) in layout.subsets.iter().enumerate() {
                out[j] = sigmoid_f(flux(subset, inputs)?, &layout.sigmoid)?;
            }
        }
        Phase::SelectionRenorm => {
            for j in 0..n_sub {
                out[j] = rates.b1 * rates.a0 - rates.b2 * rates.a0 * state[j];
            }
        }
        Phase::Learn => {
            let k_star = true_class.ok_or_else(|| {
                Error::Config("learning phase requires the true class of the sample".into())
            })?;
            if k_star >= n_cls {
                return Err(Error::InputShape(format!(
                    "true class {k_star} out of range for {n_cls} classes"
                )));
            }
            for (j, subset) in layout.subsets.iter().enumerate() {
                let xj = layout.input_weights[j] * flux(subset, inputs)?;
                for k in 0..n_cls {
                    out[k] += rates.a1 * xj * state[layout.w_index(j, k)];
                    let h = state[layout.h_index(j, k)];
                    out[layout.h_index(j, k)] = if k == k_star {
                        layout.gain_rates[k_star] * (xj + rates.s0) * h
                    } else {
                        layout.loss_rates[k_star] * (rates.s0 - xj) * h
                    };
                }
            }
        }
        Phase::LearnRenorm => {
            for k in 0..n_cls {
                out[k] = -rates.a2 * state[k];
                let h_sum: f64 = (0..n_sub).map(|j| state[layout.h_index(j, k)]).sum();
                for j in 0..n_sub {
                    let w = state[layout.w_index(j, k)];
                    out[layout.w_index(j, k)] =
                        rates.b1 * state[layout.h_index(j, k)] - rates.b2 * w * h_sum;
                }
            }
        }
    }
    Ok(out)
}

/// Classical fixed-step RK4 integration of [`mass_action_rhs`] over `duration`.
///
/// The last step is shortened so the integration ends exactly at `duration`.
#[allow(clippy::too_many_arguments)]
pub fn integrate_numeric(
    phase: Phase,
    layout: &NetworkLayout,
    state: &[f64],
    inputs: &[f64],
    rates: &RateConstants,
    true_class: Option<usize>,
    duration: f64,
    step: f64,
) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::Domain(format!("step must be > 0, got {step}")));
    }
    if !(duration >= 0.0) {
        return Err(Error::Domain(format!("duration must be >= 0, got {duration}")));
    }
    let mut y = state.to_vec();
    let n_steps = (duration / step).ceil() as usize;
    let rhs = |y: &[f64]| mass_action_rhs(phase, layout, y, inputs, rates, true_class);
    let axpy = |y: &[f64], k: &[f64], h: f64| -> Vec<f64> {
        y.iter().zip(k).map(|(a, b)| a + h * b).collect()
    };
    let mut t = 0.0;
    for _ in 0..n_steps {
        let h = step.min(duration - t);
        if h <= 0.0 {
            break;
        }
        let k1 = rhs(&y)?;
        let k2 = rhs(&axpy(&y, &k1, h / 2.0))?;
        let k3 = rhs(&axpy(&y, &k2, h / 2.0))?;
        let k4 = rhs(&axpy(&y, &k3, h))?;
        for i in 0..y.len() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if let Some(bad) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!(
                "state component {bad} became non-finite at t = {}",
                t + h
            )));
        }
        t += h;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subset(v: &[usize]) -> FeatureSubset {
        FeatureSubset::new(v.to_vec()).unwrap()
    }

    fn one_subset_layout(n_classes: usize) -> NetworkLayout {
        NetworkLayout {
            subsets: vec![subset(&[0])],
            n_classes,
            input_weights: vec![1.0],
            sigmoid: SigmoidSpec::new(0.5, 0.5, 1.0).unwrap(),
            gain_rates: vec![1.0; n_classes],
            loss_rates: vec![1.0; n_classes],
        }
    }

    #[test]
    fn flux_examples() {
        assert_eq!(flux(&subset(&[3]), &[0.0, 0.0, 0.0, 0.7]).unwrap(), 0.7);
        assert_eq!(flux(&subset(&[1, 2]), &[9.0, 2.0, 3.0]).unwrap(), 6.0);
        assert_eq!(flux(&subset(&[0, 1, 2]), &[0.5, 0.5, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn flux_out_of_range_is_shape_error() {
        let err = flux(&subset(&[0, 5]), &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::InputShape(_)));
    }

    #[test]
    fn subset_canonical_form() {
        assert_eq!(subset(&[2, 0, 1]), subset(&[0, 1, 2]));
        assert!(FeatureSubset::new(vec![1, 1]).is_err());
        assert!(FeatureSubset::new(vec![]).is_err());
        let parsed: std::result::Result<FeatureSubset, _> = serde_json::from_str("[2,1]");
        assert!(parsed.is_err());
    }

    #[test]
    fn relax_linear_examples() {
        let d = 2.5;
        let p = 5.0;
        for t in [0.0, 0.3, 4.0] {
            let y = relax_linear(p / d, p, d, RenormTime::Finite(t)).unwrap();
            assert!((y - p / d).abs() < 1e-15);
        }
        assert_eq!(relax_linear(0.0, 1.0, 1.0, RenormTime::Equilibrium).unwrap(), 1.0);
        // 1 - e^-1
        let y = relax_linear(0.0, 1.0, 1.0, RenormTime::Finite(1.0)).unwrap();
        assert!((y - 0.632_120_558_828_557_7).abs() < 1e-8);
    }

    #[test]
    fn relax_linear_rejects_nonpositive_decay() {
        assert!(matches!(
            relax_linear(0.0, 1.0, 0.0, RenormTime::Finite(1.0)),
            Err(Error::Domain(_))
        ));
        assert!(relax_linear(0.0, 1.0, -1.0, RenormTime::Equilibrium).is_err());
    }

    #[test]
    fn relax_linear_rk4_oracle() {
        // Independent RK4 on dy/dt = 1 - y.
        let mut y = 0.0f64;
        let h = 1e-4;
        for _ in 0..10_000 {
            let f = |y: f64| 1.0 - y;
            let k1 = f(y);
            let k2 = f(y + h / 2.0 * k1);
            let k3 = f(y + h / 2.0 * k2);
            let k4 = f(y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let closed = relax_linear(0.0, 1.0, 1.0, RenormTime::Finite(1.0)).unwrap();
        assert!((closed - y).abs() < 1e-8);
    }

    #[test]
    fn rhs_learn_renorm_pure_decay() {
        let layout = NetworkLayout {
            subsets: vec![],
            ..one_subset_layout(1)
        };
        let rates = RateConstants::default();
        let d = mass_action_rhs(Phase::LearnRenorm, &layout, &[1.0], &[], &rates, None).unwrap();
        assert_eq!(d, vec![-1.0]);
    }

    #[test]
    fn rhs_learn_forward_and_gain() {
        let layout = one_subset_layout(2);
        let rates = RateConstants {
            s0: 3.0,
            ..Default::default()
        };
        // state: x0, x1, h00, h01, w00, w01
        let state = [0.0, 0.0, 2.0, 2.0, 0.5, 0.5];
        let d = mass_action_rhs(Phase::Learn, &layout, &state, &[1.0], &rates, Some(0)).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-15);
        assert!((d[layout.h_index(0, 0)] - 8.0).abs() < 1e-15);
        // loss branch: c(s0 - x^j) h = 1 * 2 * 2
        assert!((d[layout.h_index(0, 1)] - 4.0).abs() < 1e-15);
        assert_eq!(d[layout.w_index(0, 0)], 0.0);
    }

    #[test]
    fn rhs_learn_requires_true_class() {
        let layout = one_subset_layout(2);
        let state = [0.0; 6];
        let err = mass_action_rhs(
            Phase::Learn,
            &layout,
            &state,
            &[1.0],
            &RateConstants::default(),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn integrate_zero_duration_is_identity() {
        let layout = one_subset_layout(2);
        let state = [0.3, 0.1, 2.0, 1.0, 0.5, 0.5];
        let out = integrate_numeric(
            Phase::Learn,
            &layout,
            &state,
            &[0.4],
            &RateConstants::default(),
            Some(1),
            0.0,
            1e-3,
        )
        .unwrap();
        assert_eq!(out, state.to_vec());
    }

    #[test]
    fn integrate_selection_renorm_matches_relax_linear() {
        let layout = NetworkLayout {
            subsets: vec![subset(&[0]), subset(&[1])],
            ..one_subset_layout(1)
        };
        let rates = RateConstants::default();
        let w0 = [0.0, 3.0];
        let out = integrate_numeric(
            Phase::SelectionRenorm,
            &layout,
            &w0,
            &[],
            &rates,
            None,
            2.0,
            1e-4,
        )
        .unwrap();
        for (y0, y) in w0.iter().zip(&out) {
            let closed = relax_linear(*y0, 1.0, 1.0, RenormTime::Finite(2.0)).unwrap();
            assert!((closed - y).abs() < 1e-8);
        }
    }

    #[test]
    fn integrate_learn_output_grows_linearly() {
        let layout = one_subset_layout(1);
        let rates = RateConstants::default();
        // w^{j→k} constant at 0.25, x^j = 0.8: slope a1 * 0.8 * 0.25 = 0.2
        let state = [0.0, 1.0, 0.25];
        let times = [0.5, 1.0, 1.5, 2.0];
        let xs: Vec<f64> = times
            .iter()
            .map(|&t| {
                integrate_numeric(Phase::Learn, &layout, &state, &[0.8], &rates, Some(0), t, 1e-4)
                    .unwrap()[0]
            })
            .collect();
        // least-squares slope and residual
        let n = times.len() as f64;
        let mt = times.iter().sum::<f64>() / n;
        let mx = xs.iter().sum::<f64>() / n;
        let slope = times
            .iter()
            .zip(&xs)
            .map(|(t, x)| (t - mt) * (x - mx))
            .sum::<f64>()
            / times.iter().map(|t| (t - mt).powi(2)).sum::<f64>();
        let resid = times
            .iter()
            .zip(&xs)
            .map(|(t, x)| (x - (mx + slope * (t - mt))).abs())
            .fold(0.0, f64::max);
        assert!((slope - 0.2).abs() < 1e-8);
        assert!(resid < 1e-8);
    }

    #[test]
    fn integrate_rejects_bad_step() {
        let layout = one_subset_layout(1);
        let r = integrate_numeric(
            Phase::SelectionRenorm,
            &layout,
            &[0.0],
            &[],
            &RateConstants::default(),
            None,
            1.0,
            0.0,
        );
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}
