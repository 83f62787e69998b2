//! Reference exponentially weighted average (EWA) forecaster and regret accounting.
//!
//! Gain matrices are indexed `[round][expert]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ln Σ exp(v), computed with max subtraction.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    let max = values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return Err(Error::Domain("log-sum-exp of an empty set".into()));
    }
    if !max.is_finite() {
        return Err(Error::Domain(format!("non-finite logit {max}")));
    }
    Ok(max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln())
}

/// Probabilities proportional to exp(logit), shift-invariant and overflow-free.
pub fn softmax_stable(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Domain("softmax over an empty expert set".into()));
    }
    if let Some(v) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite logit {v}")));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / z).collect())
}

/// A probability vector over experts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecasterDistribution(pub Vec<f64>);

impl ForecasterDistribution {
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        softmax_stable(logits).map(Self)
    }

    pub fn expected_gain(&self, gains: &[f64]) -> f64 {
        self.0.iter().zip(gains).map(|(p, g)| p * g).sum()
    }
}

/// Cumulative gains per expert and the range of gains observed so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainLedger {
    pub cumulative: Vec<f64>,
    pub rounds: usize,
    pub range: Option<(f64, f64)>,
}

impl GainLedger {
    pub fn new(n_experts: usize) -> Self {
        Self {
            cumulative: vec![0.0; n_experts],
            rounds: 0,
            range: None,
        }
    }

    pub fn record(&mut self, gains: &[f64]) -> Result<()> {
        if gains.len() != self.cumulative.len() {
            return Err(Error::InputShape(format!(
                "{} gains for {} experts",
                gains.len(),
                self.cumulative.len()
            )));
        }
        let (mut lo, mut hi) = self.range.unwrap_or((f64::INFINITY, f64::NEG_INFINITY));
        for (c, g) in self.cumulative.iter_mut().zip(gains) {
            *c += g;
            lo = lo.min(*g);
            hi = hi.max(*g);
        }
        self.range = Some((lo, hi));
        self.rounds += 1;
        Ok(())
    }
}

/// Gain credited to subset `j` by output class `k` for one presentation.
///
/// `integrated_flux` is ∫Φ^j over the window, `imbalance_true` is M/M^{k*}
/// for the presented sample's class `k*`.
#[allow(clippy::too_many_arguments)]
pub fn crn_gain(
    k: usize,
    true_class: usize,
    w_j: f64,
    integrated_flux: f64,
    s0: f64,
    t_learn: f64,
    imbalance_true: f64,
    n_classes: usize,
) -> f64 {
    if k == true_class {
        (w_j * integrated_flux + s0 * t_learn) * imbalance_true
    } else {
        (-w_j * integrated_flux + s0 * t_learn) * imbalance_true / (n_classes as f64 - 1.0)
    }
}

/// Learning-rate schedule for the reference forecaster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    Fixed(f64),
    /// η_m = (1/(b−a))·√(8 ln|E| / m) at round m (1-based).
    TimeDependent { a: f64, b: f64 },
}

/// Distributions played by EWA on a gain matrix: entry `m` is the
/// distribution used at round `m + 1`, so there are `M + 1` entries.
pub fn ewa_distributions(gains: &[Vec<f64>], n_experts: usize, rate: LearningRate) -> Result<Vec<ForecasterDistribution>> {
    if n_experts == 0 {
        return Err(Error::Domain("EWA needs at least one expert".into()));
    }
    let mut ledger = GainLedger::new(n_experts);
    let mut out = Vec::with_capacity(gains.len() + 1);
    out.push(ForecasterDistribution::uniform(n_experts));
    for (m, row) in gains.iter().enumerate() {
        ledger.record(row)?;
        let eta = match rate {
            LearningRate::Fixed(eta) => eta,
            LearningRate::TimeDependent { a, b } => {
                // rate for the next round, m + 2 in 1-based indexing
                prescribed_eta(a, b, m + 2, n_experts)?
            }
        };
        let logits: Vec<f64> = ledger.cumulative.iter().map(|g| eta * g).collect();
        out.push(ForecasterDistribution::from_logits(&logits)?);
    }
    Ok(out)
}

/// The weight families w̄_1, …, w̄_{M+1}: uniform start, then (b1/b2)·softmax(η G_m).
pub fn reference_ewa(gains: &[Vec<f64>], n_experts: usize, eta: f64, weight_scale: f64) -> Result<Vec<Vec<f64>>> {
    Ok(ewa_distributions(gains, n_experts, LearningRate::Fixed(eta))?
        .into_iter()
        .map(|p| p.0.into_iter().map(|v| v * weight_scale).collect())
        .collect())
}

/// Best single expert's cumulative gain minus the forecaster's.
///
/// `played[m]` is the distribution used at round `m`; extra entries are ignored.
pub fn regret(gains: &[Vec<f64>], played: &[ForecasterDistribution]) -> Result<f64> {
    if played.len() < gains.len() {
        return Err(Error::InputShape(format!(
            "{} distributions for {} rounds",
            played.len(),
            gains.len()
        )));
    }
    let n = gains.first().map_or(0, |r| r.len());
    let mut ledger = GainLedger::new(n);
    let mut forecaster = 0.0;
    for (row, p) in gains.iter().zip(played) {
        if p.0.len() != n {
            return Err(Error::InputShape("distribution width differs from expert count".into()));
        }
        ledger.record(row)?;
        forecaster += p.expected_gain(row);
    }
    let best = ledger.cumulative.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(if n == 0 { 0.0 } else { best - forecaster })
}

/// Worst-case EWA regret for gains in `[a, b]` over `m` rounds.
pub fn regret_bound(a: f64, b: f64, m: usize, n_experts: usize, time_dependent: bool) -> Result<f64> {
    if !(b > a) {
        return Err(Error::Domain(format!("gain interval [{a}, {b}] is empty")));
    }
    if n_experts == 0 {
        return Err(Error::Domain("no experts".into()));
    }
    let ln_e = (n_experts as f64).ln();
    let m = m as f64;
    Ok(if time_dependent {
        (b - a) * ((2.0 * m * ln_e).sqrt() + (ln_e / 8.0).sqrt())
    } else {
        (b - a) * (m * ln_e / 2.0).sqrt()
    })
}

/// η = (1/(b−a))·√(8 ln|E| / M).
pub fn prescribed_eta(a: f64, b: f64, m: usize, n_experts: usize) -> Result<f64> {
    if !(b > a) {
        return Err(Error::Domain(format!("gain interval [{a}, {b}] is empty")));
    }
    if m == 0 {
        return Err(Error::Domain("horizon must be >= 1".into()));
    }
    Ok((8.0 * (n_experts as f64).ln() / m as f64).sqrt() / (b - a))
}

/// CRN learning rate that instantiates the prescribed η for gains in
/// `[0, 2 t_learn s0 / ξ]`, where ξ is the smallest class proportion M^k/M.
pub fn crn_eta(xi: f64, t_learn: f64, s0: f64, m: usize, n_subsets: usize) -> Result<f64> {
    prescribed_eta(0.0, 2.0 * t_learn * s0 / xi, m, n_subsets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_stable(&[0.5; 4]).unwrap(), vec![0.25; 4]);
        let p = softmax_stable(&[0.0, 2f64.ln()]).unwrap();
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15 && (p[1] - 2.0 / 3.0).abs() < 1e-15);
        let hi = [1000.0, 1000.0 + 2f64.ln()];
        let q = softmax_stable(&hi).unwrap();
        let r = softmax_stable(&[0.0, hi[1] - hi[0]]).unwrap();
        assert!((r[0] - q[0]).abs() < 1e-15);
        assert!(matches!(softmax_stable(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn gain_examples() {
        assert_eq!(crn_gain(0, 0, 1.0, 0.0, 3.0, 1.0, 2.0, 2), 6.0);
        assert_eq!(crn_gain(0, 0, 1.0, 2.0, 3.0, 1.0, 2.0, 2), 10.0);
        assert_eq!(crn_gain(0, 1, 1.0, 2.0, 3.0, 1.0, 2.0, 2), 2.0);
    }

    #[test]
    fn reference_examples() {
        let zero = vec![vec![0.0; 3]; 5];
        for w in reference_ewa(&zero, 3, 0.7, 1.0).unwrap() {
            assert!(w.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        }
        let single = vec![vec![4.0]; 3];
        assert!(reference_ewa(&single, 1, 0.1, 2.0).unwrap().iter().all(|w| w == &vec![2.0]));
        let w = reference_ewa(&[vec![1.0, 0.0]], 2, 2f64.ln(), 1.0).unwrap();
        assert!((w[1][0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[1][1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn regret_examples() {
        let gains = vec![vec![1.0, 0.0]; 10];
        let best = vec![ForecasterDistribution(vec![1.0, 0.0]); 10];
        assert_eq!(regret(&gains, &best).unwrap(), 0.0);
        let uni = vec![ForecasterDistribution::uniform(2); 10];
        assert_eq!(regret(&gains, &uni).unwrap(), 5.0);
    }

    #[test]
    fn bound_examples() {
        assert_eq!(regret_bound(0.0, 1.0, 10, 1, false).unwrap(), 0.0);
        let b = regret_bound(0.0, 1.0, 2, 1, false).unwrap();
        assert_eq!(b, 0.0);
        let e = regret_bound(0.0, 1.0, 2, 3, false).unwrap();
        assert!((e - (3f64.ln()).sqrt()).abs() < 1e-15);
        assert!(matches!(regret_bound(1.0, 1.0, 2, 3, false), Err(Error::Domain(_))));
        for m in [1, 10, 100, 1000] {
            for n in [2, 5, 50] {
                assert!(regret_bound(0.0, 1.0, m, n, false).unwrap() <= regret_bound(0.0, 1.0, m, n, true).unwrap());
            }
        }
    }

    #[test]
    fn ledger_tracks_range() {
        let mut l = GainLedger::new(2);
        l.record(&[1.0, -2.0]).unwrap();
        l.record(&[3.0, 0.5]).unwrap();
        assert_eq!(l.cumulative, vec![4.0, -1.5]);
        assert_eq!(l.range, Some((-2.0, 3.0)));
        assert!(l.record(&[1.0]).is_err());
    }
}
