//! Performance measures, limit weight families and bound reports.
//!
//! Per-round quantities are indexed by training round; `labels[m]` is the
//! class of the sample presented at round `m`. "Double averages" over other
//! classes first average within each class and then across classes, so every
//! represented class carries the same weight regardless of its sample count.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::aggregation::{reference_ewa, regret_bound};
use crate::error::{Error, Result};
use crate::kinetics::{flux, FeatureSubset, RateConstants, RenormTime};
use crate::learner::RunTrace;
use crate::selection::renormalization_bound;

/// Relative tolerance used to decide that two flux discrepancies are tied.
pub const ARGMAX_TOL: f64 = 1e-9;

fn class_means(values: &[f64], labels: &[usize], n_classes: usize) -> Vec<Option<f64>> {
    let mut sum = vec![0.0; n_classes];
    let mut cnt = vec![0usize; n_classes];
    for (v, &l) in values.iter().zip(labels) {
        if l < n_classes {
            sum[l] += v;
            cnt[l] += 1;
        }
    }
    sum.iter()
        .zip(&cnt)
        .map(|(s, &c)| (c > 0).then(|| s / c as f64))
        .collect()
}

fn n_classes_of(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

/// Own-class mean minus the double average over the other represented classes.
fn contrast(values: &[f64], labels: &[usize], k: usize) -> Result<f64> {
    if values.len() != labels.len() {
        return Err(Error::InputShape(format!(
            "{} values for {} labels",
            values.len(),
            labels.len()
        )));
    }
    let n = n_classes_of(labels).max(k + 1);
    let means = class_means(values, labels, n);
    let own = means[k].ok_or_else(|| {
        Error::UndefinedMeasure(format!("class {k} is never presented"))
    })?;
    let others: Vec<f64> = (0..n).filter(|&c| c != k).filter_map(|c| means[c]).collect();
    if others.is_empty() {
        return Err(Error::UndefinedMeasure(format!(
            "no class other than {k} is presented"
        )));
    }
    Ok(own - others.iter().sum::<f64>() / others.len() as f64)
}

fn trace_labels(trace: &RunTrace) -> Vec<usize> {
    trace.rounds.iter().map(|r| r.label).collect()
}

fn output_series(trace: &RunTrace, k: usize) -> Result<Vec<f64>> {
    let col = trace
        .classes
        .iter()
        .position(|&c| c == k)
        .ok_or_else(|| Error::UndefinedMeasure(format!("trace has no column for class {k}")))?;
    trace
        .rounds
        .iter()
        .map(|r| {
            r.x_out.as_ref().map(|x| x[col]).ok_or_else(|| {
                Error::UndefinedMeasure("trace has no output records; train in full mode".into())
            })
        })
        .collect()
}

/// disc^k_M from the recorded x^k(T¹_m).
pub fn species_discrepancy(trace: &RunTrace, k: usize) -> Result<f64> {
    contrast(&output_series(trace, k)?, &trace_labels(trace), k)
}

/// Disc_M from the recorded outputs, straight from its definition.
pub fn network_discrepancy(trace: &RunTrace) -> Result<f64> {
    let labels = trace_labels(trace);
    let series: Vec<Vec<f64>> = trace
        .classes
        .iter()
        .map(|&k| output_series(trace, k))
        .collect::<Result<_>>()?;
    let present: BTreeSet<usize> = labels.iter().copied().collect();
    if present.len() < 2 {
        return Err(Error::UndefinedMeasure("fewer than two classes presented".into()));
    }
    let mut outer = Vec::new();
    for &k_star in &present {
        let a = trace.classes.iter().position(|&c| c == k_star).ok_or_else(|| {
            Error::UndefinedMeasure(format!("trace has no column for class {k_star}"))
        })?;
        let rounds: Vec<usize> = (0..labels.len()).filter(|&m| labels[m] == k_star).collect();
        let mut inner = Vec::new();
        for (b, &k) in trace.classes.iter().enumerate() {
            if k == k_star {
                continue;
            }
            let mean = rounds.iter().map(|&m| series[a][m] - series[b][m]).sum::<f64>() / rounds.len() as f64;
            inner.push(mean);
        }
        if inner.is_empty() {
            return Err(Error::UndefinedMeasure("trace has a single class column".into()));
        }
        outer.push(inner.iter().sum::<f64>() / inner.len() as f64);
    }
    Ok(outer.iter().sum::<f64>() / outer.len() as f64)
}

fn check_scaled_simplex(q: &[f64], scale: f64) -> Result<()> {
    let sum: f64 = q.iter().sum();
    if q.iter().any(|v| !(*v >= 0.0)) || (sum - scale).abs() > 1e-9 * scale.max(1.0) {
        return Err(Error::Domain(format!(
            "weight family must be nonnegative and sum to {scale}, sums to {sum}"
        )));
    }
    Ok(())
}

/// disc^k_M(q^k). `fluxes[m][j]` is ∫Φ^j over round `m`.
pub fn species_discrepancy_const(
    q: &[f64],
    fluxes: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    rates: &RateConstants,
) -> Result<f64> {
    check_scaled_simplex(q, rates.weight_scale())?;
    let factor = rates.a1 * rates.weight_scale();
    let values: Vec<f64> = fluxes
        .iter()
        .map(|row| factor * row.iter().zip(q).map(|(f, w)| f * w).sum::<f64>())
        .collect();
    contrast(&values, labels, k)
}

/// Disc_M(q^K) with `q[k]` the family of class `k`.
pub fn network_discrepancy_const(
    q: &[Vec<f64>],
    fluxes: &[Vec<f64>],
    labels: &[usize],
    rates: &RateConstants,
) -> Result<f64> {
    let n = q.len();
    let factor = rates.a1 * rates.weight_scale();
    for qk in q {
        check_scaled_simplex(qk, rates.weight_scale())?;
    }
    let present: BTreeSet<usize> = labels.iter().copied().collect();
    if present.len() < 2 || present.iter().any(|&k| k >= n) {
        return Err(Error::UndefinedMeasure(
            "need at least two presented classes, each with a weight family".into(),
        ));
    }
    let score = |m: usize, k: usize| -> f64 {
        factor * fluxes[m].iter().zip(&q[k]).map(|(f, w)| f * w).sum::<f64>()
    };
    let mut outer = 0.0;
    for &k_star in &present {
        let rounds: Vec<usize> = (0..labels.len()).filter(|&m| labels[m] == k_star).collect();
        let mut inner = 0.0;
        for k in (0..n).filter(|&k| k != k_star) {
            inner += rounds.iter().map(|&m| score(m, k_star) - score(m, k)).sum::<f64>() / rounds.len() as f64;
        }
        outer += inner / (n - 1) as f64;
    }
    Ok(outer / present.len() as f64)
}

/// max_q disc^k_M(q) and the vertex that attains it (smallest index on ties).
pub fn best_constant_weights(
    fluxes: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    rates: &RateConstants,
) -> Result<(f64, usize)> {
    let n_sub = fluxes.first().map_or(0, |r| r.len());
    if n_sub == 0 {
        return Err(Error::UndefinedMeasure("no subsets".into()));
    }
    let factor = rates.a1 * rates.weight_scale() * rates.weight_scale();
    let mut best = (f64::NEG_INFINITY, 0);
    for j in 0..n_sub {
        let column: Vec<f64> = fluxes.iter().map(|r| factor * r[j]).collect();
        let v = contrast(&column, labels, k)?;
        if v > best.0 {
            best = (v, j);
        }
    }
    Ok(best)
}

/// max over q^K of Disc_M(q^K), attained class by class at simplex vertices.
pub fn best_network_const(
    fluxes: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    rates: &RateConstants,
) -> Result<(f64, Vec<usize>)> {
    let mut total = 0.0;
    let mut vertices = Vec::with_capacity(n_classes);
    for k in 0..n_classes {
        let (v, j) = best_constant_weights(fluxes, labels, k, rates)?;
        total += v;
        vertices.push(j);
    }
    Ok((total / n_classes as f64, vertices))
}

/// Scaled simplex vertex `scale·e_j`.
pub fn vertex(n: usize, j: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[j] = scale;
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub species: Vec<f64>,
    pub network: f64,
    /// Per class: best constant-weight discrepancy and its vertex.
    pub best_const: Vec<(f64, usize)>,
    pub best_network_const: f64,
    /// max_q Disc_M(q) − Disc_M.
    pub oracle_gap: f64,
}

pub fn discrepancy_report(trace: &RunTrace, fluxes: &[Vec<f64>], rates: &RateConstants) -> Result<DiscrepancyReport> {
    let labels = trace_labels(trace);
    let species = trace
        .classes
        .iter()
        .map(|&k| species_discrepancy(trace, k))
        .collect::<Result<Vec<_>>>()?;
    let network = network_discrepancy(trace)?;
    let best_const = trace
        .classes
        .iter()
        .map(|&k| best_constant_weights(fluxes, &labels, k, rates))
        .collect::<Result<Vec<_>>>()?;
    let (best_network_const, _) = best_network_const(fluxes, &labels, trace.classes.len(), rates)?;
    Ok(DiscrepancyReport {
        species,
        network,
        best_const,
        best_network_const,
        oracle_gap: best_network_const - network,
    })
}

/// A multiset of sample types, each presented `counts[o]` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitiveDataset {
    /// Concentrations of each sample type.
    pub types: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub counts: Vec<usize>,
    pub n_classes: usize,
}

impl RepetitiveDataset {
    pub fn check_repetitive(&self) -> Result<()> {
        if self.types.len() != self.labels.len() || self.types.len() != self.counts.len() {
            return Err(Error::InputShape("types, labels and counts differ in length".into()));
        }
        if let Some(&c0) = self.counts.first() {
            if let Some(o) = self.counts.iter().position(|&c| c != c0) {
                return Err(Error::AssumptionViolation(format!(
                    "type {o} is presented {} times, type 0 {c0} times",
                    self.counts[o]
                )));
            }
        }
        Ok(())
    }

    /// ∫_o Φ^j for every type `o` (rows) and subset `j` (columns).
    pub fn integrals(&self, subsets: &[FeatureSubset], t_learn: f64) -> Result<Vec<Vec<f64>>> {
        self.types
            .iter()
            .map(|x| subsets.iter().map(|s| flux(s, x).map(|f| f * t_learn)).collect())
            .collect()
    }

    /// Cyclic presentation order with every type shown `counts[o]` times.
    pub fn presentation_order(&self) -> Vec<usize> {
        let rounds = self.counts.iter().copied().max().unwrap_or(0);
        let mut order = Vec::new();
        for r in 0..rounds {
            for (o, &c) in self.counts.iter().enumerate() {
                if r < c {
                    order.push(o);
                }
            }
        }
        order
    }
}

/// Flux discrepancy from per-type integrals of a single subset.
pub fn flux_discrepancy_from_integrals(integrals: &[f64], labels: &[usize], k: usize) -> Result<f64> {
    contrast(integrals, labels, k)
}

/// Φ_disc^{j→k} on a repetitive dataset.
pub fn flux_discrepancy(subset: &FeatureSubset, k: usize, data: &RepetitiveDataset, t_learn: f64) -> Result<f64> {
    data.check_repetitive()?;
    let integrals = data
        .types
        .iter()
        .map(|x| flux(subset, x).map(|f| f * t_learn))
        .collect::<Result<Vec<_>>>()?;
    flux_discrepancy_from_integrals(&integrals, &data.labels, k)
}

/// Limit family from per-type integrals `integrals[o][j]`: for each class,
/// b1/b2 spread evenly over the subsets of maximal flux discrepancy.
pub fn asymptotic_weights_from_integrals(
    integrals: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    weight_scale: f64,
) -> Result<Vec<Vec<f64>>> {
    let n_sub = integrals.first().map_or(0, |r| r.len());
    (0..n_classes)
        .map(|k| {
            let disc = (0..n_sub)
                .map(|j| {
                    let col: Vec<f64> = integrals.iter().map(|r| r[j]).collect();
                    contrast(&col, labels, k)
                })
                .collect::<Result<Vec<_>>>()?;
            let max = disc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tol = ARGMAX_TOL * max.abs().max(1.0);
            let winners: Vec<usize> = (0..n_sub).filter(|&j| disc[j] >= max - tol).collect();
            let mut w = vec![0.0; n_sub];
            for &j in &winners {
                w[j] = weight_scale / winners.len() as f64;
            }
            Ok(w)
        })
        .collect()
}

pub fn asymptotic_weights(
    data: &RepetitiveDataset,
    subsets: &[FeatureSubset],
    rates: &RateConstants,
    t_learn: f64,
) -> Result<Vec<Vec<f64>>> {
    data.check_repetitive()?;
    let integrals = data.integrals(subsets, t_learn)?;
    asymptotic_weights_from_integrals(&integrals, &data.labels, data.n_classes, rates.weight_scale())
}

/// Outcome of [`is_optimal_family`]; `witness` is a violating `(class, type)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimalityCheck {
    pub optimal: bool,
    pub witness: Option<(usize, usize)>,
}

/// Checks Σ_j q^{j→k} ∫_o Φ^j > 0 ⇔ o ∈ k for every class and type.
pub fn is_optimal_family(q: &[Vec<f64>], integrals: &[Vec<f64>], labels: &[usize]) -> OptimalityCheck {
    for (k, qk) in q.iter().enumerate() {
        for (o, row) in integrals.iter().enumerate() {
            let score: f64 = row.iter().zip(qk).map(|(f, w)| f * w).sum();
            if (score > 0.0) != (labels[o] == k) {
                return OptimalityCheck {
                    optimal: false,
                    witness: Some((k, o)),
                };
            }
        }
    }
    OptimalityCheck {
        optimal: true,
        witness: None,
    }
}

/// Sample types as feature bit masks, with binary integrated fluxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryFluxInstance {
    pub n_features: usize,
    pub subsets: Vec<FeatureSubset>,
    pub types: Vec<u64>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    /// Common value of every nonzero flux integral.
    pub p: f64,
    /// Whether all activation sets are required to have the same size.
    pub equal_cardinality: bool,
}

impl BinaryFluxInstance {
    /// O^j as type indices.
    pub fn activation_set(&self, j: usize) -> Vec<usize> {
        (0..self.types.len())
            .filter(|&o| self.subsets[j].activated_by_mask(self.types[o]))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.types.len() != self.labels.len() {
            return Err(Error::InputShape("types and labels differ in length".into()));
        }
        if self.labels.iter().any(|&l| l >= self.n_classes) {
            return Err(Error::InputShape("label out of range".into()));
        }
        if self.equal_cardinality {
            let sizes: BTreeSet<usize> = (0..self.subsets.len()).map(|j| self.activation_set(j).len()).collect();
            if sizes.len() > 1 {
                return Err(Error::AssumptionViolation(format!(
                    "activation sets have sizes {sizes:?}"
                )));
            }
        }
        Ok(())
    }

    /// `integrals[o][j]` ∈ {0, p}.
    pub fn integrals(&self) -> Vec<Vec<f64>> {
        self.types
            .iter()
            .map(|&mask| {
                self.subsets
                    .iter()
                    .map(|s| if s.activated_by_mask(mask) { self.p } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    /// Concentration vector of type `o` for presentation windows of length `t_learn`.
    pub fn concentrations(&self, o: usize, t_learn: f64) -> Vec<f64> {
        let level = (self.p / t_learn).powf(1.0 / self.depth() as f64);
        (0..self.n_features)
            .map(|i| if self.types[o] >> i & 1 == 1 { level } else { 0.0 })
            .collect()
    }

    pub fn depth(&self) -> usize {
        self.subsets.first().map_or(1, |s| s.depth())
    }

    pub fn to_repetitive(&self, presentations: usize, t_learn: f64) -> RepetitiveDataset {
        RepetitiveDataset {
            types: (0..self.types.len()).map(|o| self.concentrations(o, t_learn)).collect(),
            labels: self.labels.clone(),
            counts: vec![presentations; self.types.len()],
            n_classes: self.n_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub holds: bool,
    /// E^k = {j : O^j ⊆ k}.
    pub covers: Vec<Vec<usize>>,
    /// A type of class k not covered by E^k.
    pub witness: Option<(usize, usize)>,
}

pub fn class_decomposition_exists(instance: &BinaryFluxInstance) -> Decomposition {
    let sets: Vec<Vec<usize>> = (0..instance.subsets.len()).map(|j| instance.activation_set(j)).collect();
    let mut covers = Vec::with_capacity(instance.n_classes);
    let mut witness = None;
    for k in 0..instance.n_classes {
        let ek: Vec<usize> = (0..sets.len())
            .filter(|&j| sets[j].iter().all(|&o| instance.labels[o] == k))
            .collect();
        if witness.is_none() {
            witness = (0..instance.types.len())
                .filter(|&o| instance.labels[o] == k)
                .find(|&o| !ek.iter().any(|&j| sets[j].contains(&o)))
                .map(|o| (k, o));
        }
        covers.push(ek);
    }
    Decomposition {
        holds: witness.is_none(),
        covers,
        witness,
    }
}

/// Size of the largest set of bit strings shattered by {1_F : F ⊆ subsets}.
pub fn vc_dimension_bruteforce(subsets: &[FeatureSubset], n_features: usize, cap: usize) -> Result<usize> {
    if subsets.len() > cap {
        return Err(Error::Resource(format!(
            "{} subsets exceed the brute-force cap {cap}",
            subsets.len()
        )));
    }
    if n_features > 20 {
        return Err(Error::Resource(format!("{n_features} features give too many bit strings")));
    }
    if subsets.len() > 64 {
        return Err(Error::Resource("more than 64 subsets".into()));
    }
    // Points only matter through which subsets they activate.
    let patterns: Vec<u64> = (0..1u64 << n_features)
        .map(|o| {
            subsets
                .iter()
                .enumerate()
                .filter(|(_, s)| s.activated_by_mask(o))
                .fold(0u64, |acc, (j, _)| acc | 1 << j)
        })
        .filter(|&p| p != 0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let all = if subsets.len() == 64 { u64::MAX } else { (1u64 << subsets.len()) - 1 };

    fn shattered(set: &[u64], all: u64) -> bool {
        let s = set.len();
        (0..1u32 << s).all(|labeling| {
            let mut forbidden = 0u64;
            for (i, p) in set.iter().enumerate() {
                if labeling >> i & 1 == 0 {
                    forbidden |= p;
                }
            }
            let f = all & !forbidden;
            set.iter()
                .enumerate()
                .all(|(i, p)| labeling >> i & 1 == 0 || p & f != 0)
        })
    }

    fn dfs(patterns: &[u64], start: usize, current: &mut Vec<u64>, best: &mut usize, limit: usize, all: u64) {
        if current.len() > *best {
            *best = current.len();
        }
        if *best >= limit {
            return;
        }
        for i in start..patterns.len() {
            current.push(patterns[i]);
            if shattered(current, all) {
                dfs(patterns, i + 1, current, best, limit, all);
            }
            current.pop();
            if *best >= limit {
                return;
            }
        }
    }

    let mut best = 0;
    dfs(&patterns, 0, &mut Vec::new(), &mut best, subsets.len(), all);
    Ok(best)
}

/// Largest deviation from the reference EWA weights at each recorded round.
///
/// Needs a trace recorded with full gains and a weight stride of 1.
pub fn ewa_deviation(trace: &RunTrace, eta: f64, weight_scale: f64) -> Result<Vec<f64>> {
    let n_cols = trace.classes.len();
    let mut per_round = vec![0.0f64; trace.rounds.len()];
    for c in 0..n_cols {
        let gains: Vec<Vec<f64>> = trace
            .rounds
            .iter()
            .map(|r| {
                r.gains
                    .as_ref()
                    .map(|g| g[c].clone())
                    .ok_or_else(|| Error::UndefinedMeasure("trace has no per-round gains".into()))
            })
            .collect::<Result<_>>()?;
        let n_sub = gains.first().map_or(0, |g| g.len());
        let reference = reference_ewa(&gains, n_sub, eta, weight_scale)?;
        for (m, r) in trace.rounds.iter().enumerate() {
            let w = r
                .weights
                .as_ref()
                .ok_or_else(|| Error::UndefinedMeasure(format!("no weight snapshot at round {m}")))?;
            let dev = w[c]
                .iter()
                .zip(&reference[m + 1])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            per_round[m] = per_round[m].max(dev);
        }
    }
    Ok(per_round)
}

/// Regret of the reference forecaster for each class column, from a trace
/// recorded with full gains.
pub fn class_regrets(trace: &RunTrace, eta: f64) -> Result<Vec<f64>> {
    (0..trace.classes.len())
        .map(|c| {
            let gains: Vec<Vec<f64>> = trace
                .rounds
                .iter()
                .map(|r| {
                    r.gains
                        .as_ref()
                        .map(|g| g[c].clone())
                        .ok_or_else(|| Error::UndefinedMeasure("trace has no per-round gains".into()))
                })
                .collect::<Result<_>>()?;
            let n_sub = gains.first().map_or(0, |g| g.len());
            let played = crate::aggregation::ewa_distributions(
                &gains,
                n_sub,
                crate::aggregation::LearningRate::Fixed(eta),
            )?;
            crate::aggregation::regret(&gains, &played)
        })
        .collect()
}

/// Error term of the oracle inequality at equilibrium renormalization:
/// a1·(b1/b2)·R_bound/M with gains in [0, 2 t_learn s0 / ξ].
pub fn oracle_error(rates: &RateConstants, t_learn: f64, xi: f64, m: usize, n_subsets: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::Domain("no training rounds".into()));
    }
    let b = 2.0 * t_learn * rates.s0 / xi;
    Ok(rates.a1 * rates.weight_scale() * regret_bound(0.0, b, m, n_subsets, false)? / m as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundStatus {
    Pass,
    Fail,
    NotInstantiated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub name: String,
    pub measured: Option<f64>,
    pub bound: Option<f64>,
    pub status: BoundStatus,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
}

impl BoundReport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a `measured ≤ bound` row.
    pub fn check(&mut self, name: &str, measured: f64, bound: f64) -> &mut Self {
        let status = if measured <= bound { BoundStatus::Pass } else { BoundStatus::Fail };
        self.rows.push(BoundRow {
            name: name.to_string(),
            measured: Some(measured),
            bound: Some(bound),
            status,
        });
        self
    }

    pub fn not_instantiated(&mut self, name: &str, measured: Option<f64>) -> &mut Self {
        self.rows.push(BoundRow {
            name: name.to_string(),
            measured,
            bound: None,
            status: BoundStatus::NotInstantiated,
        });
        self
    }

    /// Selection-phase renormalization: max_j |w^j − b1/b2|.
    pub fn selection_renorm(&mut self, measured: f64, rates: &RateConstants, fmax: f64, t_sel: f64, t_renorm: RenormTime) -> &mut Self {
        let bound = renormalization_bound(rates, fmax, t_sel, t_renorm);
        self.check("selection_renormalization", measured, bound)
    }

    /// Output weights vs. reference EWA at every round.
    pub fn ewa_tracking(&mut self, measured: f64, rates: &RateConstants, n_subsets: usize, t_renorm: RenormTime) -> &mut Self {
        let bound = ewa_tracking_bound(rates, n_subsets, t_renorm);
        self.check("ewa_tracking", measured, bound)
    }

    pub fn regret(&mut self, measured: f64, a: f64, b: f64, m: usize, n_experts: usize) -> Result<&mut Self> {
        let bound = regret_bound(a, b, m, n_experts, false)?;
        Ok(self.check("ewa_regret", measured, bound))
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.status != BoundStatus::Fail)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["name", "measured", "bound", "status"])?;
        for r in &self.rows {
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let status = match r.status {
                BoundStatus::Pass => "pass",
                BoundStatus::Fail => "fail",
                BoundStatus::NotInstantiated => "not_instantiated",
            };
            w.write_record([r.name.as_str(), &fmt(r.measured), &fmt(r.bound), status])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// 4 (b1/b2) exp(−b2 t_renorm |J| h0).
pub fn ewa_tracking_bound(rates: &RateConstants, n_subsets: usize, t_renorm: RenormTime) -> f64 {
    match t_renorm {
        RenormTime::Equilibrium => 0.0,
        RenormTime::Finite(t) => {
            4.0 * rates.weight_scale() * (-rates.b2 * t * n_subsets as f64 * rates.h0).exp()
        }
    }
}
