//! Learning and inference phases.
//!
//! Every interval of the learning protocol has an exact solution when inputs
//! are held constant over a presentation window:
//!
//! * forward pass: `x^k` grows linearly at rate `a1 Σ_j w^j Φ^j w^{j→k}`;
//! * EWA network: each `h^{j→k}` grows exponentially, so `ln h` moves by a
//!   constant times the window length;
//! * output-weight renormalization: `w^{j→k}` relaxes toward
//!   `(b1/b2)·h^{j→k}/Σ_j' h^{j'→k}` at rate `b2 Σ_j' h^{j'→k}`;
//! * output decay: `x^k` decays at rate `a2`.
//!
//! Gain-species concentrations are kept as natural logarithms because they
//! grow like `exp(η·Θ(m))` and overflow `f64` over a realistic training run.
//!
//! State is stored per class. No update reads a quantity belonging to another
//! class, which is what makes [`LearnerState::restrict_to_class`] meaningful.

use serde::{Deserialize, Serialize};

use crate::aggregation::{log_sum_exp, softmax_stable};
use crate::error::{Error, Result};
use crate::kinetics::{flux_unchecked, FeatureSubset, RateConstants, RenormTime, Schedule};
use crate::selection::SelectionOutcome;

/// Relaxation exponents above this are treated as fully equilibrated.
const RELAX_CLAMP: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Forward pass, EWA and renormalization every round.
    Full,
    /// EWA every round and a single renormalization after the last round.
    #[default]
    Simplified,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Mode::Full),
            "simplified" => Ok(Mode::Simplified),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Class counts and the per-class EWA rate multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRates {
    pub class_counts: Vec<usize>,
    /// d_k = η M / M^k.
    pub gain: Vec<f64>,
    /// c_k = η M / (M^k (|K| − 1)); zero when there is a single class.
    pub loss: Vec<f64>,
}

impl ClassRates {
    pub fn from_labels(labels: &[usize], n_classes: usize, eta: f64) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::Config("at least one class is required".into()));
        }
        let mut class_counts = vec![0usize; n_classes];
        for &l in labels {
            if l >= n_classes {
                return Err(Error::InputShape(format!(
                    "label {l} out of range for {n_classes} classes"
                )));
            }
            class_counts[l] += 1;
        }
        if let Some(class) = class_counts.iter().position(|&c| c == 0) {
            return Err(Error::Balance { class });
        }
        let m = labels.len() as f64;
        let gain: Vec<f64> = class_counts.iter().map(|&c| eta * m / c as f64).collect();
        let loss = gain
            .iter()
            .map(|d| if n_classes > 1 { d / (n_classes - 1) as f64 } else { 0.0 })
            .collect();
        Ok(Self {
            class_counts,
            gain,
            loss,
        })
    }

    /// M / M^k.
    pub fn imbalance(&self, k: usize) -> f64 {
        let m: usize = self.class_counts.iter().sum();
        m as f64 / self.class_counts[k] as f64
    }

    pub fn n_classes(&self) -> usize {
        self.class_counts.len()
    }
}

/// All species indexed by a single output class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassColumn {
    pub class: usize,
    /// ln h^{j→k}.
    pub log_h: Vec<f64>,
    /// w^{j→k}.
    pub w_out: Vec<f64>,
    /// x^k.
    pub x_out: f64,
    /// Cumulative gain G^{j→k}.
    pub ledger: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub subsets: Vec<FeatureSubset>,
    /// Frozen input weights w^j.
    pub w_j: Vec<f64>,
    pub columns: Vec<ClassColumn>,
    pub rates: ClassRates,
    /// Rounds completed.
    pub m: usize,
}

impl LearnerState {
    pub fn n_subsets(&self) -> usize {
        self.subsets.len()
    }

    pub fn column(&self, class: usize) -> Option<&ClassColumn> {
        self.columns.iter().find(|c| c.class == class)
    }

    /// Drops every column except `class`. Rates for all classes are kept.
    pub fn restrict_to_class(&self, class: usize) -> Result<LearnerState> {
        let col = self
            .column(class)
            .ok_or_else(|| Error::Config(format!("class {class} is not present")))?
            .clone();
        Ok(LearnerState {
            columns: vec![col],
            ..self.clone()
        })
    }

    /// w^j Φ^j for every selected subset.
    pub fn weighted_fluxes(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_width(&self.subsets, x)?;
        Ok(self
            .subsets
            .iter()
            .zip(&self.w_j)
            .map(|(s, w)| w * flux_unchecked(s, x))
            .collect())
    }
}

fn check_width(subsets: &[FeatureSubset], x: &[f64]) -> Result<()> {
    let need = subsets
        .iter()
        .filter_map(|s| s.indices().last())
        .max()
        .map_or(0, |i| i + 1);
    if x.len() < need {
        return Err(Error::InputShape(format!(
            "sample has {} features, subsets need {need}",
            x.len()
        )));
    }
    Ok(())
}

/// Time integral of every flux over a window of length `t_learn`.
pub fn integrated_fluxes(subsets: &[FeatureSubset], x: &[f64], t_learn: f64) -> Result<Vec<f64>> {
    check_width(subsets, x)?;
    Ok(subsets.iter().map(|s| flux_unchecked(s, x) * t_learn).collect())
}

pub fn init_learner(
    selection: &SelectionOutcome,
    labels: &[usize],
    n_classes: usize,
    rates: &RateConstants,
) -> Result<LearnerState> {
    if selection.is_empty() {
        return Err(Error::Config("no subsets were selected".into()));
    }
    let class_rates = ClassRates::from_labels(labels, n_classes, rates.eta)?;
    let n = selection.len();
    let w0 = rates.weight_scale() / n as f64;
    let lh0 = rates.h0.ln();
    let columns = (0..n_classes)
        .map(|class| ClassColumn {
            class,
            log_h: vec![lh0; n],
            w_out: vec![w0; n],
            x_out: 0.0,
            ledger: vec![0.0; n],
        })
        .collect();
    Ok(LearnerState {
        subsets: selection.subsets.clone(),
        w_j: selection.weights.clone(),
        columns,
        rates: class_rates,
        m: 0,
    })
}

/// Output increments `a1 t_learn Σ_j w^j Φ^j w^{j→k}`, one per column.
pub fn forward_pass(state: &LearnerState, x: &[f64], rates: &RateConstants, t_learn: f64) -> Result<Vec<f64>> {
    let xj = state.weighted_fluxes(x)?;
    Ok(forward_from_fluxes(state, &xj, rates.a1 * t_learn))
}

fn forward_from_fluxes(state: &LearnerState, xj: &[f64], scale: f64) -> Vec<f64> {
    state
        .columns
        .iter()
        .map(|c| scale * xj.iter().zip(&c.w_out).map(|(a, w)| a * w).sum::<f64>())
        .collect()
}

/// One EWA interval. Returns the per-round gains g^{j→k}, indexed `[column][j]`.
pub fn ewa_step(
    state: &mut LearnerState,
    x: &[f64],
    true_class: usize,
    rates: &RateConstants,
    t_learn: f64,
) -> Result<Vec<Vec<f64>>> {
    let xj = state.weighted_fluxes(x)?;
    ewa_from_fluxes(state, &xj, true_class, rates, t_learn, false)
}

fn ewa_from_fluxes(
    state: &mut LearnerState,
    xj: &[f64],
    true_class: usize,
    rates: &RateConstants,
    t_learn: f64,
    flip_gain_sign: bool,
) -> Result<Vec<Vec<f64>>> {
    let n_cls = state.rates.n_classes();
    if true_class >= n_cls {
        return Err(Error::InputShape(format!(
            "true class {true_class} out of range for {n_cls} classes"
        )));
    }
    for (j, v) in xj.iter().enumerate() {
        let margin = rates.s0 - v;
        if margin < 0.0 {
            return Err(Error::BoundedFlux {
                subset: state.subsets[j].to_string(),
                margin,
            });
        }
    }
    let d = state.rates.gain[true_class];
    let c = state.rates.loss[true_class];
    let eta = rates.eta;
    let sign = if flip_gain_sign { -1.0 } else { 1.0 };
    let mut gains = Vec::with_capacity(state.columns.len());
    for col in state.columns.iter_mut() {
        let own = col.class == true_class;
        let g: Vec<f64> = xj
            .iter()
            .map(|&v| {
                let inc = if own {
                    d * (sign * v + rates.s0) * t_learn
                } else {
                    c * (rates.s0 - sign * v) * t_learn
                };
                inc / eta
            })
            .collect();
        for ((lh, led), gj) in col.log_h.iter_mut().zip(col.ledger.iter_mut()).zip(&g) {
            *lh += eta * gj;
            *led += gj;
        }
        gains.push(g);
    }
    Ok(gains)
}

/// Exact evolution of output-weight renormalization and output decay.
pub fn renorm_and_decay(state: &mut LearnerState, t_renorm: RenormTime, rates: &RateConstants) -> Result<()> {
    let scale = rates.weight_scale();
    for col in state.columns.iter_mut() {
        let target: Vec<f64> = softmax_stable(&col.log_h)?
            .into_iter()
            .map(|p| scale * p)
            .collect();
        match t_renorm {
            RenormTime::Equilibrium => {
                col.x_out = 0.0;
                col.w_out = target;
            }
            RenormTime::Finite(t) => {
                col.x_out *= (-rates.a2 * t).exp();
                if t == 0.0 {
                    continue;
                }
                // ln(b2 t Σh), evaluated without forming Σh.
                let log_rate = (rates.b2 * t).ln() + log_sum_exp(&col.log_h)?;
                if log_rate > RELAX_CLAMP.ln() {
                    col.w_out = target;
                } else {
                    let factor = (-log_rate.exp()).exp();
                    for (w, wb) in col.w_out.iter_mut().zip(&target) {
                        *w = wb + (*w - wb) * factor;
                    }
                }
            }
        }
    }
    Ok(())
}

/// What to keep in a [`RunTrace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TraceOptions {
    /// Keep every per-round gain g^{j→k}_m.
    pub record_gains: bool,
    /// Keep w^{j→k}(T²_m) every `stride` rounds.
    pub weight_stride: Option<usize>,
    /// Deliberate sign error in the gain reaction, for mutation checks.
    pub flip_gain_sign: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub m: usize,
    pub label: usize,
    /// x^k(T¹_m) per column; full mode only.
    pub x_out: Option<Vec<f64>>,
    pub gain_summary: GainSummary,
    /// g^{j→k}_m indexed `[column][j]`.
    pub gains: Option<Vec<Vec<f64>>>,
    /// w^{j→k}(T²_m) indexed `[column][j]`.
    pub weights: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    /// Class id of each column, in column order.
    pub classes: Vec<usize>,
    pub rounds: Vec<RoundRecord>,
}

impl RunTrace {
    /// Smallest and largest gain seen over the run.
    pub fn gain_range(&self) -> Option<(f64, f64)> {
        self.rounds.iter().fold(None, |acc, r| {
            let (lo, hi) = acc.unwrap_or((f64::INFINITY, f64::NEG_INFINITY));
            Some((lo.min(r.gain_summary.min), hi.max(r.gain_summary.max)))
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["m".to_string(), "label".to_string()];
        let has_x = self.rounds.iter().any(|r| r.x_out.is_some());
        if has_x {
            header.extend(self.classes.iter().map(|k| format!("x{k}")));
        }
        header.extend(["gain_min", "gain_max", "gain_mean"].map(String::from));
        w.write_record(&header)?;
        for r in &self.rounds {
            let mut row = vec![r.m.to_string(), r.label.to_string()];
            if has_x {
                match &r.x_out {
                    Some(x) => row.extend(x.iter().map(|v| v.to_string())),
                    None => row.extend(self.classes.iter().map(|_| String::new())),
                }
            }
            row.push(r.gain_summary.min.to_string());
            row.push(r.gain_summary.max.to_string());
            row.push(r.gain_summary.mean.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn summarize(gains: &[Vec<f64>]) -> GainSummary {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in gains.iter().flatten() {
        min = min.min(*v);
        max = max.max(*v);
        sum += v;
        n += 1;
    }
    GainSummary {
        min,
        max,
        mean: if n == 0 { 0.0 } else { sum / n as f64 },
    }
}

/// Runs the learning phase over `samples` (already-encoded concentrations and labels).
pub fn train(
    state: &mut LearnerState,
    samples: &[(Vec<f64>, usize)],
    mode: Mode,
    rates: &RateConstants,
    schedule: &Schedule,
    opts: TraceOptions,
) -> Result<RunTrace> {
    let mut trace = RunTrace {
        classes: state.columns.iter().map(|c| c.class).collect(),
        rounds: Vec::with_capacity(samples.len()),
    };
    let t_learn = schedule.t_learn;
    for (x, label) in samples {
        let xj = state.weighted_fluxes(x)?;
        let x_out = if mode == Mode::Full {
            let inc = forward_from_fluxes(state, &xj, rates.a1 * t_learn);
            for (col, d) in state.columns.iter_mut().zip(&inc) {
                col.x_out += d;
            }
            Some(state.columns.iter().map(|c| c.x_out).collect())
        } else {
            None
        };
        let gains = ewa_from_fluxes(state, &xj, *label, rates, t_learn, opts.flip_gain_sign)?;
        if mode == Mode::Full {
            renorm_and_decay(state, schedule.t_renorm, rates)?;
        }
        let m = state.m;
        state.m += 1;
        let weights = match opts.weight_stride {
            Some(s) if s > 0 && (m.is_multiple_of(s) || m + 1 == samples.len()) => {
                Some(state.columns.iter().map(|c| c.w_out.clone()).collect())
            }
            _ => None,
        };
        trace.rounds.push(RoundRecord {
            m,
            label: *label,
            x_out,
            gain_summary: summarize(&gains),
            gains: opts.record_gains.then_some(gains),
            weights,
        });
    }
    if mode == Mode::Simplified && !samples.is_empty() {
        renorm_and_decay(state, schedule.t_renorm, rates)?;
    }
    Ok(trace)
}

/// Frozen output weights plus everything needed to score a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub depth: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub subsets: Vec<FeatureSubset>,
    /// b1/b2.
    pub weight_scale: f64,
    pub input_weights: Vec<f64>,
    /// w^{j→k}, subset-major: `output_weights[j][k]`.
    pub output_weights: Vec<Vec<f64>>,
    pub a1: f64,
    pub t_learn: f64,
}

impl TrainedModel {
    pub fn from_state(state: &LearnerState, n_features: usize, rates: &RateConstants, t_learn: f64) -> Result<Self> {
        let depth = state.subsets.first().map_or(0, |s| s.depth());
        let n_classes = state.rates.n_classes();
        if state.columns.len() != n_classes {
            return Err(Error::Config("cannot export a model with missing class columns".into()));
        }
        let output_weights = (0..state.n_subsets())
            .map(|j| state.columns.iter().map(|c| c.w_out[j]).collect())
            .collect();
        Ok(Self {
            depth,
            n_features,
            n_classes,
            subsets: state.subsets.clone(),
            weight_scale: rates.weight_scale(),
            input_weights: state.w_j.clone(),
            output_weights,
            a1: rates.a1,
            t_learn,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.subsets.len();
        if self.input_weights.len() != n || self.output_weights.len() != n {
            return Err(Error::Load(format!(
                "model lists {n} subsets but {} input weights and {} weight rows",
                self.input_weights.len(),
                self.output_weights.len()
            )));
        }
        if self.output_weights.iter().any(|r| r.len() != self.n_classes) {
            return Err(Error::Load("weight row length differs from class count".into()));
        }
        for s in &self.subsets {
            if s.depth() != self.depth {
                return Err(Error::Load(format!("subset {s} does not have depth {}", self.depth)));
            }
            if s.indices().iter().any(|&i| i >= self.n_features) {
                return Err(Error::Load(format!("subset {s} exceeds {} features", self.n_features)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text).map_err(|e| Error::Load(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(Error::InputShape(format!(
                "sample has {} features, model expects {}",
                x.len(),
                self.n_features
            )));
        }
        let mut scores = vec![0.0; self.n_classes];
        for (j, s) in self.subsets.iter().enumerate() {
            let xj = self.input_weights[j] * flux_unchecked(s, x);
            if xj == 0.0 {
                continue;
            }
            for (k, w) in self.output_weights[j].iter().enumerate() {
                scores[k] += xj * w;
            }
        }
        let scale = self.a1 * self.t_learn;
        scores.iter_mut().for_each(|v| *v *= scale);
        Ok(scores)
    }

    pub fn infer(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let scores = self.scores(x)?;
        Ok((argmax(&scores), scores))
    }
}

/// Index of the largest score; ties go to the smallest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in scores.iter().enumerate() {
        if *v > scores[best] {
            best = k;
        }
    }
    best
}

/// Inference from a live learner state, starting from x^k = 0.
pub fn infer(state: &LearnerState, x: &[f64], rates: &RateConstants, t_learn: f64) -> Result<(usize, Vec<f64>)> {
    let scores = forward_pass(state, x, rates, t_learn)?;
    let best = argmax(&scores);
    Ok((state.columns[best].class, scores))
}

/// Reaction and species counts for a network with the given dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSize {
    pub selection: usize,
    pub selection_renorm: usize,
    pub forward: usize,
    pub ewa: usize,
    /// Output-weight renormalization and output decay.
    pub reset: usize,
    pub species: usize,
}

impl NetworkSize {
    /// Reactions of the selection and learning phases.
    pub fn reactions(&self) -> usize {
        self.selection + self.selection_renorm + self.forward + self.ewa
    }
}

pub fn network_size(n_features: usize, n_subsets: usize, n_classes: usize) -> NetworkSize {
    let (i, j, k) = (n_features, n_subsets, n_classes);
    NetworkSize {
        selection: j,
        selection_renorm: 2 * j,
        forward: j * k,
        ewa: 2 * j * k,
        reset: 2 * j * k + k,
        // A, S, inputs, W^j, X^k, H^{j→k}, W^{j→k}
        species: 2 + i + j + k + 2 * j * k,
    }
}

/// Human-readable reaction list, one entry per reaction.
pub fn reaction_catalog(subsets: &[FeatureSubset], n_classes: usize) -> Vec<String> {
    let mut out = Vec::new();
    let reactants = |s: &FeatureSubset| {
        s.indices().iter().map(|i| format!("X{i}")).collect::<Vec<_>>().join(" + ")
    };
    for s in subsets {
        out.push(format!("{r} -> {r} + W{s}", r = reactants(s)));
    }
    for s in subsets {
        out.push(format!("A -> A + W{s}"));
        out.push(format!("A + W{s} -> A"));
    }
    for s in subsets {
        for k in 0..n_classes {
            out.push(format!("{r} + W{s} + W{s}->{k} -> {r} + W{s} + W{s}->{k} + Y{k}", r = reactants(s)));
        }
    }
    for s in subsets {
        for k in 0..n_classes {
            // Gain (2 H) when k is the presented class, loss (H consumed) otherwise.
            out.push(format!("{r} + W{s} + H{s}->{k} -> {r} + W{s} + (2 H{s}->{k} | 0)", r = reactants(s)));
            out.push(format!("S + H{s}->{k} -> S + 2 H{s}->{k}"));
        }
    }
    out
}
