//! Self-checks run by `crn verify`: closed forms against numeric
//! integration, the renormalization and tracking bounds, EWA regret, the
//! decomposition equivalence and the VC dimension.

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::{crn_gain, ewa_distributions, prescribed_eta, reference_ewa, regret, regret_bound, LearningRate};
use crate::analysis::{
    asymptotic_weights_from_integrals, class_decomposition_exists, ewa_deviation, ewa_tracking_bound,
    is_optimal_family, vc_dimension_bruteforce, BoundReport,
};
use crate::dataio::{synth_binary_flux, ClassMode, SynthSpec, Universe};
use crate::error::{Error, Result};
use crate::kinetics::{integrate_numeric, relax_linear, FeatureSubset, NetworkLayout, Phase, RateConstants, RenormTime, Schedule};
use crate::learner::{argmax, forward_pass, init_learner, renorm_and_decay, train, ewa_step, Mode, TraceOptions};
use crate::selection::{renormalization_bound, renormalize_selection, run_selection_threshold, SelectionSample, SigmoidSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Level {
    Quick,
    Full,
}

impl std::str::FromStr for Level {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Level::Quick),
            "full" => Ok(Level::Full),
            other => Err(Error::Config(format!("unknown verify level {other:?}"))),
        }
    }
}

/// Deliberate defects, used to confirm that the suites can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Faults {
    pub flip_gain_sign: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn suite(name: &str, passed: bool, detail: String) -> SuiteResult {
    SuiteResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// A small random network for the closed-form checks.
#[derive(Debug, Clone)]
pub struct SmallInstance {
    pub rates: RateConstants,
    pub sigmoid: SigmoidSpec,
    pub selection_samples: Vec<SelectionSample>,
    pub depth: usize,
    pub n_classes: usize,
    pub learn: Vec<(Vec<f64>, usize)>,
    pub t_learn: f64,
    pub t_renorm: f64,
    pub t_sel_renorm: f64,
}

/// Weights and fluxes stay small enough that s0 - w·Φ > 0 throughout.
pub fn random_small_instance(rng: &mut impl Rng) -> SmallInstance {
    let n_features = rng.random_range(2..=6);
    let depth = rng.random_range(1..=2usize.min(n_features));
    let n_classes = rng.random_range(2..=3);
    let rates = RateConstants {
        a1: rng.random_range(0.5..2.0),
        a2: rng.random_range(0.5..2.0),
        b1: rng.random_range(0.5..1.0),
        b2: rng.random_range(0.8..1.5),
        eta: rng.random_range(0.005..0.05),
        a0: rng.random_range(0.5..1.5),
        s0: 3.0,
        h0: rng.random_range(0.5..1.5),
    };
    let sample = |rng: &mut dyn rand::RngCore| -> Vec<f64> {
        (0..n_features)
            .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..0.9) })
            .collect()
    };
    let selection_samples = (0..rng.random_range(2..5))
        .map(|_| SelectionSample::new(sample(rng), rng.random_range(0.1..0.5)))
        .collect();
    let mut learn: Vec<(Vec<f64>, usize)> = (0..n_classes).map(|k| (sample(rng), k)).collect();
    for _ in 0..rng.random_range(0..3) {
        let k = rng.random_range(0..n_classes);
        learn.push((sample(rng), k));
    }
    SmallInstance {
        rates,
        sigmoid: SigmoidSpec::new(rng.random_range(0.0..0.1), rng.random_range(0.05..0.5), rng.random_range(0.2..1.0)).expect("valid"),
        selection_samples,
        depth,
        n_classes,
        learn,
        t_learn: rng.random_range(0.3..1.5),
        t_renorm: rng.random_range(0.2..1.0),
        t_sel_renorm: rng.random_range(0.5..3.0),
    }
}

/// Runs the closed-form pipeline and the RK4 oracle side by side.
/// Returns the largest relative deviation seen.
pub fn crosscheck_instance(inst: &SmallInstance, step: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    let mut track = |a: f64, b: f64| {
        let d = (a - b).abs();
        let scale = a.abs().max(b.abs());
        let r = if scale == 0.0 { 0.0 } else { d / scale };
        worst = worst.max(r);
    };
    let rates = &inst.rates;
    let sel = run_selection_threshold(&inst.selection_samples, inst.depth, &inst.sigmoid)?;
    if sel.is_empty() {
        return Ok(0.0);
    }
    let layout_sel = NetworkLayout {
        subsets: sel.subsets.clone(),
        n_classes: inst.n_classes,
        input_weights: vec![0.0; sel.len()],
        sigmoid: inst.sigmoid,
        gain_rates: vec![0.0; inst.n_classes],
        loss_rates: vec![0.0; inst.n_classes],
    };
    let mut w = vec![0.0; sel.len()];
    for s in &inst.selection_samples {
        w = integrate_numeric(Phase::Selection, &layout_sel, &w, &s.concentrations, rates, None, s.duration, step)?;
    }
    for (a, b) in sel.weights.iter().zip(&w) {
        track(*a, *b);
    }
    let renorm = renormalize_selection(&sel, RenormTime::Finite(inst.t_sel_renorm), rates)?;
    let w = integrate_numeric(Phase::SelectionRenorm, &layout_sel, &w, &[], rates, None, inst.t_sel_renorm, step)?;
    for (a, b) in renorm.weights.iter().zip(&w) {
        track(*a, *b);
    }

    let labels: Vec<usize> = inst.learn.iter().map(|(_, l)| *l).collect();
    let mut state = init_learner(&renorm, &labels, inst.n_classes, rates)?;
    let layout = NetworkLayout {
        input_weights: renorm.weights.clone(),
        gain_rates: state.rates.gain.clone(),
        loss_rates: state.rates.loss.clone(),
        ..layout_sel
    };
    let pack = |st: &crate::learner::LearnerState| {
        let mut y = vec![0.0; layout.state_len(Phase::Learn)];
        for (k, c) in st.columns.iter().enumerate() {
            y[k] = c.x_out;
            for j in 0..st.n_subsets() {
                y[layout.h_index(j, k)] = c.log_h[j].exp();
                y[layout.w_index(j, k)] = c.w_out[j];
            }
        }
        y
    };
    let mut y = pack(&state);
    for (x, label) in &inst.learn {
        y = integrate_numeric(Phase::Learn, &layout, &y, x, rates, Some(*label), inst.t_learn, step)?;
        let inc = forward_pass(&state, x, rates, inst.t_learn)?;
        for (c, d) in state.columns.iter_mut().zip(&inc) {
            c.x_out += d;
        }
        ewa_step(&mut state, x, *label, rates, inst.t_learn)?;
        for (a, b) in pack(&state).iter().zip(&y) {
            track(*a, *b);
        }
        y = integrate_numeric(Phase::LearnRenorm, &layout, &y, x, rates, None, inst.t_renorm, step)?;
        renorm_and_decay(&mut state, RenormTime::Finite(inst.t_renorm), rates)?;
        for (a, b) in pack(&state).iter().zip(&y) {
            track(*a, *b);
        }
    }
    Ok(worst)
}

fn kinetics_suite(n: usize, rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut worst = 0.0f64;
    for _ in 0..n {
        worst = worst.max(crosscheck_instance(&random_small_instance(rng), 1e-4)?);
    }
    Ok(suite("closed_form_vs_rk4", worst < 1e-6, format!("{n} instances, max rel err {worst:.3e}")))
}

fn selection_bound_suite(n: usize, rng: &mut ChaCha8Rng, report: &mut BoundReport) -> Result<SuiteResult> {
    let mut ok = true;
    let mut worst_ratio = 0.0f64;
    for _ in 0..n {
        let inst = random_small_instance(rng);
        let sel = run_selection_threshold(&inst.selection_samples, inst.depth, &inst.sigmoid)?;
        if sel.is_empty() {
            continue;
        }
        for t in [1.0, 2.0, 4.0, 8.0] {
            let r = renormalize_selection(&sel, RenormTime::Finite(t), &inst.rates)?;
            let dev = r
                .weights
                .iter()
                .map(|w| (w - inst.rates.weight_scale()).abs())
                .fold(0.0, f64::max);
            let bound = renormalization_bound(&inst.rates, inst.sigmoid.fmax, sel.t_sel, RenormTime::Finite(t));
            ok &= dev <= bound;
            worst_ratio = worst_ratio.max(dev / bound);
            if t == 8.0 && report.rows.is_empty() {
                report.selection_renorm(dev, &inst.rates, inst.sigmoid.fmax, sel.t_sel, RenormTime::Finite(t));
            }
        }
    }
    Ok(suite("selection_renormalization_bound", ok, format!("worst measured/bound {worst_ratio:.3}")))
}

const ROUNDING: f64 = 1e-12;

fn tracking_suite(n: usize, rng: &mut ChaCha8Rng, report: &mut BoundReport) -> Result<SuiteResult> {
    let mut ok = true;
    let mut worst_eq = 0.0f64;
    let mut worst_fin = 0.0f64;
    for i in 0..n {
        let inst = random_small_instance(rng);
        let sel = run_selection_threshold(&inst.selection_samples, inst.depth, &inst.sigmoid)?;
        if sel.is_empty() {
            continue;
        }
        let sel = renormalize_selection(&sel, RenormTime::Equilibrium, &inst.rates)?;
        let labels: Vec<usize> = inst.learn.iter().map(|(_, l)| *l).collect();
        let opts = TraceOptions {
            record_gains: true,
            weight_stride: Some(1),
            flip_gain_sign: false,
        };
        for t in [RenormTime::Finite(0.02), RenormTime::Finite(0.1), RenormTime::Finite(1.0), RenormTime::Finite(4.0), RenormTime::Equilibrium] {
            let mut st = init_learner(&sel, &labels, inst.n_classes, &inst.rates)?;
            let schedule = Schedule {
                t_sel: 1.0,
                t_renorm: t,
                t_learn: inst.t_learn,
            };
            let trace = train(&mut st, &inst.learn, Mode::Full, &inst.rates, &schedule, opts)?;
            let dev = ewa_deviation(&trace, inst.rates.eta, inst.rates.weight_scale())?
                .into_iter()
                .fold(0.0, f64::max);
            match t {
                RenormTime::Equilibrium => {
                    let rel = dev / inst.rates.weight_scale();
                    worst_eq = worst_eq.max(rel);
                    ok &= rel <= ROUNDING;
                }
                RenormTime::Finite(_) => {
                    // Below ~1e-16 the bound is under double rounding.
                    let bound = ewa_tracking_bound(&inst.rates, sel.len(), t) + ROUNDING * inst.rates.weight_scale();
                    ok &= dev <= bound;
                    worst_fin = worst_fin.max(dev / bound);
                    if i == 0 && t == RenormTime::Finite(1.0) {
                        report.ewa_tracking(dev, &inst.rates, sel.len(), t);
                    }
                }
            }
        }
    }
    Ok(suite("ewa_tracking_bound", ok, format!("worst measured/bound {worst_fin:.3}, equilibrium max rel dev {worst_eq:.3e}")))
}

/// Random gain matrix with entries in `[a, b]`.
pub fn random_gain_matrix(rng: &mut impl Rng, m: usize, n: usize, a: f64, b: f64) -> Vec<Vec<f64>> {
    let style = rng.random_range(0..3);
    (0..m)
        .map(|r| {
            (0..n)
                .map(|e| match style {
                    0 => rng.random_range(a..=b),
                    1 => if rng.random_bool(0.5) { a } else { b },
                    _ => if (r + e) % 2 == 0 { b } else { a },
                })
                .collect()
        })
        .collect()
}

fn regret_suite(n: usize, rng: &mut ChaCha8Rng, report: &mut BoundReport) -> Result<SuiteResult> {
    let mut violations = 0usize;
    for i in 0..n {
        let m = rng.random_range(1..=200);
        let e = rng.random_range(2..=20);
        let a = rng.random_range(-5.0..5.0);
        let b = a + rng.random_range(0.1..10.0);
        let gains = random_gain_matrix(rng, m, e, a, b);
        let eta = prescribed_eta(a, b, m, e)?;
        let played = ewa_distributions(&gains, e, LearningRate::Fixed(eta))?;
        let r = regret(&gains, &played)?;
        let bound = regret_bound(a, b, m, e, false)?;
        if r > bound {
            violations += 1;
        }
        if i == 0 {
            report.regret(r, a, b, m, e)?;
        }
    }
    Ok(suite("ewa_regret_bound", violations == 0, format!("{n} matrices, {violations} violations")))
}

/// Trains in full mode and compares the output weights with the reference
/// forecaster fed with independently computed gains.
fn oracle_suite(n: usize, rng: &mut ChaCha8Rng, faults: Faults) -> Result<SuiteResult> {
    let mut worst = 0.0f64;
    for _ in 0..n {
        let inst = random_small_instance(rng);
        let sel = run_selection_threshold(&inst.selection_samples, inst.depth, &inst.sigmoid)?;
        if sel.is_empty() {
            continue;
        }
        let sel = renormalize_selection(&sel, RenormTime::Equilibrium, &inst.rates)?;
        let labels: Vec<usize> = inst.learn.iter().map(|(_, l)| *l).collect();
        let mut st = init_learner(&sel, &labels, inst.n_classes, &inst.rates)?;
        let schedule = Schedule {
            t_sel: 1.0,
            t_renorm: RenormTime::Equilibrium,
            t_learn: inst.t_learn,
        };
        let opts = TraceOptions {
            record_gains: false,
            weight_stride: Some(1),
            flip_gain_sign: faults.flip_gain_sign,
        };
        let rates_table = st.rates.clone();
        let trace = train(&mut st, &inst.learn, Mode::Full, &inst.rates, &schedule, opts)?;
        for k in 0..inst.n_classes {
            let gains: Vec<Vec<f64>> = inst
                .learn
                .iter()
                .map(|(x, label)| {
                    sel.subsets
                        .iter()
                        .zip(&sel.weights)
                        .map(|(s, w)| {
                            let phi = crate::kinetics::flux(s, x).expect("in range") * inst.t_learn;
                            crn_gain(k, *label, *w, phi, inst.rates.s0, inst.t_learn, rates_table.imbalance(*label), inst.n_classes)
                        })
                        .collect()
                })
                .collect();
            let reference = reference_ewa(&gains, sel.len(), inst.rates.eta, inst.rates.weight_scale())?;
            for (m, r) in trace.rounds.iter().enumerate() {
                let w = &r.weights.as_ref().expect("stride 1")[k];
                for (a, b) in w.iter().zip(&reference[m + 1]) {
                    worst = worst.max((a - b).abs() / inst.rates.weight_scale());
                }
            }
        }
    }
    Ok(suite("crn_matches_reference_ewa", worst <= 1e-12, format!("max rel dev {worst:.3e}")))
}

fn decomposition_suite(n: usize, rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut agree = 0usize;
    let mut perfect = true;
    for i in 0..n {
        let inst = random_binary_instance(rng, i % 2 == 0)?;
        let integrals = inst.integrals();
        let q = asymptotic_weights_from_integrals(&integrals, &inst.labels, inst.n_classes, 1.0)?;
        let dec = class_decomposition_exists(&inst).holds;
        let opt = is_optimal_family(&q, &integrals, &inst.labels).optimal;
        if dec == opt {
            agree += 1;
        }
        if dec {
            perfect &= training_accuracy(&q, &integrals, &inst.labels) == 1.0;
        }
    }
    Ok(suite(
        "decomposition_equivalence",
        agree == n && perfect,
        format!("{agree}/{n} agree, limit weights perfect on decomposable: {perfect}"),
    ))
}

/// Draws a random binary-flux instance, decomposable or not. Parameter
/// draws that admit no such instance are replaced by fresh ones.
pub fn random_binary_instance(rng: &mut impl Rng, decomposable: bool) -> Result<crate::analysis::BinaryFluxInstance> {
    let mut last = None;
    for _ in 0..50 {
        let n_features = rng.random_range(3..=6);
        let depth = rng.random_range(1..=2);
        let spec = SynthSpec {
            n_classes: rng.random_range(2..=3),
            universe: Universe::Random {
                n_types: if decomposable { rng.random_range(3..=8) } else { rng.random_range(4..=16) },
            },
            mode: if decomposable { ClassMode::Decomposable } else { ClassMode::Violating },
            p: rng.random_range(0.1..1.0),
        };
        match synth_binary_flux(n_features, depth, &spec, rng.random()) {
            Ok(inst) => return Ok(inst),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Argmax accuracy of the scores Σ_j q^{j→k} ∫_o Φ^j on the types themselves.
pub fn training_accuracy(q: &[Vec<f64>], integrals: &[Vec<f64>], labels: &[usize]) -> f64 {
    let correct = integrals
        .iter()
        .zip(labels)
        .filter(|(row, &l)| {
            let scores: Vec<f64> = q
                .iter()
                .map(|qk| qk.iter().zip(row.iter()).map(|(w, f)| w * f).sum())
                .collect();
            argmax(&scores) == l
        })
        .count();
    correct as f64 / labels.len() as f64
}

/// Random set of `n_subsets` distinct subsets of equal size.
pub fn random_subsets(rng: &mut impl Rng, n_features: usize, depth: usize, n_subsets: usize) -> Vec<FeatureSubset> {
    let mut all: Vec<FeatureSubset> = (0..n_features)
        .combinations(depth)
        .map(|c| FeatureSubset::new(c).expect("distinct"))
        .collect();
    use rand::seq::SliceRandom;
    all.shuffle(rng);
    all.truncate(n_subsets);
    all.sort();
    all
}

fn vc_suite(n: usize, rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut ok = 0usize;
    for _ in 0..n {
        let n_features = rng.random_range(2..=6);
        let depth = rng.random_range(1..=2usize.min(n_features - 1));
        let total = crate::selection::n_choose_k(n_features, depth) as usize;
        let n_sub = rng.random_range(1..=total.min(6));
        let subsets = random_subsets(rng, n_features, depth, n_sub);
        if vc_dimension_bruteforce(&subsets, n_features, 12)? == n_sub {
            ok += 1;
        }
    }
    Ok(suite("vc_dimension", ok == n, format!("{ok}/{n} instances equal |J|")))
}

/// Runs every suite. The bound report collects one representative row per bound.
pub fn run_verify(level: Level, faults: Faults, seed: u64) -> Result<(Vec<SuiteResult>, BoundReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_kin, n_small, n_regret, n_dec, n_vc) = match level {
        Level::Quick => (10, 20, 200, 40, 20),
        Level::Full => (100, 100, 1000, 200, 60),
    };
    let mut report = BoundReport::new();
    let results = vec![
        kinetics_suite(n_kin, &mut rng)?,
        selection_bound_suite(n_small, &mut rng, &mut report)?,
        tracking_suite(n_small, &mut rng, &mut report)?,
        regret_suite(n_regret, &mut rng, &mut report)?,
        oracle_suite(n_small, &mut rng, faults)?,
        decomposition_suite(n_dec, &mut rng)?,
        vc_suite(n_vc, &mut rng)?,
    ];
    report.not_instantiated("limit_weight_convergence", None);
    Ok((results, report))
}

/// Sanity value used by the bound report: relaxation of a zero start.
pub fn relax_from_zero(rates: &RateConstants, t: f64) -> Result<f64> {
    relax_linear(0.0, rates.b1 * rates.a0, rates.b2 * rates.a0, RenormTime::Finite(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suites_pass() {
        let (results, report) = run_verify(Level::Quick, Faults::default(), 7).unwrap();
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
        assert!(report.passed());
    }

    #[test]
    fn flipped_gain_sign_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = oracle_suite(10, &mut rng, Faults { flip_gain_sign: true }).unwrap();
        assert!(!r.passed, "{}", r.detail);
    }
}
