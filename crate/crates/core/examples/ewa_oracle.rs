//! At equilibrium renormalization the output weights are exactly the
//! exponentially weighted average forecaster fed with the network's gains.

use crn::aggregation::reference_ewa;
use crn::learner::{init_learner, train, Mode, TraceOptions};
use crn::selection::SelectionOutcome;
use crn::{FeatureSubset, RateConstants, RenormTime, Schedule};

fn main() -> crn::Result<()> {
    let rates = RateConstants { eta: 0.05, ..Default::default() };
    let sel = SelectionOutcome {
        depth: 1,
        n_features: 3,
        subsets: (0..3).map(FeatureSubset::singleton).collect(),
        weights: vec![rates.weight_scale(); 3],
        implied_theta: None,
        t_sel: 1.0,
    };
    let samples = vec![
        (vec![0.9, 0.1, 0.0], 0),
        (vec![0.1, 0.8, 0.2], 1),
        (vec![0.7, 0.0, 0.3], 0),
        (vec![0.0, 0.9, 0.1], 1),
    ];
    let labels: Vec<usize> = samples.iter().map(|s| s.1).collect();
    let mut state = init_learner(&sel, &labels, 2, &rates)?;
    let schedule = Schedule { t_sel: 1.0, t_renorm: RenormTime::Equilibrium, t_learn: 1.0 };
    let opts = TraceOptions { record_gains: true, weight_stride: Some(1), flip_gain_sign: false };
    let trace = train(&mut state, &samples, Mode::Full, &rates, &schedule, opts)?;

    for c in 0..2 {
        let gains: Vec<Vec<f64>> = trace.rounds.iter().map(|r| r.gains.as_ref().unwrap()[c].clone()).collect();
        let reference = reference_ewa(&gains, 3, rates.eta, rates.weight_scale())?;
        println!("class {c}");
        for (m, r) in trace.rounds.iter().enumerate() {
            println!("  round {m}: network {:.6?}  reference {:.6?}", r.weights.as_ref().unwrap()[c], reference[m + 1]);
        }
    }
    Ok(())
}
