//! Trains one replicate of the digits benchmark and scores the held-out part.

use crn::config::ExperimentConfig;
use crn::dataio::load_digits_csv;
use crn::learner::{TraceOptions, TrainedModel};
use crn::pipeline::{accuracy, fit, prepare_replicate, replicate_seeds, select};

fn main() -> crn::Result<()> {
    let cfg = ExperimentConfig::canonical(1);
    let data = load_digits_csv(&cfg.dataset)?;
    let rep = prepare_replicate(&data, &cfg, replicate_seeds(cfg.seed, 0))?;
    let sel = select(&rep, &cfg, Some(37))?;
    let (state, trace) = fit(&rep, &sel, &cfg, TraceOptions::default())?;
    let model = TrainedModel::from_state(&state, rep.n_features, &cfg.rates, cfg.schedule.t_learn)?;
    println!("{} learning rounds, gain range {:?}", trace.rounds.len(), trace.gain_range());
    println!("test accuracy {:.3}", accuracy(&model, &rep.test)?);
    Ok(())
}
