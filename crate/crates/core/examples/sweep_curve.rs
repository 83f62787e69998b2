//! Accuracy against the number of selected pixels, averaged over replicates.

use crn::config::ExperimentConfig;
use crn::dataio::load_digits_csv;
use crn::pipeline::sweep;

fn main() -> crn::Result<()> {
    let mut cfg = ExperimentConfig::canonical(1);
    cfg.repetitions = 3;
    let data = load_digits_csv(&cfg.dataset)?;
    let res = sweep(&data, &cfg, &[4, 8, 16, 32, 48, 64])?;
    println!("{:>4} {:>7} {:>7} {:>7}", "K", "mean", "q05", "q95");
    for p in &res.curve {
        println!("{:>4} {:>7.3} {:>7.3} {:>7.3}", p.complexity, p.mean, p.q05, p.q95);
    }
    Ok(())
}
