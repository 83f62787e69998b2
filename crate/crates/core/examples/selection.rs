//! Threshold and top-K subset selection on the first digits samples.

use crn::config::bundled_digits_path;
use crn::dataio::{encode_sample, load_digits_csv, EncodingSpec};
use crn::selection::{renormalize_selection, run_selection_threshold, run_selection_topk, SelectionSample, SigmoidSpec};
use crn::{RateConstants, RenormTime};

fn main() -> crn::Result<()> {
    let data = load_digits_csv(bundled_digits_path())?;
    let enc = EncodingSpec::default();
    let samples: Vec<SelectionSample> = (0..40)
        .map(|m| SelectionSample::new(encode_sample(&data.features[m], &enc, m as u64), 1.0))
        .collect();

    let thr = run_selection_threshold(&samples, 1, &SigmoidSpec::new(0.5, 0.01, 1.0)?)?;
    println!("threshold 0.5 keeps {} of 64 pixels", thr.len());

    let top = run_selection_topk(&samples, 2, 20, &SigmoidSpec::new(0.0, 0.01, 1.0)?)?;
    println!("top-20 pixel pairs, implied threshold {:?}", top.implied_theta);
    let renorm = renormalize_selection(&top, RenormTime::Finite(2.0), &RateConstants::default())?;
    for (s, (w0, w)) in top.subsets.iter().zip(top.weights.iter().zip(&renorm.weights)).take(5) {
        println!("  {s:<8} raw {w0:7.3}  after renormalization {w:.4}");
    }
    Ok(())
}
