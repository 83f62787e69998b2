//! Runs the quick self-check suites and prints the bound report.

use crn::verify::{run_verify, Faults, Level};

fn main() -> crn::Result<()> {
    let (results, report) = run_verify(Level::Quick, Faults::default(), 1)?;
    for r in &results {
        println!("{:<34} {:<5} {}", r.name, r.passed, r.detail);
    }
    print!("{}", report.to_csv()?);

    // A sign error in the gain reaction is caught by the reference comparison.
    let (broken, _) = run_verify(Level::Quick, Faults { flip_gain_sign: true }, 1)?;
    let caught: Vec<&str> = broken.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    println!("with flipped gain sign, failing suites: {caught:?}");
    Ok(())
}
