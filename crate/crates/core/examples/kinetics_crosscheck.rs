//! Closed-form phase updates against fixed-step RK4 integration of the
//! mass-action rate equations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crn::verify::{crosscheck_instance, random_small_instance};

fn main() -> crn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for step in [1e-2, 1e-3, 1e-4] {
        let mut worst = 0.0f64;
        for _ in 0..10 {
            worst = worst.max(crosscheck_instance(&random_small_instance(&mut rng), step)?);
        }
        println!("RK4 step {step:e}: max relative deviation {worst:.2e}");
    }
    Ok(())
}
