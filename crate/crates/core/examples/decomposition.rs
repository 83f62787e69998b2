//! Limit weight families on binary-flux instances with and without a class
//! decomposition.

use crn::analysis::{asymptotic_weights_from_integrals, class_decomposition_exists, is_optimal_family};
use crn::dataio::{synth_binary_flux, ClassMode, SynthSpec, Universe};

fn main() -> crn::Result<()> {
    for mode in [ClassMode::Decomposable, ClassMode::Violating] {
        let spec = SynthSpec { n_classes: 2, universe: Universe::Random { n_types: 6 }, mode, p: 0.5 };
        let inst = synth_binary_flux(5, 1, &spec, 4)?;
        let integrals = inst.integrals();
        let q = asymptotic_weights_from_integrals(&integrals, &inst.labels, inst.n_classes, 1.0)?;
        let dec = class_decomposition_exists(&inst);
        let opt = is_optimal_family(&q, &integrals, &inst.labels);
        println!("{mode:?}: {} types, {} subsets", inst.types.len(), inst.subsets.len());
        println!("  decomposition holds {} (covers {:?})", dec.holds, dec.covers);
        println!("  limit family optimal {} (witness {:?})", opt.optimal, opt.witness);
    }
    Ok(())
}
