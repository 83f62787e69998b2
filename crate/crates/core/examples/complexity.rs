//! Reaction and species counts of a network, with its reaction list.

use crn::learner::{network_size, reaction_catalog};
use crn::FeatureSubset;

fn main() -> crn::Result<()> {
    let subsets = vec![FeatureSubset::new(vec![0, 1])?, FeatureSubset::new(vec![1, 2])?];
    let size = network_size(3, subsets.len(), 2);
    println!("{size:?}");
    println!("selection and learning reactions: {}", size.reactions());
    for r in reaction_catalog(&subsets, 2) {
        println!("  {r}");
    }
    Ok(())
}
