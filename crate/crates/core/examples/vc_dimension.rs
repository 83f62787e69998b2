//! VC dimension of the classifiers spanned by a set of feature subsets.

use crn::analysis::vc_dimension_bruteforce;
use crn::FeatureSubset;

fn main() -> crn::Result<()> {
    let sets: [&[&[usize]]; 3] = [
        &[&[0], &[1], &[2]],
        &[&[0, 1], &[1, 2], &[2, 3], &[0, 3]],
        &[&[0, 1], &[0, 2], &[0, 3], &[1, 2], &[1, 3], &[2, 3]],
    ];
    for s in sets {
        let subsets: Vec<FeatureSubset> = s.iter().map(|v| FeatureSubset::new(v.to_vec())).collect::<crn::Result<_>>()?;
        let d = vc_dimension_bruteforce(&subsets, 4, 12)?;
        println!("{} subsets -> VC dimension {d}", subsets.len());
    }
    Ok(())
}
