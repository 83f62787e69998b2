//! Datasets, noisy concentration encoding, splits and synthetic instances.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::{class_decomposition_exists, BinaryFluxInstance};
use crate::error::{Error, Result};
use crate::kinetics::FeatureSubset;

/// Raw pixel values in the digits file range over `0..=16`.
pub const DIGITS_MAX: f64 = 16.0;
pub const DIGITS_ROWS: usize = 1797;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Feature vectors with entries in [0, 1].
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, |f| f.len())
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }
}

/// Reads a `label,p0,...,p63` CSV and scales pixels to [0, 1].
pub fn load_digits_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_digits(file)
}

pub fn read_digits<R: std::io::Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.is_empty() || &headers[0] != "label" {
        return Err(Error::Parse {
            line: 1,
            message: "expected a header starting with `label`".into(),
        });
    }
    let width = headers.len() - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if rec.len() != width + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", width + 1, rec.len()),
            });
        }
        let label: usize = rec[0].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad label {:?}", &rec[0]),
        })?;
        let mut row = Vec::with_capacity(width);
        for field in rec.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad pixel {field:?}"),
            })?;
            if !(0.0..=DIGITS_MAX).contains(&v) {
                return Err(Error::Range {
                    line,
                    message: format!("pixel {v} outside [0, {DIGITS_MAX}]"),
                });
            }
            row.push(v / DIGITS_MAX);
        }
        features.push(row);
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    Ok(Dataset {
        features,
        labels,
        n_classes,
    })
}

/// Gaussian input noise, x = (y + ξ)_+ with ξ ~ N(0, σ²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub sigma2: f64,
    pub seed: u64,
}

impl Default for EncodingSpec {
    fn default() -> Self {
        Self {
            sigma2: 1e-5,
            seed: 0,
        }
    }
}

impl EncodingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 >= 0.0) {
            return Err(Error::Config(format!("noise variance must be >= 0, got {}", self.sigma2)));
        }
        Ok(())
    }
}

/// Noise draw for presentation `m`, feature `i`. Each `(seed, m, i)` owns
/// its own region of a ChaCha stream, so draws do not depend on order.
pub fn noise(seed: u64, m: u64, i: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(m);
    rng.set_word_pos((i as u128) << 32);
    rng.sample(StandardNormal)
}

pub fn encode_sample(features: &[f64], spec: &EncodingSpec, m: u64) -> Vec<f64> {
    if spec.sigma2 == 0.0 {
        return features.to_vec();
    }
    let sd = spec.sigma2.sqrt();
    features
        .iter()
        .enumerate()
        .map(|(i, y)| (y + sd * noise(spec.seed, m, i)).max(0.0))
        .collect()
}

/// Sizes of the three disjoint parts of a split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub selection_count: usize,
    pub test_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            selection_count: 40,
            test_frac: 0.2,
        }
    }
}

/// Index sets of a split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub selection: Vec<usize>,
    pub learn: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles by `seed`, holds out ⌈N·test_frac⌉ for testing and takes the
/// selection samples from the front of the remaining training part.
pub fn split(n: usize, spec: &SplitSpec, seed: u64) -> Result<Split> {
    if !(0.0..1.0).contains(&spec.test_frac) {
        return Err(Error::Config(format!("test fraction {} not in [0, 1)", spec.test_frac)));
    }
    let n_test = (n as f64 * spec.test_frac).ceil() as usize;
    if n_test + spec.selection_count > n {
        return Err(Error::Config(format!(
            "{} test and {} selection samples exceed {n} samples",
            n_test, spec.selection_count
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx[n - n_test..].to_vec();
    let selection = idx[..spec.selection_count].to_vec();
    let learn = idx[spec.selection_count..n - n_test].to_vec();
    Ok(Split {
        selection,
        learn,
        test,
    })
}

/// How sample types of a synthetic instance are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Universe {
    /// Up to `n_types` distinct random nonzero bit strings.
    Random { n_types: usize },
    /// The |I| unit vectors.
    UnitVectors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassMode {
    /// Classes are unions of activation sets.
    Decomposable,
    /// At least one type is not covered by subsets living inside its class.
    Violating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub universe: Universe,
    pub mode: ClassMode,
    pub p: f64,
}

const MAX_ATTEMPTS: usize = 2000;

/// Generates a binary-flux instance whose activation sets all share one size.
pub fn synth_binary_flux(n_features: usize, depth: usize, spec: &SynthSpec, seed: u64) -> Result<BinaryFluxInstance> {
    if depth == 0 || depth > n_features || n_features > 12 {
        return Err(Error::Config(format!(
            "need 1 <= depth <= features <= 12, got depth {depth}, {n_features} features"
        )));
    }
    if spec.n_classes < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        if let Some(inst) = attempt(n_features, depth, spec, &mut rng) {
            return Ok(inst);
        }
    }
    Err(Error::Generation(format!(
        "no instance found after {MAX_ATTEMPTS} attempts for {spec:?}"
    )))
}

fn attempt(n_features: usize, depth: usize, spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Option<BinaryFluxInstance> {
    let mut types: Vec<u64> = match spec.universe {
        Universe::UnitVectors => (0..n_features).map(|i| 1u64 << i).collect(),
        Universe::Random { n_types } => {
            let mut set = BTreeSet::new();
            for _ in 0..4 * n_types {
                if set.len() == n_types {
                    break;
                }
                // Sparse masks keep the activation graph from collapsing into one component.
                let mask = (0..n_features).filter(|_| rng.random_bool(0.35)).fold(0u64, |m, i| m | 1 << i);
                if mask != 0 {
                    set.insert(mask);
                }
            }
            let mut v: Vec<u64> = set.into_iter().collect();
            v.shuffle(rng);
            v
        }
    };
    let all: Vec<FeatureSubset> = (0..n_features)
        .combinations(depth)
        .map(|c| FeatureSubset::new(c).expect("distinct"))
        .collect();
    // Group subsets by activation-set size and pick one nonzero size.
    let mut by_size: BTreeMap<usize, Vec<FeatureSubset>> = BTreeMap::new();
    for s in all {
        let z = types.iter().filter(|&&o| s.activated_by_mask(o)).count();
        if z > 0 {
            by_size.entry(z).or_default().push(s);
        }
    }
    let sizes: Vec<usize> = by_size.keys().copied().collect();
    // Small activation sets leave more components to distribute over classes.
    let pick = if spec.mode == ClassMode::Decomposable && rng.random_bool(0.5) {
        0
    } else {
        rng.random_range(0..sizes.len().max(1))
    };
    let z = *sizes.get(pick)?;
    let subsets = by_size.remove(&z)?;
    if spec.mode == ClassMode::Decomposable {
        types.retain(|&o| subsets.iter().any(|s| s.activated_by_mask(o)));
    }
    if types.len() < spec.n_classes {
        return None;
    }
    let labels = match spec.mode {
        ClassMode::Decomposable => component_labels(&types, &subsets, spec.n_classes, rng)?,
        ClassMode::Violating => {
            let mut labels: Vec<usize> = (0..types.len()).map(|o| o % spec.n_classes).collect();
            labels.shuffle(rng);
            labels
        }
    };
    let inst = BinaryFluxInstance {
        n_features,
        subsets,
        types,
        labels,
        n_classes: spec.n_classes,
        p: spec.p,
        equal_cardinality: true,
    };
    let holds = class_decomposition_exists(&inst).holds;
    let wanted = spec.mode == ClassMode::Decomposable;
    (holds == wanted).then_some(inst)
}

/// Assigns whole connected components of the "shares an activating subset"
/// graph to classes, every class getting at least one component.
fn component_labels(types: &[u64], subsets: &[FeatureSubset], n_classes: usize, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    let n = types.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for s in subsets {
        let members: Vec<usize> = (0..n).filter(|&o| s.activated_by_mask(types[o])).collect();
        for w in members.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a] = b;
        }
    }
    let roots: BTreeSet<usize> = (0..n).map(|o| find(&mut parent, o)).collect();
    if roots.len() < n_classes {
        return None;
    }
    let mut comps: Vec<usize> = roots.into_iter().collect();
    comps.shuffle(rng);
    let class_of: BTreeMap<usize, usize> = comps
        .iter()
        .enumerate()
        .map(|(i, &r)| (r, if i < n_classes { i } else { rng.random_range(0..n_classes) }))
        .collect();
    Some((0..n).map(|o| class_of[&find(&mut parent, o)]).collect())
}
