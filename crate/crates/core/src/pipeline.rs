//! End-to-end select / train / infer / sweep runs on a labelled dataset.
//!
//! Presentation indices are global: selection samples use `m = 0..S`, the
//! learning samples continue from `S` and the test samples follow them. This
//! keeps every noise draw distinct within a replicate.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dataio::{encode_sample, load_digits_csv, split, Dataset, EncodingSpec, Split};
use crate::error::{Error, Result};
use crate::learner::{init_learner, train, LearnerState, RunTrace, TraceOptions, TrainedModel};
use crate::selection::{
    n_choose_k, renormalize_selection, run_selection_threshold, run_selection_topk, SelectionOutcome,
    SelectionSample, SigmoidSpec,
};

/// Seeds of one replicate, derived from the base seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicateSeeds {
    pub split: u64,
    pub noise: u64,
}

pub fn replicate_seeds(base: u64, rep: u64) -> ReplicateSeeds {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(rep);
    ReplicateSeeds {
        split: rng.next_u64(),
        noise: rng.next_u64(),
    }
}

/// Encoded samples of one replicate.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub split: Split,
    pub selection: Vec<SelectionSample>,
    pub learn: Vec<(Vec<f64>, usize)>,
    pub test: Vec<(Vec<f64>, usize)>,
    pub n_features: usize,
    pub n_classes: usize,
}

pub fn prepare_replicate(data: &Dataset, cfg: &ExperimentConfig, seeds: ReplicateSeeds) -> Result<Replicate> {
    let sp = split(data.len(), &cfg.split, seeds.split)?;
    let enc = EncodingSpec {
        sigma2: cfg.encoding.sigma2,
        seed: seeds.noise,
    };
    let mut m = 0u64;
    let mut next = |i: usize| {
        let x = encode_sample(&data.features[i], &enc, m);
        m += 1;
        x
    };
    let selection = sp
        .selection
        .iter()
        .map(|&i| SelectionSample::new(next(i), cfg.selection.sample_duration))
        .collect();
    let learn = sp.learn.iter().map(|&i| (next(i), data.labels[i])).collect();
    let test = sp.test.iter().map(|&i| (next(i), data.labels[i])).collect();
    Ok(Replicate {
        split: sp,
        selection,
        learn,
        test,
        n_features: data.feature_dim(),
        n_classes: data.n_classes,
    })
}

fn sigmoid(cfg: &ExperimentConfig, theta: f64) -> Result<SigmoidSpec> {
    SigmoidSpec::new(theta, cfg.selection.rho, cfg.selection.fmax)
}

/// Selection followed by input-weight renormalization.
pub fn select(rep: &Replicate, cfg: &ExperimentConfig, complexity: Option<usize>) -> Result<SelectionOutcome> {
    let raw = match (complexity.or(cfg.selection.complexity), cfg.selection.theta) {
        (Some(k), _) => run_selection_topk(&rep.selection, cfg.depth, k, &sigmoid(cfg, 0.0)?)?,
        (None, Some(theta)) => run_selection_threshold(&rep.selection, cfg.depth, &sigmoid(cfg, theta)?)?,
        (None, None) => {
            let all = n_choose_k(rep.n_features, cfg.depth);
            run_selection_topk(&rep.selection, cfg.depth, all as usize, &sigmoid(cfg, 0.0)?)?
        }
    };
    renormalize_selection(&raw, cfg.schedule.t_renorm, &cfg.rates)
}

pub fn fit(
    rep: &Replicate,
    selection: &SelectionOutcome,
    cfg: &ExperimentConfig,
    opts: TraceOptions,
) -> Result<(LearnerState, RunTrace)> {
    let labels: Vec<usize> = rep.learn.iter().map(|(_, l)| *l).collect();
    let mut state = init_learner(selection, &labels, rep.n_classes, &cfg.rates)?;
    let trace = train(&mut state, &rep.learn, cfg.mode, &cfg.rates, &cfg.schedule, opts)?;
    Ok((state, trace))
}

/// Fraction of samples classified correctly; undefined for an empty slice.
pub fn accuracy(model: &TrainedModel, samples: &[(Vec<f64>, usize)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::UndefinedMeasure("accuracy of an empty test set".into()));
    }
    let mut correct = 0usize;
    for (x, label) in samples {
        if model.infer(x)?.0 == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Test accuracy for each complexity on one replicate.
pub fn replicate_accuracies(data: &Dataset, cfg: &ExperimentConfig, rep_index: u64, grid: &[usize]) -> Result<Vec<f64>> {
    let rep = prepare_replicate(data, cfg, replicate_seeds(cfg.seed, rep_index))?;
    grid.iter()
        .map(|&k| {
            let sel = select(&rep, cfg, Some(k))?;
            let (state, _) = fit(&rep, &sel, cfg, TraceOptions::default())?;
            let model = TrainedModel::from_state(&state, rep.n_features, &cfg.rates, cfg.schedule.t_learn)?;
            accuracy(&model, &rep.test)
        })
        .collect()
}

/// One row of a sweep curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub complexity: usize,
    pub mean: f64,
    pub q05: f64,
    pub q95: f64,
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: Vec<usize>,
    /// `accuracies[r][g]`: replicate `r`, grid point `g`.
    pub accuracies: Vec<Vec<f64>>,
    pub curve: Vec<CurvePoint>,
}

impl SweepResult {
    pub fn peak(&self) -> Option<CurvePoint> {
        self.curve
            .iter()
            .copied()
            .fold(None, |best: Option<CurvePoint>, p| match best {
                Some(b) if b.mean >= p.mean => Some(b),
                _ => Some(p),
            })
    }

    pub fn curve_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["complexity", "mean", "q05", "q95"])?;
        for p in &self.curve {
            w.write_record([
                p.complexity.to_string(),
                p.mean.to_string(),
                p.q05.to_string(),
                p.q95.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("utf-8"))
    }

    pub fn raw_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["complexity", "repetition", "accuracy"])?;
        for (g, k) in self.grid.iter().enumerate() {
            for (r, acc) in self.accuracies.iter().enumerate() {
                w.write_record([k.to_string(), r.to_string(), acc[g].to_string()])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("utf-8"))
    }
}

/// Worker count: `CRN_THREADS` if set and positive, otherwise rayon's default.
pub fn worker_count() -> usize {
    std::env::var("CRN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Accuracy curve over `grid`, replicates run in parallel.
///
/// All grid points of a replicate share its split and noise draws.
pub fn sweep(data: &Dataset, cfg: &ExperimentConfig, grid: &[usize]) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Resource(e.to_string()))?;
    let accuracies: Vec<Vec<f64>> = pool.install(|| {
        (0..cfg.repetitions as u64)
            .into_par_iter()
            .map(|r| replicate_accuracies(data, cfg, r, grid))
            .collect::<Result<Vec<_>>>()
    })?;
    let curve = grid
        .iter()
        .enumerate()
        .map(|(g, &k)| {
            let col: Vec<f64> = accuracies.iter().map(|a| a[g]).collect();
            CurvePoint {
                complexity: k,
                mean: col.iter().sum::<f64>() / col.len() as f64,
                q05: quantile(&col, 0.05),
                q95: quantile(&col, 0.95),
            }
        })
        .collect();
    Ok(SweepResult {
        grid: grid.to_vec(),
        accuracies,
        curve,
    })
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    load_digits_csv(&cfg.dataset)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

/// Writes `selection.json` for replicate 0.
pub fn cmd_select(cfg: &ExperimentConfig) -> Result<SelectionOutcome> {
    let data = load_dataset(cfg)?;
    let rep = prepare_replicate(&data, cfg, replicate_seeds(cfg.seed, 0))?;
    let sel = select(&rep, cfg, None)?;
    write(&cfg.out_dir.join("selection.json"), &serde_json::to_string_pretty(&sel)?)?;
    Ok(sel)
}

/// Trains on replicate 0 and writes `model.json` and `trace.csv`.
///
/// Reuses `selection.json` from the output directory when present.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainedModel> {
    let data = load_dataset(cfg)?;
    let rep = prepare_replicate(&data, cfg, replicate_seeds(cfg.seed, 0))?;
    let sel_path = cfg.out_dir.join("selection.json");
    let sel: SelectionOutcome = if sel_path.exists() {
        serde_json::from_str(&fs::read_to_string(&sel_path)?)
            .map_err(|e| Error::Load(format!("{}: {e}", sel_path.display())))?
    } else {
        select(&rep, cfg, None)?
    };
    let (state, trace) = fit(&rep, &sel, cfg, TraceOptions::default())?;
    let model = TrainedModel::from_state(&state, rep.n_features, &cfg.rates, cfg.schedule.t_learn)?;
    write(&cfg.out_dir.join("model.json"), &model.to_json()?)?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    write(&cfg.out_dir.join("trace.csv"), &String::from_utf8(buf).expect("utf-8"))?;
    Ok(model)
}

/// Scores the test part of replicate 0 with `model.json`; writes `predictions.csv`.
pub fn cmd_infer(cfg: &ExperimentConfig) -> Result<f64> {
    let path = cfg.out_dir.join("model.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
    let model = TrainedModel::from_json(&text)?;
    let data = load_dataset(cfg)?;
    if data.feature_dim() != model.n_features {
        return Err(Error::Load(format!(
            "model expects {} features, dataset has {}",
            model.n_features,
            data.feature_dim()
        )));
    }
    let rep = prepare_replicate(&data, cfg, replicate_seeds(cfg.seed, 0))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["index".to_string(), "label".to_string(), "predicted".to_string()];
    header.extend((0..model.n_classes).map(|k| format!("score{k}")));
    w.write_record(&header)?;
    for (idx, (x, label)) in rep.split.test.iter().zip(&rep.test) {
        let (pred, scores) = model.infer(x)?;
        let mut row = vec![idx.to_string(), label.to_string(), pred.to_string()];
        row.extend(scores.iter().map(|s| s.to_string()));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write(&cfg.out_dir.join("predictions.csv"), &String::from_utf8(bytes).expect("utf-8"))?;
    accuracy(&model, &rep.test)
}

/// Runs the sweep and writes `curve.csv` and `sweep_raw.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let data = load_dataset(cfg)?;
    let grid: Vec<usize> = if cfg.grid.is_empty() {
        (1..=n_choose_k(data.feature_dim(), cfg.depth) as usize).collect()
    } else {
        cfg.grid.clone()
    };
    let res = sweep(&data, cfg, &grid)?;
    write(&cfg.out_dir.join("curve.csv"), &res.curve_csv()?)?;
    write(&cfg.out_dir.join("sweep_raw.csv"), &res.raw_csv()?)?;
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v = [3.0, 1.0, 2.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert!((quantile(&v, 0.05) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn seeds_differ_by_replicate() {
        assert_ne!(replicate_seeds(1, 0), replicate_seeds(1, 1));
        assert_eq!(replicate_seeds(1, 3), replicate_seeds(1, 3));
    }
}
