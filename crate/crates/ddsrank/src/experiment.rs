//! Training runs, the multi-seed protocol and model files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ddsrank_core::data::{
    append_text_features, filter_domain, generate_synthetic, normalize_features, split_by_time, QuerySession, Splits,
    SyntheticWorld,
};
use ddsrank_core::metrics::{evaluate, Evaluation};
use ddsrank_core::model::Model;
use ddsrank_core::train::{train, HistoryEntry};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, RunSpec};
use crate::dataset::read_splits;
use crate::error::{Error, Result};
use crate::output::write_atomic;

/// Environment variable holding the number of parallel training workers.
pub const WORKERS_ENV: &str = "DDSRANK_WORKERS";

/// Splits ready for training, plus what is known about how they were made.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub splits: Splits,
    pub n_domains: usize,
    pub feature_dim: usize,
    /// Purchase probability of every test item by query id, known for
    /// synthetic data only. Computed on raw features, before normalisation.
    pub test_relevance: Option<BTreeMap<String, Vec<f64>>>,
}

impl Prepared {
    /// Per-item purchase probabilities of a test session: the generator's
    /// ground truth when known, else the observed labels clipped to [0, 1].
    pub fn relevance(&self, session: &QuerySession) -> Vec<f64> {
        self.test_relevance
            .as_ref()
            .and_then(|t| t.get(&session.query_id))
            .cloned()
            .unwrap_or_else(|| session.items.iter().map(|i| i.label.clamp(0.0, 1.0)).collect())
    }

    /// Sessions of `split` seen by `run`: one domain for baselines, all
    /// otherwise.
    pub fn for_run(split: &[QuerySession], run: RunSpec) -> Vec<QuerySession> {
        match run.domain {
            Some(d) => filter_domain(split, d),
            None => split.to_vec(),
        }
    }
}

/// Loads or generates the data described by `cfg`, then applies the
/// configured feature preparation.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<Prepared> {
    let (mut splits, n_domains, test_relevance) = match &cfg.data.dir {
        Some(dir) => {
            let splits = read_splits(dir, None)?;
            let n_domains = [&splits.train, &splits.valid, &splits.test]
                .iter()
                .flat_map(|s| s.iter().map(|q| q.domain + 1))
                .max()
                .unwrap_or(0);
            (splits, n_domains, None)
        }
        None => {
            let data = generate_synthetic(&cfg.data.synthetic)?;
            let splits = split_by_time(data.sessions, data.train_end, data.valid_end)?;
            let truth = truth_of(&splits.test, &data.world);
            (splits, cfg.data.synthetic.n_domains, Some(truth))
        }
    };
    if splits.train.is_empty() {
        return Err(Error::Core(ddsrank_core::Error::Data("training split is empty".into())));
    }
    if cfg.data.text_features {
        for part in [&mut splits.train, &mut splits.valid, &mut splits.test] {
            append_text_features(part);
        }
    }
    if cfg.data.normalize {
        let Splits { train, valid, test } = &mut splits;
        normalize_features(train, &mut [valid.as_mut_slice(), test.as_mut_slice()])?;
    }
    let feature_dim = splits.train[0].feature_dim();
    for s in splits.train.iter().chain(&splits.valid).chain(&splits.test) {
        if s.feature_dim() != feature_dim {
            return Err(Error::Core(ddsrank_core::Error::Data(format!(
                "session {} has {} features, expected {feature_dim}",
                s.query_id,
                s.feature_dim()
            ))));
        }
    }
    Ok(Prepared {
        splits,
        n_domains,
        feature_dim,
        test_relevance,
    })
}

fn truth_of(sessions: &[QuerySession], world: &SyntheticWorld) -> BTreeMap<String, Vec<f64>> {
    sessions
        .iter()
        .map(|s| {
            let r = s.items.iter().map(|i| world.relevance(s.domain, &i.features)).collect();
            (s.query_id.clone(), r)
        })
        .collect()
}

/// Outcome of training one run with one seed.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub run: RunSpec,
    pub seed: u64,
    pub model: Model,
    pub best_step: usize,
    pub best_valid_ndcg: f64,
    pub history: Vec<HistoryEntry>,
    pub test: Evaluation,
}

/// Trains `run` with `seed`, keeps the best validation checkpoint and
/// evaluates it on the run's test sessions.
pub fn train_run(data: &Prepared, cfg: &ExperimentConfig, run: RunSpec, seed: u64) -> Result<RunResult> {
    let model = Model::build(cfg.model_config(run, data.feature_dim, data.n_domains), seed)?;
    let train_set = Prepared::for_run(&data.splits.train, run);
    let valid_set = Prepared::for_run(&data.splits.valid, run);
    let out = train(model, &train_set, &valid_set, &cfg.train_config(seed))?;
    let test = evaluate_run(data, cfg, run, &out.best)?;
    Ok(RunResult {
        run,
        seed,
        model: out.best,
        best_step: out.best_step,
        best_valid_ndcg: out.best_valid_ndcg,
        history: out.history,
        test,
    })
}

pub fn evaluate_run(data: &Prepared, cfg: &ExperimentConfig, run: RunSpec, model: &Model) -> Result<Evaluation> {
    Ok(evaluate(model, &Prepared::for_run(&data.splits.test, run), cfg.k)?)
}

/// Runs `f` on a pool sized by [`WORKERS_ENV`] (all cores when unset or 0).
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let workers = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{WORKERS_ENV} must be a non-negative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Trains every (run, seed) pair in parallel. Results come back in run
/// order, then seed order, independent of scheduling.
pub fn train_all(data: &Prepared, cfg: &ExperimentConfig, runs: &[RunSpec]) -> Result<Vec<RunResult>> {
    let jobs: Vec<(RunSpec, u64)> = runs
        .iter()
        .flat_map(|&r| cfg.seeds.iter().map(move |&s| (r, s)))
        .collect();
    with_workers(|| {
        jobs.par_iter()
            .map(|&(run, seed)| train_run(data, cfg, run, seed))
            .collect::<Vec<_>>()
    })?
    .into_iter()
    .collect()
}

pub fn models_dir(out: &Path) -> PathBuf {
    out.join("models")
}

pub fn model_path(out: &Path, run: RunSpec, seed: u64) -> PathBuf {
    models_dir(out).join(format!("{}.model", run.file_stem(seed)))
}

pub fn history_path(out: &Path, run: RunSpec, seed: u64) -> PathBuf {
    out.join("history").join(format!("{}.csv", run.file_stem(seed)))
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    write_atomic(path, &model.save())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    Model::load(&bytes)
        .map_err(|e| match e {
            ddsrank_core::Error::Codec(m) => ddsrank_core::Error::Codec(format!("{}: {m}", path.display())),
            other => other,
        })
        .map_err(Error::from)
}

/// Loads the model of every (run, seed) pair, reporting all missing files
/// at once.
pub fn load_models(out: &Path, runs: &[RunSpec], seeds: &[u64]) -> Result<Vec<(RunSpec, u64, Model)>> {
    let mut missing = Vec::new();
    let mut found = Vec::new();
    for &run in runs {
        for &seed in seeds {
            let path = model_path(out, run, seed);
            if path.is_file() {
                found.push((run, seed, path));
            } else {
                missing.push(path.display().to_string());
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingModels(missing));
    }
    found
        .into_iter()
        .map(|(run, seed, path)| Ok((run, seed, load_model(&path)?)))
        .collect()
}
