//! `ddsrank` command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddsrank_core::data::{filter_domain, generate_synthetic, split_by_time, Splits};
use ddsrank_core::interleave::{run_interleaving, InterleaveSettings, UserModel};
use ddsrank_core::model::Model;

use crate::config::{ExperimentConfig, RunSpec};
use crate::dataset::write_splits;
use crate::error::{exit, Error, Result};
use crate::experiment::{
    evaluate_run, history_path, load_models, model_path, prepare_data, save_model, train_all, Prepared, RunResult,
};
use crate::output::write_atomic;
use crate::report::{
    counts_table, history_csv, interleave_csv, interleave_table, OfflineReport, PairReport, RunRecord,
};

#[derive(Debug, Parser)]
#[command(name = "ddsrank", version, about = "Multi-domain learning-to-rank experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic train/valid/test files to OUT/data.
    Generate(Common),
    /// Train every configured run and seed; save models and histories.
    Train(Common),
    /// Evaluate saved models on the test split.
    Evaluate(Common),
    /// Interleave saved models against each other.
    Interleave(Common),
    /// Train, select and evaluate every run and seed; report medians and quartiles.
    Protocol(Common),
}

/// Flags shared by every command; each overrides the config key of the same name.
#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long = "seed", value_name = "INT", num_args = 1..)]
    pub seeds: Vec<u64>,
    #[arg(long = "variant", value_name = "NAME", num_args = 1..)]
    pub variants: Vec<String>,
    #[arg(long)]
    pub k: Option<usize>,
}

impl Common {
    pub fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if !self.variants.is_empty() {
            cfg.variants = self.variants.clone();
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn reports_dir(out: &Path) -> PathBuf {
    out.join("reports")
}

fn split_counts(splits: &Splits) -> BTreeMap<usize, [usize; 3]> {
    let mut counts: BTreeMap<usize, [usize; 3]> = BTreeMap::new();
    for (i, part) in [&splits.train, &splits.valid, &splits.test].into_iter().enumerate() {
        for s in part {
            counts.entry(s.domain).or_default()[i] += 1;
        }
    }
    counts
}

/// Writes the synthetic splits to `OUT/data` and returns the count table.
pub fn generate(cfg: &ExperimentConfig) -> Result<String> {
    let data = generate_synthetic(&cfg.data.synthetic)?;
    let splits = split_by_time(data.sessions, data.train_end, data.valid_end)?;
    write_splits(&cfg.out_dir.join("data"), &splits)?;
    Ok(counts_table(&split_counts(&splits)))
}

fn save_results(cfg: &ExperimentConfig, results: &[RunResult]) -> Result<()> {
    for r in results {
        save_model(&model_path(&cfg.out_dir, r.run, r.seed), &r.model)?;
        write_atomic(&history_path(&cfg.out_dir, r.run, r.seed), &history_csv(&r.history)?)?;
    }
    Ok(())
}

fn records(results: &[RunResult]) -> Vec<RunRecord> {
    results
        .iter()
        .map(|r| RunRecord {
            run: r.run,
            seed: r.seed,
            test: r.test.clone(),
        })
        .collect()
}

fn write_offline(cfg: &ExperimentConfig, name: &str, report: &OfflineReport) -> Result<()> {
    let dir = reports_dir(&cfg.out_dir);
    write_atomic(&dir.join(format!("{name}.txt")), report.table().as_bytes())?;
    write_atomic(&dir.join(format!("{name}.csv")), &report.runs_csv()?)?;
    write_atomic(&dir.join(format!("{name}_boxplot.csv")), &report.boxplot_csv()?)
}

pub fn train(cfg: &ExperimentConfig) -> Result<Vec<RunResult>> {
    let data = prepare_data(cfg)?;
    let runs = cfg.runs(data.n_domains)?;
    let results = train_all(&data, cfg, &runs)?;
    save_results(cfg, &results)?;
    Ok(results)
}

pub fn evaluate(cfg: &ExperimentConfig) -> Result<OfflineReport> {
    let data = prepare_data(cfg)?;
    let runs = cfg.runs(data.n_domains)?;
    let models = load_models(&cfg.out_dir, &runs, &cfg.seeds)?;
    let mut recs = Vec::new();
    for (run, seed, model) in &models {
        check_shape(model, &data)?;
        recs.push(RunRecord {
            run: *run,
            seed: *seed,
            test: evaluate_run(&data, cfg, *run, model)?,
        });
    }
    let report = OfflineReport::new(cfg.k, data.n_domains, recs);
    write_offline(cfg, "evaluate", &report)?;
    Ok(report)
}

pub fn protocol(cfg: &ExperimentConfig) -> Result<OfflineReport> {
    let results = train(cfg)?;
    let n_domains = prepare_n_domains(cfg, &results);
    let report = OfflineReport::new(cfg.k, n_domains, records(&results));
    write_offline(cfg, "protocol", &report)?;
    Ok(report)
}

fn prepare_n_domains(cfg: &ExperimentConfig, results: &[RunResult]) -> usize {
    results
        .iter()
        .map(|r| r.model.config().n_domains)
        .max()
        .unwrap_or(cfg.model.n_domains)
}

fn check_shape(model: &Model, data: &Prepared) -> Result<()> {
    if model.config().feature_dim != data.feature_dim {
        return Err(Error::Core(ddsrank_core::Error::Data(format!(
            "model expects {} features but the data has {}",
            model.config().feature_dim,
            data.feature_dim
        ))));
    }
    Ok(())
}

/// Resolves a pair member to a run for `domain`: `baseline` means that
/// domain's baseline.
fn resolve(name: &str, domain: usize, n_domains: usize) -> Result<RunSpec> {
    let runs = RunSpec::expand(name, n_domains)?;
    runs.iter()
        .copied()
        .find(|r| r.domain.is_none_or(|d| d == domain))
        .ok_or_else(|| Error::Config(format!("{name} is not trained on domain {domain}")))
}

pub fn interleave(cfg: &ExperimentConfig) -> Result<Vec<PairReport>> {
    let data = prepare_data(cfg)?;
    let seed = cfg.seeds[0];
    let user = match &cfg.interleave.examination {
        Some(p) => UserModel::new(p.clone())?,
        None => UserModel::log_discount(cfg.k),
    };
    let mut jobs = Vec::new();
    for [a, b] in &cfg.interleave.pairs {
        for domain in 0..data.n_domains {
            jobs.push((
                resolve(a, domain, data.n_domains)?,
                resolve(b, domain, data.n_domains)?,
                domain,
            ));
        }
    }
    let mut needed: Vec<RunSpec> = jobs.iter().flat_map(|j| [j.0, j.1]).collect();
    needed.sort();
    needed.dedup();
    let models: BTreeMap<RunSpec, Model> = load_models(&cfg.out_dir, &needed, &[seed])?
        .into_iter()
        .map(|(run, _, m)| (run, m))
        .collect();
    for m in models.values() {
        check_shape(m, &data)?;
    }
    let mut out = Vec::new();
    for (i, (a, b, domain)) in jobs.into_iter().enumerate() {
        let (ma, mb) = (&models[&a], &models[&b]);
        let sessions = filter_domain(&data.splits.test, domain);
        let settings = InterleaveSettings {
            impressions: cfg.interleave.impressions,
            k: cfg.k,
            seed: cfg.interleave.seed.wrapping_add(i as u64),
            mirror: false,
        };
        let report = run_interleaving(
            &sessions,
            |s| ma.score(s),
            |s| mb.score(s),
            |s| data.relevance(s),
            &user,
            &settings,
        )?;
        out.push(PairReport { a, b, domain, report });
    }
    let dir = reports_dir(&cfg.out_dir);
    write_atomic(&dir.join("interleave.txt"), interleave_table(&out).as_bytes())?;
    write_atomic(&dir.join("interleave.csv"), &interleave_csv(&out)?)?;
    Ok(out)
}

fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Generate(c) => {
            let cfg = c.load()?;
            print!("{}", generate(&cfg)?);
        }
        Command::Train(c) => {
            let cfg = c.load()?;
            for r in train(&cfg)? {
                println!(
                    "{:<12} seed {:<4} best step {:<6} valid NDCG@{} {:.4}",
                    r.run.to_string(),
                    r.seed,
                    r.best_step,
                    cfg.k,
                    r.best_valid_ndcg
                );
            }
        }
        Command::Evaluate(c) => print!("{}", evaluate(&c.load()?)?.table()),
        Command::Interleave(c) => print!("{}", interleave_table(&interleave(&c.load()?)?)),
        Command::Protocol(c) => print!("{}", protocol(&c.load()?)?.table()),
    }
    Ok(())
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
