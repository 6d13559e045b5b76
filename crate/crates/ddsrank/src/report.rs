//! Offline and interleaving reports: fixed-width text tables and CSV.
//!
//! Everything here is a pure function of its inputs, so rerunning an
//! experiment with the same seeds reproduces the files byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write;

use ddsrank_core::interleave::InterleaveReport;
use ddsrank_core::metrics::{gain_pct, Evaluation, Quartiles};
use ddsrank_core::model::Variant;

use crate::config::RunSpec;
use crate::error::Result;
use crate::output::csv_bytes;

/// Test NDCG of one (run, seed).
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub run: RunSpec,
    pub seed: u64,
    pub test: Evaluation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OfflineReport {
    pub k: usize,
    pub n_domains: usize,
    pub records: Vec<RunRecord>,
}

fn baseline_of(domain: usize) -> RunSpec {
    RunSpec {
        variant: Variant::Baseline,
        domain: Some(domain),
    }
}

impl OfflineReport {
    pub fn new(k: usize, n_domains: usize, mut records: Vec<RunRecord>) -> Self {
        records.sort_by_key(|r| (r.run, r.seed));
        Self { k, n_domains, records }
    }

    pub fn runs(&self) -> Vec<RunSpec> {
        let mut runs: Vec<RunSpec> = self.records.iter().map(|r| r.run).collect();
        runs.dedup();
        runs
    }

    /// Per-seed test NDCG of `run` on `domain`, in seed order.
    pub fn values(&self, run: RunSpec, domain: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.run == run)
            .filter_map(|r| r.test.domain(domain))
            .collect()
    }

    pub fn quartiles(&self, run: RunSpec, domain: usize) -> Option<Quartiles> {
        Quartiles::of(&self.values(run, domain))
    }

    /// Median of `run` relative to the median single-domain baseline, in
    /// percent.
    pub fn median_gain(&self, run: RunSpec, domain: usize) -> Option<f64> {
        let value = self.quartiles(run, domain)?.median;
        let reference = self.quartiles(baseline_of(domain), domain)?.median;
        Some(gain_pct(value, reference))
    }

    fn seed_value(&self, run: RunSpec, seed: u64, domain: usize) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.run == run && r.seed == seed)
            .and_then(|r| r.test.domain(domain))
    }

    /// Text table of median test NDCG@k with the gain over the matching
    /// single-domain baseline.
    pub fn table(&self) -> String {
        let seeds: std::collections::BTreeSet<u64> = self.records.iter().map(|r| r.seed).collect();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "NDCG@{} on test, median over {} seed(s) (gain over the single-domain baseline)",
            self.k,
            seeds.len()
        );
        let _ = write!(out, "{:<14}", "model");
        for d in 0..self.n_domains {
            let _ = write!(out, "  {:<18}", format!("domain {d}"));
        }
        out.push('\n');
        for run in self.runs() {
            let _ = write!(out, "{:<14}", run.to_string());
            for d in 0..self.n_domains {
                let cell = match (self.quartiles(run, d), self.median_gain(run, d)) {
                    (Some(q), Some(g)) => format!("{:.4} ({:+.2}%)", q.median, g),
                    (Some(q), None) => format!("{:.4}", q.median),
                    (None, _) => "-".into(),
                };
                let _ = write!(out, "  {cell:<18}");
            }
            out.push('\n');
        }
        out
    }

    /// One row per (run, domain, seed): `variant,domain,seed,ndcg,gain_pct`.
    /// The gain compares with the baseline of that domain trained with the
    /// same seed and is empty when there is none.
    pub fn runs_csv(&self) -> Result<Vec<u8>> {
        let mut rows = Vec::new();
        for r in &self.records {
            for (&d, score) in &r.test.per_domain {
                let gain = self
                    .seed_value(baseline_of(d), r.seed, d)
                    .map(|b| format!("{:.6}", gain_pct(score.ndcg, b)))
                    .unwrap_or_default();
                rows.push(vec![
                    r.run.to_string(),
                    d.to_string(),
                    r.seed.to_string(),
                    format!("{:.12}", score.ndcg),
                    gain,
                ]);
            }
        }
        csv_bytes(&["variant", "domain", "seed", "ndcg", "gain_pct"], rows)
    }

    /// Five-number summary per (run, domain) across seeds.
    pub fn boxplot_csv(&self) -> Result<Vec<u8>> {
        let mut rows = Vec::new();
        for run in self.runs() {
            for d in 0..self.n_domains {
                let values = self.values(run, d);
                if let Some(q) = Quartiles::of(&values) {
                    let mut row = vec![run.to_string(), d.to_string(), values.len().to_string()];
                    row.extend([q.min, q.q1, q.median, q.q3, q.max].map(|v| format!("{v:.12}")));
                    rows.push(row);
                }
            }
        }
        csv_bytes(&["variant", "domain", "n", "min", "q1", "median", "q3", "max"], rows)
    }
}

/// Interleaving outcome of one ranker pair on one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct PairReport {
    pub a: RunSpec,
    pub b: RunSpec,
    pub domain: usize,
    pub report: InterleaveReport,
}

impl PairReport {
    pub fn label(&self) -> String {
        format!("{} vs {} (domain {})", self.a, self.b, self.domain)
    }
}

pub fn interleave_table(pairs: &[PairReport]) -> String {
    let mut out = String::from("Interleaving credit (purchases credited to the drafting ranker)\n");
    let _ = writeln!(
        out,
        "{:<36} {:>9} {:>9} {:>10} {:>10} {:>8}",
        "pair", "credit A", "credit B", "gain", "p-value", "queries"
    );
    for p in pairs {
        let r = &p.report;
        let gain = match r.credit_gain {
            Some(g) => format!("{:+.2}%", 100.0 * g),
            None => "n/a".into(),
        };
        let _ = writeln!(
            out,
            "{:<36} {:>9} {:>9} {:>10} {:>10.4} {:>8}",
            p.label(),
            r.credit_a,
            r.credit_b,
            gain,
            r.p_value,
            r.queries_used
        );
    }
    if pairs.iter().any(|p| p.report.inconclusive()) {
        out.push_str("n/a: no purchases were simulated, the comparison is inconclusive\n");
    }
    out
}

/// `pair,credit_A,credit_B,credit_gain,p_value,n`.
pub fn interleave_csv(pairs: &[PairReport]) -> Result<Vec<u8>> {
    let rows = pairs.iter().map(|p| {
        let r = &p.report;
        vec![
            p.label(),
            r.credit_a.to_string(),
            r.credit_b.to_string(),
            r.credit_gain.map(|g| format!("{g:.12}")).unwrap_or_default(),
            format!("{:.12e}", r.p_value),
            r.queries_used.to_string(),
        ]
    });
    csv_bytes(&["pair", "credit_A", "credit_B", "credit_gain", "p_value", "n"], rows)
}

/// Sessions per domain and split, in the layout of a dataset summary table.
pub fn counts_table(counts: &BTreeMap<usize, [usize; 3]>) -> String {
    let mut out = format!(
        "{:<8} {:>8} {:>8} {:>8} {:>8}\n",
        "domain", "train", "valid", "test", "total"
    );
    let mut totals = [0usize; 3];
    for (d, c) in counts {
        let _ = writeln!(
            out,
            "{:<8} {:>8} {:>8} {:>8} {:>8}",
            d,
            c[0],
            c[1],
            c[2],
            c.iter().sum::<usize>()
        );
        for i in 0..3 {
            totals[i] += c[i];
        }
    }
    let _ = writeln!(
        out,
        "{:<8} {:>8} {:>8} {:>8} {:>8}",
        "all",
        totals[0],
        totals[1],
        totals[2],
        totals.iter().sum::<usize>()
    );
    out
}

/// History rows as CSV.
pub fn history_csv(history: &[ddsrank_core::train::HistoryEntry]) -> Result<Vec<u8>> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.12}")).unwrap_or_default();
    let rows = history.iter().map(|h| {
        vec![
            h.step.to_string(),
            h.epoch.to_string(),
            opt(h.ranking_loss),
            opt(h.domain_loss),
            opt(h.total_loss),
            opt(h.valid_ndcg),
        ]
    });
    csv_bytes(
        &[
            "step",
            "epoch",
            "ranking_loss",
            "domain_loss",
            "total_loss",
            "valid_ndcg",
        ],
        rows,
    )
}
