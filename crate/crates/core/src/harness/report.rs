//! Success-rate tables per category, with optional ablation deltas.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use super::{stratified_bootstrap, ResultSet, StatsError};
use crate::tasks;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "md" | "markdown" => Ok(Self::Markdown),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown report format {other:?} (expected md or json)")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct Row {
    category: String,
    tasks: usize,
    episodes: usize,
    success_rate: f64,
    std_err: f64,
    empirical_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    config_digest: &'a str,
    manifest_digest: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_config_digest: Option<&'a str>,
    n_boot: usize,
    rng_seed: u64,
    rows: Vec<Row>,
}

fn category_of(task: &str) -> String {
    tasks::definition(task).map_or_else(|| "other".to_string(), |d| d.category.to_string())
}

/// Task-level outcome strata per category, plus the "total" group.
fn groups(results: &ResultSet) -> Vec<(String, Vec<Vec<f64>>)> {
    let mut by_cat: BTreeMap<(u8, String), Vec<Vec<f64>>> = BTreeMap::new();
    let mut all = Vec::new();
    for (task, records) in results.by_task() {
        let outcomes: Vec<f64> = records.iter().map(|r| if r.success { 1.0 } else { 0.0 }).collect();
        let rank = tasks::definition(task).map_or(u8::MAX, |d| d.category as u8);
        by_cat.entry((rank, category_of(task))).or_default().push(outcomes.clone());
        all.push(outcomes);
    }
    let mut out: Vec<(String, Vec<Vec<f64>>)> = by_cat.into_iter().map(|((_, c), s)| (c, s)).collect();
    out.push(("total".to_string(), all));
    out
}

fn rows(results: &ResultSet, n_boot: usize, rng_seed: u64) -> Result<Vec<Row>, StatsError> {
    groups(results)
        .into_iter()
        .map(|(category, strata)| {
            let stats = stratified_bootstrap(&strata, n_boot, rng_seed)?;
            Ok(Row {
                category,
                tasks: strata.len(),
                episodes: stats.n_records,
                success_rate: stats.success_rate,
                std_err: stats.std_err,
                empirical_mean: stats.empirical_mean,
                delta: None,
            })
        })
        .collect()
}

fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

/// Render a per-category table of success rate and standard error. With a
/// baseline, a delta column gives the success-rate difference per row.
pub fn report(
    results: &ResultSet,
    baseline: Option<&ResultSet>,
    format: ReportFormat,
    n_boot: usize,
    rng_seed: u64,
) -> Result<String, StatsError> {
    let mut table = rows(results, n_boot, rng_seed)?;
    if let Some(base) = baseline {
        let base_rows = rows(base, n_boot, rng_seed)?;
        for row in &mut table {
            row.delta = base_rows
                .iter()
                .find(|b| b.category == row.category)
                .map(|b| row.success_rate - b.success_rate);
        }
    }
    match format {
        ReportFormat::Json => {
            let doc = JsonReport {
                config_digest: &results.config_digest,
                manifest_digest: &results.manifest_digest,
                baseline_config_digest: baseline.map(|b| b.config_digest.as_str()),
                n_boot,
                rng_seed,
                rows: table,
            };
            Ok(serde_json::to_string_pretty(&doc).unwrap() + "\n")
        }
        ReportFormat::Markdown => {
            let with_delta = baseline.is_some();
            let mut out = String::from("| Category | Tasks | Episodes | SR (%) | SE (%) | Mean (%) |");
            if with_delta {
                out.push_str(" Delta SR (pts) |");
            }
            out.push_str("\n|---|---:|---:|---:|---:|---:|");
            if with_delta {
                out.push_str("---:|");
            }
            out.push('\n');
            for r in &table {
                let _ = write!(
                    out,
                    "| {} | {} | {} | {} | {} | {} |",
                    r.category,
                    r.tasks,
                    r.episodes,
                    pct(r.success_rate),
                    pct(r.std_err),
                    pct(r.empirical_mean)
                );
                if with_delta {
                    let d = r.delta.map_or_else(|| "n/a".to_string(), |d| format!("{:+.1}", d * 100.0));
                    let _ = write!(out, " {d} |");
                }
                out.push('\n');
            }
            Ok(out)
        }
    }
}
