use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::RankingMetrics;
use super::pipeline::{outcome_metrics, Mode, QueryOutcome};
use super::{HarnessError, Result};
use crate::config::Config;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<RankingMetrics>,
    pub mean: RankingMetrics,
    pub std: Option<RankingMetrics>,
    /// Mean over seeds restricted to queries answered by a table.
    pub table_answers: RankingMetrics,
    pub query_count: usize,
    pub config: Config,
}

impl EvalReport {
    /// Aggregates one outcome list per seed.
    pub fn from_runs(method: &str, mode: Mode, config: &Config, runs: &[(u64, Vec<QueryOutcome>)]) -> Self {
        let per_seed: Vec<RankingMetrics> = runs.iter().map(|(_, o)| outcome_metrics(o)).collect();
        let tables: Vec<RankingMetrics> = runs
            .iter()
            .map(|(_, o)| outcome_metrics(o.iter().filter(|q| q.table_answer)))
            .collect();
        let (mean, std) = RankingMetrics::mean_std(&per_seed);
        Self {
            method: method.to_owned(),
            mode,
            seeds: runs.iter().map(|(s, _)| *s).collect(),
            query_count: per_seed.first().map_or(0, |m| m.n),
            mean,
            std,
            table_answers: RankingMetrics::mean_std(&tables).0,
            per_seed,
            config: config.clone(),
        }
    }
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::High => "high",
        Mode::Low => "low",
        Mode::Overall => "overall",
    }
}

/// Aligned text table: one row per report (plus a `±` row when it has
/// several seeds), metrics in percent.
pub fn render_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.method.len() + 2).max().unwrap_or(0).max(8);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$} {:<8} {:>7} {:>7} {:>7} {:>7} {:>7} {:>6}",
        "method", "mode", "Acc", "MRR", "Hit@2", "Hit@3", "Hit@5", "n"
    );
    for r in reports {
        let v = r.mean.values().map(|x| x * 100.0);
        let _ = writeln!(
            out,
            "{:<width$} {:<8} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>6}",
            r.method,
            mode_name(r.mode),
            v[0],
            v[1],
            v[2],
            v[3],
            v[4],
            r.query_count
        );
        if let Some(s) = &r.std {
            let v = s.values().map(|x| x * 100.0);
            let _ = writeln!(
                out,
                "{:<width$} {:<8} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>6}",
                "  ±", "", v[0], v[1], v[2], v[3], v[4], ""
            );
        }
    }
    out
}

pub fn reports_to_json(reports: &[EvalReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

/// Writes `path` (JSON) and the same path with a `.txt` extension (table);
/// returns the text path.
pub fn emit_report(reports: &[EvalReport], path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    let io = |p: &Path, e| HarnessError::Io(p.display().to_string(), e);
    fs::write(path, reports_to_json(reports)).map_err(|e| io(path, e))?;
    let txt = path.with_extension("txt");
    fs::write(&txt, render_table(reports)).map_err(|e| io(&txt, e))?;
    Ok(txt)
}

pub fn load_reports(path: impl AsRef<Path>) -> Result<Vec<EvalReport>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Json(path.display().to_string(), e.to_string()))
}
