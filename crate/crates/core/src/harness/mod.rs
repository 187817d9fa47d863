//! Evaluation metrics, corpus splits, synthetic data, baselines, end-to-end
//! runs and reports.

mod baselines;
mod metrics;
mod pipeline;
mod report;
mod split;
mod synth;

use thiserror::Error;

pub use baselines::{run_baseline, Baseline};
pub use metrics::{eval_ranking, metrics_from_ranks, rank_of, RankingMetrics};
pub use pipeline::{
    ablation_variants, high_outcomes, low_outcomes, outcome_metrics, run_pipeline, train_models, Mode, Models,
    OverallScope, QueryOutcome,
};
pub use report::{emit_report, load_reports, render_table, reports_to_json, EvalReport};
pub use split::{split_corpus, Split};
pub use synth::{hash_store, synth_generate, SynthConfig};

use crate::config::{Config, ConfigError};
use crate::corpus::{Corpus, CorpusError};
use crate::embed::{EmbedError, EmbeddingStore};
use crate::extractor::ExtractorError;
use crate::graph::GraphConfig;
use crate::retriever::RetrieverError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("split: {0}")]
    Split(String),
    #[error("synthetic config: {0}")]
    Synth(String),
    #[error("{0} rankings for {1} gold labels")]
    LengthMismatch(usize, usize),
    #[error("no trained {0} available")]
    MissingModel(&'static str),
    #[error("unknown baseline `{0}` (expected tfidf, bm25 or ecs)")]
    UnknownBaseline(String),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("{0}: {1}")]
    Json(String, String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Retriever(#[from] RetrieverError),
    #[error(transparent)]
    Extractor(#[from] ExtractorError),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

/// Trains and evaluates `cfg` once per seed on `split.test`.
pub fn evaluate_seeds(
    method: &str,
    split: &Split,
    store: &EmbeddingStore,
    cfg: &Config,
    mode: Mode,
    scope: OverallScope,
    seeds: &[u64],
) -> Result<EvalReport> {
    let gcfg = GraphConfig::from_config(cfg);
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let c = Config { seed, ..cfg.clone() };
        let models = train_models(split, store, &c, mode, scope)?;
        runs.push((seed, run_pipeline(&split.test, store, &models, mode, scope, &gcfg)?));
    }
    Ok(EvalReport::from_runs(method, mode, cfg, &runs))
}

/// Baselines are deterministic, so their report has one pseudo-seed.
pub fn baseline_report(b: Baseline, corpus: &Corpus, store: &EmbeddingStore, cfg: &Config) -> EvalReport {
    EvalReport::from_runs(b.name(), Mode::High, cfg, &[(0, run_baseline(b, corpus, store))])
}

