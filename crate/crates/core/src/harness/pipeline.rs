use serde::{Deserialize, Serialize};

use super::metrics::{eval_ranking, RankingMetrics};
use super::split::Split;
use super::{HarnessError, Result};
use crate::config::Config;
use crate::corpus::{Corpus, Document, Query};
use crate::embed::EmbeddingStore;
use crate::extractor::{build_doc_graphs, predict_entity, train_low_with_graphs, CandidateScope, DocGraph, ExtractorError, ExtractorModel};
use crate::graph::GraphConfig;
use crate::retriever::{score_components, train_high, RetrieverModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    High,
    Low,
    Overall,
}

/// Candidate set of the overall mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverallScope {
    /// Entities of the retriever's top `k` components.
    Predicted { k: usize },
    WholeDocument,
}

impl Default for OverallScope {
    fn default() -> Self {
        Self::Predicted { k: 1 }
    }
}

/// One evaluated query: the gold id and the ranked ids it was compared with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub doc_id: String,
    pub query_id: String,
    pub gold: String,
    pub ranking: Vec<String>,
    /// Whether the gold component is a table.
    pub table_answer: bool,
}

impl QueryOutcome {
    pub fn new(doc: &Document, q: &Query, gold: String, ranking: Vec<String>) -> Self {
        let table_answer = q
            .gold_component_id
            .as_deref()
            .and_then(|c| doc.component(c))
            .is_some_and(|c| c.is_table());
        Self {
            doc_id: doc.doc_id.clone(),
            query_id: q.query_id.clone(),
            gold,
            ranking,
            table_answer,
        }
    }
}

pub fn outcome_metrics<'a>(outcomes: impl IntoIterator<Item = &'a QueryOutcome>) -> RankingMetrics {
    let (rankings, golds): (Vec<&[String]>, Vec<&str>) =
        outcomes.into_iter().map(|o| (o.ranking.as_slice(), o.gold.as_str())).unzip();
    let rankings: Vec<Vec<&str>> = rankings.iter().map(|r| r.iter().map(String::as_str).collect()).collect();
    eval_ranking(&rankings, &golds).expect("paired by construction")
}

#[derive(Debug, Clone, Default)]
pub struct Models {
    pub retriever: Option<RetrieverModel>,
    pub extractor: Option<ExtractorModel>,
}

pub fn high_outcomes(corpus: &Corpus, store: &EmbeddingStore, retriever: &RetrieverModel) -> Vec<QueryOutcome> {
    let mut out = Vec::new();
    for doc in &corpus.documents {
        for q in &doc.queries {
            if let Some(gold) = &q.gold_component_id {
                let ranking = score_components(doc, q, store, retriever).into_iter().map(|s| s.comp_id).collect();
                out.push(QueryOutcome::new(doc, q, gold.clone(), ranking));
            }
        }
    }
    out
}

/// Entity rankings of every query with a gold entity; an empty candidate
/// set yields an empty ranking, i.e. a miss.
pub fn low_outcomes(
    corpus: &Corpus,
    graphs: &[DocGraph],
    store: &EmbeddingStore,
    extractor: &ExtractorModel,
    scope: CandidateScope,
    retriever: Option<&RetrieverModel>,
) -> Result<Vec<QueryOutcome>> {
    let mut out = Vec::new();
    for (doc, dg) in corpus.documents.iter().zip(graphs) {
        for q in &doc.queries {
            let Some(gold) = &q.gold_entity_id else {
                continue;
            };
            let ranking = match predict_entity(extractor, dg, doc, q, store, scope, retriever) {
                Ok(r) => r.into_iter().map(|e| e.ent_id).collect(),
                Err(ExtractorError::EmptyCandidates(id)) => {
                    log::debug!("query {id}: no candidates left, counted as a miss");
                    Vec::new()
                }
                Err(e) => return Err(e.into()),
            };
            out.push(QueryOutcome::new(doc, q, gold.clone(), ranking));
        }
    }
    Ok(out)
}

pub fn run_pipeline(
    corpus: &Corpus,
    store: &EmbeddingStore,
    models: &Models,
    mode: Mode,
    scope: OverallScope,
    gcfg: &GraphConfig,
) -> Result<Vec<QueryOutcome>> {
    let retriever = || models.retriever.as_ref().ok_or(HarnessError::MissingModel("retriever"));
    let extractor = || models.extractor.as_ref().ok_or(HarnessError::MissingModel("extractor"));
    match mode {
        Mode::High => Ok(high_outcomes(corpus, store, retriever()?)),
        Mode::Low => {
            let graphs = build_doc_graphs(corpus, store, gcfg);
            low_outcomes(corpus, &graphs, store, extractor()?, CandidateScope::GoldComponent, None)
        }
        Mode::Overall => {
            let graphs = build_doc_graphs(corpus, store, gcfg);
            let (cs, r) = match scope {
                OverallScope::Predicted { k } => (CandidateScope::PredictedComponent { k }, Some(retriever()?)),
                OverallScope::WholeDocument => (CandidateScope::WholeDocument, None),
            };
            low_outcomes(corpus, &graphs, store, extractor()?, cs, r)
        }
    }
}

/// Trains whatever `mode` needs on `split.train`, early-stopping on `split.dev`.
pub fn train_models(split: &Split, store: &EmbeddingStore, cfg: &Config, mode: Mode, scope: OverallScope) -> Result<Models> {
    let needs_retriever = mode == Mode::High || (mode == Mode::Overall && scope != OverallScope::WholeDocument);
    let needs_extractor = mode != Mode::High;
    let dev = (!split.dev.documents.is_empty()).then_some(&split.dev);
    let mut models = Models::default();
    if needs_retriever {
        models.retriever = Some(train_high(&split.train, dev, store, cfg)?.0);
    }
    if needs_extractor {
        let gcfg = GraphConfig::from_config(cfg);
        let train_graphs = build_doc_graphs(&split.train, store, &gcfg);
        let dev_graphs = dev.map(|d| build_doc_graphs(d, store, &gcfg));
        let dev_pair = dev.zip(dev_graphs.as_deref());
        models.extractor = Some(train_low_with_graphs(&split.train, &train_graphs, dev_pair, store, cfg)?.0);
    }
    Ok(models)
}

/// Named single-flag ablations of `base` for one stage, full model first.
pub fn ablation_variants(base: &Config, mode: Mode) -> Vec<(String, Config)> {
    let (full, flags): (&str, &[&str]) = match mode {
        Mode::High => ("full-H", &["cs", "es", "el"]),
        _ => ("full-L", &["bon", "gat", "os", "mva"]),
    };
    let mut out = vec![(full.to_owned(), base.clone())];
    for f in flags {
        let mut c = base.clone();
        c.disable(f).expect("known view name");
        out.push((format!("w/o {}", f.to_uppercase()), c));
    }
    out
}
