use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::pipeline::QueryOutcome;
use super::{HarnessError, Result};
use crate::corpus::{Corpus, Document, Query};
use crate::embed::{cos, EmbeddingKey, EmbeddingStore};
use crate::retriever::{element_embeddings, rank_by_score};
use crate::text::{bm25_rank, tfidf_rank, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Tfidf,
    Bm25,
    /// Sum of entity-element cosines over the component.
    Ecs,
}

impl FromStr for Baseline {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tfidf" => Ok(Self::Tfidf),
            "bm25" => Ok(Self::Bm25),
            "ecs" => Ok(Self::Ecs),
            _ => Err(HarnessError::UnknownBaseline(s.to_owned())),
        }
    }
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Self::Tfidf => "TF-IDF",
            Self::Bm25 => "BM25",
            Self::Ecs => "ECS",
        }
    }

    /// One score per component, in document order.
    pub fn scores(self, doc: &Document, q: &Query, store: &EmbeddingStore) -> Vec<f64> {
        match self {
            Self::Tfidf | Self::Bm25 => {
                let comps: Vec<Vec<String>> = doc.components.iter().map(|c| tokenize(&c.text())).collect();
                let query = tokenize(&q.elements.join(" "));
                if self == Self::Tfidf {
                    tfidf_rank(&query, &comps)
                } else {
                    bm25_rank(&query, &comps)
                }
            }
            Self::Ecs => {
                let elems = element_embeddings(store, &doc.doc_id, q);
                doc.components
                    .iter()
                    .map(|c| {
                        c.all_entities()
                            .map(|m| {
                                let h = store.get(&EmbeddingKey::entity(&doc.doc_id, &m.ent_id), &m.surface);
                                elems.iter().map(|e| cos(&h, e)).sum::<f64>()
                            })
                            .sum()
                    })
                    .collect()
            }
        }
    }
}

/// Component rankings of every query with a gold component.
pub fn run_baseline(b: Baseline, corpus: &Corpus, store: &EmbeddingStore) -> Vec<QueryOutcome> {
    let mut out = Vec::new();
    for doc in &corpus.documents {
        for q in &doc.queries {
            let Some(gold) = &q.gold_component_id else {
                continue;
            };
            let scores = b.scores(doc, q, store);
            let mut idx: Vec<usize> = (0..scores.len()).collect();
            rank_by_score(&mut idx, |&i| scores[i]);
            out.push(QueryOutcome::new(
                doc,
                q,
                gold.clone(),
                idx.iter().map(|&i| doc.components[i].comp_id.clone()).collect(),
            ));
        }
    }
    out
}
