//! Query-conditioned node features and bag-of-neighbors pooling.

use crate::corpus::{Document, Query};
use crate::embed::{cos, EmbeddingKey, EmbeddingStore};
use crate::graph::EntityGraph;
use crate::retriever::element_embeddings;
use crate::text::lexical_features;

pub fn feature_dim(n: usize) -> usize {
    4 * (n - 1)
}

pub fn entity_embedding(store: &EmbeddingStore, doc_id: &str, ent_id: &str, surface: &str) -> Vec<f64> {
    store.get(&EmbeddingKey::entity(doc_id, ent_id), surface)
}

/// `g(v)` from precomputed inputs: all cosines to the elements first, then
/// one lexical triple per element.
pub fn node_feature(h_v: &[f64], surface: &str, elements: &[String], element_embs: &[Vec<f64>]) -> Vec<f64> {
    let mut g: Vec<f64> = element_embs.iter().map(|he| cos(h_v, he)).collect();
    for e in elements {
        g.extend(lexical_features(surface, e).to_array());
    }
    g
}

/// Node embeddings of every graph node, in node order.
pub fn node_embeddings(g: &EntityGraph, doc: &Document, store: &EmbeddingStore) -> Vec<Vec<f64>> {
    g.nodes()
        .iter()
        .map(|n| entity_embedding(store, &doc.doc_id, &n.ent_id, &n.surface))
        .collect()
}

/// `g(v)` for every node of `g`.
pub fn init_node_features(g: &EntityGraph, doc: &Document, q: &Query, store: &EmbeddingStore) -> Vec<Vec<f64>> {
    let elems = element_embeddings(store, &doc.doc_id, q);
    node_embeddings(g, doc, store)
        .iter()
        .zip(g.nodes())
        .map(|(h, n)| node_feature(h, &n.surface, &q.elements, &elems))
        .collect()
}

/// Elementwise maximum over each node's neighbors; zeros for isolated nodes.
pub fn bon_pool(g: &EntityGraph, feats: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..g.node_count())
        .map(|i| pool(g.neighbors(i).iter().map(|&j| feats[j].as_slice()), feats[i].len()))
        .collect()
}

pub(crate) fn pool<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut out: Option<Vec<f64>> = None;
    for r in rows {
        match &mut out {
            None => out = Some(r.to_vec()),
            Some(o) => o.iter_mut().zip(r).for_each(|(a, &b)| *a = a.max(b)),
        }
    }
    out.unwrap_or_else(|| vec![0.0; dim])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_examples() {
        let a = [0.2, 0.9];
        let b = [0.7, 0.1];
        assert_eq!(pool([&a[..], &b[..]].into_iter(), 2), vec![0.7, 0.9]);
        assert_eq!(pool([&b[..], &a[..]].into_iter(), 2), vec![0.7, 0.9]);
        assert_eq!(pool([&a[..]].into_iter(), 2), a.to_vec());
        assert_eq!(pool(std::iter::empty(), 3), vec![0.0; 3]);
    }

    #[test]
    fn verbatim_element_gives_unit_entries() {
        let elements = vec!["GAT".to_string(), "Cora".to_string()];
        let embs: Vec<Vec<f64>> = elements.iter().map(|e| crate::embed::hash_embed(e, 32)).collect();
        let g = node_feature(&crate::embed::hash_embed("GAT", 32), "GAT", &elements, &embs);
        assert_eq!(g.len(), feature_dim(3));
        assert!((g[0] - 1.0).abs() < 1e-12);
        assert_eq!(&g[2..5], &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn disjoint_node_gives_zero_entries() {
        let elements = vec!["ab".to_string()];
        let embs = vec![vec![1.0, 0.0]];
        let g = node_feature(&[0.0, 1.0], "xyz", &elements, &embs);
        assert_eq!(g, vec![0.0; 4]);
        assert_eq!(feature_dim(5), 16);
    }
}
