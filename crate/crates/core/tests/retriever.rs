use proptest::prelude::*;

use nrel_core::config::Config;
use nrel_core::corpus::{Component, ComponentKind, Corpus, EntityMention, Query};
use nrel_core::embed::EmbeddingStore;
use nrel_core::harness::{high_outcomes, outcome_metrics, split_corpus, synth_generate, SynthConfig};
use nrel_core::retriever::{el_features, es_features, score_components, train_high, RetrieverModel, ViewFlags};

fn paragraph(surfaces: &[String]) -> Component {
    let tokens: Vec<String> = surfaces.iter().flat_map(|s| s.split_whitespace().map(str::to_owned)).collect();
    let mut at = 0;
    let entities = surfaces
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let len = s.split_whitespace().count();
            let m = EntityMention {
                ent_id: format!("e{i}"),
                surface: s.clone(),
                sent_idx: 0,
                span: (at, at + len),
                numeric: false,
            };
            at += len;
            m
        })
        .collect();
    Component {
        comp_id: "p0".into(),
        kind: ComponentKind::Paragraph,
        sentences: vec![tokens],
        entities,
        table: None,
        table_number: None,
    }
}

fn query(elements: &[String]) -> Query {
    Query {
        query_id: "q0".into(),
        elements: elements.to_vec(),
        question_template: None,
        gold_component_id: None,
        gold_entity_id: None,
        answer_type: Default::default(),
    }
}

fn synthetic(noise: f64, n_docs: usize) -> (Corpus, EmbeddingStore) {
    synth_generate(&SynthConfig {
        n_docs,
        noise,
        ..SynthConfig::default()
    })
    .expect("synthetic corpus")
}

proptest! {
    #[test]
    fn feature_dims_follow_enabled_views(n in 2usize..7, cs: bool, es: bool, el: bool) {
        prop_assume!(cs || es || el);
        let v = ViewFlags { use_cs: cs, use_es: es, use_el: el };
        let expected = 2 * usize::from(cs) + (n - 1) * usize::from(es) + 3 * (n - 1) * usize::from(el);
        prop_assert_eq!(v.feature_dim(n), expected);
        let m = RetrieverModel::new(n, 8, v, 4, 0).unwrap();
        prop_assert_eq!(m.scorer.input_dim(), expected);
    }

    #[test]
    fn adding_an_entity_never_lowers_es_or_el(
        surfaces in prop::collection::vec("[a-e]{1,6}( [a-e]{1,4})?", 0..5),
        extra in "[a-e]{1,6}",
        elements in prop::collection::vec("[a-e]{1,6}", 1..4),
    ) {
        let store = EmbeddingStore::new(16);
        let q = query(&elements);
        let before = paragraph(&surfaces);
        let mut grown = surfaces.clone();
        grown.push(extra);
        let after = paragraph(&grown);
        for (a, b) in es_features("d", &before, &q, &store).iter().zip(es_features("d", &after, &q, &store)) {
            prop_assert!(b >= *a);
        }
        for (a, b) in el_features(&before, &q).iter().zip(el_features(&after, &q)) {
            prop_assert!(b >= *a);
        }
    }
}

#[test]
fn ranking_is_invariant_under_increasing_transforms() {
    let (corpus, store) = synthetic(0.3, 4);
    let model = RetrieverModel::from_config(corpus.n, store.dim(), &Config::default()).unwrap();
    for doc in &corpus.documents {
        for q in &doc.queries {
            let ranked = score_components(doc, q, &store, &model);
            let mut transformed: Vec<(usize, f64)> = ranked.iter().map(|s| (s.index, s.score.exp())).collect();
            transformed.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let order: Vec<usize> = ranked.iter().map(|s| s.index).collect();
            let exp_order: Vec<usize> = transformed.iter().map(|t| t.0).collect();
            assert_eq!(order, exp_order);
        }
    }
}

/// Zero-parameter oracle: the summed lexical triples of each component.
fn el_argmax(c: &[Component], q: &Query) -> usize {
    let totals: Vec<f64> = c.iter().map(|c| el_features(c, q).iter().sum()).collect();
    let mut best = 0;
    for (i, t) in totals.iter().enumerate() {
        if *t > totals[best] {
            best = i;
        }
    }
    best
}

#[test]
fn noise_free_corpus_is_solved_by_lexical_argmax() {
    let (corpus, _) = synthetic(0.0, 40);
    let mut checked = 0;
    for doc in &corpus.documents {
        for q in &doc.queries {
            let gold = doc.component_index(q.gold_component_id.as_deref().unwrap()).unwrap();
            assert_eq!(el_argmax(&doc.components, q), gold, "{} {}", doc.doc_id, q.query_id);
            checked += 1;
        }
    }
    assert_eq!(checked, corpus.query_count());
}

#[test]
fn lexical_view_alone_recovers_the_planted_signal() {
    let (corpus, store) = synthetic(0.0, 30);
    let split = split_corpus(&corpus, (0.6, 0.2, 0.2), 1).unwrap();
    let cfg = Config {
        use_cs: false,
        use_es: false,
        ..Config::default()
    };
    let (model, curve) = train_high(&split.train, Some(&split.dev), &store, &cfg).unwrap();
    assert!(curve.epochs[0] < curve.initial);
    let m = outcome_metrics(&high_outcomes(&split.test, &store, &model));
    assert_eq!(m.acc, 1.0, "{m:?}");
}

#[test]
fn first_epoch_lowers_the_training_loss() {
    let (corpus, store) = synthetic(0.3, 20);
    let cfg = Config {
        max_epochs: 1,
        ..Config::default()
    };
    let (_, curve) = train_high(&corpus, None, &store, &cfg).unwrap();
    assert_eq!(curve.epochs.len(), 1);
    assert!(curve.epochs[0] < curve.initial, "{curve:?}");
}

#[test]
fn missing_gold_labels_stop_training() {
    let corpus = nrel_core::corpus::load_corpus(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/missing_gold.json")).unwrap();
    let err = train_high(&corpus, None, &EmbeddingStore::new(16), &Config::default()).unwrap_err();
    assert!(matches!(err, nrel_core::retriever::RetrieverError::MissingGold(ref q) if q == "q0"));
}

#[test]
fn checkpoint_round_trip() {
    let (corpus, store) = synthetic(0.3, 5);
    let cfg = Config {
        max_epochs: 2,
        ..Config::default()
    };
    let (model, _) = train_high(&corpus, None, &store, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    model.save(&path).unwrap();
    assert_eq!(RetrieverModel::load(&path).unwrap(), model);
}
