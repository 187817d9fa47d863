use nrel_core::corpus::load_corpus;
use nrel_core::embed::{hash_embed, load_embeddings, open_embeddings, read_embeddings, EmbedError, EmbeddingKey, EmbeddingStore};
use nrel_core::harness::hash_store;

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn fixture_file_loads_with_its_declared_dim() {
    let store = load_embeddings(fixture("minimal.emb.jsonl"), 4).unwrap();
    assert_eq!(store.dim(), 4);
    assert_eq!(store.len(), 4);
    assert_eq!(store.get(&EmbeddingKey::entity("d0", "e0"), "BERT"), [1.0, 0.0, 0.0, 0.0]);
    assert_eq!(store.get(&EmbeddingKey::query_element("d0", "q0", 0), "SciREX"), [0.0, 1.0, 0.0, 0.0]);
    assert_eq!(store.entailment("d0", "p0", "q0"), Some(0.875));
    assert_eq!(open_embeddings(fixture("minimal.emb.jsonl")).unwrap(), store);
}

#[test]
fn missing_keys_fall_back_to_hashing() {
    let text = "{\"dim\":8}\n{\"id\":\"e:d0/e0\",\"vec\":[1,0,0,0,0,0,0,0]}\n";
    let store = read_embeddings(text.as_bytes(), 8).unwrap();
    assert_eq!(store.get(&EmbeddingKey::entity("d0", "e0"), "BERT")[0], 1.0);
    assert_eq!(store.get(&EmbeddingKey::entity("d0", "e1"), "SciREX"), hash_embed("SciREX", 8));
    assert_eq!(store.lookup_counts(), (1, 1));
}

#[test]
fn dimension_mismatches_are_errors() {
    assert!(matches!(
        load_embeddings(fixture("minimal.emb.jsonl"), 8),
        Err(EmbedError::DimensionMismatch { expected: 8, actual: 4, .. })
    ));
    let short = "{\"dim\":4}\n{\"id\":\"e:d/x\",\"vec\":[1.0,2.0]}\n";
    assert!(matches!(
        read_embeddings(short.as_bytes(), 4),
        Err(EmbedError::DimensionMismatch { expected: 4, actual: 2, .. })
    ));
    let dup = "{\"dim\":1}\n{\"id\":\"e:d/x\",\"vec\":[1.0]}\n{\"id\":\"e:d/x\",\"vec\":[2.0]}\n";
    assert!(matches!(read_embeddings(dup.as_bytes(), 1), Err(EmbedError::DuplicateKey(_))));
    let bad = "{\"dim\":1}\n{\"id\":\"zz:d/x\",\"vec\":[1.0]}\n";
    assert!(matches!(read_embeddings(bad.as_bytes(), 1), Err(EmbedError::BadKey(_))));
}

#[test]
fn keys_print_and_parse_symmetrically() {
    for key in [
        EmbeddingKey::component("d", "p0"),
        EmbeddingKey::entity("d", "t0c1_1"),
        EmbeddingKey::query("d", "q3"),
        EmbeddingKey::query_element("d", "q3", 2),
        EmbeddingKey::entailment("d", "p0", "q3"),
    ] {
        assert_eq!(key.to_string().parse::<EmbeddingKey>().unwrap(), key);
    }
    assert_eq!(EmbeddingKey::entailment("d", "p0", "q3").to_string(), "ent:d/p0@q3");
}

#[test]
fn hash_store_covers_the_corpus_and_round_trips() {
    let corpus = load_corpus(fixture("table_2x2.json")).unwrap();
    let store = hash_store(&corpus, 16);
    let doc = &corpus.documents[0];
    let entities: usize = doc.components.iter().map(|c| c.all_entities().count()).sum();
    let elements: usize = doc.queries.iter().map(|q| q.elements.len()).sum();
    assert_eq!(store.len(), doc.components.len() + entities + doc.queries.len() + elements);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.jsonl");
    store.save(&path).unwrap();
    let back: EmbeddingStore = open_embeddings(&path).unwrap();
    assert_eq!(back, store);
}
