//! Seeded synthetic corpora of results sections.
//!
//! Each document reports scores of a few methods on a few datasets under a
//! few metrics. Scores live either in tables (caption names the dataset,
//! header row names metrics, first column names methods) or in result
//! paragraphs ("M achieves 81.4 F1 on D ."). Reference paragraphs point at
//! tables and background paragraphs introduce abbreviations. A query is
//! `(method, dataset, metric)` and its answer is the score.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::corpus::{AnswerType, Component, ComponentKind, Corpus, Document, EntityMention, Query, TableCell, TableStructure};
use crate::embed::{build_query_text, hash_embed, EmbeddingKey, EmbeddingStore, DEFAULT_HASH_DIM};
use crate::nn::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub components_per_doc: usize,
    pub table_fraction: f64,
    /// Rough number of entities in a table or result paragraph.
    pub entities_per_component: usize,
    pub n: usize,
    pub seed: u64,
    pub vocab_seed: u64,
    /// Chance that a query gets a near-miss distractor in another component,
    /// and independently one inside its gold component.
    pub noise: f64,
    pub queries_per_doc: usize,
    pub emb_dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_docs: 100,
            components_per_doc: 6,
            table_fraction: 0.34,
            entities_per_component: 12,
            n: 4,
            seed: 7,
            vocab_seed: 7,
            noise: 0.3,
            queries_per_doc: 4,
            emb_dim: DEFAULT_HASH_DIM,
        }
    }
}

impl SynthConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Synth(m.to_owned()));
        if self.n != 4 {
            return bad("the generator emits (method, dataset, metric) queries, so n must be 4");
        }
        if self.n_docs == 0 || self.queries_per_doc == 0 || self.entities_per_component == 0 {
            return bad("counts must be positive");
        }
        if self.components_per_doc < 3 {
            return bad("documents need at least 3 components");
        }
        if !(0.0..=1.0).contains(&self.table_fraction) || !(0.0..=1.0).contains(&self.noise) {
            return bad("table_fraction and noise must lie in [0, 1]");
        }
        if self.emb_dim < 8 {
            return bad("emb_dim must be at least 8");
        }
        Ok(())
    }
}

const METRICS: [&str; 10] = ["F1", "Accuracy", "Precision", "Recall", "BLEU", "AUC", "MAP", "NDCG", "EM", "ROUGE"];
const TASKS: [&str; 6] = [
    "relation extraction",
    "node classification",
    "question answering",
    "entity linking",
    "link prediction",
    "text classification",
];
const VERBS: [&str; 4] = ["achieves", "obtains", "reaches", "scores"];
const FILLERS: [&str; 6] = [
    "This trend is consistent across runs .",
    "Hyperparameters follow the default setting .",
    "We report the average over five runs .",
    "The gap is discussed in the analysis below .",
    "All numbers use the official evaluation script .",
    "Training converges within a few epochs .",
];
const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn pseudo_word(rng: &mut Pcg64, syllables: usize) -> String {
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
    }
    if rng.gen_bool(0.5) {
        w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
    }
    let mut c = w.chars();
    let first = c.next().expect("nonempty").to_ascii_uppercase();
    std::iter::once(first).chain(c).collect()
}

/// Global name pools drawn once per vocabulary seed.
struct Vocab {
    methods: Vec<String>,
    datasets: Vec<String>,
}

impl Vocab {
    fn new(seed: u64) -> Self {
        let mut rng = seeded_rng(seed ^ 0x5eed_0f_7ab1e5);
        let mut seen = HashSet::new();
        let mut draw = |rng: &mut Pcg64, make: &dyn Fn(&mut Pcg64) -> String, k: usize| {
            let mut out = Vec::with_capacity(k);
            while out.len() < k {
                let w = make(rng);
                if seen.insert(w.to_lowercase()) {
                    out.push(w);
                }
            }
            out
        };
        let methods = draw(&mut rng, &|r| pseudo_word(r, 3), 300);
        let datasets = draw(&mut rng, &|r| format!("{}{}", pseudo_word(r, 2), r.gen_range(10..100)), 300);
        Self { methods, datasets }
    }
}

/// A one-edit variant of `s` that differs from every name in `avoid`.
fn near_variant(rng: &mut Pcg64, s: &str, avoid: &HashSet<String>) -> String {
    loop {
        let mut chars: Vec<char> = s.chars().collect();
        let letter = VOWELS[rng.gen_range(0..VOWELS.len())] as char;
        if chars.len() <= 3 {
            chars.push(letter);
        } else {
            let i = rng.gen_range(1..chars.len() - 1);
            if chars[i] == letter {
                continue;
            }
            chars[i] = letter;
        }
        let v: String = chars.into_iter().collect();
        if v != s && !avoid.contains(&v.to_lowercase()) {
            return v;
        }
    }
}

fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

/// Paragraph under construction: sentences plus `(sentence, start, end)` spans.
#[derive(Default)]
struct ParaBuilder {
    sentences: Vec<Vec<String>>,
    spans: Vec<(usize, usize, usize)>,
}

impl ParaBuilder {
    /// Appends a sentence given as `(text, is_entity)` pieces.
    fn push(&mut self, pieces: &[(&str, bool)]) -> Vec<usize> {
        let s = self.sentences.len();
        let mut toks = Vec::new();
        let mut ids = Vec::new();
        for &(text, is_entity) in pieces {
            let t = tokens(text);
            if is_entity {
                ids.push(self.spans.len());
                self.spans.push((s, toks.len(), toks.len() + t.len()));
            }
            toks.extend(t);
        }
        self.sentences.push(toks);
        ids
    }

    fn filler(&mut self, rng: &mut Pcg64) {
        let f = FILLERS[rng.gen_range(0..FILLERS.len())];
        self.push(&[(f, false)]);
    }

    fn result(&mut self, rng: &mut Pcg64, method: &str, score: &str, metric: &str, dataset: &str) -> usize {
        let verb = VERBS[rng.gen_range(0..VERBS.len())];
        self.push(&[(method, true), (verb, false), (score, true), (metric, true), ("on", false), (dataset, true), (".", false)])[1]
    }

    fn mentions(&self, surface: &str) -> bool {
        self.spans.iter().any(|&(s, a, b)| self.sentences[s][a..b].join(" ") == surface)
    }

    fn build(self, comp_id: &str) -> Component {
        let entities = self
            .spans
            .iter()
            .enumerate()
            .map(|(k, &(s, a, b))| EntityMention {
                ent_id: format!("{comp_id}e{k}"),
                surface: self.sentences[s][a..b].join(" "),
                sent_idx: s as i64,
                span: (a, b),
                numeric: false,
            })
            .collect();
        Component {
            comp_id: comp_id.to_owned(),
            kind: ComponentKind::Paragraph,
            sentences: self.sentences,
            entities,
            table: None,
            table_number: None,
        }
    }
}

struct TableBuilder {
    dataset: String,
    methods: Vec<String>,
    metrics: Vec<String>,
    scores: Vec<Vec<String>>,
    number: u32,
}

impl TableBuilder {
    fn build(&self, comp_id: &str) -> Component {
        let mut cells = Vec::new();
        let mut entities = Vec::new();
        let mut add = |row: usize, col: usize, text: &str| {
            let ent_id = format!("{comp_id}c{row}_{col}");
            cells.push(TableCell {
                row,
                col,
                text: text.to_owned(),
                is_row_header: col == 0,
                is_col_header: row == 0,
                entity_id: ent_id.clone(),
            });
            entities.push(EntityMention {
                ent_id,
                surface: text.to_owned(),
                sent_idx: -1,
                span: (0, tokens(text).len()),
                numeric: false,
            });
        };
        add(0, 0, "Method");
        for (j, m) in self.metrics.iter().enumerate() {
            add(0, j + 1, m);
        }
        for (i, method) in self.methods.iter().enumerate() {
            add(i + 1, 0, method);
            for (j, s) in self.scores[i].iter().enumerate() {
                add(i + 1, j + 1, s);
            }
        }
        let caption = tokens(&format!("Results on {} .", self.dataset));
        let caption_entities = vec![EntityMention {
            ent_id: format!("{comp_id}cap0"),
            surface: self.dataset.clone(),
            sent_idx: -1,
            span: (2, 3),
            numeric: false,
        }];
        Component {
            comp_id: comp_id.to_owned(),
            kind: ComponentKind::Table,
            sentences: vec![],
            entities,
            table: Some(TableStructure {
                n_rows: self.methods.len() + 1,
                n_cols: self.metrics.len() + 1,
                cells,
                caption,
                caption_entities,
            }),
            table_number: Some(self.number),
        }
    }
}

enum Slot {
    Table { t: usize, row: usize, col: usize },
    Para { p: usize, entity: usize, method: String, metric: String },
}

struct DocGen {
    rng: Pcg64,
    used_scores: HashSet<String>,
    names: HashSet<String>,
}

impl DocGen {
    fn score(&mut self) -> String {
        loop {
            let s = format!("{:.1}", self.rng.gen_range(30.0..99.9));
            if self.used_scores.insert(s.clone()) {
                return s;
            }
        }
    }

    fn variant(&mut self, s: &str) -> String {
        let v = near_variant(&mut self.rng, s, &self.names);
        self.names.insert(v.to_lowercase());
        v
    }
}

fn generate_doc(cfg: &SynthConfig, vocab: &Vocab, doc_idx: usize, doc_rng: &mut Pcg64) -> Document {
    let mut g = DocGen {
        rng: seeded_rng(doc_rng.gen()),
        used_scores: HashSet::new(),
        names: HashSet::new(),
    };
    let c = cfg.components_per_doc;
    let n_tables = ((c as f64 * cfg.table_fraction).round() as usize).min(c - 2);
    let rest = c - n_tables;
    let n_result = (rest / 2).max(1);
    let n_ref = usize::from(n_tables > 0 && rest - n_result >= 1);
    let n_background = rest - n_result - n_ref;
    let size = cfg.entities_per_component;
    let per_table_methods = (size / 4).clamp(2, 5);
    let per_table_metrics = 2;
    let result_sentences = (size / 4).clamp(2, 6);

    let methods: Vec<String> = vocab
        .methods
        .choose_multiple(&mut g.rng, per_table_methods + 1)
        .cloned()
        .collect();
    let metrics: Vec<String> = METRICS
        .choose_multiple(&mut g.rng, per_table_metrics + 1)
        .map(|s| s.to_string())
        .collect();
    let datasets: Vec<String> = vocab
        .datasets
        .choose_multiple(&mut g.rng, n_tables + n_result)
        .cloned()
        .collect();
    g.names = methods.iter().chain(&metrics).chain(&datasets).map(|s| s.to_lowercase()).collect();

    let mut tables: Vec<TableBuilder> = (0..n_tables)
        .map(|t| {
            let ms: Vec<String> = methods.choose_multiple(&mut g.rng, per_table_methods).cloned().collect();
            let mets: Vec<String> = metrics.choose_multiple(&mut g.rng, per_table_metrics).cloned().collect();
            let scores = (0..ms.len()).map(|_| (0..mets.len()).map(|_| g.score()).collect()).collect();
            TableBuilder {
                dataset: datasets[t].clone(),
                methods: ms,
                metrics: mets,
                scores,
                number: t as u32 + 1,
            }
        })
        .collect();

    // Result paragraphs: scores two sentences apart so no two share a window.
    let mut paras: Vec<ParaBuilder> = Vec::new();
    let mut slots = Vec::new();
    for d in &datasets[n_tables..] {
        let mut pb = ParaBuilder::default();
        pb.push(&[("We further evaluate on", false), (d, true), (".", false)]);
        let mut pairs: Vec<(usize, usize)> = (0..methods.len())
            .flat_map(|i| (0..metrics.len()).map(move |j| (i, j)))
            .collect();
        pairs.shuffle(&mut g.rng);
        for &(i, j) in pairs.iter().take(result_sentences) {
            pb.filler(&mut g.rng);
            let s = g.score();
            let e = pb.result(&mut g.rng, &methods[i], &s, &metrics[j], d);
            slots.push(Slot::Para {
                p: paras.len(),
                entity: e,
                method: methods[i].clone(),
                metric: metrics[j].clone(),
            });
        }
        paras.push(pb);
    }
    let n_result_paras = paras.len();
    if n_ref == 1 {
        let mut pb = ParaBuilder::default();
        for t in &tables {
            let k = t.number.to_string();
            pb.push(&[("Table", false), (&k, false), ("summarizes the results on", false), (&t.dataset, true), (".", false)]);
        }
        pb.push(&[("Bold marks the best score .", false)]);
        paras.push(pb);
    }
    for _ in 0..n_background {
        let mut pb = ParaBuilder::default();
        let task = TASKS[g.rng.gen_range(0..TASKS.len())];
        let words: Vec<String> = (0..g.rng.gen_range(2..4)).map(|_| pseudo_word(&mut g.rng, 2)).collect();
        let long = words.join(" ");
        let abbr: String = words.iter().map(|w| w.chars().next().expect("nonempty")).collect();
        pb.push(&[("Prior work on", false), (task, true), ("relies on", false), (&long, true), ("(", false), (&abbr, true), (")", false), (".", false)]);
        let two: Vec<&String> = methods.choose_multiple(&mut g.rng, 2).collect();
        pb.push(&[("We compare", false), (two[0], true), ("and", false), (two[1], true), ("against", false), (&abbr, true), (".", false)]);
        pb.filler(&mut g.rng);
        paras.push(pb);
    }
    for (t, tb) in tables.iter().enumerate() {
        for row in 0..tb.methods.len() {
            for col in 0..tb.metrics.len() {
                slots.push(Slot::Table { t, row, col });
            }
        }
    }

    // Half the queries target tables when both kinds exist.
    let (mut table_slots, mut para_slots): (Vec<Slot>, Vec<Slot>) =
        slots.into_iter().partition(|s| matches!(s, Slot::Table { .. }));
    table_slots.shuffle(&mut g.rng);
    para_slots.shuffle(&mut g.rng);
    let want = cfg.queries_per_doc.min(table_slots.len() + para_slots.len());
    let mut n_tab = want.div_ceil(2).min(table_slots.len());
    if want - n_tab > para_slots.len() {
        n_tab = want - para_slots.len();
    }
    let chosen: Vec<Slot> = table_slots
        .into_iter()
        .take(n_tab)
        .chain(para_slots.into_iter().take(want - n_tab))
        .collect();

    // Component order: paragraphs and tables interleaved by a shuffle.
    let mut order: Vec<(bool, usize)> = (0..paras.len()).map(|p| (false, p)).chain((0..tables.len()).map(|t| (true, t))).collect();
    order.shuffle(&mut g.rng);
    let comp_id = |is_table: bool, idx: usize| if is_table { format!("t{idx}") } else { format!("p{idx}") };

    struct Planned {
        elements: [String; 3],
        gold_comp: String,
        gold_entity: String,
        target: (bool, usize),
    }
    let mut planned = Vec::new();
    for slot in &chosen {
        match slot {
            Slot::Table { t, row, col } => {
                let tb = &tables[*t];
                planned.push(Planned {
                    elements: [tb.methods[*row].clone(), tb.dataset.clone(), tb.metrics[*col].clone()],
                    gold_comp: comp_id(true, *t),
                    gold_entity: format!("{}c{}_{}", comp_id(true, *t), row + 1, col + 1),
                    target: (true, *t),
                });
            }
            Slot::Para { p, entity, method, metric } => planned.push(Planned {
                elements: [method.clone(), datasets[n_tables + p].clone(), metric.clone()],
                gold_comp: comp_id(false, *p),
                gold_entity: format!("{}e{}", comp_id(false, *p), entity),
                target: (false, *p),
            }),
        }
    }

    // Noise: near misses that change one element and copy the other two.
    for pl in &planned {
        if g.rng.gen_bool(cfg.noise) {
            // The host must not already hold the varied element verbatim.
            let k = g.rng.gen_range(0..3);
            let original = &pl.elements[k];
            let options: Vec<usize> = (0..paras.len())
                .filter(|&p| (false, p) != pl.target && !paras[p].mentions(original))
                .collect();
            if let Some(&p) = options.choose(&mut g.rng) {
                let mut el = pl.elements.clone();
                el[k] = g.variant(original);
                let s = g.score();
                paras[p].filler(&mut g.rng);
                paras[p].result(&mut g.rng, &el[0], &s, &el[2], &el[1]);
            }
        }
        if g.rng.gen_bool(cfg.noise) {
            match pl.target {
                (true, t) => {
                    let v = g.variant(&pl.elements[0]);
                    let row = (0..tables[t].metrics.len()).map(|_| g.score()).collect();
                    tables[t].methods.push(v);
                    tables[t].scores.push(row);
                }
                (false, p) if p < n_result_paras => {
                    let mut el = pl.elements.clone();
                    let k = if g.rng.gen_bool(0.5) { 0 } else { 2 };
                    el[k] = g.variant(&el[k]);
                    let s = g.score();
                    paras[p].filler(&mut g.rng);
                    paras[p].result(&mut g.rng, &el[0], &s, &el[2], &el[1]);
                }
                _ => {}
            }
        }
    }

    let components = order
        .iter()
        .map(|&(is_table, idx)| {
            let id = comp_id(is_table, idx);
            if is_table {
                tables[idx].build(&id)
            } else {
                std::mem::take(&mut paras[idx]).build(&id)
            }
        })
        .collect();
    let queries = planned
        .into_iter()
        .enumerate()
        .map(|(k, pl)| Query {
            query_id: format!("q{k}"),
            elements: pl.elements.to_vec(),
            question_template: None,
            gold_component_id: Some(pl.gold_comp),
            gold_entity_id: Some(pl.gold_entity),
            answer_type: AnswerType::Numeric,
        })
        .collect();
    Document {
        doc_id: format!("syn{doc_idx:04}"),
        components,
        queries,
        coref_clusters: None,
    }
}

/// Hash embeddings for every component, entity, query and query element.
pub fn hash_store(corpus: &Corpus, dim: usize) -> EmbeddingStore {
    let mut store = EmbeddingStore::new(dim);
    let mut put = |k: EmbeddingKey, text: &str| {
        store.insert(k, hash_embed(text, dim)).expect("fresh key with matching dim");
    };
    for d in &corpus.documents {
        for c in &d.components {
            put(EmbeddingKey::component(&d.doc_id, &c.comp_id), &c.text());
            for m in c.all_entities() {
                put(EmbeddingKey::entity(&d.doc_id, &m.ent_id), &m.surface);
            }
        }
        for q in &d.queries {
            let text = build_query_text(q).unwrap_or_else(|_| q.elements.join(" "));
            put(EmbeddingKey::query(&d.doc_id, &q.query_id), &text);
            for (i, e) in q.elements.iter().enumerate() {
                put(EmbeddingKey::query_element(&d.doc_id, &q.query_id, i), e);
            }
        }
    }
    store
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<(Corpus, EmbeddingStore)> {
    cfg.check()?;
    let vocab = Vocab::new(cfg.vocab_seed);
    let mut rng = seeded_rng(cfg.seed);
    let mut corpus = Corpus {
        n: cfg.n,
        documents: (0..cfg.n_docs).map(|i| generate_doc(cfg, &vocab, i, &mut rng)).collect(),
    };
    corpus.validate()?;
    let store = hash_store(&corpus, cfg.emb_dim);
    Ok((corpus, store))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64, noise: f64) -> SynthConfig {
        SynthConfig {
            n_docs: 12,
            seed,
            noise,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_and_valid() {
        let (a, sa) = synth_generate(&small(7, 0.3)).unwrap();
        let (b, sb) = synth_generate(&small(7, 0.3)).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let (mut x, mut y) = (Vec::new(), Vec::new());
        sa.write_to(&mut x).unwrap();
        sb.write_to(&mut y).unwrap();
        assert_eq!(x, y);
        let (c, _) = synth_generate(&small(8, 0.3)).unwrap();
        assert_ne!(a.to_json(), c.to_json());
        for d in &a.documents {
            assert_eq!(d.components.len(), 6);
            assert_eq!(d.queries.len(), 4);
            assert!(d.components.iter().any(Component::is_table));
        }
    }

    #[test]
    fn answers_are_numeric_and_tied_to_elements() {
        let (corpus, _) = synth_generate(&small(3, 0.0)).unwrap();
        for d in &corpus.documents {
            for q in &d.queries {
                let (comp, m) = d.entity(q.gold_entity_id.as_deref().unwrap()).unwrap();
                assert!(m.numeric);
                let surfaces: HashSet<&str> = comp.all_entities().map(|m| m.surface.as_str()).collect();
                for e in &q.elements {
                    assert!(surfaces.contains(e.as_str()), "{e} missing from {}", comp.comp_id);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(synth_generate(&SynthConfig { n: 3, ..small(0, 0.0) }).is_err());
        assert!(synth_generate(&SynthConfig { noise: 1.5, ..small(0, 0.0) }).is_err());
        assert!(synth_generate(&SynthConfig { components_per_doc: 2, ..small(0, 0.0) }).is_err());
    }

    #[test]
    fn near_variants_are_one_edit_away() {
        let mut rng = seeded_rng(0);
        let avoid = HashSet::new();
        for s in ["Kamora", "F1", "Vetu42", "Accuracy"] {
            let v = near_variant(&mut rng, s, &avoid);
            let d = crate::text::levenshtein_distance(&s.chars().collect::<Vec<_>>(), &v.chars().collect::<Vec<_>>());
            assert_eq!(d, 1, "{s} -> {v}");
        }
    }
}
