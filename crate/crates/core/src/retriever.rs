//! Stage-I component retrieval.
//!
//! Each `(component, query)` pair is described by three feature views:
//! component-level semantics (`cs`: embedding cosine and an entailment score),
//! entity-level semantics (`es`: max-pooled entity/element cosines) and
//! entity-level lexical matches (`el`: max-pooled string similarities). The
//! enabled views are concatenated and scored by one FFNN with a sigmoid
//! output, trained with summed binary cross-entropy over all components.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::corpus::{Component, Corpus, Document, Query};
use crate::embed::{self, cos, EmbeddingKey, EmbeddingStore};
use crate::nn::{self, binary_ce, binary_ce_grad, seeded_rng, sigmoid, AdamState, EarlyStopping, Ffnn};
use crate::text::{lexical_features, LexicalFeatureVec};

#[derive(Debug, Error)]
pub enum RetrieverError {
    #[error("query `{0}` has no gold component")]
    MissingGold(String),
    #[error("training corpus has no queries")]
    EmptyCorpus,
    #[error("all retriever views are disabled")]
    NoViews,
    #[error(transparent)]
    Nn(#[from] nn::NnError),
}

pub type Result<T, E = RetrieverError> = std::result::Result<T, E>;

/// Sentinel `es` value for components without entities.
pub const ES_EMPTY: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewFlags {
    pub use_cs: bool,
    pub use_es: bool,
    pub use_el: bool,
}

impl Default for ViewFlags {
    fn default() -> Self {
        Self {
            use_cs: true,
            use_es: true,
            use_el: true,
        }
    }
}

impl ViewFlags {
    pub fn from_config(cfg: &Config) -> Self {
        Self {
            use_cs: cfg.use_cs,
            use_es: cfg.use_es,
            use_el: cfg.use_el,
        }
    }

    /// `2 [cs] + (N-1) [es] + 3 (N-1) [el]`.
    pub fn feature_dim(self, n: usize) -> usize {
        2 * usize::from(self.use_cs) + (n - 1) * usize::from(self.use_es) + 3 * (n - 1) * usize::from(self.use_el)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighFeatures {
    pub cs: Option<[f64; 2]>,
    pub es: Option<Vec<f64>>,
    pub el: Option<Vec<f64>>,
}

impl HighFeatures {
    /// `cs ⊕ es ⊕ el`, skipping disabled views.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::new();
        if let Some(cs) = self.cs {
            v.extend(cs);
        }
        if let Some(es) = &self.es {
            v.extend(es);
        }
        if let Some(el) = &self.el {
            v.extend(el);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieverModel {
    pub n: usize,
    pub emb_dim: usize,
    pub views: ViewFlags,
    pub seed: u64,
    pub lr: f64,
    /// `feature_dim -> hidden -> 1`.
    pub scorer: Ffnn,
    /// `4 emb_dim -> hidden -> 1`; stands in for a missing entailment score.
    pub entail_head: Option<Ffnn>,
}

impl RetrieverModel {
    pub fn new(n: usize, emb_dim: usize, views: ViewFlags, hidden: usize, seed: u64) -> Result<Self> {
        if !(views.use_cs || views.use_es || views.use_el) {
            return Err(RetrieverError::NoViews);
        }
        let mut rng = seeded_rng(seed);
        let scorer = Ffnn::new(&[views.feature_dim(n), hidden, 1], &mut rng);
        let entail_head = views
            .use_cs
            .then(|| Ffnn::new(&[4 * emb_dim, hidden, 1], &mut rng));
        Ok(Self {
            n,
            emb_dim,
            views,
            seed,
            lr: 1e-4,
            scorer,
            entail_head,
        })
    }

    pub fn from_config(n: usize, emb_dim: usize, cfg: &Config) -> Result<Self> {
        let mut m = Self::new(n, emb_dim, ViewFlags::from_config(cfg), cfg.hidden, cfg.seed)?;
        m.lr = cfg.lr_high;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        Ok(nn::save_checkpoint(self, path)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(nn::load_checkpoint(path)?)
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut p = self.scorer.params().to_vec();
        if let Some(h) = &self.entail_head {
            p.extend_from_slice(h.params());
        }
        p
    }

    fn set_flat_params(&mut self, p: &[f64]) {
        let k = self.scorer.num_params();
        self.scorer.params_mut().copy_from_slice(&p[..k]);
        if let Some(h) = &mut self.entail_head {
            h.params_mut().copy_from_slice(&p[k..]);
        }
    }

    fn num_params(&self) -> usize {
        self.scorer.num_params() + self.entail_head.as_ref().map_or(0, Ffnn::num_params)
    }
}

pub(crate) fn query_embedding(store: &EmbeddingStore, doc_id: &str, q: &Query) -> Vec<f64> {
    let text = embed::build_query_text(q)
        .unwrap_or_else(|_| format!("What is the answer for {}?", q.elements.join(", ")));
    store.get(&EmbeddingKey::query(doc_id, &q.query_id), &text)
}

pub(crate) fn element_embeddings(store: &EmbeddingStore, doc_id: &str, q: &Query) -> Vec<Vec<f64>> {
    q.elements
        .iter()
        .enumerate()
        .map(|(a, e)| store.get(&EmbeddingKey::query_element(doc_id, &q.query_id, a), e))
        .collect()
}

pub(crate) fn component_embedding(store: &EmbeddingStore, doc_id: &str, c: &Component) -> Vec<f64> {
    store.get(&EmbeddingKey::component(doc_id, &c.comp_id), &c.text())
}

/// `[hC ⊕ hQ ⊕ hC ⊙ hQ ⊕ |hC - hQ|]`.
fn interaction(hc: &[f64], hq: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(4 * hc.len());
    v.extend_from_slice(hc);
    v.extend_from_slice(hq);
    v.extend(hc.iter().zip(hq).map(|(a, b)| a * b));
    v.extend(hc.iter().zip(hq).map(|(a, b)| (a - b).abs()));
    v
}

/// `[cos(hC, hQ), entailment]`; the entailment score comes from the store when
/// present, else from the model's head.
pub fn cs_features(
    doc_id: &str,
    c: &Component,
    q: &Query,
    store: &EmbeddingStore,
    model: &RetrieverModel,
) -> [f64; 2] {
    let hc = component_embedding(store, doc_id, c);
    let hq = query_embedding(store, doc_id, q);
    let ent = match store.entailment(doc_id, &c.comp_id, &q.query_id) {
        Some(s) => s,
        None => {
            let head = model
                .entail_head
                .as_ref()
                .expect("cs view enabled implies an entailment head");
            sigmoid(head.eval(&interaction(&hc, &hq)).expect("head input dim")[0])
        }
    };
    [cos(&hc, &hq), ent]
}

/// Per element, the best cosine between any component entity and the element.
pub fn es_features(doc_id: &str, c: &Component, q: &Query, store: &EmbeddingStore) -> Vec<f64> {
    let elements = element_embeddings(store, doc_id, q);
    let entities: Vec<Vec<f64>> = c
        .all_entities()
        .map(|m| store.get(&EmbeddingKey::entity(doc_id, &m.ent_id), &m.surface))
        .collect();
    es_from_vectors(&entities, &elements)
}

fn es_from_vectors(entities: &[Vec<f64>], elements: &[Vec<f64>]) -> Vec<f64> {
    elements
        .iter()
        .map(|he| {
            entities
                .iter()
                .map(|hm| cos(hm, he))
                .fold(ES_EMPTY, f64::max)
        })
        .collect()
}

/// Per element, the elementwise max of lexical triples over component entities.
pub fn el_features(c: &Component, q: &Query) -> Vec<f64> {
    q.elements
        .iter()
        .flat_map(|e| {
            c.all_entities()
                .map(|m| lexical_features(&m.surface, e))
                .fold(LexicalFeatureVec::ZERO, LexicalFeatureVec::max)
                .to_array()
        })
        .collect()
}

pub fn assemble_features(
    doc_id: &str,
    c: &Component,
    q: &Query,
    store: &EmbeddingStore,
    model: &RetrieverModel,
) -> HighFeatures {
    let v = model.views;
    HighFeatures {
        cs: v.use_cs.then(|| cs_features(doc_id, c, q, store, model)),
        es: v.use_es.then(|| es_features(doc_id, c, q, store)),
        el: v.use_el.then(|| el_features(c, q)),
    }
}

/// Features with the trainable entailment slot left open.
#[derive(Debug, Clone)]
struct PairInput {
    features: Vec<f64>,
    entail: EntailSource,
}

#[derive(Debug, Clone)]
enum EntailSource {
    None,
    Stored(f64),
    Head(Vec<f64>),
}

/// Index of the entailment score inside the feature vector.
const ENTAIL_SLOT: usize = 1;

fn prepare_pair(doc: &Document, c: &Component, q: &Query, store: &EmbeddingStore, views: ViewFlags) -> PairInput {
    let mut features = Vec::new();
    let mut entail = EntailSource::None;
    if views.use_cs {
        let hc = component_embedding(store, &doc.doc_id, c);
        let hq = query_embedding(store, &doc.doc_id, q);
        features.push(cos(&hc, &hq));
        features.push(0.0);
        entail = match store.entailment(&doc.doc_id, &c.comp_id, &q.query_id) {
            Some(s) => EntailSource::Stored(s),
            None => EntailSource::Head(interaction(&hc, &hq)),
        };
    }
    if views.use_es {
        features.extend(es_features(&doc.doc_id, c, q, store));
    }
    if views.use_el {
        features.extend(el_features(c, q));
    }
    PairInput { features, entail }
}

/// One query with every component of its document as a candidate.
#[derive(Debug, Clone)]
struct PreparedQuery {
    pairs: Vec<PairInput>,
    gold: Option<usize>,
}

fn prepare_query(doc: &Document, q: &Query, store: &EmbeddingStore, views: ViewFlags) -> PreparedQuery {
    PreparedQuery {
        pairs: doc
            .components
            .iter()
            .map(|c| prepare_pair(doc, c, q, store, views))
            .collect(),
        gold: q
            .gold_component_id
            .as_deref()
            .and_then(|id| doc.component_index(id)),
    }
}

struct PairEval {
    head_z: Option<(f64, nn::Tape)>,
}

fn pair_logit(model: &RetrieverModel, pair: &PairInput, keep_tapes: bool) -> (f64, Option<(PairEval, nn::Tape)>) {
    let mut x = pair.features.clone();
    let mut head_z = None;
    match &pair.entail {
        EntailSource::None => {}
        EntailSource::Stored(s) => x[ENTAIL_SLOT] = *s,
        EntailSource::Head(inp) => {
            let head = model.entail_head.as_ref().expect("cs head");
            if keep_tapes {
                let (z, tape) = head.forward(inp).expect("head dim");
                x[ENTAIL_SLOT] = sigmoid(z[0]);
                head_z = Some((z[0], tape));
            } else {
                x[ENTAIL_SLOT] = sigmoid(head.eval(inp).expect("head dim")[0]);
            }
        }
    }
    if keep_tapes {
        let (z, tape) = model.scorer.forward(&x).expect("scorer dim");
        (z[0], Some((PairEval { head_z }, tape)))
    } else {
        (model.scorer.eval(&x).expect("scorer dim")[0], None)
    }
}

fn labels(n: usize, gold: usize) -> Vec<f64> {
    (0..n).map(|i| if i == gold { 1.0 } else { 0.0 }).collect()
}

fn query_loss(model: &RetrieverModel, pq: &PreparedQuery) -> f64 {
    let gold = pq.gold.expect("training queries carry gold labels");
    let p: Vec<f64> = pq
        .pairs
        .iter()
        .map(|pair| sigmoid(pair_logit(model, pair, false).0))
        .collect();
    binary_ce(&labels(p.len(), gold), &p).expect("equal lengths")
}

/// Loss and flat gradient (scorer params, then head params) for one query.
fn query_loss_grad(model: &RetrieverModel, pq: &PreparedQuery) -> (f64, Vec<f64>) {
    let gold = pq.gold.expect("training queries carry gold labels");
    let k = model.scorer.num_params();
    let mut grads = vec![0.0; model.num_params()];
    let mut loss = 0.0;
    for (i, pair) in pq.pairs.iter().enumerate() {
        let (z, cache) = pair_logit(model, pair, true);
        let (eval, tape) = cache.expect("tapes kept");
        let p = sigmoid(z);
        let y = [if i == gold { 1.0 } else { 0.0 }];
        loss += binary_ce(&y, &[p]).expect("len 1");
        let dz = binary_ce_grad(&y, &[p]).expect("len 1")[0] * p * (1.0 - p);
        let dx = model
            .scorer
            .backward_into(&tape, &[dz], &mut grads[..k])
            .expect("fresh tape");
        if let Some((hz, htape)) = eval.head_z {
            let s = sigmoid(hz);
            let dhz = dx[ENTAIL_SLOT] * s * (1.0 - s);
            let head = model.entail_head.as_ref().expect("cs head");
            head.backward_into(&htape, &[dhz], &mut grads[k..])
                .expect("fresh tape");
        }
    }
    (loss, grads)
}

/// Summed high-level loss over the queries of `corpus` that carry gold labels,
/// and its gradient with respect to the model's flat parameters.
pub fn high_loss_and_grad(model: &RetrieverModel, corpus: &Corpus, store: &EmbeddingStore) -> (f64, Vec<f64>, Vec<f64>) {
    let mut total = 0.0;
    let mut grads = vec![0.0; model.num_params()];
    for doc in &corpus.documents {
        for q in &doc.queries {
            let pq = prepare_query(doc, q, store, model.views);
            if pq.gold.is_none() {
                continue;
            }
            let (l, g) = query_loss_grad(model, &pq);
            total += l;
            grads.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
    }
    (total, grads, model.flat_params())
}

/// Evaluates [`high_loss_and_grad`]'s loss at arbitrary flat parameters.
pub fn high_loss_at(model: &RetrieverModel, params: &[f64], corpus: &Corpus, store: &EmbeddingStore) -> f64 {
    let mut m = model.clone();
    m.set_flat_params(params);
    high_loss_and_grad(&m, corpus, store).0
}

/// One scored component.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredComponent {
    pub index: usize,
    pub comp_id: String,
    pub score: f64,
}

/// Sorts descending by score; ties keep document order.
pub(crate) fn rank_by_score<T>(items: &mut [T], score: impl Fn(&T) -> f64) {
    items.sort_by(|a, b| score(b).total_cmp(&score(a)));
}

pub fn score_components(doc: &Document, q: &Query, store: &EmbeddingStore, model: &RetrieverModel) -> Vec<ScoredComponent> {
    let pq = prepare_query(doc, q, store, model.views);
    let mut scored: Vec<ScoredComponent> = pq
        .pairs
        .iter()
        .enumerate()
        .map(|(i, pair)| ScoredComponent {
            index: i,
            comp_id: doc.components[i].comp_id.clone(),
            score: sigmoid(pair_logit(model, pair, false).0),
        })
        .collect();
    rank_by_score(&mut scored, |s| s.score);
    scored
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    /// Training loss before the first update.
    pub initial: f64,
    /// Training loss after each epoch.
    pub epochs: Vec<f64>,
    /// Dev top-1 accuracy after each epoch (empty without a dev set).
    pub dev_acc: Vec<f64>,
    /// Epoch whose parameters were kept (1-based; 0 means initial).
    pub best_epoch: usize,
}

fn prepared_set(corpus: &Corpus, store: &EmbeddingStore, views: ViewFlags, require_gold: bool) -> Result<Vec<PreparedQuery>> {
    let mut out = Vec::new();
    for doc in &corpus.documents {
        for q in &doc.queries {
            let pq = prepare_query(doc, q, store, views);
            if pq.gold.is_none() {
                if require_gold {
                    return Err(RetrieverError::MissingGold(q.query_id.clone()));
                }
                continue;
            }
            out.push(pq);
        }
    }
    Ok(out)
}

fn top1_accuracy(model: &RetrieverModel, set: &[PreparedQuery]) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let hits = set
        .iter()
        .filter(|pq| {
            let scores: Vec<f64> = pq.pairs.iter().map(|p| pair_logit(model, p, false).0).collect();
            let mut idx: Vec<usize> = (0..scores.len()).collect();
            rank_by_score(&mut idx, |&i| scores[i]);
            idx.first().copied() == pq.gold
        })
        .count();
    hits as f64 / set.len() as f64
}

/// Trains a retriever with Adam, one step per query. When `dev` has labelled
/// queries, training stops after `patience` epochs without a dev accuracy
/// improvement and the best epoch's parameters are returned.
pub fn train_high(
    train: &Corpus,
    dev: Option<&Corpus>,
    store: &EmbeddingStore,
    cfg: &Config,
) -> Result<(RetrieverModel, LossCurve)> {
    let mut model = RetrieverModel::from_config(train.n, store.dim(), cfg)?;
    let train_set = prepared_set(train, store, model.views, true)?;
    if train_set.is_empty() {
        return Err(RetrieverError::EmptyCorpus);
    }
    let dev_set = match dev {
        Some(d) => prepared_set(d, store, model.views, false)?,
        None => Vec::new(),
    };
    let mut adam = AdamState::new(model.num_params(), cfg.lr_high);
    let mut params = model.flat_params();
    let epoch_loss = |m: &RetrieverModel| train_set.iter().map(|pq| query_loss(m, pq)).sum::<f64>();

    let mut curve = LossCurve {
        initial: epoch_loss(&model),
        epochs: Vec::new(),
        dev_acc: Vec::new(),
        best_epoch: 0,
    };
    let mut stop = EarlyStopping::new(cfg.patience);
    for epoch in 1..=cfg.max_epochs {
        for pq in &train_set {
            let (_, g) = query_loss_grad(&model, pq);
            adam.step(&mut params, &g)?;
            model.set_flat_params(&params);
        }
        curve.epochs.push(epoch_loss(&model));
        if dev_set.is_empty() {
            curve.best_epoch = epoch;
            continue;
        }
        let acc = top1_accuracy(&model, &dev_set);
        curve.dev_acc.push(acc);
        let dev_loss = dev_set.iter().map(|pq| query_loss(&model, pq)).sum();
        if stop.observe(epoch, acc, dev_loss, &params) {
            break;
        }
    }
    if !dev_set.is_empty() {
        curve.best_epoch = stop.best_epoch();
        model.set_flat_params(&stop.into_best().expect("at least one dev epoch"));
    }
    log::debug!(
        "retriever trained: best epoch {} of {}, loss {:.4} -> {:.4}",
        curve.best_epoch,
        curve.epochs.len(),
        curve.initial,
        curve.epochs.last().copied().unwrap_or(curve.initial)
    );
    Ok((model, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnswerType, ComponentKind, EntityMention};
    use crate::embed::hash_embed;
    use crate::nn::finite_diff_check;

    fn paragraph(id: &str, words: &[&str]) -> Component {
        let tokens: Vec<String> = words.iter().map(|s| s.to_string()).collect();
        Component {
            comp_id: id.into(),
            kind: ComponentKind::Paragraph,
            entities: words
                .iter()
                .enumerate()
                .map(|(i, w)| EntityMention {
                    ent_id: format!("{id}e{i}"),
                    surface: w.to_string(),
                    sent_idx: 0,
                    span: (i, i + 1),
                    numeric: false,
                })
                .collect(),
            sentences: vec![tokens],
            table: None,
            table_number: None,
        }
    }

    fn query(elements: &[&str], gold: Option<&str>) -> Query {
        Query {
            query_id: "q".into(),
            elements: elements.iter().map(|s| s.to_string()).collect(),
            question_template: None,
            gold_component_id: gold.map(str::to_owned),
            gold_entity_id: None,
            answer_type: AnswerType::Any,
        }
    }

    fn model(n: usize, views: ViewFlags) -> RetrieverModel {
        RetrieverModel::new(n, 16, views, 32, 0).unwrap()
    }

    #[test]
    fn feature_dimensions() {
        let all = ViewFlags::default();
        assert_eq!(all.feature_dim(5), 18);
        assert_eq!(ViewFlags { use_cs: false, ..all }.feature_dim(5), 16);
        assert_eq!(ViewFlags { use_es: false, use_el: false, ..all }.feature_dim(5), 2);
        let no_views = ViewFlags { use_cs: false, use_es: false, use_el: false };
        assert!(matches!(RetrieverModel::new(3, 16, no_views, 32, 0), Err(RetrieverError::NoViews)));
    }

    #[test]
    fn cs_view() {
        let c = paragraph("p", &["gat"]);
        let q = query(&["gat", "cora"], None);
        let mut store = EmbeddingStore::new(16);
        let v = hash_embed("shared", 16);
        store.insert(EmbeddingKey::component("d", "p"), v.clone()).unwrap();
        store.insert(EmbeddingKey::query("d", "q"), v).unwrap();
        let m = model(3, ViewFlags::default());
        let cs = cs_features("d", &c, &q, &store, &m);
        assert!((cs[0] - 1.0).abs() < 1e-12);
        assert!(cs[1] > 0.0 && cs[1] < 1.0);
        store.insert(EmbeddingKey::entailment("d", "p", "q"), vec![0.9]).unwrap();
        assert_eq!(cs_features("d", &c, &q, &store, &m)[1], 0.9);
    }

    #[test]
    fn es_view() {
        let q = query(&["gat", "cora"], None);
        let mut store = EmbeddingStore::new(4);
        store.insert(EmbeddingKey::query_element("d", "q", 0), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        store.insert(EmbeddingKey::query_element("d", "q", 1), vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let c = paragraph("p", &["x", "y"]);
        store.insert(EmbeddingKey::entity("d", "pe0"), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        store.insert(EmbeddingKey::entity("d", "pe1"), vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(es_features("d", &c, &q, &store), vec![1.0, 0.0]);

        let orthogonal = paragraph("o", &["z"]);
        store.insert(EmbeddingKey::entity("d", "oe0"), vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(es_features("d", &orthogonal, &q, &store), vec![0.0, 0.0]);

        // cosines 0.3 and 0.8 against element 0.
        let e = [vec![0.3, (1.0f64 - 0.09).sqrt(), 0.0, 0.0], vec![0.8, 0.0, 0.6, 0.0]];
        let es = es_from_vectors(&e, &[vec![1.0, 0.0, 0.0, 0.0]]);
        assert!((es[0] - 0.8).abs() < 1e-12);

        let empty = Component { entities: vec![], ..paragraph("n", &[]) };
        assert_eq!(es_features("d", &empty, &q, &store), vec![ES_EMPTY; 2]);
    }

    #[test]
    fn el_view() {
        let q = query(&["baba", "gat"], None);
        let c = paragraph("p", &["abab"]);
        let el = el_features(&c, &q);
        assert_eq!(el.len(), 6);
        assert!((el[0] - 0.5).abs() < 1e-12 && (el[1] - 0.75).abs() < 1e-12 && (el[2] - 0.75).abs() < 1e-12);

        let exact = paragraph("x", &["baba"]);
        assert_eq!(&el_features(&exact, &q)[..3], &[1.0; 3]);

        // Brute force over the two entities: each coordinate picks its own max.
        let q1 = query(&["abcdef", "z"], None);
        let c = paragraph("m", &["abcxyz", "fedcba"]);
        let el = el_features(&c, &q1);
        let a = lexical_features("abcxyz", "abcdef").to_array();
        let b = lexical_features("fedcba", "abcdef").to_array();
        for k in 0..3 {
            assert_eq!(el[k], a[k].max(b[k]));
        }
        assert!(a[0] > b[0]);

        let empty = Component { entities: vec![], ..paragraph("n", &[]) };
        assert_eq!(el_features(&empty, &q), vec![0.0; 6]);
    }

    fn two_component_doc() -> (Corpus, EmbeddingStore) {
        let doc = Document {
            doc_id: "d".into(),
            components: vec![paragraph("p0", &["lorem"]), paragraph("p1", &["gat", "cora"])],
            queries: vec![query(&["gat", "cora"], Some("p1"))],
            coref_clusters: None,
        };
        (Corpus { n: 3, documents: vec![doc] }, EmbeddingStore::new(16))
    }

    #[test]
    fn ranking_ties_follow_document_order() {
        let doc = Document {
            doc_id: "d".into(),
            components: vec![paragraph("a", &["same"]), paragraph("b", &["same"])],
            queries: vec![],
            coref_clusters: None,
        };
        let store = EmbeddingStore::new(16);
        let q = query(&["same", "other"], None);
        let ranked = score_components(&doc, &q, &store, &model(3, ViewFlags::default()));
        assert_eq!(ranked[0].score, ranked[1].score);
        assert_eq!((ranked[0].index, ranked[1].index), (0, 1));
        let single = Document { components: vec![paragraph("a", &["x"])], ..doc };
        assert_eq!(score_components(&single, &q, &store, &model(3, ViewFlags::default()))[0].index, 0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (corpus, store) = two_component_doc();
        let m = model(3, ViewFlags::default());
        let (_, g, p) = high_loss_and_grad(&m, &corpus, &store);
        let r = finite_diff_check(|x| high_loss_at(&m, x, &corpus, &store), &p, &g, 1e-5, 1e-4);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn separable_pair_converges() {
        let (corpus, store) = two_component_doc();
        let cfg = Config { lr_high: 0.05, ..Config::default() };
        let (_, curve) = train_high(&corpus, None, &store, &cfg).unwrap();
        assert!(curve.epochs.len() <= 50);
        assert!(*curve.epochs.last().unwrap() < 0.01, "{curve:?}");
        assert!(curve.epochs[0] < curve.initial);
    }

    #[test]
    fn training_is_deterministic() {
        let (corpus, store) = two_component_doc();
        let cfg = Config { max_epochs: 5, ..Config::default() };
        let a = train_high(&corpus, None, &store, &cfg).unwrap();
        let b = train_high(&corpus, None, &store, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_gold_is_rejected() {
        let (mut corpus, store) = two_component_doc();
        corpus.documents[0].queries[0].gold_component_id = None;
        assert!(matches!(
            train_high(&corpus, None, &store, &Config::default()),
            Err(RetrieverError::MissingGold(_))
        ));
        corpus.documents[0].queries.clear();
        assert!(matches!(
            train_high(&corpus, None, &store, &Config::default()),
            Err(RetrieverError::EmptyCorpus)
        ));
    }
}
