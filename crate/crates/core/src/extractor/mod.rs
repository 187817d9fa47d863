//! Stage II: picking the answer entity inside a document graph.
//!
//! Each candidate gets two scores. The semantic branch reads the element and
//! candidate embeddings `h_s = [h(e_1) ⊕ … ⊕ h(e_{N-1}) ⊕ h(v)]`; the neighbor
//! branch reads the GAT-propagated bag-of-neighbors features. The averaged
//! scores are softmaxed over the candidate set.

mod features;
mod gat;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{bon_pool, entity_embedding, feature_dim, init_node_features, node_embeddings, node_feature};
pub use gat::{Adjacency, Gat, GatTape};

use crate::config::Config;
use crate::corpus::{AnswerType, Corpus, Document, Query};
use crate::embed::EmbeddingStore;
use crate::graph::{build_graph, EntityGraph, GraphConfig};
use crate::nn::{self, binary_ce, binary_ce_grad, seeded_rng, softmax, softmax_backward, AdamState, EarlyStopping, Ffnn, NnError, Tape};
use crate::retriever::{element_embeddings, rank_by_score, score_components, LossCurve, RetrieverModel};

#[derive(Debug, Error)]
pub enum ExtractorError {
    #[error("query {0} has no gold entity")]
    MissingGold(String),
    #[error("gold entity of query {0} is not among its candidates")]
    GoldOutsideCandidates(String),
    #[error("query {0} has no candidates")]
    EmptyCandidates(String),
    #[error("predicted-component scope needs a retriever")]
    NoRetriever,
    #[error("no labelled training queries")]
    EmptyCorpus,
    #[error("score vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub type Result<T, E = ExtractorError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorFlags {
    pub use_bon: bool,
    pub use_gat: bool,
    pub use_os: bool,
    pub use_mva: bool,
}

impl Default for ExtractorFlags {
    fn default() -> Self {
        Self {
            use_bon: true,
            use_gat: true,
            use_os: true,
            use_mva: true,
        }
    }
}

impl ExtractorFlags {
    pub fn from_config(cfg: &Config) -> Self {
        Self {
            use_bon: cfg.use_bon,
            use_gat: cfg.use_gat,
            use_os: cfg.use_os,
            use_mva: cfg.use_mva,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorModel {
    pub n: usize,
    pub emb_dim: usize,
    pub flags: ExtractorFlags,
    pub lambda: f64,
    pub mu: f64,
    pub lr: f64,
    pub seed: u64,
    pub gat: Option<Gat>,
    pub semantic: Option<Ffnn>,
    pub neighbor: Option<Ffnn>,
    /// Single classifier over `[h_s ⊕ g'_BON]` when multi-view aggregation is off.
    pub unified: Option<Ffnn>,
}

impl ExtractorModel {
    pub fn from_config(n: usize, emb_dim: usize, cfg: &Config) -> Self {
        let flags = ExtractorFlags::from_config(cfg);
        let mut rng = seeded_rng(cfg.seed);
        let gat_in = if flags.use_bon { feature_dim(n) } else { emb_dim };
        let gat = flags.use_gat.then(|| {
            Gat::new(gat_in, cfg.gat_dim, cfg.gat_layers, cfg.gat_heads, cfg.gat_aggregates_neighbors, &mut rng)
        });
        let nb_dim = if flags.use_gat { cfg.gat_dim } else { gat_in };
        let sem_dim = n * emb_dim;
        let (semantic, neighbor, unified) = if flags.use_mva {
            let s = flags.use_os.then(|| Ffnn::new(&[sem_dim, cfg.hidden, 1], &mut rng));
            (s, Some(Ffnn::new(&[nb_dim, cfg.hidden, 1], &mut rng)), None)
        } else {
            let d = if flags.use_os { sem_dim + nb_dim } else { nb_dim };
            (None, None, Some(Ffnn::new(&[d, cfg.hidden, 1], &mut rng)))
        };
        Self {
            n,
            emb_dim,
            flags,
            lambda: cfg.lambda,
            mu: cfg.mu,
            lr: cfg.lr_low,
            seed: cfg.seed,
            gat,
            semantic,
            neighbor,
            unified,
        }
    }

    fn nets(&self) -> [Option<&Ffnn>; 3] {
        [self.semantic.as_ref(), self.neighbor.as_ref(), self.unified.as_ref()]
    }

    pub fn num_params(&self) -> usize {
        self.gat.as_ref().map_or(0, Gat::num_params) + self.nets().iter().flatten().map(|f| f.num_params()).sum::<usize>()
    }

    /// All parameters, in the order GAT, semantic, neighbor, unified.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        if let Some(g) = &self.gat {
            p.extend_from_slice(g.params());
        }
        for f in self.nets().into_iter().flatten() {
            p.extend_from_slice(f.params());
        }
        p
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params(), "parameter vector length");
        let mut off = 0;
        if let Some(g) = &mut self.gat {
            let k = g.num_params();
            g.params_mut().copy_from_slice(&p[off..off + k]);
            off += k;
        }
        for f in [&mut self.semantic, &mut self.neighbor, &mut self.unified].into_iter().flatten() {
            let k = f.num_params();
            f.params_mut().copy_from_slice(&p[off..off + k]);
            off += k;
        }
    }

    /// Offsets of each block inside [`ExtractorModel::flat_params`].
    fn offsets(&self) -> [usize; 4] {
        let mut off = [0; 4];
        let sizes = [
            self.gat.as_ref().map_or(0, Gat::num_params),
            self.semantic.as_ref().map_or(0, Ffnn::num_params),
            self.neighbor.as_ref().map_or(0, Ffnn::num_params),
        ];
        for i in 0..3 {
            off[i + 1] = off[i] + sizes[i];
        }
        off
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        Ok(nn::save_checkpoint(self, path)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(nn::load_checkpoint(path)?)
    }
}

/// A document's graph plus the per-node data every query reuses.
#[derive(Debug, Clone)]
pub struct DocGraph {
    pub graph: EntityGraph,
    pub adj: Adjacency,
    pub embeddings: Vec<Vec<f64>>,
}

impl DocGraph {
    pub fn build(doc: &Document, store: &EmbeddingStore, cfg: &GraphConfig) -> Self {
        let graph = build_graph(doc, cfg);
        let adj = Adjacency::from_graph(&graph);
        let embeddings = node_embeddings(&graph, doc, store);
        Self { graph, adj, embeddings }
    }
}

pub fn build_doc_graphs(corpus: &Corpus, store: &EmbeddingStore, cfg: &GraphConfig) -> Vec<DocGraph> {
    corpus.documents.iter().map(|d| DocGraph::build(d, store, cfg)).collect()
}

/// Parameter-free inputs of one query over a fixed candidate set.
#[derive(Debug, Clone)]
pub struct PreparedQuery<'a> {
    pub query_id: String,
    adj: &'a Adjacency,
    /// GAT input (or neighbor-branch input without a GAT) for every node.
    h0: Vec<Vec<f64>>,
    /// Candidate node indices in document order.
    pub candidates: Vec<usize>,
    hs: Vec<Vec<f64>>,
    /// Position of the gold entity among the candidates.
    pub gold: Option<usize>,
}

pub fn prepare_query<'a>(
    model: &ExtractorModel,
    dg: &'a DocGraph,
    doc: &Document,
    q: &Query,
    store: &EmbeddingStore,
    candidates: Vec<usize>,
) -> PreparedQuery<'a> {
    let elems = element_embeddings(store, &doc.doc_id, q);
    let nodes = dg.graph.nodes();
    let h0 = if model.flags.use_bon {
        let g: Vec<Vec<f64>> = dg
            .embeddings
            .iter()
            .zip(nodes)
            .map(|(h, n)| node_feature(h, &n.surface, &q.elements, &elems))
            .collect();
        bon_pool(&dg.graph, &g)
    } else {
        dg.embeddings.clone()
    };
    let hs = candidates
        .iter()
        .map(|&c| {
            let mut v: Vec<f64> = elems.concat();
            v.extend_from_slice(&dg.embeddings[c]);
            v
        })
        .collect();
    let gold = q
        .gold_entity_id
        .as_deref()
        .and_then(|g| candidates.iter().position(|&c| nodes[c].ent_id == g));
    PreparedQuery {
        query_id: q.query_id.clone(),
        adj: &dg.adj,
        h0,
        candidates,
        hs,
        gold,
    }
}

fn component_candidates(dg: &DocGraph, doc: &Document, comp_ids: &[&str]) -> Vec<usize> {
    let mut out: Vec<usize> = comp_ids
        .iter()
        .filter_map(|id| doc.component(id))
        .flat_map(|c| c.all_entities())
        .filter_map(|m| dg.graph.node_index(&m.ent_id))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Training queries restricted to their gold component.
pub fn prepare_gold_queries<'a>(
    model: &ExtractorModel,
    corpus: &Corpus,
    graphs: &'a [DocGraph],
    store: &EmbeddingStore,
    require_gold: bool,
) -> Result<Vec<PreparedQuery<'a>>> {
    let mut out = Vec::new();
    for (doc, dg) in corpus.documents.iter().zip(graphs) {
        for q in &doc.queries {
            let (Some(comp), Some(_)) = (&q.gold_component_id, &q.gold_entity_id) else {
                if require_gold {
                    return Err(ExtractorError::MissingGold(q.query_id.clone()));
                }
                continue;
            };
            let cands = component_candidates(dg, doc, &[comp.as_str()]);
            let pq = prepare_query(model, dg, doc, q, store, cands);
            if pq.gold.is_none() {
                return Err(ExtractorError::GoldOutsideCandidates(q.query_id.clone()));
            }
            out.push(pq);
        }
    }
    Ok(out)
}

/// Raw per-candidate scores of every active branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchScores {
    pub semantic: Option<Vec<f64>>,
    pub neighbor: Option<Vec<f64>>,
    pub unified: Option<Vec<f64>>,
}

impl BranchScores {
    /// Final candidate distribution.
    pub fn probabilities(&self) -> Vec<f64> {
        match (&self.unified, &self.semantic, &self.neighbor) {
            (Some(u), _, _) => softmax(u),
            (None, Some(s), Some(n)) => aggregate_predict(s, n).expect("branches share candidates"),
            (None, None, Some(n)) => softmax(n),
            _ => unreachable!("a model always has a scoring branch"),
        }
    }
}

/// `softmax((s + n) / 2)`.
pub fn aggregate_predict(s: &[f64], n: &[f64]) -> Result<Vec<f64>> {
    if s.len() != n.len() {
        return Err(ExtractorError::LengthMismatch(s.len(), n.len()));
    }
    let mean: Vec<f64> = s.iter().zip(n).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok(softmax(&mean))
}

/// Sum over ordered branch pairs of squared distances; with two branches this
/// is twice `‖p_s - p_n‖²`.
pub fn consistency_loss(ps: &[f64], pn: &[f64]) -> f64 {
    let d: f64 = ps.iter().zip(pn).map(|(a, b)| (a - b) * (a - b)).sum();
    d + d
}

fn one_hot(len: usize, gold: usize) -> Vec<f64> {
    let mut y = vec![0.0; len];
    y[gold] = 1.0;
    y
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub total: f64,
}

/// Two-branch loss on raw scores: `l1 + λ l2 + μ l3`.
pub fn mva_loss(s: &[f64], n: &[f64], gold: usize, lambda: f64, mu: f64) -> Result<LossParts> {
    Ok(mva_loss_grad(s, n, gold, lambda, mu)?.0)
}

fn ce(y: &[f64], p: &[f64]) -> f64 {
    binary_ce(y, p).expect("equal lengths")
}

fn ce_grad(y: &[f64], p: &[f64]) -> Vec<f64> {
    binary_ce_grad(y, p).expect("equal lengths")
}

type ScoreGrads = (LossParts, Vec<f64>, Vec<f64>);

fn mva_loss_grad(s: &[f64], n: &[f64], gold: usize, lambda: f64, mu: f64) -> Result<ScoreGrads> {
    let p = aggregate_predict(s, n)?;
    let y = one_hot(p.len(), gold);
    let (ps, pn) = (softmax(s), softmax(n));
    let l1 = ce(&y, &p);
    let l2 = ce(&y, &ps) + ce(&y, &pn);
    let l3 = consistency_loss(&ps, &pn);
    let parts = LossParts {
        l1,
        l2,
        l3,
        total: l1 + lambda * l2 + mu * l3,
    };
    let dz = softmax_backward(&p, &ce_grad(&y, &p));
    let branch = |own: &[f64], other: &[f64]| {
        let dp: Vec<f64> = ce_grad(&y, own)
            .iter()
            .zip(own.iter().zip(other))
            .map(|(g, (a, b))| lambda * g + 4.0 * mu * (a - b))
            .collect();
        softmax_backward(own, &dp)
    };
    let ds = dz.iter().zip(branch(&ps, &pn)).map(|(a, b)| 0.5 * a + b).collect();
    let dn = dz.iter().zip(branch(&pn, &ps)).map(|(a, b)| 0.5 * a + b).collect();
    Ok((parts, ds, dn))
}

/// Single-score loss for the neighbor-only and unified variants.
fn single_loss_grad(z: &[f64], gold: usize, lambda: f64, with_branch_term: bool) -> (LossParts, Vec<f64>) {
    let p = softmax(z);
    let y = one_hot(p.len(), gold);
    let l1 = ce(&y, &p);
    let l2 = if with_branch_term { l1 } else { 0.0 };
    let scale = if with_branch_term { 1.0 + lambda } else { 1.0 };
    let dp: Vec<f64> = ce_grad(&y, &p).iter().map(|g| scale * g).collect();
    let parts = LossParts {
        l1,
        l2,
        l3: 0.0,
        total: l1 + lambda * l2,
    };
    (parts, softmax_backward(&p, &dp))
}

struct ForwardPass {
    scores: BranchScores,
    gat_tape: Option<GatTape>,
    sem_tapes: Vec<Tape>,
    nb_tapes: Vec<Tape>,
    uni_tapes: Vec<Tape>,
}

fn forward(model: &ExtractorModel, pq: &PreparedQuery<'_>) -> Result<ForwardPass> {
    if pq.candidates.is_empty() {
        return Err(ExtractorError::EmptyCandidates(pq.query_id.clone()));
    }
    let (nb_in, gat_tape): (Vec<Vec<f64>>, _) = match &model.gat {
        Some(g) => {
            let (out, tape) = g.forward(pq.adj, &pq.h0)?;
            (pq.candidates.iter().map(|&c| out[c].clone()).collect(), Some(tape))
        }
        None => (pq.candidates.iter().map(|&c| pq.h0[c].clone()).collect(), None),
    };
    let run = |net: &Ffnn, inputs: &mut dyn Iterator<Item = Vec<f64>>| -> Result<(Vec<f64>, Vec<Tape>)> {
        let mut scores = Vec::new();
        let mut tapes = Vec::new();
        for x in inputs {
            let (y, t) = net.forward(&x)?;
            scores.push(y[0]);
            tapes.push(t);
        }
        Ok((scores, tapes))
    };
    let mut pass = ForwardPass {
        scores: BranchScores {
            semantic: None,
            neighbor: None,
            unified: None,
        },
        gat_tape,
        sem_tapes: Vec::new(),
        nb_tapes: Vec::new(),
        uni_tapes: Vec::new(),
    };
    if let Some(net) = &model.semantic {
        let (s, t) = run(net, &mut pq.hs.iter().cloned())?;
        pass.scores.semantic = Some(s);
        pass.sem_tapes = t;
    }
    if let Some(net) = &model.neighbor {
        let (s, t) = run(net, &mut nb_in.iter().cloned())?;
        pass.scores.neighbor = Some(s);
        pass.nb_tapes = t;
    }
    if let Some(net) = &model.unified {
        let use_os = model.flags.use_os;
        let mut inputs = pq.hs.iter().zip(&nb_in).map(|(h, g)| {
            let mut v = if use_os { h.clone() } else { Vec::new() };
            v.extend_from_slice(g);
            v
        });
        let (s, t) = run(net, &mut inputs)?;
        pass.scores.unified = Some(s);
        pass.uni_tapes = t;
    }
    Ok(pass)
}

pub fn branch_scores(model: &ExtractorModel, pq: &PreparedQuery<'_>) -> Result<BranchScores> {
    Ok(forward(model, pq)?.scores)
}

/// Loss of one query and its gradient, accumulated into `grads`.
fn query_loss_grad(model: &ExtractorModel, pq: &PreparedQuery<'_>, grads: Option<&mut [f64]>) -> Result<LossParts> {
    let gold = pq.gold.ok_or_else(|| ExtractorError::GoldOutsideCandidates(pq.query_id.clone()))?;
    let pass = forward(model, pq)?;
    let sc = &pass.scores;
    let (parts, ds, dn, du) = match (&sc.unified, &sc.semantic, &sc.neighbor) {
        (Some(u), _, _) => {
            let (p, du) = single_loss_grad(u, gold, model.lambda, false);
            (p, None, None, Some(du))
        }
        (None, Some(s), Some(n)) => {
            let (p, ds, dn) = mva_loss_grad(s, n, gold, model.lambda, model.mu)?;
            (p, Some(ds), Some(dn), None)
        }
        (None, None, Some(n)) => {
            let (p, dn) = single_loss_grad(n, gold, model.lambda, true);
            (p, None, Some(dn), None)
        }
        _ => unreachable!("a model always has a scoring branch"),
    };
    let Some(grads) = grads else {
        return Ok(parts);
    };
    let off = model.offsets();
    let nb_dim = model.neighbor.as_ref().map(Ffnn::input_dim);
    let mut d_nb: Vec<Vec<f64>> = Vec::with_capacity(pq.candidates.len());
    if let (Some(net), Some(ds)) = (&model.semantic, &ds) {
        let g = &mut grads[off[1]..off[2]];
        for (t, &d) in pass.sem_tapes.iter().zip(ds) {
            net.backward_into(t, &[d], g)?;
        }
    }
    if let (Some(net), Some(dn)) = (&model.neighbor, &dn) {
        let g = &mut grads[off[2]..off[3]];
        for (t, &d) in pass.nb_tapes.iter().zip(dn) {
            d_nb.push(net.backward_into(t, &[d], g)?);
        }
    }
    if let (Some(net), Some(du)) = (&model.unified, &du) {
        let g = &mut grads[off[3]..];
        let split = if model.flags.use_os { pq.hs[0].len() } else { 0 };
        for (t, &d) in pass.uni_tapes.iter().zip(du) {
            d_nb.push(net.backward_into(t, &[d], g)?.split_off(split));
        }
    }
    debug_assert!(nb_dim.is_none() || d_nb.iter().all(|v| Some(v.len()) == nb_dim));
    if let (Some(gat), Some(tape)) = (&model.gat, &pass.gat_tape) {
        let mut dout = vec![vec![0.0; gat.out_dim()]; pq.h0.len()];
        for (&c, d) in pq.candidates.iter().zip(&d_nb) {
            for (a, b) in dout[c].iter_mut().zip(d) {
                *a += b;
            }
        }
        gat.backward_into(pq.adj, tape, &dout, &mut grads[off[0]..off[1]])?;
    }
    Ok(parts)
}

pub fn query_loss(model: &ExtractorModel, pq: &PreparedQuery<'_>) -> Result<LossParts> {
    query_loss_grad(model, pq, None)
}

/// Summed loss over `set` with its gradient and the parameters it was taken at.
pub fn low_loss_and_grad(model: &ExtractorModel, set: &[PreparedQuery<'_>]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let mut grads = vec![0.0; model.num_params()];
    let mut total = 0.0;
    for pq in set {
        total += query_loss_grad(model, pq, Some(&mut grads))?.total;
    }
    Ok((total, grads, model.flat_params()))
}

pub fn low_loss_at(model: &ExtractorModel, params: &[f64], set: &[PreparedQuery<'_>]) -> Result<f64> {
    let mut m = model.clone();
    m.set_flat_params(params);
    set.iter().map(|pq| Ok(query_loss(&m, pq)?.total)).sum()
}

/// Candidate positions sorted by descending probability, ties in document order.
pub fn rank_candidates(model: &ExtractorModel, pq: &PreparedQuery<'_>) -> Result<Vec<(usize, f64)>> {
    let probs = branch_scores(model, pq)?.probabilities();
    let mut ranked: Vec<(usize, f64)> = probs.into_iter().enumerate().collect();
    rank_by_score(&mut ranked, |&(_, p)| p);
    Ok(ranked)
}

fn gold_accuracy(model: &ExtractorModel, set: &[PreparedQuery<'_>]) -> Result<f64> {
    if set.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for pq in set {
        if rank_candidates(model, pq)?.first().map(|r| r.0) == pq.gold {
            hits += 1;
        }
    }
    Ok(hits as f64 / set.len() as f64)
}

/// Trains the extractor with Adam, one step per query, on gold-component
/// candidates. Early stopping follows the retriever's rule on dev accuracy.
pub fn train_low(
    train: &Corpus,
    dev: Option<&Corpus>,
    store: &EmbeddingStore,
    cfg: &Config,
) -> Result<(ExtractorModel, LossCurve)> {
    let gcfg = GraphConfig::from_config(cfg);
    let train_graphs = build_doc_graphs(train, store, &gcfg);
    let dev_graphs = dev.map(|d| build_doc_graphs(d, store, &gcfg));
    train_low_with_graphs(train, &train_graphs, dev.zip(dev_graphs.as_deref()), store, cfg)
}

pub fn train_low_with_graphs(
    train: &Corpus,
    train_graphs: &[DocGraph],
    dev: Option<(&Corpus, &[DocGraph])>,
    store: &EmbeddingStore,
    cfg: &Config,
) -> Result<(ExtractorModel, LossCurve)> {
    let mut model = ExtractorModel::from_config(train.n, store.dim(), cfg);
    let train_set = prepare_gold_queries(&model, train, train_graphs, store, true)?;
    if train_set.is_empty() {
        return Err(ExtractorError::EmptyCorpus);
    }
    let dev_set = match dev {
        Some((d, g)) => prepare_gold_queries(&model, d, g, store, false)?,
        None => Vec::new(),
    };
    let mut adam = AdamState::new(model.num_params(), cfg.lr_low);
    let mut params = model.flat_params();
    let epoch_loss = |m: &ExtractorModel| -> Result<f64> { train_set.iter().map(|pq| Ok(query_loss(m, pq)?.total)).sum() };
    let mut curve = LossCurve {
        initial: epoch_loss(&model)?,
        epochs: Vec::new(),
        dev_acc: Vec::new(),
        best_epoch: 0,
    };
    let mut stop = EarlyStopping::new(cfg.patience);
    let mut grads = vec![0.0; params.len()];
    for epoch in 1..=cfg.max_epochs {
        for pq in &train_set {
            grads.iter_mut().for_each(|g| *g = 0.0);
            query_loss_grad(&model, pq, Some(&mut grads))?;
            adam.step(&mut params, &grads)?;
            model.set_flat_params(&params);
        }
        curve.epochs.push(epoch_loss(&model)?);
        if dev_set.is_empty() {
            curve.best_epoch = epoch;
            continue;
        }
        let acc = gold_accuracy(&model, &dev_set)?;
        curve.dev_acc.push(acc);
        let dev_loss = dev_set.iter().map(|pq| Ok(query_loss(&model, pq)?.total)).sum::<Result<f64>>()?;
        if stop.observe(epoch, acc, dev_loss, &params) {
            break;
        }
    }
    if !dev_set.is_empty() {
        curve.best_epoch = stop.best_epoch();
        model.set_flat_params(&stop.into_best().expect("at least one dev epoch"));
    }
    log::debug!(
        "extractor trained: best epoch {} of {}, loss {:.4} -> {:.4}",
        curve.best_epoch,
        curve.epochs.len(),
        curve.initial,
        curve.epochs.last().copied().unwrap_or(curve.initial)
    );
    Ok((model, curve))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateScope {
    GoldComponent,
    /// Entities of the retriever's top `k` components.
    PredictedComponent { k: usize },
    WholeDocument,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedEntity {
    pub ent_id: String,
    pub comp_id: String,
    pub prob: f64,
}

/// Ranks the scoped candidates of `q`. Numeric queries keep numeric
/// candidates only.
pub fn predict_entity(
    model: &ExtractorModel,
    dg: &DocGraph,
    doc: &Document,
    q: &Query,
    store: &EmbeddingStore,
    scope: CandidateScope,
    retriever: Option<&RetrieverModel>,
) -> Result<Vec<RankedEntity>> {
    let nodes = dg.graph.nodes();
    let mut cands = match scope {
        CandidateScope::GoldComponent => {
            let comp = q
                .gold_component_id
                .as_deref()
                .ok_or_else(|| ExtractorError::MissingGold(q.query_id.clone()))?;
            component_candidates(dg, doc, &[comp])
        }
        CandidateScope::PredictedComponent { k } => {
            let r = retriever.ok_or(ExtractorError::NoRetriever)?;
            let ranked = score_components(doc, q, store, r);
            let ids: Vec<&str> = ranked.iter().take(k.max(1)).map(|s| s.comp_id.as_str()).collect();
            component_candidates(dg, doc, &ids)
        }
        CandidateScope::WholeDocument => (0..nodes.len()).collect(),
    };
    if q.answer_type == AnswerType::Numeric {
        cands.retain(|&c| doc.entity(&nodes[c].ent_id).is_some_and(|(_, m)| m.numeric));
    }
    if cands.is_empty() {
        return Err(ExtractorError::EmptyCandidates(q.query_id.clone()));
    }
    let pq = prepare_query(model, dg, doc, q, store, cands);
    Ok(rank_candidates(model, &pq)?
        .into_iter()
        .map(|(i, prob)| {
            let node = &nodes[pq.candidates[i]];
            RankedEntity {
                ent_id: node.ent_id.clone(),
                comp_id: node.comp_id.clone(),
                prob,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_examples() {
        let p = aggregate_predict(&[2.0, 0.0], &[2.0, 0.0]).unwrap();
        let e2 = 2f64.exp();
        assert!((p[0] - e2 / (e2 + 1.0)).abs() < 1e-15);
        assert!((p[0] - 0.8808).abs() < 1e-4 && (p[1] - 0.1192).abs() < 1e-4);
        assert_eq!(aggregate_predict(&[0.0; 3], &[0.0; 3]).unwrap(), vec![1.0 / 3.0; 3]);
        let shifted = aggregate_predict(&[5.0, 3.0], &[5.0, 3.0]).unwrap();
        assert!(shifted.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(matches!(aggregate_predict(&[1.0], &[1.0, 2.0]), Err(ExtractorError::LengthMismatch(1, 2))));
    }

    #[test]
    fn loss_algebra() {
        assert_eq!(consistency_loss(&[1.0, 0.0], &[0.0, 1.0]), 4.0);
        assert_eq!(consistency_loss(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
        let s = [0.4, -1.0, 2.0];
        let n = [1.5, 0.2, -0.3];
        let plain = mva_loss(&s, &n, 1, 0.0, 0.0).unwrap();
        assert_eq!(plain.total.to_bits(), plain.l1.to_bits());
        let same = mva_loss(&s, &s, 0, 0.3, 0.15).unwrap();
        assert_eq!(same.l3, 0.0);
        let full = mva_loss(&s, &n, 1, 0.3, 0.15).unwrap();
        assert!((full.total - (full.l1 + 0.3 * full.l2 + 0.15 * full.l3)).abs() < 1e-15);
    }

    #[test]
    fn score_gradients_match_finite_differences() {
        let s = vec![0.4, -1.0, 2.0, 0.1];
        let n = vec![1.5, 0.2, -0.3, 0.0];
        let (_, ds, dn) = mva_loss_grad(&s, &n, 2, 0.3, 0.15).unwrap();
        let mut x = s.clone();
        x.extend(&n);
        let analytic: Vec<f64> = ds.iter().chain(&dn).copied().collect();
        let f = |v: &[f64]| mva_loss(&v[..4], &v[4..], 2, 0.3, 0.15).unwrap().total;
        let rep = nn::finite_diff_check(f, &x, &analytic, 1e-6, 1e-6);
        assert!(rep.pass, "{rep:?}");
    }
}
