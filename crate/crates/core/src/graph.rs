//! Cross-modal entity correlation graph over one document.
//!
//! Every paragraph mention, table cell and caption mention is a node. Five
//! edge families connect them: sentence co-occurrence, co-reference, textual
//! table references (`Table 3`), table structure (cell to header/caption) and
//! paragraph-to-cell surface similarity. The graph is undirected and
//! homogeneous; when several families connect one pair the heaviest edge wins.

use std::collections::{BTreeMap, HashMap};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::corpus::{Component, Document, EntityMention};
use crate::text::SimilarityKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Paragraph,
    Cell,
    Caption,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    Cooc,
    Coref,
    Ref,
    Tstruct,
    Tpconn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub ent_id: String,
    pub comp_id: String,
    pub comp_index: usize,
    pub kind: NodeKind,
    pub surface: String,
}

/// An edge between two entity ids, before merging into a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEdge {
    pub a: String,
    pub b: String,
    pub weight: f64,
    pub kind: EdgeType,
}

impl RawEdge {
    fn new(a: &str, b: &str, weight: f64, kind: EdgeType) -> Self {
        Self {
            a: a.to_owned(),
            b: b.to_owned(),
            weight,
            kind,
        }
    }
}

pub const DEFAULT_REFERENCE_PATTERN: &str = r"(?i)\b(?:table|tab)\s*\.?\s*(\d+)\b";

#[derive(Debug, Clone)]
pub struct GraphConfig {
    w_s: f64,
    pub tp_threshold: f64,
    pub tp_similarity: SimilarityKind,
    /// Each pattern captures the referenced table number in group 1.
    pub reference_patterns: Vec<Regex>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            w_s: 1.0,
            tp_threshold: 0.75,
            tp_similarity: SimilarityKind::Levenshtein,
            reference_patterns: vec![Regex::new(DEFAULT_REFERENCE_PATTERN).expect("static regex")],
        }
    }
}

impl GraphConfig {
    pub fn with_same_sentence_weight(w_s: f64) -> Self {
        assert!(w_s > 0.0 && w_s <= 1.0, "w_s must lie in (0, 1]");
        Self {
            w_s,
            ..Self::default()
        }
    }

    pub fn from_config(cfg: &Config) -> Self {
        Self {
            tp_threshold: cfg.tp_threshold,
            tp_similarity: cfg.tp_similarity,
            ..Self::with_same_sentence_weight(cfg.w_s)
        }
    }

    pub fn w_s(&self) -> f64 {
        self.w_s
    }

    /// Adjacent-sentence weight, always half of `w_s`.
    pub fn w_t(&self) -> f64 {
        self.w_s / 2.0
    }
}

/// Co-occurrence edges within one paragraph: `w_s` for the same sentence,
/// `w_t` for adjacent sentences.
pub fn cooccurrence_edges(c: &Component, cfg: &GraphConfig) -> Vec<RawEdge> {
    let mut out = Vec::new();
    if c.is_table() {
        return out;
    }
    for (i, a) in c.entities.iter().enumerate() {
        for b in &c.entities[i + 1..] {
            let w = match (a.sent_idx - b.sent_idx).abs() {
                0 => cfg.w_s(),
                1 => cfg.w_t(),
                _ => continue,
            };
            out.push(RawEdge::new(&a.ent_id, &b.ent_id, w, EdgeType::Cooc));
        }
    }
    out
}

fn initials_match(long_form: &str, letters: &[char]) -> bool {
    let words: Vec<&str> = long_form.split_whitespace().collect();
    words.len() == letters.len()
        && words.iter().zip(letters).all(|(w, &l)| {
            let first = w.chars().next().expect("split_whitespace yields nonempty words");
            first.is_uppercase() && first.to_uppercase().eq(std::iter::once(l))
        })
}

/// Abbreviation letters of a mention such as `GAT`, if it looks like one.
fn abbreviation_letters(surface: &str) -> Option<Vec<char>> {
    if surface.contains(char::is_whitespace) || !surface.chars().any(char::is_uppercase) {
        return None;
    }
    let letters: Vec<char> = surface
        .chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_uppercase)
        .collect();
    (2..=10).contains(&letters.len()).then_some(letters)
}

fn abbreviation_edges(c: &Component, out: &mut Vec<RawEdge>) {
    for short in &c.entities {
        let (start, end) = short.span;
        let sentence = &c.sentences[short.sent_idx as usize];
        if start == 0 || end >= sentence.len() || sentence[start - 1] != "(" || sentence[end] != ")" {
            continue;
        }
        let Some(letters) = abbreviation_letters(&short.surface) else {
            continue;
        };
        for long in &c.entities {
            if long.sent_idx == short.sent_idx
                && long.span.1 == start - 1
                && initials_match(&long.surface, &letters)
            {
                out.push(RawEdge::new(&long.ent_id, &short.ent_id, 1.0, EdgeType::Coref));
            }
        }
    }
}

/// Co-reference edges (weight 1). Annotated clusters become cliques; without
/// annotations, `Long Form (LF)` abbreviations and exact casefolded matches of
/// non-numeric surfaces are linked.
pub fn coref_edges(doc: &Document) -> Vec<RawEdge> {
    let mut out = Vec::new();
    if let Some(clusters) = &doc.coref_clusters {
        for cluster in clusters {
            for (i, a) in cluster.iter().enumerate() {
                for b in &cluster[i + 1..] {
                    if a != b {
                        out.push(RawEdge::new(a, b, 1.0, EdgeType::Coref));
                    }
                }
            }
        }
        return out;
    }
    for c in doc.components.iter().filter(|c| !c.is_table()) {
        abbreviation_edges(c, &mut out);
    }
    let mut groups: BTreeMap<String, Vec<&EntityMention>> = BTreeMap::new();
    let mut order = Vec::new();
    for m in doc.components.iter().flat_map(Component::all_entities) {
        if m.numeric {
            continue;
        }
        let key = m.surface.trim().to_lowercase();
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(m);
    }
    for key in order {
        let group = &groups[&key];
        for (i, a) in group.iter().enumerate() {
            for b in &group[i + 1..] {
                out.push(RawEdge::new(&a.ent_id, &b.ent_id, 1.0, EdgeType::Coref));
            }
        }
    }
    out
}

fn cell_ids(c: &Component) -> impl Iterator<Item = &str> {
    c.table
        .iter()
        .flat_map(|t| t.cells.iter().map(|cell| cell.entity_id.as_str()))
}

/// Every mention in a sentence that names `Table k` links to every cell of
/// table `k`.
pub fn reference_edges(doc: &Document, cfg: &GraphConfig) -> Vec<RawEdge> {
    let mut out = Vec::new();
    for c in doc.components.iter().filter(|c| !c.is_table()) {
        for (s_idx, sentence) in c.sentences.iter().enumerate() {
            let text = sentence.join(" ");
            let mut numbers: Vec<u32> = cfg
                .reference_patterns
                .iter()
                .flat_map(|re| re.captures_iter(&text))
                .filter_map(|cap| cap.get(1)?.as_str().parse().ok())
                .collect();
            numbers.dedup();
            for k in numbers {
                let Some(table) = doc.table_by_number(k) else {
                    continue;
                };
                for m in c.entities.iter().filter(|m| m.sent_idx == s_idx as i64) {
                    for cell in cell_ids(table) {
                        out.push(RawEdge::new(&m.ent_id, cell, 1.0, EdgeType::Ref));
                    }
                }
            }
        }
    }
    out
}

/// Each non-header cell links to the row headers of its row, the column
/// headers of its column and every caption mention.
pub fn table_structure_edges(c: &Component) -> Vec<RawEdge> {
    let mut out = Vec::new();
    let Some(t) = &c.table else {
        return out;
    };
    for cell in t.cells.iter().filter(|c| !c.is_header()) {
        for h in &t.cells {
            let linked = (h.row == cell.row && h.is_row_header) || (h.col == cell.col && h.is_col_header);
            if linked {
                out.push(RawEdge::new(&cell.entity_id, &h.entity_id, 1.0, EdgeType::Tstruct));
            }
        }
        for m in &t.caption_entities {
            out.push(RawEdge::new(&cell.entity_id, &m.ent_id, 1.0, EdgeType::Tstruct));
        }
    }
    out
}

/// Paragraph mention to table cell edges weighted by surface similarity,
/// kept when the similarity reaches the threshold.
pub fn table_paragraph_edges(doc: &Document, cfg: &GraphConfig) -> Vec<RawEdge> {
    let cells: Vec<(&str, &str)> = doc
        .components
        .iter()
        .filter_map(|c| c.table.as_ref())
        .flat_map(|t| t.cells.iter().map(|c| (c.entity_id.as_str(), c.text.as_str())))
        .collect();
    let mut out = Vec::new();
    for c in doc.components.iter().filter(|c| !c.is_table()) {
        for p in &c.entities {
            for &(cell_id, text) in &cells {
                let w = cfg.tp_similarity.eval(&p.surface, text);
                if w > 0.0 && w >= cfg.tp_threshold {
                    out.push(RawEdge::new(&p.ent_id, cell_id, w, EdgeType::Tpconn));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeInfo {
    pub weight: f64,
    pub kind: EdgeType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityGraph {
    nodes: Vec<Node>,
    index: HashMap<String, usize>,
    /// Keyed by `(min, max)` node index.
    edges: BTreeMap<(usize, usize), EdgeInfo>,
    neighbors: Vec<Vec<usize>>,
}

impl EntityGraph {
    fn with_nodes(nodes: Vec<Node>) -> Self {
        let index = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.ent_id.clone(), i))
            .collect();
        let neighbors = vec![Vec::new(); nodes.len()];
        Self {
            nodes,
            index,
            edges: BTreeMap::new(),
            neighbors,
        }
    }

    /// Adds an edge unless it is a self-loop, it has no weight, or a heavier
    /// edge already joins the pair.
    fn merge(&mut self, e: &RawEdge) {
        let (Some(&a), Some(&b)) = (self.index.get(&e.a), self.index.get(&e.b)) else {
            log::warn!("dropping edge {} -- {} with unknown endpoint", e.a, e.b);
            return;
        };
        if a == b || e.weight <= 0.0 {
            return;
        }
        let key = (a.min(b), a.max(b));
        let info = EdgeInfo {
            weight: e.weight.min(1.0),
            kind: e.kind,
        };
        match self.edges.get(&key) {
            Some(old) if old.weight >= info.weight => {}
            _ => {
                self.edges.insert(key, info);
            }
        }
    }

    fn finish(mut self) -> Self {
        for &(a, b) in self.edges.keys() {
            self.neighbors[a].push(b);
            self.neighbors[b].push(a);
        }
        for n in &mut self.neighbors {
            n.sort_unstable();
        }
        self
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_index(&self, ent_id: &str) -> Option<usize> {
        self.index.get(ent_id).copied()
    }

    /// Neighbors of node `i` in ascending index order.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn edge(&self, a: usize, b: usize) -> Option<EdgeInfo> {
        self.edges.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn weight(&self, a: usize, b: usize) -> f64 {
        self.edge(a, b).map_or(0.0, |e| e.weight)
    }

    /// Edges as `(u, v, info)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, EdgeInfo)> + '_ {
        self.edges.iter().map(|(&(a, b), &e)| (a, b, e))
    }

    /// The same graph with one extra edge, used by monotonicity checks.
    pub fn with_edge(&self, a: usize, b: usize, weight: f64, kind: EdgeType) -> Self {
        let mut g = Self::with_nodes(self.nodes.clone());
        g.edges = self.edges.clone();
        let e = RawEdge::new(&self.nodes[a].ent_id, &self.nodes[b].ent_id, weight, kind);
        g.merge(&e);
        g.finish()
    }

    pub fn dump(&self) -> GraphDump {
        GraphDump {
            nodes: self
                .nodes
                .iter()
                .map(|n| DumpNode {
                    id: n.ent_id.clone(),
                    comp_id: n.comp_id.clone(),
                    kind: n.kind,
                })
                .collect(),
            edges: self
                .edges()
                .map(|(a, b, e)| DumpEdge {
                    u: self.nodes[a].ent_id.clone(),
                    v: self.nodes[b].ent_id.clone(),
                    w: e.weight,
                    kind: e.kind,
                })
                .collect(),
        }
    }
}

/// Debug/fixture view of a graph: `{nodes: [...], edges: [{u, v, w, type}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    pub nodes: Vec<DumpNode>,
    pub edges: Vec<DumpEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpNode {
    pub id: String,
    pub comp_id: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpEdge {
    pub u: String,
    pub v: String,
    pub w: f64,
    #[serde(rename = "type")]
    pub kind: EdgeType,
}

fn document_nodes(doc: &Document) -> Vec<Node> {
    let mut nodes = Vec::with_capacity(doc.entity_count());
    for (ci, c) in doc.components.iter().enumerate() {
        let node = |m: &EntityMention, kind| Node {
            ent_id: m.ent_id.clone(),
            comp_id: c.comp_id.clone(),
            comp_index: ci,
            kind,
            surface: m.surface.clone(),
        };
        let body_kind = if c.is_table() { NodeKind::Cell } else { NodeKind::Paragraph };
        nodes.extend(c.entities.iter().map(|m| node(m, body_kind)));
        if let Some(t) = &c.table {
            nodes.extend(t.caption_entities.iter().map(|m| node(m, NodeKind::Caption)));
        }
    }
    nodes
}

pub fn build_graph(doc: &Document, cfg: &GraphConfig) -> EntityGraph {
    let mut g = EntityGraph::with_nodes(document_nodes(doc));
    let mut raw: Vec<RawEdge> = doc
        .components
        .iter()
        .flat_map(|c| cooccurrence_edges(c, cfg))
        .collect();
    raw.extend(coref_edges(doc));
    raw.extend(reference_edges(doc, cfg));
    raw.extend(doc.components.iter().flat_map(table_structure_edges));
    raw.extend(table_paragraph_edges(doc, cfg));
    for e in &raw {
        g.merge(e);
    }
    g.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ComponentKind, TableCell, TableStructure};

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn mention(id: &str, tokens: &[String], sent: i64, start: usize, end: usize) -> EntityMention {
        let surface = tokens[start..end].join(" ");
        EntityMention {
            numeric: crate::corpus::is_numeric_surface(&surface),
            ent_id: id.into(),
            surface,
            sent_idx: sent,
            span: (start, end),
        }
    }

    /// One paragraph; `spans` lists `(id, sentence, start, end)`.
    fn paragraph(id: &str, sentences: &[&str], spans: &[(&str, usize, usize, usize)]) -> Component {
        let sentences: Vec<Vec<String>> = sentences.iter().map(|s| words(s)).collect();
        Component {
            comp_id: id.into(),
            kind: ComponentKind::Paragraph,
            entities: spans
                .iter()
                .map(|&(e, s, a, b)| mention(e, &sentences[s], s as i64, a, b))
                .collect(),
            sentences,
            table: None,
            table_number: None,
        }
    }

    /// 2x2 table: row 0 holds column headers, `caption` gets one entity.
    fn table(id: &str, number: u32, texts: [&str; 4], caption: Option<&str>) -> Component {
        let mut cells = Vec::new();
        let mut entities = Vec::new();
        for (i, text) in texts.iter().enumerate() {
            let (row, col) = (i / 2, i % 2);
            let ent = format!("{id}c{row}{col}");
            cells.push(TableCell {
                row,
                col,
                text: text.to_string(),
                is_row_header: false,
                is_col_header: row == 0,
                entity_id: ent.clone(),
            });
            entities.push(EntityMention {
                ent_id: ent,
                surface: text.to_string(),
                sent_idx: -1,
                span: (0, 1),
                numeric: crate::corpus::is_numeric_surface(text),
            });
        }
        let caption_tokens = caption.map(words).unwrap_or_default();
        let caption_entities = caption
            .map(|_| vec![mention(&format!("{id}cap"), &caption_tokens, -1, 0, 1)])
            .unwrap_or_default();
        Component {
            comp_id: id.into(),
            kind: ComponentKind::Table,
            sentences: vec![],
            entities,
            table: Some(TableStructure {
                n_rows: 2,
                n_cols: 2,
                cells,
                caption: caption_tokens,
                caption_entities,
            }),
            table_number: Some(number),
        }
    }

    fn doc(components: Vec<Component>) -> Document {
        Document {
            doc_id: "d".into(),
            components,
            queries: vec![],
            coref_clusters: None,
        }
    }

    #[test]
    fn cooccurrence_weights() {
        let cfg = GraphConfig::default();
        let p = paragraph("p", &["a b", "c", "d"], &[("a", 0, 0, 1), ("b", 0, 1, 2), ("c", 1, 0, 1), ("d", 2, 0, 1)]);
        let edges = cooccurrence_edges(&p, &cfg);
        let w = |x: &str, y: &str| edges.iter().find(|e| e.a == x && e.b == y).map(|e| e.weight);
        assert_eq!(w("a", "b"), Some(1.0));
        assert_eq!(w("a", "c"), Some(0.5));
        assert_eq!(w("a", "d"), None);
        assert_eq!(w("c", "d"), Some(0.5));
        assert_eq!(cfg.w_t(), cfg.w_s() / 2.0);
        assert_eq!(GraphConfig::with_same_sentence_weight(0.8).w_t(), 0.4);
    }

    #[test]
    fn coref_clusters_become_cliques() {
        let p = paragraph("p", &["x y z"], &[("e1", 0, 0, 1), ("e2", 0, 1, 2), ("e3", 0, 2, 3)]);
        let mut d = doc(vec![p]);
        d.coref_clusters = Some(vec![vec!["e1".into(), "e2".into(), "e3".into()]]);
        assert_eq!(coref_edges(&d).len(), 3);
    }

    #[test]
    fn coref_abbreviation_and_exact_match() {
        let p = paragraph(
            "p",
            &["We use Gated Attention Transformer ( GAT ) here", "BERT helps", "bert also helps", "GAT wins"],
            &[("long", 0, 2, 5), ("short", 0, 6, 7), ("b1", 1, 0, 1), ("b2", 2, 0, 1), ("g2", 3, 0, 1)],
        );
        let edges = coref_edges(&doc(vec![p]));
        let has = |x: &str, y: &str| edges.iter().any(|e| (e.a == x && e.b == y) || (e.a == y && e.b == x));
        assert!(has("long", "short"));
        assert!(has("b1", "b2"));
        assert!(has("short", "g2"));
        assert!(!has("long", "g2"));
        assert_eq!(edges.len(), 3);
    }

    #[test]
    fn abbreviation_needs_matching_initials() {
        let p = paragraph(
            "p",
            &["Graph Convolution Network ( GAT )", "graph attention network ( GAT )"],
            &[("l1", 0, 0, 3), ("s1", 0, 4, 5), ("l2", 1, 0, 3), ("s2", 1, 4, 5)],
        );
        let edges = coref_edges(&doc(vec![p]));
        // Only the exact match between the two `GAT` mentions survives.
        assert_eq!(edges.len(), 1);
        assert_eq!((edges[0].a.as_str(), edges[0].b.as_str()), ("s1", "s2"));
    }

    #[test]
    fn numeric_surfaces_do_not_corefer() {
        let p = paragraph("p", &["91.2 and 91.2"], &[("n1", 0, 0, 1), ("n2", 0, 2, 3)]);
        assert!(coref_edges(&doc(vec![p])).is_empty());
    }

    #[test]
    fn references_link_to_cells() {
        let cfg = GraphConfig::default();
        let p = paragraph(
            "p",
            &["results in Table 3 for gat", "see Table 7 for cora", "and tab. 2 for citeseer"],
            &[("e", 0, 4, 5), ("f", 1, 4, 5), ("g", 2, 4, 5)],
        );
        let t3 = table("t3", 3, ["a", "b", "c", "d"], None);
        let t2 = table("t2", 2, ["w", "x", "y", "z"], Some("cap"));
        let edges = reference_edges(&doc(vec![p, t3, t2]), &cfg);
        let from = |id: &str| edges.iter().filter(|e| e.a == id).count();
        assert_eq!(from("e"), 4);
        assert_eq!(from("f"), 0);
        assert_eq!(from("g"), 4);
        assert!(edges.iter().filter(|e| e.a == "g").all(|e| e.b.starts_with("t2c")));
    }

    #[test]
    fn table_structure() {
        let t = table("t", 1, ["Model", "Acc", "GAT", "91.2"], Some("Cora"));
        let edges = table_structure_edges(&t);
        let has = |x: &str, y: &str| edges.iter().any(|e| e.a == x && e.b == y);
        assert!(has("tc11", "tc01"));
        assert!(has("tc10", "tc00"));
        assert!(has("tc11", "tcap") && has("tc10", "tcap"));
        assert!(!edges.iter().any(|e| e.a.starts_with("tc0")));
        assert_eq!(edges.len(), 4);
    }

    #[test]
    fn table_paragraph_threshold() {
        let cfg = GraphConfig::default();
        let p = paragraph("p", &["abcde abcdx abxyz"], &[("same", 0, 0, 1), ("close", 0, 1, 2), ("far", 0, 2, 3)]);
        let t = table("t", 1, ["abcde", "q", "r", "s"], None);
        let edges = table_paragraph_edges(&doc(vec![p, t]), &cfg);
        let w = |x: &str| edges.iter().find(|e| e.a == x && e.b == "tc00").map(|e| e.weight);
        assert_eq!(w("same"), Some(1.0));
        assert_eq!(w("close"), Some(0.8));
        assert_eq!(w("far"), None); // similarity 0.4
    }

    #[test]
    fn max_merge_keeps_heaviest_edge() {
        let cfg = GraphConfig::default();
        // `abcdx` and `abcde` corefer by annotation (1.0) and are similar (0.8).
        let p = paragraph("p", &["abcdx"], &[("pe", 0, 0, 1)]);
        let t = table("t", 1, ["abcde", "q", "r", "s"], None);
        let mut d = doc(vec![p, t]);
        d.coref_clusters = Some(vec![vec!["pe".into(), "tc00".into()]]);
        let g = build_graph(&d, &cfg);
        let (a, b) = (g.node_index("pe").unwrap(), g.node_index("tc00").unwrap());
        assert_eq!(g.edge(a, b), Some(EdgeInfo { weight: 1.0, kind: EdgeType::Coref }));
    }

    #[test]
    fn text_only_documents_have_text_edges_only() {
        let p = paragraph("p", &["BERT uses Table 1", "bert"], &[("a", 0, 0, 1), ("b", 1, 0, 1)]);
        let g = build_graph(&doc(vec![p]), &GraphConfig::default());
        assert!(g.edges().all(|(_, _, e)| matches!(e.kind, EdgeType::Cooc | EdgeType::Coref)));
        assert_eq!(g.node_count(), 2);
    }
}
