//! Document model and the corpus JSON loader.
//!
//! A corpus is a header `{"n": N, "documents": [...]}`. Every query in the
//! corpus carries exactly `N - 1` elements. Documents are ordered sequences of
//! paragraph and table components; table cells are first-class entities.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid corpus at `{id}`: {reason}")]
    Validation { id: String, reason: String },
    #[error("entity `{0}` is not a paragraph entity")]
    NotParagraphEntity(String),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

fn invalid(id: impl Into<String>, reason: impl Into<String>) -> CorpusError {
    CorpusError::Validation {
        id: id.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Paragraph,
    Table,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerType {
    #[default]
    Any,
    Numeric,
}

/// An annotated mention. Paragraph mentions point into a sentence; table
/// cells and caption mentions use `sent_idx = -1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMention {
    pub ent_id: String,
    pub surface: String,
    pub sent_idx: i64,
    /// Token range `[start, end)`.
    pub span: (usize, usize),
    /// Recomputed from `surface` during validation.
    #[serde(default)]
    pub numeric: bool,
}

impl EntityMention {
    pub fn is_paragraph_entity(&self) -> bool {
        self.sent_idx >= 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub row: usize,
    pub col: usize,
    pub text: String,
    #[serde(default)]
    pub is_row_header: bool,
    #[serde(default)]
    pub is_col_header: bool,
    pub entity_id: String,
}

impl TableCell {
    pub fn is_header(&self) -> bool {
        self.is_row_header || self.is_col_header
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableStructure {
    pub n_rows: usize,
    pub n_cols: usize,
    pub cells: Vec<TableCell>,
    #[serde(default)]
    pub caption: Vec<String>,
    #[serde(default)]
    pub caption_entities: Vec<EntityMention>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub comp_id: String,
    pub kind: ComponentKind,
    #[serde(default)]
    pub sentences: Vec<Vec<String>>,
    /// Paragraph mentions, or one mention per non-empty cell for tables.
    #[serde(default)]
    pub entities: Vec<EntityMention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableStructure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_number: Option<u32>,
}

impl Component {
    /// Component mentions followed by caption mentions, in document order.
    pub fn all_entities(&self) -> impl Iterator<Item = &EntityMention> {
        let caption = self
            .table
            .as_ref()
            .map(|t| t.caption_entities.as_slice())
            .unwrap_or(&[]);
        self.entities.iter().chain(caption.iter())
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
            + self
                .table
                .as_ref()
                .map_or(0, |t| t.caption_entities.len())
    }

    pub fn is_table(&self) -> bool {
        self.kind == ComponentKind::Table
    }

    /// Whitespace-joined component text: sentences for paragraphs, the
    /// flattened table for tables.
    pub fn text(&self) -> String {
        match &self.table {
            Some(t) => flatten_table(t).join(" "),
            None => self
                .sentences
                .iter()
                .map(|s| s.join(" "))
                .collect::<Vec<_>>()
                .join(" "),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub elements: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_template: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_component_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_entity_id: Option<String>,
    #[serde(default)]
    pub answer_type: AnswerType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub components: Vec<Component>,
    #[serde(default)]
    pub queries: Vec<Query>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coref_clusters: Option<Vec<Vec<String>>>,
}

impl Document {
    pub fn component(&self, comp_id: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.comp_id == comp_id)
    }

    pub fn component_index(&self, comp_id: &str) -> Option<usize> {
        self.components.iter().position(|c| c.comp_id == comp_id)
    }

    /// Looks up a mention anywhere in the document, including captions.
    pub fn entity(&self, ent_id: &str) -> Option<(&Component, &EntityMention)> {
        self.components.iter().find_map(|c| {
            c.all_entities()
                .find(|e| e.ent_id == ent_id)
                .map(|e| (c, e))
        })
    }

    pub fn entity_count(&self) -> usize {
        self.components.iter().map(Component::entity_count).sum()
    }

    /// The component carrying a given `Table k` label.
    pub fn table_by_number(&self, number: u32) -> Option<&Component> {
        self.components
            .iter()
            .find(|c| c.is_table() && c.table_number == Some(number))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    /// Relation arity; queries carry `n - 1` elements.
    pub n: usize,
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn query_count(&self) -> usize {
        self.documents.iter().map(|d| d.queries.len()).sum()
    }

    /// Checks every invariant and recomputes derived fields.
    pub fn validate(&mut self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("n", format!("N must be at least 2, got {}", self.n)));
        }
        let mut doc_ids = HashSet::new();
        for doc in &mut self.documents {
            if !doc_ids.insert(doc.doc_id.clone()) {
                return Err(invalid(&doc.doc_id, "duplicate document id"));
            }
            validate_document(doc, self.n)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("corpus serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Parses and validates corpus JSON text.
pub fn parse_corpus(text: &str) -> Result<Corpus> {
    let mut corpus: Corpus = serde_json::from_str(text).map_err(|e| CorpusError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    corpus.validate()?;
    Ok(corpus)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text)
}

/// Locale-independent numeric test: drops `%` and thousands separators and
/// ignores anything after a `±`.
pub fn is_numeric_surface(surface: &str) -> bool {
    let head = surface.split('±').next().unwrap_or("");
    let cleaned: String = head
        .chars()
        .filter(|c| !matches!(c, '%' | ',') && !c.is_whitespace())
        .collect();
    cleaned.chars().any(|c| c.is_ascii_digit())
        && cleaned.parse::<f64>().map_or(false, f64::is_finite)
}

/// Row-major cell tokens followed by caption tokens.
pub fn flatten_table(table: &TableStructure) -> Vec<String> {
    let mut cells: Vec<&TableCell> = table.cells.iter().collect();
    cells.sort_by_key(|c| (c.row, c.col));
    cells
        .iter()
        .flat_map(|c| c.text.split_whitespace().map(str::to_owned))
        .chain(table.caption.iter().cloned())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SentenceAdjacency {
    Same,
    Adjacent,
    Far,
}

pub fn sentence_adjacency(
    component: &Component,
    a: &EntityMention,
    b: &EntityMention,
) -> Result<SentenceAdjacency> {
    for e in [a, b] {
        if component.is_table() || !e.is_paragraph_entity() {
            return Err(CorpusError::NotParagraphEntity(e.ent_id.clone()));
        }
    }
    Ok(match (a.sent_idx - b.sent_idx).abs() {
        0 => SentenceAdjacency::Same,
        1 => SentenceAdjacency::Adjacent,
        _ => SentenceAdjacency::Far,
    })
}

fn validate_document(doc: &mut Document, n: usize) -> Result<()> {
    let mut comp_ids = HashSet::new();
    let mut ent_ids: HashMap<String, String> = HashMap::new();
    let mut table_numbers = HashSet::new();

    for comp in &mut doc.components {
        if !comp_ids.insert(comp.comp_id.clone()) {
            return Err(invalid(&comp.comp_id, "duplicate component id"));
        }
        match (comp.kind, comp.table.is_some()) {
            (ComponentKind::Table, false) => {
                return Err(invalid(&comp.comp_id, "table component without table structure"))
            }
            (ComponentKind::Paragraph, true) => {
                return Err(invalid(&comp.comp_id, "paragraph component with table structure"))
            }
            _ => {}
        }
        if let Some(k) = comp.table_number {
            if !comp.is_table() {
                return Err(invalid(&comp.comp_id, "table_number on a paragraph"));
            }
            if k == 0 {
                return Err(invalid(&comp.comp_id, "table_number must be positive"));
            }
            if !table_numbers.insert(k) {
                return Err(invalid(&comp.comp_id, format!("duplicate table number {k}")));
            }
        }
        match comp.kind {
            ComponentKind::Paragraph => validate_paragraph(comp)?,
            ComponentKind::Table => validate_table(comp)?,
        }
        for e in comp.all_entities() {
            if ent_ids
                .insert(e.ent_id.clone(), comp.comp_id.clone())
                .is_some()
            {
                return Err(invalid(&e.ent_id, "duplicate entity id"));
            }
        }
        for e in comp.entities.iter_mut() {
            e.numeric = is_numeric_surface(&e.surface);
        }
        if let Some(t) = comp.table.as_mut() {
            for e in t.caption_entities.iter_mut() {
                e.numeric = is_numeric_surface(&e.surface);
            }
        }
    }

    if let Some(clusters) = &doc.coref_clusters {
        for id in clusters.iter().flatten() {
            if !ent_ids.contains_key(id) {
                return Err(invalid(id, "coreference cluster references unknown entity"));
            }
        }
    }

    let mut query_ids = HashSet::new();
    for q in &doc.queries {
        if !query_ids.insert(q.query_id.clone()) {
            return Err(invalid(&q.query_id, "duplicate query id"));
        }
        if q.elements.len() != n - 1 {
            return Err(invalid(
                &q.query_id,
                format!("expected {} query elements, got {}", n - 1, q.elements.len()),
            ));
        }
        if let Some(c) = &q.gold_component_id {
            if !comp_ids.contains(c) {
                return Err(invalid(c, "gold component not found in document"));
            }
        }
        if let Some(e) = &q.gold_entity_id {
            let Some(owner) = ent_ids.get(e) else {
                return Err(invalid(e, "gold entity not found in document"));
            };
            if let Some(c) = &q.gold_component_id {
                if owner != c {
                    return Err(invalid(e, format!("gold entity lies outside gold component `{c}`")));
                }
            }
        }
    }
    Ok(())
}

fn validate_paragraph(comp: &Component) -> Result<()> {
    for e in &comp.entities {
        if e.sent_idx < 0 || e.sent_idx as usize >= comp.sentences.len() {
            return Err(invalid(&e.ent_id, "sentence index out of range"));
        }
        let sentence = &comp.sentences[e.sent_idx as usize];
        check_span(e, sentence)?;
    }
    Ok(())
}

fn check_span(e: &EntityMention, tokens: &[String]) -> Result<()> {
    let (start, end) = e.span;
    if start >= end || end > tokens.len() {
        return Err(invalid(&e.ent_id, format!("span [{start}, {end}) out of range")));
    }
    let joined = tokens[start..end].join(" ");
    if joined != e.surface {
        return Err(invalid(
            &e.ent_id,
            format!("surface `{}` does not match span text `{joined}`", e.surface),
        ));
    }
    Ok(())
}

fn validate_table(comp: &Component) -> Result<()> {
    let table = comp.table.as_ref().expect("checked by caller");
    if table.n_rows == 0 || table.n_cols == 0 {
        return Err(invalid(&comp.comp_id, "table dimensions must be positive"));
    }
    let by_id: HashMap<&str, &EntityMention> = comp
        .entities
        .iter()
        .map(|e| (e.ent_id.as_str(), e))
        .collect();
    let mut positions = HashSet::new();
    let mut used = HashSet::new();
    for cell in &table.cells {
        if cell.row >= table.n_rows || cell.col >= table.n_cols {
            return Err(invalid(
                &cell.entity_id,
                format!("cell ({}, {}) outside {}x{} table", cell.row, cell.col, table.n_rows, table.n_cols),
            ));
        }
        if !positions.insert((cell.row, cell.col)) {
            return Err(invalid(
                &comp.comp_id,
                format!("two cells at ({}, {})", cell.row, cell.col),
            ));
        }
        if cell.text.trim().is_empty() {
            return Err(invalid(&cell.entity_id, "empty cells must be omitted"));
        }
        let Some(mention) = by_id.get(cell.entity_id.as_str()) else {
            return Err(invalid(&cell.entity_id, "cell entity not registered in component"));
        };
        if mention.surface != cell.text {
            return Err(invalid(&cell.entity_id, "cell entity surface differs from cell text"));
        }
        if !used.insert(cell.entity_id.as_str()) {
            return Err(invalid(&cell.entity_id, "entity shared by two cells"));
        }
    }
    for e in &comp.entities {
        if e.sent_idx != -1 {
            return Err(invalid(&e.ent_id, "table entities use sent_idx -1"));
        }
        if !used.contains(e.ent_id.as_str()) {
            return Err(invalid(&e.ent_id, "table entity is not bound to a cell"));
        }
    }
    for e in &table.caption_entities {
        if e.sent_idx != -1 {
            return Err(invalid(&e.ent_id, "caption entities use sent_idx -1"));
        }
        check_span(e, &table.caption)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(row: usize, col: usize, text: &str) -> TableCell {
        TableCell {
            row,
            col,
            text: text.into(),
            is_row_header: false,
            is_col_header: false,
            entity_id: format!("c{row}{col}"),
        }
    }

    fn table(cells: Vec<TableCell>, caption: &[&str]) -> TableStructure {
        TableStructure {
            n_rows: 2,
            n_cols: 2,
            cells,
            caption: caption.iter().map(|s| s.to_string()).collect(),
            caption_entities: vec![],
        }
    }

    #[test]
    fn flatten_is_row_major_then_caption() {
        let t = table(
            vec![cell(1, 1, "d"), cell(0, 0, "a"), cell(1, 0, "c"), cell(0, 1, "b")],
            &["t"],
        );
        assert_eq!(flatten_table(&t), ["a", "b", "c", "d", "t"]);
    }

    #[test]
    fn flatten_empty_caption_and_sparse_tables() {
        let t = table(vec![cell(0, 0, "a"), cell(0, 1, "b")], &[]);
        assert_eq!(flatten_table(&t), ["a", "b"]);
        let t = table(vec![cell(0, 0, "a"), cell(0, 1, "b"), cell(1, 0, "c")], &["t"]);
        assert_eq!(flatten_table(&t), ["a", "b", "c", "t"]);
    }

    #[test]
    fn numeric_surfaces() {
        for s in ["91.2", "1,024", "45%", "83.1±0.4", "-3", "1e-3"] {
            assert!(is_numeric_surface(s), "{s}");
        }
        for s in ["BERT", "inf", "NaN", "", "v2.0b", "%"] {
            assert!(!is_numeric_surface(s), "{s}");
        }
    }

    fn mention(id: &str, sent: i64) -> EntityMention {
        EntityMention {
            ent_id: id.into(),
            surface: "x".into(),
            sent_idx: sent,
            span: (0, 1),
            numeric: false,
        }
    }

    #[test]
    fn adjacency_classes() {
        let comp = Component {
            comp_id: "p".into(),
            kind: ComponentKind::Paragraph,
            sentences: vec![vec!["x".into()]; 5],
            entities: vec![],
            table: None,
            table_number: None,
        };
        let adj = |a, b| sentence_adjacency(&comp, &mention("a", a), &mention("b", b)).unwrap();
        assert_eq!(adj(3, 3), SentenceAdjacency::Same);
        assert_eq!(adj(3, 4), SentenceAdjacency::Adjacent);
        assert_eq!(adj(0, 2), SentenceAdjacency::Far);
        assert!(matches!(
            sentence_adjacency(&comp, &mention("a", -1), &mention("b", 0)),
            Err(CorpusError::NotParagraphEntity(id)) if id == "a"
        ));
    }

    #[test]
    fn parse_error_reports_position() {
        let err = parse_corpus("{\"n\": 3,\n \"documents\": [oops]}").unwrap_err();
        match err {
            CorpusError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mixed_arity_is_rejected() {
        let text = r#"{"n": 3, "documents": [{"doc_id": "d", "components": [
            {"comp_id": "p", "kind": "paragraph", "sentences": [["a", "b"]],
             "entities": [{"ent_id": "e", "surface": "a", "sent_idx": 0, "span": [0, 1]}]}],
            "queries": [{"query_id": "q", "elements": ["a"]}]}]}"#;
        match parse_corpus(text).unwrap_err() {
            CorpusError::Validation { id, .. } => assert_eq!(id, "q"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
