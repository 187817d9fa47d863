//! Normalized string similarities and lexical ranking baselines.
//!
//! All similarities casefold their inputs and compare Unicode scalar values.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Levenshtein, longest-common-substring and longest-common-subsequence
/// similarities, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LexicalFeatureVec {
    pub leven: f64,
    pub lcstr: f64,
    pub lcseq: f64,
}

impl LexicalFeatureVec {
    pub const ZERO: Self = Self {
        leven: 0.0,
        lcstr: 0.0,
        lcseq: 0.0,
    };

    pub fn to_array(self) -> [f64; 3] {
        [self.leven, self.lcstr, self.lcseq]
    }

    /// Elementwise maximum.
    pub fn max(self, other: Self) -> Self {
        Self {
            leven: self.leven.max(other.leven),
            lcstr: self.lcstr.max(other.lcstr),
            lcseq: self.lcseq.max(other.lcseq),
        }
    }
}

fn fold(s: &str) -> Vec<char> {
    s.chars().flat_map(char::to_lowercase).collect()
}

/// One DP row of `len` cells, kept on the stack for short inputs.
fn with_row<R>(len: usize, f: impl FnOnce(&mut [u32]) -> R) -> R {
    const STACK: usize = 32;
    if len <= STACK {
        f(&mut [0u32; STACK][..len])
    } else {
        f(&mut vec![0; len])
    }
}

/// Bitmask of the positions in `pattern` (at most 64 chars) that hold `c`.
fn eq_mask(pattern: &[char], c: char) -> u64 {
    pattern
        .iter()
        .enumerate()
        .fold(0, |m, (i, &p)| m | (u64::from(p == c) << i))
}

/// The shorter input first, when it fits in one machine word.
fn bit_pattern<'s>(a: &'s [char], b: &'s [char]) -> Option<(&'s [char], &'s [char])> {
    let (p, t) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    (!p.is_empty() && p.len() <= 64).then_some((p, t))
}

pub fn levenshtein_distance(a: &[char], b: &[char]) -> usize {
    if a.is_empty() || b.is_empty() {
        return a.len().max(b.len());
    }
    match bit_pattern(a, b) {
        Some((p, t)) => levenshtein_bits(p, t),
        None => levenshtein_dp(a, b),
    }
}

/// Myers' bit-vector edit distance in Hyyrö's formulation.
fn levenshtein_bits(p: &[char], t: &[char]) -> usize {
    let last = 1u64 << (p.len() - 1);
    let (mut pv, mut mv) = (!0u64, 0u64);
    let mut score = p.len();
    for &c in t {
        let eq = eq_mask(p, c);
        let xv = eq | mv;
        let xh = ((eq & pv).wrapping_add(pv) ^ pv) | eq;
        let ph = mv | !(xh | pv);
        let mh = pv & xh;
        if ph & last != 0 {
            score += 1;
        } else if mh & last != 0 {
            score -= 1;
        }
        let ph = (ph << 1) | 1;
        let mh = mh << 1;
        pv = mh | !(xv | ph);
        mv = ph & xv;
    }
    score
}

fn levenshtein_dp(a: &[char], b: &[char]) -> usize {
    with_row(b.len() + 1, |row| {
        for (j, cell) in (0..).zip(row.iter_mut()) {
            *cell = j;
        }
        for (i, ca) in (1..).zip(a) {
            let mut diag = row[0];
            let mut left = i;
            row[0] = left;
            for (cell, cb) in row[1..].iter_mut().zip(b) {
                let up = *cell;
                left = (diag + u32::from(ca != cb)).min(up + 1).min(left + 1);
                *cell = left;
                diag = up;
            }
        }
        row[b.len()] as usize
    })
}

pub fn longest_common_substring(a: &[char], b: &[char]) -> usize {
    with_row(b.len(), |row| {
        let mut best = 0;
        for ca in a {
            let mut diag = 0;
            for (cell, cb) in row.iter_mut().zip(b) {
                let up = *cell;
                *cell = if ca == cb { diag + 1 } else { 0 };
                best = best.max(*cell);
                diag = up;
            }
        }
        best as usize
    })
}

pub fn longest_common_subsequence(a: &[char], b: &[char]) -> usize {
    match bit_pattern(a, b) {
        Some((p, t)) => {
            let mut v = !0u64;
            for &c in t {
                let u = v & eq_mask(p, c);
                v = v.wrapping_add(u) | (v - u);
            }
            (!v & (!0u64 >> (64 - p.len()))).count_ones() as usize
        }
        None => lcs_dp(a, b),
    }
}

fn lcs_dp(a: &[char], b: &[char]) -> usize {
    with_row(b.len(), |row| {
        for ca in a {
            let (mut diag, mut left) = (0, 0);
            for (cell, cb) in row.iter_mut().zip(b) {
                let up = *cell;
                left = if ca == cb { diag + 1 } else { up.max(left) };
                *cell = left;
                diag = up;
            }
        }
        row.last().map_or(0, |&v| v as usize)
    })
}

/// `1 - dist / max(|a|, |b|)`; two empty strings are identical.
pub fn levenshtein_sim(a: &str, b: &str) -> f64 {
    let (a, b) = (fold(a), fold(b));
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein_distance(&a, &b) as f64 / longest as f64
}

fn min_normalized(a: &[char], b: &[char], len: usize) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 1.0,
        (true, _) | (_, true) => 0.0,
        _ => len as f64 / a.len().min(b.len()) as f64,
    }
}

/// `|LCStr| / min(|a|, |b|)`.
pub fn lcstr_sim(a: &str, b: &str) -> f64 {
    let (a, b) = (fold(a), fold(b));
    let len = longest_common_substring(&a, &b);
    min_normalized(&a, &b, len)
}

/// `|LCSeq| / min(|a|, |b|)`.
pub fn lcseq_sim(a: &str, b: &str) -> f64 {
    let (a, b) = (fold(a), fold(b));
    let len = longest_common_subsequence(&a, &b);
    min_normalized(&a, &b, len)
}

pub fn lexical_features(a: &str, b: &str) -> LexicalFeatureVec {
    let (fa, fb) = (fold(a), fold(b));
    let longest = fa.len().max(fb.len());
    let leven = if longest == 0 {
        1.0
    } else {
        1.0 - levenshtein_distance(&fa, &fb) as f64 / longest as f64
    };
    LexicalFeatureVec {
        leven,
        lcstr: min_normalized(&fa, &fb, longest_common_substring(&fa, &fb)),
        lcseq: min_normalized(&fa, &fb, longest_common_subsequence(&fa, &fb)),
    }
}

/// Which similarity a caller wants when a single scalar is needed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    #[default]
    Levenshtein,
    LongestCommonSubstring,
    LongestCommonSubsequence,
}

impl SimilarityKind {
    pub fn eval(self, a: &str, b: &str) -> f64 {
        match self {
            SimilarityKind::Levenshtein => levenshtein_sim(a, b),
            SimilarityKind::LongestCommonSubstring => lcstr_sim(a, b),
            SimilarityKind::LongestCommonSubsequence => lcseq_sim(a, b),
        }
    }
}

/// Splits on whitespace and punctuation, casefolded.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn counts<'a>(tokens: &'a [String]) -> HashMap<&'a str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

fn document_frequencies<'a>(components: &'a [Vec<String>]) -> HashMap<&'a str, usize> {
    let mut df = HashMap::new();
    for c in components {
        let mut seen: Vec<&str> = c.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    df
}

/// Cosine between raw-count tf-idf vectors, `idf = ln((1 + D) / (1 + df)) + 1`.
pub fn tfidf_rank(query: &[String], components: &[Vec<String>]) -> Vec<f64> {
    let n_docs = components.len() as f64;
    let df = document_frequencies(components);
    let idf = |t: &str| ((1.0 + n_docs) / (1.0 + *df.get(t).unwrap_or(&0) as f64)).ln() + 1.0;

    let q_counts = counts(query);
    let q_norm = q_counts
        .iter()
        .map(|(t, &c)| (c as f64 * idf(t)).powi(2))
        .sum::<f64>()
        .sqrt();

    components
        .iter()
        .map(|c| {
            let d_counts = counts(c);
            let d_norm = d_counts
                .iter()
                .map(|(t, &n)| (n as f64 * idf(t)).powi(2))
                .sum::<f64>()
                .sqrt();
            if d_norm == 0.0 || q_norm == 0.0 {
                return 0.0;
            }
            let dot: f64 = q_counts
                .iter()
                .filter_map(|(t, &qc)| d_counts.get(t).map(|&dc| (qc * dc) as f64 * idf(t).powi(2)))
                .sum();
            dot / (q_norm * d_norm)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

pub fn bm25_rank(query: &[String], components: &[Vec<String>]) -> Vec<f64> {
    bm25_rank_with(query, components, Bm25Params::default())
}

/// Okapi BM25 over unique query terms with the non-negative
/// `ln(1 + (D - df + 0.5) / (df + 0.5))` idf.
pub fn bm25_rank_with(query: &[String], components: &[Vec<String>], p: Bm25Params) -> Vec<f64> {
    let n_docs = components.len() as f64;
    let df = document_frequencies(components);
    let avgdl = components.iter().map(Vec::len).sum::<usize>() as f64 / n_docs.max(1.0);
    let mut terms: Vec<&str> = query.iter().map(String::as_str).collect();
    terms.sort_unstable();
    terms.dedup();

    components
        .iter()
        .map(|c| {
            let tf = counts(c);
            let dl = c.len() as f64;
            let norm = if avgdl > 0.0 { dl / avgdl } else { 0.0 };
            terms
                .iter()
                .filter_map(|t| {
                    let f = *tf.get(t)? as f64;
                    let n_t = *df.get(t).unwrap_or(&0) as f64;
                    let idf = (1.0 + (n_docs - n_t + 0.5) / (n_t + 0.5)).ln();
                    Some(idf * f * (p.k1 + 1.0) / (f + p.k1 * (1.0 - p.b + p.b * norm)))
                })
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn bit_vector_paths_match_the_row_dps(a in "[abcd]{0,80}", b in "[abcd]{0,80}") {
            let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
            prop_assert_eq!(levenshtein_distance(&a, &b), levenshtein_dp(&a, &b));
            prop_assert_eq!(longest_common_subsequence(&a, &b), lcs_dp(&a, &b));
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn levenshtein_examples() {
        assert!(close(levenshtein_sim("kitten", "sitting"), 1.0 - 3.0 / 7.0));
        assert_eq!(levenshtein_sim("", "abc"), 0.0);
        assert_eq!(levenshtein_sim("", ""), 1.0);
        assert_eq!(levenshtein_sim("BERT", "bert"), 1.0);
    }

    #[test]
    fn substring_and_subsequence_examples() {
        assert!(close(lcstr_sim("abab", "baba"), 0.75));
        assert_eq!(lcstr_sim("abc", "xyz"), 0.0);
        assert!(close(lcseq_sim("aggtab", "gxtxayb"), 4.0 / 6.0));
        assert_eq!(lcseq_sim("abc", "xyz"), 0.0);
        assert_eq!(lcstr_sim("", "a"), 0.0);
        assert_eq!(lcseq_sim("", ""), 1.0);
    }

    #[test]
    fn lexical_triples() {
        let f = lexical_features("abab", "baba");
        assert!(close(f.leven, 0.5) && close(f.lcstr, 0.75) && close(f.lcseq, 0.75));
        assert_eq!(lexical_features("abc", "xyz"), LexicalFeatureVec::ZERO);
        let same = lexical_features("Graph", "graph");
        assert_eq!(same.to_array(), [1.0; 3]);
    }

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(tokenize("BERT-base, (v2) 91.2%"), ["bert", "base", "v2", "91", "2"]);
    }

    #[test]
    fn ranking_shared_contract() {
        let comps = vec![toks("alpha beta"), toks("beta gamma"), toks("gamma delta")];
        for rank in [tfidf_rank, bm25_rank] {
            let s = rank(&toks("alpha"), &comps);
            assert!(s[0] > s[1] && s[0] > s[2]);
            assert!(rank(&toks("omega"), &comps).iter().all(|&x| x == 0.0));
            let twins = vec![toks("beta gamma"), toks("beta gamma")];
            let s = rank(&toks("beta"), &twins);
            assert_eq!(s[0], s[1]);
        }
        let single = vec![toks("graph attention network")];
        assert!(bm25_rank(&single[0], &single)[0] > 0.0);
    }

    #[test]
    fn bm25_monotone_in_term_frequency() {
        // Same length (3 tokens), tf 1 vs tf 2; frozen from the closed form.
        let comps = vec![toks("a x y"), toks("a a z"), toks("q r s")];
        let s = bm25_rank(&toks("a"), &comps);
        let idf = (1.0f64 + (3.0 - 2.0 + 0.5) / 2.5).ln();
        let expect = |tf: f64| idf * tf * 2.2 / (tf + 1.2);
        assert!(close(s[0], expect(1.0)));
        assert!(close(s[1], expect(2.0)));
        assert!(s[1] > s[0]);
    }

    proptest! {
        #[test]
        fn similarity_symmetry_and_range(a in "[a-dA-D]{0,10}", b in "[a-d]{0,10}") {
            let f = lexical_features(&a, &b);
            let g = lexical_features(&b, &a);
            prop_assert_eq!(f, g);
            for x in f.to_array() {
                prop_assert!((0.0..=1.0).contains(&x));
            }
            prop_assert!(f.lcseq >= f.lcstr);
            prop_assert_eq!(f.leven, levenshtein_sim(&a, &b));
            prop_assert_eq!(f.lcstr, lcstr_sim(&a, &b));
            prop_assert_eq!(f.lcseq, lcseq_sim(&a, &b));
        }

        #[test]
        fn self_similarity_is_one(a in "\\PC{1,12}") {
            prop_assert_eq!(lexical_features(&a, &a).to_array(), [1.0; 3]);
        }
    }
}
