use rand::seq::SliceRandom;

use super::{HarnessError, Result};
use crate::corpus::Corpus;
use crate::nn::seeded_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

/// Document-level split. Sizes are rounded from the ratios; every split with
/// a positive ratio gets at least one document. Documents keep their corpus
/// order inside each split.
pub fn split_corpus(corpus: &Corpus, ratios: (f64, f64, f64), seed: u64) -> Result<Split> {
    let d = corpus.documents.len();
    if d < 3 {
        return Err(HarnessError::Split(format!("need at least 3 documents, got {d}")));
    }
    let (r_train, r_dev, r_test) = ratios;
    if [r_train, r_dev, r_test].iter().any(|r| !(0.0..=1.0).contains(r)) || (r_train + r_dev + r_test - 1.0).abs() > 1e-9 {
        return Err(HarnessError::Split(format!("ratios {ratios:?} must be nonnegative and sum to 1")));
    }
    let mut n_dev = (d as f64 * r_dev).round() as usize;
    let mut n_test = (d as f64 * r_test).round() as usize;
    if r_dev > 0.0 {
        n_dev = n_dev.max(1);
    }
    if r_test > 0.0 {
        n_test = n_test.max(1);
    }
    while n_dev + n_test >= d && (n_dev > 1 || n_test > 1) {
        if n_dev >= n_test {
            n_dev -= 1;
        } else {
            n_test -= 1;
        }
    }
    let n_train = d - n_dev - n_test;
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut seeded_rng(seed));
    let pick = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        Corpus {
            n: corpus.n,
            documents: idx.iter().map(|&i| corpus.documents[i].clone()).collect(),
        }
    };
    Ok(Split {
        train: pick(&order[..n_train]),
        dev: pick(&order[n_train..n_train + n_dev]),
        test: pick(&order[n_train + n_dev..]),
    })
}
