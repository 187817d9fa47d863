use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};

/// Ranking quality over a query set. `acc` is Hit@1.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub acc: f64,
    pub mrr: f64,
    pub hit2: f64,
    pub hit3: f64,
    pub hit5: f64,
    pub n: usize,
}

impl RankingMetrics {
    pub fn values(&self) -> [f64; 5] {
        [self.acc, self.mrr, self.hit2, self.hit3, self.hit5]
    }

    fn from_values(v: [f64; 5], n: usize) -> Self {
        Self {
            acc: v[0],
            mrr: v[1],
            hit2: v[2],
            hit3: v[3],
            hit5: v[4],
            n,
        }
    }

    /// Per-metric mean and, for two or more runs, sample standard deviation.
    pub fn mean_std(runs: &[RankingMetrics]) -> (RankingMetrics, Option<RankingMetrics>) {
        if runs.is_empty() {
            return (RankingMetrics::default(), None);
        }
        let k = runs.len() as f64;
        let n = runs[0].n;
        let mut mean = [0.0; 5];
        for r in runs {
            for (m, v) in mean.iter_mut().zip(r.values()) {
                *m += v / k;
            }
        }
        if runs.len() < 2 {
            return (Self::from_values(mean, n), None);
        }
        let mut var = [0.0; 5];
        for r in runs {
            for ((s, v), m) in var.iter_mut().zip(r.values()).zip(mean) {
                *s += (v - m) * (v - m) / (k - 1.0);
            }
        }
        (Self::from_values(mean, n), Some(Self::from_values(var.map(f64::sqrt), n)))
    }
}

/// 1-based position of `gold` in `ranking`.
pub fn rank_of<S: AsRef<str>>(ranking: &[S], gold: &str) -> Option<usize> {
    ranking.iter().position(|r| r.as_ref() == gold).map(|i| i + 1)
}

/// Metrics from 1-based ranks; `None` is a miss at every cutoff.
pub fn metrics_from_ranks(ranks: &[Option<usize>]) -> RankingMetrics {
    let n = ranks.len();
    if n == 0 {
        return RankingMetrics::default();
    }
    let hit = |k: usize| ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count() as f64 / n as f64;
    let mrr = ranks.iter().map(|r| r.map_or(0.0, |r| 1.0 / r as f64)).sum::<f64>() / n as f64;
    RankingMetrics {
        acc: hit(1),
        mrr,
        hit2: hit(2),
        hit3: hit(3),
        hit5: hit(5),
        n,
    }
}

pub fn eval_ranking<S: AsRef<str>, G: AsRef<str>>(predictions: &[Vec<S>], golds: &[G]) -> Result<RankingMetrics> {
    if predictions.len() != golds.len() {
        return Err(HarnessError::LengthMismatch(predictions.len(), golds.len()));
    }
    let ranks: Vec<Option<usize>> = predictions
        .iter()
        .zip(golds)
        .map(|(p, g)| rank_of(p, g.as_ref()))
        .collect();
    Ok(metrics_from_ranks(&ranks))
}
