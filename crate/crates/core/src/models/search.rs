//! Seeded grid / random hyperparameter search.
//!
//! Candidates are scored by validation accuracy. With a fairness constraint
//! only candidates whose validation DD is at most the target are eligible;
//! if none is, the one with the smallest DD wins. Ties keep the earliest
//! candidate, so results depend only on the candidate order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::logistic::{Optimizer, TrainConfig};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticGrid {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub epochs: Vec<usize>,
    pub optimizers: Vec<Optimizer>,
}

impl Default for LogisticGrid {
    fn default() -> Self {
        LogisticGrid {
            learning_rates: vec![0.01, 0.05, 0.1, 0.5],
            batch_sizes: vec![32, 128],
            epochs: vec![1, 2, 5],
            optimizers: vec![Optimizer::Sgd, Optimizer::Momentum { beta: 0.9 }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchStrategy {
    Grid,
    Random { samples: usize, seed: u64 },
}

impl LogisticGrid {
    /// Full grid in nested order (learning rate slowest), or a seeded
    /// sample of it without replacement.
    pub fn candidates(&self, base: &TrainConfig, strategy: &SearchStrategy) -> Vec<TrainConfig> {
        let mut all = Vec::new();
        for &learning_rate in &self.learning_rates {
            for &batch_size in &self.batch_sizes {
                for &epochs in &self.epochs {
                    for &optimizer in &self.optimizers {
                        all.push(TrainConfig {
                            learning_rate,
                            batch_size,
                            epochs,
                            optimizer,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        match strategy {
            SearchStrategy::Grid => all,
            SearchStrategy::Random { samples, seed } => {
                let mut r = rng::seeded(*seed);
                let mut picked = Vec::new();
                while picked.len() < (*samples).min(all.len()) {
                    let i = r.random_range(0..all.len() as u64) as usize;
                    picked.push(all.swap_remove(i));
                }
                picked
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub accuracy: f64,
    pub dd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult<C> {
    pub best: C,
    pub score: Score,
    pub feasible: bool,
    pub evaluated: usize,
}

/// Evaluates every candidate and keeps the best under the rule above.
pub fn select_best<C: Clone>(
    candidates: &[C],
    max_dd: Option<f64>,
    mut evaluate: impl FnMut(&C) -> Result<Score>,
) -> Result<SearchResult<C>> {
    let mut best: Option<(usize, Score, bool)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let s = evaluate(c)?;
        let feasible = match (max_dd, s.dd) {
            (None, _) => true,
            (Some(t), Some(dd)) => dd <= t,
            (Some(_), None) => false,
        };
        let better = match &best {
            None => true,
            Some((_, b, bf)) => match (feasible, *bf) {
                (true, false) => true,
                (false, true) => false,
                (true, true) => s.accuracy > b.accuracy,
                (false, false) => s.dd.unwrap_or(f64::INFINITY) < b.dd.unwrap_or(f64::INFINITY),
            },
        };
        if better {
            best = Some((i, s, feasible));
        }
    }
    let (i, score, feasible) = best.ok_or_else(|| Error::Precondition("no candidates to search".into()))?;
    Ok(SearchResult {
        best: candidates[i].clone(),
        score,
        feasible,
        evaluated: candidates.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_and_random_sizes() {
        let grid = LogisticGrid::default();
        let all = grid.candidates(&TrainConfig::default(), &SearchStrategy::Grid);
        assert_eq!(all.len(), 4 * 2 * 3 * 2);
        let some = grid.candidates(&TrainConfig::default(), &SearchStrategy::Random { samples: 5, seed: 1 });
        assert_eq!(some.len(), 5);
        assert_eq!(
            some,
            grid.candidates(&TrainConfig::default(), &SearchStrategy::Random { samples: 5, seed: 1 })
        );
    }

    #[test]
    fn constraint_prefers_feasible() {
        let scores = [
            Score {
                accuracy: 0.9,
                dd: Some(0.2),
            },
            Score {
                accuracy: 0.8,
                dd: Some(0.04),
            },
            Score {
                accuracy: 0.85,
                dd: Some(0.05),
            },
        ];
        let idx: Vec<usize> = (0..3).collect();
        let r = select_best(&idx, Some(0.05), |&i| Ok(scores[i])).unwrap();
        assert_eq!(r.best, 2);
        assert!(r.feasible);
        let r = select_best(&idx, None, |&i| Ok(scores[i])).unwrap();
        assert_eq!(r.best, 0);
        let r = select_best(&idx, Some(0.01), |&i| Ok(scores[i])).unwrap();
        assert_eq!(r.best, 1);
        assert!(!r.feasible);
    }
}
