//! All-rank evaluation, robustness and sparsity harnesses, and exports.

mod color;
mod robustness;

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub use color::{embedding_to_color, ColorConfig, Rgb};
pub use robustness::{groups_csv, noise_robustness, sparsity_report, GroupMetrics, NoisePoint};

use crate::data::InteractionDataset;
use crate::error::Result;
use crate::hypergraph::score_all;
use crate::tensor::{DenseMatrix, Real};

/// Per-user top-N lists.
#[derive(Clone, Debug, PartialEq)]
pub struct RankingResult {
    pub n: usize,
    /// `(user, items best-first)`
    pub lists: Vec<(usize, Vec<usize>)>,
}

/// Indices of the `n` best unmasked scores, best first, ties by lower index.
pub fn top_n<T: Real>(scores: &[T], masked: &[bool], n: usize) -> Vec<usize> {
    let mut cand: Vec<usize> = (0..scores.len()).filter(|&j| !masked[j]).collect();
    let cmp = |a: &usize, b: &usize| -> Ordering {
        scores[*b]
            .partial_cmp(&scores[*a])
            .unwrap_or_else(|| scores[*a].is_nan().cmp(&scores[*b].is_nan()))
            .then(a.cmp(b))
    };
    if n < cand.len() {
        cand.select_nth_unstable_by(n, cmp);
        cand.truncate(n);
    }
    cand.sort_unstable_by(cmp);
    cand
}

/// Rank every item for each listed user, masking the items each user has in
/// any of `masks`.
pub fn rank_all<T: Real>(
    users: &DenseMatrix<T>,
    items: &DenseMatrix<T>,
    masks: &[&InteractionDataset],
    which: &[usize],
    n: usize,
) -> RankingResult {
    let mut masked = vec![false; items.rows()];
    let lists = which
        .iter()
        .map(|&u| {
            for m in masks {
                for &j in m.items_of(u) {
                    masked[j] = true;
                }
            }
            let list = top_n(&score_all(users, items, u), &masked, n);
            for m in masks {
                for &j in m.items_of(u) {
                    masked[j] = false;
                }
            }
            (u, list)
        })
        .collect();
    RankingResult { n, lists }
}

/// `|top-N ∩ test| / |test|`
pub fn user_recall(list: &[usize], test: &[usize]) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    let hits = list.iter().filter(|j| test.contains(j)).count();
    hits as f64 / test.len() as f64
}

/// DCG with gain `1/log₂(rank+1)` over IDCG of `min(n, |test|)` hits.
pub fn user_ndcg(list: &[usize], test: &[usize], n: usize) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    let gain = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = list
        .iter()
        .take(n)
        .enumerate()
        .filter(|(_, j)| test.contains(j))
        .map(|(k, _)| gain(k + 1))
        .sum();
    let idcg: f64 = (1..=n.min(test.len())).map(gain).sum();
    dcg / idcg
}

fn average(result: &RankingResult, test: &InteractionDataset, f: impl Fn(&[usize], &[usize]) -> f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (u, list) in &result.lists {
        let t = test.items_of(*u);
        if t.is_empty() {
            continue;
        }
        sum += f(&list[..list.len().min(result.n)], t);
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Recall@N averaged over users with a nonempty test set.
pub fn recall_at_n(result: &RankingResult, test: &InteractionDataset) -> f64 {
    average(result, test, user_recall)
}

/// NDCG@N averaged over users with a nonempty test set.
pub fn ndcg_at_n(result: &RankingResult, test: &InteractionDataset) -> f64 {
    average(result, test, |l, t| user_ndcg(l, t, result.n))
}

/// Metrics at one cutoff.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub n: usize,
    pub recall: f64,
    pub ndcg: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    /// Users with a nonempty target set.
    pub users: usize,
    pub rows: Vec<MetricRow>,
}

impl EvaluationReport {
    pub fn recall(&self, n: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.n == n).map(|r| r.recall)
    }

    pub fn ndcg(&self, n: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.n == n).map(|r| r.ndcg)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("n,recall,ndcg,users\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.6},{:.6},{}", r.n, r.recall, r.ndcg, self.users);
        }
        s
    }
}

/// Users that have at least one item in `target`.
pub fn evaluated_users(target: &InteractionDataset) -> Vec<usize> {
    (0..target.num_users()).filter(|&u| !target.items_of(u).is_empty()).collect()
}

/// Recall and NDCG at each cutoff for users with items in `target`.
pub fn evaluate<T: Real>(
    users: &DenseMatrix<T>,
    items: &DenseMatrix<T>,
    masks: &[&InteractionDataset],
    target: &InteractionDataset,
    cutoffs: &[usize],
) -> EvaluationReport {
    let which = evaluated_users(target);
    let max_n = cutoffs.iter().copied().max().unwrap_or(0);
    let full = rank_all(users, items, masks, &which, max_n);
    let rows = cutoffs
        .iter()
        .map(|&n| {
            let r = RankingResult {
                n,
                lists: full.lists.clone(),
            };
            MetricRow {
                n,
                recall: recall_at_n(&r, target),
                ndcg: ndcg_at_n(&r, target),
            }
        })
        .collect();
    EvaluationReport {
        users: which.len(),
        rows,
    }
}

/// One row of the solidity export.
#[derive(Clone, Debug, PartialEq)]
pub struct SolidityRow {
    pub user: String,
    pub item: String,
    pub score: f64,
    pub is_noise: Option<bool>,
}

/// `user_id,item_id,s,is_noise` with an empty flag when unknown.
pub fn write_solidity_csv(path: &Path, rows: &[SolidityRow]) -> Result<()> {
    let mut s = String::from("user_id,item_id,s,is_noise\n");
    for r in rows {
        let flag = r.is_noise.map_or(String::new(), |b| u8::from(b).to_string());
        let _ = writeln!(s, "{},{},{:.6},{}", r.user, r.item, r.score, flag);
    }
    fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn hand_example() {
        let list = vec![0, 5, 6, 7];
        let test = vec![0, 1];
        assert_eq!(user_recall(&list, &test), 0.5);
        let want = 1.0 / (1.0 + 1.0 / 3f64.log2());
        assert!((user_ndcg(&list, &test, 20) - want).abs() < 1e-15);
        assert!((want - 0.6131).abs() < 1e-4);
    }

    #[test]
    fn perfect_and_empty() {
        assert_eq!(user_recall(&[3, 1, 9], &[1, 3]), 1.0);
        assert!((user_ndcg(&[3, 1, 9], &[1, 3], 20) - 1.0).abs() < 1e-15);
        assert_eq!(user_recall(&[4, 5], &[1, 3]), 0.0);
        assert_eq!(user_ndcg(&[4, 5], &[1, 3], 20), 0.0);
    }

    #[test]
    fn top_n_masks_and_breaks_ties_by_index() {
        let scores = [1.0f32, 3.0, 3.0, 2.0, 3.0];
        let masked = [false, false, true, false, false];
        assert_eq!(top_n(&scores, &masked, 3), vec![1, 4, 3]);
        assert_eq!(top_n(&scores, &masked, 10), vec![1, 4, 3, 0]);
    }

    #[test]
    fn training_items_never_ranked() {
        let mut rng = Rng::seed(1);
        let edges: Vec<_> = (0..60).map(|_| (rng.below(8), rng.below(12))).collect();
        let train = InteractionDataset::from_edges(8, 12, edges).unwrap();
        let u: DenseMatrix<f64> = rng.normal_matrix(8, 4, 1.0);
        let v: DenseMatrix<f64> = rng.normal_matrix(12, 4, 1.0);
        let all: Vec<usize> = (0..8).collect();
        let r = rank_all(&u, &v, &[&train], &all, 12);
        for (user, list) in &r.lists {
            assert_eq!(list.len(), 12 - train.items_of(*user).len());
            assert!(list.iter().all(|j| !train.contains(*user, *j)));
        }
    }
}
