use std::collections::HashSet;
use std::fmt::Write as _;

use super::{evaluate, rank_all, user_ndcg, user_recall};
use crate::config::{TrainConfig, EVAL_CUTOFF};
use crate::data::{inject_noise_avoiding, Axis, GroupAssignment, SplitDataset};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::{DenseMatrix, Real};
use crate::train;

/// Test metrics after training on a corrupted training graph.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePoint {
    pub ratio: f64,
    pub recall: f64,
    pub ndcg: f64,
    /// Metric divided by the clean (ratio 0) run.
    pub relative_recall: f64,
    pub relative_ndcg: f64,
}

impl NoisePoint {
    pub const CSV_HEADER: &'static str = "ratio,recall,ndcg,relative_recall,relative_ndcg";

    pub fn csv(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6}",
            self.ratio, self.recall, self.ndcg, self.relative_recall, self.relative_ndcg
        )
    }
}

/// Stream of the noise generator, kept apart from the training stream.
const NOISE_STREAM: u64 = 0x6e6f697365;

/// For each ratio, replace that share of training edges with random
/// non-edges, retrain from scratch, and evaluate Recall/NDCG@20 on the clean
/// test set (clean training and validation items masked). A clean run is
/// added when 0 is not among the ratios.
pub fn noise_robustness(split: &SplitDataset, ratios: &[f64], cfg: &TrainConfig) -> Result<Vec<NoisePoint>> {
    let mut avoid: HashSet<(usize, usize)> = split.valid.edges().iter().copied().collect();
    avoid.extend(split.test.edges().iter().copied());
    let mut all: Vec<f64> = ratios.to_vec();
    if !all.contains(&0.0) {
        all.insert(0, 0.0);
    }
    let mut raw = Vec::with_capacity(all.len());
    for &ratio in &all {
        let mut rng = Rng::seed(cfg.seed).fork(NOISE_STREAM);
        let noisy = inject_noise_avoiding(&split.train, ratio, &avoid, &mut rng)?;
        let corrupted = SplitDataset {
            train: noisy.data,
            valid: split.valid.clone(),
            test: split.test.clone(),
            seed: split.seed,
        };
        let out = train::fit(&corrupted, cfg, &mut |_| {})?;
        let (u, i) = out.best_embeddings()?;
        let report = evaluate(&u, &i, &[&split.train, &split.valid], &split.test, &[EVAL_CUTOFF]);
        let (r, n) = (report.recall(EVAL_CUTOFF).unwrap_or(0.0), report.ndcg(EVAL_CUTOFF).unwrap_or(0.0));
        log::info!("noise ratio {ratio}: recall {r:.4} ndcg {n:.4}");
        raw.push((ratio, r, n));
    }
    let (_, r0, n0) = raw[all.iter().position(|&r| r == 0.0).unwrap()];
    let rel = |x: f64, base: f64| if base > 0.0 { x / base } else { 0.0 };
    Ok(raw
        .into_iter()
        .filter(|(ratio, _, _)| ratios.contains(ratio) || *ratio == 0.0)
        .map(|(ratio, recall, ndcg)| NoisePoint {
            ratio,
            recall,
            ndcg,
            relative_recall: rel(recall, r0),
            relative_ndcg: rel(ndcg, n0),
        })
        .collect())
}

/// Metrics of one sparsity bucket.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupMetrics {
    pub axis: Axis,
    pub label: String,
    /// Nodes in the bucket.
    pub members: usize,
    /// Users contributing to the averages.
    pub evaluated: usize,
    pub recall: f64,
    pub ndcg: f64,
}

impl GroupMetrics {
    pub const CSV_HEADER: &'static str = "axis,group,members,evaluated_users,recall,ndcg";

    pub fn csv(&self) -> String {
        let axis = match self.axis {
            Axis::User => "user",
            Axis::Item => "item",
        };
        format!(
            "{axis},{},{},{},{:.6},{:.6}",
            self.label, self.members, self.evaluated, self.recall, self.ndcg
        )
    }
}

pub fn groups_csv(rows: &[GroupMetrics]) -> String {
    let mut s = format!("{}\n", GroupMetrics::CSV_HEADER);
    for r in rows {
        let _ = writeln!(s, "{}", r.csv());
    }
    s
}

/// Recall/NDCG@`n` per bucket on the test split. User buckets average over
/// their users; item buckets restrict every user's test set to the bucket's
/// items and average over users left with at least one such item.
pub fn sparsity_report<T: Real>(
    users: &DenseMatrix<T>,
    items: &DenseMatrix<T>,
    split: &SplitDataset,
    groups: &GroupAssignment,
    n: usize,
) -> Vec<GroupMetrics> {
    let which = super::evaluated_users(&split.test);
    let ranked = rank_all(users, items, &[&split.train, &split.valid], &which, n);
    let sizes = groups.sizes();
    (0..groups.num_groups())
        .map(|g| {
            let (mut r, mut d, mut count) = (0.0, 0.0, 0usize);
            for (u, list) in &ranked.lists {
                let test = split.test.items_of(*u);
                let restricted: Vec<usize> = match groups.axis {
                    Axis::User if groups.group_of[*u] == g => test.to_vec(),
                    Axis::User => continue,
                    Axis::Item => test.iter().copied().filter(|&j| groups.group_of[j] == g).collect(),
                };
                if restricted.is_empty() {
                    continue;
                }
                r += user_recall(list, &restricted);
                d += user_ndcg(list, &restricted, n);
                count += 1;
            }
            let avg = |x: f64| if count == 0 { 0.0 } else { x / count as f64 };
            GroupMetrics {
                axis: groups.axis,
                label: groups.label(g),
                members: sizes[g],
                evaluated: count,
                recall: avg(r),
                ndcg: avg(d),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::block_model;
    use crate::data::{sparsity_groups, split};

    #[test]
    fn user_buckets_recombine_to_global_figure() {
        let d = block_model(60, 40, 4, 6, &mut Rng::seed(2)).unwrap();
        let s = split(&d, 3).unwrap();
        let mut rng = Rng::seed(4);
        let u: DenseMatrix<f64> = rng.normal_matrix(60, 5, 1.0);
        let v: DenseMatrix<f64> = rng.normal_matrix(40, 5, 1.0);
        let groups = sparsity_groups(&s, Axis::User, &[3, 5, 100]).unwrap();
        let rows = sparsity_report(&u, &v, &s, &groups, 40);
        let global = evaluate(&u, &v, &[&s.train, &s.valid], &s.test, &[40]);
        let total: usize = rows.iter().map(|r| r.evaluated).sum();
        assert_eq!(total, global.users);
        let weighted: f64 = rows.iter().map(|r| r.recall * r.evaluated as f64).sum::<f64>() / total as f64;
        assert!((weighted - global.recall(40).unwrap()).abs() < 1e-12);
        assert!(groups_csv(&rows).lines().count() == rows.len() + 1);
    }
}
