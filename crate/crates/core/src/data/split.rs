use super::InteractionDataset;
use crate::error::{Result, ShtError};
use crate::rng::Rng;

/// Train : validation : test proportions.
pub const SPLIT_RATIOS: (usize, usize, usize) = (7, 2, 1);

/// Three disjoint edge sets over one index space.
#[derive(Clone, Debug)]
pub struct SplitDataset {
    pub train: InteractionDataset,
    pub valid: InteractionDataset,
    pub test: InteractionDataset,
    pub seed: u64,
}

/// Uniform random edge-level 7:2:1 partition.
///
/// `|train| = ⌊7n/10⌋`, `|valid| = ⌊2n/10⌋`, test takes the remainder. Each
/// part keeps the original relative edge order.
pub fn split(data: &InteractionDataset, seed: u64) -> Result<SplitDataset> {
    let n = data.num_edges();
    if n < 10 {
        return Err(ShtError::invalid(format!("split needs at least 10 edges, got {n}")));
    }
    let (a, b, c) = SPLIT_RATIOS;
    let total = a + b + c;
    let n_train = n * a / total;
    let n_valid = n * b / total;

    let mut order: Vec<usize> = (0..n).collect();
    Rng::seed(seed).shuffle(&mut order);
    let mut part = vec![2u8; n];
    for &i in &order[..n_train] {
        part[i] = 0;
    }
    for &i in &order[n_train..n_train + n_valid] {
        part[i] = 1;
    }
    let pick = |p: u8| -> Vec<(usize, usize)> {
        data.edges()
            .iter()
            .zip(&part)
            .filter(|&(_, &q)| q == p)
            .map(|(&e, _)| e)
            .collect()
    };
    Ok(SplitDataset {
        train: data.with_edges(pick(0))?,
        valid: data.with_edges(pick(1))?,
        test: data.with_edges(pick(2))?,
        seed,
    })
}
