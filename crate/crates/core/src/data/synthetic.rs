//! Planted-block interaction generator for tests and demos.

use super::{IdMap, InteractionDataset};
use crate::error::{Result, ShtError};
use crate::rng::Rng;
use std::sync::Arc;

/// Users and items are split round-robin into `blocks` communities; each user
/// interacts with `per_user` distinct items drawn uniformly from its own block.
pub fn block_model(users: usize, items: usize, blocks: usize, per_user: usize, rng: &mut Rng) -> Result<InteractionDataset> {
    if blocks == 0 || users < blocks || items < blocks || per_user == 0 {
        return Err(ShtError::invalid("block model needs blocks >= 1, users/items >= blocks, per_user >= 1"));
    }
    let mut edges = Vec::with_capacity(users * per_user);
    for u in 0..users {
        let b = u % blocks;
        let mut pool: Vec<usize> = (b..items).step_by(blocks).collect();
        let take = per_user.min(pool.len());
        for k in 0..take {
            let j = k + rng.below(pool.len() - k);
            pool.swap(k, j);
        }
        edges.extend(pool[..take].iter().map(|&i| (u, i)));
    }
    InteractionDataset::view(
        edges,
        &Arc::new(IdMap::sequential("u", users)),
        &Arc::new(IdMap::sequential("i", items)),
    )
}

/// Community of a node generated by [`block_model`].
pub fn block_of(index: usize, blocks: usize) -> usize {
    index % blocks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_stay_inside_blocks() {
        let d = block_model(40, 24, 4, 5, &mut Rng::seed(1)).unwrap();
        assert_eq!(d.num_edges(), 200);
        for &(u, i) in d.edges() {
            assert_eq!(block_of(u, 4), block_of(i, 4));
        }
    }
}
