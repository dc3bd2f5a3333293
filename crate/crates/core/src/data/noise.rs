use std::collections::HashSet;

use super::InteractionDataset;
use crate::error::{Result, ShtError};
use crate::rng::Rng;

/// A corrupted dataset and, per edge, whether it was injected.
#[derive(Clone, Debug)]
pub struct NoisyDataset {
    pub data: InteractionDataset,
    pub is_noise: Vec<bool>,
}

impl NoisyDataset {
    pub fn noise_count(&self) -> usize {
        self.is_noise.iter().filter(|&&b| b).count()
    }
}

/// Replace `⌊ratio·|E|⌋` real edges by uniformly random edges that do not
/// exist in `data`. Replacements take the positions of the removed edges, so
/// at ratio 0 the output equals the input.
pub fn inject_noise(data: &InteractionDataset, ratio: f64, rng: &mut Rng) -> Result<NoisyDataset> {
    inject_noise_avoiding(data, ratio, &HashSet::new(), rng)
}

/// Like [`inject_noise`], also never producing an edge listed in `avoid`
/// (e.g. held-out validation and test edges).
pub fn inject_noise_avoiding(
    data: &InteractionDataset,
    ratio: f64,
    avoid: &HashSet<(usize, usize)>,
    rng: &mut Rng,
) -> Result<NoisyDataset> {
    if !(0.0..0.5).contains(&ratio) {
        return Err(ShtError::invalid(format!("noise ratio must be in [0, 0.5), got {ratio}")));
    }
    let n = data.num_edges();
    let replace = (ratio * n as f64).floor() as usize;
    let blocked = avoid
        .iter()
        .filter(|e| e.0 < data.num_users() && e.1 < data.num_items() && !data.contains(e.0, e.1)).count();
    let free = (data.num_users() * data.num_items() - n).saturating_sub(blocked);
    if free < replace {
        return Err(ShtError::invalid("graph too dense to place the requested noise edges"));
    }

    // partial Fisher-Yates: the first `replace` slots are the victims
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..replace {
        let j = k + rng.below(n - k);
        order.swap(k, j);
    }
    let mut victims = order[..replace].to_vec();
    victims.sort_unstable();

    let mut edges = data.edges().to_vec();
    let mut is_noise = vec![false; n];
    let mut placed: HashSet<(usize, usize)> = HashSet::with_capacity(replace);
    for &slot in &victims {
        let fake = loop {
            let e = (rng.below(data.num_users()), rng.below(data.num_items()));
            if !data.contains(e.0, e.1) && !avoid.contains(&e) && !placed.contains(&e) {
                break e;
            }
        };
        placed.insert(fake);
        edges[slot] = fake;
        is_noise[slot] = true;
    }
    Ok(NoisyDataset {
        data: data.with_edges(edges)?,
        is_noise,
    })
}
