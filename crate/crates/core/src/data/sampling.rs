use super::InteractionDataset;
use crate::error::{Result, ShtError};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairKind {
    /// First edge observed, second unobserved with the same user.
    Main,
    /// Two distinct observed edges.
    SelfAugmented,
}

/// `((u1, v1), (u2, v2))`
pub type EdgePair = ((usize, usize), (usize, usize));

#[derive(Clone, Debug, PartialEq)]
pub struct EdgePairBatch {
    pub kind: PairKind,
    pub pairs: Vec<EdgePair>,
}

impl EdgePairBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn first_users(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.0 .0).collect()
    }

    pub fn first_items(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.0 .1).collect()
    }

    pub fn second_users(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.1 .0).collect()
    }

    pub fn second_items(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.1 .1).collect()
    }
}

/// Uniform draw from the items `u` has not interacted with.
pub fn sample_negative(train: &InteractionDataset, u: usize, rng: &mut Rng) -> Result<usize> {
    let seen = train.items_of(u);
    let n = train.num_items();
    if seen.len() >= n {
        return Err(ShtError::SamplingExhausted { user: u });
    }
    if seen.len() * 2 <= n {
        // rejection: expected < 2 tries
        loop {
            let j = rng.below(n);
            if seen.binary_search(&j).is_err() {
                return Ok(j);
            }
        }
    }
    // dense users: pick the k-th unseen item directly
    let mut k = rng.below(n - seen.len());
    for &s in seen {
        if s <= k {
            k += 1;
        } else {
            break;
        }
    }
    Ok(k)
}

/// `count` main-task pairs: a uniformly drawn training edge and a negative
/// item of the same user.
pub fn sample_main_pairs(train: &InteractionDataset, count: usize, rng: &mut Rng) -> Result<EdgePairBatch> {
    if count == 0 {
        return Err(ShtError::invalid("pair count must be at least 1"));
    }
    if train.num_edges() == 0 {
        return Err(ShtError::EmptyDataset);
    }
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let (u, pos) = train.edges()[rng.below(train.num_edges())];
        let neg = sample_negative(train, u, rng)?;
        pairs.push(((u, pos), (u, neg)));
    }
    Ok(EdgePairBatch {
        kind: PairKind::Main,
        pairs,
    })
}

/// Main-task pairs driven by a user mini-batch: user `r mod |users|` gets a
/// uniform positive from its own items and a uniform negative. Users without
/// training items are skipped.
pub fn sample_main_pairs_for_users(
    train: &InteractionDataset,
    users: &[usize],
    count: usize,
    rng: &mut Rng,
) -> Result<EdgePairBatch> {
    if count == 0 {
        return Err(ShtError::invalid("pair count must be at least 1"));
    }
    let active: Vec<usize> = users.iter().copied().filter(|&u| !train.items_of(u).is_empty()).collect();
    if active.is_empty() {
        return Err(ShtError::invalid("mini-batch has no user with training items"));
    }
    let mut pairs = Vec::with_capacity(count);
    for r in 0..count {
        let u = active[r % active.len()];
        let items = train.items_of(u);
        let pos = items[rng.below(items.len())];
        let neg = sample_negative(train, u, rng)?;
        pairs.push(((u, pos), (u, neg)));
    }
    Ok(EdgePairBatch {
        kind: PairKind::Main,
        pairs,
    })
}

/// `count` pairs of distinct observed edges, each drawn uniformly with replacement.
pub fn sample_sal_pairs(train: &InteractionDataset, count: usize, rng: &mut Rng) -> Result<EdgePairBatch> {
    if count == 0 {
        return Err(ShtError::invalid("pair count must be at least 1"));
    }
    let n = train.num_edges();
    if n < 2 {
        return Err(ShtError::invalid("self-augmented pairs need at least 2 training edges"));
    }
    let edges = train.edges();
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let a = rng.below(n);
        let mut b = rng.below(n - 1);
        if b >= a {
            b += 1;
        }
        pairs.push((edges[a], edges[b]));
    }
    Ok(EdgePairBatch {
        kind: PairKind::SelfAugmented,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    #[test]
    fn forced_negative() {
        // user 0 has items 0..4, only item 4 is free
        let d = InteractionDataset::from_edges(2, 5, vec![(0, 0), (0, 1), (0, 2), (0, 3), (1, 4)]).unwrap();
        let mut rng = Rng::seed(1);
        for _ in 0..50 {
            assert_eq!(sample_negative(&d, 0, &mut rng).unwrap(), 4);
        }
        let full = InteractionDataset::from_edges(1, 2, vec![(0, 0), (0, 1)]).unwrap();
        assert!(matches!(sample_negative(&full, 0, &mut rng), Err(ShtError::SamplingExhausted { user: 0 })));
    }

    #[test]
    fn zero_count_rejected() {
        let d = InteractionDataset::from_edges(1, 3, vec![(0, 0), (0, 1)]).unwrap();
        let mut rng = Rng::seed(1);
        assert!(sample_main_pairs(&d, 0, &mut rng).is_err());
        assert!(sample_sal_pairs(&d, 0, &mut rng).is_err());
    }

    #[test]
    fn main_pairs_respect_invariant() {
        let d = InteractionDataset::from_edges(4, 6, vec![(0, 0), (0, 5), (1, 2), (2, 3), (3, 1), (3, 4)]).unwrap();
        let mut rng = Rng::seed(2);
        let b = sample_main_pairs(&d, 200, &mut rng).unwrap();
        assert_eq!(b.len(), 200);
        for &((u1, v1), (u2, v2)) in &b.pairs {
            assert_eq!(u1, u2);
            assert!(d.contains(u1, v1));
            assert!(!d.contains(u2, v2));
        }
        let b = sample_main_pairs_for_users(&d, &[1, 3], 10, &mut rng).unwrap();
        assert!(b.pairs.iter().all(|p| p.0 .0 == 1 || p.0 .0 == 3));
    }

    /// Per-item frequency of negatives is within 3 sigma of the multinomial mean.
    #[test]
    fn negative_frequencies_are_uniform() {
        for (seen, n_items) in [(vec![0usize, 3, 7], 10usize), ((0..15).collect::<Vec<_>>(), 20)] {
            let edges = seen.iter().map(|&i| (0, i)).collect();
            let d = InteractionDataset::from_edges(1, n_items, edges).unwrap();
            let mut rng = Rng::seed(11);
            let draws = 100_000;
            let mut counts = vec![0usize; n_items];
            for _ in 0..draws {
                counts[sample_negative(&d, 0, &mut rng).unwrap()] += 1;
            }
            let free = n_items - seen.len();
            let p = 1.0 / free as f64;
            let mean = draws as f64 * p;
            let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
            for (i, &c) in counts.iter().enumerate() {
                if seen.contains(&i) {
                    assert_eq!(c, 0);
                } else {
                    assert!((c as f64 - mean).abs() <= 3.0 * sigma, "item {i}: {c} vs {mean}");
                }
            }
        }
    }

    #[test]
    fn two_edge_graph_has_one_pair() {
        let d = InteractionDataset::from_edges(2, 2, vec![(0, 0), (1, 1)]).unwrap();
        let mut rng = Rng::seed(3);
        let b = sample_sal_pairs(&d, 20, &mut rng).unwrap();
        for &(a, c) in &b.pairs {
            assert_ne!(a, c);
            let mut pair = [a, c];
            pair.sort();
            assert_eq!(pair, [(0, 0), (1, 1)]);
        }
    }

    #[test]
    fn sal_edges_are_observed() {
        let edges: Vec<_> = (0..30).map(|k| (k % 5, (k * 7) % 11)).collect();
        let d = InteractionDataset::from_edges(5, 11, edges).unwrap();
        let mut rng = Rng::seed(4);
        let b = sample_sal_pairs(&d, 100, &mut rng).unwrap();
        for &(a, c) in &b.pairs {
            assert!(d.contains(a.0, a.1) && d.contains(c.0, c.1));
        }
    }

    /// Ordered pairs of distinct edges are uniform over n(n-1) outcomes; the
    /// number of repeated pairs in m draws matches the birthday expectation.
    #[test]
    fn duplicate_pair_rate_matches_uniform() {
        let d = InteractionDataset::from_edges(3, 3, vec![(0, 0), (0, 1), (1, 1), (1, 2), (2, 0), (2, 2)]).unwrap();
        let n = d.num_edges() as f64;
        let outcomes = n * (n - 1.0);
        let mut rng = Rng::seed(5);
        let m = 20usize;
        let trials = 20_000;
        let mut repeated_total = 0usize;
        for _ in 0..trials {
            let b = sample_sal_pairs(&d, m, &mut rng).unwrap();
            let mut seen: HashMap<EdgePair, usize> = HashMap::new();
            for p in b.pairs {
                *seen.entry(p).or_default() += 1;
            }
            repeated_total += m - seen.len();
        }
        // E[distinct] = K (1 - (1 - 1/K)^m)
        let expect_distinct = outcomes * (1.0 - (1.0 - 1.0 / outcomes).powi(m as i32));
        let expect_repeats = m as f64 - expect_distinct;
        let observed = repeated_total as f64 / trials as f64;
        assert!(
            (observed - expect_repeats).abs() < 0.03 * expect_repeats,
            "observed {observed}, expected {expect_repeats}"
        );
    }
}
