//! Interaction data: loading, splitting, normalized adjacency, samplers and
//! corruption utilities.

mod adjacency;
mod groups;
mod io;
mod noise;
mod sampling;
mod split;
pub mod synthetic;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

pub use adjacency::NormalizedAdjacency;
pub use groups::{sparsity_groups, Axis, GroupAssignment};
pub use io::{load_interactions, load_split_manifest, read_id_map, write_id_map, write_interactions, write_split_manifest};
pub use noise::{inject_noise, inject_noise_avoiding, NoisyDataset};
pub use sampling::{sample_main_pairs, sample_main_pairs_for_users, sample_negative, sample_sal_pairs, EdgePair, EdgePairBatch, PairKind};
pub use split::{split, SplitDataset, SPLIT_RATIOS};

use crate::error::{Result, ShtError};

/// Bidirectional mapping between external ids and dense indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    external: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Dense index of `id`, assigning the next one if unseen.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.external.len();
        self.external.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn external(&self, index: usize) -> &str {
        &self.external[index]
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }

    /// Synthetic ids `prefix0, prefix1, ...`.
    pub fn sequential(prefix: &str, n: usize) -> Self {
        let mut m = Self::new();
        for i in 0..n {
            m.intern(&format!("{prefix}{i}"));
        }
        m
    }
}

/// Bipartite user-item interaction graph over a dense index space.
///
/// Views produced by [`split`] or [`inject_noise`] share the id tables of the
/// dataset they came from, so indices are comparable across them.
#[derive(Clone, Debug)]
pub struct InteractionDataset {
    num_users: usize,
    num_items: usize,
    edges: Vec<(usize, usize)>,
    users: Arc<IdMap>,
    items: Arc<IdMap>,
    by_user: Vec<Vec<usize>>,
}

impl PartialEq for InteractionDataset {
    fn eq(&self, other: &Self) -> bool {
        self.num_users == other.num_users && self.num_items == other.num_items && self.edges == other.edges
    }
}

impl InteractionDataset {
    /// Build from raw external-id pairs; duplicates are dropped keeping the
    /// first occurrence.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut users = IdMap::new();
        let mut items = IdMap::new();
        let mut edges = Vec::new();
        for (u, i) in pairs {
            edges.push((users.intern(u), items.intern(i)));
        }
        if edges.is_empty() {
            return Err(ShtError::EmptyDataset);
        }
        Ok(Self::with_maps(edges, Arc::new(users), Arc::new(items)))
    }

    /// Build over an existing index space. Out-of-range edges are rejected;
    /// duplicate edges are dropped keeping the first occurrence.
    pub fn from_edges(num_users: usize, num_items: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let users = Arc::new(IdMap::sequential("u", num_users));
        let items = Arc::new(IdMap::sequential("i", num_items));
        Self::view(edges, &users, &items)
    }

    pub(crate) fn view(edges: Vec<(usize, usize)>, users: &Arc<IdMap>, items: &Arc<IdMap>) -> Result<Self> {
        if let Some(&(u, i)) = edges.iter().find(|&&(u, i)| u >= users.len() || i >= items.len()) {
            return Err(ShtError::invalid(format!(
                "edge ({u}, {i}) outside index space {}x{}",
                users.len(),
                items.len()
            )));
        }
        Ok(Self::with_maps(edges, Arc::clone(users), Arc::clone(items)))
    }

    fn with_maps(edges: Vec<(usize, usize)>, users: Arc<IdMap>, items: Arc<IdMap>) -> Self {
        let num_users = users.len();
        let num_items = items.len();
        let mut by_user: Vec<Vec<usize>> = vec![Vec::new(); num_users];
        let mut kept = Vec::with_capacity(edges.len());
        for (u, i) in edges {
            let list = &mut by_user[u];
            if let Err(pos) = list.binary_search(&i) {
                list.insert(pos, i);
                kept.push((u, i));
            }
        }
        Self {
            num_users,
            num_items,
            edges: kept,
            users,
            items,
            by_user,
        }
    }

    /// Same index space, different edges.
    pub fn with_edges(&self, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::view(edges, &self.users, &self.items)
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted items of user `u`.
    pub fn items_of(&self, u: usize) -> &[usize] {
        &self.by_user[u]
    }

    pub fn contains(&self, u: usize, i: usize) -> bool {
        self.by_user[u].binary_search(&i).is_ok()
    }

    pub fn user_ids(&self) -> &Arc<IdMap> {
        &self.users
    }

    pub fn item_ids(&self) -> &Arc<IdMap> {
        &self.items
    }

    pub fn user_degrees(&self) -> Vec<usize> {
        self.by_user.iter().map(Vec::len).collect()
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_items];
        for &(_, i) in &self.edges {
            deg[i] += 1;
        }
        deg
    }

    /// Users with at least one edge.
    pub fn active_users(&self) -> Vec<usize> {
        (0..self.num_users).filter(|&u| !self.by_user[u].is_empty()).collect()
    }

    pub fn stats(&self) -> DatasetStats {
        let denom = (self.num_users * self.num_items).max(1) as f64;
        DatasetStats {
            users: self.num_users,
            items: self.num_items,
            interactions: self.edges.len(),
            density: self.edges.len() as f64 / denom,
        }
    }
}

/// Users, items, interactions and density of a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub density: f64,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14}{:>12}", "# Users", self.users)?;
        writeln!(f, "{:<14}{:>12}", "# Items", self.items)?;
        writeln!(f, "{:<14}{:>12}", "# Interactions", self.interactions)?;
        write!(f, "{:<14}{:>12.2e}", "Density", self.density)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_line_example() {
        let d = InteractionDataset::from_pairs([("a", "x"), ("a", "y"), ("b", "x")]).unwrap();
        let s = d.stats();
        assert_eq!((s.users, s.items, s.interactions), (2, 2, 3));
        assert_eq!(s.density, 0.75);
    }

    #[test]
    fn duplicates_dropped() {
        let d = InteractionDataset::from_pairs([("a", "x"), ("a", "x"), ("b", "x")]).unwrap();
        assert_eq!(d.num_edges(), 2);
        assert!(d.contains(0, 0));
        assert!(!d.contains(1, 1));
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(
            InteractionDataset::from_pairs(std::iter::empty()),
            Err(ShtError::EmptyDataset)
        ));
    }

    #[test]
    fn out_of_range_edge_rejected() {
        assert!(InteractionDataset::from_edges(2, 2, vec![(0, 2)]).is_err());
    }
}
