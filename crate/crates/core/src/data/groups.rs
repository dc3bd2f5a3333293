use super::SplitDataset;
use crate::error::{Result, ShtError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    User,
    Item,
}

/// Interaction-count buckets. Group `g` holds nodes whose training degree is
/// at most `boundaries[g]` and above `boundaries[g - 1]`; degrees beyond the
/// last boundary fall into the last group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupAssignment {
    pub axis: Axis,
    pub boundaries: Vec<usize>,
    pub group_of: Vec<usize>,
}

impl GroupAssignment {
    pub fn num_groups(&self) -> usize {
        self.boundaries.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.num_groups()];
        for &g in &self.group_of {
            s[g] += 1;
        }
        s
    }

    pub fn members(&self, g: usize) -> Vec<usize> {
        (0..self.group_of.len()).filter(|&n| self.group_of[n] == g).collect()
    }

    /// Human-readable degree range of group `g`, e.g. `0-8` or `9-16`.
    pub fn label(&self, g: usize) -> String {
        let lo = if g == 0 { 0 } else { self.boundaries[g - 1] + 1 };
        if g + 1 == self.num_groups() && g > 0 {
            format!("{lo}+")
        } else {
            format!("{lo}-{}", self.boundaries[g])
        }
    }
}

pub fn sparsity_groups(split: &SplitDataset, axis: Axis, boundaries: &[usize]) -> Result<GroupAssignment> {
    if boundaries.is_empty() {
        return Err(ShtError::invalid("at least one group boundary is required"));
    }
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ShtError::invalid("group boundaries must be strictly increasing"));
    }
    let degrees = match axis {
        Axis::User => split.train.user_degrees(),
        Axis::Item => split.train.item_degrees(),
    };
    let last = boundaries.len() - 1;
    let group_of = degrees
        .iter()
        .map(|&d| boundaries.iter().position(|&b| d <= b).unwrap_or(last))
        .collect();
    Ok(GroupAssignment {
        axis,
        boundaries: boundaries.to_vec(),
        group_of,
    })
}
