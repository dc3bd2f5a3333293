use std::sync::Arc;

use super::InteractionDataset;
use crate::tensor::{CsrMatrix, Real};

/// Symmetrically degree-normalized user-item adjacency,
/// `w(i, j) = 1 / (sqrt(deg_u(i)) * sqrt(deg_v(j)))`.
#[derive(Clone, Debug)]
pub struct NormalizedAdjacency {
    /// I x J
    pub user_item: CsrMatrix<f64>,
    /// J x I
    pub item_user: CsrMatrix<f64>,
    pub user_degrees: Vec<usize>,
    pub item_degrees: Vec<usize>,
}

impl NormalizedAdjacency {
    pub fn build(train: &InteractionDataset) -> Self {
        let user_degrees = train.user_degrees();
        let item_degrees = train.item_degrees();
        let trip: Vec<(usize, usize, f64)> = train
            .edges()
            .iter()
            .map(|&(u, i)| {
                let w = 1.0 / ((user_degrees[u] as f64).sqrt() * (item_degrees[i] as f64).sqrt());
                (u, i, w)
            })
            .collect();
        let user_item = CsrMatrix::from_triplets(train.num_users(), train.num_items(), &trip)
            .expect("edges are inside the index space");
        let item_user = user_item.transpose();
        Self {
            user_item,
            item_user,
            user_degrees,
            item_degrees,
        }
    }

    pub fn num_users(&self) -> usize {
        self.user_degrees.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_degrees.len()
    }

    /// `(item, weight)` entries of user `u`.
    pub fn user_row(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.user_item.row(u)
    }

    /// `(user, weight)` entries of item `i`.
    pub fn item_row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.item_user.row(i)
    }

    /// Users without training edges; they receive no propagated signal.
    pub fn isolated_users(&self) -> Vec<usize> {
        (0..self.num_users()).filter(|&u| self.user_degrees[u] == 0).collect()
    }

    pub fn isolated_items(&self) -> Vec<usize> {
        (0..self.num_items()).filter(|&i| self.item_degrees[i] == 0).collect()
    }

    /// Both orientations in the requested precision.
    pub fn cast<T: Real>(&self) -> (Arc<CsrMatrix<T>>, Arc<CsrMatrix<T>>) {
        (Arc::new(self.user_item.cast()), Arc::new(self.item_user.cast()))
    }
}
