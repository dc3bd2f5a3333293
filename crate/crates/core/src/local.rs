//! Topology-aware node embeddings from a two-layer light-weight graph
//! convolution, fused additively with the id embeddings.

use std::sync::Arc;

use crate::autodiff::{Tape, Var};
use crate::data::NormalizedAdjacency;
use crate::error::Result;
use crate::tensor::{CsrMatrix, Real};

/// The normalized adjacency in both orientations, ready for propagation.
#[derive(Clone, Debug)]
pub struct Propagator<T> {
    /// Ā, I x J
    pub user_item: Arc<CsrMatrix<T>>,
    /// Āᵀ, J x I
    pub item_user: Arc<CsrMatrix<T>>,
}

impl<T: Real> Propagator<T> {
    pub fn new(adj: &NormalizedAdjacency) -> Self {
        let (user_item, item_user) = adj.cast();
        Self { user_item, item_user }
    }
}

/// `Ē_u = Ā Āᵀ E_u + Ā E_v` and `Ē_v = Āᵀ Ā E_v + Āᵀ E_u`, as sparse passes.
///
/// With `residual`, the id embeddings are added to each output as an order-0
/// term. Isolated nodes get zero rows (without `residual`).
pub fn topo_embed<T: Real>(
    tape: &mut Tape<T>,
    prop: &Propagator<T>,
    users: Var,
    items: Var,
    residual: bool,
) -> Result<(Var, Var)> {
    let (fwd, back) = (&prop.user_item, &prop.item_user);
    // Āᵀ E_u  (J x d) and  Ā E_v  (I x d) are each reused by both sides
    let items_from_users = tape.spmm(back, fwd, users)?;
    let users_from_items = tape.spmm(fwd, back, items)?;
    let user_two_hop = tape.spmm(fwd, back, items_from_users)?;
    let item_two_hop = tape.spmm(back, fwd, users_from_items)?;
    let mut user_bar = tape.add(user_two_hop, users_from_items)?;
    let mut item_bar = tape.add(item_two_hop, items_from_users)?;
    if residual {
        user_bar = tape.add(user_bar, users)?;
        item_bar = tape.add(item_bar, items)?;
    }
    Ok((user_bar, item_bar))
}

/// `ẽ = e + ē`
pub fn fuse_inputs<T: Real>(tape: &mut Tape<T>, ids: Var, topology: Var) -> Result<Var> {
    tape.add(ids, topology)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InteractionDataset;
    use crate::rng::Rng;
    use crate::tensor::{matmul, DenseMatrix};

    fn setup(users: usize, items: usize, edges: Vec<(usize, usize)>) -> (NormalizedAdjacency, Propagator<f64>) {
        let d = InteractionDataset::from_edges(users, items, edges).unwrap();
        let adj = NormalizedAdjacency::build(&d);
        let p = Propagator::new(&adj);
        (adj, p)
    }

    fn run(p: &Propagator<f64>, eu: &DenseMatrix<f64>, ev: &DenseMatrix<f64>) -> (DenseMatrix<f64>, DenseMatrix<f64>) {
        let mut t = Tape::new();
        let u = t.constant(eu.clone()).unwrap();
        let v = t.constant(ev.clone()).unwrap();
        let (bu, bv) = topo_embed(&mut t, p, u, v, false).unwrap();
        (t.value(bu).clone(), t.value(bv).clone())
    }

    /// Dense oracle: explicit Ā, Ā·Āᵀ and Āᵀ·Ā products.
    fn dense_oracle(adj: &NormalizedAdjacency, eu: &DenseMatrix<f64>, ev: &DenseMatrix<f64>) -> (DenseMatrix<f64>, DenseMatrix<f64>) {
        let a = adj.user_item.to_dense();
        let at = a.transpose();
        let aat = matmul(&a, &at).unwrap();
        let ata = matmul(&at, &a).unwrap();
        let mut u = matmul(&aat, eu).unwrap();
        u.add_assign(&matmul(&a, ev).unwrap());
        let mut v = matmul(&ata, ev).unwrap();
        v.add_assign(&matmul(&at, eu).unwrap());
        (u, v)
    }

    #[test]
    fn zeros_in_zeros_out() {
        let (_, p) = setup(3, 3, vec![(0, 0), (1, 1), (2, 2), (0, 2)]);
        let (u, v) = run(&p, &DenseMatrix::zeros(3, 4), &DenseMatrix::zeros(3, 4));
        assert!(u.data().iter().chain(v.data()).all(|&x| x == 0.0));
    }

    #[test]
    fn single_edge_copies_item_embedding() {
        let (_, p) = setup(1, 1, vec![(0, 0)]);
        let x = DenseMatrix::from_vec(1, 3, vec![0.5, -1.0, 2.0]).unwrap();
        let (u, _) = run(&p, &DenseMatrix::zeros(1, 3), &x);
        assert_eq!(u, x);
    }

    #[test]
    fn symmetric_users_get_identical_rows() {
        let (_, p) = setup(3, 3, vec![(0, 0), (0, 1), (1, 0), (1, 1), (2, 2)]);
        let mut eu = Rng::seed(3).normal_matrix::<f64>(3, 4, 1.0);
        let r0 = eu.row(0).to_vec();
        eu.row_mut(1).copy_from_slice(&r0);
        let ev = Rng::seed(4).normal_matrix::<f64>(3, 4, 1.0);
        let (u, _) = run(&p, &eu, &ev);
        assert_eq!(u.row(0), u.row(1));
    }

    #[test]
    fn sparse_passes_match_dense_oracle() {
        let mut rng = Rng::seed(9);
        for trial in 0..10 {
            let (users, items) = (5 + trial % 7, 4 + trial % 9);
            let edges: Vec<_> = (0..40).map(|_| (rng.below(users), rng.below(items))).collect();
            let (adj, p) = setup(users, items, edges);
            let eu = rng.normal_matrix::<f64>(users, 6, 1.0);
            let ev = rng.normal_matrix::<f64>(items, 6, 1.0);
            let (u, v) = run(&p, &eu, &ev);
            let (ou, ov) = dense_oracle(&adj, &eu, &ev);
            assert!(u.max_abs_diff(&ou) < 1e-6);
            assert!(v.max_abs_diff(&ov) < 1e-6);
        }
    }

    #[test]
    fn linear_in_embeddings() {
        let (_, p) = setup(4, 5, vec![(0, 0), (0, 3), (1, 1), (2, 4), (3, 2), (3, 0)]);
        let mut rng = Rng::seed(10);
        let eu = rng.normal_matrix::<f64>(4, 3, 1.0);
        let ev = rng.normal_matrix::<f64>(5, 3, 1.0);
        let alpha = 1.7;
        let (u1, v1) = run(&p, &eu.scale(alpha), &ev.scale(alpha));
        let (u0, v0) = run(&p, &eu, &ev);
        assert!(u1.max_abs_diff(&u0.scale(alpha)) < 1e-12);
        assert!(v1.max_abs_diff(&v0.scale(alpha)) < 1e-12);
    }

    /// A user more than two hops away from user 0 can change without
    /// affecting row 0.
    #[test]
    fn two_hop_locality() {
        // chain: u0 - i0 - u1 - i1 - u2 - i2 - u3
        let edges = vec![(0, 0), (1, 0), (1, 1), (2, 1), (2, 2), (3, 2)];
        let (_, p) = setup(4, 3, edges);
        let mut rng = Rng::seed(12);
        let eu = rng.normal_matrix::<f64>(4, 3, 1.0);
        let ev = rng.normal_matrix::<f64>(3, 3, 1.0);
        let (base, _) = run(&p, &eu, &ev);
        let mut far_u = eu.clone();
        far_u.row_mut(3).iter_mut().for_each(|x| *x += 5.0);
        let mut far_v = ev.clone();
        far_v.row_mut(2).iter_mut().for_each(|x| *x -= 3.0);
        let (moved, _) = run(&p, &far_u, &far_v);
        assert_eq!(base.row(0), moved.row(0));
        // ... while a 2-hop neighbour does matter
        let mut near = eu.clone();
        near.row_mut(1).iter_mut().for_each(|x| *x += 1.0);
        let (moved, _) = run(&p, &near, &ev);
        assert_ne!(base.row(0), moved.row(0));
    }

    #[test]
    fn fuse_is_elementwise_sum() {
        let mut rng = Rng::seed(13);
        let e = rng.normal_matrix::<f64>(3, 4, 1.0);
        let bar = rng.normal_matrix::<f64>(3, 4, 1.0);
        let mut t = Tape::new();
        let ve = t.constant(e.clone()).unwrap();
        let vb = t.constant(bar.clone()).unwrap();
        let fused = fuse_inputs(&mut t, ve, vb).unwrap();
        for r in 0..3 {
            for c in 0..4 {
                assert_eq!(t.value(fused).get(r, c), e.get(r, c) + bar.get(r, c));
            }
        }
        let z = t.constant(DenseMatrix::zeros(3, 4)).unwrap();
        let same = fuse_inputs(&mut t, ve, z).unwrap();
        assert_eq!(t.value(same), &e);
        let back = t.sub(fused, vb).unwrap();
        assert!(t.value(back).max_abs_diff(&e) < 1e-15);
    }

    #[test]
    fn adjacency_shape_mismatch_is_error() {
        let (_, p) = setup(2, 2, vec![(0, 0), (1, 1)]);
        let mut t = Tape::new();
        let u = t.constant(DenseMatrix::<f64>::zeros(3, 2)).unwrap();
        let v = t.constant(DenseMatrix::<f64>::zeros(2, 2)).unwrap();
        assert!(topo_embed(&mut t, &p, u, v, false).is_err());
    }
}
