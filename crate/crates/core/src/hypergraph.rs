//! Hypergraph transformer: multi-head linear attention between nodes and `K`
//! learnable hyperedges, hierarchical hyperedge transformation, the reverse
//! hyperedge-to-node pass, and iterated layers.
//!
//! Attention is the raw linear dot product (no softmax, no scaling), which
//! lets each head accumulate the `(d/H) x (d/H)` key-value product first and
//! only then apply queries.

use std::time::Instant;

use crate::autodiff::{Tape, Var};
use crate::error::{Result, ShtError};
use crate::rng::Rng;
use crate::tensor::{self, DenseMatrix, Real};

/// Tape handles for one side's transformer parameters.
#[derive(Clone, Copy, Debug)]
pub struct HyperVars {
    /// Hyperedge table, K x d. Row slices are the per-head queries.
    pub z: Var,
    /// Key transform, d x d.
    pub key: Var,
    /// Value transform, d x d.
    pub value: Var,
    /// First hierarchical matrix, K x K.
    pub h1: Var,
    /// Second hierarchical matrix, K x K.
    pub h2: Var,
}

/// Output of [`node_to_hyperedge`].
#[derive(Clone, Debug)]
pub struct EdgeMessages {
    /// Aggregated hyperedge features, K x d.
    pub hyperedges: Var,
    /// Node keys per head, each N x d/H.
    pub keys: Vec<Var>,
    /// Hyperedge queries per head, each K x d/H.
    pub queries: Vec<Var>,
}

fn head_bounds(dim: usize, heads: usize) -> Result<usize> {
    if heads == 0 || dim % heads != 0 {
        return Err(ShtError::invalid(format!("dim {dim} is not divisible by {heads} heads")));
    }
    Ok(dim / heads)
}

/// Node-to-hyperedge propagation,
/// `z̄_{k,h} = Σ_i v_{i,h} (k_{i,h}ᵀ q_{k,h})` with the key-value product
/// accumulated first.
pub fn node_to_hyperedge<T: Real>(tape: &mut Tape<T>, nodes: Var, p: &HyperVars, heads: usize) -> Result<EdgeMessages> {
    let dim = tape.shape(nodes).1;
    let dh = head_bounds(dim, heads)?;
    let key_t = tape.transpose(p.key)?;
    let value_t = tape.transpose(p.value)?;
    let keys_full = tape.matmul(nodes, key_t)?;
    let values_full = tape.matmul(nodes, value_t)?;

    let mut out_heads = Vec::with_capacity(heads);
    let mut keys = Vec::with_capacity(heads);
    let mut queries = Vec::with_capacity(heads);
    for h in 0..heads {
        let (a, b) = (h * dh, (h + 1) * dh);
        let k = tape.slice_cols(keys_full, a, b)?;
        let v = tape.slice_cols(values_full, a, b)?;
        let q = tape.slice_cols(p.z, a, b)?;
        // Σ_i v_i k_iᵀ
        let vt = tape.transpose(v)?;
        let kv = tape.matmul(vt, k)?;
        let kv_t = tape.transpose(kv)?;
        out_heads.push(tape.matmul(q, kv_t)?);
        keys.push(k);
        queries.push(q);
    }
    Ok(EdgeMessages {
        hyperedges: tape.concat_cols(&out_heads)?,
        keys,
        queries,
    })
}

/// `σ(ℋ₂·Y + Y)` with `Y = σ(ℋ₁·X + X)`; with `deep = false` only the first step.
pub fn hhgn<T: Real>(tape: &mut Tape<T>, x: Var, h1: Var, h2: Var, slope: T, deep: bool) -> Result<Var> {
    let step = |tape: &mut Tape<T>, h: Var, x: Var| -> Result<Var> {
        let hx = tape.matmul(h, x)?;
        let pre = tape.add(hx, x)?;
        tape.leaky_relu(pre, slope)
    };
    let y = step(tape, h1, x)?;
    if deep {
        step(tape, h2, y)
    } else {
        Ok(y)
    }
}

/// Hyperedge-to-node propagation. Former queries act as keys and former
/// keys as queries; values are `V·ẑ_k`.
pub fn hyperedge_to_node<T: Real>(
    tape: &mut Tape<T>,
    hyperedges: Var,
    forward: &EdgeMessages,
    value: Var,
) -> Result<Var> {
    let heads = forward.keys.len();
    let dim = tape.shape(hyperedges).1;
    let dh = head_bounds(dim, heads)?;
    let value_t = tape.transpose(value)?;
    let values_full = tape.matmul(hyperedges, value_t)?;
    let mut out_heads = Vec::with_capacity(heads);
    for h in 0..heads {
        let v = tape.slice_cols(values_full, h * dh, (h + 1) * dh)?;
        let vt = tape.transpose(v)?;
        // Σ_k v'_k k'_kᵀ with k'_k = q_k
        let kv = tape.matmul(vt, forward.queries[h])?;
        let kv_t = tape.transpose(kv)?;
        // queries q'_i = k_i
        out_heads.push(tape.matmul(forward.keys[h], kv_t)?);
    }
    tape.concat_cols(&out_heads)
}

/// Per-layer options shared by both sides.
#[derive(Clone, Copy, Debug)]
pub struct LayerOptions<T> {
    pub heads: usize,
    pub slope: T,
    /// Apply the second hierarchical step.
    pub deep: bool,
    /// Inverted dropout rate on each layer output; 0 disables.
    pub dropout: f64,
}

/// Result of one layer: new node embeddings and the keys used to compute them.
pub struct LayerOutput {
    pub nodes: Var,
    pub keys: Vec<Var>,
}

/// One hypergraph transformer iteration on one side.
pub fn hypertrans_layer<T: Real>(
    tape: &mut Tape<T>,
    nodes: Var,
    p: &HyperVars,
    opts: &LayerOptions<T>,
    rng: Option<&mut Rng>,
) -> Result<LayerOutput> {
    let fwd = node_to_hyperedge(tape, nodes, p, opts.heads)?;
    let refined = hhgn(tape, fwd.hyperedges, p.h1, p.h2, opts.slope, opts.deep)?;
    let mut out = hyperedge_to_node(tape, refined, &fwd, p.value)?;
    if let Some(rng) = rng {
        out = dropout(tape, out, opts.dropout, rng)?;
    }
    Ok(LayerOutput { nodes: out, keys: fwd.keys })
}

/// Inverted dropout with a sampled constant mask.
pub fn dropout<T: Real>(tape: &mut Tape<T>, x: Var, rate: f64, rng: &mut Rng) -> Result<Var> {
    if rate <= 0.0 {
        return Ok(x);
    }
    let (r, c) = tape.shape(x);
    let keep = T::of(1.0 / (1.0 - rate));
    let mask = DenseMatrix::from_fn(r, c, |_, _| if rng.uniform() < rate { T::zero() } else { keep });
    let m = tape.constant(mask)?;
    tape.hadamard(x, m)
}

/// Output of [`forward`].
pub struct SideOutput {
    /// `Ê = Σ_{l=1..L} Ẽ_l` (plus `Ẽ_0` when requested).
    pub aggregate: Var,
    /// Per-head keys of the first layer.
    pub first_keys: Vec<Var>,
}

/// `L` stacked iterations on one side. `params[l]` is used for layer `l`,
/// and the last entry is reused when fewer sets than layers are given
/// (shared parameters pass a single set).
pub fn forward<T: Real>(
    tape: &mut Tape<T>,
    input: Var,
    params: &[HyperVars],
    layers: usize,
    opts: &LayerOptions<T>,
    include_input: bool,
    mut rng: Option<&mut Rng>,
) -> Result<SideOutput> {
    if layers == 0 || params.is_empty() {
        return Err(ShtError::invalid("hypergraph forward needs at least one layer and one parameter set"));
    }
    let mut current = input;
    let mut sum = if include_input { Some(input) } else { None };
    let mut first_keys = Vec::new();
    for l in 0..layers {
        let p = &params[l.min(params.len() - 1)];
        let out = hypertrans_layer(tape, current, p, opts, rng.as_deref_mut())?;
        if l == 0 {
            first_keys = out.keys;
        }
        current = out.nodes;
        sum = Some(match sum {
            None => current,
            Some(s) => tape.add(s, current)?,
        });
    }
    Ok(SideOutput {
        aggregate: sum.expect("at least one layer"),
        first_keys,
    })
}

/// Free-incidence replacement for attention: `Z̃ = M·Ẽ`, then the
/// hierarchical step, then `Ẽ' = Mᵀ·Ẑ`. `incidence` is K x N.
pub fn incidence_layer<T: Real>(
    tape: &mut Tape<T>,
    nodes: Var,
    incidence: Var,
    h1: Var,
    h2: Var,
    opts: &LayerOptions<T>,
    rng: Option<&mut Rng>,
) -> Result<Var> {
    let edges = tape.matmul(incidence, nodes)?;
    let refined = hhgn(tape, edges, h1, h2, opts.slope, opts.deep)?;
    let inc_t = tape.transpose(incidence)?;
    let mut out = tape.matmul(inc_t, refined)?;
    if let Some(rng) = rng {
        out = dropout(tape, out, opts.dropout, rng)?;
    }
    Ok(out)
}

/// `p_{u,j} = ê_uᵀ ê_j`
pub fn predict<T: Real>(users: &DenseMatrix<T>, items: &DenseMatrix<T>, u: usize, j: usize) -> T {
    tensor::dot(users.row(u), items.row(j))
}

/// Scores of user `u` against every item in one matrix-vector product.
pub fn score_all<T: Real>(users: &DenseMatrix<T>, items: &DenseMatrix<T>, u: usize) -> Vec<T> {
    let q = users.row(u);
    (0..items.rows()).map(|j| tensor::dot(q, items.row(j))).collect()
}

/// Plain (non-recording) kernels used by the benchmark.
pub mod kernel {
    use super::*;

    fn project<T: Real>(nodes: &DenseMatrix<T>, key: &DenseMatrix<T>, value: &DenseMatrix<T>) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
        Ok((tensor::matmul_nt(nodes, key)?, tensor::matmul_nt(nodes, value)?))
    }

    /// Key-value product first: `O((N + K)·d²/H)`.
    pub fn factorized_node_to_hyperedge<T: Real>(
        nodes: &DenseMatrix<T>,
        z: &DenseMatrix<T>,
        key: &DenseMatrix<T>,
        value: &DenseMatrix<T>,
        heads: usize,
    ) -> Result<DenseMatrix<T>> {
        let dim = nodes.cols();
        let dh = head_bounds(dim, heads)?;
        let (keys, values) = project(nodes, key, value)?;
        let mut out = DenseMatrix::zeros(z.rows(), dim);
        for h in 0..heads {
            let off = h * dh;
            // kv[a][b] = Σ_i v_i[a] k_i[b]
            let mut kv = vec![T::zero(); dh * dh];
            for i in 0..nodes.rows() {
                let k = &keys.row(i)[off..off + dh];
                let v = &values.row(i)[off..off + dh];
                for (a, &va) in v.iter().enumerate() {
                    let row = &mut kv[a * dh..(a + 1) * dh];
                    for (o, &kb) in row.iter_mut().zip(k) {
                        *o += va * kb;
                    }
                }
            }
            for e in 0..z.rows() {
                let q = &z.row(e)[off..off + dh];
                let dst = &mut out.row_mut(e)[off..off + dh];
                for (a, o) in dst.iter_mut().enumerate() {
                    *o = tensor::dot(&kv[a * dh..(a + 1) * dh], q);
                }
            }
        }
        Ok(out)
    }

    /// Explicit node-hyperedge weights first: `O(K·N·d)`.
    pub fn naive_node_to_hyperedge<T: Real>(
        nodes: &DenseMatrix<T>,
        z: &DenseMatrix<T>,
        key: &DenseMatrix<T>,
        value: &DenseMatrix<T>,
        heads: usize,
    ) -> Result<DenseMatrix<T>> {
        let dim = nodes.cols();
        let dh = head_bounds(dim, heads)?;
        let (keys, values) = project(nodes, key, value)?;
        let mut out = DenseMatrix::zeros(z.rows(), dim);
        let mut weights = vec![T::zero(); nodes.rows()];
        for h in 0..heads {
            let off = h * dh;
            for e in 0..z.rows() {
                let q = &z.row(e)[off..off + dh];
                for (i, w) in weights.iter_mut().enumerate() {
                    *w = tensor::dot(&keys.row(i)[off..off + dh], q);
                }
                let dst = &mut out.row_mut(e)[off..off + dh];
                for (i, &w) in weights.iter().enumerate() {
                    for (o, &v) in dst.iter_mut().zip(&values.row(i)[off..off + dh]) {
                        *o += w * v;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One row of the factorization benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub nodes: usize,
    pub hyperedges: usize,
    pub dim: usize,
    pub heads: usize,
    pub naive_ms: f64,
    pub factorized_ms: f64,
    pub max_abs_diff: f64,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "I,K,d,H,naive_ms,factorized_ms,max_abs_diff";

    pub fn speedup(&self) -> f64 {
        self.naive_ms / self.factorized_ms
    }

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{:.3},{:.3},{:e}",
            self.nodes, self.hyperedges, self.dim, self.heads, self.naive_ms, self.factorized_ms, self.max_abs_diff
        )
    }
}

/// Time naive vs factorized node-to-hyperedge propagation on random `f32`
/// inputs (best of `repeats`), and compare their outputs on a node subsample.
pub fn bench_factorization(nodes: usize, hyperedges: usize, dim: usize, heads: usize, repeats: usize, seed: u64) -> Result<BenchRow> {
    head_bounds(dim, heads)?;
    let mut rng = Rng::seed(seed);
    let scale = (1.0 / dim as f64).sqrt();
    let e: DenseMatrix<f32> = rng.normal_matrix(nodes, dim, 1.0);
    let z: DenseMatrix<f32> = rng.normal_matrix(hyperedges, dim, 1.0);
    let key: DenseMatrix<f32> = rng.normal_matrix(dim, dim, scale);
    let value: DenseMatrix<f32> = rng.normal_matrix(dim, dim, scale);

    let time = |f: &dyn Fn() -> Result<DenseMatrix<f32>>| -> Result<(f64, DenseMatrix<f32>)> {
        let mut best = f64::INFINITY;
        let mut out = None;
        for _ in 0..repeats.max(1) {
            let t0 = Instant::now();
            let r = f()?;
            best = best.min(t0.elapsed().as_secs_f64() * 1e3);
            out = Some(r);
        }
        Ok((best, out.unwrap()))
    };
    let (naive_ms, _) = time(&|| kernel::naive_node_to_hyperedge(&e, &z, &key, &value, heads))?;
    let (factorized_ms, _) = time(&|| kernel::factorized_node_to_hyperedge(&e, &z, &key, &value, heads))?;

    // equality check on at most 2048 nodes, in f64
    let sub = nodes.min(2048);
    let idx: Vec<usize> = (0..sub).map(|k| k * nodes / sub).collect();
    let e_sub = e.gather_rows(&idx).to_f64();
    let (z64, k64, v64) = (z.to_f64(), key.to_f64(), value.to_f64());
    let a = kernel::naive_node_to_hyperedge(&e_sub, &z64, &k64, &v64, heads)?;
    let b = kernel::factorized_node_to_hyperedge(&e_sub, &z64, &k64, &v64, heads)?;
    Ok(BenchRow {
        nodes,
        hyperedges,
        dim,
        heads,
        naive_ms,
        factorized_ms,
        max_abs_diff: a.max_abs_diff(&b),
    })
}
