//! Edge-solidity labels from meta-network-adapted hypergraph keys, and the
//! pairwise solidity-ranking loss that pulls the local embeddings toward them.

use crate::autodiff::{Tape, Var};
use crate::error::{Result, ShtError};
use crate::tensor::Real;

/// Meta-network parameters of one side.
#[derive(Clone, Copy, Debug)]
pub struct MetaVars {
    /// `d x d x d`, stored as `(d*d) x d`.
    pub v1: Var,
    /// `d x d`
    pub w0: Var,
    /// `d x d`
    pub v2: Var,
    /// `1 x d`
    pub b0: Var,
}

/// Plain perceptron used when the meta network is ablated.
#[derive(Clone, Copy, Debug)]
pub struct PlainVars {
    /// `d x d`
    pub w: Var,
    /// `1 x d`
    pub b: Var,
}

/// Either adaptive or plain key transform.
#[derive(Clone, Copy, Debug)]
pub enum KeyTransform {
    Meta(MetaVars),
    Plain(PlainVars),
}

/// Solidity head parameters.
#[derive(Clone, Copy, Debug)]
pub struct SolidityVars {
    /// `d x 1`
    pub d: Var,
    /// `d x 2d`
    pub t: Var,
    /// `1 x d`
    pub c: Var,
}

/// Concatenate per-head key slices back into full key vectors.
pub fn assemble_keys<T: Real>(tape: &mut Tape<T>, heads: &[Var]) -> Result<Var> {
    match heads {
        [] => Err(ShtError::invalid("no key heads to assemble")),
        [single] => Ok(*single),
        _ => tape.concat_cols(heads),
    }
}

/// `Γ = σ(W x + b)` per row of `x`, with `W = V₁·z̄ + W₀`, `b = V₂ z̄ + b₀`
/// and `z̄` the mean hyperedge row.
pub fn meta_transform<T: Real>(tape: &mut Tape<T>, x: Var, hyperedges: Var, meta: &MetaVars, slope: T) -> Result<Var> {
    let d = tape.shape(x).1;
    let zbar = tape.mean_rows(hyperedges)?;
    let contracted = tape.tensor_contract(meta.v1, zbar, d, d)?;
    let w = tape.add(contracted, meta.w0)?;
    let v2_t = tape.transpose(meta.v2)?;
    let zv2 = tape.matmul(zbar, v2_t)?;
    let b = tape.add(zv2, meta.b0)?;
    let w_t = tape.transpose(w)?;
    let xw = tape.matmul(x, w_t)?;
    let pre = tape.add_row(xw, b)?;
    tape.leaky_relu(pre, slope)
}

/// `Γ = σ(W x + b)` with fixed weights.
pub fn plain_transform<T: Real>(tape: &mut Tape<T>, x: Var, plain: &PlainVars, slope: T) -> Result<Var> {
    let w_t = tape.transpose(plain.w)?;
    let xw = tape.matmul(x, w_t)?;
    let pre = tape.add_row(xw, plain.b)?;
    tape.leaky_relu(pre, slope)
}

pub fn key_transform<T: Real>(tape: &mut Tape<T>, x: Var, hyperedges: Var, kt: &KeyTransform, slope: T) -> Result<Var> {
    match kt {
        KeyTransform::Meta(m) => meta_transform(tape, x, hyperedges, m, slope),
        KeyTransform::Plain(p) => plain_transform(tape, x, p, slope),
    }
}

/// `s = sigm(d⃗ᵀ σ(T [Γᵢ; Γⱼ] + Γᵢ + Γⱼ + c))`, one row per edge. Returns `R x 1`.
pub fn solidity_label<T: Real>(tape: &mut Tape<T>, users: Var, items: Var, head: &SolidityVars, slope: T) -> Result<Var> {
    let joined = tape.concat_cols(&[users, items])?;
    let t_t = tape.transpose(head.t)?;
    let mixed = tape.matmul(joined, t_t)?;
    let with_u = tape.add(mixed, users)?;
    let with_i = tape.add(with_u, items)?;
    let pre = tape.add_row(with_i, head.c)?;
    let act = tape.leaky_relu(pre, slope)?;
    let logit = tape.matmul(act, head.d)?;
    tape.sigmoid(logit)
}

/// `ŝ = e_uᵀ e_v` for each listed edge. Returns `R x 1`.
pub fn solidity_predict<T: Real>(tape: &mut Tape<T>, users: Var, items: Var, edges: &[(usize, usize)]) -> Result<Var> {
    let (us, is): (Vec<usize>, Vec<usize>) = edges.iter().copied().unzip();
    let eu = tape.gather_rows(users, &us)?;
    let ei = tape.gather_rows(items, &is)?;
    tape.dot_rows(eu, ei)
}

/// `Σ_r max(0, 1 − (ŝ_{r,1} − ŝ_{r,2})(s_{r,1} − s_{r,2}))`
pub fn sa_loss<T: Real>(tape: &mut Tape<T>, pred_first: Var, pred_second: Var, label_first: Var, label_second: Var) -> Result<Var> {
    let dp = tape.sub(pred_first, pred_second)?;
    let dl = tape.sub(label_first, label_second)?;
    let agree = tape.hadamard(dp, dl)?;
    let neg = tape.scale(agree, -T::one())?;
    let margin = tape.add_scalar(neg, T::one())?;
    let terms = tape.hinge(margin)?;
    tape.sum_all(terms)
}
