//! Parameter layout, initialization and the full forward/loss graph.

use std::collections::HashMap;

use crate::augment::{self, KeyTransform, MetaVars, PlainVars, SolidityVars};
use crate::autodiff::{Tape, Var};
use crate::config::{RegScope, TrainConfig};
use crate::data::{EdgePairBatch, NormalizedAdjacency};
use crate::error::{Result, ShtError};
use crate::hypergraph::{self, HyperVars, LayerOptions};
use crate::local::{self, Propagator};
use crate::rng::Rng;
use crate::tensor::{DenseMatrix, Real};

pub const USER_EMB: &str = "user_emb";
pub const ITEM_EMB: &str = "item_emb";
const SIDES: [&str; 2] = ["user", "item"];

/// How a tensor is initialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Normal(f64),
    /// Glorot uniform over the given fan sizes.
    Xavier(usize, usize),
    Zeros,
}

/// Name, shape and initializer of one learnable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: (usize, usize),
    pub init: Init,
}

fn spec(name: impl Into<String>, shape: (usize, usize), init: Init) -> ParamSpec {
    ParamSpec {
        name: name.into(),
        shape,
        init,
    }
}

/// Every tensor the configured variant needs, in a fixed order.
pub fn param_specs(cfg: &TrainConfig, num_users: usize, num_items: usize) -> Vec<ParamSpec> {
    let (d, k) = (cfg.dim, cfg.hyperedges);
    let ab = &cfg.ablation;
    let mut out = vec![
        spec(USER_EMB, (num_users, d), Init::Normal(cfg.init_std)),
        spec(ITEM_EMB, (num_items, d), Init::Normal(cfg.init_std)),
    ];
    if ab.no_hyper {
        return out;
    }
    let sets = if cfg.per_layer_params { cfg.effective_layers() } else { 1 };
    let sal = cfg.sal_enabled();
    for (side, n) in SIDES.iter().zip([num_users, num_items]) {
        for l in 0..sets {
            let p = format!("{side}.hyper{l}");
            if !ab.no_trans || (sal && l == 0) {
                out.push(spec(format!("{p}.z"), (k, d), Init::Xavier(k, d)));
                out.push(spec(format!("{p}.key"), (d, d), Init::Xavier(d, d)));
            }
            if ab.no_trans {
                out.push(spec(format!("{side}.incidence{l}"), (k, n), Init::Xavier(k, n)));
            } else {
                out.push(spec(format!("{p}.value"), (d, d), Init::Xavier(d, d)));
            }
            out.push(spec(format!("{p}.h1"), (k, k), Init::Xavier(k, k)));
            if !ab.no_deep_h {
                out.push(spec(format!("{p}.h2"), (k, k), Init::Xavier(k, k)));
            }
        }
        if sal && !ab.no_meta {
            let m = format!("{side}.meta");
            out.push(spec(format!("{m}.v1"), (d * d, d), Init::Xavier(d, d)));
            out.push(spec(format!("{m}.w0"), (d, d), Init::Xavier(d, d)));
            out.push(spec(format!("{m}.v2"), (d, d), Init::Xavier(d, d)));
            out.push(spec(format!("{m}.b0"), (1, d), Init::Zeros));
        }
    }
    if sal {
        if ab.no_meta {
            out.push(spec("meta_plain.w", (d, d), Init::Xavier(d, d)));
            out.push(spec("meta_plain.b", (1, d), Init::Zeros));
        }
        out.push(spec("solidity.d", (d, 1), Init::Xavier(d, 1)));
        out.push(spec("solidity.t", (d, 2 * d), Init::Xavier(2 * d, d)));
        out.push(spec("solidity.c", (1, d), Init::Zeros));
    }
    out
}

/// Ordered, named parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T: Real> {
    names: Vec<String>,
    values: Vec<DenseMatrix<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Draw initial values for every spec.
    pub fn init(specs: &[ParamSpec], rng: &mut Rng) -> Result<Self> {
        let mut s = Self::new();
        for p in specs {
            let (r, c) = p.shape;
            let value = match p.init {
                Init::Normal(std) => rng.normal_matrix(r, c, std),
                Init::Xavier(a, b) => rng.uniform_matrix(r, c, (6.0 / (a + b) as f64).sqrt()),
                Init::Zeros => DenseMatrix::zeros(r, c),
            };
            s.insert(&p.name, value)?;
        }
        Ok(s)
    }

    pub fn insert(&mut self, name: &str, value: DenseMatrix<T>) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(ShtError::invalid(format!("duplicate parameter `{name}`")));
        }
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[DenseMatrix<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [DenseMatrix<T>] {
        &mut self.values
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&DenseMatrix<T>> {
        self.position(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut DenseMatrix<T>> {
        self.position(name).map(move |i| &mut self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseMatrix<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(DenseMatrix::len).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(DenseMatrix::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Error unless names and shapes equal `specs` exactly.
    pub fn check_layout(&self, specs: &[ParamSpec]) -> Result<()> {
        if self.len() != specs.len() {
            return Err(ShtError::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                specs.len(),
                self.len()
            )));
        }
        for (p, (name, value)) in specs.iter().zip(self.iter()) {
            if p.name != name || p.shape != value.shape() {
                return Err(ShtError::Checkpoint(format!(
                    "parameter `{name}` {:?} does not match expected `{}` {:?}",
                    value.shape(),
                    p.name,
                    p.shape
                )));
            }
        }
        Ok(())
    }
}

/// Parameters placed on a tape, addressable by name.
pub struct Bound<'a> {
    index: &'a HashMap<String, usize>,
    vars: Vec<Var>,
}

impl<'a> Bound<'a> {
    /// Pair `vars` (one per stored tensor, same order) with the store's names.
    pub fn new<T: Real>(store: &'a ParamStore<T>, vars: Vec<Var>) -> Result<Self> {
        if vars.len() != store.len() {
            return Err(ShtError::invalid("bound variable count differs from the parameter store"));
        }
        Ok(Self {
            index: &store.index,
            vars,
        })
    }

    /// Record every stored tensor on `tape`, as a trainable leaf or a constant.
    pub fn record<T: Real>(tape: &mut Tape<T>, store: &'a ParamStore<T>, trainable: bool) -> Result<Self> {
        let vars = store
            .values
            .iter()
            .map(|v| if trainable { tape.param(v.clone()) } else { tape.constant(v.clone()) })
            .collect::<Result<Vec<_>>>()?;
        Self::new(store, vars)
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| ShtError::invalid(format!("missing parameter `{name}`")))
    }

    fn has(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }
}

/// Node representations produced by one forward pass.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub raw_users: Var,
    pub raw_items: Var,
    /// `Ẽ₀`: id plus topology embeddings.
    pub fused_users: Var,
    pub fused_items: Var,
    /// `Ê`, used for prediction.
    pub final_users: Var,
    pub final_items: Var,
    /// Full first-layer keys per side, when the transformer ran.
    pub user_keys: Option<Var>,
    pub item_keys: Option<Var>,
}

/// Sampled pairs for one optimization step.
#[derive(Clone, Debug)]
pub struct StepBatch {
    pub main: EdgePairBatch,
    pub sal: Option<EdgePairBatch>,
}

/// Loss handles for one step.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    pub main: Var,
    pub sa: Option<Var>,
    pub reg: Var,
}

/// The configured model structure over a fixed training graph.
#[derive(Clone, Debug)]
pub struct Model<T> {
    cfg: TrainConfig,
    num_users: usize,
    num_items: usize,
    prop: Propagator<T>,
}

impl<T: Real> Model<T> {
    pub fn new(cfg: &TrainConfig, adj: &NormalizedAdjacency) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            num_users: adj.num_users(),
            num_items: adj.num_items(),
            prop: Propagator::new(adj),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        param_specs(&self.cfg, self.num_users, self.num_items)
    }

    pub fn init_params(&self, rng: &mut Rng) -> Result<ParamStore<T>> {
        ParamStore::init(&self.specs(), rng)
    }

    fn layer_options(&self) -> LayerOptions<T> {
        LayerOptions {
            heads: self.cfg.heads,
            slope: T::of(self.cfg.slope),
            deep: !self.cfg.ablation.no_deep_h,
            dropout: self.cfg.dropout,
        }
    }

    fn hyper_vars(&self, p: &Bound, side: &str, l: usize) -> Result<HyperVars> {
        let pre = format!("{side}.hyper{l}");
        let h1 = p.get(&format!("{pre}.h1"))?;
        let h2 = if self.cfg.ablation.no_deep_h {
            h1
        } else {
            p.get(&format!("{pre}.h2"))?
        };
        Ok(HyperVars {
            z: p.get(&format!("{pre}.z"))?,
            key: p.get(&format!("{pre}.key"))?,
            value: p.get(&format!("{pre}.value"))?,
            h1,
            h2,
        })
    }

    fn param_sets(&self) -> usize {
        if self.cfg.per_layer_params {
            self.cfg.effective_layers()
        } else {
            1
        }
    }

    /// One side of the hypergraph stage. Returns `(Ê, first-layer keys)`.
    fn hyper_side(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        side: &str,
        input: Var,
        mut rng: Option<&mut Rng>,
    ) -> Result<(Var, Option<Var>)> {
        let opts = self.layer_options();
        let layers = self.cfg.effective_layers();
        let sets = self.param_sets();
        if !self.cfg.ablation.no_trans {
            let params = (0..sets).map(|l| self.hyper_vars(p, side, l)).collect::<Result<Vec<_>>>()?;
            let out = hypergraph::forward(tape, input, &params, layers, &opts, self.cfg.sum_layer0, rng)?;
            let keys = augment::assemble_keys(tape, &out.first_keys)?;
            return Ok((out.aggregate, Some(keys)));
        }

        let mut current = input;
        let mut sum = if self.cfg.sum_layer0 { Some(input) } else { None };
        for l in 0..layers {
            let s = l.min(sets - 1);
            let inc = p.get(&format!("{side}.incidence{s}"))?;
            let h1 = p.get(&format!("{side}.hyper{s}.h1"))?;
            let h2 = if self.cfg.ablation.no_deep_h {
                h1
            } else {
                p.get(&format!("{side}.hyper{s}.h2"))?
            };
            current = hypergraph::incidence_layer(tape, current, inc, h1, h2, &opts, rng.as_deref_mut())?;
            sum = Some(match sum {
                None => current,
                Some(acc) => tape.add(acc, current)?,
            });
        }
        let key_name = format!("{side}.hyper0.key");
        let keys = if p.has(&key_name) {
            let k = p.get(&key_name)?;
            let kt = tape.transpose(k)?;
            Some(tape.matmul(input, kt)?)
        } else {
            None
        };
        Ok((sum.expect("at least one layer"), keys))
    }

    /// Local encoder followed by the hypergraph transformer (unless ablated).
    pub fn encode(&self, tape: &mut Tape<T>, p: &Bound, mut rng: Option<&mut Rng>) -> Result<Encoded> {
        let raw_users = p.get(USER_EMB)?;
        let raw_items = p.get(ITEM_EMB)?;
        let (fused_users, fused_items) = if self.cfg.ablation.no_pos {
            (raw_users, raw_items)
        } else {
            let (tu, ti) = local::topo_embed(tape, &self.prop, raw_users, raw_items, self.cfg.gcn_residual)?;
            (local::fuse_inputs(tape, raw_users, tu)?, local::fuse_inputs(tape, raw_items, ti)?)
        };
        if self.cfg.ablation.no_hyper {
            return Ok(Encoded {
                raw_users,
                raw_items,
                fused_users,
                fused_items,
                final_users: fused_users,
                final_items: fused_items,
                user_keys: None,
                item_keys: None,
            });
        }
        let (final_users, user_keys) = self.hyper_side(tape, p, "user", fused_users, rng.as_deref_mut())?;
        let (final_items, item_keys) = self.hyper_side(tape, p, "item", fused_items, rng.as_deref_mut())?;
        Ok(Encoded {
            raw_users,
            raw_items,
            fused_users,
            fused_items,
            final_users,
            final_items,
            user_keys,
            item_keys,
        })
    }

    fn key_transform(&self, p: &Bound, side: &str) -> Result<KeyTransform> {
        if self.cfg.ablation.no_meta {
            return Ok(KeyTransform::Plain(PlainVars {
                w: p.get("meta_plain.w")?,
                b: p.get("meta_plain.b")?,
            }));
        }
        let m = format!("{side}.meta");
        Ok(KeyTransform::Meta(MetaVars {
            v1: p.get(&format!("{m}.v1"))?,
            w0: p.get(&format!("{m}.w0"))?,
            v2: p.get(&format!("{m}.v2"))?,
            b0: p.get(&format!("{m}.b0"))?,
        }))
    }

    fn solidity_vars(p: &Bound) -> Result<SolidityVars> {
        Ok(SolidityVars {
            d: p.get("solidity.d")?,
            t: p.get("solidity.t")?,
            c: p.get("solidity.c")?,
        })
    }

    /// Solidity labels `s` for `edges`, `R x 1`.
    pub fn solidity_labels(&self, tape: &mut Tape<T>, p: &Bound, enc: &Encoded, edges: &[(usize, usize)]) -> Result<Var> {
        let (Some(uk), Some(ik)) = (enc.user_keys, enc.item_keys) else {
            return Err(ShtError::invalid("solidity labels need the hypergraph branch and the self-augmented head"));
        };
        let (us, is): (Vec<usize>, Vec<usize>) = edges.iter().copied().unzip();
        let slope = T::of(self.cfg.slope);
        let ku = tape.gather_rows(uk, &us)?;
        let ki = tape.gather_rows(ik, &is)?;
        let zu = p.get("user.hyper0.z")?;
        let zi = p.get("item.hyper0.z")?;
        let gu = augment::key_transform(tape, ku, zu, &self.key_transform(p, "user")?, slope)?;
        let gi = augment::key_transform(tape, ki, zi, &self.key_transform(p, "item")?, slope)?;
        augment::solidity_label(tape, gu, gi, &Self::solidity_vars(p)?, slope)
    }

    /// `Σ max(0, 1 − (p_pos − p_neg))` over the main pairs.
    pub fn main_loss(&self, tape: &mut Tape<T>, enc: &Encoded, batch: &EdgePairBatch) -> Result<Var> {
        let pos: Vec<_> = batch.pairs.iter().map(|pair| pair.0).collect();
        let neg: Vec<_> = batch.pairs.iter().map(|pair| pair.1).collect();
        let sp = augment::solidity_predict(tape, enc.final_users, enc.final_items, &pos)?;
        let sn = augment::solidity_predict(tape, enc.final_users, enc.final_items, &neg)?;
        main_loss(tape, sp, sn)
    }

    /// Self-augmented loss over `batch`.
    pub fn sa_loss(&self, tape: &mut Tape<T>, p: &Bound, enc: &Encoded, batch: &EdgePairBatch) -> Result<Var> {
        let r = batch.len();
        let mut edges: Vec<(usize, usize)> = batch.pairs.iter().map(|pair| pair.0).collect();
        edges.extend(batch.pairs.iter().map(|pair| pair.1));
        let mut labels = self.solidity_labels(tape, p, enc, &edges)?;
        if self.cfg.detach_labels {
            labels = tape.detach(labels);
        }
        let (eu, ei) = if self.cfg.sal_raw_embeddings {
            (enc.raw_users, enc.raw_items)
        } else {
            (enc.fused_users, enc.fused_items)
        };
        let preds = augment::solidity_predict(tape, eu, ei, &edges)?;
        let first: Vec<usize> = (0..r).collect();
        let second: Vec<usize> = (r..2 * r).collect();
        let p1 = tape.gather_rows(preds, &first)?;
        let p2 = tape.gather_rows(preds, &second)?;
        let l1 = tape.gather_rows(labels, &first)?;
        let l2 = tape.gather_rows(labels, &second)?;
        augment::sa_loss(tape, p1, p2, l1, l2)
    }

    /// `Σ ‖θ‖²_F` over the regularized tensors.
    pub fn reg_term(&self, tape: &mut Tape<T>, p: &Bound, names: &[String]) -> Result<Var> {
        let mut acc: Option<Var> = None;
        for name in names {
            if self.cfg.reg_scope == RegScope::EmbeddingsOnly && name != USER_EMB && name != ITEM_EMB {
                continue;
            }
            let v = p.get(name)?;
            let sq = tape.hadamard(v, v)?;
            let s = tape.sum_all(sq)?;
            acc = Some(match acc {
                None => s,
                Some(a) => tape.add(a, s)?,
            });
        }
        match acc {
            Some(a) => Ok(a),
            None => tape.constant(DenseMatrix::zeros(1, 1)),
        }
    }

    /// The full training objective for one step.
    pub fn loss(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        names: &[String],
        batch: &StepBatch,
        rng: Option<&mut Rng>,
    ) -> Result<LossParts> {
        let enc = self.encode(tape, p, rng)?;
        let main = self.main_loss(tape, &enc, &batch.main)?;
        let sa = match (&batch.sal, self.cfg.sal_enabled()) {
            (Some(b), true) if !b.is_empty() => Some(self.sa_loss(tape, p, &enc, b)?),
            _ => None,
        };
        let reg = self.reg_term(tape, p, names)?;
        let total = total_loss(tape, main, sa, reg, T::of(self.cfg.lambda1), T::of(self.cfg.lambda2))?;
        Ok(LossParts { total, main, sa, reg })
    }

    /// Final user and item embeddings `Ê` for evaluation.
    pub fn embed(&self, store: &ParamStore<T>) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
        let mut tape = Tape::new();
        let p = Bound::record(&mut tape, store, false)?;
        let enc = self.encode(&mut tape, &p, None)?;
        Ok((tape.value(enc.final_users).clone(), tape.value(enc.final_items).clone()))
    }

    /// Solidity labels for arbitrary edges, evaluated in chunks.
    pub fn solidity(&self, store: &ParamStore<T>, edges: &[(usize, usize)]) -> Result<Vec<T>> {
        let mut tape = Tape::new();
        let p = Bound::record(&mut tape, store, false)?;
        let enc = self.encode(&mut tape, &p, None)?;
        let mut out = Vec::with_capacity(edges.len());
        for chunk in edges.chunks(4096) {
            let s = self.solidity_labels(&mut tape, &p, &enc, chunk)?;
            out.extend_from_slice(tape.value(s).data());
        }
        Ok(out)
    }
}

/// `Σ_r max(0, 1 − (p_pos − p_neg))`
pub fn main_loss<T: Real>(tape: &mut Tape<T>, pos: Var, neg: Var) -> Result<Var> {
    let diff = tape.sub(pos, neg)?;
    let flipped = tape.scale(diff, -T::one())?;
    let margin = tape.add_scalar(flipped, T::one())?;
    let h = tape.hinge(margin)?;
    tape.sum_all(h)
}

/// `main + λ₁·sa + λ₂·reg`
pub fn total_loss<T: Real>(tape: &mut Tape<T>, main: Var, sa: Option<Var>, reg: Var, lambda1: T, lambda2: T) -> Result<Var> {
    let mut total = main;
    if let Some(sa) = sa {
        let w = tape.scale(sa, lambda1)?;
        total = tape.add(total, w)?;
    }
    let r = tape.scale(reg, lambda2)?;
    tape.add(total, r)
}
