//! Model and training configuration, serialized as flat `key = value` text.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, ShtError};

/// Component removals used by the ablation study.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Ablation {
    /// Drop the topology-aware embeddings: the transformer input is the id embedding.
    pub no_pos: bool,
    /// Replace node/hyperedge attention by free learnable incidence matrices.
    pub no_trans: bool,
    /// Keep only the first hierarchical hyperedge layer.
    pub no_deep_h: bool,
    /// Force a single hypergraph iteration.
    pub no_high_h: bool,
    /// Remove the hypergraph transformer; predict from the fused local embeddings.
    pub no_hyper: bool,
    /// Replace the meta network by one plain perceptron shared by both sides.
    pub no_meta: bool,
    /// Disable the self-augmented solidity ranking loss.
    pub no_sal: bool,
}

impl Ablation {
    pub const FLAGS: [&'static str; 7] = ["pos", "trans", "deeph", "highh", "hyper", "meta", "sal"];

    pub fn none() -> Self {
        Self::default()
    }

    pub fn single(flag: &str) -> Result<Self> {
        let mut a = Self::default();
        a.enable(flag)?;
        Ok(a)
    }

    pub fn enable(&mut self, flag: &str) -> Result<()> {
        let f = flag.trim().trim_start_matches('-').to_ascii_lowercase();
        match f.as_str() {
            "pos" => self.no_pos = true,
            "trans" => self.no_trans = true,
            "deeph" => self.no_deep_h = true,
            "highh" => self.no_high_h = true,
            "hyper" => self.no_hyper = true,
            "meta" => self.no_meta = true,
            "sal" => self.no_sal = true,
            _ => {
                return Err(ShtError::Config(format!(
                    "unknown ablation flag `{flag}` (expected one of {})",
                    Self::FLAGS.join(", ")
                )))
            }
        }
        Ok(())
    }

    fn enabled(&self) -> Vec<&'static str> {
        let bits = [
            self.no_pos,
            self.no_trans,
            self.no_deep_h,
            self.no_high_h,
            self.no_hyper,
            self.no_meta,
            self.no_sal,
        ];
        Self::FLAGS.iter().zip(bits).filter(|(_, b)| *b).map(|(f, _)| *f).collect()
    }

    /// Table-style name: `SHT` or `-Pos`, `-Trans`, ...
    pub fn label(&self) -> String {
        let names = ["-Pos", "-Trans", "-DeepH", "-HighH", "-Hyper", "-Meta", "-SAL"];
        let on = self.enabled();
        if on.is_empty() {
            return "SHT".into();
        }
        on.iter()
            .map(|f| names[Self::FLAGS.iter().position(|g| g == f).unwrap()])
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.enabled().join(","))
    }
}

impl FromStr for Ablation {
    type Err = ShtError;

    fn from_str(s: &str) -> Result<Self> {
        let mut a = Self::default();
        for flag in s.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            a.enable(flag)?;
        }
        Ok(a)
    }
}

/// Which parameters the `λ₂‖Θ‖²` term covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegScope {
    All,
    EmbeddingsOnly,
}

impl fmt::Display for RegScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegScope::All => "all",
            RegScope::EmbeddingsOnly => "embeddings",
        })
    }
}

impl FromStr for RegScope {
    type Err = ShtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(RegScope::All),
            "embeddings" => Ok(RegScope::EmbeddingsOnly),
            _ => Err(ShtError::Config(format!("reg_scope must be `all` or `embeddings`, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub hyperedges: usize,
    pub layers: usize,
    pub heads: usize,
    /// Weight of the self-augmented loss.
    pub lambda1: f64,
    /// Weight of the squared Frobenius regularizer.
    pub lambda2: f64,
    pub batch: usize,
    pub lr: f64,
    pub decay: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub seed: u64,
    pub ablation: Ablation,
    /// Negative slope of the leaky ReLU used as σ everywhere.
    pub slope: f64,
    /// Std of the id-embedding initializer.
    pub init_std: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Stop when validation Recall@20 has not improved for this many epochs; 0 disables.
    pub patience: usize,
    pub reg_scope: RegScope,
    /// Cut the gradient path from the self-augmented loss into the labeler.
    pub detach_labels: bool,
    /// Predict solidity from raw id embeddings instead of the fused inputs.
    pub sal_raw_embeddings: bool,
    /// Add the id embedding itself to the two-hop convolution output.
    pub gcn_residual: bool,
    /// Include the transformer input in the layer sum.
    pub sum_layer0: bool,
    /// Give every hypergraph iteration its own parameters.
    pub per_layer_params: bool,
    /// Draw sampled pairs once per epoch instead of per mini-batch.
    pub pairs_per_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            hyperedges: 128,
            layers: 2,
            heads: 4,
            lambda1: 1e-3,
            lambda2: 1e-4,
            batch: 256,
            lr: 1e-3,
            decay: 0.96,
            dropout: 0.0,
            epochs: 50,
            seed: 2022,
            ablation: Ablation::none(),
            slope: 0.5,
            init_std: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            patience: 0,
            reg_scope: RegScope::All,
            detach_labels: false,
            sal_raw_embeddings: false,
            gcn_residual: false,
            sum_layer0: false,
            per_layer_params: false,
            pairs_per_epoch: false,
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse()
        .map_err(|_| ShtError::Config(format!("invalid value `{value}` for key `{key}`")))
}

impl TrainConfig {
    pub const KEYS: [&'static str; 26] = [
        "dim",
        "hyperedges",
        "layers",
        "heads",
        "lambda1",
        "lambda2",
        "batch",
        "lr",
        "decay",
        "dropout",
        "epochs",
        "seed",
        "ablation",
        "slope",
        "init_std",
        "beta1",
        "beta2",
        "adam_eps",
        "patience",
        "reg_scope",
        "detach_labels",
        "sal_raw_embeddings",
        "gcn_residual",
        "sum_layer0",
        "per_layer_params",
        "pairs_per_epoch",
    ];

    /// Set one key from its text form. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dim" => self.dim = parse(key, value)?,
            "hyperedges" => self.hyperedges = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "heads" => self.heads = parse(key, value)?,
            "lambda1" => self.lambda1 = parse(key, value)?,
            "lambda2" => self.lambda2 = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "decay" => self.decay = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "ablation" => self.ablation = value.parse()?,
            "slope" => self.slope = parse(key, value)?,
            "init_std" => self.init_std = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "adam_eps" => self.adam_eps = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "reg_scope" => self.reg_scope = value.trim().parse()?,
            "detach_labels" => self.detach_labels = parse(key, value)?,
            "sal_raw_embeddings" => self.sal_raw_embeddings = parse(key, value)?,
            "gcn_residual" => self.gcn_residual = parse(key, value)?,
            "sum_layer0" => self.sum_layer0 = parse(key, value)?,
            "per_layer_params" => self.per_layer_params = parse(key, value)?,
            "pairs_per_epoch" => self.pairs_per_epoch = parse(key, value)?,
            _ => return Err(ShtError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("dim", self.dim.to_string()),
            ("hyperedges", self.hyperedges.to_string()),
            ("layers", self.layers.to_string()),
            ("heads", self.heads.to_string()),
            ("lambda1", self.lambda1.to_string()),
            ("lambda2", self.lambda2.to_string()),
            ("batch", self.batch.to_string()),
            ("lr", self.lr.to_string()),
            ("decay", self.decay.to_string()),
            ("dropout", self.dropout.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("ablation", self.ablation.to_string()),
            ("slope", self.slope.to_string()),
            ("init_std", self.init_std.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("patience", self.patience.to_string()),
            ("reg_scope", self.reg_scope.to_string()),
            ("detach_labels", self.detach_labels.to_string()),
            ("sal_raw_embeddings", self.sal_raw_embeddings.to_string()),
            ("gcn_residual", self.gcn_residual.to_string()),
            ("sum_layer0", self.sum_layer0.to_string()),
            ("per_layer_params", self.per_layer_params.to_string()),
            ("pairs_per_epoch", self.pairs_per_epoch.to_string()),
        ]
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_pairs() {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    /// Parse `key = value` lines onto the defaults. `#` starts a comment.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (key, value) in parse_kv_lines(text)? {
            c.set(&key, &value)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Iterations actually run, after ablations.
    pub fn effective_layers(&self) -> usize {
        if self.ablation.no_high_h {
            1
        } else {
            self.layers
        }
    }

    /// Whether the self-augmented branch is computed.
    pub fn sal_enabled(&self) -> bool {
        !self.ablation.no_sal && !self.ablation.no_hyper && self.lambda1 > 0.0
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(ShtError::Config(m));
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return fail(format!("dim ({}) must be a positive multiple of heads ({})", self.dim, self.heads));
        }
        if self.hyperedges == 0 {
            return fail("hyperedges must be positive".into());
        }
        if self.layers == 0 {
            return fail("layers must be at least 1".into());
        }
        if self.batch == 0 {
            return fail("batch must be positive".into());
        }
        for (name, v) in [("lr", self.lr), ("decay", self.decay), ("slope", self.slope), ("init_std", self.init_std)] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_eps <= 0.0 {
            return fail("adam betas must be in [0, 1) and adam_eps positive".into());
        }
        Ok(())
    }
}

/// Cutoff used for validation-based model selection.
pub const EVAL_CUTOFF: usize = 20;

/// Split `key = value` lines; blank lines and `#` comments are ignored.
pub fn parse_kv_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ShtError::Config(format!("line {}: expected `key = value`", n + 1)));
        };
        out.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}
