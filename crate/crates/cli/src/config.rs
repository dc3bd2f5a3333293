//! Run configuration: every training key plus data, output and
//! command-specific keys, read from a flat `key = value` file and overridden
//! by `--key value` flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sht::config::{parse_kv_lines, TrainConfig};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "SHT_OUTPUT_ROOT";

/// A problem with the invocation rather than with the run itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    /// Interaction file, one `user<TAB>item` pair per line.
    pub data: Option<PathBuf>,
    /// Directory holding a saved split.
    pub split_dir: Option<PathBuf>,
    /// Block-model dataset `users,items,blocks,per_user`.
    pub synthetic: Option<Vec<usize>>,
    pub data_seed: u64,
    pub split_seed: u64,
    pub output: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Resume training from this checkpoint.
    pub resume: Option<PathBuf>,
    pub cutoffs: Vec<usize>,
    /// Share of training edges replaced by noise before `train`.
    pub noise_ratio: f64,
    pub export_solidity: bool,
    pub ratios: Vec<f64>,
    pub boundaries: Vec<usize>,
    pub axis: String,
    pub flags: Vec<String>,
    pub grid: String,
    pub palette: String,
    pub color_steps: usize,
    pub color_mu: f64,
    pub bench_nodes: Vec<usize>,
    pub bench_repeats: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            data: None,
            split_dir: None,
            synthetic: None,
            data_seed: 0,
            split_seed: 0,
            output: None,
            checkpoint: None,
            resume: None,
            cutoffs: vec![20, 40],
            noise_ratio: 0.0,
            export_solidity: false,
            ratios: vec![0.05, 0.1, 0.15, 0.2, 0.25],
            boundaries: vec![10, 20, 40, 80],
            axis: "both".into(),
            flags: sht::config::Ablation::FLAGS.iter().map(|s| s.to_string()).collect(),
            grid: "dim=8,16,32,64;hyperedges=32,64,128,256;layers=1,2,3".into(),
            palette: "e6194b,3cb44b,4363d8,f58231,911eb4".into(),
            color_steps: 300,
            color_mu: 1.0,
            bench_nodes: vec![1_000, 10_000, 100_000],
            bench_repeats: 3,
        }
    }
}

fn list<T: FromStr>(key: &str, value: &str) -> anyhow::Result<Vec<T>> {
    let v = value.trim();
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|x| x.trim().parse().map_err(|_| UsageError(format!("invalid entry `{x}` in `{key}`")).into()))
        .collect()
}

fn one<T: FromStr>(key: &str, value: &str) -> anyhow::Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| UsageError(format!("invalid value `{value}` for key `{key}`")).into())
}

fn path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn show(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunOptions {
    pub const KEYS: [&'static str; 21] = [
        "data",
        "split_dir",
        "synthetic",
        "data_seed",
        "split_seed",
        "output",
        "checkpoint",
        "resume",
        "cutoffs",
        "noise_ratio",
        "export_solidity",
        "ratios",
        "boundaries",
        "axis",
        "flags",
        "grid",
        "palette",
        "color_steps",
        "color_mu",
        "bench_nodes",
        "bench_repeats",
    ];

    fn set(&mut self, key: &str, value: &str) -> anyhow::Result<bool> {
        match key {
            "data" => self.data = path(value),
            "split_dir" => self.split_dir = path(value),
            "synthetic" => {
                let v: Vec<usize> = list(key, value)?;
                if !(v.is_empty() || v.len() == 4) {
                    return usage("`synthetic` takes users,items,blocks,per_user");
                }
                self.synthetic = (!v.is_empty()).then_some(v);
            }
            "data_seed" => self.data_seed = one(key, value)?,
            "split_seed" => self.split_seed = one(key, value)?,
            "output" => self.output = path(value),
            "checkpoint" => self.checkpoint = path(value),
            "resume" => self.resume = path(value),
            "cutoffs" => self.cutoffs = list(key, value)?,
            "noise_ratio" => self.noise_ratio = one(key, value)?,
            "export_solidity" => self.export_solidity = one(key, value)?,
            "ratios" => self.ratios = list(key, value)?,
            "boundaries" => self.boundaries = list(key, value)?,
            "axis" => self.axis = value.trim().to_lowercase(),
            "flags" => self.flags = list(key, value)?,
            "grid" => self.grid = value.trim().to_string(),
            "palette" => self.palette = value.trim().to_string(),
            "color_steps" => self.color_steps = one(key, value)?,
            "color_mu" => self.color_mu = one(key, value)?,
            "bench_nodes" => self.bench_nodes = list(key, value)?,
            "bench_repeats" => self.bench_repeats = one(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("data", show(&self.data)),
            ("split_dir", show(&self.split_dir)),
            ("synthetic", self.synthetic.as_deref().map(join).unwrap_or_default()),
            ("data_seed", self.data_seed.to_string()),
            ("split_seed", self.split_seed.to_string()),
            ("output", show(&self.output)),
            ("checkpoint", show(&self.checkpoint)),
            ("resume", show(&self.resume)),
            ("cutoffs", join(&self.cutoffs)),
            ("noise_ratio", self.noise_ratio.to_string()),
            ("export_solidity", self.export_solidity.to_string()),
            ("ratios", join(&self.ratios)),
            ("boundaries", join(&self.boundaries)),
            ("axis", self.axis.clone()),
            ("flags", self.flags.join(",")),
            ("grid", self.grid.clone()),
            ("palette", self.palette.clone()),
            ("color_steps", self.color_steps.to_string()),
            ("color_mu", self.color_mu.to_string()),
            ("bench_nodes", join(&self.bench_nodes)),
            ("bench_repeats", self.bench_repeats.to_string()),
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub run: RunOptions,
}

impl RunConfig {
    /// Set one key; unknown keys are a usage error.
    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        if TrainConfig::KEYS.contains(&key) {
            return self
                .train
                .set(key, value)
                .map_err(|e| UsageError(e.to_string()).into());
        }
        if self.run.set(key, value)? {
            Ok(())
        } else {
            usage(format!("unknown key `{key}`"))
        }
    }

    /// Defaults, then the file, then the command-line pairs.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> anyhow::Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = file {
            let text = std::fs::read_to_string(p)
                .map_err(|e| UsageError(format!("cannot read config file {}: {e}", p.display())))?;
            let pairs = parse_kv_lines(&text).map_err(|e| UsageError(format!("{}: {e}", p.display())))?;
            for (k, v) in pairs {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.train.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }

    /// Output root: the `output` key, else the environment, else `runs`.
    pub fn output_root(&self) -> PathBuf {
        self.run
            .output
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.train.to_pairs().into_iter().chain(self.run.to_pairs()) {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn keys() -> impl Iterator<Item = &'static str> {
        TrainConfig::KEYS
            .iter()
            .chain(RunOptions::KEYS.iter())
            .copied()
    }
}

/// `--key value` and `--key=value` tokens into pairs.
pub fn parse_overrides(tokens: &[String]) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = tokens.iter();
    while let Some(tok) = it.next() {
        let Some(flag) = tok.strip_prefix("--") else {
            return usage(format!("unexpected argument `{tok}`; overrides are written `--key value`"));
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => match it.next() {
                Some(v) => (flag.to_string(), v.clone()),
                None => return usage(format!("flag `--{flag}` needs a value")),
            },
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}
