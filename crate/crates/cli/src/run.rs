//! Run directories and dataset resolution.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use sht::data::synthetic::block_model;
use sht::data::{load_interactions, load_split_manifest, split, write_split_manifest, SplitDataset};
use sht::train::Checkpoint;
use sht::Rng;

use crate::config::{usage, RunConfig};

/// A fresh `<root>/<command>-<timestamp>` directory.
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    /// Creates the directory and echoes the effective config into it.
    pub fn create(cfg: &RunConfig, command: &str) -> anyhow::Result<Self> {
        let root = cfg.output_root();
        fs::create_dir_all(&root).with_context(|| format!("output: cannot create {}", root.display()))?;
        let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
        let base = format!("{command}-{stamp}");
        let mut path = root.join(&base);
        let mut n = 1;
        while path.exists() {
            n += 1;
            path = root.join(format!("{base}-{n}"));
        }
        fs::create_dir(&path).with_context(|| format!("output: cannot create {}", path.display()))?;
        let dir = Self { path };
        dir.write("config.txt", &cfg.to_kv_string())?;
        Ok(dir)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> anyhow::Result<()> {
        let p = self.file(name);
        fs::write(&p, contents).with_context(|| format!("cannot write {}", p.display()))
    }

    /// A nested run directory for one variant or grid point.
    pub fn child(&self, name: &str, cfg: &RunConfig) -> anyhow::Result<Self> {
        let path = self.path.join(name);
        fs::create_dir_all(&path).with_context(|| format!("cannot create {}", path.display()))?;
        let dir = Self { path };
        dir.write("config.txt", &cfg.to_kv_string())?;
        Ok(dir)
    }
}

/// The dataset named by `split_dir`, `data` or `synthetic`, in that order.
pub fn load_split(cfg: &RunConfig) -> anyhow::Result<SplitDataset> {
    let r = &cfg.run;
    if let Some(dir) = &r.split_dir {
        return load_split_manifest(dir).with_context(|| format!("split_dir: cannot load split from {}", dir.display()));
    }
    if let Some(file) = &r.data {
        let data = load_interactions(file).with_context(|| format!("data: cannot load {}", file.display()))?;
        return split(&data, r.split_seed).context("data: cannot split");
    }
    if let Some(spec) = &r.synthetic {
        let data = block_model(spec[0], spec[1], spec[2], spec[3], &mut Rng::seed(r.data_seed)).context("synthetic")?;
        return split(&data, r.split_seed).context("synthetic: cannot split");
    }
    usage("missing key `data`: set `data` (interaction file), `split_dir` or `synthetic`")
}

/// Stores the split under `<run>/split` so the run can be repeated.
pub fn record_split(dir: &RunDir, s: &SplitDataset) -> anyhow::Result<()> {
    write_split_manifest(&dir.file("split"), s).context("cannot write split manifest")
}

pub fn require_checkpoint(cfg: &RunConfig) -> anyhow::Result<Checkpoint> {
    let Some(p) = &cfg.run.checkpoint else {
        return usage("missing key `checkpoint`");
    };
    load_checkpoint(p, "checkpoint")
}

pub fn load_checkpoint(p: &Path, key: &str) -> anyhow::Result<Checkpoint> {
    Checkpoint::load(p).with_context(|| format!("{key}: cannot load {}", p.display()))
}
