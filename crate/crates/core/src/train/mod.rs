//! Mini-batch optimization of the combined objective with Adam, per-epoch
//! learning-rate decay, validation-driven model selection and checkpoints.

mod adam;
mod checkpoint;

use std::path::Path;
use std::time::Instant;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, MAGIC};

use crate::autodiff::Tape;
use crate::config::{TrainConfig, EVAL_CUTOFF};
use crate::data::{
    sample_main_pairs_for_users, sample_sal_pairs, InteractionDataset, NormalizedAdjacency, SplitDataset,
};
use crate::error::{Result, ShtError};
use crate::eval::{self, EvaluationReport};
use crate::model::{Bound, Model, ParamStore, StepBatch};
use crate::rng::Rng;
use crate::tensor::DenseMatrix;

/// Averages over one epoch's steps.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    /// 1-based index of the finished epoch.
    pub epoch: usize,
    pub steps: usize,
    pub lr: f64,
    pub loss: f64,
    pub main: f64,
    pub sa: f64,
    pub reg: f64,
}

/// Per-step loss values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub total: f64,
    pub main: f64,
    pub sa: f64,
    pub reg: f64,
}

/// `lr₀ · decay^epoch`
pub fn learning_rate(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.lr * cfg.decay.powi(epoch as i32)
}

/// Model, parameters, optimizer state and sampler state for one training run.
pub struct Trainer {
    cfg: TrainConfig,
    train: InteractionDataset,
    active: Vec<usize>,
    model: Model<f32>,
    params: ParamStore<f32>,
    adam: Adam<f32>,
    rng: Rng,
    epoch: usize,
}

impl Trainer {
    /// Fresh parameters drawn from `Rng::seed(cfg.seed)`; the same generator
    /// then drives sampling and dropout.
    pub fn new(cfg: &TrainConfig, train: &InteractionDataset) -> Result<Self> {
        cfg.validate()?;
        let adj = NormalizedAdjacency::build(train);
        let model = Model::new(cfg, &adj)?;
        let mut rng = Rng::seed(cfg.seed);
        let params = model.init_params(&mut rng)?;
        let adam = Adam::new(cfg.beta1, cfg.beta2, cfg.adam_eps, params.values());
        Self::assemble(cfg, train, model, params, adam, rng, 0)
    }

    fn assemble(
        cfg: &TrainConfig,
        train: &InteractionDataset,
        model: Model<f32>,
        params: ParamStore<f32>,
        adam: Adam<f32>,
        rng: Rng,
        epoch: usize,
    ) -> Result<Self> {
        let active = train.active_users();
        if active.is_empty() {
            return Err(ShtError::EmptyDataset);
        }
        Ok(Self {
            cfg: cfg.clone(),
            train: train.clone(),
            active,
            model,
            params,
            adam,
            rng,
            epoch,
        })
    }

    /// Continue a run saved by [`Trainer::checkpoint`]. Fails when the stored
    /// tensors do not fit the checkpoint's config on this training graph.
    pub fn resume(ckpt: &Checkpoint, train: &InteractionDataset) -> Result<Self> {
        let cfg = &ckpt.config;
        if (ckpt.num_users, ckpt.num_items) != (train.num_users(), train.num_items()) {
            return Err(ShtError::Checkpoint(format!(
                "checkpoint was trained on {} users x {} items, dataset has {} x {}",
                ckpt.num_users,
                ckpt.num_items,
                train.num_users(),
                train.num_items()
            )));
        }
        let adj = NormalizedAdjacency::build(train);
        let model = Model::new(cfg, &adj)?;
        let params = params_from_checkpoint(ckpt, &model)?;
        let mut adam = Adam::new(cfg.beta1, cfg.beta2, cfg.adam_eps, params.values());
        adam.step = ckpt.adam_step;
        for (k, name) in params.names().iter().enumerate() {
            for (slot, prefix) in [(&mut adam.m[k], "adam.m."), (&mut adam.v[k], "adam.v.")] {
                let key = format!("{prefix}{name}");
                let t = ckpt
                    .tensor(&key)
                    .ok_or_else(|| ShtError::Checkpoint(format!("missing optimizer tensor `{key}`")))?;
                if t.shape() != slot.shape() {
                    return Err(ShtError::Checkpoint(format!("optimizer tensor `{key}` has shape {:?}", t.shape())));
                }
                *slot = t.clone();
            }
        }
        Self::assemble(cfg, train, model, params, adam, ckpt.rng.clone(), ckpt.epoch)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn lr(&self) -> f64 {
        learning_rate(&self.cfg, self.epoch)
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.train.num_edges().div_ceil(self.cfg.batch)
    }

    /// Draw a user mini-batch and the main and self-augmented pairs.
    pub fn sample_batch(&mut self) -> Result<StepBatch> {
        let b = self.cfg.batch;
        let users: Vec<usize> = (0..b).map(|_| self.active[self.rng.below(self.active.len())]).collect();
        let main = sample_main_pairs_for_users(&self.train, &users, b, &mut self.rng)?;
        let sal = if self.cfg.sal_enabled() {
            Some(sample_sal_pairs(&self.train, b, &mut self.rng)?)
        } else {
            None
        };
        Ok(StepBatch { main, sal })
    }

    /// Loss and gradients on `batch`, then one Adam update at `lr`.
    pub fn step(&mut self, batch: &StepBatch, lr: f64) -> Result<StepLosses> {
        let mut tape = Tape::new();
        let p = Bound::record(&mut tape, &self.params, true)?;
        let dropout_rng = if self.cfg.dropout > 0.0 { Some(&mut self.rng) } else { None };
        let parts = self.model.loss(&mut tape, &p, self.params.names(), batch, dropout_rng)?;
        let losses = StepLosses {
            total: tape.scalar(parts.total) as f64,
            main: tape.scalar(parts.main) as f64,
            sa: parts.sa.map_or(0.0, |v| tape.scalar(v) as f64),
            reg: tape.scalar(parts.reg) as f64,
        };
        if !losses.total.is_finite() {
            return Err(ShtError::Diverged {
                epoch: self.epoch + 1,
                batch: 0,
                loss: losses.total,
            });
        }
        let vars = p.vars().to_vec();
        let mut grads = tape.backward(parts.total)?;
        let g: Vec<DenseMatrix<f32>> = vars.iter().map(|&v| grads.take(v)).collect();
        self.adam.update(self.params.values_mut(), &g, lr)?;
        Ok(losses)
    }

    /// One pass of `⌈|train| / batch⌉` steps at the current epoch's rate.
    pub fn train_epoch(&mut self) -> Result<EpochStats> {
        let lr = self.lr();
        let steps = self.steps_per_epoch();
        let mut sums = [0.0f64; 4];
        let mut fixed = None;
        for s in 0..steps {
            let batch = match (&fixed, self.cfg.pairs_per_epoch) {
                (Some(b), true) => Clone::clone(b),
                _ => {
                    let b = self.sample_batch()?;
                    if self.cfg.pairs_per_epoch {
                        fixed = Some(b.clone());
                    }
                    b
                }
            };
            let l = self.step(&batch, lr).map_err(|e| match e {
                ShtError::Diverged { epoch, loss, .. } => ShtError::Diverged { epoch, batch: s, loss },
                other => other,
            })?;
            for (acc, x) in sums.iter_mut().zip([l.total, l.main, l.sa, l.reg]) {
                *acc += x;
            }
        }
        self.epoch += 1;
        let n = steps as f64;
        let stats = EpochStats {
            epoch: self.epoch,
            steps,
            lr,
            loss: sums[0] / n,
            main: sums[1] / n,
            sa: sums[2] / n,
            reg: sums[3] / n,
        };
        log::debug!("epoch {} loss {:.4} (main {:.4}, sa {:.4})", stats.epoch, stats.loss, stats.main, stats.sa);
        Ok(stats)
    }

    /// Final embeddings under the current parameters.
    pub fn embed(&self) -> Result<(DenseMatrix<f32>, DenseMatrix<f32>)> {
        self.model.embed(&self.params)
    }

    /// Snapshot of parameters, optimizer state, epoch and sampler state.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut tensors: Vec<(String, DenseMatrix<f32>)> =
            self.params.iter().map(|(n, v)| (n.to_string(), v.clone())).collect();
        for (prefix, moments) in [("adam.m.", &self.adam.m), ("adam.v.", &self.adam.v)] {
            for (name, t) in self.params.names().iter().zip(moments) {
                tensors.push((format!("{prefix}{name}"), t.clone()));
            }
        }
        Checkpoint {
            tensors,
            config: self.cfg.clone(),
            epoch: self.epoch,
            adam_step: self.adam.step,
            num_users: self.model.num_users(),
            num_items: self.model.num_items(),
            rng: self.rng.clone(),
        }
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }

    /// A checkpoint holding `params` in place of the current ones.
    pub fn checkpoint_with(&self, params: &ParamStore<f32>) -> Result<Checkpoint> {
        let mut c = self.checkpoint();
        for (name, t) in c.tensors.iter_mut() {
            if let Some(v) = params.get(name) {
                *t = v.clone();
            }
        }
        Ok(c)
    }
}

/// Parameters stored in `ckpt`, validated against `model`'s layout.
pub fn params_from_checkpoint(ckpt: &Checkpoint, model: &Model<f32>) -> Result<ParamStore<f32>> {
    let mut store = ParamStore::new();
    for (name, t) in ckpt.parameters() {
        store.insert(name, t.clone())?;
    }
    store.check_layout(&model.specs())?;
    Ok(store)
}

/// Validation metrics after one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub stats: EpochStats,
    pub valid: EvaluationReport,
    pub seconds: f64,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str = "epoch,lr,loss,main,sa,reg,valid_recall,valid_ndcg,seconds";
    /// [`EpochRecord::metrics_csv`] columns: everything but wall time.
    pub const METRICS_HEADER: &'static str = "epoch,lr,loss,main,sa,reg,valid_recall,valid_ndcg";

    pub fn csv(&self) -> String {
        format!("{},{:.3}", self.metrics_csv(), self.seconds)
    }

    /// Row without the timing column; identical across reruns with the same seed.
    pub fn metrics_csv(&self) -> String {
        let s = &self.stats;
        format!(
            "{},{:e},{:.9},{:.9},{:.9},{:.9},{:.6},{:.6}",
            s.epoch,
            s.lr,
            s.loss,
            s.main,
            s.sa,
            s.reg,
            self.valid.recall(EVAL_CUTOFF).unwrap_or(0.0),
            self.valid.ndcg(EVAL_CUTOFF).unwrap_or(0.0),
        )
    }
}

/// Result of [`fit`].
pub struct FitOutcome {
    pub trainer: Trainer,
    /// Parameters of the epoch with the best validation Recall@20.
    pub best: ParamStore<f32>,
    /// 1-based; 0 when no epoch ran.
    pub best_epoch: usize,
    pub best_valid: Option<EvaluationReport>,
    pub history: Vec<EpochRecord>,
}

impl FitOutcome {
    pub fn best_embeddings(&self) -> Result<(DenseMatrix<f32>, DenseMatrix<f32>)> {
        self.trainer.model().embed(&self.best)
    }
}

/// Validation report (Recall/NDCG@20, training items masked).
pub fn validate(model: &Model<f32>, params: &ParamStore<f32>, split: &SplitDataset) -> Result<EvaluationReport> {
    let (u, i) = model.embed(params)?;
    Ok(eval::evaluate(&u, &i, &[&split.train], &split.valid, &[EVAL_CUTOFF]))
}

/// Train for `cfg.epochs` epochs from scratch.
pub fn fit(split: &SplitDataset, cfg: &TrainConfig, on_epoch: &mut dyn FnMut(&EpochRecord)) -> Result<FitOutcome> {
    let trainer = Trainer::new(cfg, &split.train)?;
    fit_from(trainer, split, on_epoch)
}

/// Continue `trainer` until it has completed `cfg.epochs` epochs, validating
/// after each one and keeping the best parameters. Stops early after
/// `patience` epochs without improvement when `patience > 0`.
pub fn fit_from(mut trainer: Trainer, split: &SplitDataset, on_epoch: &mut dyn FnMut(&EpochRecord)) -> Result<FitOutcome> {
    let cfg = trainer.config().clone();
    let mut best = trainer.params().clone();
    let mut best_epoch = 0;
    let mut best_valid: Option<EvaluationReport> = None;
    let mut history = Vec::new();
    let mut stale = 0;
    while trainer.epoch() < cfg.epochs {
        let t0 = Instant::now();
        let stats = trainer.train_epoch()?;
        let valid = validate(trainer.model(), trainer.params(), split)?;
        let record = EpochRecord {
            stats,
            valid,
            seconds: t0.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        let r = record.valid.recall(EVAL_CUTOFF).unwrap_or(0.0);
        let improved = best_valid
            .as_ref()
            .is_none_or(|b| r > b.recall(EVAL_CUTOFF).unwrap_or(0.0));
        if improved {
            best = trainer.params().clone();
            best_epoch = record.stats.epoch;
            best_valid = Some(record.valid.clone());
            stale = 0;
        } else {
            stale += 1;
        }
        history.push(record);
        if cfg.patience > 0 && stale >= cfg.patience {
            log::info!("early stop after epoch {} (best {})", trainer.epoch(), best_epoch);
            break;
        }
    }
    Ok(FitOutcome {
        trainer,
        best,
        best_epoch,
        best_valid,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::split;
    use crate::data::synthetic::block_model;

    fn small_split() -> SplitDataset {
        let d = block_model(40, 30, 3, 6, &mut Rng::seed(1)).unwrap();
        split(&d, 7).unwrap()
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            dim: 8,
            hyperedges: 4,
            heads: 2,
            batch: 32,
            epochs: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn lr_schedule_exact() {
        let c = TrainConfig::default();
        for n in 0..30 {
            assert_eq!(learning_rate(&c, n), 1e-3 * 0.96f64.powi(n as i32));
        }
        let s = small_split();
        let mut t = Trainer::new(&cfg(), &s.train).unwrap();
        t.train_epoch().unwrap();
        t.train_epoch().unwrap();
        assert_eq!(t.lr(), 1e-3 * 0.96 * 0.96);
    }

    #[test]
    fn epochs_are_deterministic() {
        let s = small_split();
        let run = || {
            let mut t = Trainer::new(&cfg(), &s.train).unwrap();
            let a = t.train_epoch().unwrap();
            (a, t.params().clone())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let s = small_split();
        let mut straight = Trainer::new(&cfg(), &s.train).unwrap();
        for _ in 0..3 {
            straight.train_epoch().unwrap();
        }
        let mut first = Trainer::new(&cfg(), &s.train).unwrap();
        first.train_epoch().unwrap();
        let bytes = first.checkpoint().to_bytes().unwrap();
        let mut resumed = Trainer::resume(&Checkpoint::from_bytes(&bytes).unwrap(), &s.train).unwrap();
        resumed.train_epoch().unwrap();
        resumed.train_epoch().unwrap();
        assert_eq!(resumed.params(), straight.params());
        assert_eq!(resumed.checkpoint().to_bytes().unwrap(), straight.checkpoint().to_bytes().unwrap());
    }

    #[test]
    fn resume_rejects_other_shapes() {
        let s = small_split();
        let t = Trainer::new(&cfg(), &s.train).unwrap();
        let mut ckpt = t.checkpoint();
        ckpt.config.hyperedges = 5;
        assert!(matches!(Trainer::resume(&ckpt, &s.train), Err(ShtError::Checkpoint(_))));
        let other = block_model(41, 30, 3, 6, &mut Rng::seed(1)).unwrap();
        assert!(Trainer::resume(&t.checkpoint(), &other).is_err());
    }

    #[test]
    fn fit_keeps_best_epoch() {
        let s = small_split();
        let mut seen = 0;
        let out = fit(&s, &cfg(), &mut |_| seen += 1).unwrap();
        assert_eq!(seen, 3);
        let best = out.history[out.best_epoch - 1].valid.recall(20).unwrap();
        assert!(out.history.iter().all(|h| h.valid.recall(20).unwrap() <= best));
        let again = validate(out.trainer.model(), &out.best, &s).unwrap();
        assert_eq!(Some(again), out.best_valid);
    }

    #[test]
    fn fixed_batch_descends() {
        let s = small_split();
        let mut majority = 0;
        for seed in 0..3 {
            let c = TrainConfig { seed, ..cfg() };
            let mut t = Trainer::new(&c, &s.train).unwrap();
            let batch = t.sample_batch().unwrap();
            let mut losses = Vec::new();
            for _ in 0..10 {
                losses.push(t.step(&batch, 1e-4).unwrap().total);
            }
            if losses.windows(2).all(|w| w[1] <= w[0]) {
                majority += 1;
            }
        }
        assert!(majority >= 2);
    }
}
