use std::collections::HashSet;
use std::fmt::Write as _;

use log::info;
use sht::config::{Ablation, TrainConfig, EVAL_CUTOFF};
use sht::data::synthetic::block_model;
use sht::data::{inject_noise_avoiding, sparsity_groups, write_interactions, Axis, NormalizedAdjacency, SplitDataset};
use sht::eval::{
    embedding_to_color, evaluate, groups_csv, noise_robustness, sparsity_report, write_solidity_csv, ColorConfig,
    EvaluationReport, NoisePoint, Rgb, SolidityRow,
};
use sht::hypergraph::{bench_factorization, BenchRow};
use sht::model::{Model, ParamStore};
use sht::train::{fit_from, params_from_checkpoint, Checkpoint, EpochRecord, FitOutcome, Trainer};
use sht::{DenseMatrix, Rng};

use crate::config::{usage, RunConfig, UsageError};
use crate::run::{load_checkpoint, load_split, record_split, require_checkpoint, RunDir};

/// Sparsity buckets are reported at this cutoff.
const GROUP_CUTOFF: usize = 40;

/// Stream for the optional training-graph corruption of `train`.
const TRAIN_NOISE_STREAM: u64 = 0x747261696e;

fn cutoffs(cfg: &RunConfig) -> anyhow::Result<Vec<usize>> {
    let mut c = cfg.run.cutoffs.clone();
    if c.is_empty() || c.contains(&0) {
        return usage("`cutoffs` needs at least one positive cutoff");
    }
    if !c.contains(&EVAL_CUTOFF) {
        c.push(EVAL_CUTOFF);
    }
    c.sort_unstable();
    c.dedup();
    Ok(c)
}

/// Validation (training items masked) and test (training and validation
/// items masked) reports.
fn reports(users: &DenseMatrix<f32>, items: &DenseMatrix<f32>, s: &SplitDataset, cuts: &[usize]) -> (EvaluationReport, EvaluationReport) {
    (
        evaluate(users, items, &[&s.train], &s.valid, cuts),
        evaluate(users, items, &[&s.train, &s.valid], &s.test, cuts),
    )
}

fn summary(name: &str, r: &EvaluationReport) -> String {
    r.rows
        .iter()
        .map(|m| format!("{name} Recall@{} {:.4} NDCG@{} {:.4}", m.n, m.recall, m.n, m.ndcg))
        .collect::<Vec<_>>()
        .join(", ")
}

struct Trained {
    outcome: FitOutcome,
    valid: EvaluationReport,
    test: EvaluationReport,
}

/// Fit, then write `epochs.csv`, `timing.csv`, `best.ckpt`, `last.ckpt`,
/// `valid.csv` and `test.csv` into `dir`.
fn train_into(trainer: Trainer, s: &SplitDataset, dir: &RunDir, cuts: &[usize]) -> anyhow::Result<Trained> {
    let mut epochs = format!("{}\n", EpochRecord::METRICS_HEADER);
    let mut timing = String::from("epoch,seconds\n");
    let outcome = fit_from(trainer, s, &mut |r| {
        info!(
            "epoch {:>3} loss {:.4} valid Recall@{EVAL_CUTOFF} {:.4} ({:.1}s)",
            r.stats.epoch,
            r.stats.loss,
            r.valid.recall(EVAL_CUTOFF).unwrap_or(0.0),
            r.seconds
        );
        let _ = writeln!(epochs, "{}", r.metrics_csv());
        let _ = writeln!(timing, "{},{:.3}", r.stats.epoch, r.seconds);
    })?;
    dir.write("epochs.csv", &epochs)?;
    dir.write("timing.csv", &timing)?;
    outcome.trainer.save_checkpoint(&dir.file("last.ckpt"))?;
    outcome.trainer.checkpoint_with(&outcome.best)?.save(&dir.file("best.ckpt"))?;
    let (u, i) = outcome.best_embeddings()?;
    let (valid, test) = reports(&u, &i, s, cuts);
    dir.write("valid.csv", &valid.csv())?;
    dir.write("test.csv", &test.csv())?;
    Ok(Trained { outcome, valid, test })
}

pub fn train(cfg: &RunConfig) -> anyhow::Result<()> {
    let cuts = cutoffs(cfg)?;
    // a resumed run keeps the checkpoint's training keys except `epochs`
    let resume = match &cfg.run.resume {
        Some(p) => {
            let mut ck = load_checkpoint(p, "resume")?;
            ck.config.epochs = cfg.train.epochs;
            Some(ck)
        }
        None => None,
    };
    let mut cfg = cfg.clone();
    if let Some(ck) = &resume {
        cfg.train = ck.config.clone();
    }
    let ratio = cfg.run.noise_ratio;
    if !(0.0..0.5).contains(&ratio) {
        return usage(format!("`noise_ratio` must be in [0, 0.5), got {ratio}"));
    }
    let clean = load_split(&cfg)?;
    let dir = RunDir::create(&cfg, "train")?;

    let (s, noise) = if ratio > 0.0 {
        let mut avoid: HashSet<(usize, usize)> = clean.valid.edges().iter().copied().collect();
        avoid.extend(clean.test.edges().iter().copied());
        let mut rng = Rng::seed(cfg.train.seed).fork(TRAIN_NOISE_STREAM);
        let noisy = inject_noise_avoiding(&clean.train, ratio, &avoid, &mut rng)?;
        info!("replaced {} of {} training edges by noise", noisy.noise_count(), clean.train.num_edges());
        let s = SplitDataset {
            train: noisy.data.clone(),
            ..clean.clone()
        };
        (s, Some(noisy.is_noise))
    } else {
        (clean, None)
    };
    record_split(&dir, &s)?;

    let trainer = match &resume {
        Some(ck) => Trainer::resume(ck, &s.train)?,
        None => Trainer::new(&cfg.train, &s.train)?,
    };
    let t = train_into(trainer, &s, &dir, &cuts)?;

    if cfg.run.export_solidity {
        let edges = s.train.edges();
        let scores = t.outcome.trainer.model().solidity(&t.outcome.best, edges)?;
        let rows: Vec<SolidityRow> = edges
            .iter()
            .zip(&scores)
            .enumerate()
            .map(|(k, (&(u, j), &sc))| SolidityRow {
                user: s.train.user_ids().external(u).to_string(),
                item: s.train.item_ids().external(j).to_string(),
                score: sc as f64,
                is_noise: noise.as_ref().map(|m| m[k]),
            })
            .collect();
        write_solidity_csv(&dir.file("solidity.csv"), &rows)?;
    }

    println!("best epoch {}", t.outcome.best_epoch);
    println!("{}", summary("valid", &t.valid));
    println!("{}", summary("test", &t.test));
    println!("run directory: {}", dir.path.display());
    Ok(())
}

/// The checkpoint's model bound to the split's training graph.
fn restore(ck: &Checkpoint, s: &SplitDataset) -> anyhow::Result<(Model<f32>, ParamStore<f32>)> {
    if (ck.num_users, ck.num_items) != (s.train.num_users(), s.train.num_items()) {
        anyhow::bail!(
            "checkpoint was trained on {} users x {} items but the split has {} x {}",
            ck.num_users,
            ck.num_items,
            s.train.num_users(),
            s.train.num_items()
        );
    }
    let model = Model::new(&ck.config, &NormalizedAdjacency::build(&s.train))?;
    let params = params_from_checkpoint(ck, &model)?;
    Ok((model, params))
}

pub fn evaluate_cmd(cfg: &RunConfig) -> anyhow::Result<()> {
    let cuts = cutoffs(cfg)?;
    let ck = require_checkpoint(cfg)?;
    let s = load_split(cfg)?;
    let (model, params) = restore(&ck, &s)?;
    let dir = RunDir::create(cfg, "evaluate")?;
    record_split(&dir, &s)?;
    let (u, i) = model.embed(&params)?;
    let (valid, test) = reports(&u, &i, &s, &cuts);
    dir.write("valid.csv", &valid.csv())?;
    dir.write("test.csv", &test.csv())?;
    println!("{}", summary("valid", &valid));
    println!("{}", summary("test", &test));
    println!("run directory: {}", dir.path.display());
    Ok(())
}

pub fn noise_test(cfg: &RunConfig) -> anyhow::Result<()> {
    if cfg.run.ratios.iter().any(|r| !(0.0..0.5).contains(r)) {
        return usage("`ratios` must lie in [0, 0.5)");
    }
    let s = load_split(cfg)?;
    let dir = RunDir::create(cfg, "noise-test")?;
    record_split(&dir, &s)?;
    let points = noise_robustness(&s, &cfg.run.ratios, &cfg.train)?;
    let mut csv = format!("{}\n", NoisePoint::CSV_HEADER);
    for p in &points {
        let _ = writeln!(csv, "{}", p.csv());
        println!(
            "ratio {:.2}: Recall@{EVAL_CUTOFF} {:.4} ({:.3} of clean), NDCG@{EVAL_CUTOFF} {:.4} ({:.3} of clean)",
            p.ratio, p.recall, p.relative_recall, p.ndcg, p.relative_ndcg
        );
    }
    dir.write("noise.csv", &csv)?;
    println!("run directory: {}", dir.path.display());
    Ok(())
}

pub fn sparsity(cfg: &RunConfig) -> anyhow::Result<()> {
    let axes = match cfg.run.axis.as_str() {
        "user" => vec![Axis::User],
        "item" => vec![Axis::Item],
        "both" => vec![Axis::User, Axis::Item],
        other => return usage(format!("`axis` must be user, item or both, got `{other}`")),
    };
    let b = &cfg.run.boundaries;
    if b.is_empty() || b.windows(2).any(|w| w[0] >= w[1]) {
        return usage("`boundaries` must be a nonempty strictly increasing list");
    }
    let ck = require_checkpoint(cfg)?;
    let s = load_split(cfg)?;
    let (model, params) = restore(&ck, &s)?;
    let dir = RunDir::create(cfg, "sparsity-report")?;
    record_split(&dir, &s)?;
    let (u, i) = model.embed(&params)?;
    let mut rows = Vec::new();
    for axis in axes {
        let groups = sparsity_groups(&s, axis, b)?;
        rows.extend(sparsity_report(&u, &i, &s, &groups, GROUP_CUTOFF));
    }
    let csv = groups_csv(&rows);
    dir.write("groups.csv", &csv)?;
    print!("{csv}");
    println!("run directory: {}", dir.path.display());
    Ok(())
}

fn file_name(label: &str) -> String {
    label.trim_start_matches('-').to_lowercase().replace([' ', '-'], "_")
}

pub fn ablate(cfg: &RunConfig) -> anyhow::Result<()> {
    let cuts = cutoffs(cfg)?;
    let mut variants = vec![("SHT".to_string(), Ablation::none())];
    for f in &cfg.run.flags {
        let a = Ablation::single(f).map_err(|e| UsageError(format!("flags: {e}")))?;
        variants.push((a.label(), a));
    }
    let s = load_split(cfg)?;
    let dir = RunDir::create(cfg, "ablate")?;
    record_split(&dir, &s)?;
    let mut table = String::from("variant");
    for n in &cuts {
        let _ = write!(table, ",recall@{n},ndcg@{n}");
    }
    table.push('\n');
    for (label, ablation) in variants {
        let mut sub = cfg.clone();
        sub.train.ablation = ablation;
        let child = dir.child(&file_name(&label), &sub)?;
        info!("training variant {label}");
        let t = train_into(Trainer::new(&sub.train, &s.train)?, &s, &child, &cuts)?;
        table.push_str(&label);
        for m in &t.test.rows {
            let _ = write!(table, ",{:.4},{:.4}", m.recall, m.ndcg);
        }
        table.push('\n');
        println!("{label}: {}", summary("test", &t.test));
    }
    dir.write("ablation.csv", &table)?;
    println!("run directory: {}", dir.path.display());
    Ok(())
}

/// `key=v1,v2;key=v1` into `(key, values)`; keys must be training keys.
fn parse_grid(text: &str, base: &TrainConfig) -> anyhow::Result<Vec<(String, Vec<String>)>> {
    let mut out = Vec::new();
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let Some((k, vs)) = part.split_once('=') else {
            return usage(format!("grid entry `{part}` is not `key=v1,v2`"));
        };
        let k = k.trim().to_string();
        if !TrainConfig::KEYS.contains(&k.as_str()) {
            return usage(format!("grid: unknown training key `{k}`"));
        }
        let values: Vec<String> = vs.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        for v in &values {
            let mut c = base.clone();
            c.set(&k, v).and_then(|_| c.validate()).map_err(|e| UsageError(format!("grid: {e}")))?;
        }
        out.push((k, values));
    }
    if out.is_empty() {
        return usage("`grid` is empty");
    }
    Ok(out)
}

pub fn sweep(cfg: &RunConfig) -> anyhow::Result<()> {
    let grid = parse_grid(&cfg.run.grid, &cfg.train)?;
    let cuts = cutoffs(cfg)?;
    let s = load_split(cfg)?;
    let dir = RunDir::create(cfg, "sweep")?;
    record_split(&dir, &s)?;
    let mut csv = String::from("param,value,recall,ndcg,recall_decrease,ndcg_decrease\n");
    for (key, values) in grid {
        let mut results = Vec::new();
        for v in &values {
            let mut sub = cfg.clone();
            sub.set(&key, v)?;
            let child = dir.child(&format!("{key}_{v}"), &sub)?;
            info!("sweep point {key} = {v}");
            let t = train_into(Trainer::new(&sub.train, &s.train)?, &s, &child, &cuts)?;
            let r = t.test.recall(EVAL_CUTOFF).unwrap_or(0.0);
            let n = t.test.ndcg(EVAL_CUTOFF).unwrap_or(0.0);
            results.push((v.clone(), r, n));
        }
        let best_r = results.iter().map(|x| x.1).fold(0.0, f64::max);
        let best_n = results.iter().map(|x| x.2).fold(0.0, f64::max);
        let dec = |x: f64, best: f64| if best > 0.0 { (best - x) / best } else { 0.0 };
        for (v, r, n) in results {
            let line = format!("{key},{v},{r:.6},{n:.6},{:.6},{:.6}", dec(r, best_r), dec(n, best_n));
            println!("{line}");
            csv.push_str(&line);
            csv.push('\n');
        }
    }
    dir.write("sweep.csv", &csv)?;
    println!("run directory: {}", dir.path.display());
    Ok(())
}

pub fn bench(cfg: &RunConfig) -> anyhow::Result<()> {
    if cfg.run.bench_nodes.is_empty() || cfg.run.bench_nodes.contains(&0) {
        return usage("`bench_nodes` needs positive node counts");
    }
    let dir = RunDir::create(cfg, "bench")?;
    let t = &cfg.train;
    let mut csv = format!("{}\n", BenchRow::CSV_HEADER);
    for &n in &cfg.run.bench_nodes {
        let row = bench_factorization(n, t.hyperedges, t.dim, t.heads, cfg.run.bench_repeats, t.seed)?;
        println!(
            "I={n} K={} d={} H={}: naive {:.2} ms, factorized {:.2} ms, speedup {:.1}x",
            t.hyperedges,
            t.dim,
            t.heads,
            row.naive_ms,
            row.factorized_ms,
            row.speedup()
        );
        let _ = writeln!(csv, "{}", row.csv());
    }
    dir.write("bench.csv", &csv)?;
    println!("run directory: {}", dir.path.display());
    Ok(())
}

fn parse_palette(text: &str) -> anyhow::Result<Vec<Rgb>> {
    let colors = text
        .split(',')
        .map(|c| {
            let h = c.trim().trim_start_matches('#');
            if h.len() != 6 {
                return usage(format!("palette color `{c}` is not rrggbb"));
            }
            let mut rgb = [0.0; 3];
            for (k, slot) in rgb.iter_mut().enumerate() {
                let byte = u8::from_str_radix(&h[2 * k..2 * k + 2], 16)
                    .map_err(|_| UsageError(format!("palette color `{c}` is not rrggbb")))?;
                *slot = f64::from(byte) / 255.0;
            }
            Ok(rgb)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    if colors.len() < 2 {
        return usage("`palette` needs at least 2 colors");
    }
    Ok(colors)
}

pub fn colorize(cfg: &RunConfig) -> anyhow::Result<()> {
    let palette = parse_palette(&cfg.run.palette)?;
    let ck = require_checkpoint(cfg)?;
    let s = load_split(cfg)?;
    let (model, params) = restore(&ck, &s)?;
    let dir = RunDir::create(cfg, "colorize")?;
    record_split(&dir, &s)?;
    let (_, items) = model.embed(&params)?;
    let color_cfg = ColorConfig {
        steps: cfg.run.color_steps,
        mu: cfg.run.color_mu,
        seed: ck.config.seed,
        ..ColorConfig::default()
    };
    let colors = embedding_to_color(&items, &palette, &color_cfg)?;
    let mut csv = String::from("item_id,r,g,b\n");
    for (j, c) in colors.iter().enumerate() {
        let _ = writeln!(csv, "{},{:.6},{:.6},{:.6}", s.train.item_ids().external(j), c[0], c[1], c[2]);
    }
    dir.write("colors.csv", &csv)?;
    println!("{} item colors written", colors.len());
    println!("run directory: {}", dir.path.display());
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> anyhow::Result<()> {
    let Some(spec) = &cfg.run.synthetic else {
        return usage("missing key `synthetic` (users,items,blocks,per_user)");
    };
    let data = block_model(spec[0], spec[1], spec[2], spec[3], &mut Rng::seed(cfg.run.data_seed))?;
    let dir = RunDir::create(cfg, "synth")?;
    let header = vec![
        format!("block model users={} items={} blocks={} per_user={}", spec[0], spec[1], spec[2], spec[3]),
        format!("data_seed = {}", cfg.run.data_seed),
    ];
    let path = dir.file("interactions.tsv");
    write_interactions(&path, &data, &header)?;
    print!("{}", data.stats());
    println!();
    println!("interactions: {}", path.display());
    println!("run directory: {}", dir.path.display());
    Ok(())
}
