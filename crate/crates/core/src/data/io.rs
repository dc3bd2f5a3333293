use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use super::{IdMap, InteractionDataset, SplitDataset, SPLIT_RATIOS};
use crate::error::{Result, ShtError};

/// Read a `user-id<TAB>item-id` file. Blank lines and `#` comments are skipped,
/// external ids are remapped to dense indices in order of first appearance.
pub fn load_interactions(path: &Path) -> Result<InteractionDataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let mut edges = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (u, i) = parse_pair(line).map_err(|msg| ShtError::Parse {
            path: path.to_owned(),
            line: n + 1,
            msg,
        })?;
        edges.push((users.intern(u), items.intern(i)));
    }
    if edges.is_empty() {
        return Err(ShtError::EmptyDataset);
    }
    let data = InteractionDataset::with_maps(edges, Arc::new(users), Arc::new(items));
    log::info!("loaded {}:\n{}", path.display(), data.stats());
    Ok(data)
}

fn parse_pair(line: &str) -> std::result::Result<(&str, &str), String> {
    let mut fields = line.split('\t');
    match (fields.next(), fields.next(), fields.next()) {
        (Some(u), Some(i), None) if !u.is_empty() && !i.is_empty() => Ok((u, i)),
        (Some(_), Some(_), Some(_)) => Err("expected exactly two tab-separated fields".into()),
        _ => Err("expected `user-id<TAB>item-id`".into()),
    }
}

/// Write edges using external ids, preceded by optional `#` header lines.
pub fn write_interactions(path: &Path, data: &InteractionDataset, header: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for h in header {
        writeln!(w, "# {h}")?;
    }
    for &(u, i) in data.edges() {
        writeln!(w, "{}\t{}", data.users.external(u), data.items.external(i))?;
    }
    w.flush()?;
    Ok(())
}

/// `external-id<TAB>dense-index` per line.
pub fn write_id_map(path: &Path, map: &IdMap) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, id) in map.external.iter().enumerate() {
        writeln!(w, "{id}\t{i}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_id_map(path: &Path) -> Result<IdMap> {
    let text = fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: &str| ShtError::Parse {
            path: path.to_owned(),
            line: n + 1,
            msg: msg.to_owned(),
        };
        let (id, idx) = parse_pair(line).map_err(|m| parse_err(&m))?;
        let idx: usize = idx.parse().map_err(|_| parse_err("dense index is not an integer"))?;
        entries.push((idx, id.to_owned()));
    }
    entries.sort();
    let mut map = IdMap::new();
    for (expect, (idx, id)) in entries.into_iter().enumerate() {
        if idx != expect {
            return Err(ShtError::Parse {
                path: path.to_owned(),
                line: 0,
                msg: format!("dense indices must be 0..n without gaps (missing {expect})"),
            });
        }
        map.intern(&id);
    }
    Ok(map)
}

const MANIFEST_FILES: [&str; 3] = ["train.tsv", "valid.tsv", "test.tsv"];

/// Write `train.tsv`, `valid.tsv`, `test.tsv`, `user_ids.tsv` and
/// `item_ids.tsv` into `dir`. Each split file carries a provenance header.
pub fn write_split_manifest(dir: &Path, split: &SplitDataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (a, b, c) = SPLIT_RATIOS;
    let header = |name: &str| {
        vec![
            format!("split = {name}"),
            format!("seed = {}", split.seed),
            format!("ratios = {a}:{b}:{c}"),
        ]
    };
    for (file, part) in MANIFEST_FILES.iter().zip([&split.train, &split.valid, &split.test]) {
        let name = file.trim_end_matches(".tsv");
        write_interactions(&dir.join(file), part, &header(name))?;
    }
    write_id_map(&dir.join("user_ids.tsv"), split.train.user_ids())?;
    write_id_map(&dir.join("item_ids.tsv"), split.train.item_ids())?;
    Ok(())
}

/// Inverse of [`write_split_manifest`]; restores the original index space.
pub fn load_split_manifest(dir: &Path) -> Result<SplitDataset> {
    let users = Arc::new(read_id_map(&dir.join("user_ids.tsv"))?);
    let items = Arc::new(read_id_map(&dir.join("item_ids.tsv"))?);
    let mut seed = None;
    let mut parts = Vec::with_capacity(3);
    for file in MANIFEST_FILES {
        let path = dir.join(file);
        let text = fs::read_to_string(&path)?;
        let mut edges = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if let Some(h) = line.strip_prefix('#') {
                if let Some(v) = h.trim().strip_prefix("seed = ") {
                    seed = v.trim().parse::<u64>().ok();
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| ShtError::Parse {
                path: path.clone(),
                line: n + 1,
                msg,
            };
            let (u, i) = parse_pair(line).map_err(err)?;
            let u = users.get(u).ok_or_else(|| err(format!("unknown user id `{u}`")))?;
            let i = items.get(i).ok_or_else(|| err(format!("unknown item id `{i}`")))?;
            edges.push((u, i));
        }
        parts.push(InteractionDataset::view(edges, &users, &items)?);
    }
    let test = parts.pop().unwrap();
    let valid = parts.pop().unwrap();
    let train = parts.pop().unwrap();
    Ok(SplitDataset {
        train,
        valid,
        test,
        seed: seed.unwrap_or(0),
    })
}
