//! Binary checkpoint format:
//!
//! ```text
//! "SHTCKPT1"
//! u32  tensor count
//! per tensor: u16 name length, name (UTF-8), u8 rank, u32 dims[rank], f32 data
//! u32  config length, config block (UTF-8 `key = value` lines)
//! u32  rng state length, rng state
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use crate::config::{parse_kv_lines, TrainConfig};
use crate::error::{Result, ShtError};
use crate::rng::Rng;
use crate::tensor::DenseMatrix;

pub const MAGIC: &[u8; 8] = b"SHTCKPT1";

/// Everything needed to resume training.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Parameters first, then optimizer moments named `adam.m.*` / `adam.v.*`.
    pub tensors: Vec<(String, DenseMatrix<f32>)>,
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub adam_step: u64,
    pub num_users: usize,
    pub num_items: usize,
    pub rng: Rng,
}

fn err(msg: impl Into<String>) -> ShtError {
    ShtError::Checkpoint(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(err(format!("truncated checkpoint at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn as_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| err(format!("{what} {n} exceeds the 32-bit field")))
}

impl Checkpoint {
    fn config_block(&self) -> String {
        let mut s = self.config.to_kv_string();
        s.push_str(&format!("epoch = {}\n", self.epoch));
        s.push_str(&format!("adam.step = {}\n", self.adam_step));
        s.push_str(&format!("num_users = {}\n", self.num_users));
        s.push_str(&format!("num_items = {}\n", self.num_items));
        s
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&as_u32(self.tensors.len(), "tensor count")?.to_le_bytes());
        for (name, t) in &self.tensors {
            let len = u16::try_from(name.len()).map_err(|_| err(format!("tensor name `{name}` too long")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(2);
            out.extend_from_slice(&as_u32(t.rows(), "dimension")?.to_le_bytes());
            out.extend_from_slice(&as_u32(t.cols(), "dimension")?.to_le_bytes());
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let cfg = self.config_block();
        out.extend_from_slice(&as_u32(cfg.len(), "config length")?.to_le_bytes());
        out.extend_from_slice(cfg.as_bytes());
        let rng = self.rng.state_bytes();
        out.extend_from_slice(&as_u32(rng.len(), "rng state length")?.to_le_bytes());
        out.extend_from_slice(&rng);
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(err("not a checkpoint (bad magic)"));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| err("tensor name is not UTF-8"))?
                .to_string();
            let rank = r.u8()? as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let (rows, cols) = match dims.as_slice() {
                [] => (1, 1),
                [n] => (1, *n),
                [a, b] => (*a, *b),
                _ => return Err(err(format!("tensor `{name}` has unsupported rank {rank}"))),
            };
            let n = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| err(format!("tensor `{name}` is too large")))?;
            let data = r
                .take(n)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, DenseMatrix::from_vec(rows, cols, data)?));
        }
        let cfg_len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(cfg_len)?).map_err(|_| err("config block is not UTF-8"))?;
        let mut config = TrainConfig::default();
        let (mut epoch, mut adam_step, mut num_users, mut num_items) = (None, None, None, None);
        for (k, v) in parse_kv_lines(text)? {
            let num = || v.parse::<u64>().map_err(|_| err(format!("bad `{k}` value `{v}`")));
            match k.as_str() {
                "epoch" => epoch = Some(num()? as usize),
                "adam.step" => adam_step = Some(num()?),
                "num_users" => num_users = Some(num()? as usize),
                "num_items" => num_items = Some(num()? as usize),
                _ => config.set(&k, &v)?,
            }
        }
        let rng_len = r.u32()? as usize;
        let rng = Rng::from_state_bytes(r.take(rng_len)?)?;
        if r.pos != buf.len() {
            return Err(err(format!("{} trailing bytes after rng state", buf.len() - r.pos)));
        }
        let missing = |k: &str| err(format!("config block lacks `{k}`"));
        Ok(Self {
            tensors,
            config,
            epoch: epoch.ok_or_else(|| missing("epoch"))?,
            adam_step: adam_step.ok_or_else(|| missing("adam.step"))?,
            num_users: num_users.ok_or_else(|| missing("num_users"))?,
            num_items: num_items.ok_or_else(|| missing("num_items"))?,
            rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Tensors that are not optimizer state.
    pub fn parameters(&self) -> impl Iterator<Item = &(String, DenseMatrix<f32>)> {
        self.tensors.iter().filter(|(n, _)| !n.starts_with("adam."))
    }

    pub fn tensor(&self, name: &str) -> Option<&DenseMatrix<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}
