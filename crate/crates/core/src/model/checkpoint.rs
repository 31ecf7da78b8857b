//! `MRCKPT01` checkpoint files.
//!
//! Layout (little-endian): magic `MRCKPT01`; u32 entry count; per entry a u32
//! name length, the UTF-8 name, u32 rank, `rank` × u32 dims and the f32
//! payload; then u32 metadata length and `key=value` lines.
//!
//! Entries hold the parameters in registry order, then the running statistics
//! of every batch-norm layer (`<bn>.running_mean`, `<bn>.running_var`,
//! `<bn>.num_batches`), then Adam moments (`optim.m.<param>`, `optim.v.<param>`)
//! when an optimizer state is saved.

use super::{Arch, Model, ModelSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::train::OptimizerState;
use std::collections::BTreeMap;
use std::path::Path;

const MAGIC: &[u8; 8] = b"MRCKPT01";

/// Everything needed to resume or score.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: Option<OptimizerState>,
    pub step: u64,
    /// Development EER when the checkpoint was taken.
    pub dev_eer: Option<f64>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_entry(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    put_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len());
    for &d in shape {
        put_u32(out, d);
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize to bytes.
pub fn encode(model: &Model, optimizer: Option<&OptimizerState>, step: u64, dev_eer: Option<f64>) -> Vec<u8> {
    let mut body = Vec::new();
    let mut count = 0;
    for p in model.params().iter() {
        put_entry(&mut body, &p.name, p.value.shape(), p.value.data());
        count += 1;
    }
    for b in model.buffers() {
        let c = b.stats.mean.len();
        put_entry(&mut body, &format!("{}.running_mean", b.name), &[c], &b.stats.mean);
        put_entry(&mut body, &format!("{}.running_var", b.name), &[c], &b.stats.var);
        put_entry(&mut body, &format!("{}.num_batches", b.name), &[1], &[b.stats.batches as f32]);
        count += 3;
    }
    if let Some(opt) = optimizer {
        for (prefix, moments) in [("optim.m", &opt.m), ("optim.v", &opt.v)] {
            for (p, buf) in model.params().iter().zip(moments) {
                put_entry(&mut body, &format!("{prefix}.{}", p.name), p.value.shape(), buf);
                count += 1;
            }
        }
    }
    let spec = model.spec();
    let mut meta = format!(
        "arch={}\nn_input_channels={}\nn_classes={}\nc1={}\ninput_freq={}\ninput_frames={}\nstep={step}\n",
        spec.arch,
        spec.n_input_channels,
        spec.n_classes,
        spec.c1(),
        spec.input_freq,
        spec.input_frames
    );
    if let Some(e) = dev_eer {
        meta.push_str(&format!("dev_eer={e}\n"));
    }
    if let Some(opt) = optimizer {
        meta.push_str(&format!("optim_t={}\noptim_eps={}\n", opt.t, opt.eps));
    }
    let mut out = Vec::with_capacity(16 + body.len() + meta.len());
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, count);
    out.extend_from_slice(&body);
    put_u32(&mut out, meta.len());
    out.extend_from_slice(meta.as_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::format(self.path, format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

/// Parse bytes produced by [`encode`].
pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let bad = |detail: String| Error::format(path, detail);
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(bad("missing MRCKPT01 magic".into()));
    }
    let mut r = Reader { bytes, pos: 8, path };
    let count = r.u32()?;
    let mut entries: BTreeMap<String, Tensor<f32>> = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| bad("entry name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| bad(format!("{name}: dimensions overflow")))?;
        let raw = r.take(numel.checked_mul(4).ok_or_else(|| bad(format!("{name}: too large")))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| bad(format!("{name}: {e}")))?;
        if entries.insert(name.clone(), t).is_some() {
            return Err(bad(format!("duplicate entry {name}")));
        }
    }
    let meta_len = r.u32()?;
    let meta_text = std::str::from_utf8(r.take(meta_len)?)
        .map_err(|_| bad("metadata is not UTF-8".into()))?;
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let mut meta = BTreeMap::new();
    for line in meta_text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("metadata line '{line}' is not key=value")))?;
        meta.insert(k, v);
    }
    let field = |k: &str| -> Result<&str> {
        meta.get(k)
            .copied()
            .ok_or_else(|| bad(format!("metadata lacks '{k}'")))
    };
    let num = |k: &str| -> Result<u64> {
        field(k)?
            .parse()
            .map_err(|_| bad(format!("metadata '{k}' is not an integer")))
    };
    let arch: Arch = field("arch")?.parse()?;
    let spec = ModelSpec {
        arch,
        n_input_channels: num("n_input_channels")? as usize,
        n_classes: num("n_classes")? as usize,
        input_freq: num("input_freq")? as usize,
        input_frames: num("input_frames")? as usize,
    };
    let step = num("step")?;
    let dev_eer = match meta.get("dev_eer") {
        Some(v) => Some(v.parse().map_err(|_| bad("metadata 'dev_eer' is not a number".into()))?),
        None => None,
    };

    let mut model = Model::build(&spec, 0)?;
    let mut take = |name: &str, shape: &[usize]| -> Result<Tensor<f32>> {
        let t = entries
            .remove(name)
            .ok_or_else(|| bad(format!("missing entry {name}")))?;
        if t.shape() != shape {
            return Err(bad(format!(
                "{name}: stored shape {:?}, {} expects {shape:?}",
                t.shape(),
                spec.arch
            )));
        }
        Ok(t)
    };
    for p in model.params_mut().iter_mut() {
        p.value = take(&p.name, p.value.shape())?;
    }
    for b in model.buffers_mut() {
        let c = b.stats.mean.len();
        b.stats.mean = take(&format!("{}.running_mean", b.name), &[c])?.into_data();
        b.stats.var = take(&format!("{}.running_var", b.name), &[c])?.into_data();
        b.stats.batches = take(&format!("{}.num_batches", b.name), &[1])?.data()[0] as u64;
    }
    let optimizer = match meta.get("optim_t") {
        None => None,
        Some(t) => {
            let mut m = Vec::new();
            let mut v = Vec::new();
            for p in model.params().iter() {
                m.push(take(&format!("optim.m.{}", p.name), p.value.shape())?.into_data());
                v.push(take(&format!("optim.v.{}", p.name), p.value.shape())?.into_data());
            }
            Some(OptimizerState {
                m,
                v,
                t: t.parse().map_err(|_| bad("metadata 'optim_t' is not an integer".into()))?,
                eps: field("optim_eps")?
                    .parse()
                    .map_err(|_| bad("metadata 'optim_eps' is not a number".into()))?,
            })
        }
    };
    if let Some(extra) = entries.keys().next() {
        return Err(bad(format!("unexpected entry {extra}")));
    }
    Ok(Checkpoint {
        model,
        optimizer,
        step,
        dev_eer,
    })
}

pub fn save_checkpoint(
    path: &Path,
    model: &Model,
    optimizer: Option<&OptimizerState>,
    step: u64,
    dev_eer: Option<f64>,
) -> Result<()> {
    std::fs::write(path, encode(model, optimizer, step, dev_eer)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
