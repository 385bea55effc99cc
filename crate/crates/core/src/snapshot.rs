//! Binary parameter files (`.dfx`).
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "DFRXPARM"
//! version    u32      1
//! kind       u8       1 = conditional MLP, 2 = baseline DNN
//! embedding  u8       0 = pre, 1 = post (0 for the baseline)
//! epoch      u64      training epoch (iterations for the baseline)
//! steps      u32      diffusion steps T (0 for the baseline)
//! n_sizes    u32      followed by n_sizes u32 layer widths, input to output
//! n_tensors  u32      followed by n_tensors records:
//!                     rows u32, cols u32, rows*cols f64 row-major
//! ```
//!
//! Tensors appear in [`Parameterized::parameters`] order.

use std::fs;
use std::path::Path;

use crate::baseline::BaselineDnn;
use crate::error::{Error, Result};
use crate::neural::{ConditionalMlp, Dense, EmbeddingMode, Parameterized};
use crate::numerics::Tensor2;
use crate::output::write_atomic;

pub const MAGIC: &[u8; 8] = b"DFRXPARM";
pub const VERSION: u32 = 1;

const KIND_MLP: u8 = 1;
const KIND_BASELINE: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Mlp { epoch: u64, model: ConditionalMlp },
    Baseline { iterations: u64, model: BaselineDnn },
}

struct Header {
    kind: u8,
    embedding: u8,
    epoch: u64,
    steps: u32,
    sizes: Vec<u32>,
}

fn encode(header: &Header, tensors: &[&Tensor2]) -> Vec<u8> {
    let payload: usize = tensors.iter().map(|t| 8 + 8 * t.len()).sum();
    let mut out = Vec::with_capacity(40 + 4 * header.sizes.len() + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(header.kind);
    out.push(header.embedding);
    out.extend_from_slice(&header.epoch.to_le_bytes());
    out.extend_from_slice(&header.steps.to_le_bytes());
    out.extend_from_slice(&(header.sizes.len() as u32).to_le_bytes());
    for s in &header.sizes {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<Tensor2> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= self.buf.len() - self.pos))
            .ok_or_else(|| Error::Format(format!("tensor {rows}x{cols} exceeds file size")))?;
        let bytes = self.take(8 * n)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor2::from_vec(rows, cols, data)
    }
}

pub fn encode_mlp(model: &ConditionalMlp, epoch: u64) -> Vec<u8> {
    let cfg = model.config();
    let mut sizes = vec![cfg.input_dim as u32];
    sizes.extend(model.hidden_layers().iter().map(|l| l.fan_out() as u32));
    sizes.push(cfg.input_dim as u32);
    let header = Header {
        kind: KIND_MLP,
        embedding: match cfg.embedding {
            EmbeddingMode::Pre => 0,
            EmbeddingMode::Post => 1,
        },
        epoch,
        steps: cfg.steps as u32,
        sizes,
    };
    encode(&header, &model.parameters())
}

pub fn encode_baseline(model: &BaselineDnn, iterations: u64) -> Vec<u8> {
    let mut sizes = vec![model.io_dim() as u32];
    sizes.extend(model.layers().iter().map(|l| l.fan_out() as u32));
    let header = Header {
        kind: KIND_BASELINE,
        embedding: 0,
        epoch: iterations,
        steps: 0,
        sizes,
    };
    encode(&header, &model.parameters())
}

pub fn decode(bytes: &[u8]) -> Result<SavedModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a parameter file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let kind = r.u8()?;
    let embedding = r.u8()?;
    let epoch = r.u64()?;
    let steps = r.u32()?;
    let n_sizes = r.u32()? as usize;
    if n_sizes < 2 || n_sizes > 1024 {
        return Err(Error::Format(format!("implausible layer count {n_sizes}")));
    }
    let sizes = (0..n_sizes).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let n_tensors = r.u32()? as usize;
    if n_tensors > 4096 {
        return Err(Error::Format(format!("implausible tensor count {n_tensors}")));
    }
    let mut tensors = (0..n_tensors).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let header = Header { kind, embedding, epoch, steps, sizes };

    let saved = match header.kind {
        KIND_MLP => {
            let n_hidden = header.sizes.len() - 2;
            if n_tensors != 3 * n_hidden + 2 {
                return Err(Error::Format(format!("{n_tensors} tensors for {n_hidden} hidden layers")));
            }
            let out_b = tensors.pop().unwrap();
            let out_w = tensors.pop().unwrap();
            let mut hidden = Vec::with_capacity(n_hidden);
            let mut embeddings = Vec::with_capacity(n_hidden);
            let mut it = tensors.into_iter();
            while let (Some(w), Some(b), Some(e)) = (it.next(), it.next(), it.next()) {
                hidden.push(dense(w, b)?);
                embeddings.push(e);
            }
            let mode = match header.embedding {
                0 => EmbeddingMode::Pre,
                1 => EmbeddingMode::Post,
                m => return Err(Error::Format(format!("unknown embedding mode {m}"))),
            };
            let model = ConditionalMlp::from_parts(hidden, embeddings, dense(out_w, out_b)?, mode)?;
            if model.steps() != header.steps as usize {
                return Err(Error::Format("embedding rows disagree with header steps".into()));
            }
            SavedModel::Mlp { epoch: header.epoch, model }
        }
        KIND_BASELINE => {
            if n_tensors != 6 {
                return Err(Error::Format(format!("baseline needs 6 tensors, got {n_tensors}")));
            }
            let mut it = tensors.into_iter();
            let mut layers = Vec::with_capacity(3);
            while let (Some(w), Some(b)) = (it.next(), it.next()) {
                layers.push(dense(w, b)?);
            }
            SavedModel::Baseline {
                iterations: header.epoch,
                model: BaselineDnn::from_layers(layers)?,
            }
        }
        k => return Err(Error::Format(format!("unknown model kind {k}"))),
    };
    let widths_ok = match &saved {
        SavedModel::Mlp { model, .. } => {
            let mut w = vec![model.input_dim() as u32];
            w.extend(model.hidden_layers().iter().map(|l| l.fan_out() as u32));
            w.push(model.input_dim() as u32);
            w == header.sizes
        }
        SavedModel::Baseline { model, .. } => {
            let mut w = vec![model.io_dim() as u32];
            w.extend(model.layers().iter().map(|l| l.fan_out() as u32));
            w == header.sizes
        }
    };
    if !widths_ok {
        return Err(Error::Format("layer sizes in header disagree with tensors".into()));
    }
    Ok(saved)
}

fn dense(weight: Tensor2, bias: Tensor2) -> Result<Dense> {
    if bias.rows() != 1 || bias.cols() != weight.cols() {
        return Err(Error::Format(format!(
            "bias {:?} does not fit weight {:?}",
            bias.shape(),
            weight.shape()
        )));
    }
    Ok(Dense { weight, bias })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    match fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingArtifact(path.to_path_buf())),
        Err(e) => Err(e.into()),
    }
}

pub fn save_mlp(path: &Path, model: &ConditionalMlp, epoch: u64) -> Result<()> {
    write_atomic(path, &encode_mlp(model, epoch))
}

pub fn save_baseline(path: &Path, model: &BaselineDnn, iterations: u64) -> Result<()> {
    write_atomic(path, &encode_baseline(model, iterations))
}

/// Returns the model and the epoch it was saved at.
pub fn load_mlp(path: &Path) -> Result<(ConditionalMlp, u64)> {
    match decode(&read(path)?)? {
        SavedModel::Mlp { epoch, model } => Ok((model, epoch)),
        SavedModel::Baseline { .. } => Err(Error::Format(format!("{} holds a baseline model", path.display()))),
    }
}

pub fn load_baseline(path: &Path) -> Result<(BaselineDnn, u64)> {
    match decode(&read(path)?)? {
        SavedModel::Baseline { iterations, model } => Ok((model, iterations)),
        SavedModel::Mlp { .. } => Err(Error::Format(format!("{} holds a diffusion model", path.display()))),
    }
}
