//! Checkpoint format `CDCN1`: a header carrying the model config, an
//! optional training-state block (iteration, sampler RNG, optimizer
//! moments), and a named map of shape-tagged flat f32 arrays.

use std::io::Write;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use super::net::build_net;
use super::params::ModelParams;
use super::{Ablation, ModelConfig};
use crate::error::{IoError, ModelError};

const MAGIC: &[u8; 5] = b"CDCN1";
const FLAG_TRAIN_STATE: u8 = 1;

/// Optimizer and sampler state stored alongside the parameters so training
/// can resume bit-exactly.
#[derive(Debug, Clone)]
pub struct TrainBlob {
    pub iter: u64,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
    pub adam_m: Vec<ArrayD<f64>>,
    pub adam_v: Vec<ArrayD<f64>>,
}

#[derive(Debug)]
pub struct LoadedCheckpoint {
    pub params: ModelParams,
    pub train: Option<TrainBlob>,
}

fn push_entry(buf: &mut Vec<u8>, name: &str, value: &ArrayD<f64>) {
    buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.push(value.ndim() as u8);
    for &d in value.shape() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in value.iter() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams,
    train: Option<&TrainBlob>,
) -> Result<(), IoError> {
    let cfg = params.cfg();
    let layout = params.layout();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(if train.is_some() { FLAG_TRAIN_STATE } else { 0 });
    for v in [
        cfg.num_groups,
        cfg.blocks_per_group,
        cfg.channels,
        cfg.scale,
        cfg.ca_reduction,
    ] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.push(cfg.ablation.tag());
    buf.extend_from_slice(&cfg.leaky_slope.to_le_bytes());

    if let Some(t) = train {
        buf.extend_from_slice(&t.iter.to_le_bytes());
        buf.extend_from_slice(&t.rng_seed);
        buf.extend_from_slice(&t.rng_word_pos.to_le_bytes());
    }

    let n_entries = layout.len() * if train.is_some() { 3 } else { 1 };
    buf.extend_from_slice(&(n_entries as u32).to_le_bytes());
    for (spec, value) in layout.iter().zip(params.values()) {
        push_entry(&mut buf, &spec.name, value);
    }
    if let Some(t) = train {
        for (spec, value) in layout.iter().zip(&t.adam_m) {
            push_entry(&mut buf, &format!("m:{}", spec.name), value);
        }
        for (spec, value) in layout.iter().zip(&t.adam_v) {
            push_entry(&mut buf, &format!("v:{}", spec.name), value);
        }
    }

    let mut file = std::fs::File::create(path).map_err(|e| IoError::new(path, e))?;
    file.write_all(&buf).map_err(|e| IoError::new(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.buf.len() {
            return Err(ModelError::MalformedCheckpoint(format!(
                "{}: truncated at byte {}",
                self.path, self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u128(&mut self) -> Result<u128, ModelError> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn read_header(r: &mut Reader) -> Result<(ModelConfig, u8), ModelError> {
    let magic = r.take(5)?;
    if magic != MAGIC {
        return Err(ModelError::MalformedCheckpoint(format!(
            "{}: bad magic {:?}",
            r.path, magic
        )));
    }
    let flags = r.u8()?;
    let num_groups = r.u32()? as usize;
    let blocks_per_group = r.u32()? as usize;
    let channels = r.u32()? as usize;
    let scale = r.u32()? as usize;
    let ca_reduction = r.u32()? as usize;
    let ablation = Ablation::from_tag(r.u8()?)?;
    let leaky_slope = r.f64()?;
    Ok((
        ModelConfig {
            num_groups,
            blocks_per_group,
            channels,
            scale,
            leaky_slope,
            ca_reduction,
            ablation,
        },
        flags,
    ))
}

/// Reads only the config header, for cheap compatibility checks.
pub fn peek_config(path: &Path) -> Result<ModelConfig, ModelError> {
    let buf = std::fs::read(path)
        .map_err(|e| ModelError::MalformedCheckpoint(format!("{}: {e}", path.display())))?;
    let mut r = Reader {
        buf: &buf,
        pos: 0,
        path: path.display().to_string(),
    };
    Ok(read_header(&mut r)?.0)
}

pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint, ModelError> {
    let buf = std::fs::read(path)
        .map_err(|e| ModelError::MalformedCheckpoint(format!("{}: {e}", path.display())))?;
    let mut r = Reader {
        buf: &buf,
        pos: 0,
        path: path.display().to_string(),
    };
    let (cfg, flags) = read_header(&mut r)?;
    let has_train = flags & FLAG_TRAIN_STATE != 0;

    let (iter, rng_seed, rng_word_pos) = if has_train {
        let iter = r.u64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
        let pos = r.u128()?;
        (iter, seed, pos)
    } else {
        (0, [0u8; 32], 0)
    };

    let n_entries = r.u32()? as usize;
    let mut entries: Vec<(String, ArrayD<f64>)> = Vec::with_capacity(n_entries);
    for _ in 0..n_entries {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|e| ModelError::MalformedCheckpoint(format!("bad name: {e}")))?;
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let bytes = r.take(n * 4)?;
        let data: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
            .collect();
        let arr = ArrayD::from_shape_vec(IxDyn(&shape), data)
            .map_err(|e| ModelError::MalformedCheckpoint(format!("{name}: {e}")))?;
        entries.push((name, arr));
    }

    let net = build_net(&cfg)?;
    let fetch = |prefix: &str| -> Result<Vec<ArrayD<f64>>, ModelError> {
        net.layout
            .iter()
            .map(|spec| {
                let key = format!("{prefix}{}", spec.name);
                let arr = entries
                    .iter()
                    .find(|(n, _)| *n == key)
                    .map(|(_, a)| a.clone())
                    .ok_or_else(|| {
                        ModelError::CheckpointMismatch(format!("missing tensor {key}"))
                    })?;
                if arr.shape() != spec.shape.as_slice() {
                    return Err(ModelError::CheckpointMismatch(format!(
                        "tensor {key} has shape {:?}, expected {:?}",
                        arr.shape(),
                        spec.shape
                    )));
                }
                Ok(arr)
            })
            .collect()
    };

    let params = ModelParams::from_values(cfg, fetch("")?)?;
    let train = if has_train {
        Some(TrainBlob {
            iter,
            rng_seed,
            rng_word_pos,
            adam_m: fetch("m:")?,
            adam_v: fetch("v:")?,
        })
    } else {
        None
    };
    Ok(LoadedCheckpoint { params, train })
}
