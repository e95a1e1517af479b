//! Binary checkpoint format.
//!
//! Layout (little-endian):
//! - magic `E2CK`, version byte (1)
//! - 32-byte config hash
//! - u64 epoch counter, u64 optimizer step
//! - 15 tensors: the 5 parameter tensors, then the 5 first-moment and 5
//!   second-moment buffers, each as u64 rows, u64 cols, rows*cols float32.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::model::{AdamState, EncoderParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"E2CK";
pub const CHECKPOINT_VERSION: u8 = 1;

fn push_tensor(out: &mut Vec<u8>, t: &Array2<f64>) {
    out.extend_from_slice(&(t.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(t.ncols() as u64).to_le_bytes());
    for v in t.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

fn read_tensor(bytes: &[u8], pos: &mut usize, path: &Path) -> Result<Array2<f64>> {
    let corrupt = |reason: &str| Error::BadCheckpoint {
        path: path.display().to_string(),
        reason: reason.into(),
    };
    if bytes.len() < *pos + 16 {
        return Err(corrupt("tensor header truncated"));
    }
    let rows = u64::from_le_bytes(bytes[*pos..*pos + 8].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[*pos + 8..*pos + 16].try_into().unwrap()) as usize;
    *pos += 16;
    let need = rows * cols * 4;
    if bytes.len() < *pos + need {
        return Err(corrupt("tensor data truncated"));
    }
    let mut flat = Vec::with_capacity(rows * cols);
    for chunk in bytes[*pos..*pos + need].chunks_exact(4) {
        flat.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    *pos += need;
    Array2::from_shape_vec((rows, cols), flat).map_err(|e| corrupt(&e.to_string()))
}

pub fn save_checkpoint(
    path: &Path,
    params: &EncoderParams,
    config_hash: &[u8; 32],
    epoch: u64,
) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(config_hash);
    out.extend_from_slice(&epoch.to_le_bytes());
    out.extend_from_slice(&params.adam.step.to_le_bytes());
    for t in params.tensors() {
        push_tensor(&mut out, t);
    }
    for t in &params.adam.m {
        push_tensor(&mut out, t);
    }
    for t in &params.adam.v {
        push_tensor(&mut out, t);
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(&out)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub struct Checkpoint {
    pub params: EncoderParams,
    pub config_hash: [u8; 32],
    pub epoch: u64,
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let corrupt = |reason: &str| Error::BadCheckpoint {
        path: path.display().to_string(),
        reason: reason.into(),
    };
    if bytes.len() < 5 + 32 + 16 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(corrupt("missing E2CK magic"));
    }
    if bytes[4] != CHECKPOINT_VERSION {
        return Err(corrupt(&format!("unsupported version {}", bytes[4])));
    }
    let mut config_hash = [0u8; 32];
    config_hash.copy_from_slice(&bytes[5..37]);
    let epoch = u64::from_le_bytes(bytes[37..45].try_into().unwrap());
    let step = u64::from_le_bytes(bytes[45..53].try_into().unwrap());
    let mut pos = 53;
    let mut tensors = Vec::with_capacity(15);
    for _ in 0..15 {
        tensors.push(read_tensor(&bytes, &mut pos, path)?);
    }
    if pos != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }
    let mut it = tensors.into_iter();
    let params = EncoderParams {
        gcn_w: it.next().unwrap(),
        w1: it.next().unwrap(),
        b1: it.next().unwrap(),
        w2: it.next().unwrap(),
        b2: it.next().unwrap(),
        adam: AdamState {
            step,
            m: it.by_ref().take(5).collect(),
            v: it.by_ref().take(5).collect(),
        },
    };
    Ok(Checkpoint {
        params,
        config_hash,
        epoch,
    })
}
