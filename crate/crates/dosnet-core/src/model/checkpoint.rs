//! Model checkpoint format.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic "DOSM" | version u32 = 1
//! config: u64 length + JSON bytes (AutoflowConfig)
//! param count u64
//!   per param: name (u64 len + utf8) | kind u8 | trainable u8 |
//!              dtype u8 (1 real, 2 complex) | rank u32 | dims u32 x rank |
//!              payload: f64 x real-scalar-count (complex interleaved re, im)
//! optimizer flag u8
//!   if 1: u64 length + JSON bytes (AdamState)
//! ```
//!
//! The round trip is exact: parameter floats are written as raw IEEE-754
//! bits, and the JSON sections use a float encoding that round-trips f64.

use num_complex::Complex64;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{AutoflowConfig, AutoflowModel, Param, ParamKind};
use crate::autodiff::{AdamState, Tensor};
use crate::binio::*;
use crate::error::{DosnetError, Result};

const MAGIC: &[u8; 4] = b"DOSM";
const VERSION: u32 = 1;

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &AutoflowModel,
    adam: Option<&AdamState>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    write_bytes(&mut w, &serde_json::to_vec(&model.config)?)?;

    write_u64(&mut w, model.params.len() as u64)?;
    for p in &model.params {
        write_bytes(&mut w, p.name.as_bytes())?;
        write_u8(&mut w, param_kind_code(p.kind))?;
        write_u8(&mut w, p.trainable as u8)?;
        write_u8(&mut w, if p.value.is_real() { 1 } else { 2 })?;
        write_u32(&mut w, p.value.shape().len() as u32)?;
        for &d in p.value.shape() {
            write_u32(&mut w, d as u32)?;
        }
        for i in 0..p.value.real_scalar_count() {
            write_f64(&mut w, p.value.real_scalar(i))?;
        }
    }

    match adam {
        None => write_u8(&mut w, 0)?,
        Some(state) => {
            write_u8(&mut w, 1)?;
            write_bytes(&mut w, &serde_json::to_vec(state)?)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(AutoflowModel, Option<AdamState>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| DosnetError::Format("truncated checkpoint header".into()))?;
    if &magic != MAGIC {
        return Err(DosnetError::Format(format!(
            "bad checkpoint magic {:?}",
            magic
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(DosnetError::Format(format!(
            "unsupported checkpoint version {}",
            version
        )));
    }
    let config: AutoflowConfig = serde_json::from_slice(&read_bytes(&mut r)?)?;

    let n_params = read_u64(&mut r)? as usize;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let name = String::from_utf8(read_bytes(&mut r)?)
            .map_err(|_| DosnetError::Format("param name is not utf-8".into()))?;
        let kind = param_kind_from(read_u8(&mut r)?)?;
        let trainable = read_u8(&mut r)? != 0;
        let dtype = read_u8(&mut r)?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let value = match dtype {
            1 => Tensor::new_real(shape, read_f64_vec(&mut r, numel)?)?,
            2 => {
                let raw = read_f64_vec(&mut r, 2 * numel)?;
                Tensor::new_complex(
                    shape,
                    raw.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect(),
                )?
            }
            other => {
                return Err(DosnetError::Format(format!(
                    "unknown dtype code {}",
                    other
                )))
            }
        };
        params.push(Param {
            name,
            kind,
            value,
            trainable,
        });
    }

    let adam = match read_u8(&mut r)? {
        0 => None,
        1 => Some(serde_json::from_slice(&read_bytes(&mut r)?)?),
        other => {
            return Err(DosnetError::Format(format!(
                "unknown optimizer flag {}",
                other
            )))
        }
    };
    Ok((AutoflowModel { config, params }, adam))
}

fn param_kind_code(kind: ParamKind) -> u8 {
    match kind {
        ParamKind::ConvKernel => 0,
        ParamKind::DenseWeight => 1,
        ParamKind::FlowTime => 2,
    }
}

fn param_kind_from(code: u8) -> Result<ParamKind> {
    Ok(match code {
        0 => ParamKind::ConvKernel,
        1 => ParamKind::DenseWeight,
        2 => ParamKind::FlowTime,
        other => {
            return Err(DosnetError::Format(format!(
                "unknown param kind {}",
                other
            )))
        }
    })
}
