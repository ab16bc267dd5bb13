//! Model checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   "GPCK"
//! u16     format version (1)
//! u8      arch (0=vin, 1=gppn, 2=hypervin)
//! u8      kernel (0=news, 1=moore, 2=diffdrive)
//! u16     K
//! u16     F
//! u32     hidden
//! u8      precision in bytes (4=f32, 8=f64)
//! u32     parameter count
//! then per parameter, in the fixed architecture order:
//!   u16     name length, then the UTF-8 name
//!   u8      rank, then u32 dims
//!   raw     elements, little-endian IEEE 754
//! ```

use std::path::Path;

use super::{param_specs, Arch, ModelParams, PlannerConfig};
use crate::bytes::Reader;
use crate::error::{Error, Result};
use crate::grid::Kernel;
use crate::tensor::{Scalar, Tensor};

const MAGIC: &[u8; 4] = b"GPCK";
const VERSION: u16 = 1;

#[derive(Debug, Clone)]
pub struct CheckpointHeader {
    pub config: PlannerConfig,
    pub precision: u8,
}

pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    cfg: &PlannerConfig,
    params: &ModelParams<T>,
) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(cfg.arch.code());
    out.push(cfg.kernel.code());
    out.extend_from_slice(&(cfg.k as u16).to_le_bytes());
    out.extend_from_slice(&(cfg.f as u16).to_le_bytes());
    out.extend_from_slice(&(cfg.hidden as u32).to_le_bytes());
    out.push(T::BYTES as u8);
    out.extend_from_slice(&(params.entries().len() as u32).to_le_bytes());
    for (name, tensor) in params.entries() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(tensor.shape().len() as u8);
        for &d in tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            v.write_le(&mut out);
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn parse_header(r: &mut Reader) -> Result<CheckpointHeader> {
    r.expect_magic(MAGIC, "checkpoint")?;
    let version = r.u16("format version")?;
    if version != VERSION {
        return Err(r.error(format!("unsupported checkpoint version {version}")));
    }
    let arch = Arch::from_code(r.u8("arch")?).map_err(|e| r.error(e.to_string()))?;
    let kernel = Kernel::from_code(r.u8("kernel")?).map_err(|e| r.error(e.to_string()))?;
    let k = r.u16("K")? as usize;
    let f = r.u16("F")? as usize;
    let hidden = r.u32("hidden")? as usize;
    let precision = r.u8("precision")?;
    if precision != 4 && precision != 8 {
        return Err(r.error(format!("unsupported precision {precision}")));
    }
    let config =
        PlannerConfig::new(arch, k, f, hidden, kernel).map_err(|e| r.error(e.to_string()))?;
    Ok(CheckpointHeader { config, precision })
}

/// Read only the header of a checkpoint file.
pub fn peek_checkpoint(path: &Path) -> Result<CheckpointHeader> {
    let buf = std::fs::read(path)?;
    parse_header(&mut Reader::new(&buf))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(PlannerConfig, ModelParams<T>)> {
    let buf = std::fs::read(path)?;
    let mut r = Reader::new(&buf);
    let header = parse_header(&mut r)?;
    if header.precision as usize != T::BYTES {
        return Err(Error::contract(format!(
            "checkpoint stores {}-byte scalars, caller wants {}-byte",
            header.precision,
            T::BYTES
        )));
    }
    let cfg = header.config;
    let count = r.u32("parameter count")? as usize;
    if count != param_specs(&cfg).len() {
        return Err(r.error(format!(
            "{count} parameter tensors, expected {}",
            param_specs(&cfg).len()
        )));
    }
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u16("parameter name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "parameter name")?)
            .map_err(|_| r.error("parameter name is not UTF-8"))?
            .to_string();
        let rank = r.u8("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("tensor dim")? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * T::BYTES, "tensor data")?;
        let data: Vec<T> = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
        entries.push((name, Tensor::from_vec(&shape, data)?));
    }
    r.finish()?;
    let params = ModelParams::from_entries(&cfg, entries)?;
    Ok((cfg, params))
}
