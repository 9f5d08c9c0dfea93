//! Single-file checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"STIMCKPT"            8-byte magic
//! u32                    format version
//! u64                    header length in bytes
//! header                 UTF-8 JSON: {"format_version", "config", "params": [{"path", "shape"}]}
//! payload                f64 values of every parameter, concatenated in header order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::param::Module;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"STIMCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamEntry {
    pub path: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub config: serde_json::Value,
    pub params: Vec<ParamEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: Header,
    pub tensors: Vec<Tensor>,
}

pub fn save(path: &Path, config: serde_json::Value, model: &dyn Module) -> Result<()> {
    let mut params = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    model.visit("", &mut |p, param| {
        params.push(ParamEntry {
            path: p.to_string(),
            shape: param.value.shape().to_vec(),
        });
        for v in param.value.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    });
    let header = Header {
        format_version: FORMAT_VERSION,
        config,
        params,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>, bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    write(&mut w, MAGIC)?;
    write(&mut w, &FORMAT_VERSION.to_le_bytes())?;
    write(&mut w, &(header_bytes.len() as u64).to_le_bytes())?;
    write(&mut w, &header_bytes)?;
    write(&mut w, &payload)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    parse(&bytes)
}

pub fn parse(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let hend = 20usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[20..hend])
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format_version != version {
        return Err(bad("header and preamble disagree on version"));
    }
    let mut off = hend;
    let mut tensors = Vec::with_capacity(header.params.len());
    for p in &header.params {
        let n: usize = p.shape.iter().product();
        let end = off + n * 8;
        if end > bytes.len() {
            return Err(Error::Checkpoint(format!("truncated payload at {}", p.path)));
        }
        let data = bytes[off..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::new(p.shape.clone(), data).map_err(|e| Error::Checkpoint(e.to_string()))?);
        off = end;
    }
    if off != bytes.len() {
        return Err(bad("trailing bytes after payload"));
    }
    Ok(Checkpoint { header, tensors })
}

impl Checkpoint {
    /// Overwrites every parameter of `model` by path; paths and shapes must match exactly.
    pub fn restore_into(&self, model: &mut dyn Module) -> Result<()> {
        let mut idx = 0;
        let mut err = None;
        model.visit_mut("", &mut |path, p| {
            if err.is_some() {
                return;
            }
            match self.header.params.get(idx) {
                Some(e) if e.path == path && e.shape == p.value.shape() => {
                    p.value = self.tensors[idx].clone();
                    p.zero_grad();
                }
                Some(e) => {
                    err = Some(Error::Checkpoint(format!(
                        "parameter {idx}: checkpoint has {} {:?}, model has {path} {:?}",
                        e.path,
                        e.shape,
                        p.value.shape()
                    )))
                }
                None => err = Some(Error::Checkpoint(format!("checkpoint lacks {path}"))),
            }
            idx += 1;
        });
        if let Some(e) = err {
            return Err(e);
        }
        if idx != self.header.params.len() {
            return Err(Error::Checkpoint("checkpoint has extra parameters".into()));
        }
        Ok(())
    }
}
