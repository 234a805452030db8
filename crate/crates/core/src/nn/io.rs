//! Binary model files.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic            7 bytes  "XFMRNN1"
//! version          u8       = 1
//! input_dim        u32
//! output_dim       u32
//! hidden_count     u32
//! hidden widths    u32 × hidden_count
//! shortcut_count   u32
//! shortcuts        (from u32, to u32) × shortcut_count
//! projection mode  u8       0 = learned, 1 = fixed
//! has_standardizer u8       0 or 1
//! [mean, std]      f64 × input_dim each, when has_standardizer = 1
//! param_count      u64
//! params           f64 × param_count, in the flat layout order of `Model`
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array1;

use super::arch::{Architecture, ProjectionMode, Shortcut};
use super::model::Model;
use super::train::Network;
use crate::data::Standardizer;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 7] = b"XFMRNN1";
pub const VERSION: u8 = 1;

pub fn encode(model: &Model, standardizer: Option<&Standardizer>) -> Vec<u8> {
    let a = &model.arch;
    let mut out = Vec::with_capacity(64 + 8 * model.params.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    let put_u32 = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    put_u32(&mut out, a.input_dim);
    put_u32(&mut out, a.output_dim);
    put_u32(&mut out, a.hidden.len());
    for &w in &a.hidden {
        put_u32(&mut out, w);
    }
    put_u32(&mut out, a.shortcuts.len());
    for s in &a.shortcuts {
        put_u32(&mut out, s.from);
        put_u32(&mut out, s.to);
    }
    out.push(match a.projection {
        ProjectionMode::Learned => 0,
        ProjectionMode::Fixed => 1,
    });
    match standardizer {
        Some(s) => {
            out.push(1);
            for v in s.mean.iter().chain(s.std.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        None => out.push(0),
    }
    out.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for v in &model.params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptModel(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn decode(bytes: &[u8]) -> Result<(Model, Option<Standardizer>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::CorruptModel("bad magic bytes".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let input_dim = r.u32()?;
    let output_dim = r.u32()?;
    let n_hidden = r.u32()?;
    if n_hidden > bytes.len() {
        return Err(Error::CorruptModel(format!("implausible layer count {n_hidden}")));
    }
    let hidden = (0..n_hidden).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let n_short = r.u32()?;
    if n_short > bytes.len() {
        return Err(Error::CorruptModel(format!("implausible shortcut count {n_short}")));
    }
    let shortcuts = (0..n_short)
        .map(|_| Ok(Shortcut::new(r.u32()?, r.u32()?)))
        .collect::<Result<Vec<_>>>()?;
    let projection = match r.u8()? {
        0 => ProjectionMode::Learned,
        1 => ProjectionMode::Fixed,
        b => return Err(Error::CorruptModel(format!("unknown projection mode {b}"))),
    };
    let arch = Architecture {
        input_dim,
        output_dim,
        hidden,
        shortcuts,
        projection,
    };
    arch.validate()
        .map_err(|e| Error::CorruptModel(format!("bad architecture: {e}")))?;
    let standardizer = match r.u8()? {
        0 => None,
        1 => {
            let mean = Array1::from(r.f64s(input_dim)?);
            let std = Array1::from(r.f64s(input_dim)?);
            Some(Standardizer { mean, std })
        }
        b => return Err(Error::CorruptModel(format!("bad standardizer flag {b}"))),
    };
    let count = r.u64()? as usize;
    let expected = arch.parameter_count();
    if count != expected {
        return Err(Error::CorruptModel(format!(
            "parameter count {count} does not match architecture ({expected})"
        )));
    }
    let params = r.f64s(count)?;
    if r.pos != bytes.len() {
        return Err(Error::CorruptModel(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok((Model::from_params(arch, params)?, standardizer))
}

pub fn save_model(path: &Path, model: &Model, standardizer: Option<&Standardizer>) -> Result<()> {
    fs::write(path, encode(model, standardizer)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<(Model, Option<Standardizer>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn save_network(path: &Path, net: &Network) -> Result<()> {
    save_model(path, &net.model, Some(&net.standardizer))
}

/// Loads a model file that carries its input standardization.
pub fn load_network(path: &Path) -> Result<Network> {
    match load_model(path)? {
        (model, Some(standardizer)) => Ok(Network {
            model,
            standardizer,
        }),
        (_, None) => Err(Error::CorruptModel(format!(
            "{} has no input standardization",
            path.display()
        ))),
    }
}
