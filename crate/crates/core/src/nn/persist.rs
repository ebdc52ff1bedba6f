//! Model files.
//!
//! Little-endian: magic `GRLM`, `u32` version, dims (`u32` tasks, nodes, input,
//! hidden, layers, context, dense flag), `u64` seed, `u64` episodes trained, then
//! `u64` length + `f64` values for the encoder and for the heads, and finally a `u32`
//! CRC-32 of everything before it.

use std::path::Path;

use super::gnn::{EncoderParams, FEATURE_DIM};
use super::policy::{HeadLayout, ModelDims, PolicyModel};
use super::NnError;

const MAGIC: &[u8; 4] = b"GRLM";
pub const FORMAT_VERSION: u32 = 1;

pub fn model_to_bytes(model: &PolicyModel) -> Vec<u8> {
    let d = &model.dims;
    let mut out = Vec::with_capacity(64 + 8 * model.n_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [
        d.tasks,
        d.nodes,
        model.encoder.input_dim,
        d.hidden,
        d.layers,
        d.context,
        d.dense as usize,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&model.seed.to_le_bytes());
    out.extend_from_slice(&model.episodes_trained.to_le_bytes());
    for blob in [&model.encoder.data, &model.heads] {
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        for v in blob.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8], NnError> {
        if self.bytes.len() - self.pos < n {
            return Err(NnError::Format(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn blob(&mut self, what: &str, expected: usize) -> Result<Vec<f64>, NnError> {
        let len = self.u64(what)? as usize;
        if len != expected {
            return Err(NnError::Format(format!("{what}: {len} values, dims imply {expected}")));
        }
        let raw = self.take(len.checked_mul(8).ok_or_else(|| NnError::Format("overflow".into()))?, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<PolicyModel, NnError> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(NnError::Format("missing GRLM header".into()));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(NnError::Format(format!(
            "version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let mut dim = |what| r.u32(what).map(|v| v as usize);
    let (tasks, nodes, input, hidden, layers, context, dense) = (
        dim("tasks")?,
        dim("nodes")?,
        dim("input")?,
        dim("hidden")?,
        dim("layers")?,
        dim("context")?,
        dim("dense flag")?,
    );
    if input != FEATURE_DIM || hidden == 0 || layers == 0 || context == 0 || dense > 1 {
        return Err(NnError::Format("implausible dimensions".into()));
    }
    let dims = ModelDims {
        tasks,
        nodes,
        hidden,
        layers,
        context,
        dense: dense == 1,
    };
    let seed = r.u64("seed")?;
    let episodes_trained = r.u64("episodes")?;
    let mut encoder = EncoderParams::zeros(input, hidden, layers);
    encoder.data = r.blob("encoder", encoder.data.len())?;
    let heads = r.blob("heads", HeadLayout::new(&dims).total)?;
    let body = r.pos;
    let crc = r.u32("checksum")?;
    if r.pos != bytes.len() {
        return Err(NnError::Format("trailing bytes after checksum".into()));
    }
    if crc32fast::hash(&bytes[..body]) != crc {
        return Err(NnError::Format("checksum mismatch".into()));
    }
    Ok(PolicyModel {
        dims,
        seed,
        episodes_trained,
        encoder,
        heads,
    })
}

pub fn save_model(model: &PolicyModel, path: &Path) -> Result<(), NnError> {
    std::fs::write(path, model_to_bytes(model)).map_err(|e| NnError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_model(path: &Path) -> Result<PolicyModel, NnError> {
    let bytes = std::fs::read(path).map_err(|e| NnError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    model_from_bytes(&bytes)
}
