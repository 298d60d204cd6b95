//! Binary model artifact.
//!
//! ```text
//! magic     8 bytes  "CMDSEERM"
//! version   u32 LE
//! V d L h1 h2        u64 LE each
//! params    f64 LE, in layout order
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Layout, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::normalize::Vocab;

pub const MAGIC: &[u8; 8] = b"CMDSEERM";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 5 * 8;

fn bad(reason: impl Into<String>) -> Error {
    Error::Format {
        artifact: "model file",
        line: 0,
        reason: reason.into(),
    }
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let lay = &model.layout;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * model.params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for n in [
        lay.vocab_size,
        lay.dim,
        lay.context_len,
        lay.layer1.hidden,
        lay.layer2.hidden,
    ] {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for p in &model.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

/// Decodes a model. Training hyper-parameters that are not stored take
/// their values from `base`.
pub fn from_bytes(bytes: &[u8], base: &ModelConfig) -> Result<Model> {
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(bad("not a cmdseer model (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 5];
    for (i, d) in dims.iter_mut().enumerate() {
        let s = 12 + 8 * i;
        let n = u64::from_le_bytes(bytes[s..s + 8].try_into().unwrap());
        *d = usize::try_from(n).map_err(|_| bad("dimension too large"))?;
        if *d == 0 {
            return Err(bad("zero dimension in header"));
        }
    }
    let [v, d, l, h1, h2] = dims;
    let layout = Layout::new(v, d, l, h1, h2);
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * layout.total {
        return Err(Error::DimensionMismatch {
            what: "model parameter count",
            expected: layout.total,
            actual: body.len() / 8,
        });
    }
    let params: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(bad("non-finite parameter"));
    }
    let config = ModelConfig {
        context_len: l,
        hidden1: h1,
        hidden2: h2,
        ..base.clone()
    };
    Ok(Model {
        config,
        layout,
        params,
    })
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    f.write_all(&to_bytes(model))
        .map_err(|e| Error::file(path, e))
}

/// Loads a model and checks it against the vocabulary it will be used with.
pub fn load(path: &Path, vocab: &Vocab) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    let model = from_bytes(&bytes, &ModelConfig::default())?;
    if model.vocab_size() != vocab.len() {
        return Err(Error::DimensionMismatch {
            what: "model vocabulary vs vocab file",
            expected: vocab.len(),
            actual: model.vocab_size(),
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        let cfg = ModelConfig {
            context_len: 3,
            hidden1: 4,
            hidden2: 2,
            ..ModelConfig::default()
        };
        Model::new(7, 3, cfg, None).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let back = from_bytes(&to_bytes(&m), &ModelConfig::default()).unwrap();
        assert_eq!(back.layout, m.layout);
        assert_eq!(back.params, m.params);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = to_bytes(&model());
        assert!(from_bytes(&bytes[..20], &ModelConfig::default()).is_err());
        assert!(from_bytes(&bytes[..bytes.len() - 8], &ModelConfig::default()).is_err());
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(from_bytes(&b, &ModelConfig::default()).is_err());
        let mut b = bytes;
        b[8] = 9;
        assert!(from_bytes(&b, &ModelConfig::default()).is_err());
    }
}
