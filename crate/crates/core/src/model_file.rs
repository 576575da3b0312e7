//! Versioned model persistence.
//!
//! ```text
//! b"SCAT"
//! u32       format version
//! u64       manifest length in bytes
//! [u8]      JSON manifest {h, v, k, variant, alpha, weighting, vocab, class_names}
//! f32 * h*v W, row-major
//! f32 * h   b
//! f32 * v   c
//! ```
//!
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Vocabulary, Weighting};
use crate::nn::{Competition, ModelParams, NnError, Variant};

pub const MODEL_MAGIC: &[u8; 4] = b"SCAT";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0} (expected {MODEL_VERSION})")]
    UnsupportedVersion(u32),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    h: usize,
    v: usize,
    k: usize,
    variant: Variant,
    alpha: f32,
    weighting: Weighting,
    vocab: Vec<String>,
    class_names: Option<Vec<String>>,
}

/// Trained parameters plus the vocabulary needed to apply them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub params: ModelParams<f32>,
    pub weighting: Weighting,
    pub vocab: Vec<String>,
    pub class_names: Option<Vec<String>>,
}

impl ModelFile {
    pub fn vocabulary(&self) -> Result<Vocabulary, ModelFileError> {
        let n = self.vocab.len();
        Vocabulary::from_tokens(self.vocab.clone(), vec![0; n]).map_err(|e| ModelFileError::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelFileError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelFileError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), ModelFileError> {
        let p = &self.params;
        p.validate()?;
        if self.vocab.len() != p.vocab() {
            return Err(ModelFileError::Format(format!(
                "{} vocabulary tokens for a {}-wide model",
                self.vocab.len(),
                p.vocab()
            )));
        }
        let manifest = Manifest {
            h: p.hidden(),
            v: p.vocab(),
            k: p.competition.k,
            variant: p.competition.variant,
            alpha: p.competition.alpha,
            weighting: self.weighting,
            vocab: self.vocab.clone(),
            class_names: self.class_names.clone(),
        };
        let json = serde_json::to_vec(&manifest)?;
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for section in p.sections() {
            for v in section {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, ModelFileError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| ModelFileError::BadMagic)?;
        if &magic != MODEL_MAGIC {
            return Err(ModelFileError::BadMagic);
        }
        let version = u32::from_le_bytes(read_array(r)?);
        if version != MODEL_VERSION {
            return Err(ModelFileError::UnsupportedVersion(version));
        }
        let len = u64::from_le_bytes(read_array(r)?);
        let mut json = Vec::new();
        r.take(len).read_to_end(&mut json)?;
        if json.len() as u64 != len {
            return Err(ModelFileError::Format("truncated manifest".into()));
        }
        let m: Manifest = serde_json::from_slice(&json)?;
        if m.vocab.len() != m.v {
            return Err(ModelFileError::Format(format!("manifest v = {} but {} tokens", m.v, m.vocab.len())));
        }
        let h = m.h;
        let v = m.v;
        let w = read_f32s(r, h.checked_mul(v).ok_or_else(|| ModelFileError::Format("h * v overflows".into()))?)?;
        let b = read_f32s(r, h)?;
        let c = read_f32s(r, v)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(ModelFileError::Format("trailing bytes after parameters".into()));
        }
        let params = ModelParams::from_parts(h, v, w, b, c, Competition::new(m.variant, m.k, m.alpha))?;
        Ok(ModelFile {
            params,
            weighting: m.weighting,
            vocab: m.vocab,
            class_names: m.class_names,
        })
    }
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], ModelFileError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| ModelFileError::Format(format!("truncated model file: {e}")))?;
    Ok(buf)
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>, ModelFileError> {
    let mut bytes = Vec::new();
    r.take(n as u64 * 4).read_to_end(&mut bytes)?;
    if bytes.len() != n * 4 {
        return Err(ModelFileError::Format("truncated parameter section".into()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}
