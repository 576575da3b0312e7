//! `CAE1` corpus archive.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! b"CAE1"
//! u64       metadata length in bytes
//! [u8]      JSON metadata (vocabulary, class names, config echo, doc ids)
//! u64       row count
//! per row:  i32 label (-1 if none), u32 entry count, (u32 index, f32 weight)*
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusConfig, CorpusError, DocMatrix, SparseRow, Vocabulary};

pub const ARCHIVE_MAGIC: &[u8; 4] = b"CAE1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMeta {
    pub vocab: Vec<String>,
    pub doc_freq: Vec<u32>,
    pub class_names: Vec<String>,
    pub config: CorpusConfig,
    pub doc_ids: Vec<String>,
}

/// A vectorized split together with everything needed to interpret it.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusArchive {
    pub meta: ArchiveMeta,
    pub matrix: DocMatrix,
}

impl CorpusArchive {
    pub fn new(vocab: &Vocabulary, class_names: Vec<String>, config: CorpusConfig, matrix: DocMatrix) -> Self {
        CorpusArchive {
            meta: ArchiveMeta {
                vocab: vocab.tokens().to_vec(),
                doc_freq: vocab.doc_freq().to_vec(),
                class_names,
                config,
                doc_ids: matrix.doc_ids.clone(),
            },
            matrix,
        }
    }

    pub fn vocabulary(&self) -> Result<Vocabulary, CorpusError> {
        Vocabulary::from_tokens(self.meta.vocab.clone(), self.meta.doc_freq.clone())
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut w = BufWriter::new(File::create(path)?);
        write_archive(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        read_archive(&mut BufReader::new(File::open(path)?))
    }
}

pub fn write_archive<W: Write>(w: &mut W, archive: &CorpusArchive) -> Result<(), CorpusError> {
    let m = &archive.matrix;
    if archive.meta.doc_ids != m.doc_ids {
        return Err(CorpusError::Format("metadata doc ids disagree with the matrix".into()));
    }
    if archive.meta.vocab.len() != m.cols {
        return Err(CorpusError::Format("vocabulary size disagrees with matrix width".into()));
    }
    m.validate()?;

    let meta = serde_json::to_vec(&archive.meta)?;
    w.write_all(ARCHIVE_MAGIC)?;
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(&meta)?;
    w.write_all(&(m.rows.len() as u64).to_le_bytes())?;
    for (row, label) in m.rows.iter().zip(&m.labels) {
        let label = match label {
            Some(l) => i32::try_from(*l).map_err(|_| CorpusError::Format("label exceeds i32".into()))?,
            None => -1,
        };
        w.write_all(&label.to_le_bytes())?;
        w.write_all(&(row.len() as u32).to_le_bytes())?;
        for (i, v) in row.iter() {
            w.write_all(&i.to_le_bytes())?;
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], CorpusError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| CorpusError::Format(format!("truncated archive: {e}")))?;
    Ok(buf)
}

pub fn read_archive<R: Read>(r: &mut R) -> Result<CorpusArchive, CorpusError> {
    if &read_array::<4, _>(r)? != ARCHIVE_MAGIC {
        return Err(CorpusError::Format("bad magic, expected CAE1".into()));
    }
    let meta_len = u64::from_le_bytes(read_array(r)?);
    let mut meta = Vec::new();
    r.take(meta_len).read_to_end(&mut meta)?;
    if meta.len() as u64 != meta_len {
        return Err(CorpusError::Format("truncated metadata block".into()));
    }
    let meta: ArchiveMeta = serde_json::from_slice(&meta)?;

    let n_rows = u64::from_le_bytes(read_array(r)?) as usize;
    if n_rows != meta.doc_ids.len() {
        return Err(CorpusError::Format(format!(
            "{n_rows} rows but {} doc ids",
            meta.doc_ids.len()
        )));
    }
    let mut matrix = DocMatrix::new(meta.vocab.len());
    for doc_id in &meta.doc_ids {
        let label = i32::from_le_bytes(read_array(r)?);
        let count = u32::from_le_bytes(read_array(r)?) as usize;
        let mut row = SparseRow::default();
        for _ in 0..count {
            row.indices.push(u32::from_le_bytes(read_array(r)?));
            row.values.push(f32::from_le_bytes(read_array(r)?));
        }
        let label = match label {
            -1 => None,
            l if l >= 0 => Some(l as u32),
            l => return Err(CorpusError::Format(format!("invalid label {l}"))),
        };
        matrix.rows.push(row);
        matrix.labels.push(label);
        matrix.doc_ids.push(doc_id.clone());
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(CorpusError::Format("trailing bytes after last row".into()));
    }
    matrix.validate()?;
    Ok(CorpusArchive { meta, matrix })
}
