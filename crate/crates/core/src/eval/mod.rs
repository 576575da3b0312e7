//! Downstream evaluation: document encodings, per-unit topics, the softmax
//! document classifier and embedding export.

mod classifier;
mod metrics;

pub use classifier::{evaluate, train_classifier, ClassifierConfig, SoftmaxClassifier};
pub use metrics::{ClassMetrics, EvalReport};

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{DocMatrix, Vocabulary};
use crate::nn::{compete, encode_preact, ModelParams, Mode, NnError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("malformed embedding file: {0}")]
    Parse(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl DenseMatrix {
    pub fn from_rows(rows: Vec<Vec<f32>>) -> Result<Self, EvalError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(EvalError::Shape("ragged rows".into()));
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn vstack(&self, other: &DenseMatrix) -> Result<DenseMatrix, EvalError> {
        if self.cols != other.cols {
            return Err(EvalError::Shape(format!("cannot stack width {} on {}", other.cols, self.cols)));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(DenseMatrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }
}

/// Encodes every row as `tanh(W x + b)`, optionally followed by the model's
/// competitive layer in inference mode.
pub fn encode_matrix(
    data: &DocMatrix,
    params: &ModelParams<f32>,
    competition_at_inference: bool,
) -> Result<DenseMatrix, EvalError> {
    if data.cols != params.vocab() {
        return Err(EvalError::Shape(format!(
            "corpus has {} columns, model vocabulary is {}",
            data.cols,
            params.vocab()
        )));
    }
    let mode = Mode::Infer {
        competition_at_inference,
    };
    let rows: Vec<Vec<f32>> = data
        .rows
        .par_iter()
        .map(|x| {
            let z = encode_preact(x, params)?;
            Ok(match compete(&params.competition, &z, mode)? {
                Some((z_hat, _)) => z_hat,
                None => z,
            })
        })
        .collect::<Result<_, NnError>>()?;
    let mut m = DenseMatrix::from_rows(rows)?;
    m.cols = params.hidden();
    Ok(m)
}

/// Highest-weighted words of each hidden unit, strongest first.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicList {
    pub topics: Vec<Vec<(String, f32)>>,
}

impl TopicList {
    /// `topic_j: w1 w2 … wN`, one line per unit.
    pub fn lines(&self) -> Vec<String> {
        self.topics
            .iter()
            .enumerate()
            .map(|(j, words)| {
                let words: Vec<&str> = words.iter().map(|(w, _)| w.as_str()).collect();
                format!("topic_{j}: {}", words.join(" "))
            })
            .collect()
    }
}

/// Ranks each row of `W` by signed weight; ties go to the lower word index.
pub fn extract_topics(params: &ModelParams<f32>, vocab: &Vocabulary, top_n: usize) -> Result<TopicList, EvalError> {
    if vocab.len() != params.vocab() {
        return Err(EvalError::Shape(format!(
            "vocabulary has {} tokens, model expects {}",
            vocab.len(),
            params.vocab()
        )));
    }
    if top_n == 0 || top_n > params.vocab() {
        return Err(EvalError::Shape(format!(
            "top_n must lie in 1..={}, got {top_n}",
            params.vocab()
        )));
    }
    let topics = (0..params.hidden())
        .map(|j| {
            let row = params.w_row(j);
            let mut idx: Vec<usize> = (0..row.len()).collect();
            idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
            idx.truncate(top_n);
            idx.into_iter()
                .map(|i| (vocab.tokens()[i].clone(), row[i]))
                .collect()
        })
        .collect();
    Ok(TopicList { topics })
}

/// `%g`-style formatting with 6 significant digits.
pub fn format_sig6(x: f32) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.5e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-5..6).contains(&exp) {
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{mantissa}e{exp}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let fixed = format!("{:.*}", decimals, x);
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}

/// Writes `doc_id \t label \t f0 … f{h-1}` with a header line. Missing labels
/// are written as -1.
pub fn export_embeddings(
    features: &DenseMatrix,
    labels: &[Option<u32>],
    doc_ids: &[String],
    path: &Path,
) -> Result<(), EvalError> {
    if labels.len() != features.rows || doc_ids.len() != features.rows {
        return Err(EvalError::Shape(format!(
            "{} rows, {} labels, {} doc ids",
            features.rows,
            labels.len(),
            doc_ids.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    let header: Vec<String> = ["doc_id".to_string(), "label".to_string()]
        .into_iter()
        .chain((0..features.cols).map(|j| format!("f{j}")))
        .collect();
    writeln!(w, "{}", header.join("\t"))?;
    for r in 0..features.rows {
        let label = labels[r].map_or(-1, |l| l as i64);
        write!(w, "{}\t{}", doc_ids[r], label)?;
        for &v in features.row(r) {
            write!(w, "\t{}", format_sig6(v))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a file written by [`export_embeddings`].
pub fn read_embeddings(path: &Path) -> Result<(Vec<String>, Vec<Option<u32>>, DenseMatrix), EvalError> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines.next().ok_or_else(|| EvalError::Parse("empty file".into()))??;
    let width = header.split('\t').count();
    if width < 2 {
        return Err(EvalError::Parse("header needs doc_id and label columns".into()));
    }
    let (mut ids, mut labels, mut rows) = (Vec::new(), Vec::new(), Vec::new());
    for (n, line) in lines.enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != width {
            return Err(EvalError::Parse(format!("line {} has {} fields, expected {width}", n + 2, fields.len())));
        }
        let bad = |what: &str| EvalError::Parse(format!("line {}: bad {what}", n + 2));
        ids.push(fields[0].to_string());
        let label: i64 = fields[1].parse().map_err(|_| bad("label"))?;
        labels.push(u32::try_from(label).ok());
        let row = fields[2..]
            .iter()
            .map(|f| f.parse::<f32>().map_err(|_| bad("value")))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let mut m = DenseMatrix::from_rows(rows)?;
    m.cols = width - 2;
    Ok((ids, labels, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SparseRow;
    use crate::nn::{Competition, Variant};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab(tokens: &[&str]) -> Vocabulary {
        Vocabulary::from_tokens(tokens.iter().map(|s| s.to_string()).collect(), vec![1; tokens.len()]).unwrap()
    }

    #[test]
    fn topics_sort_one_row() {
        let p = ModelParams::from_parts(1, 3, vec![0.1, 0.9, 0.5], vec![0.0], vec![0.0; 3], Competition::none())
            .unwrap();
        let t = extract_topics(&p, &vocab(&["a", "b", "c"]), 2).unwrap();
        assert_eq!(t.topics[0], vec![("b".to_string(), 0.9), ("c".to_string(), 0.5)]);
        assert_eq!(t.lines(), vec!["topic_0: b c"]);

        let all = extract_topics(&p, &vocab(&["a", "b", "c"]), 3).unwrap();
        assert_eq!(all.lines(), vec!["topic_0: b c a"]);
        assert!(extract_topics(&p, &vocab(&["a", "b", "c"]), 4).is_err());
        assert!(extract_topics(&p, &vocab(&["a", "b", "c"]), 0).is_err());
    }

    #[test]
    fn topics_ignore_positive_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = ModelParams::<f32>::init(3, 8, Competition::none(), &mut rng).unwrap();
        let v = vocab(&["a", "b", "c", "d", "e", "f", "g", "h"]);
        let before = extract_topics(&p, &v, 4).unwrap().lines();
        for w in &mut p.w[8..16] {
            *w *= 4.0;
        }
        assert_eq!(extract_topics(&p, &v, 4).unwrap().lines(), before);
    }

    #[test]
    fn encode_empty_rows_give_tanh_bias() {
        let mut p = ModelParams::<f32>::zeros(2, 3, Competition::none()).unwrap();
        p.b = vec![0.5, -1.0];
        let mut data = DocMatrix::new(3);
        data.push(SparseRow::default(), None, "e");
        let enc = encode_matrix(&data, &p, false).unwrap();
        assert_eq!(enc.row(0), &[0.5f32.tanh(), (-1.0f32).tanh()]);
    }

    #[test]
    fn encode_with_competition_limits_positive_units() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = ModelParams::<f32>::init(10, 6, Competition::new(Variant::Scat, 3, 1.0), &mut rng).unwrap();
        let mut data = DocMatrix::new(6);
        data.push(SparseRow::new(vec![0, 2, 5], vec![1.0, 0.5, 0.7]), None, "a");
        data.push(SparseRow::new(vec![1, 3], vec![1.0, 1.0]), None, "b");
        let plain = encode_matrix(&data, &p, false).unwrap();
        let comp = encode_matrix(&data, &p, true).unwrap();
        for r in 0..2 {
            assert!(comp.row(r).iter().filter(|v| **v > 0.0).count() <= 3);
            for (c, z) in comp.row(r).iter().zip(plain.row(r)) {
                if *z <= 0.0 {
                    assert_eq!(c, z);
                }
            }
        }
    }

    #[test]
    fn encode_checks_width() {
        let p = ModelParams::<f32>::zeros(2, 3, Competition::none()).unwrap();
        assert!(encode_matrix(&DocMatrix::new(4), &p, false).is_err());
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(0.5), "0.5");
        assert_eq!(format_sig6(-0.123456789), "-0.123457");
        assert_eq!(format_sig6(123456.7), "123457");
        assert_eq!(format_sig6(1.0e-7), "1e-7");
        assert_eq!(format_sig6(3.0e9), "3e9");
    }

    #[test]
    fn embeddings_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.tsv");
        let f = DenseMatrix::from_rows(vec![vec![0.123_456_79, -0.5]]).unwrap();
        export_embeddings(&f, &[Some(3)], &["doc/1".to_string()], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().next().unwrap(), "doc_id\tlabel\tf0\tf1");
        let (ids, labels, back) = read_embeddings(&path).unwrap();
        assert_eq!(ids, vec!["doc/1"]);
        assert_eq!(labels, vec![Some(3)]);
        assert!((back.row(0)[0] - 0.123_457).abs() < 1e-7);
        assert_eq!(back.row(0)[1], -0.5);
    }

    #[test]
    fn export_rejects_bad_lengths() {
        let dir = tempfile::tempdir().unwrap();
        let f = DenseMatrix::from_rows(vec![vec![1.0]]).unwrap();
        assert!(export_embeddings(&f, &[], &["a".into()], &dir.path().join("x")).is_err());
    }
}
