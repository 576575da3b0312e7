use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{build_split, CorpusConfig, CorpusError, DocMatrix, RawDocument, Vocabulary};

/// Result of loading a one-directory-per-class corpus.
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub vocab: Vocabulary,
    pub train: DocMatrix,
    pub test: DocMatrix,
    pub class_names: Vec<String>,
    /// Files that could not be read.
    pub skipped: usize,
    /// True when a `*-train` / `*-test` pair of directories was found.
    pub bydate: bool,
}

/// Loads 20 Newsgroups (or any corpus with one directory per class).
///
/// Two layouts are accepted: the "bydate" layout with a `*-train` and a
/// `*-test` directory, each holding one directory per class, used as-is; and
/// a flat layout of class directories that is split with
/// `cfg.split_seed` / `cfg.test_fraction`. Message headers (everything up to
/// the first blank line) are removed.
pub fn load_20newsgroups(path: &Path, cfg: &CorpusConfig) -> Result<LoadedCorpus, CorpusError> {
    cfg.validate()?;
    if !path.is_dir() {
        return Err(CorpusError::MissingPath(path.display().to_string()));
    }
    let subdirs = list_dirs(path)?;
    let find = |suffix: &str| -> Vec<&PathBuf> {
        subdirs
            .iter()
            .filter(|d| d.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(suffix)))
            .collect()
    };
    let (train_dirs, test_dirs) = (find("-train"), find("-test"));

    let mut skipped = 0;
    let (class_names, train_docs, test_docs, bydate) = if train_dirs.len() == 1 && test_dirs.len() == 1 {
        let train_classes = class_dirs(train_dirs[0])?;
        let class_names: Vec<String> = train_classes.iter().map(|(n, _)| n.clone()).collect();
        let train_docs = read_classes(&train_classes, &class_names, &split_prefix(train_dirs[0]), &mut skipped)?;
        let test_classes = class_dirs(test_dirs[0])?;
        if let Some((unknown, _)) = test_classes.iter().find(|(n, _)| !class_names.contains(n)) {
            return Err(CorpusError::Format(format!("test class {unknown} has no training directory")));
        }
        let test_docs = read_classes(&test_classes, &class_names, &split_prefix(test_dirs[0]), &mut skipped)?;
        (class_names, train_docs, test_docs, true)
    } else {
        let classes = class_dirs(path)?;
        let class_names: Vec<String> = classes.iter().map(|(n, _)| n.clone()).collect();
        let mut docs = read_classes(&classes, &class_names, "", &mut skipped)?;
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        let (train, test) = split_docs(docs, cfg.test_fraction, cfg.split_seed);
        (class_names, train, test, false)
    };
    if skipped > 0 {
        warn!("skipped {skipped} unreadable files under {}", path.display());
    }

    let (vocab, train, test) = build_split(train_docs, test_docs, cfg)?;
    Ok(LoadedCorpus {
        vocab,
        train,
        test,
        class_names,
        skipped,
        bydate,
    })
}

/// Seeded shuffle, then the first `round(n · test_fraction)` documents (at
/// least one, and leaving at least one for training) become the test split.
fn split_docs(docs: Vec<RawDocument>, test_fraction: f64, seed: u64) -> (Vec<RawDocument>, Vec<RawDocument>) {
    let n = docs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = if n < 2 {
        0
    } else {
        ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1)
    };
    let mut slots: Vec<Option<RawDocument>> = docs.into_iter().map(Some).collect();
    let mut take = |ids: &[usize]| -> Vec<RawDocument> { ids.iter().filter_map(|&i| slots[i].take()).collect() };
    let test = take(&order[..n_test]);
    let train = take(&order[n_test..]);
    (train, test)
}

fn list_dirs(path: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Class directories under `root` in sorted order, each with its sorted files.
fn class_dirs(root: &Path) -> Result<Vec<(String, Vec<PathBuf>)>, CorpusError> {
    let mut out = Vec::new();
    for dir in list_dirs(root)? {
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        if files.is_empty() {
            return Err(CorpusError::EmptyClass(dir.display().to_string()));
        }
        files.sort();
        out.push((name, files));
    }
    if out.is_empty() {
        return Err(CorpusError::Format(format!("{} has no class directories", root.display())));
    }
    Ok(out)
}

/// `<split dir>/`, so that file names reused across splits stay distinct.
fn split_prefix(dir: &Path) -> String {
    format!("{}/", dir.file_name().map(|n| n.to_string_lossy()).unwrap_or_default())
}

/// Reads every file; doc ids are `<prefix><class>/<file>`.
fn read_classes(
    classes: &[(String, Vec<PathBuf>)],
    class_names: &[String],
    prefix: &str,
    skipped: &mut usize,
) -> Result<Vec<RawDocument>, CorpusError> {
    let mut docs = Vec::new();
    for (name, files) in classes {
        let label = class_names.iter().position(|n| n == name).map(|l| l as u32);
        let read: Vec<Option<RawDocument>> = files
            .par_iter()
            .map(|file| {
                let bytes = fs::read(file).ok()?;
                let file_name = file.file_name()?.to_string_lossy();
                Some(RawDocument {
                    doc_id: format!("{prefix}{name}/{file_name}"),
                    label,
                    text: strip_headers(&String::from_utf8_lossy(&bytes)).to_string(),
                })
            })
            .collect();
        let before = docs.len();
        for doc in read {
            match doc {
                Some(doc) => docs.push(doc),
                None => *skipped += 1,
            }
        }
        if docs.len() == before {
            return Err(CorpusError::EmptyClass(name.clone()));
        }
    }
    Ok(docs)
}

/// Drops everything up to and including the first blank line. Text without a
/// blank line is returned unchanged.
pub(crate) fn strip_headers(text: &str) -> &str {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        offset += line.len();
        if line.trim_end_matches(['\n', '\r']).is_empty() {
            return &text[offset..];
        }
    }
    text
}

/// One token per line; blank lines ignored, tokens lowercased.
pub fn read_stopwords(path: &Path) -> Result<BTreeSet<String>, CorpusError> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn write(dir: &Path, rel: &str, text: &str) {
        let p = dir.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, text).unwrap();
    }

    fn cfg() -> CorpusConfig {
        CorpusConfig {
            min_doc_freq: 1,
            test_fraction: 0.5,
            split_seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn strips_headers() {
        assert_eq!(strip_headers("From: x\nSubject: y\n\nbody text\n"), "body text\n");
        assert_eq!(strip_headers("From: x\r\n\r\nbody"), "body");
        assert_eq!(strip_headers("no header here"), "no header here");
    }

    #[test]
    fn flat_layout_splits_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..5 {
            write(dir.path(), &format!("rec.sport/{i}"), "Subject: hi\n\ngame team season");
            write(dir.path(), &format!("soc.religion/{i}"), "Subject: hi\n\ngod bible faith");
        }
        let a = load_20newsgroups(dir.path(), &cfg()).unwrap();
        assert!(!a.bydate);
        assert_eq!(a.class_names, vec!["rec.sport", "soc.religion"]);
        assert_eq!((a.train.len(), a.test.len()), (5, 5));
        let train_ids: HashSet<_> = a.train.doc_ids.iter().collect();
        assert!(a.test.doc_ids.iter().all(|id| !train_ids.contains(id)));
        assert_eq!(a.vocab.index_of("subject"), None);

        let b = load_20newsgroups(dir.path(), &cfg()).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn bydate_layout_used_as_is() {
        let dir = tempfile::tempdir().unwrap();
        for (split, n) in [("train", 3), ("test", 2)] {
            for class in ["alt.atheism", "comp.graphics"] {
                for i in 0..n {
                    write(dir.path(), &format!("20news-bydate-{split}/{class}/{split}{i}"), "H: v\n\nwords here");
                }
            }
        }
        let c = load_20newsgroups(dir.path(), &cfg()).unwrap();
        assert!(c.bydate);
        assert_eq!((c.train.len(), c.test.len()), (6, 4));
        assert_eq!(c.train.labels.iter().filter(|l| **l == Some(1)).count(), 3);
    }

    #[test]
    fn errors() {
        let missing = load_20newsgroups(Path::new("/definitely/not/here"), &cfg());
        assert!(matches!(missing, Err(CorpusError::MissingPath(_))));

        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a/1", "x\n\nhello world");
        fs::create_dir_all(dir.path().join("b")).unwrap();
        assert!(matches!(load_20newsgroups(dir.path(), &cfg()), Err(CorpusError::EmptyClass(_))));
    }

    #[test]
    fn stopword_file() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "stop.txt", "The\n\n of \n");
        let s = read_stopwords(&dir.path().join("stop.txt")).unwrap();
        assert_eq!(s.into_iter().collect::<Vec<_>>(), vec!["of", "the"]);
    }
}
