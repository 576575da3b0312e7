use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scat::corpus::CorpusArchive;
use scat::ModelFile;

const WORDS: [&[&str]; 3] = [
    &["hockey", "team", "season", "goal", "players", "league"],
    &["god", "bible", "church", "faith", "jesus", "prayer"],
    &["orbit", "launch", "nasa", "moon", "shuttle", "rocket"],
];

fn scat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scat"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Flat layout: three class directories of ten posts each.
fn write_corpus(root: &Path) {
    for (c, words) in WORDS.iter().enumerate() {
        let dir = root.join(format!("class{c}"));
        fs::create_dir_all(&dir).unwrap();
        for d in 0..10 {
            let body: Vec<&str> = (0..15).map(|i| words[(i * (d + 2) + d) % words.len()]).collect();
            fs::write(dir.join(d.to_string()), format!("Subject: {d}\n\n{}", body.join(" "))).unwrap();
        }
    }
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&dir.path().join("news"));
        let out = scat(&["prep", "--input", s(&dir.path().join("news")), "--output", s(&dir.path().join("c")), "--test-fraction", "0.3"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, output: &str, extra: &[&str]) -> Output {
        let model = self.path(output);
        let corpus = self.path("c.train.cae");
        let mut args = vec!["train", "--corpus", s(&corpus), "--output", s(&model), "--batch", "8"];
        if !extra.contains(&"--epochs") {
            args.extend(["--epochs", "5"]);
        }
        args.extend_from_slice(extra);
        scat(&args)
    }
}

#[test]
fn prep_writes_both_archives_and_a_summary() {
    let f = Fixture::new();
    let train = CorpusArchive::load(&f.path("c.train.cae")).unwrap();
    let test = CorpusArchive::load(&f.path("c.test.cae")).unwrap();
    assert_eq!(train.matrix.len() + test.matrix.len(), 30);
    assert_eq!(test.matrix.len(), 9);
    assert_eq!(train.meta.vocab, test.meta.vocab);

    let out = scat(&["prep", "--input", s(&f.path("news")), "--output", s(&f.path("small")), "--max-vocab", "4"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("classes=3"));
    assert!(CorpusArchive::load(&f.path("small.train.cae")).unwrap().meta.vocab.len() <= 4);
}

#[test]
fn prep_reports_missing_input_as_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = scat(&["prep", "--input", s(&dir.path().join("absent")), "--output", s(&dir.path().join("c"))]);
    assert_eq!(code(&out), 1);
    assert!(!out.stderr.is_empty());
}

#[test]
fn train_defaults_k_and_logs_epochs() {
    let f = Fixture::new();
    let out = f.train("m.scat", &["--hidden", "20", "--patience", "0"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let model = ModelFile::load(&f.path("m.scat")).unwrap();
    assert_eq!(model.params.competition.k, 10);
    let log = stdout(&out);
    assert_eq!(log.lines().count(), 1 + 5);
    assert!(log.lines().nth(1).unwrap().starts_with("1\t"));
}

#[test]
fn train_rejects_k_above_hidden() {
    let f = Fixture::new();
    assert_eq!(code(&f.train("m.scat", &["--hidden", "4", "--k", "5"])), 2);
    assert_eq!(code(&f.train("m.scat", &["--hidden", "4", "--variant", "bogus"])), 2);
    assert!(!f.path("m.scat").exists());
}

#[test]
fn deterministic_training_is_reproducible() {
    let f = Fixture::new();
    for name in ["a.scat", "b.scat"] {
        let out = f.train(name, &["--hidden", "6", "--deterministic", "--seed", "7"]);
        assert_eq!(code(&out), 0);
    }
    assert_eq!(fs::read(f.path("a.scat")).unwrap(), fs::read(f.path("b.scat")).unwrap());
    assert_eq!(code(&f.train("c.scat", &["--hidden", "6", "--variant", "none"])), 0);
}

#[test]
fn topics_prints_one_line_per_unit() {
    let f = Fixture::new();
    assert_eq!(code(&f.train("m.scat", &["--hidden", "3", "--variant", "kate", "--alpha", "2"])), 0);
    let first = scat(&["topics", "--model", s(&f.path("m.scat")), "--top-n", "2"]);
    assert_eq!(code(&first), 0);
    let text = stdout(&first);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    for (j, line) in lines.iter().enumerate() {
        let words = line.strip_prefix(&format!("topic_{j}: ")).unwrap();
        assert_eq!(words.split(' ').count(), 2);
    }
    assert_eq!(stdout(&scat(&["topics", "--model", s(&f.path("m.scat")), "--top-n", "2"])), text);

    fs::write(f.path("bad.scat"), b"SCAX garbage").unwrap();
    assert_eq!(code(&scat(&["topics", "--model", s(&f.path("bad.scat"))])), 1);
}

#[test]
fn classify_reports_json_and_checks_vocabulary() {
    let f = Fixture::new();
    assert_eq!(code(&f.train("m.scat", &["--hidden", "6", "--epochs", "40"])), 0);
    let (train, test) = (f.path("c.train.cae"), f.path("c.test.cae"));
    let out = scat(&["classify", "--model", s(&f.path("m.scat")), "--train", s(&train), "--test", s(&test)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["per_class"].as_array().unwrap().len(), 3);
    assert!(report["macro_f1"].as_f64().unwrap() >= 0.0);
    assert_eq!(report["confusion"].as_array().unwrap().len(), 3);

    let out = scat(&["prep", "--input", s(&f.path("news")), "--output", s(&f.path("other")), "--max-vocab", "5"]);
    assert_eq!(code(&out), 0);
    let other = f.path("other.test.cae");
    let out = scat(&["classify", "--model", s(&f.path("m.scat")), "--train", s(&train), "--test", s(&other)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn gradcheck_exit_code_follows_tolerance() {
    for variant in ["none", "scat", "kate", "ksparse"] {
        let out = scat(&["gradcheck", "--v", "12", "--h", "5", "--variant", variant, "--seed", "3"]);
        assert_eq!(code(&out), 0, "{variant}: {}", stdout(&out));
        assert!(stdout(&out).contains("max_relative_error="));
    }
    assert_eq!(code(&scat(&["gradcheck", "--h", "3", "--k", "4"])), 2);
    assert_eq!(code(&scat(&["gradcheck", "--eps", "0.5"])), 2);
}

#[test]
fn export_writes_one_row_per_document() {
    let f = Fixture::new();
    assert_eq!(code(&f.train("m.scat", &["--hidden", "4", "--variant", "ksparse"])), 0);
    let tsv = f.path("e.tsv");
    let (model, corpus) = (f.path("m.scat"), f.path("c.test.cae"));
    let args = ["export", "--model", s(&model), "--corpus", s(&corpus), "--output", s(&tsv)];
    assert_eq!(code(&scat(&args)), 0);
    let text = fs::read_to_string(&tsv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 9);
    assert!(lines.iter().all(|l| l.split('\t').count() == 4 + 2));
    assert_eq!(code(&scat(&args)), 0);
    assert_eq!(fs::read_to_string(&tsv).unwrap(), text);
}
