//! The `olid` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const HEADER: &str = "id\ttweet\tsubtask_a\tsubtask_b\tsubtask_c\n";

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn olid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_olid")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small, fast model configuration.
fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        "seed = 3\n[tokenizer]\nmax_len = 24\n[model]\nlayers = 1\nhidden = 16\nheads = 2\nffn_mult = 2\n\
         [train]\nmax_epochs = 2\nbatch_size = 16\n",
    )
    .unwrap();
    path
}

fn train(dir: &Path, level: &str, out: &str) -> Output {
    let cfg = small_config(dir);
    let out_dir = dir.join(out);
    olid(&[
        "train",
        "--config",
        s(&cfg),
        "--train",
        s(&fixture("train.tsv")),
        "--test",
        s(&fixture("test.tsv")),
        "--level",
        level,
        "--out-dir",
        s(&out_dir),
    ])
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&olid(&[])), 1);
    assert_eq!(code(&olid(&["train", "--bogus"])), 1);
    assert_eq!(code(&olid(&["train", "--level", "D"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_eq!(code(&olid(&["train", "--config", s(&cfg)])), 1);
    // No training file configured.
    assert_eq!(code(&olid(&["train"])), 1);
    assert_eq!(code(&olid(&["--help"])), 0);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.tsv");
    let missing = olid(&["preprocess", "/nonexistent/x.tsv", s(&out)]);
    assert_eq!(code(&missing), 2);

    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, format!("{HEADER}1\thello\tNOT\tNULL\tNULL\n2\tonly three\tNOT\n")).unwrap();
    let r = olid(&["preprocess", s(&bad), s(&out)]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("line 3"), "{}", stderr(&r));

    let bad_label = dir.path().join("label.tsv");
    std::fs::write(&bad_label, format!("{HEADER}1\thello\tMAYBE\tNULL\tNULL\n")).unwrap();
    let r = olid(&["preprocess", s(&bad_label), s(&out)]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("line 2") && stderr(&r).contains("MAYBE"));
}

#[test]
fn header_only_input_gives_header_only_output() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.tsv");
    std::fs::write(&empty, HEADER).unwrap();
    let out = dir.path().join("out.tsv");
    assert_eq!(code(&olid(&["preprocess", s(&empty), s(&out)])), 0);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), HEADER);
}

#[test]
fn preprocess_matches_the_worked_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.tsv");
    assert_eq!(code(&olid(&["preprocess", s(&fixture("worked_examples.tsv")), s(&out)])), 0);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(fixture("worked_examples.expected.tsv")).unwrap());
}

#[test]
fn vocab_file_layout() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let vocab = d.join("vocab.txt");
    assert_eq!(code(&olid(&["vocab", s(&fixture("train.tsv")), s(&vocab)])), 0);
    let text = std::fs::read_to_string(&vocab).unwrap();
    assert!(text.starts_with("[PAD]\t0\n[UNK]\t1\n[CLS]\t2\n[SEP]\t3\n"), "{text}");
    assert!(text.lines().all(|l| l.split('\t').count() == 2));
}

#[test]
fn level_b_without_offensive_rows_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let only_not = dir.path().join("not.tsv");
    let rows: String = (0..10).map(|i| format!("{i}\tnice words number {i}\tNOT\tNULL\tNULL\n")).collect();
    std::fs::write(&only_not, format!("{HEADER}{rows}")).unwrap();
    let cfg = small_config(dir.path());
    let r = olid(&[
        "train",
        "--config",
        s(&cfg),
        "--train",
        s(&only_not),
        "--test",
        s(&only_not),
        "--level",
        "B",
        "--out-dir",
        s(&dir.path().join("b")),
    ]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("level B"), "{}", stderr(&r));
}

#[test]
fn resample_stats_reports_before_and_after() {
    let r = olid(&["resample-stats", s(&fixture("train.tsv")), "--level", "A", "--mode", "over", "--seed", "1"]);
    assert_eq!(code(&r), 0);
    assert_eq!(String::from_utf8(r.stdout).unwrap(), "NOT 107→107\nOFF 53→107\n");
}

#[test]
fn train_evaluate_predict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (level, name) in [("A", "a"), ("B", "b"), ("C", "c")] {
        let r = train(d, level, name);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
        for f in ["model.ckpt", "vocab.txt", "train.log", "config.toml"] {
            assert!(d.join(name).join(f).exists(), "{name}/{f}");
        }
    }

    // Same seed, same bytes.
    let again = train(d, "A", "a2");
    assert_eq!(code(&again), 0);
    assert_eq!(std::fs::read(d.join("a/model.ckpt")).unwrap(), std::fs::read(d.join("a2/model.ckpt")).unwrap());
    assert_eq!(std::fs::read(d.join("a/train.log")).unwrap(), std::fs::read(d.join("a2/train.log")).unwrap());

    let ckpt = d.join("a/model.ckpt");
    let test = fixture("test.tsv");
    let r = olid(&["evaluate", "--checkpoint", s(&ckpt), "--test", s(&test)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let table = String::from_utf8(r.stdout).unwrap();
    assert!(table.starts_with("Subtask A\n") && table.contains("MacroF "), "{table}");
    assert!(d.join("a/report.tsv").exists() && d.join("a/report.json").exists());

    let wrong_level = olid(&["evaluate", "--checkpoint", s(&ckpt), "--test", s(&test), "--level", "C"]);
    assert_eq!(code(&wrong_level), 1);
    let wrong_vocab =
        olid(&["evaluate", "--checkpoint", s(&ckpt), "--vocab", s(&d.join("b/vocab.txt")), "--test", s(&test)]);
    assert_eq!(code(&wrong_vocab), 3, "{}", stderr(&wrong_vocab));

    let preds = d.join("preds.tsv");
    let r = olid(&[
        "predict",
        "--model-a",
        s(&ckpt),
        "--model-b",
        s(&d.join("b/model.ckpt")),
        "--model-c",
        s(&d.join("c/model.ckpt")),
        s(&test),
        s(&preds),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let text = std::fs::read_to_string(&preds).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    assert_eq!(header[0], "id");
    let mut rows = 0;
    for line in lines {
        let cols: Vec<&str> = line.split('\t').collect();
        let (a, b, c) = (cols[1], cols[2], cols[3]);
        match a {
            "NOT" => assert_eq!((b, c), ("NULL", "NULL")),
            "OFF" => match b {
                "UNT" => assert_eq!(c, "NULL"),
                "TIN" => assert!(["IND", "GRP", "OTH"].contains(&c)),
                _ => panic!("bad B label {b}"),
            },
            _ => panic!("bad A label {a}"),
        }
        rows += 1;
    }
    assert_eq!(rows, 40);

    let empty = d.join("empty.tsv");
    std::fs::write(&empty, HEADER).unwrap();
    let r = olid(&[
        "predict",
        "--model-a",
        s(&ckpt),
        "--model-b",
        s(&d.join("b/model.ckpt")),
        "--model-c",
        s(&d.join("c/model.ckpt")),
        s(&empty),
        s(&preds),
    ]);
    assert_eq!(code(&r), 0);
    assert_eq!(std::fs::read_to_string(&preds).unwrap().lines().count(), 1);

    // Stages in the wrong slots are a compatibility error.
    let swapped = olid(&[
        "predict",
        "--model-a",
        s(&d.join("b/model.ckpt")),
        "--model-b",
        s(&ckpt),
        "--model-c",
        s(&d.join("c/model.ckpt")),
        s(&test),
        s(&preds),
    ]);
    assert_eq!(code(&swapped), 3);

    let corrupt = d.join("corrupt.ckpt");
    let mut bytes = std::fs::read(&ckpt).unwrap();
    let n = bytes.len();
    bytes[n - 30] ^= 0xff;
    std::fs::write(&corrupt, bytes).unwrap();
    std::fs::copy(d.join("a/vocab.txt"), d.join("vocab.txt")).unwrap();
    let r = olid(&["evaluate", "--checkpoint", s(&corrupt), "--test", s(&test)]);
    assert_eq!(code(&r), 3);
}
