//! A 20-query desk-scale dataset and helpers to drive the binary.
//!
//! Every query has ten candidates `qNN-d1..d10`. Judgments come in three
//! kinds so that filter outcomes under the mixed mock profile can be worked
//! out by hand:
//!
//! - `q01..q14` graded: grade of `dj` is `(j + N) mod 4`, so the ideal order
//!   scores 1 and the reversed order scores strictly between 0 and 1;
//! - `q15..q17` all judged 0: every sample scores 0;
//! - `q18..q20` all judged 1: every order scores 1.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const QUERIES: usize = 20;
pub const DEPTH: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Graded,
    AllZero,
    Uniform,
}

pub fn qid(n: usize) -> String {
    format!("q{n:02}")
}

pub fn kind(n: usize) -> Kind {
    match n {
        1..=14 => Kind::Graded,
        15..=17 => Kind::AllZero,
        _ => Kind::Uniform,
    }
}

pub struct Dataset {
    pub dir: PathBuf,
    pub topics: PathBuf,
    pub run: PathBuf,
    pub collection: PathBuf,
    pub qrels: PathBuf,
}

pub fn write_dataset(dir: &Path) -> Dataset {
    let mut topics = String::new();
    let mut run = String::new();
    let mut collection = String::new();
    let mut qrels = String::new();
    for n in 1..=QUERIES {
        let q = qid(n);
        writeln!(topics, "{q}\twhat is the meaning of term {n}").unwrap();
        for j in 1..=DEPTH {
            let d = format!("{q}-d{j}");
            writeln!(run, "{q} Q0 {d} {j} {:.4} bm25", 20.0 - j as f64).unwrap();
            writeln!(collection, "{d}\tpassage {j} discussing term {n} in some depth").unwrap();
            let grade = match kind(n) {
                Kind::Graded => (j + n) % 4,
                Kind::AllZero => 0,
                Kind::Uniform => 1,
            };
            writeln!(qrels, "{q} 0 {d} {grade}").unwrap();
        }
    }
    let put = |name: &str, text: &str| {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    Dataset {
        dir: dir.to_path_buf(),
        topics: put("topics.tsv", &topics),
        run: put("run.bm25.txt", &run),
        collection: put("collection.tsv", &collection),
        qrels: put("qrels.txt", &qrels),
    }
}

pub fn trimrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trimrank"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str]) -> Output {
    let out = trimrank(args);
    assert!(
        out.status.success(),
        "trimrank {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Output files of one full pipeline run.
pub const PIPELINE_FILES: [&str; 11] = [
    "samples.jsonl",
    "scored.jsonl",
    "eval.json",
    "corpus.jsonl",
    "filter.json",
    "redundancy.json",
    "student.jsonl",
    "student-scored.jsonl",
    "student-eval.json",
    "comparison.csv",
    "curve.csv",
];

/// sample, evaluate, build-corpus, analyze, then a second (eval-profile)
/// model and a two-model report, all with the mock backend.
pub fn run_pipeline(ds: &Dataset, seed: u64) {
    let d = &ds.dir;
    let p = |name: &str| d.join(name).to_str().unwrap().to_string();
    let seed = seed.to_string();
    let student_cfg = d.join("student.toml");
    std::fs::write(&student_cfg, "[mock]\npreset = \"ideal\"\n").unwrap();
    let data = [
        "--topics",
        s(&ds.topics),
        "--run",
        s(&ds.run),
        "--collection",
        s(&ds.collection),
        "--qrels",
        s(&ds.qrels),
        "--depth",
        "10",
    ];
    let mut sample = vec!["sample", "--backend", "mock", "--profile", "distill", "--seed", &seed];
    sample.extend(data);
    let out = p("samples.jsonl");
    sample.extend(["--out", &out]);
    ok(&sample);
    ok(&[
        "evaluate", "--samples", &p("samples.jsonl"), "--qrels", s(&ds.qrels), "--tag", "teacher",
        "--scored-out", &p("scored.jsonl"), "--out", &p("eval.json"),
    ]);
    ok(&[
        "build-corpus", "--samples", &p("scored.jsonl"), "--topics", s(&ds.topics), "--collection",
        s(&ds.collection), "--stats-out", &p("filter.json"), "--out", &p("corpus.jsonl"),
    ]);
    ok(&["analyze", "--samples", &p("samples.jsonl"), "--tag", "teacher", "--out", &p("redundancy.json")]);

    let mut student = vec!["--config", s(&student_cfg), "sample", "--profile", "eval", "--seed", &seed];
    student.extend(data);
    let out = p("student.jsonl");
    student.extend(["--out", &out]);
    ok(&student);
    ok(&[
        "evaluate", "--samples", &p("student.jsonl"), "--qrels", s(&ds.qrels), "--tag", "student",
        "--scored-out", &p("student-scored.jsonl"), "--out", &p("student-eval.json"),
    ]);
    ok(&[
        "report", "--reports", &p("eval.json"), &p("student-eval.json"), "--buckets", "4", "--out",
        &p("comparison.csv"), "--curve-out", &p("curve.csv"),
    ]);
}
