//! Acceptance suite. Runs each criterion, prints one PASS/FAIL line per
//! criterion, and exits non-zero if any fails.

mod common;

#[path = "../../core/tests/common/mod.rs"]
mod oracles;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trimrank_core::analysis::analyze_redundancy;
use trimrank_core::distiller::filter_query;
use trimrank_core::metrics::{
    length_normalized_nll, multi_occurrence_ratio, ndcg_at_k, tail_repeat_ratio, MetricsError,
};
use trimrank_core::parser::{extract_rankings, parse_final_ranking, render_ranking, repair};
use trimrank_core::persistence::{
    parse_qrels, parse_run, parse_samples, read_qrels, read_run, read_samples, render_report, Report,
    ReportFormat,
};
use trimrank_core::{
    CandidateSet, FinishReason, Qrels, Ranking, SplitMode, TokenLen, TokenProvenance, TrajectorySample,
};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn rng(salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x7e57_0000 + salt)
}

fn universe(n: usize) -> CandidateSet {
    CandidateSet::from_ids("q", (1..=n).map(|i| format!("d{i}"))).unwrap()
}

fn random_ranking(r: &mut ChaCha8Rng, n: usize, min_len: usize) -> Ranking {
    let mut ids: Vec<usize> = (1..=n).collect();
    ids.shuffle(r);
    let keep = r.random_range(min_len..=n);
    let mut groups: Vec<Vec<String>> = Vec::new();
    for (i, a) in ids.into_iter().take(keep).enumerate() {
        let doc = format!("d{a}");
        match groups.last_mut() {
            Some(g) if i > 0 && r.random_bool(0.3) => g.push(doc),
            _ => groups.push(vec![doc]),
        }
    }
    Ranking::new(groups).unwrap()
}

fn criterion_1() -> Check {
    let started = Instant::now();
    let mut r = rng(1);
    let instances = 600;
    let mut max_delta = 0f64;
    let mut ideal_checked = 0;
    for _ in 0..instances {
        let n = r.random_range(1..=10);
        let grades: Vec<u32> = (0..n).map(|_| r.random_range(0..=3)).collect();
        let mut qrels = Qrels::new();
        let mut map = HashMap::new();
        for (i, g) in grades.iter().enumerate() {
            qrels.insert("q", format!("d{i}"), *g);
            map.insert(format!("d{i}"), *g);
        }
        let mut order: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        order.shuffle(&mut r);
        for k in [10, r.random_range(1..=10)] {
            let got = ndcg_at_k(&Ranking::strict(order.clone()).unwrap(), &qrels, "q", k);
            let want = oracles::ndcg(&order, &map, k);
            max_delta = max_delta.max((got - want).abs());
        }
        let mut ideal = order.clone();
        ideal.sort_by_key(|d| std::cmp::Reverse(map[d]));
        let score = ndcg_at_k(&Ranking::strict(ideal).unwrap(), &qrels, "q", 10);
        if grades.iter().any(|&g| g > 0) {
            ensure!(score == 1.0, "ideal ranking scored {score} for grades {grades:?}");
            ideal_checked += 1;
        } else {
            ensure!(score == 0.0, "all-zero qrels scored {score}");
        }
    }
    let mut zero = Qrels::new();
    for i in 0..5 {
        zero.insert("z", format!("d{i}"), 0);
    }
    let z = ndcg_at_k(&Ranking::strict((0..5).map(|i| format!("d{i}"))).unwrap(), &zero, "z", 10);
    ensure!(z == 0.0, "all-zero qrels scored {z}");
    let elapsed = started.elapsed();
    ensure!(max_delta < 1e-12, "max |delta| {max_delta:e} exceeds 1e-12");
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!(
        "{instances} instances, max |delta| {max_delta:.1e}, {ideal_checked} ideal rankings at 1.0, {:.2} s",
        elapsed.as_secs_f64()
    ))
}

fn filter_sample(k: u32, score: Option<f64>, len: u64) -> TrajectorySample {
    let valid = score.is_some();
    TrajectorySample {
        query_id: "q".into(),
        sample_index: k,
        candidate_ids: vec!["a".into(), "b".into()],
        prompt_hash: "h".into(),
        raw_text: String::new(),
        reasoning_text: String::new(),
        split_mode: SplitMode::LastRanking,
        final_ranking: valid.then(|| Ranking::strict(["a", "b"]).unwrap()),
        coverage: valid.then_some(1.0),
        ranking_sequence: vec![],
        token_len: TokenLen {
            count: len,
            provenance: TokenProvenance::Approximated,
        },
        score,
        valid,
        finish_reason: FinishReason::Stop,
        error: (!valid).then(|| "no parseable ranking".into()),
    }
}

fn criterion_2() -> Check {
    let mut r = rng(2);
    let instances = 1200;
    let mut retained = 0;
    for _ in 0..instances {
        let k = r.random_range(1..=16);
        let coarse = r.random_bool(0.5);
        let samples: Vec<TrajectorySample> = (1..=k)
            .map(|i| {
                let score = if r.random_bool(0.15) {
                    None
                } else if coarse {
                    Some(r.random_range(0..=4) as f64 / 4.0)
                } else {
                    Some(r.random_range(0.0..=1.0))
                };
                let len = if coarse { r.random_range(1..=5) * 100 } else { r.random_range(1..=4000) };
                filter_sample(i, score, len)
            })
            .collect();
        let points: Vec<oracles::FilterPoint> = samples
            .iter()
            .map(|s| oracles::FilterPoint {
                index: s.sample_index,
                valid: s.valid,
                score: s.score.unwrap_or(0.0),
                len: s.token_len.count,
            })
            .collect();
        let want = oracles::filter(&points);
        let (stats, target) = filter_query("q", &samples).map_err(|e| e.to_string())?;
        ensure!(stats.efficient_indices == want.efficient, "E_q {:?} vs oracle {:?}", stats.efficient_indices, want.efficient);
        ensure!(stats.target_index == want.target, "target {:?} vs oracle {:?}", stats.target_index, want.target);
        ensure!(target.map(|t| t.sample_index) == want.target, "returned target differs from stats");
        if let (Some(ms), Some(ml)) = (stats.mean_score, stats.mean_len) {
            for p in points.iter().filter(|p| p.valid && p.score > 0.0) {
                let member = stats.efficient_indices.contains(&p.index);
                let ok = p.score >= ms && (p.len as f64) < ml;
                ensure!(member == ok, "sample {} membership {member} but predicates give {ok}", p.index);
            }
        }
        retained += stats.retained as usize;
    }

    let worked = [
        filter_sample(1, Some(0.8), 100),
        filter_sample(2, Some(0.8), 300),
        filter_sample(3, Some(0.5), 120),
    ];
    let (stats, target) = filter_query("q", &worked).map_err(|e| e.to_string())?;
    let (ms, ml) = (stats.mean_score.unwrap(), stats.mean_len.unwrap());
    ensure!((ms - 0.7).abs() < 1e-12, "mean score {ms}");
    ensure!(ml == 520.0 / 3.0, "mean length {ml}");
    ensure!(stats.efficient_indices == [1], "worked example E_q {:?}", stats.efficient_indices);
    let t = target.ok_or("worked example has no target")?;
    ensure!(t.score == Some(0.8) && t.token_len.count == 100, "worked example target {t:?}");

    let (single, _) = filter_query("q", &[filter_sample(1, Some(0.9), 50)]).map_err(|e| e.to_string())?;
    ensure!(single.efficient_indices.is_empty(), "singleton E_q not empty");
    let same: Vec<_> = (1..=5).map(|i| filter_sample(i, Some(0.6), 70)).collect();
    let (same, _) = filter_query("q", &same).map_err(|e| e.to_string())?;
    ensure!(same.efficient_indices.is_empty(), "identical-set E_q not empty");
    Ok(format!(
        "{instances} random sets match the exhaustive checker ({retained} retained); worked example mu = (0.7, 173.33) keeps only (0.8, 100); degenerate sets empty"
    ))
}

fn criterion_3() -> Check {
    let u20 = universe(20);
    let example = parse_final_ranking("[13] > [14] > [19] > [3] = [6]", &u20).map_err(|e| e.to_string())?;
    let head: Vec<Vec<String>> = example.ranking.groups()[..4].to_vec();
    let want: Vec<Vec<String>> = vec![vec!["d13".into()], vec!["d14".into()], vec!["d19".into()], vec!["d3".into(), "d6".into()]];
    ensure!(head == want, "parsed {head:?}");

    let mut r = rng(3);
    let rounds = 1000;
    for _ in 0..rounds {
        let n = r.random_range(2..=20);
        let u = universe(n);
        let ranking = random_ranking(&mut r, n, 2);
        let text = render_ranking(&ranking, &u).ok_or("render failed")?;
        let parsed = extract_rankings(&text, &u);
        ensure!(parsed.len() == 1 && parsed[0].ranking == ranking, "round trip failed on `{text}`");
    }

    let seps = [" > ", ">", " = ", "=", ", ", " and "];
    let mut totals = 0;
    for _ in 0..rounds {
        let n = r.random_range(1..=20);
        let u = universe(n);
        let mut text = String::new();
        for i in 0..r.random_range(0..=25) {
            if i > 0 {
                text.push_str(seps[r.random_range(0..seps.len())]);
            }
            text.push_str(&format!("[{}]", r.random_range(0..=25)));
        }
        if let Ok(f) = parse_final_ranking(&text, &u) {
            let mut docs: Vec<&str> = f.ranking.flatten().collect();
            docs.sort();
            let mut all: Vec<&str> = u.doc_ids().collect();
            all.sort();
            ensure!(docs == all, "repair of `{text}` is not a permutation of the universe");
            totals += 1;
        }
    }

    for _ in 0..200 {
        let n = r.random_range(2..=10);
        let u = universe(n);
        let stated: Vec<Ranking> = (0..r.random_range(2..=5)).map(|_| random_ranking(&mut r, n, 2)).collect();
        let text = stated
            .iter()
            .map(|x| format!("Perhaps {}.", render_ranking(x, &u).unwrap()))
            .collect::<Vec<_>>()
            .join(" Let me reconsider passage [1]. ");
        let got = parse_final_ranking(&text, &u).map_err(|e| e.to_string())?;
        ensure!(got == repair(stated.last().unwrap(), &u), "last-match rule violated on `{text}`");
    }
    Ok(format!(
        "example string parses to [[13],[14],[19],[3,6]]; {rounds} round trips; {totals} repaired rankings are total; last match wins on 200 multi-ranking traces"
    ))
}

fn criterion_4() -> Check {
    let mut r = rng(4);
    let alphabet: Vec<Ranking> = (0..5).map(|_| random_ranking(&mut r, 4, 2)).collect();
    let instances = 1000;
    for _ in 0..instances {
        let size = r.random_range(1..=5);
        let seq: Vec<usize> = (0..r.random_range(0..=20)).map(|_| r.random_range(0..size)).collect();
        let rankings: Vec<Ranking> = seq.iter().map(|&i| alphabet[i].clone()).collect();
        // the oracle compares rankings structurally, ties included
        let trr = tail_repeat_ratio(&rankings);
        let mor = multi_occurrence_ratio(&rankings);
        ensure!(trr == oracles::trr(&rankings), "TRR mismatch on {seq:?}");
        ensure!(mor == oracles::mor(&rankings), "MOR mismatch on {seq:?}");
    }
    let a = Ranking::strict(["d1", "d2"]).unwrap();
    let b = Ranking::strict(["d2", "d1"]).unwrap();
    let abaa = [a.clone(), b.clone(), a.clone(), a.clone()];
    ensure!(tail_repeat_ratio(&abaa) == 0.5, "TRR [A,B,A,A]");
    ensure!(multi_occurrence_ratio(&abaa) == 0.5, "MOR [A,B,A,A]");
    let tied = Ranking::new(vec![vec!["d1".into(), "d2".into()]]).unwrap();
    let distinct = [a, b, tied];
    ensure!(tail_repeat_ratio(&distinct) == 0.0 && multi_occurrence_ratio(&distinct) == 0.0, "all-distinct");

    let mut s = filter_sample(1, Some(1.0), 10);
    s.ranking_sequence = abaa.to_vec();
    let report = analyze_redundancy("teacher", &[s]);
    let csv = render_report(Report::Redundancy(&report), ReportFormat::Csv).map_err(|e| e.to_string())?;
    ensure!(csv == "model_tag,avg_trr,avg_mor\nteacher,0.500000,0.500000\n", "csv was {csv:?}");
    Ok(format!("{instances} sequences match enumeration; [A,B,A,A] gives 0.5/0.5; columns model_tag,avg_trr,avg_mor"))
}

fn criterion_5() -> Check {
    let v = length_normalized_nll(&[vec![-1.0, -2.0, -3.0]]).map_err(|e| e.to_string())?;
    ensure!(v == 2.0, "[-1,-2,-3] gave {v}");
    let mut r = rng(5);
    let batches = 500;
    let mut max_rel = 0f64;
    for _ in 0..batches {
        let mut batch: Vec<Vec<f64>> = (0..r.random_range(1..=8))
            .map(|_| (0..r.random_range(1..=40)).map(|_| -r.random_range(0.0..15.0)).collect())
            .collect();
        let base = length_normalized_nll(&batch).map_err(|e| e.to_string())?;
        batch.shuffle(&mut r);
        for s in batch.iter_mut() {
            s.shuffle(&mut r);
        }
        let permuted = length_normalized_nll(&batch).map_err(|e| e.to_string())?;
        max_rel = max_rel.max((permuted - base).abs() / base.abs().max(1.0));
    }
    // summation order may change the last bits
    ensure!(max_rel <= 1e-12, "permutation changed the loss by {max_rel:e}");
    let positive = length_normalized_nll(&[vec![-1.0], vec![-0.5, 0.25]]);
    ensure!(
        matches!(positive, Err(MetricsError::PositiveLogprob { seq: 1, token: 1, .. })),
        "positive log-probability accepted: {positive:?}"
    );
    ensure!(length_normalized_nll(&[vec![]]).is_err(), "empty sequence accepted");
    Ok(format!("[-1,-2,-3] gives 2.0; {batches} permuted batches within {max_rel:.1e}; positive logprobs rejected"))
}

fn read_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    common::PIPELINE_FILES
        .iter()
        .map(|f| (f.to_string(), std::fs::read(dir.join(f)).unwrap()))
        .collect()
}

fn criterion_6() -> Check {
    let started = Instant::now();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let da = common::write_dataset(a.path());
    let db = common::write_dataset(b.path());
    common::run_pipeline(&da, 2024);
    common::run_pipeline(&db, 2024);
    let elapsed = started.elapsed();
    for ((name, x), (_, y)) in read_bytes(a.path()).iter().zip(read_bytes(b.path())) {
        ensure!(!x.is_empty() && *x == y, "{name} differs between runs");
    }
    ensure!(elapsed < Duration::from_secs(60), "two runs took {elapsed:?}");

    // Hand computation for the mixed profile (sample k uses archetype
    // (k - 1) mod 3: ideal-short, ideal-long, poor-short). Graded queries:
    // ideal scores 1 > mean > reversed score, and ideal-long traces are far
    // above the mean length, so E_q = ideal-short = {1,4,...,16}. All-zero
    // queries: nothing scores above 0, E_q empty. Uniform queries: every
    // order scores 1, so every short sample is efficient.
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("filter.json")).unwrap()).unwrap();
    let ideal_short: Vec<u32> = (1..=16).filter(|k| k % 3 == 1).collect();
    let any_short: Vec<u32> = (1..=16).filter(|k| k % 3 != 2).collect();
    let scored = read_samples(&a.path().join("scored.jsonl")).map_err(|e| e.to_string())?;
    for (n, row) in (1..=common::QUERIES).zip(stats["stats"].as_array().unwrap()) {
        let qid = common::qid(n);
        ensure!(row["query_id"] == qid.as_str(), "stats out of order at {qid}");
        let want: Vec<u32> = match common::kind(n) {
            common::Kind::Graded => ideal_short.clone(),
            common::Kind::AllZero => vec![],
            common::Kind::Uniform => any_short.clone(),
        };
        let got: Vec<u32> = serde_json::from_value(row["efficient_indices"].clone()).unwrap();
        ensure!(got == want, "{qid}: E_q {got:?}, hand computation {want:?}");
        let target = row["target_index"].as_u64().map(|t| t as u32);
        let shortest = scored
            .iter()
            .filter(|s| s.query_id == qid && want.contains(&s.sample_index))
            .min_by_key(|s| (s.token_len.count, s.sample_index))
            .map(|s| s.sample_index);
        ensure!(target == shortest, "{qid}: target {target:?}, shortest member {shortest:?}");
    }
    let rate = stats["retention_rate"].as_f64().unwrap();
    ensure!(rate == 0.85, "retention {rate}, hand computation 17/20 = 0.85");
    let corpus_lines = std::fs::read_to_string(a.path().join("corpus.jsonl")).unwrap().lines().count();
    ensure!(corpus_lines == 17, "corpus has {corpus_lines} records");
    Ok(format!(
        "20 queries x K=16, {} files byte-identical across two runs in {:.1} s; retention 0.85 and every E_q match the hand computation",
        common::PIPELINE_FILES.len(),
        elapsed.as_secs_f64()
    ))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data").join(name)
}

fn criterion_7() -> Check {
    let qrels = read_qrels(&data("qrels.dl.txt")).map_err(|e| e.to_string())?;
    ensure!(qrels.len() == 11 && qrels.grade("19335", "109063") == 3, "qrels snippet misread");
    let run = read_run(&data("run.bm25.txt"), 2).map_err(|e| e.to_string())?;
    ensure!(run["19335"] == ["7267248", "109063"], "run snippet misread: {:?}", run["19335"]);
    ensure!(parse_qrels("q1 0 d3 2", "f").map_err(|e| e.to_string())?.grade("q1", "d3") == 2, "basic judgment");
    ensure!(parse_qrels("", "f").map_err(|e| e.to_string())?.is_empty(), "empty qrels");
    let sorted = parse_run("q Q0 b 2 1.0 t\nq Q0 a 1 2.0 t\n", 10, "f").map_err(|e| e.to_string())?;
    ensure!(sorted["q"] == ["a", "b"], "rank order");

    let cases: Vec<(&str, usize, Option<usize>)> = vec![
        ("qrels non-integer grade", 1, parse_qrels("q1 0 d3 x", "f").err().and_then(|e| e.line_number())),
        ("qrels short line", 2, parse_qrels("q1 0 d1 1\nq1 0 d2\n", "f").err().and_then(|e| e.line_number())),
        ("run duplicate doc", 2, parse_run("q Q0 a 1 2 t\nq Q0 a 2 1 t\n", 10, "f").err().and_then(|e| e.line_number())),
        ("run non-numeric rank", 1, parse_run("q Q0 a r 2 t\n", 10, "f").err().and_then(|e| e.line_number())),
        ("run non-numeric score", 3, parse_run("q Q0 a 1 2 t\n\nq Q0 b 2 s t\n", 10, "f").err().and_then(|e| e.line_number())),
        ("samples corrupted line", 1, parse_samples("{oops", "f").err().and_then(|e| e.line_number())),
        ("samples schema mismatch", 1, parse_samples("{\"schema_version\":9}", "f").err().and_then(|e| e.line_number())),
    ];
    for (name, want, got) in &cases {
        ensure!(*got == Some(*want), "{name}: line {got:?}, expected {want}");
    }
    Ok(format!("TREC snippets read back; {} malformed-line cases report the right line", cases.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 7] = [
        ("nDCG oracle equivalence", criterion_1),
        ("filter exactness", criterion_2),
        ("parser fidelity", criterion_3),
        ("TRR/MOR equivalence", criterion_4),
        ("length-normalized NLL", criterion_5),
        ("end-to-end determinism", criterion_6),
        ("format robustness", criterion_7),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
