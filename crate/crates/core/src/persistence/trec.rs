use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use log::warn;

use super::{label, read_file, write_file, PersistError};
use crate::model::{DocId, Qrels};

/// Parses `qid 0 docid grade` lines. Repeated pairs keep the last grade.
pub fn parse_qrels(text: &str, source: &str) -> Result<Qrels, PersistError> {
    let mut qrels = Qrels::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(PersistError::line(
                source,
                n,
                format!("expected 4 columns `qid 0 docid grade`, found {}", cols.len()),
            ));
        }
        let grade: u32 = cols[3].parse().map_err(|_| {
            PersistError::line(
                source,
                n,
                format!("grade `{}` is not a non-negative integer", cols[3]),
            )
        })?;
        if let Some(prev) = qrels.insert(cols[0], cols[2], grade) {
            warn!(
                "{source}:{n}: repeated judgment for ({}, {}); {prev} replaced by {grade}",
                cols[0], cols[2]
            );
        }
    }
    Ok(qrels)
}

pub fn read_qrels(path: &Path) -> Result<Qrels, PersistError> {
    parse_qrels(&read_file(path)?, &label(path))
}

/// One line per judgment, sorted by query id then doc id.
pub fn format_qrels(qrels: &Qrels) -> String {
    let mut out = String::new();
    for (q, d, g) in qrels.iter() {
        out.push_str(&format!("{q} 0 {d} {g}\n"));
    }
    out
}

pub fn write_qrels(qrels: &Qrels, path: &Path) -> Result<(), PersistError> {
    write_file(path, &format_qrels(qrels))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub query_id: String,
    pub doc_id: String,
    pub rank: u32,
    pub score: f64,
    pub tag: String,
}

/// Parses `qid Q0 docid rank score tag` lines into per-query doc lists in
/// rank order, truncated to `depth`.
pub fn parse_run(
    text: &str,
    depth: usize,
    source: &str,
) -> Result<BTreeMap<String, Vec<DocId>>, PersistError> {
    if depth == 0 {
        return Err(PersistError::Invalid("run depth must be at least 1".into()));
    }
    let mut entries: BTreeMap<String, Vec<RunEntry>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(PersistError::line(
                source,
                n,
                format!("expected 6 columns `qid Q0 docid rank score tag`, found {}", cols.len()),
            ));
        }
        let rank: u32 = cols[3]
            .parse()
            .map_err(|_| PersistError::line(source, n, format!("rank `{}` is not an integer", cols[3])))?;
        let score: f64 = cols[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| PersistError::line(source, n, format!("score `{}` is not a number", cols[4])))?;
        if !seen.insert((cols[0].to_string(), cols[2].to_string())) {
            return Err(PersistError::line(
                source,
                n,
                format!("duplicate entry for query `{}` doc `{}`", cols[0], cols[2]),
            ));
        }
        entries.entry(cols[0].to_string()).or_default().push(RunEntry {
            query_id: cols[0].to_string(),
            doc_id: cols[2].to_string(),
            rank,
            score,
            tag: cols[5].to_string(),
        });
    }
    Ok(entries
        .into_iter()
        .map(|(qid, mut list)| {
            list.sort_by(|a, b| a.rank.cmp(&b.rank).then(b.score.total_cmp(&a.score)));
            let ranks_ok = list.iter().enumerate().all(|(i, e)| e.rank as usize == i + 1);
            let scores_ok = list.windows(2).all(|w| w[0].score > w[1].score);
            if !ranks_ok || !scores_ok {
                warn!("{source}: query `{qid}` ranks are not 1..m with strictly descending scores");
            }
            let docs = list.into_iter().take(depth).map(|e| e.doc_id).collect();
            (qid, docs)
        })
        .collect())
}

pub fn read_run(path: &Path, depth: usize) -> Result<BTreeMap<String, Vec<DocId>>, PersistError> {
    parse_run(&read_file(path)?, depth, &label(path))
}

/// Writes run entries grouped by query, in the given rank order. Ranks must be
/// `1..m` with strictly descending scores within each query.
pub fn format_run(entries: &[RunEntry]) -> Result<String, PersistError> {
    let mut by_query: BTreeMap<&str, Vec<&RunEntry>> = BTreeMap::new();
    for e in entries {
        by_query.entry(&e.query_id).or_default().push(e);
    }
    let mut out = String::new();
    for (qid, mut list) in by_query {
        list.sort_by_key(|e| e.rank);
        for (i, e) in list.iter().enumerate() {
            if e.rank as usize != i + 1 {
                return Err(PersistError::Invalid(format!(
                    "query `{qid}`: ranks must be 1..m, found {} at position {}",
                    e.rank,
                    i + 1
                )));
            }
            if i > 0 && !(list[i - 1].score > e.score) {
                return Err(PersistError::Invalid(format!(
                    "query `{qid}`: score at rank {} does not decrease",
                    e.rank
                )));
            }
            out.push_str(&format!(
                "{} Q0 {} {} {:.6} {}\n",
                e.query_id, e.doc_id, e.rank, e.score, e.tag
            ));
        }
    }
    Ok(out)
}

pub fn write_run(entries: &[RunEntry], path: &Path) -> Result<(), PersistError> {
    write_file(path, &format_run(entries)?)
}

/// `id<TAB>text` lines, as used by MS MARCO queries and passage collections.
fn parse_tsv_pairs(text: &str, source: &str, what: &str) -> Result<BTreeMap<String, String>, PersistError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, body) = line
            .split_once('\t')
            .ok_or_else(|| PersistError::line(source, n, format!("expected `{what}<TAB>text`")))?;
        let id = id.trim();
        if id.is_empty() {
            return Err(PersistError::line(source, n, format!("empty {what}")));
        }
        if out.insert(id.to_string(), body.to_string()).is_some() {
            return Err(PersistError::line(source, n, format!("duplicate {what} `{id}`")));
        }
    }
    Ok(out)
}

pub fn parse_topics(text: &str, source: &str) -> Result<BTreeMap<String, String>, PersistError> {
    parse_tsv_pairs(text, source, "query id")
}

pub fn read_topics(path: &Path) -> Result<BTreeMap<String, String>, PersistError> {
    parse_topics(&read_file(path)?, &label(path))
}

pub fn parse_collection(text: &str, source: &str) -> Result<BTreeMap<String, String>, PersistError> {
    parse_tsv_pairs(text, source, "doc id")
}

pub fn read_collection(path: &Path) -> Result<BTreeMap<String, String>, PersistError> {
    parse_collection(&read_file(path)?, &label(path))
}
