use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{error, info, warn};

use trimrank_core::analysis::{analyze_redundancy, compare_reports, FilterReport};
use trimrank_core::distiller::{build_corpus, reparse_sample, score_samples, DistillError};
use trimrank_core::metrics::{aggregate_report, ndcg10, RunRecord};
use trimrank_core::persistence::{
    read_collection, read_eval_report, read_qrels, read_run, read_samples, read_topics, write_report,
    write_samples, write_sft_corpus, PersistError, Report,
};
use trimrank_core::sampler::http::{HttpBackend, HttpBackendConfig};
use trimrank_core::sampler::{sample_queries, GenerationBackend, MockBackend, SampleError, SampleOptions};
use trimrank_core::{CandidateDoc, CandidateSet, Query, TrajectorySample};

use crate::{
    AnalyzeArgs, Backend, BuildCorpusArgs, CliError, EvaluateArgs, PipelineConfig, ReportArgs, SampleArgs,
};

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

/// Write failures are runtime errors; rejected content is a validation error.
fn output(e: PersistError) -> CliError {
    match e {
        PersistError::Io { .. } => CliError::Runtime(e.to_string()),
        other => CliError::Invalid(other.to_string()),
    }
}

fn pick(flag: &Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.clone()
        .or_else(|| configured.clone())
        .ok_or_else(|| CliError::Invalid(format!("no {name} given (flag or [paths] in the config)")))
}

fn load_collection(
    flag: &Option<PathBuf>,
    config: &PipelineConfig,
) -> Result<Option<BTreeMap<String, String>>, CliError> {
    match flag.as_ref().or(config.paths.collection.as_ref()) {
        Some(p) => Ok(Some(read_collection(p).map_err(invalid)?)),
        None => {
            warn!("no collection given; passages are shown to the model as empty text");
            Ok(None)
        }
    }
}

fn candidate_set(
    query_id: &str,
    doc_ids: &[String],
    collection: Option<&BTreeMap<String, String>>,
    tag: &str,
) -> Result<CandidateSet, CliError> {
    let docs = doc_ids
        .iter()
        .map(|d| {
            let text = match collection {
                Some(c) => c
                    .get(d)
                    .ok_or_else(|| CliError::Invalid(format!("query `{query_id}`: doc `{d}` is not in the collection")))?
                    .as_str(),
                None => "",
            };
            CandidateDoc::new(d.as_str(), text).map_err(invalid)
        })
        .collect::<Result<Vec<_>, _>>()?;
    CandidateSet::new(query_id, docs, tag).map_err(invalid)
}

pub fn cmd_sample(config: &PipelineConfig, a: &SampleArgs) -> Result<(), CliError> {
    let topics = read_topics(&pick(&a.topics, &config.paths.topics, "topics file")?).map_err(invalid)?;
    let run_path = pick(&a.run, &config.paths.run, "run file")?;
    let run = read_run(&run_path, a.depth).map_err(invalid)?;
    let collection = load_collection(&a.collection, config)?;
    let qrels = match a.qrels.as_ref().or(config.paths.qrels.as_ref()) {
        Some(p) if a.backend == Backend::Mock => Some(read_qrels(p).map_err(invalid)?),
        _ => None,
    };

    let tag = run_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let mut inputs = Vec::new();
    for (qid, docs) in &run {
        let Some(text) = topics.get(qid) else {
            warn!("query `{qid}` is in the run but not in the topics; skipped");
            continue;
        };
        if docs.len() < a.depth {
            warn!("query `{qid}`: run has {} candidates, fewer than depth {}", docs.len(), a.depth);
        }
        inputs.push((
            Query::new(qid.as_str(), text.as_str()).map_err(invalid)?,
            candidate_set(qid, docs, collection.as_ref(), &tag)?,
        ));
    }
    for qid in topics.keys().filter(|q| !run.contains_key(*q)) {
        warn!("query `{qid}` has no candidates in the run; skipped");
    }
    if inputs.is_empty() {
        return Err(CliError::Invalid("no query appears in both the topics and the run".into()));
    }

    let mut sampling = config.profile(a.profile).clone();
    if let Some(k) = a.k {
        sampling.k_samples = k;
    }
    let seed = a.seed.or(sampling.seed);
    sampling.seed = seed;
    let options = SampleOptions {
        template: config.template.clone(),
        parser: config.parser.clone(),
        tokenizer: config.tokenizer,
        retry: config.retry.clone(),
    };
    let backend: Box<dyn GenerationBackend> = match a.backend {
        Backend::Mock => Box::new(MockBackend {
            profile: config.mock.clone(),
            seed: seed.unwrap_or(config.mock_seed),
            qrels,
        }),
        Backend::Http => Box::new(
            HttpBackend::new(HttpBackendConfig {
                url: config.endpoint.url.clone(),
                api_key_env: config.endpoint.api_key_env.clone(),
                timeout: config.endpoint.timeout,
                markers: config.parser.clone(),
            })
            .map_err(invalid)?,
        ),
    };
    info!(
        "sampling {} queries x {} with {} (temperature {}, top_p {})",
        inputs.len(),
        sampling.k_samples,
        backend.describe(),
        sampling.temperature,
        sampling.top_p
    );

    let (results, stats) = sample_queries(&inputs, &sampling, backend.as_ref(), &options).map_err(|e| match e {
        SampleError::EndpointUnreachable { .. } => CliError::Runtime(e.to_string()),
        other => invalid(other),
    })?;
    let mut all: Vec<TrajectorySample> = Vec::new();
    let mut failed = Vec::new();
    for ((query, _), result) in inputs.iter().zip(results) {
        match result {
            Ok(samples) => {
                let valid = samples.iter().filter(|s| s.valid).count();
                info!("{}: {valid}/{} valid", query.id(), samples.len());
                all.extend(samples);
            }
            Err(e) => {
                error!("{e}");
                failed.push(query.id().to_string());
            }
        }
    }
    write_samples(&all, &a.out).map_err(output)?;
    info!(
        "wrote {} samples to {} ({} requests, {} retries, {} failed, peak {} in flight)",
        all.len(),
        a.out.display(),
        stats.requests,
        stats.retries,
        stats.failures,
        stats.peak_in_flight
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "{} of {} queries failed: {}",
            failed.len(),
            inputs.len(),
            failed.join(", ")
        )))
    }
}

pub fn cmd_evaluate(config: &PipelineConfig, a: &EvaluateArgs) -> Result<(), CliError> {
    let mut samples = read_samples(&a.samples).map_err(invalid)?;
    if samples.is_empty() {
        return Err(CliError::Invalid(format!("{} holds no samples", a.samples.display())));
    }
    let qrels = read_qrels(&pick(&a.qrels, &config.paths.qrels, "qrels file")?).map_err(invalid)?;
    for s in samples.iter_mut() {
        reparse_sample(s, &config.parser);
    }
    score_samples(&mut samples, &qrels, ndcg10);
    if let Some(p) = &a.scored_out {
        write_samples(&samples, p).map_err(output)?;
    }
    let run: Vec<RunRecord> = samples
        .iter()
        .map(|s| RunRecord {
            query_id: s.query_id.clone(),
            ranking: if s.valid { s.final_ranking.clone() } else { None },
            gen_len: s.token_len.count,
        })
        .collect();
    let report = aggregate_report(&a.tag, &run, &qrels, a.buckets.unwrap_or(config.bucket_count)).map_err(invalid)?;
    write_report(Report::Eval(&report), &a.out, a.format.into()).map_err(output)?;
    info!(
        "{}: {} queries, mean nDCG@10 {:.4}, mean length {:.1}",
        a.tag,
        report.per_query.len(),
        report.mean_ndcg10,
        report.mean_len
    );
    Ok(())
}

pub fn cmd_build_corpus(config: &PipelineConfig, a: &BuildCorpusArgs) -> Result<(), CliError> {
    let samples = read_samples(&a.samples).map_err(invalid)?;
    if samples.is_empty() && !a.allow_empty {
        return Err(CliError::Invalid(format!(
            "{} holds no samples (pass --allow-empty to write an empty corpus)",
            a.samples.display()
        )));
    }
    let topics = read_topics(&pick(&a.topics, &config.paths.topics, "topics file")?).map_err(invalid)?;
    let collection = load_collection(&a.collection, config)?;

    let mut grouped: BTreeMap<String, (Query, CandidateSet, Vec<TrajectorySample>)> = BTreeMap::new();
    for s in samples {
        if let Some((_, cands, list)) = grouped.get_mut(&s.query_id) {
            if !cands.doc_ids().eq(s.candidate_ids.iter().map(String::as_str)) {
                return Err(CliError::Invalid(format!(
                    "query `{}`: sample {} was drawn over a different candidate list",
                    s.query_id, s.sample_index
                )));
            }
            list.push(s);
            continue;
        }
        let text = topics
            .get(&s.query_id)
            .ok_or_else(|| CliError::Invalid(format!("query `{}` is not in the topics", s.query_id)))?;
        let query = Query::new(s.query_id.as_str(), text.as_str()).map_err(invalid)?;
        let cands = candidate_set(&s.query_id, &s.candidate_ids, collection.as_ref(), "samples")?;
        grouped.insert(s.query_id.clone(), (query, cands, vec![s]));
    }

    let build = build_corpus(&grouped).map_err(|e| match e {
        DistillError::Unscored { .. } => CliError::Invalid(format!("{e}; run `evaluate --scored-out` first")),
        other => invalid(other),
    })?;
    // An empty result of filtering is a legitimate outcome, so it is always
    // written; only an empty input needs the explicit flag.
    write_sft_corpus(&build.corpus, &config.template, &a.out, true).map_err(output)?;
    let n_queries = build.stats.len();
    let report = FilterReport::new(build.stats);
    if let Some(p) = &a.stats_out {
        write_report(Report::Filter(&report), p, a.format.into()).map_err(output)?;
    }
    info!(
        "retained {} of {} queries (retention rate {:.4}); corpus at {}",
        build.corpus.len(),
        n_queries,
        build.retention_rate,
        a.out.display()
    );
    Ok(())
}

pub fn cmd_analyze_redundancy(a: &AnalyzeArgs) -> Result<(), CliError> {
    let samples = read_samples(&a.samples).map_err(invalid)?;
    let report = analyze_redundancy(&a.tag, &samples);
    write_report(Report::Redundancy(&report), &a.out, a.format.into()).map_err(output)?;
    info!(
        "{}: avg TRR {:.4}, avg MOR {:.4} over {} of {} samples",
        a.tag, report.avg_trr, report.avg_mor, report.n_measured, report.n_samples
    );
    Ok(())
}

pub fn cmd_report(config: &PipelineConfig, a: &ReportArgs) -> Result<(), CliError> {
    let reports = a
        .reports
        .iter()
        .map(|p: &PathBuf| read_eval_report(Path::new(p)).map_err(invalid))
        .collect::<Result<Vec<_>, _>>()?;
    let table = compare_reports(&reports, a.buckets.unwrap_or(config.bucket_count)).map_err(invalid)?;
    write_report(Report::Comparison(&table), &a.out, a.format.into()).map_err(output)?;
    if let Some(p) = &a.curve_out {
        write_report(Report::Curve(&table), p, a.format.into()).map_err(output)?;
    }
    for row in &table.rows {
        info!("{}: nDCG@10 {:.4}, length {:.1}", row.model_tag, row.mean_ndcg10, row.mean_len);
    }
    Ok(())
}
