use std::path::Path;

use serde_json::json;

use super::{write_file, PersistError};
use crate::model::DistillationRecord;
use crate::sampler::prompt::{build_prompt, ChatMessage, PromptTemplate, Role};

/// Tag carried in every corpus line's `meta.schema`.
pub const SFT_SCHEMA: &str = "trimrank-sft/1";

/// Chat-format SFT lines: system and user turns rebuilt from the template,
/// then the target generation as the assistant turn. Ordered by query id.
pub fn format_sft_corpus(
    corpus: &[DistillationRecord],
    template: &PromptTemplate,
    allow_empty: bool,
) -> Result<String, PersistError> {
    if corpus.is_empty() && !allow_empty {
        return Err(PersistError::Invalid(
            "distillation corpus is empty (pass allow_empty to write an empty file)".into(),
        ));
    }
    let hash = template.hash();
    let mut records: Vec<&DistillationRecord> = corpus.iter().collect();
    records.sort_by(|a, b| a.query.id().cmp(b.query.id()));
    let mut out = String::new();
    for r in records {
        r.validate().map_err(|e| PersistError::Invalid(e.to_string()))?;
        if r.prompt_hash != hash {
            return Err(PersistError::Invalid(format!(
                "query `{}` was sampled with prompt template {}, but template {} was supplied",
                r.query.id(),
                r.prompt_hash,
                hash
            )));
        }
        let mut messages = build_prompt(&r.query, &r.candidates, template)
            .map_err(|e| PersistError::Invalid(e.to_string()))?;
        messages.push(ChatMessage {
            role: Role::Assistant,
            content: r.target_text.clone(),
        });
        let line = json!({
            "messages": messages,
            "meta": {
                "schema": SFT_SCHEMA,
                "query_id": r.query.id(),
                "sample_index": r.sample_index,
                "target_len": r.target_len,
                "target_score": r.target_score,
                "prompt_hash": r.prompt_hash,
            }
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    Ok(out)
}

pub fn write_sft_corpus(
    corpus: &[DistillationRecord],
    template: &PromptTemplate,
    path: &Path,
    allow_empty: bool,
) -> Result<(), PersistError> {
    write_file(path, &format_sft_corpus(corpus, template, allow_empty)?)
}
