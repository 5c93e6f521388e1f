//! Listwise prompt construction.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{CandidateSet, Query};

const DEFAULT_TEMPLATE: &str = include_str!("../../assets/listwise-v1.toml");

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("prompt template is missing the `{0}` placeholder")]
    MissingPlaceholder(&'static str),
    #[error("cannot read prompt template {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse prompt template: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("candidate set for query `{0}` is empty")]
    NoCandidates(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub version: String,
    pub system: String,
    pub user: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TEMPLATE).expect("bundled template is valid")
    }
}

impl PromptTemplate {
    pub fn from_toml(text: &str) -> Result<Self, TemplateError> {
        let template: Self = toml::from_str(text)?;
        template.check()?;
        Ok(template)
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let text = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    fn check(&self) -> Result<(), TemplateError> {
        for key in ["{passages}", "{query}"] {
            if !self.user.contains(key) {
                return Err(TemplateError::MissingPlaceholder(key));
            }
        }
        Ok(())
    }

    /// Short content hash identifying this exact template text.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for part in [&self.name, &self.version, &self.system, &self.user] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        hex::encode(&h.finalize()[..8])
    }
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// System and user messages for one query. Passages are listed as `[i] text`
/// in candidate order, with internal whitespace collapsed.
pub fn build_prompt(
    query: &Query,
    candidates: &CandidateSet,
    template: &PromptTemplate,
) -> Result<Vec<ChatMessage>, TemplateError> {
    template.check()?;
    if candidates.is_empty() {
        return Err(TemplateError::NoCandidates(query.id().to_string()));
    }
    let passages = candidates
        .docs()
        .iter()
        .enumerate()
        .map(|(i, d)| format!("[{}] {}", i + 1, one_line(d.text())))
        .collect::<Vec<_>>()
        .join("\n");
    let num = candidates.len().to_string();
    // {query} is substituted last so query text containing "{passages}" is
    // left alone.
    let user = template
        .user
        .replace("{num}", &num)
        .replace("{passages}", &passages)
        .replace("{query}", query.text());
    Ok(vec![
        ChatMessage {
            role: Role::System,
            content: template.system.clone(),
        },
        ChatMessage {
            role: Role::User,
            content: user,
        },
    ])
}
