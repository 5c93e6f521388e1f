//! Pipeline configuration: one TOML file with `${VAR}` interpolation in
//! string values. Relative paths resolve against the file's directory.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use trimrank_core::parser::{ParserConfig, TokenizerMode, DEFAULT_THINK_CLOSE, DEFAULT_THINK_OPEN};
use trimrank_core::sampler::mock::Assignment;
use trimrank_core::sampler::{
    MockArchetype, MockOrder, MockProfile, PromptTemplate, RetryPolicy, TemplateError,
};
use trimrank_core::{ModelError, RequestMode, SamplingConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("config {path}: environment variable `{var}` is not set")]
    MissingEnv { path: String, var: String },
    #[error("config {path}: unterminated `${{` in `{value}`")]
    BadInterpolation { path: String, value: String },
    #[error("config {path}: {what} `{file}` does not exist")]
    MissingFile {
        path: String,
        what: &'static str,
        file: String,
    },
    #[error("config {path}: profile `{profile}`: {source}")]
    Profile {
        path: String,
        profile: &'static str,
        source: ModelError,
    },
    #[error("config {path}: prompt template: {source}")]
    Template { path: String, source: TemplateError },
    #[error("config {path}: unknown mock preset `{preset}` (expected ideal, mixed, vacillating, retrieval)")]
    UnknownPreset { path: String, preset: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    Distill,
    Eval,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    endpoint: RawEndpoint,
    #[serde(default)]
    profiles: RawProfiles,
    #[serde(default)]
    prompt: RawPrompt,
    #[serde(default)]
    parser: RawParser,
    #[serde(default)]
    retry: RawRetry,
    #[serde(default)]
    paths: Paths,
    #[serde(default)]
    mock: RawMock,
    #[serde(default)]
    report: RawReport,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEndpoint {
    url: Option<String>,
    model: Option<String>,
    api_key_env: Option<String>,
    timeout_secs: Option<u64>,
    request_mode: Option<RequestMode>,
    max_in_flight: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfiles {
    #[serde(default)]
    distill: RawProfile,
    #[serde(default)]
    eval: RawProfile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    k_samples: Option<u32>,
    temperature: Option<f64>,
    top_p: Option<f64>,
    max_tokens: Option<u32>,
    seed: Option<u64>,
    max_in_flight: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrompt {
    template: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParser {
    think_open: Option<String>,
    think_close: Option<String>,
    tokenizer: Option<TokenizerMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRetry {
    max_retries: Option<u32>,
    initial_backoff_ms: Option<u64>,
    max_backoff_ms: Option<u64>,
    multiplier: Option<f64>,
}

/// Default input locations; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub topics: Option<PathBuf>,
    pub run: Option<PathBuf>,
    pub collection: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMock {
    preset: Option<String>,
    seed: Option<u64>,
    assignment: Option<Assignment>,
    think_markers: Option<bool>,
    #[serde(default)]
    archetypes: Vec<MockArchetype>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReport {
    bucket_count: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct EndpointSettings {
    pub url: String,
    pub model: String,
    pub api_key_env: Option<String>,
    pub timeout: Duration,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub endpoint: EndpointSettings,
    pub distill: SamplingConfig,
    pub eval: SamplingConfig,
    pub template: PromptTemplate,
    pub parser: ParserConfig,
    pub tokenizer: TokenizerMode,
    pub retry: RetryPolicy,
    pub paths: Paths,
    pub mock: MockProfile,
    pub mock_seed: u64,
    pub bucket_count: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        resolve(RawConfig::default(), Path::new("."), "<defaults>").expect("defaults are valid")
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let label = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: label.clone(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, &label)
    }

    /// Parses config text; `base` anchors relative paths.
    pub fn from_toml(text: &str, base: &Path, label: &str) -> Result<Self, ConfigError> {
        let parse_err = |message: String| ConfigError::Parse {
            path: label.to_string(),
            message,
        };
        let mut value: toml::Value = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        interpolate(&mut value, label)?;
        let raw: RawConfig = value.try_into().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        resolve(raw, base, label)
    }

    pub fn profile(&self, profile: Profile) -> &SamplingConfig {
        match profile {
            Profile::Distill => &self.distill,
            Profile::Eval => &self.eval,
        }
    }
}

fn interpolate(value: &mut toml::Value, label: &str) -> Result<(), ConfigError> {
    match value {
        toml::Value::String(s) => *s = expand(s, label)?,
        toml::Value::Array(items) => {
            for v in items {
                interpolate(v, label)?;
            }
        }
        toml::Value::Table(t) => {
            for (_, v) in t.iter_mut() {
                interpolate(v, label)?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// Replaces every `${NAME}` with the variable's value.
fn expand(s: &str, label: &str) -> Result<String, ConfigError> {
    let mut out = String::new();
    let mut rest = s;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find('}').ok_or_else(|| ConfigError::BadInterpolation {
            path: label.to_string(),
            value: s.to_string(),
        })?;
        let var = &after[..end];
        let val = std::env::var(var).map_err(|_| ConfigError::MissingEnv {
            path: label.to_string(),
            var: var.to_string(),
        })?;
        out.push_str(&val);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn preset(name: &str) -> Option<MockProfile> {
    Some(match name {
        "mixed" => MockProfile::mixed(),
        "ideal" => MockProfile::single(MockArchetype::new("ideal", MockOrder::Ideal).verbosity(4, 0, 0)),
        "vacillating" => MockProfile::single(
            MockArchetype::new("vacillating", MockOrder::Ideal).verbosity(6, 3, 2),
        ),
        "retrieval" => {
            MockProfile::single(MockArchetype::new("retrieval", MockOrder::Retrieval).verbosity(3, 0, 0))
        }
        _ => return None,
    })
}

fn resolve(raw: RawConfig, base: &Path, label: &str) -> Result<PipelineConfig, ConfigError> {
    let anchor = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
    let must_exist = |what: &'static str, p: &Path| {
        if p.exists() {
            Ok(())
        } else {
            Err(ConfigError::MissingFile {
                path: label.to_string(),
                what,
                file: p.display().to_string(),
            })
        }
    };

    let e = raw.endpoint;
    let endpoint = EndpointSettings {
        url: e.url.unwrap_or_else(|| "http://localhost:8000/v1/chat/completions".into()),
        model: e.model.unwrap_or_else(|| "reranker".into()),
        api_key_env: e.api_key_env,
        timeout: Duration::from_secs(e.timeout_secs.unwrap_or(600)),
    };
    let build = |base_cfg: SamplingConfig, p: RawProfile, name: &'static str| {
        let cfg = SamplingConfig {
            k_samples: p.k_samples.unwrap_or(base_cfg.k_samples),
            temperature: p.temperature.unwrap_or(base_cfg.temperature),
            top_p: p.top_p.unwrap_or(base_cfg.top_p),
            max_tokens: p.max_tokens.unwrap_or(base_cfg.max_tokens),
            seed: p.seed,
            max_in_flight: p
                .max_in_flight
                .or(e.max_in_flight)
                .unwrap_or(base_cfg.max_in_flight),
            endpoint_url: endpoint.url.clone(),
            model_name: endpoint.model.clone(),
            request_mode: e.request_mode.unwrap_or_default(),
        };
        cfg.validate().map_err(|source| ConfigError::Profile {
            path: label.to_string(),
            profile: name,
            source,
        })?;
        Ok(cfg)
    };
    let distill = build(SamplingConfig::distill(), raw.profiles.distill, "distill")?;
    let eval = build(SamplingConfig::eval(), raw.profiles.eval, "eval")?;

    let template = match raw.prompt.template {
        Some(p) => {
            let p = anchor(p);
            must_exist("prompt template", &p)?;
            PromptTemplate::load(&p).map_err(|source| ConfigError::Template {
                path: label.to_string(),
                source,
            })?
        }
        None => PromptTemplate::default(),
    };

    let parser = ParserConfig {
        think_open: raw.parser.think_open.unwrap_or_else(|| DEFAULT_THINK_OPEN.into()),
        think_close: raw.parser.think_close.unwrap_or_else(|| DEFAULT_THINK_CLOSE.into()),
    };
    let d = RetryPolicy::default();
    let retry = RetryPolicy {
        max_retries: raw.retry.max_retries.unwrap_or(d.max_retries),
        initial_backoff_ms: raw.retry.initial_backoff_ms.unwrap_or(d.initial_backoff_ms),
        max_backoff_ms: raw.retry.max_backoff_ms.unwrap_or(d.max_backoff_ms),
        multiplier: raw.retry.multiplier.unwrap_or(d.multiplier),
    };

    let p = raw.paths;
    let paths = Paths {
        topics: p.topics.map(anchor),
        run: p.run.map(anchor),
        collection: p.collection.map(anchor),
        qrels: p.qrels.map(anchor),
    };
    for (what, file) in [
        ("topics file", &paths.topics),
        ("run file", &paths.run),
        ("collection file", &paths.collection),
        ("qrels file", &paths.qrels),
    ] {
        if let Some(f) = file {
            must_exist(what, f)?;
        }
    }

    let m = raw.mock;
    let mut mock = if !m.archetypes.is_empty() {
        MockProfile {
            archetypes: m.archetypes,
            assignment: Assignment::Cycle,
            think_markers: true,
        }
    } else {
        let name = m.preset.as_deref().unwrap_or("mixed");
        preset(name).ok_or_else(|| ConfigError::UnknownPreset {
            path: label.to_string(),
            preset: name.to_string(),
        })?
    };
    if let Some(a) = m.assignment {
        mock.assignment = a;
    }
    if let Some(t) = m.think_markers {
        mock.think_markers = t;
    }

    Ok(PipelineConfig {
        endpoint,
        distill,
        eval,
        template,
        parser,
        tokenizer: raw.parser.tokenizer.unwrap_or(TokenizerMode::Endpoint),
        retry,
        paths,
        mock,
        mock_seed: m.seed.unwrap_or(0),
        bucket_count: raw.report.bucket_count.unwrap_or(5).max(1),
    })
}
