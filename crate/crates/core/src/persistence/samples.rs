use std::path::Path;

use serde_json::Value;

use super::{label, read_file, write_file, PersistError};
use crate::model::TrajectorySample;

pub const SAMPLE_SCHEMA_VERSION: u64 = 1;

/// One JSON object per sample with sorted keys and a `schema_version` field.
pub fn format_samples(samples: &[TrajectorySample]) -> Result<String, PersistError> {
    let mut out = String::new();
    for s in samples {
        let mut v = serde_json::to_value(s).map_err(|e| PersistError::Invalid(e.to_string()))?;
        v.as_object_mut()
            .expect("samples serialize as objects")
            .insert("schema_version".into(), SAMPLE_SCHEMA_VERSION.into());
        out.push_str(&v.to_string());
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_samples(text: &str, source: &str) -> Result<Vec<TrajectorySample>, PersistError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut v: Value = serde_json::from_str(line)
            .map_err(|e| PersistError::line(source, n, format!("invalid JSON: {e}")))?;
        let obj = v
            .as_object_mut()
            .ok_or_else(|| PersistError::line(source, n, "expected a JSON object"))?;
        match obj.remove("schema_version").and_then(|v| v.as_u64()) {
            Some(SAMPLE_SCHEMA_VERSION) => {}
            Some(other) => {
                return Err(PersistError::line(
                    source,
                    n,
                    format!("schema version {other}, expected {SAMPLE_SCHEMA_VERSION}"),
                ))
            }
            None => return Err(PersistError::line(source, n, "missing schema_version")),
        }
        let sample: TrajectorySample = serde_json::from_value(v)
            .map_err(|e| PersistError::line(source, n, format!("bad sample: {e}")))?;
        sample
            .validate()
            .map_err(|e| PersistError::line(source, n, e.to_string()))?;
        out.push(sample);
    }
    Ok(out)
}

pub fn write_samples(samples: &[TrajectorySample], path: &Path) -> Result<(), PersistError> {
    write_file(path, &format_samples(samples)?)
}

pub fn read_samples(path: &Path) -> Result<Vec<TrajectorySample>, PersistError> {
    parse_samples(&read_file(path)?, &label(path))
}
