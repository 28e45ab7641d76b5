//! File formats: the JSON model document and duration CSV files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoxianError, Result};
use crate::model::CoxianParams;

/// `{"lambda": [...], "mu": [...]}` with optional metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

impl ModelDocument {
    pub fn params(&self) -> Result<CoxianParams> {
        CoxianParams::new(self.lambda.clone(), self.mu.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)
            .map_err(|e| CoxianError::InvalidOption(format!("malformed model document: {e}")))?;
        doc.params()?;
        Ok(doc)
    }
}

impl From<&CoxianParams> for ModelDocument {
    fn from(p: &CoxianParams) -> Self {
        Self {
            lambda: p.lambda().to_vec(),
            mu: p.mu().to_vec(),
            label: None,
            seed: None,
            provenance: None,
        }
    }
}

/// Parses one duration per line. Blank lines and `#` comments are skipped,
/// as is a single non-numeric header line at the top.
pub fn parse_durations(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() || field.starts_with('#') {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => out.push(v),
            Ok(v) => {
                return Err(CoxianError::InvalidData {
                    index: lineno,
                    reason: format!("durations must be positive and finite, got {v}"),
                })
            }
            Err(_) if out.is_empty() && lineno == 0 => continue,
            Err(_) => {
                return Err(CoxianError::InvalidData {
                    index: lineno,
                    reason: format!("cannot parse {field:?} as a number"),
                })
            }
        }
    }
    if out.is_empty() {
        return Err(CoxianError::InvalidData {
            index: 0,
            reason: "no observations".into(),
        });
    }
    Ok(out)
}

/// One value per line, shortest round-trip decimal form.
pub fn format_durations(data: &[f64], header: bool) -> String {
    let mut s = String::with_capacity(data.len() * 20);
    if header {
        s.push_str("duration\n");
    }
    for v in data {
        s.push_str(&format!("{v}\n"));
    }
    s
}

pub fn read_model(path: &Path) -> std::result::Result<ModelDocument, ReadError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ReadError::Io(format!("{}: {e}", path.display())))?;
    ModelDocument::from_json(&text).map_err(ReadError::Invalid)
}

pub fn read_durations(path: &Path) -> std::result::Result<Vec<f64>, ReadError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ReadError::Io(format!("{}: {e}", path.display())))?;
    parse_durations(&text).map_err(ReadError::Invalid)
}

/// Distinguishes unreadable files from malformed contents.
#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Invalid(CoxianError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_durations_with_header_and_comments() {
        let data = parse_durations("duration\n1.5\n\n# note\n2e-3\n").unwrap();
        assert_eq!(data, vec![1.5, 0.002]);
        assert!(parse_durations("").is_err());
        assert!(parse_durations("1.0\n-2\n").is_err());
        assert!(parse_durations("1.0\nabc\n").is_err());
    }

    #[test]
    fn model_document_validates() {
        let doc = ModelDocument::from_json(r#"{"lambda":[0.5],"mu":[0.1,0.2]}"#).unwrap();
        assert_eq!(doc.params().unwrap().order(), 2);
        assert!(ModelDocument::from_json(r#"{"lambda":[0.5],"mu":[0.1]}"#).is_err());
        assert!(ModelDocument::from_json(r#"{"lambda":[]}"#).is_err());
        assert!(ModelDocument::from_json("not json").is_err());
    }

    #[test]
    fn durations_round_trip_exactly() {
        let data = vec![0.1, 1.0 / 3.0, 12345.678901234567, 5e-300];
        let text = format_durations(&data, true);
        assert_eq!(parse_durations(&text).unwrap(), data);
    }
}
