//! Diagnosis reports: payload validation and the flat-file JSON store.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ausc_core::{argmax_label, ClassLabel, Organ, N_CLASSES};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use uuid::Uuid;

/// Allowed deviation of the probability sum from one.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrganHint {
    Heart,
    Lung,
    #[default]
    Auto,
}

impl OrganHint {
    pub fn organ(self) -> Option<Organ> {
        match self {
            OrganHint::Heart => Some(Organ::Heart),
            OrganHint::Lung => Some(Organ::Lung),
            OrganHint::Auto => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OrganHint::Heart => "heart",
            OrganHint::Lung => "lung",
            OrganHint::Auto => "auto",
        }
    }
}

impl fmt::Display for OrganHint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OrganHint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "heart" => Ok(OrganHint::Heart),
            "lung" | "lungs" => Ok(OrganHint::Lung),
            "auto" | "" => Ok(OrganHint::Auto),
            other => Err(format!("unknown organ {other:?} (expected heart, lung or auto)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub report_id: Uuid,
    pub created_at: DateTime<Utc>,
    pub organ_hint: OrganHint,
    pub predicted_label: ClassLabel,
    pub probabilities: Vec<f64>,
    pub model_version: String,
    #[serde(default)]
    pub patient_meta: PatientMeta,
    /// Hex SHA-256 of the uploaded audio bytes.
    pub audio_digest: String,
}

/// Field name → problem, reported back to the client as a 400.
pub type FieldErrors = BTreeMap<String, String>;

fn text_field(obj: &serde_json::Map<String, Value>, key: &str, errs: &mut FieldErrors) -> Option<String> {
    match obj.get(key) {
        Some(Value::String(s)) if !s.trim().is_empty() => Some(s.clone()),
        Some(Value::String(_)) | None | Some(Value::Null) => {
            errs.insert(key.into(), "required".into());
            None
        }
        Some(_) => {
            errs.insert(key.into(), "must be a string".into());
            None
        }
    }
}

/// Validate a report submission: the JSON returned by the classify endpoint
/// (`label`, `probabilities`, `model_version`, `audio_digest`), the organ hint
/// that was used, and optional `patient_meta`. All problems are collected.
pub fn validate_submission(body: &[u8]) -> Result<DiagnosisReport, FieldErrors> {
    let mut errs = FieldErrors::new();
    let value: Value = match serde_json::from_slice(body) {
        Ok(v) => v,
        Err(e) => {
            errs.insert("body".into(), format!("not valid JSON: {e}"));
            return Err(errs);
        }
    };
    let Value::Object(obj) = value else {
        errs.insert("body".into(), "must be a JSON object".into());
        return Err(errs);
    };

    let organ_hint = match obj.get("organ_hint").or_else(|| obj.get("organ")) {
        None | Some(Value::Null) => OrganHint::Auto,
        Some(Value::String(s)) => s.parse().unwrap_or_else(|e: String| {
            errs.insert("organ_hint".into(), e);
            OrganHint::Auto
        }),
        Some(_) => {
            errs.insert("organ_hint".into(), "must be a string".into());
            OrganHint::Auto
        }
    };

    let probabilities: Option<Vec<f64>> = match obj.get("probabilities") {
        Some(Value::Array(items)) => {
            let vals: Option<Vec<f64>> = items.iter().map(Value::as_f64).collect();
            match vals {
                None => {
                    errs.insert("probabilities".into(), "must contain only numbers".into());
                    None
                }
                Some(v) if v.len() != N_CLASSES => {
                    errs.insert("probabilities".into(), format!("must have {N_CLASSES} entries, got {}", v.len()));
                    None
                }
                Some(v) if v.iter().any(|p| !(0.0..=1.0).contains(p)) => {
                    errs.insert("probabilities".into(), "entries must lie in [0, 1]".into());
                    None
                }
                Some(v) => {
                    let sum: f64 = v.iter().sum();
                    if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
                        errs.insert("probabilities".into(), format!("must sum to 1 within {PROBABILITY_SUM_TOLERANCE:e}, sum is {sum}"));
                        None
                    } else {
                        Some(v)
                    }
                }
            }
        }
        None | Some(Value::Null) => {
            errs.insert("probabilities".into(), "required".into());
            None
        }
        Some(_) => {
            errs.insert("probabilities".into(), "must be an array".into());
            None
        }
    };

    let label_key = if obj.contains_key("predicted_label") { "predicted_label" } else { "label" };
    let label = text_field(&obj, label_key, &mut errs).and_then(|s| match ClassLabel::parse(&s) {
        Ok(l) => Some(l),
        Err(_) => {
            errs.insert(label_key.into(), format!("unknown class {s:?}; valid: {}", ClassLabel::valid_tokens()));
            None
        }
    });
    if let (Some(label), Some(p)) = (label, &probabilities) {
        let expected = argmax_label(p, organ_hint.organ());
        if label != expected {
            errs.insert(label_key.into(), format!("{label} is not the most probable class for organ {organ_hint} (expected {expected})"));
        }
    }

    let model_version = text_field(&obj, "model_version", &mut errs);
    let audio_digest = text_field(&obj, "audio_digest", &mut errs).and_then(|d| {
        let d = d.to_ascii_lowercase();
        if d.len() == 64 && d.bytes().all(|b| b.is_ascii_hexdigit()) {
            Some(d)
        } else {
            errs.insert("audio_digest".into(), "must be 64 hex digits (SHA-256)".into());
            None
        }
    });

    let patient_meta = match obj.get("patient_meta") {
        None | Some(Value::Null) => PatientMeta::default(),
        Some(v @ Value::Object(m)) => {
            for (k, field) in m {
                if !matches!(field, Value::String(_) | Value::Null | Value::Number(_)) {
                    errs.insert(format!("patient_meta.{k}"), "must be text".into());
                }
            }
            // Ages often arrive as numbers; store every field as text.
            let mut m = m.clone();
            for field in m.values_mut() {
                if let Value::Number(n) = field {
                    *field = Value::String(n.to_string());
                }
            }
            serde_json::from_value(Value::Object(m)).unwrap_or_else(|e| {
                errs.insert("patient_meta".into(), format!("{e} (in {v})"));
                PatientMeta::default()
            })
        }
        Some(_) => {
            errs.insert("patient_meta".into(), "must be an object".into());
            PatientMeta::default()
        }
    };

    if !errs.is_empty() {
        return Err(errs);
    }
    Ok(DiagnosisReport {
        report_id: Uuid::new_v4(),
        created_at: Utc::now(),
        organ_hint,
        predicted_label: label.expect("checked"),
        probabilities: probabilities.expect("checked"),
        model_version: model_version.expect("checked"),
        patient_meta,
        audio_digest: audio_digest.expect("checked"),
    })
}

/// One pretty-printed JSON file per report, `<uuid>.json`, written atomically.
#[derive(Debug, Clone)]
pub struct ReportStore {
    dir: PathBuf,
}

impl ReportStore {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, id: Uuid) -> PathBuf {
        self.dir.join(format!("{}.json", id.hyphenated()))
    }

    /// Persist a report and return the exact bytes stored.
    pub fn insert(&self, report: &DiagnosisReport) -> std::io::Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(report).map_err(std::io::Error::other)?;
        bytes.push(b'\n');
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(&bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.path_for(report.report_id)).map_err(|e| e.error)?;
        Ok(bytes)
    }

    /// Stored document bytes, or `None` for an unknown id.
    pub fn get_raw(&self, id: Uuid) -> std::io::Result<Option<Vec<u8>>> {
        match std::fs::read(self.path_for(id)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn get(&self, id: Uuid) -> std::io::Result<Option<DiagnosisReport>> {
        self.get_raw(id)?
            .map(|b| serde_json::from_slice(&b).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
            .transpose()
    }
}
