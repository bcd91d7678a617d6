//! Build manifests from the on-disk layouts of the heart and lung corpora.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::labels::{ClassLabel, Organ};

use super::manifest::{Manifest, ManifestEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// One directory per heart class (`AS/`, `MR_New/`, ...) holding WAV files.
    Yaseen,
    /// Lung recordings named `<patient>_...wav` plus a patient diagnosis
    /// listing whose file name contains "diagnosis".
    Icbhi,
    /// `labels.csv` at the root with header `path,label`.
    Flat,
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "yaseen" => Ok(Layout::Yaseen),
            "icbhi" => Ok(Layout::Icbhi),
            "flat" => Ok(Layout::Flat),
            other => Err(Error::config(format!("unknown layout {other:?}; expected yaseen, icbhi or flat"))),
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::Yaseen => "yaseen",
            Layout::Icbhi => "icbhi",
            Layout::Flat => "flat",
        })
    }
}

/// Diagnoses present in the lung corpus that have no class in this model.
const UNMODELLED_DIAGNOSES: [&str; 2] = ["asthma", "lrti"];

fn is_wav(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

fn sorted_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        if name.to_string_lossy().starts_with('.') {
            continue;
        }
        out.push(entry.path());
    }
    out.sort();
    Ok(out)
}

fn wav_files_recursive(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for p in sorted_dir(dir)? {
        if p.is_dir() {
            wav_files_recursive(&p, out)?;
        } else if is_wav(&p) {
            out.push(p);
        }
    }
    Ok(())
}

fn scan_yaseen(root: &Path) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for dir in sorted_dir(root)?.into_iter().filter(|p| p.is_dir()) {
        let name = dir.file_name().expect("directory entry").to_string_lossy().to_string();
        let token = name.strip_suffix("_New").or_else(|| name.strip_suffix("_new")).unwrap_or(&name);
        let label = ClassLabel::parse(token).map_err(|e| match e {
            Error::Parse { msg, .. } => Error::Layout(format!("directory {name:?}: {msg}")),
            other => other,
        })?;
        if label.organ() != Organ::Heart {
            return Err(Error::Layout(format!("directory {name:?} names lung class {label} in a heart-sound layout")));
        }
        let mut files = Vec::new();
        wav_files_recursive(&dir, &mut files)?;
        entries.extend(files.into_iter().map(|p| ManifestEntry::new(p, label)));
    }
    Ok(entries)
}

fn find_diagnosis_file(root: &Path) -> Result<PathBuf> {
    let mut candidates = Vec::new();
    for dir in [root.to_path_buf()].into_iter().chain(sorted_dir(root)?.into_iter().filter(|p| p.is_dir())) {
        for p in sorted_dir(&dir)? {
            let name = p.file_name().expect("entry").to_string_lossy().to_ascii_lowercase();
            if p.is_file() && name.contains("diagnosis") && (name.ends_with(".txt") || name.ends_with(".csv")) {
                candidates.push(p);
            }
        }
    }
    candidates
        .into_iter()
        .next()
        .ok_or_else(|| Error::Layout(format!("no diagnosis listing (*diagnosis*.txt or .csv) under {}", root.display())))
}

/// Parse `patient<TAB or comma>diagnosis` lines.
pub fn parse_diagnosis_listing(text: &str) -> Result<HashMap<String, Option<ClassLabel>>> {
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(|c: char| c == '\t' || c == ',').map(str::trim).filter(|s| !s.is_empty());
        let (Some(patient), Some(diagnosis)) = (parts.next(), parts.next()) else {
            return Err(Error::Parse { line: i + 1, msg: format!("expected `patient<TAB>diagnosis`, found {line:?}") });
        };
        if i == 0 && patient.eq_ignore_ascii_case("patient") {
            continue;
        }
        let label = if UNMODELLED_DIAGNOSES.iter().any(|d| d.eq_ignore_ascii_case(diagnosis)) {
            None
        } else {
            let label = ClassLabel::parse(diagnosis).map_err(|e| match e {
                Error::Parse { msg, .. } => Error::Parse { line: i + 1, msg },
                other => other,
            })?;
            if label.organ() != Organ::Lung {
                return Err(Error::Parse { line: i + 1, msg: format!("diagnosis {diagnosis:?} is not a lung class") });
            }
            Some(label)
        };
        map.insert(patient.to_string(), label);
    }
    Ok(map)
}

fn scan_icbhi(root: &Path) -> Result<Vec<ManifestEntry>> {
    let listing_path = find_diagnosis_file(root)?;
    let text = std::fs::read_to_string(&listing_path).map_err(|e| Error::io(&listing_path, e))?;
    let diagnoses = parse_diagnosis_listing(&text)?;
    let mut files = Vec::new();
    wav_files_recursive(root, &mut files)?;
    let mut entries = Vec::new();
    let mut skipped = 0usize;
    for p in files {
        let stem = p.file_stem().expect("file").to_string_lossy().to_string();
        let patient = stem.split('_').next().unwrap_or(&stem);
        match diagnoses.get(patient) {
            Some(Some(label)) => entries.push(ManifestEntry::new(p, *label)),
            Some(None) => skipped += 1,
            None => tracing::warn!(file = %p.display(), "recording has no diagnosis entry; skipped"),
        }
    }
    if skipped > 0 {
        tracing::warn!(skipped, "recordings with diagnoses outside the model's class set (asthma, LRTI) were skipped");
    }
    Ok(entries)
}

fn scan_flat(root: &Path) -> Result<Vec<ManifestEntry>> {
    let listing = root.join("labels.csv");
    if !listing.is_file() {
        return Err(Error::Layout(format!("{} not found", listing.display())));
    }
    let text = std::fs::read_to_string(&listing).map_err(|e| Error::io(&listing, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if i == 0 {
            let header: Vec<&str> = record.iter().map(str::trim).collect();
            if header != ["path", "label"] {
                return Err(Error::Parse { line: 1, msg: format!("missing header: expected \"path,label\", found {header:?}") });
            }
            continue;
        }
        if record.len() != 2 {
            return Err(Error::Parse { line, msg: format!("expected 2 fields, found {}", record.len()) });
        }
        let label = ClassLabel::parse(&record[1]).map_err(|e| match e {
            Error::Parse { msg, .. } => Error::Parse { line, msg },
            other => other,
        })?;
        entries.push(ManifestEntry::new(root.join(record[0].trim()), label));
    }
    Ok(entries)
}

/// Index a corpus. Paths in the result are absolute so the manifest can be
/// saved anywhere.
pub fn scan_dataset(root: impl AsRef<Path>, layout: Layout) -> Result<Manifest> {
    let root = root.as_ref();
    let root = std::fs::canonicalize(root).map_err(|e| Error::io(root, e))?;
    if !root.is_dir() {
        return Err(Error::Layout(format!("{} is not a directory", root.display())));
    }
    let entries = match layout {
        Layout::Yaseen => scan_yaseen(&root)?,
        Layout::Icbhi => scan_icbhi(&root)?,
        Layout::Flat => scan_flat(&root)?,
    };
    if entries.is_empty() {
        tracing::warn!(root = %root.display(), %layout, "no recordings found");
    }
    let manifest = Manifest::new(entries);
    manifest.validate()?;
    Ok(manifest)
}
