//! Dataset index: one row per recording with its label, organ and split.
//!
//! On disk the manifest is UTF-8 CSV with the mandatory header
//! `path,label,organ,split`. An optional fifth `augmentation` column holds
//! the JSON-encoded transform of synthetic rows.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ClassLabel, Organ, N_CLASSES};
use crate::signal::AugmentSpec;

pub const MANIFEST_HEADER: [&str; 4] = ["path", "label", "organ", "split"];
const AUGMENT_COLUMN: &str = "augmentation";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "unassigned" | "" => Ok(Split::Unassigned),
            other => Err(Error::Parse { line: 0, msg: format!("unknown split {other:?}; expected train, val, test or unassigned") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: ClassLabel,
    pub organ: Organ,
    pub split: Split,
    /// Present on synthetic copies produced by class balancing.
    pub augmentation: Option<AugmentSpec>,
}

impl ManifestEntry {
    pub fn new(path: impl Into<PathBuf>, label: ClassLabel) -> Self {
        Self { path: path.into(), label, organ: label.organ(), split: Split::Unassigned, augmentation: None }
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory that relative entry paths are resolved against.
    pub base_dir: Option<PathBuf>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        Self { entries, base_dir: None }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Entry counts per class (canonical order), optionally for one split.
    pub fn class_counts(&self, split: Option<Split>) -> [usize; N_CLASSES] {
        let mut counts = [0; N_CLASSES];
        for e in self.entries.iter().filter(|e| split.is_none_or(|s| e.split == s)) {
            counts[e.label.index()] += 1;
        }
        counts
    }

    /// Location of an entry's audio on disk.
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        match &self.base_dir {
            Some(base) if entry.path.is_relative() => base.join(&entry.path),
            _ => entry.path.clone(),
        }
    }

    /// Organ/label agreement and path uniqueness. Line numbers in errors
    /// count the header as line 1.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            let line = i + 2;
            if e.organ != e.label.organ() {
                return Err(Error::Consistency {
                    line,
                    msg: format!("label {} is a {} class but the row says {}", e.label, e.label.organ(), e.organ),
                });
            }
            let key = (e.path.clone(), e.augmentation.map(|a| serde_json::to_string(&a).expect("serializable")));
            if !seen.insert(key) {
                return Err(Error::Consistency { line, msg: format!("duplicate entry for {}", e.path.display()) });
            }
        }
        Ok(())
    }
}

fn parse_row(record: &csv::StringRecord, line: usize, has_augment: bool) -> Result<ManifestEntry> {
    let expected = if has_augment { 5 } else { 4 };
    if record.len() != expected {
        return Err(Error::Parse { line, msg: format!("expected {expected} fields, found {}", record.len()) });
    }
    let with_line = |e: Error| match e {
        Error::Parse { msg, .. } => Error::Parse { line, msg },
        other => other,
    };
    let path = record[0].trim();
    if path.is_empty() {
        return Err(Error::Parse { line, msg: "empty path".into() });
    }
    let label = ClassLabel::parse(&record[1]).map_err(with_line)?;
    let organ = Organ::from_str(&record[2]).map_err(with_line)?;
    let split = Split::from_str(&record[3]).map_err(with_line)?;
    let augmentation = match record.get(4).map(str::trim) {
        Some(text) if !text.is_empty() => Some(
            serde_json::from_str(text).map_err(|e| Error::Parse { line, msg: format!("bad augmentation spec: {e}") })?,
        ),
        _ => None,
    };
    if organ != label.organ() {
        return Err(Error::Consistency { line, msg: format!("label {label} is a {} class but the row says {organ}", label.organ()) });
    }
    Ok(ManifestEntry { path: PathBuf::from(path), label, organ, split, augmentation })
}

/// Parse manifest CSV text.
pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?,
        None => return Err(Error::Parse { line: 1, msg: "missing header".into() }),
    };
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let has_augment = match names.as_slice() {
        [a, b, c, d] if [*a, *b, *c, *d] == MANIFEST_HEADER => false,
        [a, b, c, d, e] if [*a, *b, *c, *d] == MANIFEST_HEADER && *e == AUGMENT_COLUMN => true,
        _ => {
            return Err(Error::Parse { line: 1, msg: format!("missing header: expected {:?}, found {names:?}", MANIFEST_HEADER.join(",")) })
        }
    };
    let mut entries = Vec::new();
    for record in records {
        let record = record.map_err(|e| Error::Parse { line: e.position().map_or(0, |p| p.line() as usize), msg: e.to_string() })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        entries.push(parse_row(&record, line, has_augment)?);
    }
    let manifest = Manifest::new(entries);
    manifest.validate()?;
    Ok(manifest)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest = parse_manifest(&text)?;
    manifest.base_dir = path.parent().map(Path::to_path_buf);
    Ok(manifest)
}

/// Render as CSV. The augmentation column is written only when some entry
/// carries a transform.
pub fn manifest_to_csv(manifest: &Manifest) -> String {
    let has_augment = manifest.entries.iter().any(|e| e.augmentation.is_some());
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header: Vec<&str> = MANIFEST_HEADER.to_vec();
    if has_augment {
        header.push(AUGMENT_COLUMN);
    }
    w.write_record(&header).expect("in-memory write");
    for e in &manifest.entries {
        let path = e.path.to_string_lossy();
        let mut row = vec![path.to_string(), e.label.token().to_string(), e.organ.to_string(), e.split.to_string()];
        if has_augment {
            row.push(e.augmentation.map(|a| serde_json::to_string(&a).expect("serializable")).unwrap_or_default());
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 fields")
}

/// Write `contents` to `path` through a temporary file in the same directory
/// followed by a rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn save_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    manifest.validate()?;
    write_atomic(path.as_ref(), manifest_to_csv(manifest).as_bytes())
}
