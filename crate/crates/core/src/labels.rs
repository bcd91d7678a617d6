//! The eleven diagnostic classes and their organ tags.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Organ {
    Heart,
    Lung,
}

impl Organ {
    pub fn as_str(self) -> &'static str {
        match self {
            Organ::Heart => "heart",
            Organ::Lung => "lung",
        }
    }

    pub fn classes(self) -> impl Iterator<Item = ClassLabel> {
        ClassLabel::ALL.into_iter().filter(move |c| c.organ() == self)
    }
}

impl fmt::Display for Organ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Organ {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "heart" => Ok(Organ::Heart),
            "lung" | "lungs" => Ok(Organ::Lung),
            other => Err(Error::Parse { line: 0, msg: format!("unknown organ {other:?} (expected heart or lung)") }),
        }
    }
}

/// Diagnostic class, declared in canonical order: the heart block followed by
/// the lung block. `index()` is the position in [`ClassLabel::ALL`] and the
/// one-hot/probability slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    /// Aortic stenosis
    AS,
    /// Mitral stenosis
    MS,
    /// Mitral regurgitation
    MR,
    /// Normal heart
    N,
    /// Mitral valve prolapse
    MVP,
    /// Chronic obstructive pulmonary disease
    COPD,
    /// Pneumonia
    P,
    /// Bronchiectasis
    BA,
    /// Bronchiolitis
    BO,
    /// Healthy lungs
    H,
    /// Upper respiratory tract infection
    URTI,
}

pub const N_CLASSES: usize = 11;

impl ClassLabel {
    pub const ALL: [ClassLabel; N_CLASSES] = [
        ClassLabel::AS,
        ClassLabel::MS,
        ClassLabel::MR,
        ClassLabel::N,
        ClassLabel::MVP,
        ClassLabel::COPD,
        ClassLabel::P,
        ClassLabel::BA,
        ClassLabel::BO,
        ClassLabel::H,
        ClassLabel::URTI,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn organ(self) -> Organ {
        if self.index() < 5 {
            Organ::Heart
        } else {
            Organ::Lung
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            ClassLabel::AS => "AS",
            ClassLabel::MS => "MS",
            ClassLabel::MR => "MR",
            ClassLabel::N => "N",
            ClassLabel::MVP => "MVP",
            ClassLabel::COPD => "COPD",
            ClassLabel::P => "P",
            ClassLabel::BA => "BA",
            ClassLabel::BO => "BO",
            ClassLabel::H => "H",
            ClassLabel::URTI => "URTI",
        }
    }

    pub fn full_name(self) -> &'static str {
        match self {
            ClassLabel::AS => "Aortic Stenosis",
            ClassLabel::MS => "Mitral Stenosis",
            ClassLabel::MR => "Mitral Regurgitation",
            ClassLabel::N => "Normal",
            ClassLabel::MVP => "Mitral Valve Prolapse",
            ClassLabel::COPD => "COPD",
            ClassLabel::P => "Pneumonia",
            ClassLabel::BA => "Bronchiectasis",
            ClassLabel::BO => "Bronchiolitis",
            ClassLabel::H => "Healthy",
            ClassLabel::URTI => "URTI",
        }
    }

    /// Parse a token or a full diagnosis name, case-insensitively.
    pub fn parse(s: &str) -> Result<Self, Error> {
        let t = s.trim();
        Self::ALL
            .into_iter()
            .find(|c| c.token().eq_ignore_ascii_case(t) || c.full_name().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::Parse { line: 0, msg: format!("unknown class label {t:?}; valid labels: {}", Self::valid_tokens()) })
    }

    pub fn valid_tokens() -> String {
        Self::ALL.map(|c| c.token()).join(", ")
    }

    /// One-hot encoding in canonical order.
    pub fn one_hot(self) -> [f32; N_CLASSES] {
        let mut v = [0.0; N_CLASSES];
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::parse(s)
    }
}

/// Encode a label given as text. Unknown text is a parse error.
pub fn one_hot(label: &str) -> Result<[f32; N_CLASSES], Error> {
    ClassLabel::parse(label).map(ClassLabel::one_hot)
}

/// Index of the largest probability, restricted to `organ` when given.
/// Ties go to the lowest canonical index.
pub fn argmax_label(probs: &[f64], organ: Option<Organ>) -> ClassLabel {
    let mut best: Option<(ClassLabel, f64)> = None;
    for c in ClassLabel::ALL {
        if organ.is_some_and(|o| c.organ() != o) {
            continue;
        }
        let p = probs[c.index()];
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((c, p));
        }
    }
    best.map(|(c, _)| c).expect("every organ has classes")
}
