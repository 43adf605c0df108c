//! Relation label vocabularies: the nine functional categories and the
//! three-way classification target.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Nine-way functional relation between an ordered pair of items (x, y).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Fbl9 {
    #[serde(rename = "A")]
    A,
    #[serde(rename = "B-1")]
    B1,
    #[serde(rename = "B-2")]
    B2,
    #[serde(rename = "C-1")]
    C1,
    #[serde(rename = "C-2")]
    C2,
    #[serde(rename = "C-3")]
    C3,
    #[serde(rename = "C-4")]
    C4,
    #[serde(rename = "D")]
    D,
    #[serde(rename = "E")]
    E,
}

impl Fbl9 {
    pub const ALL: [Fbl9; 9] = [
        Fbl9::A,
        Fbl9::B1,
        Fbl9::B2,
        Fbl9::C1,
        Fbl9::C2,
        Fbl9::C3,
        Fbl9::C4,
        Fbl9::D,
        Fbl9::E,
    ];

    /// Canonical code as written in prompts and files.
    pub fn code(self) -> &'static str {
        match self {
            Fbl9::A => "A",
            Fbl9::B1 => "B-1",
            Fbl9::B2 => "B-2",
            Fbl9::C1 => "C-1",
            Fbl9::C2 => "C-2",
            Fbl9::C3 => "C-3",
            Fbl9::C4 => "C-4",
            Fbl9::D => "D",
            Fbl9::E => "E",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Label of the same relation with the item roles exchanged.
    pub fn swapped(self) -> Fbl9 {
        match self {
            Fbl9::B1 => Fbl9::B2,
            Fbl9::B2 => Fbl9::B1,
            Fbl9::C2 => Fbl9::C3,
            Fbl9::C3 => Fbl9::C2,
            other => other,
        }
    }

    /// Accepts the canonical code or its dashless form, any case.
    pub fn from_code(s: &str) -> Option<Fbl9> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | '\u{2010}' | '\u{2011}' | '\u{2013}'))
            .collect::<String>()
            .to_ascii_uppercase();
        Some(match norm.as_str() {
            "A" => Fbl9::A,
            "B1" => Fbl9::B1,
            "B2" => Fbl9::B2,
            "C1" => Fbl9::C1,
            "C2" => Fbl9::C2,
            "C3" => Fbl9::C3,
            "C4" => Fbl9::C4,
            "D" => Fbl9::D,
            "E" => Fbl9::E,
            _ => return None,
        })
    }
}

impl fmt::Display for Fbl9 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Fbl9 {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Fbl9::from_code(s.trim()).ok_or_else(|| UnknownLabel(s.to_owned()))
    }
}

/// Three-way classification target. The integer encoding (0, 1, 2) is the
/// column order of every probability triple and weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rel3 {
    Complementary = 0,
    Substitute = 1,
    Unrelated = 2,
}

impl Rel3 {
    pub const ALL: [Rel3; 3] = [Rel3::Complementary, Rel3::Substitute, Rel3::Unrelated];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Rel3> {
        Rel3::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Rel3::Complementary => "complementary",
            Rel3::Substitute => "substitute",
            Rel3::Unrelated => "unrelated",
        }
    }
}

impl fmt::Display for Rel3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rel3 {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "complementary" => Ok(Rel3::Complementary),
            "substitute" => Ok(Rel3::Substitute),
            "unrelated" => Ok(Rel3::Unrelated),
            other => Err(UnknownLabel(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label token {0:?}")]
pub struct UnknownLabel(pub String);

/// Collapses a functional category onto the three-way target:
/// A is substitute, every B/C subtype is complementary, D and E are unrelated.
pub fn map_to_rel3(label: Fbl9) -> Rel3 {
    match label {
        Fbl9::A => Rel3::Substitute,
        Fbl9::B1 | Fbl9::B2 | Fbl9::C1 | Fbl9::C2 | Fbl9::C3 | Fbl9::C4 => Rel3::Complementary,
        Fbl9::D | Fbl9::E => Rel3::Unrelated,
    }
}
