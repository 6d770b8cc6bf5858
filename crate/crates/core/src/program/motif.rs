use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The motif taxonomy used for classification and library grouping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MotifKind {
    Stack,
    Pile,
    Row,
    Grid,
    LeftOf,
    InFrontOf,
    OnTop,
    Surround,
    WallVerticalColumn,
    WallHorizontalRow,
    WallGrid,
    RectangularPerimeter,
    Letter,
}

impl MotifKind {
    pub const ALL: [MotifKind; 13] = [
        MotifKind::Stack,
        MotifKind::Pile,
        MotifKind::Row,
        MotifKind::Grid,
        MotifKind::LeftOf,
        MotifKind::InFrontOf,
        MotifKind::OnTop,
        MotifKind::Surround,
        MotifKind::WallVerticalColumn,
        MotifKind::WallHorizontalRow,
        MotifKind::WallGrid,
        MotifKind::RectangularPerimeter,
        MotifKind::Letter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MotifKind::Stack => "stack",
            MotifKind::Pile => "pile",
            MotifKind::Row => "row",
            MotifKind::Grid => "grid",
            MotifKind::LeftOf => "left_of",
            MotifKind::InFrontOf => "in_front_of",
            MotifKind::OnTop => "on_top",
            MotifKind::Surround => "surround",
            MotifKind::WallVerticalColumn => "wall_vertical_column",
            MotifKind::WallHorizontalRow => "wall_horizontal_row",
            MotifKind::WallGrid => "wall_grid",
            MotifKind::RectangularPerimeter => "rectangular_perimeter",
            MotifKind::Letter => "letter",
        }
    }
}

/// A motif kind, plus the letter for `letter` motifs (`letter_A` ... `letter_Z`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MotifType {
    kind: MotifKind,
    letter: Option<char>,
}

impl MotifType {
    pub fn new(kind: MotifKind) -> Option<Self> {
        (kind != MotifKind::Letter).then_some(MotifType { kind, letter: None })
    }

    pub fn letter(c: char) -> Option<Self> {
        c.is_ascii_alphabetic().then(|| MotifType {
            kind: MotifKind::Letter,
            letter: Some(c.to_ascii_uppercase()),
        })
    }

    pub fn kind(&self) -> MotifKind {
        self.kind
    }

    pub fn letter_char(&self) -> Option<char> {
        self.letter
    }
}

impl From<MotifKind> for MotifType {
    /// Panics for [`MotifKind::Letter`], which needs a letter.
    fn from(kind: MotifKind) -> Self {
        MotifType::new(kind).expect("letter motifs need a letter")
    }
}

impl fmt::Display for MotifType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.letter {
            Some(c) => write!(f, "letter_{c}"),
            None => f.write_str(self.kind.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown motif type `{0}`")]
pub struct UnknownMotif(pub String);

impl FromStr for MotifType {
    type Err = UnknownMotif;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let raw = s.trim();
        let lower = raw.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("letter_") {
            let mut chars = rest.chars();
            return match (chars.next(), chars.next()) {
                (Some(c), None) => MotifType::letter(c).ok_or_else(|| UnknownMotif(raw.to_string())),
                _ => Err(UnknownMotif(raw.to_string())),
            };
        }
        MotifKind::ALL
            .iter()
            .find(|k| **k != MotifKind::Letter && k.as_str() == lower)
            .map(|k| MotifType { kind: *k, letter: None })
            .ok_or_else(|| UnknownMotif(raw.to_string()))
    }
}

impl TryFrom<String> for MotifType {
    type Error = UnknownMotif;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<MotifType> for String {
    fn from(t: MotifType) -> Self {
        t.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_kinds_case_insensitively() {
        for kind in MotifKind::ALL.iter().filter(|k| **k != MotifKind::Letter) {
            let t: MotifType = kind.as_str().to_uppercase().parse().unwrap();
            assert_eq!(t.kind(), *kind);
            assert_eq!(t.to_string(), kind.as_str());
        }
    }

    #[test]
    fn letters_need_exactly_one_letter() {
        let t: MotifType = "letter_a".parse().unwrap();
        assert_eq!(t.to_string(), "letter_A");
        assert_eq!(t.letter_char(), Some('A'));
        assert!("letter".parse::<MotifType>().is_err());
        assert!("letter_AB".parse::<MotifType>().is_err());
        assert!("letter_1".parse::<MotifType>().is_err());
        assert!(MotifType::new(MotifKind::Letter).is_none());
    }

    #[test]
    fn serde_as_string() {
        let t: MotifType = serde_json::from_str("\"rectangular_perimeter\"").unwrap();
        assert_eq!(t.kind(), MotifKind::RectangularPerimeter);
        assert_eq!(
            serde_json::to_string(&MotifType::letter('q').unwrap()).unwrap(),
            "\"letter_Q\""
        );
    }
}
