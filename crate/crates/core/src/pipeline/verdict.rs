use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::llm::parse::{parse_orientation, parse_touch, trailing_text};

/// Probabilities parsed from a commonsense query, keyed `touch` / `no_touch`
/// or `<label>/correct` / `<label>/incorrect`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommonsenseVerdict {
    pub probabilities: BTreeMap<String, f64>,
    pub explanation: String,
    /// The reply could not be parsed and the conservative default was used.
    #[serde(default)]
    pub defaulted: bool,
}

impl CommonsenseVerdict {
    pub fn touch_from_reply(reply: &str) -> Option<Self> {
        let (touch, no_touch) = parse_touch(reply)?;
        Some(CommonsenseVerdict {
            probabilities: BTreeMap::from([("touch".into(), touch), ("no_touch".into(), no_touch)]),
            explanation: trailing_text(reply),
            defaulted: false,
        })
    }

    /// Per-label orientation probabilities; labels the reply omits fall back
    /// to "correct".
    pub fn orientation_from_reply(reply: &str, labels: &[String]) -> Option<Self> {
        let parsed = parse_orientation(reply)?;
        let mut probabilities = BTreeMap::new();
        for label in labels {
            let (correct, incorrect) = parsed
                .iter()
                .find(|(k, _)| k.trim().eq_ignore_ascii_case(label))
                .map(|(_, v)| *v)
                .unwrap_or((1.0, 0.0));
            probabilities.insert(format!("{label}/correct"), correct);
            probabilities.insert(format!("{label}/incorrect"), incorrect);
        }
        Some(CommonsenseVerdict {
            probabilities,
            explanation: trailing_text(reply),
            defaulted: false,
        })
    }

    pub fn default_touch() -> Self {
        CommonsenseVerdict {
            probabilities: BTreeMap::from([("touch".into(), 0.0), ("no_touch".into(), 1.0)]),
            explanation: "reply could not be parsed; touch disabled".into(),
            defaulted: true,
        }
    }

    pub fn default_orientation(labels: &[String]) -> Self {
        let mut probabilities = BTreeMap::new();
        for label in labels {
            probabilities.insert(format!("{label}/correct"), 1.0);
            probabilities.insert(format!("{label}/incorrect"), 0.0);
        }
        CommonsenseVerdict {
            probabilities,
            explanation: "reply could not be parsed; rotation search disabled".into(),
            defaulted: true,
        }
    }

    pub fn probability(&self, key: &str) -> Option<f64> {
        self.probabilities.get(key).copied()
    }

    /// Touch mode is on when contact is more likely than not.
    pub fn touch(&self) -> bool {
        self.probability("touch").is_some_and(|p| p > 0.5)
    }

    /// Rotation search is on when the retrieved mesh is more likely wrongly oriented.
    pub fn allow_rotation(&self, label: &str) -> bool {
        self.probability(&format!("{label}/incorrect")).is_some_and(|p| p > 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn touch_threshold() {
        let v = CommonsenseVerdict::touch_from_reply(
            "```json\n{\"touch\": 0.9, \"no_touch\": 0.1}\n```\nPlates rest on each other.",
        )
        .unwrap();
        assert!(v.touch());
        assert_eq!(v.explanation, "Plates rest on each other.");
        let half = CommonsenseVerdict::touch_from_reply("{\"touch\": 0.5, \"no_touch\": 0.5}").unwrap();
        assert!(!half.touch());
        assert!(CommonsenseVerdict::touch_from_reply("{\"touch\": 0.7, \"no_touch\": 0.7}").is_none());
        assert!(!CommonsenseVerdict::default_touch().touch());
    }

    #[test]
    fn orientation_per_label() {
        let labels = vec!["plate".to_string(), "clock".to_string(), "cup".to_string()];
        let reply = r#"{"Plate": {"correct": 0.8, "incorrect": 0.2}, "clock": {"correct": 0.1, "incorrect": 0.9}}"#;
        let v = CommonsenseVerdict::orientation_from_reply(reply, &labels).unwrap();
        assert!(!v.allow_rotation("plate"));
        assert!(v.allow_rotation("clock"));
        assert!(!v.allow_rotation("cup"));
        assert_eq!(v.probability("plate/correct"), Some(0.8));
        let d = CommonsenseVerdict::default_orientation(&labels);
        assert!(labels.iter().all(|l| !d.allow_rotation(l)));
    }
}
