use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::LlmError;

const BUNDLED: &str = include_str!("../../config/prompts.yaml");

/// Templates the pipelines send. Loading fails if any is missing.
pub const REQUIRED_TEMPLATES: &[&str] = &[
    "system",
    "classify",
    "optimize_highlevel_count",
    "optimize_highlevel_general_pattern",
    "optimize_highlevel_xyz_pattern",
    "optimize_highlevel_xyz_displacements",
    "optimize_lowlevel",
    "validate_naive_listing",
    "optimize_lowlevel_feedback_syntax",
    "optimize_lowlevel_feedback_naive_listing",
    "optimize_lowlevel_feedback_num_objs",
    "optimize_lowlevel_feedback_centroids",
    "optimize_lowlevel_feedback_bounding_boxes",
    "generalize_high_level_commonalities",
    "generalize_high_level_differences",
    "generalize_high_level_motif_reason",
    "generalize_low_level_arguments",
    "generalize_low_level_structure",
    "generalize_low_level",
    "generalize_low_level_batch_recreate",
    "generalize_low_level_feedback",
    "generalize_refine_comments",
    "inference",
    "inference_feedback",
    "retrieval_mesh_rotations",
    "spatial_optimization_touch",
    "wnsynsetkeys",
    "invalid_response",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
}

/// A template with its placeholders filled, ready to send.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template: String,
    pub values: BTreeMap<String, String>,
    pub text: String,
}

impl PromptTemplate {
    /// Names of the `<UPPER_CASE>` slots in the body, without brackets.
    pub fn placeholders(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut rest = self.body.as_str();
        while let Some(start) = rest.find('<') {
            rest = &rest[start + 1..];
            if let Some(len) = placeholder_len(rest) {
                out.insert(rest[..len].to_string());
                rest = &rest[len + 1..];
            }
        }
        out
    }

    /// Substitutes every slot in one pass, so text inside a value is never
    /// itself treated as a slot. Every slot must be given a value and every
    /// value must name a slot.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<RenderedPrompt, LlmError> {
        let map: BTreeMap<String, String> = values.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let slots = self.placeholders();
        if let Some(extra) = map.keys().find(|k| !slots.contains(*k)) {
            return Err(LlmError::Template(format!(
                "template `{}` has no <{extra}> slot",
                self.name
            )));
        }
        if let Some(missing) = slots.iter().find(|s| !map.contains_key(*s)) {
            return Err(LlmError::Template(format!(
                "template `{}` needs a value for <{missing}>",
                self.name
            )));
        }

        let mut text = String::with_capacity(self.body.len() + map.values().map(String::len).sum::<usize>());
        let mut rest = self.body.as_str();
        while let Some(start) = rest.find('<') {
            text.push_str(&rest[..start]);
            let after = &rest[start + 1..];
            match placeholder_len(after) {
                Some(len) => {
                    text.push_str(&map[&after[..len]]);
                    rest = &after[len + 1..];
                }
                None => {
                    text.push('<');
                    rest = after;
                }
            }
        }
        text.push_str(rest);
        Ok(RenderedPrompt {
            template: self.name.clone(),
            values: map,
            text,
        })
    }
}

/// Length of a placeholder name at the start of `s` if it is followed by `>`.
fn placeholder_len(s: &str) -> Option<usize> {
    let len = s
        .bytes()
        .take_while(|b| b.is_ascii_uppercase() || *b == b'_' || b.is_ascii_digit())
        .count();
    let starts_upper = s.bytes().next().is_some_and(|b| b.is_ascii_uppercase());
    (starts_upper && s.as_bytes().get(len) == Some(&b'>')).then_some(len)
}

#[derive(Clone, Debug)]
pub struct PromptCatalog {
    templates: BTreeMap<String, PromptTemplate>,
}

impl PromptCatalog {
    /// The catalog compiled into the crate.
    pub fn bundled() -> Self {
        Self::from_yaml(BUNDLED).expect("bundled prompt catalog is valid")
    }

    pub fn bundled_source() -> &'static str {
        BUNDLED
    }

    pub fn from_yaml(text: &str) -> Result<Self, LlmError> {
        let raw: BTreeMap<String, String> =
            serde_yaml::from_str(text).map_err(|e| LlmError::Template(format!("prompt catalog: {e}")))?;
        for name in REQUIRED_TEMPLATES {
            if !raw.contains_key(*name) {
                return Err(LlmError::Template(format!("prompt catalog is missing `{name}`")));
            }
        }
        let templates = raw
            .into_iter()
            .map(|(name, body)| (name.clone(), PromptTemplate { name, body }))
            .collect();
        Ok(PromptCatalog { templates })
    }

    pub fn get(&self, name: &str) -> Result<&PromptTemplate, LlmError> {
        self.templates
            .get(name)
            .ok_or_else(|| LlmError::Template(format!("unknown prompt `{name}`")))
    }

    pub fn render(&self, name: &str, values: &[(&str, &str)]) -> Result<RenderedPrompt, LlmError> {
        self.get(name)?.render(values)
    }

    pub fn system(&self) -> &str {
        &self.templates["system"].body
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}
