//! Mechanical checks of candidate programs against their references.
//!
//! Motif programs are checked against the example arrangement (object counts,
//! placements, extents); the "no hard-coded attribute lists" criterion is an
//! LLM verdict that arrives here already adjudicated. Meta-programs are
//! checked per example against the motif program's trace (counts and
//! pairwise relative directions).

mod assignment;

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

pub use assignment::min_cost_assignment;

use crate::exec::ObjectTrace;
use crate::program::format_number;
use crate::scene::{aabb_iou, relative_direction, world_aabb, Aabb, Arrangement, SceneObject, Vec3, DEFAULT_DEAD_ZONE};

/// Per-object AABB IoU threshold for placement and extent checks.
pub const THETA_OBJ: f64 = 0.9;
/// Relative tolerance on half sizes.
pub const HALF_SIZE_REL_TOL: f64 = 1e-3;
const MAX_FEEDBACK_LINES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Criterion 2 for motif programs (LLM-judged).
    NoHardcodedLists,
    ObjectCounts,
    Placements,
    Extents,
    PairwiseDirections,
}

impl Criterion {
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::NoHardcodedLists => "no_hardcoded_lists",
            Criterion::ObjectCounts => "object_counts",
            Criterion::Placements => "placements",
            Criterion::Extents => "extents",
            Criterion::PairwiseDirections => "pairwise_directions",
        }
    }

    /// Criterion ordinal within its validation stage.
    pub fn ordinal(self, target: Target) -> u8 {
        match (target, self) {
            (Target::Motif, Criterion::NoHardcodedLists) => 2,
            (Target::Motif, Criterion::ObjectCounts) => 3,
            (Target::Motif, Criterion::Placements) => 4,
            (Target::Motif, Criterion::Extents) => 5,
            (Target::Meta, Criterion::ObjectCounts) => 2,
            (Target::Meta, Criterion::PairwiseDirections) => 3,
            _ => 0,
        }
    }
}

/// Expected vs actual record for one object or object pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detail {
    pub subject: String,
    pub expected: String,
    pub actual: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub criterion: Criterion,
    pub passed: bool,
    /// Empty when passed.
    pub feedback: String,
    #[serde(default)]
    pub details: Vec<Detail>,
    /// 1-based example ordinal for meta-program validation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example: Option<usize>,
}

impl CriterionResult {
    pub fn pass(criterion: Criterion, details: Vec<Detail>) -> Self {
        CriterionResult {
            criterion,
            passed: true,
            feedback: String::new(),
            details,
            example: None,
        }
    }

    pub fn fail(criterion: Criterion, feedback: impl Into<String>, details: Vec<Detail>) -> Self {
        let mut feedback = feedback.into();
        if feedback.trim().is_empty() {
            feedback = format!("criterion {} failed", criterion.as_str());
        }
        CriterionResult {
            criterion,
            passed: false,
            feedback,
            details,
            example: None,
        }
    }

    /// The verdict of the LLM hard-coded-list judge.
    pub fn hardcode_judgment(valid: bool, variable_names: &[String]) -> Self {
        if valid {
            CriterionResult::pass(Criterion::NoHardcodedLists, vec![])
        } else {
            let names = if variable_names.is_empty() {
                "(unnamed)".to_string()
            } else {
                variable_names.join(", ")
            };
            CriterionResult::fail(
                Criterion::NoHardcodedLists,
                format!("The following variables list per-object attributes: {names}"),
                variable_names
                    .iter()
                    .map(|v| Detail {
                        subject: v.clone(),
                        expected: "computed from a pattern".into(),
                        actual: "explicit per-object list".into(),
                        iou: None,
                    })
                    .collect(),
            )
        }
    }

    fn for_example(mut self, ordinal: usize) -> Self {
        self.example = Some(ordinal);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Motif,
    Meta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub target: Target,
    pub results: Vec<CriterionResult>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn new(target: Target, results: Vec<CriterionResult>) -> Self {
        let passed = results.iter().all(|r| r.passed);
        ValidationReport {
            target,
            results,
            passed,
        }
    }

    pub fn first_failure(&self) -> Option<&CriterionResult> {
        self.results.iter().find(|r| !r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CriterionResult> {
        self.results.iter().filter(|r| !r.passed)
    }

    /// Feedback of all failed criteria; meta reports are grouped by example ordinal.
    pub fn feedback_text(&self) -> String {
        let mut out = String::new();
        match self.target {
            Target::Motif => {
                for r in self.failures() {
                    let _ = writeln!(out, "{}", r.feedback.trim_end());
                }
            }
            Target::Meta => {
                let mut by_example: BTreeMap<usize, Vec<&CriterionResult>> = BTreeMap::new();
                for r in self.failures() {
                    by_example.entry(r.example.unwrap_or(0)).or_default().push(r);
                }
                for (ordinal, results) in by_example {
                    let _ = writeln!(out, "Example program {ordinal}:");
                    for r in results {
                        for line in r.feedback.trim_end().lines() {
                            let _ = writeln!(out, "  {line}");
                        }
                    }
                }
            }
        }
        out.trim_end().to_string()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ValidateError {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn fmt_vec(v: Vec3) -> String {
    format!(
        "({}, {}, {})",
        format_number(v.x),
        format_number(v.y),
        format_number(v.z)
    )
}

fn label_counts(objs: &[SceneObject]) -> BTreeMap<&str, usize> {
    let mut m = BTreeMap::new();
    for o in objs {
        *m.entry(o.label.as_str()).or_insert(0) += 1;
    }
    m
}

fn compare_counts(actual: &[SceneObject], expected: &[SceneObject]) -> CriterionResult {
    let exp = label_counts(expected);
    let act = label_counts(actual);
    let mut labels: Vec<&str> = exp.keys().chain(act.keys()).copied().collect();
    labels.sort_unstable();
    labels.dedup();
    let mut details = Vec::new();
    let mut feedback = String::new();
    for label in labels {
        let e = exp.get(label).copied().unwrap_or(0);
        let a = act.get(label).copied().unwrap_or(0);
        details.push(Detail {
            subject: label.to_string(),
            expected: e.to_string(),
            actual: a.to_string(),
            iou: None,
        });
        if e != a {
            let _ = writeln!(feedback, "{label}: expected {e}, got {a}");
        }
    }
    if feedback.is_empty() {
        CriterionResult::pass(Criterion::ObjectCounts, details)
    } else {
        CriterionResult::fail(Criterion::ObjectCounts, feedback.trim_end(), details)
    }
}

/// Criterion: same number of objects per label.
pub fn check_counts(trace: &ObjectTrace, reference: &Arrangement) -> CriterionResult {
    compare_counts(&trace.scene_objects(), &reference.objects)
}

/// `(trace index, reference index)` pairs.
pub type Pairing = Vec<(usize, usize)>;

#[derive(Clone, Debug)]
pub struct PlacementCheck {
    pub result: CriterionResult,
    pub pairing: Pairing,
}

/// Pair objects label by label, minimizing the total centroid distance.
pub fn pair_objects(actual: &[SceneObject], expected: &[SceneObject]) -> Result<Pairing, ValidateError> {
    if !compare_counts(actual, expected).passed {
        return Err(ValidateError::InvalidState(
            "object counts differ; pairing is undefined".into(),
        ));
    }
    let mut by_label: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, o) in actual.iter().enumerate() {
        by_label.entry(o.label.as_str()).or_default().0.push(i);
    }
    for (j, o) in expected.iter().enumerate() {
        by_label.entry(o.label.as_str()).or_default().1.push(j);
    }
    let mut pairing = Vec::with_capacity(actual.len());
    for (_, (ai, ei)) in by_label {
        let cost: Vec<Vec<f64>> = ai
            .iter()
            .map(|&a| {
                ei.iter()
                    .map(|&e| actual[a].position.distance(expected[e].position))
                    .collect()
            })
            .collect();
        for (row, col) in min_cost_assignment(&cost).into_iter().enumerate() {
            pairing.push((ai[row], ei[col]));
        }
    }
    pairing.sort_by_key(|&(_, e)| e);
    Ok(pairing)
}

/// Criterion: every paired object overlaps its reference with AABB IoU ≥ `theta`.
pub fn check_placements(
    trace: &ObjectTrace,
    reference: &Arrangement,
    theta: f64,
) -> Result<PlacementCheck, ValidateError> {
    let actual = trace.scene_objects();
    let expected = &reference.objects;
    let pairing = pair_objects(&actual, expected)?;
    let mut details = Vec::new();
    let mut feedback = String::new();
    let mut failing = 0;
    for &(a, e) in &pairing {
        let iou = aabb_iou(&world_aabb(&actual[a]), &world_aabb(&expected[e]));
        let detail = Detail {
            subject: format!("{} ({})", expected[e].id, expected[e].label),
            expected: fmt_vec(expected[e].position),
            actual: fmt_vec(actual[a].position),
            iou: Some(iou),
        };
        if iou < theta {
            failing += 1;
            if failing <= MAX_FEEDBACK_LINES {
                let _ = writeln!(
                    feedback,
                    "Object {} is placed at {} but should be at {}",
                    detail.subject, detail.actual, detail.expected
                );
            }
        }
        details.push(detail);
    }
    if failing > MAX_FEEDBACK_LINES {
        let _ = writeln!(
            feedback,
            "... and {} more misplaced objects",
            failing - MAX_FEEDBACK_LINES
        );
    }
    let result = if failing == 0 {
        CriterionResult::pass(Criterion::Placements, details)
    } else {
        CriterionResult::fail(Criterion::Placements, feedback.trim_end(), details)
    };
    Ok(PlacementCheck { result, pairing })
}

fn centered(b: Aabb) -> Aabb {
    Aabb::from_center_half(Vec3::ZERO, b.extents() * 0.5)
}

fn half_sizes_match(a: Vec3, e: Vec3) -> bool {
    (0..3).all(|i| (a[i] - e[i]).abs() <= HALF_SIZE_REL_TOL * e[i].abs().max(1e-12))
}

/// Criterion: paired objects have the same half sizes (relative 1e-3) and the same
/// world extents, compared as centroid-aligned AABBs with IoU ≥ `theta`.
pub fn check_extents(
    trace: &ObjectTrace,
    reference: &Arrangement,
    pairing: &Pairing,
    theta: f64,
) -> Result<CriterionResult, ValidateError> {
    let actual = trace.scene_objects();
    let expected = &reference.objects;
    if pairing.len() != expected.len() || pairing.iter().any(|&(a, e)| a >= actual.len() || e >= expected.len()) {
        return Err(ValidateError::InvalidState(
            "pairing does not cover both object lists".into(),
        ));
    }
    let mut details = Vec::new();
    let mut feedback = String::new();
    let mut failing = 0;
    for &(a, e) in pairing {
        let (ao, eo) = (&actual[a], &expected[e]);
        let iou = aabb_iou(&centered(world_aabb(ao)), &centered(world_aabb(eo)));
        let size_ok = half_sizes_match(ao.half_size, eo.half_size);
        let subject = format!("{} ({})", eo.id, eo.label);
        if !(size_ok && iou >= theta) {
            failing += 1;
            if failing <= MAX_FEEDBACK_LINES {
                if size_ok {
                    let _ = writeln!(
                        feedback,
                        "Object {subject} has world extents {} but should have {} (check its rotation)",
                        fmt_vec(world_aabb(ao).extents()),
                        fmt_vec(world_aabb(eo).extents())
                    );
                } else {
                    let _ = writeln!(
                        feedback,
                        "Object {subject} has half size {} but should have {}",
                        fmt_vec(ao.half_size),
                        fmt_vec(eo.half_size)
                    );
                }
            }
        }
        details.push(Detail {
            subject,
            expected: fmt_vec(eo.half_size),
            actual: fmt_vec(ao.half_size),
            iou: Some(iou),
        });
    }
    if failing > MAX_FEEDBACK_LINES {
        let _ = writeln!(
            feedback,
            "... and {} more mis-sized objects",
            failing - MAX_FEEDBACK_LINES
        );
    }
    Ok(if failing == 0 {
        CriterionResult::pass(Criterion::Extents, details)
    } else {
        CriterionResult::fail(Criterion::Extents, feedback.trim_end(), details)
    })
}

fn label_sorted(trace: &ObjectTrace) -> Vec<SceneObject> {
    let mut objs = trace.scene_objects();
    objs.sort_by(|a, b| a.label.cmp(&b.label));
    objs
}

/// Criterion: the relative direction of every ordered object pair matches
/// between the two traces (objects matched by index after a stable label sort).
pub fn check_pairwise_directions(
    trace: &ObjectTrace,
    reference_trace: &ObjectTrace,
) -> Result<CriterionResult, ValidateError> {
    if trace.objects.len() != reference_trace.objects.len() {
        return Err(ValidateError::InvalidState(format!(
            "object counts differ ({} vs {})",
            trace.objects.len(),
            reference_trace.objects.len()
        )));
    }
    let actual = label_sorted(trace);
    let expected = label_sorted(reference_trace);
    let n = actual.len();
    let mut feedback = String::new();
    let mut details = Vec::new();
    let mut failing = 0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let want = relative_direction(&expected[i], &expected[j], DEFAULT_DEAD_ZONE);
            let got = relative_direction(&actual[i], &actual[j], DEFAULT_DEAD_ZONE);
            if want != got {
                failing += 1;
                let subject = format!(
                    "{} ({}) -> {} ({})",
                    expected[i].id, expected[i].label, expected[j].id, expected[j].label
                );
                if failing <= MAX_FEEDBACK_LINES {
                    let _ = writeln!(
                        feedback,
                        "Direction from {subject} should be {want} but is {got}; positions {} -> {} should be like {} -> {}",
                        fmt_vec(actual[i].position),
                        fmt_vec(actual[j].position),
                        fmt_vec(expected[i].position),
                        fmt_vec(expected[j].position)
                    );
                }
                details.push(Detail {
                    subject,
                    expected: want.to_string(),
                    actual: got.to_string(),
                    iou: None,
                });
            }
        }
    }
    if failing > MAX_FEEDBACK_LINES {
        let _ = writeln!(
            feedback,
            "... and {} more mismatching pairs",
            failing - MAX_FEEDBACK_LINES
        );
    }
    Ok(if failing == 0 {
        CriterionResult::pass(Criterion::PairwiseDirections, details)
    } else {
        CriterionResult::fail(Criterion::PairwiseDirections, feedback.trim_end(), details)
    })
}

/// Aggregate criteria 2–5 for a candidate motif program. Every criterion is reported.
pub fn validate_motif_program(
    trace: &ObjectTrace,
    reference: &Arrangement,
    hardcode_judgment: CriterionResult,
) -> ValidationReport {
    let counts = check_counts(trace, reference);
    let mut results = vec![hardcode_judgment, counts.clone()];
    match check_placements(trace, reference, THETA_OBJ) {
        Ok(placement) => {
            let extents = check_extents(trace, reference, &placement.pairing, THETA_OBJ)
                .expect("pairing produced by check_placements is complete");
            results.push(placement.result);
            results.push(extents);
        }
        Err(_) => {
            let why = format!(
                "not evaluated because object counts differ (expected {}, got {})",
                reference.objects.len(),
                trace.objects.len()
            );
            results.push(CriterionResult::fail(Criterion::Placements, why.clone(), vec![]));
            results.push(CriterionResult::fail(Criterion::Extents, why, vec![]));
        }
    }
    ValidationReport::new(Target::Motif, results)
}

/// Per example: counts, then pairwise directions, of the call trace against the motif trace.
pub fn validate_meta_program(
    call_traces: &[ObjectTrace],
    motif_traces: &[ObjectTrace],
) -> Result<ValidationReport, ValidateError> {
    if call_traces.len() != motif_traces.len() {
        return Err(ValidateError::InvalidArgument(format!(
            "{} call traces for {} motif programs",
            call_traces.len(),
            motif_traces.len()
        )));
    }
    let mut results = Vec::new();
    for (k, (call, motif)) in call_traces.iter().zip(motif_traces).enumerate() {
        let ordinal = k + 1;
        let counts = compare_counts(&call.scene_objects(), &motif.scene_objects()).for_example(ordinal);
        let directions = if counts.passed {
            check_pairwise_directions(call, motif)?
        } else {
            CriterionResult::fail(
                Criterion::PairwiseDirections,
                format!(
                    "not evaluated because object counts differ (expected {}, got {})",
                    motif.objects.len(),
                    call.objects.len()
                ),
                vec![],
            )
        };
        results.push(counts);
        results.push(directions.for_example(ordinal));
    }
    Ok(ValidationReport::new(Target::Meta, results))
}
