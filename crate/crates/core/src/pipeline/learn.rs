use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{excerpt, run_name, Orchestrator, PipelineError, Run, RunReport, SessionId, Stage};
use crate::exec::{ExecError, ObjectTrace};
use crate::llm::parse::{extract_code, parse_call_map, parse_counts, parse_listing_verdict, parse_motif_type};
use crate::program::{
    extract_naive_program, single_function_name, with_example_call, MetaProgram, MotifType, ProgramLibrary,
    ProgramText, Provenance,
};
use crate::scene::Arrangement;
use crate::validate::{validate_meta_program, validate_motif_program, Criterion, CriterionResult, ValidationReport};

const COUNTS_FEEDBACK: &str =
    "The response could not be read as a json-like structure with object types as keys and integer counts as values.";
const CLASSIFY_FEEDBACK: &str = "The response is not one of the listed motif types.";
const LISTING_FEEDBACK: &str =
    "The response could not be read as a json-like structure with the keys 'valid' and 'variable_names'.";
const CALLS_FEEDBACK: &str =
    "The response could not be read as a json-like structure with example program numbers as keys and function calls as values.";

/// The four high-level observations of a naive program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub counts: BTreeMap<String, u32>,
    pub general_pattern: String,
    pub xyz_pattern: String,
    pub displacement_groups: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearnOutcome {
    pub motif_type: MotifType,
    pub observations: Observations,
    pub motif_program_id: String,
    pub motif_program: String,
    pub rewrite_iterations: u32,
    pub rewrite_report: ValidationReport,
    pub meta: MetaProgram,
    pub meta_path: PathBuf,
    pub meta_iterations: u32,
    pub meta_report: ValidationReport,
    /// Comment refinement broke the program, so the pre-refinement source was kept.
    pub refine_fallback: bool,
    pub report: RunReport,
}

pub struct MetaResult {
    pub meta: MetaProgram,
    pub iterations: u32,
    pub report: ValidationReport,
    pub refine_fallback: bool,
}

fn feedback_template(c: Criterion) -> &'static str {
    match c {
        Criterion::NoHardcodedLists => "optimize_lowlevel_feedback_naive_listing",
        Criterion::ObjectCounts => "optimize_lowlevel_feedback_num_objs",
        Criterion::Placements => "optimize_lowlevel_feedback_centroids",
        Criterion::Extents | Criterion::PairwiseDirections => "optimize_lowlevel_feedback_bounding_boxes",
    }
}

/// `Program i: "description"` followed by the fenced source, one per program.
pub(super) fn format_programs(programs: &[(String, ProgramText)]) -> String {
    programs
        .iter()
        .enumerate()
        .map(|(i, (_, p))| {
            format!(
                "Program {}: \"{}\"\n```python\n{}\n```",
                i + 1,
                p.description,
                p.source.trim_end()
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

impl Orchestrator {
    /// The four observation prompts, in order, in session `s`.
    pub fn observe_arrangement(
        &self,
        run: &mut Run,
        s: SessionId,
        naive: &ProgramText,
        description: &str,
    ) -> Result<Observations, PipelineError> {
        if naive.source.trim().is_empty() {
            return Err(PipelineError::InvalidArgument("naive program is empty".into()));
        }
        let stage = Stage::Observe;
        let reply = run.ask(
            s,
            stage,
            "optimize_highlevel_count",
            &[("DESCRIPTION", description), ("PROGRAM", &naive.source)],
        )?;
        let counts = match parse_counts(&reply) {
            Some(c) => c,
            None => run.reask(s, stage, COUNTS_FEEDBACK, parse_counts)?,
        };
        let general_pattern = run.ask(
            s,
            stage,
            "optimize_highlevel_general_pattern",
            &[("DESCRIPTION", description)],
        )?;
        let xyz_pattern = run.ask(s, stage, "optimize_highlevel_xyz_pattern", &[])?;
        let displacement_groups = run.ask(s, stage, "optimize_highlevel_xyz_displacements", &[])?;
        Ok(Observations {
            counts,
            general_pattern,
            xyz_pattern,
            displacement_groups,
        })
    }

    /// Ask `classify` in session `s`, re-asking once on an unknown type.
    pub fn classify_in(&self, run: &mut Run, s: SessionId, description: &str) -> Result<MotifType, PipelineError> {
        let reply = run.ask(s, Stage::Classify, "classify", &[("DESCRIPTION", description)])?;
        match parse_motif_type(&reply) {
            Some(t) => Ok(t),
            None => run.reask(s, Stage::Classify, CLASSIFY_FEEDBACK, parse_motif_type),
        }
    }

    /// Classify a description in a fresh session.
    pub fn classify_description(&self, description: &str) -> Result<(MotifType, RunReport), PipelineError> {
        let mut run = Run::new(self, run_name("classify", &[description]));
        let started = Instant::now();
        let s = run.open("classify");
        let res = self.classify_in(&mut run, s, description);
        run.timed(Stage::Classify, started);
        let report = run.finish();
        res.map(|t| (t, report))
    }

    /// Criterion 2: ask the hard-coded-list judge in a fresh session.
    fn judge_listing(&self, run: &mut Run, source: &str) -> Result<CriterionResult, PipelineError> {
        let s = run.open("judge");
        let reply = run.ask(s, Stage::Rewrite, "validate_naive_listing", &[("PROGRAM", source)])?;
        let verdict = match parse_listing_verdict(&reply) {
            Some(v) => Some(v),
            None => run
                .reask(s, Stage::Rewrite, LISTING_FEEDBACK, parse_listing_verdict)
                .ok(),
        };
        Ok(match verdict {
            Some(v) => CriterionResult::hardcode_judgment(v.valid, &v.variable_names),
            None => {
                tracing::warn!("hard-coded list judge gave no verdict; treating the criterion as passed");
                CriterionResult::hardcode_judgment(true, &[])
            }
        })
    }

    fn run_program(&self, stage: Stage, source: &str) -> Result<Result<ObjectTrace, ExecError>, PipelineError> {
        match self.executor.execute_program(source, self.limits(0)) {
            Err(e) if e.is_infrastructure() => Err(PipelineError::Executor { stage, source: e }),
            other => Ok(other),
        }
    }

    fn run_call(
        &self,
        stage: Stage,
        source: &str,
        call: &str,
        seed: u64,
    ) -> Result<Result<ObjectTrace, ExecError>, PipelineError> {
        match self.executor.execute_meta_call(source, call, self.limits(seed)) {
            Err(e) if e.is_infrastructure() => Err(PipelineError::Executor { stage, source: e }),
            other => Ok(other),
        }
    }

    /// Ask for a motif program in session `s` (which holds the observations) and
    /// refine it with criterion feedback until it validates.
    pub fn rewrite_to_motif(
        &self,
        run: &mut Run,
        s: SessionId,
        reference: &Arrangement,
    ) -> Result<(String, ValidationReport, u32), PipelineError> {
        let stage = Stage::Rewrite;
        let max = self.config.max_rewrite_iters;
        let mut reply = run.ask(s, stage, "optimize_lowlevel", &[])?;
        let mut last_report = None;
        let mut last_message = String::new();
        for iter in 1..=max {
            let source = extract_code(&reply);
            let (template, feedback) = match self.run_program(stage, &source)? {
                Err(e) => ("optimize_lowlevel_feedback_syntax", e.to_string()),
                Ok(trace) => {
                    let judgment = self.judge_listing(run, &source)?;
                    let report = validate_motif_program(&trace, reference, judgment);
                    if report.passed {
                        return Ok((source, report, iter));
                    }
                    let first = report.first_failure().expect("failed report has a failure");
                    let out = (feedback_template(first.criterion), first.feedback.clone());
                    last_report = Some(report);
                    out
                }
            };
            tracing::info!(iteration = iter, template, "motif program rejected");
            last_message = feedback.clone();
            if iter < max {
                reply = run.ask(s, stage, template, &[("FEEDBACK", &feedback)])?;
            }
        }
        Err(PipelineError::Exhausted {
            stage,
            iterations: max,
            message: last_message,
            report: last_report.map(Box::new),
        })
    }

    /// Generalize same-type motif programs into a documented meta-program.
    pub fn generalize_to_meta(
        &self,
        run: &mut Run,
        motif_type: MotifType,
        programs: &[(String, ProgramText)],
        prior: Option<&MetaProgram>,
    ) -> Result<MetaResult, PipelineError> {
        let stage = Stage::Generalize;
        if programs.is_empty() {
            return Err(PipelineError::InvalidArgument("no motif programs to generalize".into()));
        }
        let motif_traces = programs
            .iter()
            .map(|(id, p)| {
                self.run_program(stage, &p.source)?
                    .map_err(|e| PipelineError::InvalidArgument(format!("stored motif program {id} does not run: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let mt = motif_type.to_string();
        let n = programs.len().to_string();
        let all = format_programs(programs);
        let s = run.open("generalize");
        run.ask(
            s,
            stage,
            "generalize_high_level_commonalities",
            &[("NUM_PROGRAMS", &n), ("MOTIF_TYPE", &mt), ("ALL_PROGRAMS", &all)],
        )?;
        run.ask(s, stage, "generalize_high_level_differences", &[])?;
        run.ask(s, stage, "generalize_high_level_motif_reason", &[("MOTIF_TYPE", &mt)])?;
        run.ask(s, stage, "generalize_low_level_arguments", &[("MOTIF_TYPE", &mt)])?;
        run.ask(s, stage, "generalize_low_level_structure", &[("MOTIF_TYPE", &mt)])?;
        let past = prior
            .map(|m| m.source.trim_end().to_string())
            .unwrap_or_else(|| "None".into());
        let reply = run.ask(
            s,
            stage,
            "generalize_low_level",
            &[("MOTIF_TYPE", &mt), ("PAST_META_PROGRAM", &past)],
        )?;
        let mut candidate = extract_code(&reply);

        let max = self.config.max_meta_iters;
        let mut accepted = None;
        let mut last_report = None;
        let mut last_message = String::new();
        for iter in 1..=max {
            let reply = run.ask(s, stage, "generalize_low_level_batch_recreate", &[])?;
            let calls = match parse_call_map(&reply) {
                Some(c) => c,
                None => run.reask(s, stage, CALLS_FEEDBACK, parse_call_map)?,
            };
            let (traces, mut problems) = self.recreate(stage, &candidate, &calls, programs.len())?;
            let feedback = match traces {
                Some(traces) => {
                    let report = validate_meta_program(&traces, &motif_traces)
                        .map_err(|e| PipelineError::InvalidArgument(e.to_string()))?;
                    if report.passed {
                        let ordered: Vec<String> = (1..=programs.len()).map(|k| calls[&k].clone()).collect();
                        accepted = Some((iter, ordered, report));
                        break;
                    }
                    problems.push(report.feedback_text());
                    last_report = Some(report);
                    problems.join("\n")
                }
                None => problems.join("\n"),
            };
            tracing::info!(iteration = iter, "meta-program rejected");
            last_message = feedback.clone();
            if iter < max {
                let reply = run.ask(s, stage, "generalize_low_level_feedback", &[("FEEDBACK", &feedback)])?;
                candidate = extract_code(&reply);
            }
        }
        let Some((iterations, calls, report)) = accepted else {
            return Err(PipelineError::Exhausted {
                stage,
                iterations: max,
                message: last_message,
                report: last_report.map(Box::new),
            });
        };

        let reply = run.ask(s, stage, "generalize_refine_comments", &[("MOTIF_TYPE", &mt)])?;
        let refined = extract_code(&reply);
        let ids: Vec<String> = programs.iter().map(|(id, _)| id.clone()).collect();
        let call_map: BTreeMap<usize, String> = calls.iter().cloned().enumerate().map(|(i, c)| (i + 1, c)).collect();
        let refined_ok = MetaProgram::new(refined.clone(), motif_type, calls.clone(), ids.clone())
            .ok()
            .filter(|m| single_function_name(&candidate).is_ok_and(|f| f == m.function_name));
        let refined_ok = match refined_ok {
            Some(m) => match self.recreate(stage, &m.source, &call_map, programs.len())? {
                (Some(traces), problems) if problems.is_empty() => validate_meta_program(&traces, &motif_traces)
                    .ok()
                    .filter(|r| r.passed)
                    .map(|_| m),
                _ => None,
            },
            None => None,
        };
        let (meta, refine_fallback) = match refined_ok {
            Some(m) => (m, false),
            None => {
                tracing::warn!("refined meta-program no longer validates; keeping the validated source");
                let fname =
                    single_function_name(&candidate).map_err(|e| PipelineError::Library { stage, source: e })?;
                let documented = match MetaProgram::new(candidate.clone(), motif_type, calls.clone(), ids.clone()) {
                    Ok(m) => m,
                    Err(_) => {
                        let source = with_example_call(&candidate, &fname, &calls[0]).ok_or_else(|| {
                            PipelineError::InvalidArgument(format!("`{fname}` not found in the meta-program"))
                        })?;
                        MetaProgram::new(source, motif_type, calls.clone(), ids)
                            .map_err(|e| PipelineError::Library { stage, source: e })?
                    }
                };
                (documented, true)
            }
        };
        Ok(MetaResult {
            meta,
            iterations,
            report,
            refine_fallback,
        })
    }

    /// Execute the recreate calls. Returns the traces when every call ran,
    /// plus feedback lines for calls that were missing or failed.
    fn recreate(
        &self,
        stage: Stage,
        source: &str,
        calls: &BTreeMap<usize, String>,
        n: usize,
    ) -> Result<(Option<Vec<ObjectTrace>>, Vec<String>), PipelineError> {
        if let Err(e) = single_function_name(source) {
            return Ok((None, vec![format!("The meta-program could not be used: {e}")]));
        }
        let mut traces = Vec::with_capacity(n);
        let mut problems = Vec::new();
        for k in 1..=n {
            let Some(call) = calls.get(&k) else {
                problems.push(format!("Example program {k}:\n  no function call was provided"));
                continue;
            };
            match self.run_call(stage, source, call, 0)? {
                Ok(t) => traces.push(t),
                Err(e) => problems.push(format!(
                    "Example program {k}:\n  the function call `{call}` failed: {e}"
                )),
            }
        }
        Ok(((traces.len() == n).then_some(traces), problems))
    }

    /// Extract, observe, classify, rewrite, store, then generalize all programs
    /// of the motif type and store the meta-program.
    pub fn learn(
        &self,
        description: &str,
        arrangement: &Arrangement,
        lib: &ProgramLibrary,
    ) -> Result<LearnOutcome, PipelineError> {
        self.config.validate()?;
        let description = if description.trim().is_empty() {
            arrangement.description.as_str()
        } else {
            description
        };
        let mut run = Run::new(self, run_name("learn", &[description, &arrangement.to_json()]));
        let res = self.learn_in(&mut run, description, arrangement, lib);
        let report = run.finish();
        res.map(|mut o| {
            o.report = report;
            o
        })
    }

    fn learn_in(
        &self,
        run: &mut Run,
        description: &str,
        arrangement: &Arrangement,
        lib: &ProgramLibrary,
    ) -> Result<LearnOutcome, PipelineError> {
        if arrangement.objects.is_empty() {
            return Err(PipelineError::InvalidArgument("arrangement has no objects".into()));
        }
        arrangement
            .validate()
            .map_err(|e| PipelineError::InvalidArgument(e.to_string()))?;
        let started = Instant::now();
        let naive = extract_naive_program(arrangement).map_err(|e| PipelineError::Library {
            stage: Stage::Extract,
            source: e,
        })?;
        run.timed(Stage::Extract, started);

        let started = Instant::now();
        let s = run.open("learn");
        let observations = self.observe_arrangement(run, s, &naive, description)?;
        run.timed(Stage::Observe, started);

        let started = Instant::now();
        let classified = self.classify_in(run, s, description)?;
        let motif_type = match arrangement.motif_type {
            Some(given) if given != classified => {
                tracing::warn!(%given, %classified, "arrangement motif type overrides the classification");
                given
            }
            _ => classified,
        };
        run.timed(Stage::Classify, started);

        let started = Instant::now();
        let (source, rewrite_report, rewrite_iterations) = self.rewrite_to_motif(run, s, arrangement)?;
        run.timed(Stage::Rewrite, started);

        let started = Instant::now();
        let lib_err = |source| PipelineError::Library {
            stage: Stage::Store,
            source,
        };
        let motif = ProgramText {
            source: source.clone(),
            motif_type: Some(motif_type),
            description: description.to_string(),
            provenance: Provenance::Motif,
            created_from: None,
        };
        let motif_program_id = lib.store_motif_program(&motif).map_err(lib_err)?;
        let programs = lib.list_motif_programs(motif_type).map_err(lib_err)?;
        let prior = lib.fetch_meta_program(motif_type).map_err(lib_err)?;
        run.timed(Stage::Store, started);

        let started = Instant::now();
        let meta = self.generalize_to_meta(run, motif_type, &programs, prior.as_ref())?;
        run.timed(Stage::Generalize, started);

        let started = Instant::now();
        let meta_path = lib.store_meta_program(&meta.meta).map_err(lib_err)?;
        run.timed(Stage::Store, started);
        tracing::info!(
            %motif_type,
            rewrite_iterations,
            meta_iterations = meta.iterations,
            "learned {}",
            excerpt(&meta.meta.function_name)
        );

        Ok(LearnOutcome {
            motif_type,
            observations,
            motif_program_id,
            motif_program: source,
            rewrite_iterations,
            rewrite_report,
            meta: meta.meta,
            meta_path,
            meta_iterations: meta.iterations,
            meta_report: meta.report,
            refine_fallback: meta.refine_fallback,
            report: RunReport::default(),
        })
    }
}
