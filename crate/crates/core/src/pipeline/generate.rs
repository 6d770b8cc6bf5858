use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{run_name, CommonsenseVerdict, Orchestrator, PipelineError, Run, RunReport, Stage, TouchMode};
use crate::assets::{pick_asset, rank_assets, AssetIndex};
use crate::exec::ObjectTrace;
use crate::geo::{merged_obj, optimize_arrangement, ObjectFailure, PlacedMesh};
use crate::llm::parse::extract_call;
use crate::program::{MetaProgram, MotifType, ProgramLibrary};
use crate::scene::{Arrangement, SceneObject};

const TOUCH_FEEDBACK: &str =
    "The response could not be read as a json-like structure with the keys 'touch' and 'no_touch' whose values sum to 1.";
const ORIENTATION_FEEDBACK: &str =
    "The response could not be read as a json-like structure with one entry per object type, each with the keys 'correct' and 'incorrect'.";

/// The mesh chosen for one object, if any.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssetChoice {
    pub object_id: String,
    pub asset_id: Option<String>,
    pub score: Option<f64>,
    /// The mesh was turned away from its canonical pose to fit.
    pub rotated: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenerateOutcome {
    pub arrangement: Arrangement,
    pub motif_type: MotifType,
    pub function_call: String,
    pub call_iterations: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<CommonsenseVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub touch_verdict: Option<CommonsenseVerdict>,
    pub touch: bool,
    #[serde(default)]
    pub assets: Vec<AssetChoice>,
    /// Objects the optimizer could not fully resolve.
    #[serde(default)]
    pub failures: Vec<ObjectFailure>,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub report: RunReport,
    #[serde(skip)]
    pub placed: Vec<PlacedMesh>,
}

impl GenerateOutcome {
    /// The posed meshes (or boxes) as one OBJ document.
    pub fn merged_obj(&self) -> String {
        if self.placed.is_empty() {
            merged_obj(&boxes(&self.arrangement))
        } else {
            merged_obj(&self.placed)
        }
    }
}

fn boxes(arrangement: &Arrangement) -> Vec<PlacedMesh> {
    arrangement.objects.iter().cloned().map(PlacedMesh::boxed).collect()
}

/// Merge an arrangement into one OBJ, using asset meshes for objects with an
/// `asset_id` found in `index` and boxes for the rest.
pub fn export_merged(arrangement: &Arrangement, index: Option<&AssetIndex>) -> String {
    let placed: Vec<PlacedMesh> = arrangement
        .objects
        .iter()
        .map(|o| {
            let mesh = o
                .asset_id
                .as_deref()
                .and_then(|id| index?.get(id))
                .and_then(|r| index?.mesh(r).ok());
            match mesh {
                Some(m) => PlacedMesh::new(o.clone(), m),
                None => PlacedMesh::boxed(o.clone()),
            }
        })
        .collect();
    merged_obj(&placed)
}

fn unique_labels(objects: &[SceneObject]) -> Vec<String> {
    let mut labels: Vec<String> = Vec::new();
    for o in objects {
        if !labels.contains(&o.label) {
            labels.push(o.label.clone());
        }
    }
    labels
}

impl Orchestrator {
    /// Ask for a call of the meta-program and run it, feeding errors back.
    fn synthesize_call(
        &self,
        run: &mut Run,
        description: &str,
        meta: &MetaProgram,
        seed: u64,
    ) -> Result<(String, ObjectTrace, u32), PipelineError> {
        let stage = Stage::Synthesize;
        let s = run.open("inference");
        let mt = meta.motif_type.to_string();
        let mut reply = run.ask(
            s,
            stage,
            "inference",
            &[
                ("DESCRIPTION", description),
                ("META_PROGRAM", &meta.source),
                ("MOTIF_TYPE", &mt),
            ],
        )?;
        let max = self.config.max_call_iters;
        let mut last = String::new();
        for iter in 1..=max {
            let call = extract_call(&reply, &meta.function_name);
            let feedback = match self.executor.execute_meta_call(&meta.source, &call, self.limits(seed)) {
                Err(e) if e.is_infrastructure() => return Err(PipelineError::Executor { stage, source: e }),
                Err(e) => e.to_string(),
                Ok(t) if t.objects.is_empty() => "The function call created no objects.".to_string(),
                Ok(t) => return Ok((call, t, iter)),
            };
            tracing::info!(iteration = iter, "function call rejected: {feedback}");
            last = feedback;
            if iter < max {
                reply = run.ask(s, stage, "inference_feedback", &[("FEEDBACK", &last)])?;
            }
        }
        Err(PipelineError::Exhausted {
            stage,
            iterations: max,
            message: last,
            report: None,
        })
    }

    fn ask_orientation(
        &self,
        run: &mut Run,
        description: &str,
        labels: &[String],
    ) -> Result<CommonsenseVerdict, PipelineError> {
        let stage = Stage::Orientation;
        let s = run.open("orientation");
        let joined = labels.join(", ");
        let reply = run.ask(
            s,
            stage,
            "retrieval_mesh_rotations",
            &[("DESCRIPTION", description), ("OBJECT_LABELS", &joined)],
        )?;
        let parse = |r: &str| CommonsenseVerdict::orientation_from_reply(r, labels);
        if let Some(v) = parse(&reply) {
            return Ok(v);
        }
        match run.reask(s, stage, ORIENTATION_FEEDBACK, parse) {
            Ok(v) => Ok(v),
            Err(PipelineError::Parse { .. }) => {
                tracing::warn!("orientation reply unparseable; keeping canonical mesh poses");
                Ok(CommonsenseVerdict::default_orientation(labels))
            }
            Err(e) => Err(e),
        }
    }

    fn ask_touch(&self, run: &mut Run, description: &str) -> Result<CommonsenseVerdict, PipelineError> {
        let stage = Stage::Touch;
        let s = run.open("touch");
        let reply = run.ask(s, stage, "spatial_optimization_touch", &[("DESCRIPTION", description)])?;
        if let Some(v) = CommonsenseVerdict::touch_from_reply(&reply) {
            return Ok(v);
        }
        match run.reask(s, stage, TOUCH_FEEDBACK, CommonsenseVerdict::touch_from_reply) {
            Ok(v) => Ok(v),
            Err(PipelineError::Parse { .. }) => {
                tracing::warn!("touch reply unparseable; touch disabled");
                Ok(CommonsenseVerdict::default_touch())
            }
            Err(e) => Err(e),
        }
    }

    /// Classify, call the stored meta-program, retrieve meshes and optimize.
    pub fn generate(
        &self,
        description: &str,
        lib: &ProgramLibrary,
        assets: Option<&AssetIndex>,
    ) -> Result<GenerateOutcome, PipelineError> {
        self.config.validate()?;
        if description.trim().is_empty() {
            return Err(PipelineError::InvalidArgument("description is empty".into()));
        }
        let seed = self.config.rng_seed;
        let mut run = Run::new(self, run_name("generate", &[description, &seed.to_string()]));
        let res = self.generate_in(&mut run, description, lib, assets);
        let report = run.finish();
        res.map(|mut o| {
            o.report = report;
            o
        })
    }

    fn generate_in(
        &self,
        run: &mut Run,
        description: &str,
        lib: &ProgramLibrary,
        assets: Option<&AssetIndex>,
    ) -> Result<GenerateOutcome, PipelineError> {
        let seed = self.config.rng_seed;
        let mut warnings = Vec::new();

        let started = Instant::now();
        let s = run.open("classify");
        let motif_type = self.classify_in(run, s, description)?;
        run.timed(Stage::Classify, started);

        let started = Instant::now();
        let meta = lib
            .fetch_meta_program(motif_type)
            .map_err(|source| PipelineError::Library {
                stage: Stage::Retrieve,
                source,
            })?
            .ok_or(PipelineError::NoMetaProgram(motif_type))?;
        run.timed(Stage::Retrieve, started);

        let started = Instant::now();
        let (function_call, trace, call_iterations) = self.synthesize_call(run, description, &meta, seed)?;
        run.timed(Stage::Synthesize, started);
        let objects = trace.scene_objects();

        let (orientation, placed, choices) = match assets {
            Some(index) if !index.is_empty() => {
                let started = Instant::now();
                let labels = unique_labels(&objects);
                let verdict = self.ask_orientation(run, description, &labels)?;
                run.timed(Stage::Orientation, started);

                let started = Instant::now();
                let (placed, choices) = self.place_assets(index, &objects, &verdict, seed, &mut warnings)?;
                run.timed(Stage::Assets, started);
                (Some(verdict), placed, choices)
            }
            _ => {
                let choices = objects
                    .iter()
                    .map(|o| AssetChoice {
                        object_id: o.id.clone(),
                        asset_id: None,
                        score: None,
                        rotated: false,
                    })
                    .collect();
                (None, objects.iter().cloned().map(PlacedMesh::boxed).collect(), choices)
            }
        };

        let started = Instant::now();
        let (touch, touch_verdict) = match self.config.touch {
            TouchMode::On => (true, None),
            TouchMode::Off => (false, None),
            TouchMode::Auto => {
                let v = self.ask_touch(run, description)?;
                (v.touch(), Some(v))
            }
        };
        run.timed(Stage::Touch, started);

        let started = Instant::now();
        let optimized =
            optimize_arrangement(placed, touch, &self.config.geo).map_err(|source| PipelineError::Geometry {
                stage: Stage::Optimize,
                source,
            })?;
        run.timed(Stage::Optimize, started);
        for f in &optimized.failures {
            warnings.push(format!("{}: {}", f.object_id, f.message));
        }

        let arrangement = Arrangement {
            description: description.to_string(),
            motif_type: Some(motif_type),
            objects: optimized.objects(),
        };
        Ok(GenerateOutcome {
            arrangement,
            motif_type,
            function_call,
            call_iterations,
            orientation,
            touch_verdict,
            touch,
            assets: choices,
            failures: optimized.failures.clone(),
            warnings,
            report: RunReport::default(),
            placed: optimized.placed,
        })
    }

    fn place_assets(
        &self,
        index: &AssetIndex,
        objects: &[SceneObject],
        verdict: &CommonsenseVerdict,
        seed: u64,
        warnings: &mut Vec<String>,
    ) -> Result<(Vec<PlacedMesh>, Vec<AssetChoice>), PipelineError> {
        let stage = Stage::Assets;
        let err = |source| PipelineError::Assets { stage, source };
        let mut placed = Vec::with_capacity(objects.len());
        let mut choices = Vec::with_capacity(objects.len());
        for (i, obj) in objects.iter().enumerate() {
            let target = obj.half_size * 2.0;
            let ranked = rank_assets(index, &obj.label, target, verdict.allow_rotation(&obj.label)).map_err(err)?;
            if ranked.is_empty() {
                warnings.push(format!("{}: no asset labelled `{}`; using a box", obj.id, obj.label));
                choices.push(AssetChoice {
                    object_id: obj.id.clone(),
                    asset_id: None,
                    score: None,
                    rotated: false,
                });
                placed.push(PlacedMesh::boxed(obj.clone()));
                continue;
            }
            let pick = pick_asset(&ranked, self.config.top_k, seed.wrapping_add(i as u64)).map_err(err)?;
            let mut mesh = index.mesh(&pick.record).map_err(err)?;
            let mut half = mesh.bounds().extents() * 0.5;
            if self.config.rescale_assets {
                let have = half.x * half.y * half.z * 8.0;
                let want = target.x * target.y * target.z;
                if have > 0.0 {
                    let f = (want / have).cbrt();
                    mesh = Arc::new(mesh.scaled(f));
                    half = half * f;
                }
            }
            let object = SceneObject {
                half_size: half,
                rotation: obj.rotation.mul(&pick.orientation),
                asset_id: Some(pick.record.asset_id.clone()),
                ..obj.clone()
            };
            choices.push(AssetChoice {
                object_id: obj.id.clone(),
                asset_id: Some(pick.record.asset_id.clone()),
                score: Some(pick.score),
                rotated: !pick.orientation.is_identity(1e-12),
            });
            placed.push(PlacedMesh::new(object, mesh));
        }
        Ok((placed, choices))
    }
}
