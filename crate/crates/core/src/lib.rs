//! Learning reusable arrangement programs from example 3D scenes.
//!
//! An input [`scene::Arrangement`] is lifted into a naive DSL listing,
//! rewritten by a language model into a structured motif program, and
//! generalized across examples of the same motif type into a
//! parameterized meta-program. Generation calls a stored meta-program,
//! retrieves meshes for the produced boxes and resolves penetration and
//! support geometrically.

pub mod api;
pub mod assets;
pub mod exec;
pub mod geo;
pub mod llm;
pub mod pipeline;
pub mod program;
pub mod scene;
pub mod validate;
