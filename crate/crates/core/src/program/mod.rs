//! DSL program representation, naive-program extraction and the program library.

mod library;
mod meta;
mod motif;
mod naive;

use serde::{Deserialize, Serialize};

pub use library::ProgramLibrary;
pub use meta::{
    docstring, documented_calls, single_function_name, top_level_functions, with_example_call, MetaProgram,
};
pub use motif::{MotifKind, MotifType, UnknownMotif};
pub use naive::{extract_naive_program, format_number, python_string};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Naive,
    Motif,
}

/// Source text of a naive or motif program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramText {
    pub source: String,
    /// Unknown until classification for freshly extracted naive programs.
    pub motif_type: Option<MotifType>,
    pub description: String,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_from: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ProgramError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid meta-program: {0}")]
    InvalidMeta(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("corrupt library: {0}")]
    Corrupt(String),
}
