//! Template-filling event argument extraction over text and images.

pub mod autograd;
pub mod candidates;
pub mod data;
pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod layers;
pub mod matching;
pub mod ontology;
pub mod training;

pub use error::{Error, ErrorKind, Result};
