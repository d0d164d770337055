//! Corpus ingestion, normalization and synthetic generation.

mod corpus;
mod document;
mod m2e2;
mod records;
mod synthetic;

pub use corpus::*;
pub use document::*;
pub use m2e2::*;
pub use records::*;
pub use synthetic::*;
