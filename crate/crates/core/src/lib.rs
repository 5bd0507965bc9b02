pub mod baseline;
pub mod checkpoint;
pub mod engine;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod props;
pub mod relation;
pub mod sweep;
pub mod taskgen;
pub mod tpr;
pub mod train;

pub use error::{Error, Result};
pub use relation::{oracle_compose, Offset, RelationLabel, NUM_LABELS};
