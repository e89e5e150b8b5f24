//! Table recognition metrics: tree edit distance, TEDS / TEDS-S / TEDS-Delta
//! and AP at IoU 0.5.

mod ap;
mod corpus;
mod ted;
mod teds;

pub use ap::{average_precision, ap50, DetectionSet};
pub use corpus::{corpus_eval, CorpusReport, EvalSample, EvalSide, SampleFlags, SampleReport};
pub use ted::{normalized_levenshtein, rename_cost, tree_edit_distance};
pub use teds::{teds, teds_trees, TedsResult, TedsScore};
