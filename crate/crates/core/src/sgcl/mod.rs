//! Structure-guided cell localization at desk scale.
//!
//! The forward pass goes from decoder hidden states and a feature pyramid to
//! refined cell boxes:
//!
//! 1. [`fuse_pyramid`] fuses adjacent pyramid levels into `P3'` and `P4'`.
//! 2. [`flatten_with_pos`] turns `P4'` into visual tokens `V`.
//! 3. [`aggregate_layers`] mixes decoder layers and [`pool_cells`] averages
//!    each cell's `<td ... </td>` token range into `C`.
//! 4. [`structure_masks`] projects `C` into row and column spaces and
//!    thresholds their pairwise products.
//! 5. [`enhance_cells`] runs the masked row and column branches into `C'`.
//! 6. [`regress_initial`] and [`refine_boxes`] produce `B_init` and `B`.
//!
//! Every operation is generic over [`Real`], so the same code runs on `f64`
//! and on [`tape::Var`] for exact reverse-mode gradients.
//! [`gradcheck::grad_check`] compares those with central differences.

use thiserror::Error;

pub mod checks;
pub mod forward;
pub mod gradcheck;
pub mod loss;
pub mod params;
pub mod real;
pub mod tape;
pub mod tensor;
pub mod toy;


pub use forward::{
    aggregate_layers, enhance_cells, flatten_with_pos, forward, fuse_pyramid, mask_alignment_logits, pool_cells,
    refine_boxes, regress_initial, structure_masks, Anchors, Forward, SgclInputs, StructureMasks,
};
pub use gradcheck::{grad_check, relative_error, Differentiable, GradCheck, GradCheckError, Program};
pub use loss::{
    adjacency_targets, loss_gradients, loss_terms, loss_total, mask_targets, AdjacencyTargets, GtBundle, LossTerms,
    LossWeights, PredBundle,
};
pub use params::{SgclConfig, SgclParams};
pub use real::Real;
pub use tensor::{FeatureMap, HiddenStates, Mat, TokenSpanIndex};
pub use toy::{ToyInstance, ToyProblem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SgclError {
    #[error("{what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("misaligned {what}: expected {expected}, found {found}")]
    Misaligned {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("no {0}")]
    Empty(&'static str),
    #[error("cell {cell}: bad token span {start}..={end}")]
    BadSpan { cell: usize, start: usize, end: usize },
    #[error("structure mask diagonal must be set")]
    MaskDiagonal,
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("loss weights must be finite and non-negative")]
    Weights,
    #[error("config: {0}")]
    Config(&'static str),
}
