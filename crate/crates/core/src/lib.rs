//! Table recognition toolkit core.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds under `no_std` with `alloc`. File formats, reports and the command
//! line live in the companion `tablekit` crate.
//!
//! Module map:
//!
//! * [`geometry`] and [`model`]: normalized boxes, logical coordinates and the
//!   unified table annotation record.
//! * [`html`]: table HTML trees, the canonical serializer, a strict/lenient
//!   parser and the grid <-> HTML codec.
//! * [`metrics`]: tree edit distance, TEDS / TEDS-S / TEDS-Delta and AP50.
//! * [`ingest`]: source-format unification, grid derivation, cleaning rules
//!   and table cropping.
//! * [`augment`]: constrained sub-table sampling.
//! * [`taskgen`]: prompt/target generation for the structure and spotting
//!   tasks, with parsers for every target grammar.
//! * [`sgcl`]: structure-guided cell localization forward pass, losses and
//!   the gradient-check harness.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod augment;
pub mod geometry;
pub mod html;
pub mod ingest;
pub mod math;
pub mod metrics;
pub mod model;
pub mod sgcl;
pub mod taskgen;

pub use geometry::{giou_loss, iou, l1_box_loss, BBox, DiscretizationConfig};
pub use model::{Cell, GridEntry, LogicalCoords, TableAnnotation, ValidationError};
