//! Turning source annotations into validated unified records.
//!
//! The pipeline has three steps: [`unify`] converts one foreign record and
//! derives grid slots when they are missing, [`clean`] applies the three
//! cleaning rules and [`crop_table`] moves a record into its table-local
//! frame before label generation.

mod clean;
mod crop;
mod grids;
mod source;

use core::fmt;

use thiserror::Error;

use crate::html::HtmlError;
use crate::model::ValidationError;

pub use clean::{clean, clean_one, CleanEvent, CleanOutput, CleanRule};
pub use crop::{crop_table, uncrop_table, Cropped, CROP_TOLERANCE};
pub use grids::{derive_grids, fill_missing_boxes};
pub use source::{
    unify, GridCell, GridRecord, GridSlot, PubTabNetCell, PubTabNetHtml, PubTabNetRecord, SourceKind,
    SourceRecord, SpotCell, SpottingRecord, TokenList,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Row,
    Col,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Row => "row",
            Axis::Col => "column",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("image size must be positive, got {0}x{1}")]
    BadImageSize(u32, u32),
    #[error("table box has no area")]
    DegenerateTableBox,
    #[error("structure: {0}")]
    Html(#[from] HtmlError),
    #[error("structure has {expected} cells but {found} cell records were given")]
    CellCount { expected: usize, found: usize },
    #[error("row {row} has {found} cells, expected {expected}")]
    NotRectangular { row: usize, found: usize, expected: usize },
    #[error("layout: {0}")]
    Layout(#[from] ValidationError),
    #[error("no cell box constrains {axis} {index}")]
    NoExtent { axis: Axis, index: usize },
}
