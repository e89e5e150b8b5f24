//! Moving an annotation into the coordinate frame of its table crop.

use alloc::vec::Vec;

use crate::geometry::BBox;
use crate::math;
use crate::model::TableAnnotation;

use super::IngestError;

/// How far (in table-local units) a box may stick out of the table before it
/// is reported as clipped.
pub const CROP_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub struct Cropped {
    pub ann: TableAnnotation,
    /// Ids of cells whose boxes left the table by more than the tolerance.
    pub clipped_cells: Vec<usize>,
    /// `(row, col)` of grid slots that left the table by more than the tolerance.
    pub clipped_slots: Vec<(usize, usize)>,
}

impl Cropped {
    pub fn is_clean(&self) -> bool {
        self.clipped_cells.is_empty() && self.clipped_slots.is_empty()
    }
}

/// Re-express every box relative to the table box; the table box becomes the
/// unit square and the image size becomes the crop's pixel size. Boxes are
/// clipped to the crop.
pub fn crop_table(ann: &TableAnnotation) -> Result<Cropped, IngestError> {
    let tb = ann.table_box;
    if !tb.is_valid() || tb.width() <= 0.0 || tb.height() <= 0.0 {
        return Err(IngestError::DegenerateTableBox);
    }
    let local = |b: &BBox| -> (BBox, bool) {
        let t = b.to_frame(&tb);
        let out = t.to_array().iter().any(|&v| !(-CROP_TOLERANCE..=1.0 + CROP_TOLERANCE).contains(&v));
        (t.clipped(), out)
    };
    let mut out = ann.clone();
    let mut clipped_cells = Vec::new();
    let mut clipped_slots = Vec::new();
    for c in &mut out.cells {
        if let Some(b) = &c.bbox {
            let (t, flagged) = local(b);
            c.bbox = Some(t);
            if flagged {
                clipped_cells.push(c.id);
            }
        }
    }
    for g in &mut out.grids {
        let (t, flagged) = local(&g.bbox);
        g.bbox = t;
        if flagged {
            clipped_slots.push((g.row, g.col));
        }
    }
    let (w, h) = ann.image_size;
    out.image_size = (
        (math::round(tb.width() * w as f64) as u32).max(1),
        (math::round(tb.height() * h as f64) as u32).max(1),
    );
    out.table_box = BBox::UNIT;
    Ok(Cropped {
        ann: out,
        clipped_cells,
        clipped_slots,
    })
}

/// Inverse of [`crop_table`] for boxes that were not clipped.
pub fn uncrop_table(local: &TableAnnotation, table_box: BBox, image_size: (u32, u32)) -> TableAnnotation {
    let mut out = local.clone();
    for c in &mut out.cells {
        c.bbox = c.bbox.map(|b| b.from_frame(&table_box));
    }
    for g in &mut out.grids {
        g.bbox = g.bbox.from_frame(&table_box);
    }
    out.table_box = table_box;
    out.image_size = image_size;
    out
}
