//! Grid slot geometry from cell boxes.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::BBox;
use crate::model::{slot_owners, Cell, GridEntry, LogicalCoords, TableAnnotation, ValidationError};

use super::{Axis, IngestError};

/// Split the cells' boxes into one box per logical slot.
///
/// Each row gets a vertical extent: the union of the boxes of cells that
/// cover only that row, or of every covering cell when the row holds nothing
/// but span cells. Adjacent extents are separated at the midpoint between one
/// extent's end and the next one's start (kept monotone), which partitions the
/// table into row bands. Columns work the same way. Slot `(r, c)` is the
/// intersection of row band `r` and column band `c` and belongs to the cell
/// covering it. Cells without a box are ignored when measuring extents.
pub fn derive_grids(cells: &[Cell]) -> Result<Vec<GridEntry>, IngestError> {
    let owners = slot_owners(cells)?;
    if let Some((row, col)) = owners.first_hole() {
        return Err(ValidationError::Hole { row, col }.into());
    }
    let row_ext = extents(cells, owners.rows, Axis::Row)?;
    let col_ext = extents(cells, owners.cols, Axis::Col)?;
    let row_bands = bands(&row_ext);
    let col_bands = bands(&col_ext);
    let mut out = Vec::with_capacity(owners.rows * owners.cols);
    for (r, &(y1, y2)) in row_bands.iter().enumerate() {
        for (c, &(x1, x2)) in col_bands.iter().enumerate() {
            let owner = owners.get(r, c).expect("layout has no holes");
            out.push(GridEntry {
                cell_id: cells[owner].id,
                row: r,
                col: c,
                bbox: BBox::new(x1, y1, x2, y2),
            });
        }
    }
    Ok(out)
}

/// Give every box-less cell the union of its grid slots.
pub fn fill_missing_boxes(ann: &mut TableAnnotation) {
    for cell in ann.cells.iter_mut().filter(|c| c.bbox.is_none()) {
        cell.bbox = ann
            .grids
            .iter()
            .filter(|g| g.cell_id == cell.id)
            .map(|g| g.bbox)
            .reduce(|a, b| a.union(&b));
    }
}

fn extents(cells: &[Cell], n: usize, axis: Axis) -> Result<Vec<(f64, f64)>, IngestError> {
    let covers = |l: &LogicalCoords, i: usize| match axis {
        Axis::Row => l.covers_row(i),
        Axis::Col => l.covers_col(i),
    };
    let single = |l: &LogicalCoords| match axis {
        Axis::Row => l.rowspan() == 1,
        Axis::Col => l.colspan() == 1,
    };
    let range = |b: &BBox| match axis {
        Axis::Row => (b.y1, b.y2),
        Axis::Col => (b.x1, b.x2),
    };
    let mut single_ext: Vec<Option<(f64, f64)>> = vec![None; n];
    let mut any_ext: Vec<Option<(f64, f64)>> = vec![None; n];
    let merge = |slot: &mut Option<(f64, f64)>, (a, b): (f64, f64)| {
        *slot = Some(slot.map_or((a, b), |(x, y)| (x.min(a), y.max(b))));
    };
    for cell in cells {
        let Some(b) = &cell.bbox else { continue };
        for i in 0..n {
            if covers(&cell.logical, i) {
                merge(&mut any_ext[i], range(b));
                if single(&cell.logical) {
                    merge(&mut single_ext[i], range(b));
                }
            }
        }
    }
    (0..n)
        .map(|i| single_ext[i].or(any_ext[i]).ok_or(IngestError::NoExtent { axis, index: i }))
        .collect()
}

fn bands(ext: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = ext.len();
    let mut edges = Vec::with_capacity(n + 1);
    let mut prev = ext[0].0;
    edges.push(prev);
    for i in 0..n - 1 {
        let sep = ((ext[i].1 + ext[i + 1].0) * 0.5).max(prev);
        edges.push(sep);
        prev = sep;
    }
    edges.push(ext[n - 1].1.max(prev));
    edges.windows(2).map(|w| (w[0], w[1])).collect()
}
