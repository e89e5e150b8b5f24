//! The unified table annotation record and its structural validation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;

/// Upper bound on `rows * cols` accepted by validation.
pub const MAX_GRID_SLOTS: usize = 1 << 22;

/// Inclusive, 0-based row and column ranges occupied by a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LogicalCoords {
    pub start_row: usize,
    pub end_row: usize,
    pub start_col: usize,
    pub end_col: usize,
}

impl LogicalCoords {
    pub const fn new(start_row: usize, end_row: usize, start_col: usize, end_col: usize) -> Self {
        LogicalCoords {
            start_row,
            end_row,
            start_col,
            end_col,
        }
    }

    /// A single grid slot.
    pub const fn slot(row: usize, col: usize) -> Self {
        LogicalCoords::new(row, row, col, col)
    }

    pub fn is_valid(&self) -> bool {
        self.start_row <= self.end_row && self.start_col <= self.end_col
    }

    pub fn rowspan(&self) -> usize {
        self.end_row - self.start_row + 1
    }

    pub fn colspan(&self) -> usize {
        self.end_col - self.start_col + 1
    }

    pub fn is_span(&self) -> bool {
        self.end_row > self.start_row || self.end_col > self.start_col
    }

    pub fn covers(&self, row: usize, col: usize) -> bool {
        self.covers_row(row) && self.covers_col(col)
    }

    pub fn covers_row(&self, row: usize) -> bool {
        (self.start_row..=self.end_row).contains(&row)
    }

    pub fn covers_col(&self, col: usize) -> bool {
        (self.start_col..=self.end_col).contains(&col)
    }

    pub fn rows_intersect(&self, other: &LogicalCoords) -> bool {
        self.start_row <= other.end_row && other.start_row <= self.end_row
    }

    pub fn cols_intersect(&self, other: &LogicalCoords) -> bool {
        self.start_col <= other.end_col && other.start_col <= self.end_col
    }

    pub fn intersects(&self, other: &LogicalCoords) -> bool {
        self.rows_intersect(other) && self.cols_intersect(other)
    }

    /// Row-major reading key.
    pub fn order_key(&self) -> (usize, usize) {
        (self.start_row, self.start_col)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    pub logical: LogicalCoords,
    /// Cell text as an HTML fragment: entities stay escaped and inline
    /// markup such as `<b>` is kept verbatim.
    #[serde(default)]
    pub content: String,
}

/// One unit slot of the table grid after splitting merged cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub cell_id: usize,
    pub row: usize,
    pub col: usize,
    pub bbox: BBox,
}

/// Where an augmented record came from: source id and the inclusive
/// logical region `[r1, r2, c1, c2]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub augmented_from: String,
    pub region: [usize; 4],
}

/// One table: image size in pixels, the table box, cells and grid slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableAnnotation {
    #[serde(default)]
    pub id: String,
    pub image_size: (u32, u32),
    pub table_box: BBox,
    pub cells: Vec<Cell>,
    #[serde(default)]
    pub grids: Vec<GridEntry>,
    /// Table drawn without ruling lines.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub wireless: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("cell ids are not unique and dense: expected {expected}, found {found}")]
    BadIds { expected: usize, found: usize },
    #[error("cell {cell}: start index after end index")]
    InvalidLogical { cell: usize },
    #[error("cell {cell}: box outside the unit square or corners unordered")]
    InvalidCellBox { cell: usize },
    #[error("table box outside the unit square or corners unordered")]
    InvalidTableBox,
    #[error("overlapping logical coordinates: cells {a} and {b} share slot ({row}, {col})")]
    Overlap {
        a: usize,
        b: usize,
        row: usize,
        col: usize,
    },
    #[error("logical layout is not a full rectangle: slot ({row}, {col}) has no cell")]
    Hole { row: usize, col: usize },
    #[error("layout of {rows}x{cols} exceeds the slot limit")]
    TooLarge { rows: usize, cols: usize },
    #[error("grid slot ({row}, {col}) is not assigned to its cell")]
    GridUnassigned { row: usize, col: usize },
    #[error("grid slot ({row}, {col}) is assigned more than once")]
    GridDuplicate { row: usize, col: usize },
    #[error("grid slot ({row}, {col}) references cell {cell_id} which does not cover it")]
    GridMismatch {
        row: usize,
        col: usize,
        cell_id: usize,
    },
    #[error("grid slot ({row}, {col}) has an invalid box")]
    GridInvalidBox { row: usize, col: usize },
    #[error("grids required")]
    GridsRequired,
}

impl ValidationError {
    /// Whether this error is a layout overlap.
    pub fn is_overlap(&self) -> bool {
        matches!(self, ValidationError::Overlap { .. })
    }

    /// Whether this error concerns grid slot assignment (including layout holes).
    pub fn is_incomplete_grid(&self) -> bool {
        matches!(
            self,
            ValidationError::Hole { .. }
                | ValidationError::GridUnassigned { .. }
                | ValidationError::GridDuplicate { .. }
                | ValidationError::GridMismatch { .. }
                | ValidationError::GridsRequired
        )
    }
}

/// Owner map of the logical grid: `owners[r][c]` is the index (into `cells`)
/// of the cell covering slot `(r, c)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotOwners {
    pub rows: usize,
    pub cols: usize,
    owners: Vec<Option<usize>>,
}

impl SlotOwners {
    pub fn get(&self, row: usize, col: usize) -> Option<usize> {
        self.owners[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[Option<usize>] {
        &self.owners[row * self.cols..(row + 1) * self.cols]
    }

    /// First uncovered slot in row-major order.
    pub fn first_hole(&self) -> Option<(usize, usize)> {
        self.owners
            .iter()
            .position(Option::is_none)
            .map(|i| (i / self.cols, i % self.cols))
    }
}

/// Build the owner map, failing on the first overlap (in cell order).
pub fn slot_owners(cells: &[Cell]) -> Result<SlotOwners, ValidationError> {
    let (rows, cols) = layout_dims(cells);
    if rows.saturating_mul(cols) > MAX_GRID_SLOTS {
        return Err(ValidationError::TooLarge { rows, cols });
    }
    let mut owners: Vec<Option<usize>> = vec![None; rows * cols];
    for (i, cell) in cells.iter().enumerate() {
        let l = &cell.logical;
        if !l.is_valid() {
            return Err(ValidationError::InvalidLogical { cell: cell.id });
        }
        for r in l.start_row..=l.end_row {
            for c in l.start_col..=l.end_col {
                let slot = &mut owners[r * cols + c];
                if let Some(prev) = *slot {
                    return Err(ValidationError::Overlap {
                        a: cells[prev].id,
                        b: cell.id,
                        row: r,
                        col: c,
                    });
                }
                *slot = Some(i);
            }
        }
    }
    Ok(SlotOwners { rows, cols, owners })
}

/// `(rows, cols)` spanned by the cells' logical coordinates.
pub fn layout_dims(cells: &[Cell]) -> (usize, usize) {
    let rows = cells.iter().map(|c| c.logical.end_row + 1).max().unwrap_or(0);
    let cols = cells.iter().map(|c| c.logical.end_col + 1).max().unwrap_or(0);
    (rows, cols)
}

/// Per-row and per-column extents of the table grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RowColLines {
    pub rows: Vec<BBox>,
    pub cols: Vec<BBox>,
}

impl TableAnnotation {
    /// A box-free annotation holding only logical structure and contents.
    pub fn from_cells(cells: Vec<Cell>) -> Self {
        TableAnnotation {
            id: String::new(),
            image_size: (0, 0),
            table_box: BBox::UNIT,
            cells,
            grids: Vec::new(),
            wireless: false,
            provenance: None,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        layout_dims(&self.cells)
    }

    pub fn cell(&self, id: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.id == id)
    }

    /// Cells in row-major logical order.
    pub fn cells_in_order(&self) -> Vec<&Cell> {
        let mut v: Vec<&Cell> = self.cells.iter().collect();
        v.sort_by_key(|c| c.logical.order_key());
        v
    }

    pub fn span_cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.logical.is_span())
    }

    /// Logical structure checks: dense ids, ordered ranges, no overlaps and a
    /// full rectangular layout.
    pub fn validate_layout(&self) -> Result<SlotOwners, ValidationError> {
        let n = self.cells.len();
        let mut seen = vec![false; n];
        for c in &self.cells {
            if c.id >= n || seen[c.id] {
                return Err(ValidationError::BadIds {
                    expected: n,
                    found: c.id,
                });
            }
            seen[c.id] = true;
        }
        let owners = slot_owners(&self.cells)?;
        if let Some((row, col)) = owners.first_hole() {
            return Err(ValidationError::Hole { row, col });
        }
        Ok(owners)
    }

    /// Full validation: layout, boxes and (when present) grid completeness.
    pub fn validate(&self) -> Result<(), ValidationError> {
        if !self.table_box.is_valid() {
            return Err(ValidationError::InvalidTableBox);
        }
        let owners = self.validate_layout()?;
        for c in &self.cells {
            if let Some(b) = &c.bbox {
                if !b.is_valid() {
                    return Err(ValidationError::InvalidCellBox { cell: c.id });
                }
            }
        }
        if !self.grids.is_empty() {
            self.check_grids(&owners)?;
        }
        Ok(())
    }

    /// Every slot has exactly one grid entry, pointing at the cell that covers it.
    pub fn check_grids(&self, owners: &SlotOwners) -> Result<(), ValidationError> {
        let mut assigned = vec![false; owners.rows * owners.cols];
        for g in &self.grids {
            if g.row >= owners.rows || g.col >= owners.cols {
                return Err(ValidationError::GridMismatch {
                    row: g.row,
                    col: g.col,
                    cell_id: g.cell_id,
                });
            }
            let owner = owners.get(g.row, g.col).map(|i| self.cells[i].id);
            if owner != Some(g.cell_id) {
                return Err(ValidationError::GridMismatch {
                    row: g.row,
                    col: g.col,
                    cell_id: g.cell_id,
                });
            }
            if !g.bbox.is_valid() {
                return Err(ValidationError::GridInvalidBox {
                    row: g.row,
                    col: g.col,
                });
            }
            let slot = &mut assigned[g.row * owners.cols + g.col];
            if *slot {
                return Err(ValidationError::GridDuplicate {
                    row: g.row,
                    col: g.col,
                });
            }
            *slot = true;
        }
        if let Some(i) = assigned.iter().position(|a| !a) {
            return Err(ValidationError::GridUnassigned {
                row: i / owners.cols,
                col: i % owners.cols,
            });
        }
        Ok(())
    }

    /// Union of grid-slot boxes per row index and per column index.
    pub fn derive_row_col_lines(&self) -> Result<RowColLines, ValidationError> {
        if self.grids.is_empty() {
            return Err(ValidationError::GridsRequired);
        }
        let rows = self.grids.iter().map(|g| g.row + 1).max().unwrap_or(0);
        let cols = self.grids.iter().map(|g| g.col + 1).max().unwrap_or(0);
        let mut row_ext: Vec<Option<BBox>> = vec![None; rows];
        let mut col_ext: Vec<Option<BBox>> = vec![None; cols];
        for g in &self.grids {
            let merge = |slot: &mut Option<BBox>| {
                *slot = Some(slot.map_or(g.bbox, |b| b.union(&g.bbox)));
            };
            merge(&mut row_ext[g.row]);
            merge(&mut col_ext[g.col]);
        }
        let finish = |v: Vec<Option<BBox>>| -> Result<Vec<BBox>, ValidationError> {
            v.into_iter()
                .collect::<Option<Vec<_>>>()
                .ok_or(ValidationError::GridsRequired)
        };
        Ok(RowColLines {
            rows: finish(row_ext)?,
            cols: finish(col_ext)?,
        })
    }
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;
    use alloc::format;

    pub fn cell(id: usize, r0: usize, r1: usize, c0: usize, c1: usize, text: &str) -> Cell {
        Cell {
            id,
            bbox: None,
            logical: LogicalCoords::new(r0, r1, c0, c1),
            content: text.into(),
        }
    }

    /// Uniform `rows x cols` table over the unit square with boxes and grids.
    pub fn uniform(rows: usize, cols: usize) -> TableAnnotation {
        let mut cells = Vec::new();
        let mut grids = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let id = r * cols + c;
                let b = BBox::new(
                    c as f64 / cols as f64,
                    r as f64 / rows as f64,
                    (c + 1) as f64 / cols as f64,
                    (r + 1) as f64 / rows as f64,
                );
                cells.push(Cell {
                    id,
                    bbox: Some(b),
                    logical: LogicalCoords::slot(r, c),
                    content: format!("r{r}c{c}"),
                });
                grids.push(GridEntry {
                    cell_id: id,
                    row: r,
                    col: c,
                    bbox: b,
                });
            }
        }
        TableAnnotation {
            id: format!("uniform-{rows}x{cols}"),
            image_size: (100, 100),
            table_box: BBox::UNIT,
            cells,
            grids,
            wireless: false,
            provenance: None,
        }
    }
    /// Random span layout covering `rows x cols`; each free slot starts a span
    /// cell with probability `p_span`.
    pub fn random_layout(rng: &mut impl rand::Rng, rows: usize, cols: usize, p_span: f64) -> Vec<LogicalCoords> {
        let mut taken = vec![vec![false; cols]; rows];
        let mut out = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if taken[r][c] {
                    continue;
                }
                let mut h = 1;
                let mut w = 1;
                if rng.random_bool(p_span) {
                    h = rng.random_range(1..=(rows - r).min(3));
                    w = rng.random_range(1..=(cols - c).min(3));
                    // shrink width until the footprint is free
                    while (0..h).any(|dr| (c..c + w).any(|cc| taken[r + dr][cc])) {
                        if w > 1 {
                            w -= 1;
                        } else {
                            h -= 1;
                        }
                    }
                }
                for row in taken.iter_mut().skip(r).take(h) {
                    row[c..c + w].iter_mut().for_each(|t| *t = true);
                }
                out.push(LogicalCoords::new(r, r + h - 1, c, c + w - 1));
            }
        }
        out
    }

    /// `n + 1` strictly increasing positions in `[0, 1]`.
    pub fn random_lines(rng: &mut impl rand::Rng, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..=n).map(|_| rng.random_range(1..1000) as f64).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        while v.len() < n + 1 {
            let last = *v.last().unwrap_or(&0.0);
            v.push(last + 1.0);
        }
        let (lo, hi) = (v[0], v[n]);
        v.iter().map(|x| (x - lo) / (hi - lo)).collect()
    }

    /// Annotation whose cells and grid slots sit exactly on the column lines
    /// `xs` and row lines `ys`.
    pub fn on_lines(layout: &[LogicalCoords], xs: &[f64], ys: &[f64]) -> TableAnnotation {
        let cells: Vec<Cell> = layout
            .iter()
            .enumerate()
            .map(|(id, l)| Cell {
                id,
                bbox: Some(BBox::new(xs[l.start_col], ys[l.start_row], xs[l.end_col + 1], ys[l.end_row + 1])),
                logical: *l,
                content: format!("c{id}"),
            })
            .collect();
        let mut grids = Vec::new();
        for r in 0..ys.len() - 1 {
            for c in 0..xs.len() - 1 {
                let id = layout.iter().position(|l| l.covers(r, c)).unwrap();
                grids.push(GridEntry {
                    cell_id: id,
                    row: r,
                    col: c,
                    bbox: BBox::new(xs[c], ys[r], xs[c + 1], ys[r + 1]),
                });
            }
        }
        TableAnnotation {
            id: String::from("lines"),
            image_size: (1000, 1000),
            table_box: BBox::UNIT,
            cells,
            grids,
            wireless: false,
            provenance: None,
        }
    }
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;

    #[test]
    fn span_predicate() {
        assert!(!LogicalCoords::slot(1, 1).is_span());
        assert!(LogicalCoords::new(0, 1, 0, 0).is_span());
        assert!(LogicalCoords::new(0, 0, 2, 3).is_span());
    }

    #[test]
    fn validate_accepts_uniform() {
        uniform(3, 4).validate().unwrap();
    }

    #[test]
    fn validate_rejects_overlap() {
        let t = TableAnnotation::from_cells(vec![
            cell(0, 0, 1, 0, 0, "a"),
            cell(1, 1, 1, 0, 1, "b"),
            cell(2, 0, 0, 1, 1, "c"),
        ]);
        let e = t.validate().unwrap_err();
        assert!(e.is_overlap(), "{e:?}");
    }

    #[test]
    fn validate_rejects_hole_and_bad_ids() {
        let t = TableAnnotation::from_cells(vec![cell(0, 0, 0, 0, 0, ""), cell(1, 1, 1, 1, 1, "")]);
        assert_eq!(t.validate(), Err(ValidationError::Hole { row: 0, col: 1 }));
        let t = TableAnnotation::from_cells(vec![cell(0, 0, 0, 0, 0, ""), cell(0, 0, 0, 1, 1, "")]);
        assert!(matches!(t.validate(), Err(ValidationError::BadIds { .. })));
    }

    #[test]
    fn validate_grid_completeness() {
        let mut t = uniform(2, 2);
        t.grids.pop();
        assert_eq!(
            t.validate(),
            Err(ValidationError::GridUnassigned { row: 1, col: 1 })
        );
        let mut t = uniform(2, 2);
        t.grids[0].cell_id = 3;
        assert!(matches!(t.validate(), Err(ValidationError::GridMismatch { .. })));
    }

    #[test]
    fn row_col_lines_uniform() {
        let lines = uniform(2, 2).derive_row_col_lines().unwrap();
        assert_eq!(lines.rows, vec![BBox::new(0.0, 0.0, 1.0, 0.5), BBox::new(0.0, 0.5, 1.0, 1.0)]);
        assert_eq!(lines.cols, vec![BBox::new(0.0, 0.0, 0.5, 1.0), BBox::new(0.5, 0.0, 1.0, 1.0)]);
    }

    #[test]
    fn row_col_lines_single_cell() {
        let t = uniform(1, 1);
        let lines = t.derive_row_col_lines().unwrap();
        assert_eq!(lines.rows, vec![BBox::UNIT]);
        assert_eq!(lines.cols, vec![BBox::UNIT]);
    }

    #[test]
    fn row_col_lines_unequal_widths_match_brute_force_union() {
        let xs = [0.0, 0.1, 0.45, 1.0];
        let ys = [0.0, 0.3, 0.55, 0.9];
        let mut grids = Vec::new();
        let mut cells = Vec::new();
        for r in 0..3 {
            for c in 0..2 {
                // wobble slot edges so unions differ from a clean partition
                let b = BBox::new(xs[c] + 0.01 * r as f64, ys[r], xs[c + 1] - 0.005 * r as f64, ys[r + 1]);
                let id = r * 2 + c;
                cells.push(Cell { id, bbox: Some(b), logical: LogicalCoords::slot(r, c), content: String::new() });
                grids.push(GridEntry { cell_id: id, row: r, col: c, bbox: b });
            }
        }
        let mut t = TableAnnotation::from_cells(cells);
        t.grids = grids.clone();
        let lines = t.derive_row_col_lines().unwrap();
        for r in 0..3 {
            let mut u = [f64::MAX, f64::MAX, f64::MIN, f64::MIN];
            for g in grids.iter().filter(|g| g.row == r) {
                u[0] = u[0].min(g.bbox.x1);
                u[1] = u[1].min(g.bbox.y1);
                u[2] = u[2].max(g.bbox.x2);
                u[3] = u[3].max(g.bbox.y2);
            }
            assert_eq!(lines.rows[r].to_array(), u);
        }
        for c in 0..2 {
            let mut u = [f64::MAX, f64::MAX, f64::MIN, f64::MIN];
            for g in grids.iter().filter(|g| g.col == c) {
                u[0] = u[0].min(g.bbox.x1);
                u[1] = u[1].min(g.bbox.y1);
                u[2] = u[2].max(g.bbox.x2);
                u[3] = u[3].max(g.bbox.y2);
            }
            assert_eq!(lines.cols[c].to_array(), u);
        }
    }

    #[test]
    fn row_col_lines_require_grids() {
        let t = TableAnnotation::from_cells(vec![cell(0, 0, 0, 0, 0, "")]);
        assert_eq!(t.derive_row_col_lines(), Err(ValidationError::GridsRequired));
    }
}
