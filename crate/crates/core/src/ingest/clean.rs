//! The three cleaning rules.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::model::{slot_owners, GridEntry, SlotOwners, TableAnnotation, ValidationError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CleanRule {
    /// Not a readable annotation: ids not dense, boxes outside the image,
    /// inverted ranges. Checked before the three rules.
    InvalidRecord,
    /// Rule 1: two cells claim the same grid slot.
    OverlappingLogical,
    /// Rule 2: a slot without a cell, a slot without a grid entry, or a grid
    /// entry pointing at the wrong cell.
    IncompleteGrids,
    /// Rule 3: adjacent identical grid rows or columns, collapsed rather than dropped.
    RedundantGrids,
}

impl CleanRule {
    pub fn name(self) -> &'static str {
        match self {
            CleanRule::InvalidRecord => "invalid_record",
            CleanRule::OverlappingLogical => "overlapping_logical_coordinates",
            CleanRule::IncompleteGrids => "incomplete_table_grids",
            CleanRule::RedundantGrids => "redundant_table_grids",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CleanEvent {
    pub id: String,
    pub rule: CleanRule,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CleanOutput {
    pub kept: Vec<TableAnnotation>,
    pub dropped: Vec<CleanEvent>,
    /// Kept records whose redundant rows or columns were collapsed.
    pub merged: Vec<CleanEvent>,
}

/// Apply the cleaning rules to every record, preserving input order.
pub fn clean(anns: Vec<TableAnnotation>) -> CleanOutput {
    let mut out = CleanOutput::default();
    for ann in anns {
        match clean_one(ann) {
            Ok((kept, merged)) => {
                out.kept.push(kept);
                out.merged.extend(merged);
            }
            Err(ev) => out.dropped.push(ev),
        }
    }
    out
}

/// Judge a single record: `Err` when it is dropped, otherwise the kept record
/// and, when rows or columns were collapsed, the event describing it.
pub fn clean_one(ann: TableAnnotation) -> Result<(TableAnnotation, Option<CleanEvent>), CleanEvent> {
    let owners = match judge(&ann) {
        Ok(o) => o,
        Err((rule, detail)) => {
            return Err(CleanEvent {
                id: ann.id,
                rule,
                detail,
            })
        }
    };
    match collapse(&ann, &owners) {
        Some((merged, detail)) => {
            let ev = CleanEvent {
                id: merged.id.clone(),
                rule: CleanRule::RedundantGrids,
                detail,
            };
            Ok((merged, Some(ev)))
        }
        None => Ok((ann, None)),
    }
}

fn judge(ann: &TableAnnotation) -> Result<SlotOwners, (CleanRule, String)> {
    use CleanRule::*;
    if !ann.table_box.is_valid() {
        return Err((InvalidRecord, String::from("table box outside the image")));
    }
    let n = ann.cells.len();
    let mut seen = vec![false; n];
    for c in &ann.cells {
        if c.id >= n || seen[c.id] {
            return Err((InvalidRecord, format!("cell ids are not 0..{n}: found {}", c.id)));
        }
        seen[c.id] = true;
    }
    if n == 0 {
        return Err((InvalidRecord, String::from("no cells")));
    }
    let owners = slot_owners(&ann.cells).map_err(|e| match e {
        ValidationError::Overlap { a, b, row, col } => {
            (OverlappingLogical, format!("cells {a} and {b} both cover slot ({row}, {col})"))
        }
        other => (InvalidRecord, format!("{other}")),
    })?;
    if let Some((row, col)) = owners.first_hole() {
        return Err((IncompleteGrids, format!("slot ({row}, {col}) is covered by no cell")));
    }
    for c in &ann.cells {
        if c.bbox.is_some_and(|b| !b.is_valid()) {
            return Err((InvalidRecord, format!("cell {} has an invalid box", c.id)));
        }
    }
    if ann.grids.is_empty() {
        return Err((IncompleteGrids, String::from("no grid slots")));
    }
    ann.check_grids(&owners).map_err(|e| match e {
        ValidationError::GridInvalidBox { .. } => (InvalidRecord, format!("{e}")),
        _ => (IncompleteGrids, format!("{e}")),
    })?;
    Ok(owners)
}

/// Merge runs of identical adjacent rows and columns. Returns `None` when
/// nothing is redundant.
fn collapse(ann: &TableAnnotation, owners: &SlotOwners) -> Option<(TableAnnotation, String)> {
    let (rows, cols) = (owners.rows, owners.cols);
    let row_map = runs(rows, |r| owners.row(r) == owners.row(r - 1));
    let col_map = runs(cols, |c| (0..rows).all(|r| owners.get(r, c) == owners.get(r, c - 1)));
    let new_rows = row_map.last().map_or(0, |&r| r + 1);
    let new_cols = col_map.last().map_or(0, |&c| c + 1);
    if new_rows == rows && new_cols == cols {
        return None;
    }
    let mut out = ann.clone();
    for c in &mut out.cells {
        let l = &mut c.logical;
        l.start_row = row_map[l.start_row];
        l.end_row = row_map[l.end_row];
        l.start_col = col_map[l.start_col];
        l.end_col = col_map[l.end_col];
    }
    let mut slots: BTreeMap<(usize, usize), GridEntry> = BTreeMap::new();
    for g in &ann.grids {
        let key = (row_map[g.row], col_map[g.col]);
        slots
            .entry(key)
            .and_modify(|e| e.bbox = e.bbox.union(&g.bbox))
            .or_insert(GridEntry {
                cell_id: g.cell_id,
                row: key.0,
                col: key.1,
                bbox: g.bbox,
            });
    }
    out.grids = slots.into_values().collect();
    let detail = format!("rows {rows} -> {new_rows}, cols {cols} -> {new_cols}");
    Some((out, detail))
}

/// Index map that sends each position to its run, where position `i` joins
/// the run of `i - 1` when `same(i)` holds.
fn runs(n: usize, same: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut map = Vec::with_capacity(n);
    for i in 0..n {
        let k = match map.last() {
            Some(&prev) if same(i) => prev,
            Some(&prev) => prev + 1,
            None => 0,
        };
        map.push(k);
    }
    map
}
