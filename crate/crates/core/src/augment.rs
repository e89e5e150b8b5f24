//! Sub-table sampling.
//!
//! A sub-table is a contiguous logical rectangle `[r1..=r2] x [c1..=c2]` of a
//! source table with more than four rows and more than four columns that
//! contains at least one span cell. Tables drawn without ruling lines only
//! yield regions anchored at the first row and column. Cells cut by the
//! region boundary are never truncated: the region shrinks until it cuts
//! nothing.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::BBox;
use crate::ingest::crop_table;
use crate::model::{Cell, GridEntry, LogicalCoords, Provenance, TableAnnotation};

/// Regions must have more than this many rows and columns.
pub const MIN_EXCLUSIVE: usize = 4;
/// Proposals tried per sample before giving up.
pub const MAX_ATTEMPTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentConfig {
    pub samples_per_table: usize,
    pub rng_seed: u64,
}

/// Inclusive logical region `[r1, r2, c1, c2]`.
pub type Region = [usize; 4];

/// Per-table seed: the run seed xor the FNV-1a hash of the table id.
pub fn table_seed(seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

/// Draw up to `cfg.samples_per_table` sub-tables. Sample `k` is named
/// `"{id}#aug{k}"`; failed draws are skipped, so fewer may be returned.
pub fn augment_table(ann: &TableAnnotation, cfg: &AugmentConfig) -> Vec<TableAnnotation> {
    let mut rng = ChaCha8Rng::seed_from_u64(table_seed(cfg.rng_seed, &ann.id));
    let mut out = Vec::new();
    for k in 0..cfg.samples_per_table {
        if let Some(mut sub) = sample_subtable(ann, &mut rng) {
            sub.id = format!("{}#aug{k}", ann.id);
            out.push(sub);
        }
    }
    out
}

/// One constrained sub-table, or `None` when the table is too small, invalid,
/// has no grid slots, or no proposal survived within [`MAX_ATTEMPTS`].
pub fn sample_subtable(ann: &TableAnnotation, rng: &mut impl Rng) -> Option<TableAnnotation> {
    let (rows, cols) = ann.dims();
    if rows <= MIN_EXCLUSIVE || cols <= MIN_EXCLUSIVE || ann.grids.is_empty() || ann.validate().is_err() {
        return None;
    }
    ann.span_cells().next()?;
    (0..MAX_ATTEMPTS).find_map(|_| {
        let region = propose(rows, cols, ann.wireless, rng);
        let region = uncut(&ann.cells, region, ann.wireless)?;
        accept(&ann.cells, region).then(|| extract(ann, region)).flatten()
    })
}

fn propose(rows: usize, cols: usize, wireless: bool, rng: &mut impl Rng) -> Region {
    let (r1, r2) = span(rows, wireless, rng);
    let (c1, c2) = span(cols, wireless, rng);
    [r1, r2, c1, c2]
}

fn span(n: usize, anchored: bool, rng: &mut impl Rng) -> (usize, usize) {
    let lo = if anchored { 0 } else { rng.random_range(0..n - MIN_EXCLUSIVE) };
    (lo, rng.random_range(lo + MIN_EXCLUSIVE..n))
}

/// Shrink the region until every cell is either fully inside or fully
/// outside. A cut cell is pushed out by moving whichever single edge keeps
/// the largest region. An anchored region never moves its first row or column.
pub fn uncut(cells: &[Cell], mut region: Region, anchored: bool) -> Option<Region> {
    loop {
        let [r1, r2, c1, c2] = region;
        let inside = LogicalCoords::new(r1, r2, c1, c2);
        let cut = cells.iter().map(|c| &c.logical).find(|l| l.intersects(&inside) && !contains(&inside, l));
        let Some(l) = cut else { return Some(region) };
        let moves = [
            (!anchored).then_some([l.end_row + 1, r2, c1, c2]),
            l.start_row.checked_sub(1).map(|e| [r1, e, c1, c2]),
            (!anchored).then_some([r1, r2, l.end_col + 1, c2]),
            l.start_col.checked_sub(1).map(|e| [r1, r2, c1, e]),
        ];
        let area = |[a, b, c, d]: Region| if a > b || c > d { 0 } else { (b - a + 1) * (d - c + 1) };
        let best = moves.into_iter().flatten().filter(|m| area(*m) > 0).max_by(|a, b| area(*a).cmp(&area(*b)).then(b.cmp(a)))?;
        region = best;
    }
}

fn contains(outer: &LogicalCoords, l: &LogicalCoords) -> bool {
    outer.start_row <= l.start_row && l.end_row <= outer.end_row && outer.start_col <= l.start_col && l.end_col <= outer.end_col
}

fn accept(cells: &[Cell], [r1, r2, c1, c2]: Region) -> bool {
    let inside = LogicalCoords::new(r1, r2, c1, c2);
    r2 - r1 + 1 > MIN_EXCLUSIVE
        && c2 - c1 + 1 > MIN_EXCLUSIVE
        && cells.iter().any(|c| c.logical.is_span() && contains(&inside, &c.logical))
}

fn extract(ann: &TableAnnotation, region: Region) -> Option<TableAnnotation> {
    let [r1, r2, c1, c2] = region;
    let inside = LogicalCoords::new(r1, r2, c1, c2);
    let mut kept: Vec<&Cell> = ann.cells.iter().filter(|c| contains(&inside, &c.logical)).collect();
    kept.sort_by_key(|c| c.id);
    let new_id = |old: usize| kept.iter().position(|c| c.id == old);
    let cells: Vec<Cell> = kept
        .iter()
        .enumerate()
        .map(|(id, c)| Cell {
            id,
            bbox: c.bbox,
            logical: LogicalCoords::new(c.logical.start_row - r1, c.logical.end_row - r1, c.logical.start_col - c1, c.logical.end_col - c1),
            content: c.content.clone(),
        })
        .collect();
    let mut grids = Vec::new();
    let mut extent: Option<BBox> = None;
    for g in ann.grids.iter().filter(|g| inside.covers(g.row, g.col)) {
        grids.push(GridEntry {
            cell_id: new_id(g.cell_id)?,
            row: g.row - r1,
            col: g.col - c1,
            bbox: g.bbox,
        });
        extent = Some(extent.map_or(g.bbox, |e| e.union(&g.bbox)));
    }
    let sub = TableAnnotation {
        id: ann.id.clone(),
        image_size: ann.image_size,
        table_box: extent?,
        cells,
        grids,
        wireless: ann.wireless,
        provenance: Some(Provenance {
            augmented_from: ann.id.clone(),
            region,
        }),
    };
    let cropped = crop_table(&sub).ok()?.ann;
    cropped.validate().ok()?;
    Some(cropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_util::{on_lines, random_layout, random_lines, uniform};
    use alloc::string::String;

    fn fixture(rng: &mut ChaCha8Rng, i: usize) -> TableAnnotation {
        let (rows, cols) = (rng.random_range(5..12), rng.random_range(5..12));
        let layout = random_layout(rng, rows, cols, 0.25);
        let mut ann = on_lines(&layout, &random_lines(rng, cols), &random_lines(rng, rows));
        ann.id = format!("fx{i}");
        ann.wireless = i.is_multiple_of(3);
        ann
    }

    /// Constraint checker that re-derives everything from the source table.
    fn check(src: &TableAnnotation, sub: &TableAnnotation) -> Result<(), String> {
        sub.validate().map_err(|e| format!("invalid: {e}"))?;
        let p = sub.provenance.as_ref().ok_or("no provenance")?;
        let [r1, r2, c1, c2] = p.region;
        if p.augmented_from != src.id {
            return Err("wrong source".into());
        }
        let (rows, cols) = sub.dims();
        if (rows, cols) != (r2 - r1 + 1, c2 - c1 + 1) || rows <= 4 || cols <= 4 {
            return Err(format!("size {rows}x{cols}"));
        }
        if src.wireless && (r1, c1) != (0, 0) {
            return Err(format!("wireless origin ({r1}, {c1})"));
        }
        let mut spans = 0;
        for c in &sub.cells {
            let l = c.logical;
            let orig = src
                .cells
                .iter()
                .find(|o| o.logical == LogicalCoords::new(l.start_row + r1, l.end_row + r1, l.start_col + c1, l.end_col + c1))
                .ok_or("cell not in source")?;
            if orig.content != c.content {
                return Err("content changed".into());
            }
            if l.rowspan() > 1 || l.colspan() > 1 {
                spans += 1;
            }
        }
        if spans == 0 {
            return Err("no span cell".into());
        }
        Ok(())
    }

    #[test]
    fn four_by_four_yields_nothing() {
        let mut layout: Vec<LogicalCoords> = (0..4).flat_map(|r| (1..4).map(move |c| LogicalCoords::slot(r, c))).collect();
        layout.insert(0, LogicalCoords::new(0, 3, 0, 0));
        layout.sort_by_key(|l| l.order_key());
        let lines: Vec<f64> = (0..=4).map(|i| i as f64 / 4.0).collect();
        let ann = on_lines(&layout, &lines, &lines);
        ann.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_subtable(&ann, &mut rng).is_none());
    }

    #[test]
    fn no_span_cells_yields_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_subtable(&uniform(8, 8), &mut rng).is_none());
    }

    #[test]
    fn wireless_six_by_six() {
        let mut layout = Vec::new();
        for r in 0..6 {
            for c in 0..6 {
                if (r, c) == (3, 2) {
                    continue;
                }
                layout.push(if (r, c) == (2, 2) { LogicalCoords::new(2, 3, 2, 2) } else { LogicalCoords::slot(r, c) });
            }
        }
        let lines: Vec<f64> = (0..=6).map(|i| i as f64 / 6.0).collect();
        let mut ann = on_lines(&layout, &lines, &lines);
        ann.wireless = true;
        ann.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut seen = 0;
        for _ in 0..50 {
            if let Some(sub) = sample_subtable(&ann, &mut rng) {
                let [r1, r2, c1, _] = sub.provenance.as_ref().unwrap().region;
                assert_eq!((r1, c1), (0, 0));
                assert!(r2 >= 3);
                check(&ann, &sub).unwrap();
                seen += 1;
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn uncut_shrinks_past_spans() {
        let cells: Vec<Cell> = [LogicalCoords::new(0, 2, 0, 0), LogicalCoords::new(0, 0, 1, 1)]
            .iter()
            .enumerate()
            .map(|(id, l)| Cell { id, bbox: None, logical: *l, content: String::new() })
            .collect();
        assert_eq!(uncut(&cells, [1, 2, 0, 1], false), Some([1, 2, 1, 1]));
        assert_eq!(uncut(&cells, [0, 1, 0, 0], false), None);
        assert_eq!(uncut(&cells, [1, 1, 0, 0], false), None);
        assert_eq!(uncut(&cells, [0, 0, 0, 1], false), Some([0, 0, 1, 1]));
        assert_eq!(uncut(&cells, [0, 0, 0, 1], true), None);
    }

    #[test]
    fn seeded_samples_pass_checker() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let tables: Vec<TableAnnotation> = (0..20).map(|i| fixture(&mut rng, i)).collect();
        let cfg = AugmentConfig {
            samples_per_table: 50,
            rng_seed: 4,
        };
        let mut total = 0;
        for t in &tables {
            let subs = augment_table(t, &cfg);
            assert_eq!(subs, augment_table(t, &cfg));
            for s in &subs {
                check(t, s).unwrap_or_else(|e| panic!("{}: {e}", s.id));
            }
            total += subs.len();
        }
        assert!(total > 200, "only {total} samples");
    }

    #[test]
    fn seeds_differ_per_table() {
        assert_ne!(table_seed(1, "a"), table_seed(1, "b"));
        assert_eq!(table_seed(0, ""), 0xcbf2_9ce4_8422_2325);
    }
}
