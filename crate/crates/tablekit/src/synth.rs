//! Synthetic tables, their foreign-format renderings and labeled corruptions.
//!
//! Tables are drawn on integer pixel lines so every normalized coordinate is
//! an exact quotient and conversion back from a foreign record reproduces the
//! generated annotation exactly. Generated layouts are complete, have no two
//! identical adjacent rows or columns, and every row and column holds at
//! least one unspanned cell.

use std::fmt;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use tablekit_core::geometry::BBox;
use tablekit_core::ingest::{
    CleanRule, GridCell, GridRecord, GridSlot, PubTabNetCell, PubTabNetHtml, PubTabNetRecord, SourceKind, SourceRecord,
    SpotCell, SpottingRecord, TokenList,
};
use tablekit_core::{Cell, GridEntry, LogicalCoords, TableAnnotation};

const WORDS: [&str; 14] = [
    "Total", "2019", "12.5", "Revenue", "n/a", "R&D", "a &lt; b", "Net income", "%", "Q3", "0.07", "Assets", "x", "Mean (SD)",
];

/// Random layout, row-major by start slot, with spans of up to three rows and columns.
pub fn random_layout(rng: &mut impl Rng, rows: usize, cols: usize, p_span: f64) -> Vec<LogicalCoords> {
    let mut taken = vec![vec![false; cols]; rows];
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if taken[r][c] {
                continue;
            }
            let (mut h, mut w) = (1, 1);
            if rng.random_bool(p_span) {
                h = rng.random_range(1..=(rows - r).min(3));
                w = rng.random_range(1..=(cols - c).min(3));
                while (r..r + h).any(|rr| (c..c + w).any(|cc| taken[rr][cc])) {
                    if w > 1 {
                        w -= 1;
                    } else {
                        h -= 1;
                    }
                }
            }
            for row in &mut taken[r..r + h] {
                row[c..c + w].iter_mut().for_each(|t| *t = true);
            }
            out.push(LogicalCoords::new(r, r + h - 1, c, c + w - 1));
        }
    }
    out
}

fn owner_grid(layout: &[LogicalCoords], rows: usize, cols: usize) -> Vec<Vec<usize>> {
    let mut g = vec![vec![usize::MAX; cols]; rows];
    for (i, l) in layout.iter().enumerate() {
        for row in &mut g[l.start_row..=l.end_row] {
            row[l.start_col..=l.end_col].iter_mut().for_each(|s| *s = i);
        }
    }
    g
}

/// No identical adjacent rows or columns, and every row and column holds an
/// unspanned cell.
pub fn is_well_formed(layout: &[LogicalCoords], rows: usize, cols: usize) -> bool {
    let g = owner_grid(layout, rows, cols);
    let same_rows = (1..rows).any(|r| g[r] == g[r - 1]);
    let same_cols = (1..cols).any(|c| (0..rows).all(|r| g[r][c] == g[r][c - 1]));
    let pinned_rows = (0..rows).all(|r| layout.iter().any(|l| !l.is_span() && l.covers_row(r)));
    let pinned_cols = (0..cols).all(|c| layout.iter().any(|l| !l.is_span() && l.covers_col(c)));
    !same_rows && !same_cols && pinned_rows && pinned_cols
}

/// `n + 1` increasing pixel positions with a random margin before the first.
fn pixel_lines(rng: &mut impl Rng, n: usize, min: u32, max: u32) -> Vec<u32> {
    let mut v = vec![rng.random_range(0..=40)];
    for _ in 0..n {
        let last = *v.last().unwrap();
        v.push(last + rng.random_range(min..=max));
    }
    v
}

/// A synthetic table together with the pixel geometry it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTable {
    pub ann: TableAnnotation,
    /// Column and row lines in pixels.
    pub xs: Vec<u32>,
    pub ys: Vec<u32>,
}

impl SynthTable {
    fn px_box(&self, l: &LogicalCoords) -> [f64; 4] {
        [
            self.xs[l.start_col] as f64,
            self.ys[l.start_row] as f64,
            self.xs[l.end_col + 1] as f64,
            self.ys[l.end_row + 1] as f64,
        ]
    }

    fn table_px(&self) -> [f64; 4] {
        [self.xs[0] as f64, self.ys[0] as f64, *self.xs.last().unwrap() as f64, *self.ys.last().unwrap() as f64]
    }
}

fn norm(b: [f64; 4], (w, h): (u32, u32)) -> BBox {
    BBox::new(b[0] / w as f64, b[1] / h as f64, b[2] / w as f64, b[3] / h as f64)
}

/// A well-formed table of exactly `rows x cols` slots. Span cells are left
/// empty with probability 0.2; other cells always carry text.
pub fn random_table(rng: &mut impl Rng, id: &str, rows: usize, cols: usize, p_span: f64, wireless: bool) -> SynthTable {
    let layout = loop {
        let l = random_layout(rng, rows, cols, p_span);
        if is_well_formed(&l, rows, cols) {
            break l;
        }
    };
    let xs = pixel_lines(rng, cols, 24, 120);
    let ys = pixel_lines(rng, rows, 14, 40);
    let size = (xs[cols] + rng.random_range(0..=40), ys[rows] + rng.random_range(0..=40));
    let mut t = SynthTable { ann: TableAnnotation::from_cells(Vec::new()), xs, ys };
    let cells = layout
        .iter()
        .enumerate()
        .map(|(id, l)| {
            let content = if l.is_span() && rng.random_bool(0.2) {
                String::new()
            } else {
                let n = rng.random_range(1..=2);
                (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
            };
            Cell { id, bbox: Some(norm(t.px_box(l), size)), logical: *l, content }
        })
        .collect::<Vec<_>>();
    let owners = owner_grid(&layout, rows, cols);
    let mut grids = Vec::with_capacity(rows * cols);
    for (r, row) in owners.iter().enumerate() {
        for (c, &cell_id) in row.iter().enumerate() {
            let slot = LogicalCoords::slot(r, c);
            grids.push(GridEntry { cell_id, row: r, col: c, bbox: norm(t.px_box(&slot), size) });
        }
    }
    t.ann = TableAnnotation {
        id: id.into(),
        image_size: size,
        table_box: norm(t.table_px(), size),
        cells,
        grids,
        wireless,
        provenance: None,
    };
    t
}

fn structure_tokens(ann: &TableAnnotation) -> Vec<String> {
    let (rows, _) = ann.dims();
    let mut t = vec![String::from("<tbody>")];
    for r in 0..rows {
        t.push("<tr>".into());
        let mut row: Vec<&Cell> = ann.cells.iter().filter(|c| c.logical.start_row == r).collect();
        row.sort_by_key(|c| c.logical.start_col);
        for c in row {
            if c.logical.is_span() {
                t.push("<td".into());
                if c.logical.rowspan() > 1 {
                    t.push(format!(" rowspan=\"{}\"", c.logical.rowspan()));
                }
                if c.logical.colspan() > 1 {
                    t.push(format!(" colspan=\"{}\"", c.logical.colspan()));
                }
                t.push(">".into());
            } else {
                t.push("<td>".into());
            }
            t.push("</td>".into());
        }
        t.push("</tr>".into());
    }
    t.push("</tbody>".into());
    t
}

/// Render a table in a foreign format. Spotting needs a span-free table.
/// PubTabNet cells without text carry no box, as in the original corpus.
pub fn to_source(t: &SynthTable, kind: SourceKind, with_grids: bool, rng: &mut impl Rng) -> SourceRecord {
    let ann = &t.ann;
    let table_box = Some(t.table_px());
    match kind {
        SourceKind::PubTabNet => SourceRecord::PubTabNet(PubTabNetRecord {
            id: ann.id.clone(),
            image_size: ann.image_size,
            table_box,
            wireless: ann.wireless,
            html: PubTabNetHtml {
                structure: TokenList { tokens: structure_tokens(ann) },
                cells: ann
                    .cells_in_order()
                    .iter()
                    .map(|c| PubTabNetCell {
                        tokens: c.content.chars().map(String::from).collect(),
                        bbox: (!c.content.is_empty()).then(|| t.px_box(&c.logical)),
                    })
                    .collect(),
            },
        }),
        SourceKind::Grid => SourceRecord::Grid(GridRecord {
            id: ann.id.clone(),
            image_size: ann.image_size,
            table_box,
            wireless: ann.wireless,
            cells: ann
                .cells
                .iter()
                .map(|c| GridCell {
                    id: Some(c.id),
                    bbox: Some(t.px_box(&c.logical)),
                    start_row: c.logical.start_row,
                    end_row: c.logical.end_row,
                    start_col: c.logical.start_col,
                    end_col: c.logical.end_col,
                    content: c.content.clone(),
                })
                .collect(),
            grids: if with_grids {
                ann.grids
                    .iter()
                    .map(|g| GridSlot {
                        cell_id: g.cell_id,
                        row: g.row,
                        col: g.col,
                        bbox: t.px_box(&LogicalCoords::slot(g.row, g.col)),
                    })
                    .collect()
            } else {
                Vec::new()
            },
        }),
        SourceKind::Spotting => {
            let mut cells: Vec<SpotCell> = ann
                .cells
                .iter()
                .map(|c| SpotCell { bbox: t.px_box(&c.logical), content: c.content.clone() })
                .collect();
            cells.shuffle(rng);
            SourceRecord::Spotting(SpottingRecord {
                id: ann.id.clone(),
                image_size: ann.image_size,
                table_box,
                wireless: ann.wireless,
                cells,
            })
        }
    }
}

/// `n` tables of one source kind with ids `{prefix}{i:04}`, with their truth.
/// Sizes are drawn from `min..=max` rows and columns.
pub fn source_corpus(
    rng: &mut impl Rng,
    kind: SourceKind,
    n: usize,
    prefix: &str,
    (min, max): (usize, usize),
) -> Vec<(SourceRecord, TableAnnotation)> {
    (0..n)
        .map(|i| {
            let id = format!("{prefix}{i:04}");
            let (rows, cols) = (rng.random_range(min..=max), rng.random_range(min..=max));
            let p_span = if kind == SourceKind::Spotting { 0.0 } else { 0.2 };
            let wireless = rng.random_bool(0.3);
            let t = random_table(rng, &id, rows, cols, p_span, wireless);
            let rec = to_source(&t, kind, i % 2 == 0, rng);
            (rec, t.ann)
        })
        .collect()
}

/// Injected defects and what cleaning must do about them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Corruption {
    None,
    Overlap,
    Hole,
    MissingSlot,
    WrongSlotOwner,
    NoSlots,
    InvalidCellBox,
    DuplicateIds,
    TableBoxOutside,
    DuplicateRow,
    DuplicateCol,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expected {
    Keep,
    Drop(CleanRule),
    /// Kept after merging redundant rows or columns back to the original.
    Collapse,
}

impl Corruption {
    pub const ALL: [Corruption; 11] = [
        Corruption::None,
        Corruption::Overlap,
        Corruption::Hole,
        Corruption::MissingSlot,
        Corruption::WrongSlotOwner,
        Corruption::NoSlots,
        Corruption::InvalidCellBox,
        Corruption::DuplicateIds,
        Corruption::TableBoxOutside,
        Corruption::DuplicateRow,
        Corruption::DuplicateCol,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Corruption::None => "none",
            Corruption::Overlap => "overlap",
            Corruption::Hole => "hole",
            Corruption::MissingSlot => "missing_slot",
            Corruption::WrongSlotOwner => "wrong_slot_owner",
            Corruption::NoSlots => "no_slots",
            Corruption::InvalidCellBox => "invalid_cell_box",
            Corruption::DuplicateIds => "duplicate_ids",
            Corruption::TableBoxOutside => "table_box_outside",
            Corruption::DuplicateRow => "duplicate_row",
            Corruption::DuplicateCol => "duplicate_col",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Corruption::ALL.into_iter().find(|c| c.name() == s)
    }

    pub fn expected(self) -> Expected {
        use Corruption::*;
        match self {
            None => Expected::Keep,
            Overlap => Expected::Drop(CleanRule::OverlappingLogical),
            Hole | MissingSlot | WrongSlotOwner | NoSlots => Expected::Drop(CleanRule::IncompleteGrids),
            InvalidCellBox | DuplicateIds | TableBoxOutside => Expected::Drop(CleanRule::InvalidRecord),
            DuplicateRow | DuplicateCol => Expected::Collapse,
        }
    }
}

impl fmt::Display for Expected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expected::Keep => f.write_str("keep"),
            Expected::Drop(r) => write!(f, "drop:{}", r.name()),
            Expected::Collapse => write!(f, "collapse:{}", CleanRule::RedundantGrids.name()),
        }
    }
}

/// Insert a copy of row `r` (or column) after it. Slot boxes of the doubled
/// band are split at its midpoint so that merging restores them exactly.
fn duplicate_band(ann: &mut TableAnnotation, at: usize, rows: bool) {
    for c in &mut ann.cells {
        let l = &mut c.logical;
        let (s, e) = if rows { (&mut l.start_row, &mut l.end_row) } else { (&mut l.start_col, &mut l.end_col) };
        if *s > at {
            *s += 1;
        }
        if *e >= at {
            *e += 1;
        }
    }
    let mut grids = Vec::with_capacity(ann.grids.len());
    for g in &ann.grids {
        let idx = if rows { g.row } else { g.col };
        let mut g = g.clone();
        if idx > at {
            if rows {
                g.row += 1;
            } else {
                g.col += 1;
            }
            grids.push(g);
        } else if idx == at {
            let b = g.bbox;
            let (first, second) = if rows {
                let mid = (b.y1 + b.y2) / 2.0;
                (BBox::new(b.x1, b.y1, b.x2, mid), BBox::new(b.x1, mid, b.x2, b.y2))
            } else {
                let mid = (b.x1 + b.x2) / 2.0;
                (BBox::new(b.x1, b.y1, mid, b.y2), BBox::new(mid, b.y1, b.x2, b.y2))
            };
            let mut next = g.clone();
            if rows {
                next.row += 1;
            } else {
                next.col += 1;
            }
            g.bbox = first;
            next.bbox = second;
            grids.push(g);
            grids.push(next);
        } else {
            grids.push(g);
        }
    }
    grids.sort_by_key(|g| (g.row, g.col));
    ann.grids = grids;
}

/// Apply one defect to a well-formed table from [`random_table`] with at least
/// two rows and two columns.
pub fn corrupt(ann: &TableAnnotation, kind: Corruption, rng: &mut impl Rng) -> TableAnnotation {
    let mut a = ann.clone();
    let (rows, cols) = a.dims();
    let n = a.cells.len();
    match kind {
        Corruption::None => {}
        Corruption::Overlap => {
            let cands: Vec<usize> = (0..n).filter(|&i| a.cells[i].logical.end_col + 1 < cols).collect();
            let i = *cands.choose(rng).expect("table has two columns");
            a.cells[i].logical.end_col += 1;
        }
        Corruption::Hole => {
            let victim = a.cells.iter().position(|c| c.logical.covers(0, 0)).unwrap();
            let old = a.cells.remove(victim).id;
            for c in &mut a.cells {
                if c.id > old {
                    c.id -= 1;
                }
            }
            a.grids.retain(|g| g.cell_id != old);
            for g in &mut a.grids {
                if g.cell_id > old {
                    g.cell_id -= 1;
                }
            }
        }
        Corruption::MissingSlot => {
            let i = rng.random_range(0..a.grids.len());
            a.grids.remove(i);
        }
        Corruption::WrongSlotOwner => {
            let i = rng.random_range(0..a.grids.len());
            a.grids[i].cell_id = (a.grids[i].cell_id + 1 + rng.random_range(0..n - 1)) % n;
        }
        Corruption::NoSlots => a.grids.clear(),
        Corruption::InvalidCellBox => {
            let i = rng.random_range(0..n);
            let b = a.cells[i].bbox.get_or_insert(BBox::UNIT);
            b.x2 = 1.25;
        }
        Corruption::DuplicateIds => {
            let i = rng.random_range(1..n);
            a.cells[i].id = a.cells[i - 1].id;
        }
        Corruption::TableBoxOutside => a.table_box.y2 = 1.5,
        Corruption::DuplicateRow => duplicate_band(&mut a, rng.random_range(0..rows), true),
        Corruption::DuplicateCol => duplicate_band(&mut a, rng.random_range(0..cols), false),
    }
    a
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub corruption: Corruption,
    /// The table before corruption.
    pub original: TableAnnotation,
}

/// `n` records cycling through every corruption kind, ids `{prefix}{i:04}`.
pub fn corrupted_corpus(rng: &mut impl Rng, n: usize, prefix: &str) -> (Vec<TableAnnotation>, Vec<ManifestEntry>) {
    let mut records = Vec::with_capacity(n);
    let mut manifest = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("{prefix}{i:04}");
        let kind = Corruption::ALL[i % Corruption::ALL.len()];
        let (rows, cols) = (rng.random_range(3..=8), rng.random_range(3..=8));
        let wireless = rng.random_bool(0.3);
        let t = random_table(rng, &id, rows, cols, 0.2, wireless);
        records.push(corrupt(&t.ann, kind, rng));
        manifest.push(ManifestEntry { id, corruption: kind, original: t.ann });
    }
    (records, manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tablekit_core::ingest::unify;

    #[test]
    fn generated_tables_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..200 {
            let (r, c) = (rng.random_range(2..=10), rng.random_range(2..=10));
            let t = random_table(&mut rng, &format!("t{i}"), r, c, 0.3, false);
            t.ann.validate().unwrap();
            assert_eq!(t.ann.dims(), (r, c));
            assert!(t.ann.table_box.is_valid());
        }
    }

    #[test]
    fn well_formed_rejects_redundant_and_unpinned() {
        let l = |r0, r1, c0, c1| LogicalCoords::new(r0, r1, c0, c1);
        assert!(is_well_formed(&[l(0, 1, 0, 1), l(0, 0, 2, 2), l(1, 1, 2, 2), l(2, 2, 0, 0), l(2, 2, 1, 1), l(2, 2, 2, 2)], 3, 3));
        assert!(!is_well_formed(&[l(0, 0, 0, 0), l(0, 0, 1, 1), l(1, 1, 0, 1)], 2, 2));
        assert!(!is_well_formed(&[l(0, 1, 0, 0), l(0, 1, 1, 1)], 2, 2));
        assert!(!is_well_formed(&[l(0, 1, 0, 0), l(0, 0, 1, 1), l(1, 2, 1, 1), l(2, 2, 0, 0)], 3, 2));
    }

    #[test]
    fn every_source_kind_unifies_to_the_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for kind in SourceKind::ALL {
            for (rec, truth) in source_corpus(&mut rng, kind, 20, "s", (2, 7)) {
                let got = unify(&rec).unwrap();
                assert_eq!(got, truth, "{kind:?} {}", truth.id);
            }
        }
    }

    #[test]
    fn duplicated_band_doubles_one_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_table(&mut rng, "d", 3, 4, 0.0, false);
        let d = corrupt(&t.ann, Corruption::DuplicateRow, &mut rng);
        assert_eq!(d.dims(), (4, 4));
        assert_eq!(d.grids.len(), 16);
        d.validate().unwrap();
    }
}
