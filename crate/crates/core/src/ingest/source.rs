//! Foreign annotation records and their conversion to [`TableAnnotation`].
//!
//! All foreign coordinates are pixels `[x1, y1, x2, y2]` in the source image;
//! they are divided by the image size. A missing table box means the image is
//! the table crop.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::BBox;
use crate::html::{html_to_grid, parse_html, ParseMode};
use crate::model::{Cell, GridEntry, LogicalCoords, TableAnnotation};

use super::grids::{derive_grids, fill_missing_boxes};
use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// Structure tokens plus one content/box record per `td`.
    PubTabNet,
    /// Cells carrying their own logical coordinates.
    Grid,
    /// Boxes and contents only; the table is assumed to be a full grid.
    Spotting,
}

impl SourceKind {
    pub const ALL: [SourceKind; 3] = [SourceKind::PubTabNet, SourceKind::Grid, SourceKind::Spotting];

    pub fn name(self) -> &'static str {
        match self {
            SourceKind::PubTabNet => "pubtabnet",
            SourceKind::Grid => "grid",
            SourceKind::Spotting => "spotting",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        SourceKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenList {
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PubTabNetCell {
    pub tokens: Vec<String>,
    /// Absent for empty cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PubTabNetHtml {
    pub structure: TokenList,
    pub cells: Vec<PubTabNetCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PubTabNetRecord {
    #[serde(alias = "filename")]
    pub id: String,
    pub image_size: (u32, u32),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_box: Option<[f64; 4]>,
    #[serde(default)]
    pub wireless: bool,
    pub html: PubTabNetHtml,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
    pub start_row: usize,
    pub end_row: usize,
    pub start_col: usize,
    pub end_col: usize,
    #[serde(default)]
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSlot {
    pub cell_id: usize,
    pub row: usize,
    pub col: usize,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub id: String,
    pub image_size: (u32, u32),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_box: Option<[f64; 4]>,
    #[serde(default)]
    pub wireless: bool,
    pub cells: Vec<GridCell>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grids: Vec<GridSlot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotCell {
    pub bbox: [f64; 4],
    #[serde(default)]
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpottingRecord {
    pub id: String,
    pub image_size: (u32, u32),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_box: Option<[f64; 4]>,
    #[serde(default)]
    pub wireless: bool,
    pub cells: Vec<SpotCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceRecord {
    PubTabNet(PubTabNetRecord),
    Grid(GridRecord),
    Spotting(SpottingRecord),
}

impl SourceRecord {
    pub fn kind(&self) -> SourceKind {
        match self {
            SourceRecord::PubTabNet(_) => SourceKind::PubTabNet,
            SourceRecord::Grid(_) => SourceKind::Grid,
            SourceRecord::Spotting(_) => SourceKind::Spotting,
        }
    }

    pub fn id(&self) -> &str {
        match self {
            SourceRecord::PubTabNet(r) => &r.id,
            SourceRecord::Grid(r) => &r.id,
            SourceRecord::Spotting(r) => &r.id,
        }
    }
}

struct Frame {
    w: f64,
    h: f64,
}

impl Frame {
    fn new((w, h): (u32, u32)) -> Result<Self, IngestError> {
        if w == 0 || h == 0 {
            return Err(IngestError::BadImageSize(w, h));
        }
        Ok(Frame {
            w: w as f64,
            h: h as f64,
        })
    }

    fn norm(&self, b: [f64; 4]) -> BBox {
        BBox::new(b[0] / self.w, b[1] / self.h, b[2] / self.w, b[3] / self.h)
    }
}

/// Convert one foreign record into the unified format.
///
/// Structural problems that make a record unreadable (bad image size,
/// unparseable structure, mismatched cell counts, non-grid spotting layouts)
/// are errors. Records that read fine but break annotation invariants are
/// returned as they are so that [`clean`](super::clean) can judge them.
/// When a record has no grid slots and its layout is complete, slots are
/// derived from the cell boxes and box-less cells receive the union of their
/// slots.
pub fn unify(record: &SourceRecord) -> Result<TableAnnotation, IngestError> {
    let mut ann = match record {
        SourceRecord::PubTabNet(r) => from_pubtabnet(r)?,
        SourceRecord::Grid(r) => from_grid(r)?,
        SourceRecord::Spotting(r) => from_spotting(r)?,
    };
    if ann.grids.is_empty() && ann.validate_layout().is_ok() {
        if let Ok(grids) = derive_grids(&ann.cells) {
            ann.grids = grids;
            fill_missing_boxes(&mut ann);
        }
    }
    Ok(ann)
}

fn shell(id: &str, image_size: (u32, u32), table_box: Option<[f64; 4]>, wireless: bool) -> Result<(Frame, TableAnnotation), IngestError> {
    let frame = Frame::new(image_size)?;
    let table_box = table_box.map_or(BBox::UNIT, |b| frame.norm(b));
    let ann = TableAnnotation {
        id: id.into(),
        image_size,
        table_box,
        cells: Vec::new(),
        grids: Vec::new(),
        wireless,
        provenance: None,
    };
    Ok((frame, ann))
}

fn from_pubtabnet(r: &PubTabNetRecord) -> Result<TableAnnotation, IngestError> {
    let (frame, mut ann) = shell(&r.id, r.image_size, r.table_box, r.wireless)?;
    let mut structure: String = r.html.structure.tokens.concat();
    // structure token lists usually omit the table element itself
    if !structure.trim_start().get(..6).is_some_and(|t| t.eq_ignore_ascii_case("<table")) {
        structure = alloc::format!("<table>{structure}</table>");
    }
    let parsed = parse_html(&structure, ParseMode::Strict)?;
    let layout = html_to_grid(&parsed.root)?;
    if layout.cells.len() != r.html.cells.len() {
        return Err(IngestError::CellCount {
            expected: layout.cells.len(),
            found: r.html.cells.len(),
        });
    }
    ann.cells = layout
        .cells
        .into_iter()
        .zip(&r.html.cells)
        .map(|(mut cell, src)| {
            cell.content = src.tokens.concat();
            cell.bbox = src.bbox.map(|b| frame.norm(b));
            cell
        })
        .collect();
    Ok(ann)
}

fn from_grid(r: &GridRecord) -> Result<TableAnnotation, IngestError> {
    let (frame, mut ann) = shell(&r.id, r.image_size, r.table_box, r.wireless)?;
    // Source ids are mapped to their rank so that any unique id set becomes
    // dense; duplicated ids are kept verbatim for the cleaner to reject.
    let given: Vec<usize> = r.cells.iter().enumerate().map(|(i, c)| c.id.unwrap_or(i)).collect();
    let mut sorted = given.clone();
    sorted.sort_unstable();
    sorted.dedup();
    let unique = sorted.len() == given.len();
    let rank: BTreeMap<usize, usize> = sorted.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let map = |id: usize| if unique { rank.get(&id).copied().unwrap_or(id) } else { id };
    ann.cells = r
        .cells
        .iter()
        .zip(&given)
        .map(|(c, &id)| Cell {
            id: map(id),
            bbox: c.bbox.map(|b| frame.norm(b)),
            logical: LogicalCoords::new(c.start_row, c.end_row, c.start_col, c.end_col),
            content: c.content.clone(),
        })
        .collect();
    ann.grids = r
        .grids
        .iter()
        .map(|g| GridEntry {
            cell_id: map(g.cell_id),
            row: g.row,
            col: g.col,
            bbox: frame.norm(g.bbox),
        })
        .collect();
    Ok(ann)
}

fn from_spotting(r: &SpottingRecord) -> Result<TableAnnotation, IngestError> {
    let (frame, mut ann) = shell(&r.id, r.image_size, r.table_box, r.wireless)?;
    let boxes: Vec<BBox> = r.cells.iter().map(|c| frame.norm(c.bbox)).collect();
    let rows = group_rows(&boxes);
    let expected = rows.first().map_or(0, Vec::len);
    for (row, members) in rows.iter().enumerate() {
        if members.len() != expected {
            return Err(IngestError::NotRectangular {
                row,
                found: members.len(),
                expected,
            });
        }
    }
    for (row, members) in rows.iter().enumerate() {
        for (col, &i) in members.iter().enumerate() {
            ann.cells.push(Cell {
                id: ann.cells.len(),
                bbox: Some(boxes[i]),
                logical: LogicalCoords::slot(row, col),
                content: r.cells[i].content.clone(),
            });
        }
    }
    Ok(ann)
}

/// Cluster boxes into rows: in order of vertical center, a box joins the
/// current row while its center lies within the vertical extent of the row's
/// first box. Each row is ordered by horizontal center.
fn group_rows(boxes: &[BBox]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        let (ax, ay) = boxes[a].center();
        let (bx, by) = boxes[b].center();
        ay.total_cmp(&by).then(ax.total_cmp(&bx))
    });
    let mut rows: Vec<Vec<usize>> = Vec::new();
    for i in order {
        let cy = boxes[i].center().1;
        match rows.last_mut() {
            Some(row) if {
                let first = &boxes[row[0]];
                cy >= first.y1 && cy <= first.y2
            } =>
            {
                row.push(i)
            }
            _ => rows.push(alloc::vec![i]),
        }
    }
    for row in &mut rows {
        row.sort_by(|&a, &b| boxes[a].center().0.total_cmp(&boxes[b].center().0));
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_util::{on_lines, random_layout, random_lines};
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const W: u32 = 800;
    const H: u32 = 600;

    fn px(b: &BBox) -> [f64; 4] {
        [b.x1 * W as f64, b.y1 * H as f64, b.x2 * W as f64, b.y2 * H as f64]
    }

    /// Expected annotation: cells on exact lines with integer pixel edges so
    /// that normalization is exact.
    fn expected(rng: &mut ChaCha8Rng, p_span: f64, id: usize) -> TableAnnotation {
        let (rows, cols) = (rng.random_range(1..6), rng.random_range(1..6));
        let layout = random_layout(rng, rows, cols, p_span);
        let snap = |v: Vec<f64>, n: u32| -> Vec<f64> {
            let mut out: Vec<f64> = v.iter().map(|x| libm::round(x * n as f64) / n as f64).collect();
            for i in 1..out.len() {
                if out[i] <= out[i - 1] {
                    out[i] = out[i - 1] + 1.0 / n as f64;
                }
            }
            out.iter().map(|x| x.min(1.0)).collect()
        };
        let xs = snap(random_lines(rng, cols), W);
        let ys = snap(random_lines(rng, rows), H);
        let mut ann = on_lines(&layout, &xs, &ys);
        ann.id = format!("t{id}");
        ann.image_size = (W, H);
        ann
    }

    fn pinned(ann: &TableAnnotation) -> bool {
        let (rows, cols) = ann.dims();
        (0..rows).all(|r| ann.cells.iter().any(|c| c.logical.rowspan() == 1 && c.logical.covers_row(r)))
            && (0..cols).all(|c| ann.cells.iter().any(|x| x.logical.colspan() == 1 && x.logical.covers_col(c)))
    }

    /// Hand-rolled structure token writer, independent of the HTML codec.
    fn structure_tokens(ann: &TableAnnotation) -> Vec<String> {
        let (rows, _) = ann.dims();
        let mut t = vec!["<tbody>".to_string()];
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

    fn to_pubtabnet(ann: &TableAnnotation) -> PubTabNetRecord {
        // document order is row-major by start cell, which is also the id order of `on_lines`
        PubTabNetRecord {
            id: ann.id.clone(),
            image_size: ann.image_size,
            table_box: None,
            wireless: false,
            html: PubTabNetHtml {
                structure: TokenList {
                    tokens: structure_tokens(ann),
                },
                cells: ann
                    .cells_in_order()
                    .iter()
                    .map(|c| PubTabNetCell {
                        tokens: c.content.chars().map(|ch| ch.to_string()).collect(),
                        bbox: c.bbox.as_ref().map(px),
                    })
                    .collect(),
            },
        }
    }

    fn to_grid(ann: &TableAnnotation, with_grids: bool) -> GridRecord {
        GridRecord {
            id: ann.id.clone(),
            image_size: ann.image_size,
            table_box: None,
            wireless: ann.wireless,
            cells: ann
                .cells
                .iter()
                .map(|c| GridCell {
                    id: Some(c.id),
                    bbox: c.bbox.as_ref().map(px),
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
                        bbox: px(&g.bbox),
                    })
                    .collect()
            } else {
                Vec::new()
            },
        }
    }

    fn to_spotting(ann: &TableAnnotation, rng: &mut ChaCha8Rng) -> SpottingRecord {
        let mut cells: Vec<SpotCell> = ann
            .cells
            .iter()
            .map(|c| SpotCell {
                bbox: px(c.bbox.as_ref().unwrap()),
                content: c.content.clone(),
            })
            .collect();
        // record order carries no information
        for i in (1..cells.len()).rev() {
            cells.swap(i, rng.random_range(0..=i));
        }
        SpottingRecord {
            id: ann.id.clone(),
            image_size: ann.image_size,
            table_box: None,
            wireless: false,
            cells,
        }
    }

    fn assert_same(got: &TableAnnotation, want: &TableAnnotation) {
        assert_eq!(got.id, want.id);
        assert_eq!(got.cells.len(), want.cells.len());
        for (g, w) in got.cells.iter().zip(&want.cells) {
            assert_eq!((g.id, g.logical, &g.content), (w.id, w.logical, &w.content));
            let (a, b) = (g.bbox.unwrap(), w.bbox.unwrap());
            for (x, y) in a.to_array().iter().zip(b.to_array()) {
                assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
            }
        }
        assert_eq!(got.grids.len(), want.grids.len());
        for (g, w) in got.grids.iter().zip(&want.grids) {
            assert_eq!((g.cell_id, g.row, g.col), (w.cell_id, w.row, w.col));
            for (x, y) in g.bbox.to_array().iter().zip(w.bbox.to_array()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        got.validate().unwrap();
    }

    #[test]
    fn pubtabnet_colspan() {
        let tokens = ["<tr>", "<td", " colspan=\"2\"", ">", "</td>", "</tr>", "<tr>", "<td>", "</td>", "<td>", "</td>", "</tr>"];
        let rec = PubTabNetRecord {
            id: "p".into(),
            image_size: (100, 100),
            table_box: None,
            wireless: false,
            html: PubTabNetHtml {
                structure: TokenList {
                    tokens: tokens.iter().map(|s| s.to_string()).collect(),
                },
                cells: ["H", "a", "b"]
                    .iter()
                    .zip([[0.0, 0.0, 100.0, 50.0], [0.0, 50.0, 50.0, 100.0], [50.0, 50.0, 100.0, 100.0]])
                    .map(|(t, b)| PubTabNetCell {
                        tokens: vec![t.to_string()],
                        bbox: Some(b),
                    })
                    .collect(),
            },
        };
        let ann = unify(&SourceRecord::PubTabNet(rec)).unwrap();
        let l: Vec<_> = ann.cells.iter().map(|c| c.logical).collect();
        assert_eq!(l, [LogicalCoords::new(0, 0, 0, 1), LogicalCoords::slot(1, 0), LogicalCoords::slot(1, 1)]);
        assert_eq!(ann.grids.len(), 4);
        ann.validate().unwrap();
    }

    #[test]
    fn pubtabnet_count_mismatch() {
        let rec = PubTabNetRecord {
            id: "p".into(),
            image_size: (10, 10),
            table_box: None,
            wireless: false,
            html: PubTabNetHtml {
                structure: TokenList {
                    tokens: vec!["<tr>".into(), "<td>".into(), "</td>".into(), "</tr>".into()],
                },
                cells: Vec::new(),
            },
        };
        assert!(matches!(
            unify(&SourceRecord::PubTabNet(rec)),
            Err(IngestError::CellCount { expected: 1, found: 0 })
        ));
    }

    #[test]
    fn synthetic_records_per_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut done = [0usize; 4];
        let mut k = 0;
        while done.iter().any(|&d| d < 30) {
            k += 1;
            let want = expected(&mut rng, 0.3, k);
            if !pinned(&want) {
                continue;
            }
            assert_same(&unify(&SourceRecord::PubTabNet(to_pubtabnet(&want))).unwrap(), &want);
            assert_same(&unify(&SourceRecord::Grid(to_grid(&want, true))).unwrap(), &want);
            assert_same(&unify(&SourceRecord::Grid(to_grid(&want, false))).unwrap(), &want);
            done[0] += 1;
            done[1] += 1;
            done[2] += 1;
            if want.span_cells().next().is_none() {
                let rec = to_spotting(&want, &mut rng);
                assert_same(&unify(&SourceRecord::Spotting(rec)).unwrap(), &want);
                done[3] += 1;
            }
        }
    }

    #[test]
    fn grid_ids_are_densified() {
        let mut rec = to_grid(&expected(&mut ChaCha8Rng::seed_from_u64(1), 0.0, 0), true);
        for c in &mut rec.cells {
            c.id = c.id.map(|i| i * 10 + 3);
        }
        for g in &mut rec.grids {
            g.cell_id = g.cell_id * 10 + 3;
        }
        let ann = unify(&SourceRecord::Grid(rec)).unwrap();
        ann.validate().unwrap();
    }

    #[test]
    fn broken_grid_records_pass_through() {
        let mut rec = to_grid(&expected(&mut ChaCha8Rng::seed_from_u64(2), 0.0, 0), false);
        rec.cells[0].end_col += 1;
        let ann = unify(&SourceRecord::Grid(rec)).unwrap();
        assert!(ann.validate().is_err());
        assert!(ann.grids.is_empty());
    }

    #[test]
    fn ragged_spotting_is_rejected() {
        let rec = SpottingRecord {
            id: "s".into(),
            image_size: (10, 10),
            table_box: None,
            wireless: false,
            cells: vec![
                SpotCell { bbox: [0.0, 0.0, 5.0, 5.0], content: "a".into() },
                SpotCell { bbox: [5.0, 0.0, 10.0, 5.0], content: "b".into() },
                SpotCell { bbox: [0.0, 5.0, 5.0, 10.0], content: "c".into() },
            ],
        };
        assert!(matches!(
            unify(&SourceRecord::Spotting(rec)),
            Err(IngestError::NotRectangular { row: 1, found: 1, expected: 2 })
        ));
    }

    #[test]
    fn kind_names() {
        for k in SourceKind::ALL {
            assert_eq!(SourceKind::from_name(k.name()), Some(k));
        }
        assert_eq!(SourceKind::from_name("wtw"), None);
    }
}
