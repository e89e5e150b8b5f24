//! Prompt/target pairs for the structure, detection and spotting tasks.
//!
//! Every generator is a pure function of its inputs. Targets follow the
//! grammars in [`grammar`], which also holds a parser for each of them.

pub mod grammar;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, DiscretizationConfig};
use crate::html::{grid_to_html, HtmlError};
use crate::model::{Cell, TableAnnotation, ValidationError};

use grammar::{write_box, NONE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    CellDetect,
    SpanCellDetect,
    RowColDetect,
    StructureParse,
    HtmlParse,
    SpotOrdered,
    SpotBoxquery,
}

impl TaskKind {
    pub const ALL: [TaskKind; 7] = [
        TaskKind::CellDetect,
        TaskKind::SpanCellDetect,
        TaskKind::RowColDetect,
        TaskKind::StructureParse,
        TaskKind::HtmlParse,
        TaskKind::SpotOrdered,
        TaskKind::SpotBoxquery,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::CellDetect => "cell_detect",
            TaskKind::SpanCellDetect => "span_cell_detect",
            TaskKind::RowColDetect => "row_col_detect",
            TaskKind::StructureParse => "structure_parse",
            TaskKind::HtmlParse => "html_parse",
            TaskKind::SpotOrdered => "spot_ordered",
            TaskKind::SpotBoxquery => "spot_boxquery",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        TaskKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSample {
    #[serde(default)]
    pub id: String,
    pub task: TaskKind,
    pub prompt: String,
    pub target: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureFormat {
    Html,
    Markdown,
}

/// A text line to be spotted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextLine {
    pub bbox: BBox,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("cells without a box: {0:?}")]
    MissingBoxes(Vec<usize>),
    #[error("annotation has no grid slots")]
    GridsMissing,
    #[error("invalid annotation: {0}")]
    Invalid(#[from] ValidationError),
    #[error("{0}")]
    Html(#[from] HtmlError),
}

pub const PROMPT_CELL: &str = "Detect all table cells in logical order.";
pub const PROMPT_CELL_NO_SPAN: &str = "Detect all table cells that span a single row and column, in logical order.";
pub const PROMPT_SPAN: &str = "Detect the span cells with their row and column ranges.";
pub const PROMPT_ROW_COL: &str = "Detect the table rows and columns, each followed by its cells.";
pub const PROMPT_STRUCTURE_HTML: &str = "Output the table structure as HTML.";
pub const PROMPT_STRUCTURE_MARKDOWN: &str = "Output the table structure as Markdown.";
pub const PROMPT_HTML: &str = "Parse the table into HTML.";
pub const PROMPT_SPOT: &str = "Read all text lines in reading order with their boxes.";
pub const PROMPT_SPOT_TEXT: &str = "Read all text lines in reading order.";

/// Lines whose vertical overlap, relative to the shorter of line and band,
/// reaches this ratio share a reading band.
pub const BAND_OVERLAP: f64 = 0.5;

fn sample(ann: &TableAnnotation, task: TaskKind, prompt: &str, target: String) -> TaskSample {
    TaskSample {
        id: ann.id.clone(),
        task,
        prompt: prompt.into(),
        target,
    }
}

fn boxes_of<'a>(cells: impl IntoIterator<Item = &'a Cell>) -> Result<Vec<(&'a Cell, BBox)>, TaskError> {
    let mut missing = Vec::new();
    let mut out = Vec::new();
    for c in cells {
        match c.bbox {
            Some(b) => out.push((c, b)),
            None => missing.push(c.id),
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        missing.sort_unstable();
        Err(TaskError::MissingBoxes(missing))
    }
}

fn or_none(s: String) -> String {
    if s.is_empty() {
        String::from(NONE)
    } else {
        s
    }
}

/// Every cell box in logical order, optionally leaving out span cells.
pub fn gen_cell_detect(ann: &TableAnnotation, cfg: &DiscretizationConfig, exclude_spans: bool) -> Result<TaskSample, TaskError> {
    let cells = boxes_of(ann.cells_in_order())?;
    let mut t = String::new();
    for (c, b) in cells {
        if !(exclude_spans && c.logical.is_span()) {
            write_box(&mut t, cfg.discretize(&b));
        }
    }
    let prompt = if exclude_spans { PROMPT_CELL_NO_SPAN } else { PROMPT_CELL };
    Ok(sample(ann, TaskKind::CellDetect, prompt, or_none(t)))
}

pub fn gen_span_cell_detect(ann: &TableAnnotation, cfg: &DiscretizationConfig) -> Result<TaskSample, TaskError> {
    let cells = boxes_of(ann.cells_in_order())?;
    let mut entries = Vec::new();
    for (c, b) in cells.into_iter().filter(|(c, _)| c.logical.is_span()) {
        let l = c.logical;
        let mut e = String::new();
        write_box(&mut e, cfg.discretize(&b));
        e.push_str(&format!(" rows {}-{} cols {}-{}", l.start_row, l.end_row, l.start_col, l.end_col));
        entries.push(e);
    }
    Ok(sample(ann, TaskKind::SpanCellDetect, PROMPT_SPAN, or_none(entries.join("; "))))
}

/// Row bands top to bottom, each followed by the boxes of the cells covering
/// that row (left to right); then column bands with their cells (top to bottom).
pub fn gen_row_col_detect(ann: &TableAnnotation, cfg: &DiscretizationConfig) -> Result<TaskSample, TaskError> {
    if ann.grids.is_empty() {
        return Err(TaskError::GridsMissing);
    }
    let lines = ann.derive_row_col_lines()?;
    let cells = boxes_of(&ann.cells)?;
    let mut parts = Vec::new();
    for (r, band) in lines.rows.iter().enumerate() {
        let mut members: Vec<_> = cells.iter().filter(|(c, _)| c.logical.covers_row(r)).collect();
        members.sort_by_key(|(c, _)| (c.logical.start_col, c.logical.start_row));
        parts.push(band_entry("row", band, members.iter().map(|(_, b)| b), cfg));
    }
    for (k, band) in lines.cols.iter().enumerate() {
        let mut members: Vec<_> = cells.iter().filter(|(c, _)| c.logical.covers_col(k)).collect();
        members.sort_by_key(|(c, _)| (c.logical.start_row, c.logical.start_col));
        parts.push(band_entry("col", band, members.iter().map(|(_, b)| b), cfg));
    }
    Ok(sample(ann, TaskKind::RowColDetect, PROMPT_ROW_COL, parts.join("; ")))
}

fn band_entry<'a>(kind: &str, band: &BBox, cells: impl Iterator<Item = &'a BBox>, cfg: &DiscretizationConfig) -> String {
    let mut s = String::from(kind);
    s.push(' ');
    write_box(&mut s, cfg.discretize(band));
    s.push_str(" cells ");
    for b in cells {
        write_box(&mut s, cfg.discretize(b));
    }
    s
}

pub fn gen_structure_parse(ann: &TableAnnotation, format: StructureFormat) -> Result<TaskSample, TaskError> {
    match format {
        StructureFormat::Html => {
            let html = grid_to_html(ann)?.structure_only().to_html();
            Ok(sample(ann, TaskKind::StructureParse, PROMPT_STRUCTURE_HTML, html))
        }
        StructureFormat::Markdown => {
            let (rows, cols) = ann.dims();
            ann.validate_layout()?;
            let row: String = format!("|{}", " - |".repeat(cols));
            let sep: String = format!("|{}", " --- |".repeat(cols));
            let mut lines = Vec::with_capacity(rows + 1);
            for r in 0..rows {
                lines.push(row.clone());
                if r == 0 {
                    lines.push(sep.clone());
                }
            }
            Ok(sample(ann, TaskKind::StructureParse, PROMPT_STRUCTURE_MARKDOWN, lines.join("\n")))
        }
    }
}

pub fn gen_html_parse(ann: &TableAnnotation) -> Result<TaskSample, TaskError> {
    let html = grid_to_html(ann)?.to_html();
    Ok(sample(ann, TaskKind::HtmlParse, PROMPT_HTML, html))
}

/// Cells with non-empty content as text lines.
pub fn lines_from_cells(ann: &TableAnnotation) -> Vec<TextLine> {
    ann.cells_in_order()
        .into_iter()
        .filter(|c| !c.content.is_empty())
        .filter_map(|c| c.bbox.map(|bbox| TextLine { bbox, text: c.content.clone() }))
        .collect()
}

/// Indices of `lines` in reading order.
///
/// Lines are taken by top edge; a line joins the current band when its
/// vertical overlap with the band's extent is at least [`BAND_OVERLAP`] of
/// the smaller height (for zero heights, when the ranges touch). Bands keep
/// top-edge order and are read left to right.
pub fn reading_order(lines: &[TextLine]) -> Vec<usize> {
    let mut by_top: Vec<usize> = (0..lines.len()).collect();
    by_top.sort_by(|&a, &b| {
        let (p, q) = (&lines[a].bbox, &lines[b].bbox);
        p.y1.total_cmp(&q.y1).then(p.x1.total_cmp(&q.x1)).then(a.cmp(&b))
    });
    let mut bands: Vec<(f64, f64, Vec<usize>)> = Vec::new();
    for i in by_top {
        let b = &lines[i].bbox;
        let joins = bands.last().is_some_and(|(top, bottom, _)| {
            let overlap = b.y2.min(*bottom) - b.y1.max(*top);
            let shorter = b.height().min(bottom - top);
            if shorter > 0.0 {
                overlap >= BAND_OVERLAP * shorter
            } else {
                overlap >= 0.0
            }
        });
        match bands.last_mut() {
            Some((top, bottom, members)) if joins => {
                *top = top.min(b.y1);
                *bottom = bottom.max(b.y2);
                members.push(i);
            }
            _ => bands.push((b.y1, b.y2, alloc::vec![i])),
        }
    }
    let mut out = Vec::with_capacity(lines.len());
    for (_, _, mut members) in bands {
        members.sort_by(|&a, &b| {
            let (p, q) = (&lines[a].bbox, &lines[b].bbox);
            p.x1.total_cmp(&q.x1).then(p.y1.total_cmp(&q.y1)).then(a.cmp(&b))
        });
        out.extend(members);
    }
    out
}

/// Line breaks inside a text would break the one-line-per-entry grammar.
fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

fn spot_target(lines: &[TextLine], order: &[usize], with_coords: bool, cfg: &DiscretizationConfig) -> String {
    let mut parts = Vec::with_capacity(order.len());
    for &i in order {
        let l = &lines[i];
        let mut s = String::new();
        if with_coords {
            write_box(&mut s, cfg.discretize(&l.bbox));
            s.push(' ');
        }
        s.push_str(&one_line(&l.text));
        parts.push(s);
    }
    if parts.is_empty() {
        String::from(NONE)
    } else {
        parts.join("\n")
    }
}

pub fn gen_spot_ordered(id: &str, lines: &[TextLine], with_coords: bool, cfg: &DiscretizationConfig) -> TaskSample {
    let order = reading_order(lines);
    TaskSample {
        id: id.into(),
        task: TaskKind::SpotOrdered,
        prompt: String::from(if with_coords { PROMPT_SPOT } else { PROMPT_SPOT_TEXT }),
        target: spot_target(lines, &order, with_coords, cfg),
    }
}

/// Prompt for a box query; the query appears as a discretized box token.
pub fn boxquery_prompt(query: &BBox, with_coords: bool, cfg: &DiscretizationConfig) -> String {
    let mut s = String::from("Read the text lines inside ");
    write_box(&mut s, cfg.discretize(query));
    s.push_str(if with_coords { " in reading order with their boxes." } else { " in reading order." });
    s
}

/// Lines whose center lies in the (closed) query box, in reading order.
pub fn gen_spot_boxquery(id: &str, lines: &[TextLine], query: &BBox, with_coords: bool, cfg: &DiscretizationConfig) -> TaskSample {
    let kept: Vec<TextLine> = lines
        .iter()
        .filter(|l| {
            let (x, y) = l.bbox.center();
            query.contains_point_closed(x, y)
        })
        .cloned()
        .collect();
    let order = reading_order(&kept);
    TaskSample {
        id: id.into(),
        task: TaskKind::SpotBoxquery,
        prompt: boxquery_prompt(query, with_coords, cfg),
        target: spot_target(&kept, &order, with_coords, cfg),
    }
}

#[cfg(test)]
mod tests;
