//! Drop reports, evaluation inputs and evaluation reports.
//!
//! Drop report: headerless CSV rows `id,rule,detail`, one per dropped or
//! collapsed record, sorted by id then rule. A clean corpus gives an empty file.
//!
//! Evaluation report: CSV with the header `id,teds,teds_s,teds_delta,parse_flags`,
//! one row per sample in id order, then a summary comment line
//! `# samples=N teds=.. teds_s=.. teds_delta=.. ap50=..`. Scores have six decimals.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tablekit_core::geometry::BBox;
use tablekit_core::html::grid_to_html;
use tablekit_core::ingest::CleanEvent;
use tablekit_core::metrics::{CorpusReport, EvalSide};
use tablekit_core::taskgen::{TaskKind, TaskSample, PROMPT_STRUCTURE_MARKDOWN};
use tablekit_core::TableAnnotation;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropRow {
    pub id: String,
    pub rule: String,
    pub detail: String,
}

impl From<&CleanEvent> for DropRow {
    fn from(e: &CleanEvent) -> Self {
        DropRow {
            id: e.id.clone(),
            rule: e.rule.name().into(),
            detail: e.detail.clone(),
        }
    }
}

fn csv_writer(path: &Path, header: bool) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(header).from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::format(path, line, e)
}

pub fn write_drop_report(path: &Path, rows: &[DropRow]) -> Result<()> {
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| (&a.id, &a.rule).cmp(&(&b.id, &b.rule)));
    let mut w = csv_writer(path, false)?;
    for r in &rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_drop_report(path: &Path) -> Result<Vec<DropRow>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// One side of an evaluation sample as written by hand or by a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    #[serde(default)]
    pub html: String,
    #[serde(default)]
    pub boxes: Vec<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

impl EvalRecord {
    /// HTML from the grid codec and the cell boxes in id order.
    pub fn from_annotation(ann: &TableAnnotation) -> Self {
        let html = grid_to_html(ann).map(|n| n.to_html()).unwrap_or_default();
        let mut cells: Vec<_> = ann.cells.iter().collect();
        cells.sort_by_key(|c| c.id);
        EvalRecord {
            id: ann.id.clone(),
            html,
            boxes: cells.iter().filter_map(|c| c.bbox).collect(),
            scores: None,
        }
    }

    /// The target of an HTML-producing task, without boxes.
    pub fn from_task(s: &TaskSample) -> Option<Self> {
        let html = match s.task {
            TaskKind::HtmlParse => true,
            TaskKind::StructureParse => s.prompt != PROMPT_STRUCTURE_MARKDOWN,
            _ => false,
        };
        html.then(|| EvalRecord {
            id: s.id.clone(),
            html: s.target.clone(),
            boxes: Vec::new(),
            scores: None,
        })
    }

    pub fn into_side(self) -> EvalSide {
        EvalSide {
            html: self.html,
            boxes: self.boxes,
            scores: self.scores,
        }
    }
}

/// Evaluation records keyed by id. Each line may be an [`EvalRecord`], a unified
/// annotation (recognised by its `cells` field) or an HTML task sample
/// (recognised by its `task` field).
pub fn read_eval_side(path: &Path) -> Result<BTreeMap<String, EvalRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |msg: String| Error::format(path, i + 1, msg);
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        let rec = if value.get("cells").is_some() {
            let ann: TableAnnotation = serde_json::from_value(value).map_err(|e| fail(e.to_string()))?;
            EvalRecord::from_annotation(&ann)
        } else if value.get("task").is_some() {
            let s: TaskSample = serde_json::from_value(value).map_err(|e| fail(e.to_string()))?;
            EvalRecord::from_task(&s).ok_or_else(|| fail(format!("task {} has no HTML target", s.task.name())))?
        } else {
            serde_json::from_value(value).map_err(|e| fail(e.to_string()))?
        };
        if out.contains_key(&rec.id) {
            return Err(fail(format!("duplicate id {:?}", rec.id)));
        }
        out.insert(rec.id.clone(), rec);
    }
    Ok(out)
}

pub fn summary_line(r: &CorpusReport) -> String {
    format!(
        "samples={} teds={:.6} teds_s={:.6} teds_delta={:.6} ap50={:.6}",
        r.samples.len(),
        r.mean.teds,
        r.mean.teds_s,
        r.mean.teds_delta,
        r.ap50
    )
}

pub fn write_eval_report(path: &Path, r: &CorpusReport) -> Result<()> {
    let mut w = csv_writer(path, false)?;
    let io = |e: csv::Error| csv_err(path, e);
    w.write_record(["id", "teds", "teds_s", "teds_delta", "parse_flags"]).map_err(io)?;
    for s in &r.samples {
        let res = &s.result;
        w.write_record([
            s.id.clone(),
            format!("{:.6}", res.teds),
            format!("{:.6}", res.teds_s),
            format!("{:.6}", res.teds_delta),
            s.flags.describe(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let mut file = w.into_inner().map_err(|e| Error::Other(e.to_string()))?;
    writeln!(file, "# {}", summary_line(r)).map_err(|e| Error::io(path, e))
}

/// Per-sample rows of an evaluation report: `(id, teds, teds_s, teds_delta, flags)`.
pub type EvalRow = (String, f64, f64, f64, String);

pub fn read_eval_report(path: &Path) -> Result<Vec<EvalRow>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}
