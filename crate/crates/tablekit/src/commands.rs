//! The pipeline commands behind the `tablekit` binary.
//!
//! Each command reads its inputs completely, processes records on the worker
//! pool and writes its outputs sorted by record id, so results do not depend
//! on the worker count. Per-record failures are collected and returned rather
//! than aborting the run; the binary turns them into a nonzero exit code.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use tablekit_core::augment::{augment_table, AugmentConfig};
use tablekit_core::geometry::DiscretizationConfig;
use tablekit_core::ingest::{clean_one, unify, SourceKind};
use tablekit_core::metrics::{corpus_eval, CorpusReport, EvalSample};
use tablekit_core::sgcl::checks::{
    adjacency_well_formed, closed_form_gradients, mask_isolation, network_gradients, permutation_equivariance,
    structural_suite, zero_update_fixed_point, GradReport,
};
use tablekit_core::taskgen::{self, StructureFormat, TaskError, TaskKind, TaskSample};
use tablekit_core::TableAnnotation;

use crate::report::{read_eval_side, write_drop_report, write_eval_report, DropRow};
use crate::{fixture, jsonl, worker_pool, Error, Result};

/// A record that could not be processed, with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub id: String,
    pub reason: String,
}

fn sort_by_id(anns: &mut [TableAnnotation]) {
    anns.sort_by(|a, b| a.id.cmp(&b.id));
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConvertSummary {
    pub written: usize,
    /// Converted records that break an annotation invariant; left for `clean`.
    pub invalid: usize,
    pub failures: Vec<Failure>,
}

pub fn convert(kind: SourceKind, input: &Path, output: &Path) -> Result<ConvertSummary> {
    let records = jsonl::read_sources(kind, input)?;
    let results: Vec<_> = worker_pool()?.install(|| {
        records
            .par_iter()
            .map(|r| unify(r).map_err(|e| Failure { id: r.id().into(), reason: e.to_string() }))
            .collect()
    });
    let mut summary = ConvertSummary::default();
    let mut out = Vec::new();
    for r in results {
        match r {
            Ok(a) => out.push(a),
            Err(f) => summary.failures.push(f),
        }
    }
    sort_by_id(&mut out);
    summary.written = out.len();
    summary.invalid = out.iter().filter(|a| a.validate().is_err()).count();
    jsonl::write(output, &out)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CleanSummary {
    pub kept: usize,
    pub dropped: usize,
    pub collapsed: usize,
}

pub fn clean(input: &Path, output: &Path, report: &Path) -> Result<CleanSummary> {
    let anns: Vec<TableAnnotation> = jsonl::read(input)?;
    let results: Vec<_> = worker_pool()?.install(|| anns.into_par_iter().map(clean_one).collect());
    let mut kept = Vec::new();
    let mut rows = Vec::new();
    let mut summary = CleanSummary::default();
    for r in results {
        match r {
            Ok((a, merged)) => {
                if let Some(ev) = merged {
                    summary.collapsed += 1;
                    rows.push(DropRow::from(&ev));
                }
                kept.push(a);
            }
            Err(ev) => {
                summary.dropped += 1;
                rows.push(DropRow::from(&ev));
            }
        }
    }
    sort_by_id(&mut kept);
    summary.kept = kept.len();
    jsonl::write(output, &kept)?;
    write_drop_report(report, &rows)?;
    Ok(summary)
}

/// Returns the number of sub-tables written.
pub fn augment(input: &Path, output: &Path, per_table: usize, seed: u64) -> Result<usize> {
    let anns: Vec<TableAnnotation> = jsonl::read(input)?;
    let cfg = AugmentConfig { samples_per_table: per_table, rng_seed: seed };
    let mut out: Vec<TableAnnotation> =
        worker_pool()?.install(|| anns.par_iter().flat_map_iter(|a| augment_table(a, &cfg)).collect());
    sort_by_id(&mut out);
    jsonl::write(output, &out)?;
    Ok(out.len())
}

/// Task-specific switches for [`genlabels`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelOptions {
    pub bins: u32,
    /// Spotting targets carry line boxes.
    pub coords: bool,
    /// Cell detection leaves out span cells.
    pub exclude_spans: bool,
    pub structure: StructureFormat,
}

impl Default for LabelOptions {
    fn default() -> Self {
        LabelOptions { bins: 1000, coords: true, exclude_spans: false, structure: StructureFormat::Html }
    }
}

/// One sample per annotation. Box-query spotting uses the table box as the query.
pub fn label(ann: &TableAnnotation, task: TaskKind, opts: &LabelOptions) -> std::result::Result<TaskSample, TaskError> {
    let cfg = DiscretizationConfig::new(opts.bins).unwrap_or_default();
    match task {
        TaskKind::CellDetect => taskgen::gen_cell_detect(ann, &cfg, opts.exclude_spans),
        TaskKind::SpanCellDetect => taskgen::gen_span_cell_detect(ann, &cfg),
        TaskKind::RowColDetect => taskgen::gen_row_col_detect(ann, &cfg),
        TaskKind::StructureParse => taskgen::gen_structure_parse(ann, opts.structure),
        TaskKind::HtmlParse => taskgen::gen_html_parse(ann),
        TaskKind::SpotOrdered => {
            Ok(taskgen::gen_spot_ordered(&ann.id, &taskgen::lines_from_cells(ann), opts.coords, &cfg))
        }
        TaskKind::SpotBoxquery => {
            let lines = taskgen::lines_from_cells(ann);
            Ok(taskgen::gen_spot_boxquery(&ann.id, &lines, &ann.table_box, opts.coords, &cfg))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelSummary {
    pub written: usize,
    pub failures: Vec<Failure>,
}

pub fn genlabels(task: TaskKind, input: &Path, output: &Path, opts: &LabelOptions) -> Result<LabelSummary> {
    if DiscretizationConfig::new(opts.bins).is_none() {
        return Err(Error::Usage(format!("--bins must be at least 2, got {}", opts.bins)));
    }
    let anns: Vec<TableAnnotation> = jsonl::read(input)?;
    let results: Vec<_> = worker_pool()?.install(|| {
        anns.par_iter()
            .map(|a| label(a, task, opts).map_err(|e| Failure { id: a.id.clone(), reason: e.to_string() }))
            .collect()
    });
    let mut summary = LabelSummary::default();
    let mut out = Vec::new();
    for r in results {
        match r {
            Ok(s) => out.push(s),
            Err(f) => summary.failures.push(f),
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    summary.written = out.len();
    jsonl::write(output, &out)?;
    Ok(summary)
}

/// Score predictions against ground truth, matched by id. Ids present on one
/// side only are scored zero and flagged.
pub fn eval(pred: &Path, gt: &Path, report: Option<&Path>) -> Result<CorpusReport> {
    let mut preds = read_eval_side(pred)?;
    let mut gts = read_eval_side(gt)?;
    let mut ids: Vec<String> = preds.keys().chain(gts.keys()).cloned().collect();
    ids.sort();
    ids.dedup();
    let samples = ids
        .into_iter()
        .map(|id| EvalSample {
            pred: preds.remove(&id).map(|r| r.into_side()),
            gt: gts.remove(&id).map(|r| r.into_side()),
            id,
        })
        .collect();
    let r = corpus_eval(samples);
    if let Some(path) = report {
        write_eval_report(path, &r)?;
    }
    Ok(r)
}

/// One line of the SGCL check table.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgclCheckOptions {
    /// Gradient relative errors must be strictly below this.
    pub tolerance: f64,
    /// Extra random parameter draws over the fixture instances.
    pub points: usize,
    pub seed: u64,
    pub eps: f64,
}

impl Default for SgclCheckOptions {
    fn default() -> Self {
        SgclCheckOptions { tolerance: 1e-4, points: 10, seed: 0, eps: 1e-4 }
    }
}

fn merge(a: &mut GradReport, b: &GradReport) {
    for (x, y) in a.worst.iter_mut().zip(&b.worst) {
        *x = x.max(*y);
    }
    a.points += b.points;
    a.redraws += b.redraws;
}

/// Structural invariants and gradient checks at the fixture parameters, then
/// at `points` random parameter draws over the same instances.
pub fn sgcl_check(dir: &Path, opts: &SgclCheckOptions) -> Result<Vec<CheckRow>> {
    if !(opts.tolerance >= 0.0 && opts.tolerance.is_finite()) {
        return Err(Error::Usage(format!("--tolerance must be finite and non-negative, got {}", opts.tolerance)));
    }
    let fx = fixture::load(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let sg = |e: tablekit_core::sgcl::SgclError| Error::Other(e.to_string());
    let mut rows = Vec::new();
    let mut row = |name: &str, passed: bool, detail: String| rows.push(CheckRow { name: name.into(), passed, detail });

    let (mut iso, mut perm, mut fixed, mut adj) = (Ok(0usize), Ok(()), Ok(()), Ok(()));
    let mut net = GradReport::network();
    let mut closed = GradReport::closed_form();
    for (name, inst) in &fx.instances {
        match mask_isolation(inst, &fx.params, &mut rng).map_err(sg)? {
            Ok(n) => iso = iso.map(|k| k + n),
            Err(e) => iso = iso.and(Err(format!("{name}: {e}"))),
        }
        if let Err(e) = permutation_equivariance(inst, &fx.params, &mut rng, 1e-9).map_err(sg)? {
            perm = perm.and(Err(format!("{name}: {e}")));
        }
        if !zero_update_fixed_point(inst, &fx.params).map_err(sg)? {
            fixed = fixed.and(Err(format!("{name}: anchors moved")));
        }
        if !adjacency_well_formed(inst) {
            adj = adj.and(Err(format!("{name}: not symmetric with unit diagonal")));
        }
        net.add_network_point(&mut rng, inst.clone(), &fx.params, opts.eps).map_err(sg)?;
        closed.add_closed_form_point(&mut rng, inst.clone(), &fx.params, opts.eps).map_err(sg)?;
    }
    let n = fx.instances.len();
    match iso {
        Ok(k) => row("fixtures: mask isolation", k > 0, format!("{k} isolated pairs over {n} instances")),
        Err(e) => row("fixtures: mask isolation", false, e),
    }
    row("fixtures: permutation equivariance", perm.is_ok(), perm.err().unwrap_or_else(|| "within 1e-9".into()));
    row("fixtures: zero-update fixed point", fixed.is_ok(), fixed.err().unwrap_or_else(|| "bit-identical".into()));
    row("fixtures: adjacency targets", adj.is_ok(), adj.err().unwrap_or_else(|| "symmetric, unit diagonal".into()));

    if opts.points > 0 {
        let base: Vec<_> = fx.instances.iter().map(|(_, i)| i.clone()).collect();
        for c in structural_suite(&mut rng, &base, opts.points).map_err(sg)? {
            row(&format!("random: {}", c.name), c.passed, c.detail);
        }
        merge(&mut net, &network_gradients(&mut rng, &base, opts.points, opts.eps).map_err(sg)?);
        merge(&mut closed, &closed_form_gradients(&mut rng, &base, opts.points, opts.eps).map_err(sg)?);
    }
    for (label, rep) in [("network", &net), ("closed form", &closed)] {
        for (name, err) in rep.names.iter().zip(&rep.worst) {
            let detail = format!("max rel err {err:.3e} over {} points, {} redraws", rep.points, rep.redraws);
            let name = if name.starts_with("L_") || *name == "loss_total" { name.to_string() } else { format!("L_{name}") };
            row(&format!("gradient {name} ({label})"), *err < opts.tolerance, detail);
        }
    }
    Ok(rows)
}
