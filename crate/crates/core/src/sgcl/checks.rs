//! Structural invariants and the gradient suite over randomized instances.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::forward::{enhance_cells, forward, refine_boxes, regress_initial, Forward};
use super::gradcheck::{grad_check, Analytic, Differentiable};
use super::loss::{adjacency_targets, loss_gradients, loss_terms, GtBundle, LossWeights, PredBundle};
use super::params::{Attention, SgclParams};
use super::tensor::Mat;
use super::toy::{prediction, random_direction, random_permutation, ToyInstance, ToyProblem};
use super::SgclError;

/// Outcome of one check over many instances.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn zero_cross(params: &SgclParams<f64>) -> SgclParams<f64> {
    let mut p = params.clone();
    for b in [&mut p.branch_row, &mut p.branch_col] {
        let z = Mat::filled(b.cross.wo.rows(), b.cross.wo.cols(), 0.0);
        b.cross = Attention { wo: z, ..b.cross.clone() };
    }
    p
}

/// Row `x` of `C'` is bit-identical after replacing row `y` of `C` whenever
/// `y` is outside both of `x`'s mask rows. Returns the number of pairs tried.
pub fn mask_isolation(
    inst: &ToyInstance,
    params: &SgclParams<f64>,
    rng: &mut impl Rng,
) -> Result<Result<usize, String>, SgclError> {
    let params = zero_cross(params);
    let f = forward(&params, &inst.inputs)?;
    let gt = adjacency_targets(&inst.logical);
    let mut tried = 0;
    for (m_row, m_col) in [(&f.masks.row, &f.masks.col), (&gt.row, &gt.col)] {
        let base = enhance_cells(&f.cells, m_row, m_col, &f.visual, &params)?;
        let n = f.cells.rows();
        for x in 0..n {
            for y in (0..n).filter(|&y| !*m_row.get(x, y) && !*m_col.get(x, y)) {
                let mut c = f.cells.clone();
                for v in c.row_mut(y) {
                    *v += rng.random_range(-5.0..5.0);
                }
                let out = enhance_cells(&c, m_row, m_col, &f.visual, &params)?;
                tried += 1;
                if out.row(x) != base.row(x) {
                    return Ok(Err(format!("cell {x} changed when cell {y} was perturbed")));
                }
            }
        }
    }
    Ok(Ok(tried))
}

fn rows_close(a: &Mat<f64>, b: &Mat<f64>, perm: &[usize], tol: f64) -> bool {
    perm.iter()
        .enumerate()
        .all(|(i, &p)| a.row(i).iter().zip(b.row(p)).all(|(u, v)| (u - v).abs() <= tol))
}

/// Permuting cells permutes both box sets and leaves every loss term unchanged.
pub fn permutation_equivariance(
    inst: &ToyInstance,
    params: &SgclParams<f64>,
    rng: &mut impl Rng,
    tol: f64,
) -> Result<Result<(), String>, SgclError> {
    let perm = random_permutation(rng, inst.logical.len());
    let other = inst.permuted(&perm);
    let f0 = forward(params, &inst.inputs)?;
    let f1 = forward(params, &other.inputs)?;
    let mask_perm = |m: &Mat<bool>| Mat::from_fn(m.rows(), m.cols(), |i, j| *m.get(perm[i], perm[j]));
    if f1.masks.row != mask_perm(&f0.masks.row) || f1.masks.col != mask_perm(&f0.masks.col) {
        return Ok(Err(String::from("structure masks not permuted")));
    }
    if !rows_close(&f1.initial.logits, &f0.initial.logits, &perm, tol) {
        return Ok(Err(String::from("initial boxes not permuted")));
    }
    if !rows_close(&f1.refined.logits, &f0.refined.logits, &perm, tol) {
        return Ok(Err(String::from("refined boxes not permuted")));
    }
    let l0 = loss_terms(&prediction(&f0, inst.token_logits.clone()), &inst.gt())?;
    let l1 = loss_terms(&prediction(&f1, other.token_logits.clone()), &other.gt())?;
    for ((name, a), b) in super::loss::LossTerms::<f64>::NAMES.iter().zip(l0.to_array()).zip(l1.to_array()) {
        if (a - b).abs() > tol * a.abs().max(1.0) {
            return Ok(Err(format!("L_{name} changed: {a} vs {b}")));
        }
    }
    Ok(Ok(()))
}

/// With every delta head zeroed, refinement returns its input anchors bit for bit.
pub fn zero_update_fixed_point(inst: &ToyInstance, params: &SgclParams<f64>) -> Result<bool, SgclError> {
    let mut p = params.clone();
    for l in &mut p.refine {
        let z = |m: &Mat<f64>| Mat::filled(m.rows(), m.cols(), 0.0);
        l.delta.out.w = z(&l.delta.out.w);
        l.delta.out.b = z(&l.delta.out.b);
    }
    let f: Forward<f64> = forward(&p, &inst.inputs)?;
    let init = regress_initial(&f.enhanced, &p);
    let refined = refine_boxes(&init, &f.enhanced, &f.p3, &f.p4, &p)?;
    Ok(refined == init && refined.boxes() == init.boxes())
}

/// Symmetric with a unit diagonal.
pub fn adjacency_well_formed(inst: &ToyInstance) -> bool {
    let t = adjacency_targets(&inst.logical);
    [&t.row, &t.col].iter().all(|m| {
        let n = m.rows();
        (0..n).all(|x| *m.get(x, x) && (0..n).all(|y| m.get(x, y) == m.get(y, x)))
    })
}

/// Runs the four structural checks on `instances` fresh random instances.
pub fn structural_suite(rng: &mut impl Rng, base: &[ToyInstance], instances: usize) -> Result<Vec<CheckOutcome>, SgclError> {
    let mut iso = (true, 0usize, String::new());
    let mut perm = (true, String::new());
    let mut fixed = true;
    let mut adj = true;
    for k in 0..instances {
        let inst = if base.is_empty() {
            ToyInstance::random(super::SgclConfig::toy(), 6, rng)?
        } else {
            base[k % base.len()].clone()
        };
        let params = SgclParams::random(inst.config, rng)?;
        match mask_isolation(&inst, &params, rng)? {
            Ok(n) => iso.1 += n,
            Err(e) if iso.0 => iso = (false, iso.1, e),
            Err(_) => {}
        }
        if let Err(e) = permutation_equivariance(&inst, &params, rng, 1e-9)? {
            if perm.0 {
                perm = (false, e);
            }
        }
        fixed &= zero_update_fixed_point(&inst, &params)?;
        adj &= adjacency_well_formed(&inst);
    }
    let iso_ok = iso.0 && iso.1 > 0;
    Ok(alloc::vec![
        CheckOutcome {
            name: "mask isolation",
            passed: iso_ok,
            detail: if iso.0 { format!("{} isolated pairs perturbed", iso.1) } else { iso.2 },
        },
        CheckOutcome {
            name: "permutation equivariance",
            passed: perm.0,
            detail: if perm.0 { String::from("boxes permuted, losses equal within 1e-9") } else { perm.1 },
        },
        CheckOutcome {
            name: "zero-update fixed point",
            passed: fixed,
            detail: String::from("refine with zero delta heads returns its anchors"),
        },
        CheckOutcome {
            name: "adjacency targets",
            passed: adj,
            detail: String::from("symmetric with unit diagonal"),
        },
    ])
}

/// Per-output worst relative error over a set of smooth points.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub names: Vec<&'static str>,
    pub worst: Vec<f64>,
    pub points: usize,
    /// Directions redrawn because a branch flipped inside the difference stencil.
    pub redraws: usize,
}

impl GradReport {
    pub fn max_error(&self) -> f64 {
        self.worst.iter().copied().fold(0.0, f64::max)
    }
}

const MAX_REDRAWS: usize = 20;

fn check_smooth<D: Differentiable>(
    op: &D,
    x: &[f64],
    eps: f64,
    rng: &mut impl Rng,
    worst: &mut [f64],
    redraws: &mut usize,
) -> Result<(), SgclError> {
    for _ in 0..MAX_REDRAWS {
        let d = random_direction(rng, x.len());
        let r = grad_check(op, x, &d, eps).map_err(|e| match e {
            super::gradcheck::GradCheckError::Eval(e) => e,
            _ => SgclError::NonFinite("gradient check"),
        })?;
        if !r.smooth {
            *redraws += 1;
            continue;
        }
        for (w, e) in worst.iter_mut().zip(&r.errors) {
            *w = w.max(*e);
        }
        return Ok(());
    }
    Err(SgclError::NonFinite("no smooth direction found"))
}

impl GradReport {
    /// Empty report over the six network outputs.
    pub fn network() -> Self {
        GradReport { names: ToyProblem::OUTPUTS.to_vec(), worst: alloc::vec![0.0; 6], points: 0, redraws: 0 }
    }

    /// Empty report over the five loss terms.
    pub fn closed_form() -> Self {
        let names = super::loss::LossTerms::<f64>::NAMES.to_vec();
        GradReport { names, worst: alloc::vec![0.0; 5], points: 0, redraws: 0 }
    }

    /// Tape gradients through the whole module at `params`.
    pub fn add_network_point(
        &mut self,
        rng: &mut impl Rng,
        inst: ToyInstance,
        params: &SgclParams<f64>,
        eps: f64,
    ) -> Result<(), SgclError> {
        let problem = ToyProblem::new(inst, LossWeights::default())?;
        let x = problem.point(params);
        check_smooth(&problem, &x, eps, rng, &mut self.worst, &mut self.redraws)?;
        self.points += 1;
        Ok(())
    }

    /// Hand-derived gradients with respect to the predictions made at `params`.
    pub fn add_closed_form_point(
        &mut self,
        rng: &mut impl Rng,
        inst: ToyInstance,
        params: &SgclParams<f64>,
        eps: f64,
    ) -> Result<(), SgclError> {
        let problem = ToyProblem::new(inst, LossWeights::default())?;
        let (_, pred) = problem.forward(&problem.point(params))?;
        let gt: GtBundle = problem.gt().clone();
        let template = pred.clone();
        let op = Analytic {
            dim: template.flat().len(),
            outputs: 5,
            value: |x: &[f64]| {
                let p: PredBundle<f64> = template.unflat(x)?;
                let t = loss_terms(&p, &gt)?;
                let mut br = Vec::new();
                for (b, g) in p.boxes.iter().zip(&gt.boxes) {
                    br.extend(super::loss::box_branches(b, g));
                }
                Ok((t.to_array().to_vec(), br))
            },
            gradient: |x: &[f64]| {
                let p = template.unflat(x)?;
                let g = loss_gradients(&p, &gt)?;
                Ok(g.to_array().iter().map(|b| b.flat()).collect())
            },
        };
        check_smooth(&op, &pred.flat(), eps, rng, &mut self.worst, &mut self.redraws)?;
        self.points += 1;
        Ok(())
    }
}

fn draw(rng: &mut impl Rng, base: &[ToyInstance], k: usize) -> Result<(ToyInstance, SgclParams<f64>), SgclError> {
    let inst = if base.is_empty() {
        ToyInstance::random(super::SgclConfig::toy(), 6, rng)?
    } else {
        base[k % base.len()].clone()
    };
    let params = SgclParams::random(inst.config, rng)?;
    Ok((inst, params))
}

/// Gradients of every loss term and the total through the whole module,
/// taken by the tape, against central differences at `points` random points.
pub fn network_gradients(rng: &mut impl Rng, base: &[ToyInstance], points: usize, eps: f64) -> Result<GradReport, SgclError> {
    let mut report = GradReport::network();
    for k in 0..points {
        let (inst, params) = draw(rng, base, k)?;
        report.add_network_point(rng, inst, &params, eps)?;
    }
    Ok(report)
}

/// Hand-derived gradients of each term with respect to the predictions.
pub fn closed_form_gradients(rng: &mut impl Rng, base: &[ToyInstance], points: usize, eps: f64) -> Result<GradReport, SgclError> {
    let mut report = GradReport::closed_form();
    for k in 0..points {
        let (inst, params) = draw(rng, base, k)?;
        report.add_closed_form_point(rng, inst, &params, eps)?;
    }
    Ok(report)
}
