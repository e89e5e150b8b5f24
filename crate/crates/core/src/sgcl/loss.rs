//! Ground-truth targets and the weighted fine-tuning loss.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::real::Real;
use super::tensor::Mat;
use super::SgclError;
use crate::geometry::BBox;
use crate::math;
use crate::model::LogicalCoords;

/// Coefficients of the five loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub ce: f64,
    pub b: f64,
    pub iou: f64,
    pub m: f64,
    pub s: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            ce: 1.0,
            b: 0.05,
            iou: 0.03,
            m: 0.03,
            s: 0.05,
        }
    }
}

impl LossWeights {
    pub fn is_valid(&self) -> bool {
        [self.ce, self.b, self.iou, self.m, self.s]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
    }

    /// `λb·Lb + λiou·Liou + λm·Lm + λs·Ls + λce·Lce`, summed left to right.
    pub fn combine<S: Real>(&self, t: &LossTerms<S>) -> S {
        t.b.scale(self.b) + t.iou.scale(self.iou) + t.m.scale(self.m) + t.s.scale(self.s) + t.ce.scale(self.ce)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms<T> {
    pub ce: T,
    pub b: T,
    pub iou: T,
    pub m: T,
    pub s: T,
}

impl<T> LossTerms<T> {
    pub const NAMES: [&'static str; 5] = ["ce", "b", "iou", "m", "s"];

    pub fn to_array(self) -> [T; 5] {
        [self.ce, self.b, self.iou, self.m, self.s]
    }

    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> LossTerms<U> {
        LossTerms {
            ce: f(self.ce),
            b: f(self.b),
            iou: f(self.iou),
            m: f(self.m),
            s: f(self.s),
        }
    }
}

/// Row and column co-membership of cells.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyTargets {
    pub row: Mat<bool>,
    pub col: Mat<bool>,
}

/// Two cells share a row (column) iff their row (column) ranges intersect.
pub fn adjacency_targets(cells: &[LogicalCoords]) -> AdjacencyTargets {
    let n = cells.len();
    let overlap = |a1: usize, a2: usize, b1: usize, b2: usize| a1 <= b2 && b1 <= a2;
    AdjacencyTargets {
        row: Mat::from_fn(n, n, |x, y| {
            let (a, b) = (&cells[x], &cells[y]);
            x == y || overlap(a.start_row, a.end_row, b.start_row, b.end_row)
        }),
        col: Mat::from_fn(n, n, |x, y| {
            let (a, b) = (&cells[x], &cells[y]);
            x == y || overlap(a.start_col, a.end_col, b.start_col, b.end_col)
        }),
    }
}

/// Rasterizes each box onto a `height x width` grid: a position is set iff
/// its centre lies in `[x1, x2) x [y1, y2)`.
pub fn mask_targets(boxes: &[BBox], height: usize, width: usize) -> Mat<bool> {
    Mat::from_fn(boxes.len(), height * width, |n, t| {
        let b = &boxes[n];
        let cx = ((t % width) as f64 + 0.5) / width as f64;
        let cy = ((t / width) as f64 + 0.5) / height as f64;
        b.x1 <= cx && cx < b.x2 && b.y1 <= cy && cy < b.y2
    })
}

/// Model outputs the loss reads.
#[derive(Debug, Clone, PartialEq)]
pub struct PredBundle<S> {
    /// Corner-form boxes, one per cell.
    pub boxes: Vec<[S; 4]>,
    /// `cells x positions` mask logits.
    pub mask_logits: Mat<S>,
    pub adj_row: Mat<S>,
    pub adj_col: Mat<S>,
    /// `tokens x vocab` next-token logits.
    pub token_logits: Mat<S>,
}

impl PredBundle<f64> {
    pub fn zeros_like<S>(p: &PredBundle<S>) -> Self {
        let z = |m: &Mat<S>| Mat::filled(m.rows(), m.cols(), 0.0);
        PredBundle {
            boxes: alloc::vec![[0.0; 4]; p.boxes.len()],
            mask_logits: z(&p.mask_logits),
            adj_row: z(&p.adj_row),
            adj_col: z(&p.adj_col),
            token_logits: z(&p.token_logits),
        }
    }

    /// All values in a fixed order: boxes, masks, row, col, tokens.
    pub fn flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.boxes.iter().flatten().copied().collect();
        for m in [&self.mask_logits, &self.adj_row, &self.adj_col, &self.token_logits] {
            v.extend_from_slice(m.data());
        }
        v
    }

    /// Inverse of [`PredBundle::flat`] using `self` for shapes.
    pub fn unflat<S: Real>(&self, v: &[S]) -> Result<PredBundle<S>, SgclError> {
        let expected = self.flat().len();
        if v.len() != expected {
            return Err(SgclError::Shape { what: "prediction vector", expected, found: v.len() });
        }
        let nb = 4 * self.boxes.len();
        let boxes = v[..nb].chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
        let mut it = v[nb..].iter().copied();
        let mut next = |m: &Mat<f64>| m.map(&mut |_| it.next().unwrap());
        Ok(PredBundle {
            boxes,
            mask_logits: next(&self.mask_logits),
            adj_row: next(&self.adj_row),
            adj_col: next(&self.adj_col),
            token_logits: next(&self.token_logits),
        })
    }
}

/// Targets aligned with a [`PredBundle`].
#[derive(Debug, Clone, PartialEq)]
pub struct GtBundle {
    pub boxes: Vec<BBox>,
    pub masks: Mat<bool>,
    pub adjacency: AdjacencyTargets,
    pub tokens: Vec<usize>,
}

impl GtBundle {
    fn check<S: Real>(&self, p: &PredBundle<S>) -> Result<(), SgclError> {
        let n = self.boxes.len();
        let mis = |what, expected, found| Err(SgclError::Misaligned { what, expected, found });
        if p.boxes.len() != n {
            return mis("boxes", n, p.boxes.len());
        }
        if p.mask_logits.shape() != self.masks.shape() {
            return mis("mask logits", self.masks.rows() * self.masks.cols(), p.mask_logits.data().len());
        }
        if self.masks.rows() != n {
            return mis("mask targets", n, self.masks.rows());
        }
        for (what, pm, gm) in [
            ("row adjacency", &p.adj_row, &self.adjacency.row),
            ("column adjacency", &p.adj_col, &self.adjacency.col),
        ] {
            if pm.shape() != (n, n) || gm.shape() != (n, n) {
                return mis(what, n * n, pm.data().len().min(gm.data().len()));
            }
        }
        if p.token_logits.rows() != self.tokens.len() {
            return mis("token logits", self.tokens.len(), p.token_logits.rows());
        }
        if let Some(&t) = self.tokens.iter().find(|&&t| t >= p.token_logits.cols()) {
            return mis("token id", p.token_logits.cols(), t);
        }
        Ok(())
    }
}

/// Mean absolute corner difference.
pub fn box_l1<S: Real>(p: &[S; 4], g: &BBox) -> S {
    let g = g.to_array();
    let d: Vec<S> = (0..4).map(|k| (p[k] - S::cst(g[k])).abs()).collect();
    S::sum(&d).scale(0.25)
}

/// `1 - GIoU`, matching [`crate::geometry::giou_loss`] on plain values.
pub fn box_giou_loss<S: Real>(p: &[S; 4], g: &BBox) -> S {
    let [x1, y1, x2, y2] = *p;
    let c = |v: f64| S::cst(v);
    let zero = c(0.0);
    let iw = (x2.min(c(g.x2)) - x1.max(c(g.x1))).max(zero);
    let ih = (y2.min(c(g.y2)) - y1.max(c(g.y1))).max(zero);
    let inter = iw * ih;
    let union = (x2 - x1) * (y2 - y1) + c(g.area()) - inter;
    let enc = (x2.max(c(g.x2)) - x1.min(c(g.x1))) * (y2.max(c(g.y2)) - y1.min(c(g.y1)));
    let iou = if union.val() <= 0.0 { zero } else { inter / union };
    let giou = if enc.val() <= 0.0 { iou } else { iou - (enc - union) / enc };
    c(1.0) - giou
}

/// Every comparison the two box losses branch on, for smoothness checks.
pub fn box_branches(p: &[f64; 4], g: &BBox) -> [bool; 14] {
    let g = g.to_array();
    let iw = p[2].min(g[2]) - p[0].max(g[0]);
    let ih = p[3].min(g[3]) - p[1].max(g[1]);
    [
        p[0] < g[0],
        p[1] < g[1],
        p[2] < g[2],
        p[3] < g[3],
        p[0] > g[0],
        p[1] > g[1],
        p[2] > g[2],
        p[3] > g[3],
        iw > 0.0,
        ih > 0.0,
        p[0] == g[0],
        p[1] == g[1],
        p[2] == g[2],
        p[3] == g[3],
    ]
}

/// Binary cross-entropy on a logit: `softplus(z) - t z`.
pub fn bce_logit<S: Real>(z: S, t: bool) -> S {
    if t {
        z.softplus() - z
    } else {
        z.softplus()
    }
}

/// Mean BCE plus soft dice for one cell's mask.
pub fn mask_loss<S: Real>(logits: &[S], targets: &[bool]) -> S {
    if logits.is_empty() {
        return S::cst(0.0);
    }
    let bce: Vec<S> = logits.iter().zip(targets).map(|(&z, &t)| bce_logit(z, t)).collect();
    let bce = S::sum(&bce).scale(1.0 / logits.len() as f64);
    let p: Vec<S> = logits.iter().map(|z| z.sigmoid()).collect();
    let pt: Vec<S> = p.iter().zip(targets).filter(|(_, &t)| t).map(|(&v, _)| v).collect();
    let st = targets.iter().filter(|&&t| t).count() as f64;
    let num = S::sum(&pt).scale(2.0) + S::cst(1.0);
    let den = S::sum(&p) + S::cst(st + 1.0);
    bce + S::cst(1.0) - num / den
}

fn mean<S: Real>(v: &[S]) -> S {
    if v.is_empty() {
        S::cst(0.0)
    } else {
        S::sum(v).scale(1.0 / v.len() as f64)
    }
}

/// All five terms. Empty groups (no cells, no tokens) contribute zero.
pub fn loss_terms<S: Real>(pred: &PredBundle<S>, gt: &GtBundle) -> Result<LossTerms<S>, SgclError> {
    gt.check(pred)?;
    let n = gt.boxes.len();
    let b: Vec<S> = pred.boxes.iter().zip(&gt.boxes).map(|(p, g)| box_l1(p, g)).collect();
    let iou: Vec<S> = pred.boxes.iter().zip(&gt.boxes).map(|(p, g)| box_giou_loss(p, g)).collect();
    let m: Vec<S> = (0..n).map(|i| mask_loss(pred.mask_logits.row(i), gt.masks.row(i))).collect();
    let mut s = Vec::with_capacity(2 * n * n);
    for (logits, target) in [(&pred.adj_row, &gt.adjacency.row), (&pred.adj_col, &gt.adjacency.col)] {
        for x in 0..n {
            for y in (0..n).filter(|&y| y != x) {
                s.push(bce_logit(*logits.get(x, y), *target.get(x, y)));
            }
        }
    }
    let ce: Vec<S> = gt
        .tokens
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let row = pred.token_logits.row(i);
            S::logsumexp(row) - row[t]
        })
        .collect();
    Ok(LossTerms {
        ce: mean(&ce),
        b: mean(&b),
        iou: mean(&iou),
        m: mean(&m),
        s: mean(&s),
    })
}

/// Weighted total and the per-term breakdown.
pub fn loss_total<S: Real>(
    pred: &PredBundle<S>,
    gt: &GtBundle,
    weights: &LossWeights,
) -> Result<(S, LossTerms<S>), SgclError> {
    if !weights.is_valid() {
        return Err(SgclError::Weights);
    }
    let t = loss_terms(pred, gt)?;
    Ok((weights.combine(&t), t))
}

/// Hand-derived gradient of each term with respect to every prediction.
pub fn loss_gradients(pred: &PredBundle<f64>, gt: &GtBundle) -> Result<LossTerms<PredBundle<f64>>, SgclError> {
    gt.check(pred)?;
    let n = gt.boxes.len();
    let zero = PredBundle::zeros_like(pred);
    let mut out = LossTerms {
        ce: zero.clone(),
        b: zero.clone(),
        iou: zero.clone(),
        m: zero.clone(),
        s: zero,
    };
    if n > 0 {
        let k = 1.0 / n as f64;
        for (i, (p, g)) in pred.boxes.iter().zip(&gt.boxes).enumerate() {
            let g4 = g.to_array();
            for c in 0..4 {
                let sign = if p[c] < g4[c] { -1.0 } else { 1.0 };
                out.b.boxes[i][c] = 0.25 * k * sign;
            }
            let d = giou_loss_grad(p, g);
            for c in 0..4 {
                out.iou.boxes[i][c] = k * d[c];
            }
            let z = pred.mask_logits.row(i);
            let t = gt.masks.row(i);
            let dm = mask_loss_grad(z, t);
            for (j, v) in dm.into_iter().enumerate() {
                out.m.mask_logits.set(i, j, k * v);
            }
        }
    }
    if n > 1 {
        let k = 1.0 / (2 * n * (n - 1)) as f64;
        for (logits, target, grad) in [
            (&pred.adj_row, &gt.adjacency.row, &mut out.s.adj_row),
            (&pred.adj_col, &gt.adjacency.col, &mut out.s.adj_col),
        ] {
            for x in 0..n {
                for y in (0..n).filter(|&y| y != x) {
                    let t = if *target.get(x, y) { 1.0 } else { 0.0 };
                    grad.set(x, y, k * (math::sigmoid(*logits.get(x, y)) - t));
                }
            }
        }
    }
    let nt = gt.tokens.len();
    for (i, &t) in gt.tokens.iter().enumerate() {
        let row = pred.token_logits.row(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|&v| math::exp(v - m)).sum();
        for (j, &v) in row.iter().enumerate() {
            let p = math::exp(v - m) / z;
            let onehot = if j == t { 1.0 } else { 0.0 };
            out.ce.token_logits.set(i, j, (p - onehot) / nt as f64);
        }
    }
    Ok(out)
}

/// d(1 - GIoU)/d(x1, y1, x2, y2) for a box with positive union and enclosure.
fn giou_loss_grad(p: &[f64; 4], g: &BBox) -> [f64; 4] {
    let [x1, y1, x2, y2] = *p;
    let iw = x2.min(g.x2) - x1.max(g.x1);
    let ih = y2.min(g.y2) - y1.max(g.y1);
    let (iwp, ihp) = (iw.max(0.0), ih.max(0.0));
    let inter = iwp * ihp;
    let (pw, ph) = (x2 - x1, y2 - y1);
    let union = pw * ph + g.area() - inter;
    let ew = x2.max(g.x2) - x1.min(g.x1);
    let eh = y2.max(g.y2) - y1.min(g.y1);
    let enc = ew * eh;
    let on = |b: bool| if b { 1.0 } else { 0.0 };
    let overlap = iw > 0.0 && ih > 0.0;
    let d_inter = if overlap {
        [
            -ihp * on(x1 > g.x1),
            -iwp * on(y1 > g.y1),
            ihp * on(x2 < g.x2),
            iwp * on(y2 < g.y2),
        ]
    } else {
        [0.0; 4]
    };
    let d_area = [-ph, -pw, ph, pw];
    let d_enc = [-eh * on(x1 < g.x1), -ew * on(y1 < g.y1), eh * on(x2 > g.x2), ew * on(y2 > g.y2)];
    let mut out = [0.0; 4];
    for k in 0..4 {
        let du = d_area[k] - d_inter[k];
        // loss = 2 - I/U - U/E
        out[k] = -(d_inter[k] * union - inter * du) / (union * union) - (du * enc - union * d_enc[k]) / (enc * enc);
    }
    out
}

fn mask_loss_grad(z: &[f64], t: &[bool]) -> Vec<f64> {
    let np = z.len() as f64;
    let p: Vec<f64> = z.iter().map(|&v| math::sigmoid(v)).collect();
    let st = t.iter().filter(|&&v| v).count() as f64;
    let sp: f64 = p.iter().sum();
    let spt: f64 = p.iter().zip(t).filter(|(_, &v)| v).map(|(v, _)| v).sum();
    let num = 2.0 * spt + 1.0;
    let den = sp + st + 1.0;
    p.iter()
        .zip(t)
        .map(|(&pj, &tj)| {
            let tj = if tj { 1.0 } else { 0.0 };
            let bce = (pj - tj) / np;
            let d_dice_dp = -(2.0 * tj * den - num) / (den * den);
            bce + d_dice_dp * pj * (1.0 - pj)
        })
        .collect()
}
