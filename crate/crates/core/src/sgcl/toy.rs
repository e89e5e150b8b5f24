//! Randomized desk-scale instances and the loss as a differentiable program.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::forward::{forward, Forward, SgclInputs};
use super::gradcheck::Program;
use super::loss::{adjacency_targets, box_branches, loss_total, mask_targets, GtBundle, LossWeights, PredBundle};
use super::params::{SgclConfig, SgclParams};
use super::real::Real;
use super::tensor::{FeatureMap, HiddenStates, Mat, TokenSpanIndex};
use super::SgclError;
use crate::geometry::BBox;
use crate::model::LogicalCoords;

/// One table's worth of SGCL inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyInstance {
    pub config: SgclConfig,
    pub logical: Vec<LogicalCoords>,
    pub boxes: Vec<BBox>,
    pub inputs: SgclInputs<f64>,
    pub token_logits: Mat<f64>,
    pub tokens: Vec<usize>,
}

/// A random partition of a small grid into exactly `n` rectangles, row-major.
pub fn random_partition(rng: &mut impl Rng, n: usize) -> Vec<LogicalCoords> {
    assert!(n > 0);
    'restart: loop {
        let (rows, cols) = loop {
            let (r, c) = (rng.random_range(1..=4usize), rng.random_range(1..=4usize));
            if r * c >= n && (n > 1 || r * c == 1) {
                break (r, c);
            }
        };
        let mut rects: Vec<[usize; 4]> = (0..rows * cols).map(|k| [k / cols, k / cols, k % cols, k % cols]).collect();
        while rects.len() > n {
            let mut pairs = Vec::new();
            for (i, a) in rects.iter().enumerate() {
                for (j, b) in rects.iter().enumerate() {
                    let side = a[0] == b[0] && a[1] == b[1] && a[3] + 1 == b[2];
                    let below = a[2] == b[2] && a[3] == b[3] && a[1] + 1 == b[0];
                    if side || below {
                        pairs.push((i, j));
                    }
                }
            }
            let Some(&(i, j)) = pairs.as_slice().choose(rng) else {
                continue 'restart;
            };
            let (a, b) = (rects[i], rects[j]);
            rects[i] = [a[0].min(b[0]), a[1].max(b[1]), a[2].min(b[2]), a[3].max(b[3])];
            rects.swap_remove(j);
        }
        let mut out: Vec<LogicalCoords> = rects.iter().map(|r| LogicalCoords::new(r[0], r[1], r[2], r[3])).collect();
        out.sort_by_key(|l| (l.start_row, l.start_col));
        return out;
    }
}

fn random_lines(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..2.0)).collect();
    let total: f64 = w.iter().sum();
    let mut out = vec![0.05];
    for v in w {
        out.push(out.last().unwrap() + 0.9 * v / total);
    }
    out
}

fn uniform_mat(rng: &mut impl Rng, rows: usize, cols: usize, a: f64) -> Mat<f64> {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-a..=a))
}

fn uniform_map(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> FeatureMap<f64> {
    FeatureMap::from_fn(c, h, w, |_, _, _| rng.random_range(-1.0..=1.0))
}

impl ToyInstance {
    pub const VOCAB: usize = 5;
    pub const TARGET_TOKENS: usize = 8;

    /// `n` cells on a random grid with random hidden states, features and token logits.
    pub fn random(config: SgclConfig, n: usize, rng: &mut impl Rng) -> Result<Self, SgclError> {
        config.check()?;
        let logical = random_partition(rng, n);
        let rows = logical.iter().map(|l| l.end_row).max().unwrap() + 1;
        let cols = logical.iter().map(|l| l.end_col).max().unwrap() + 1;
        let ys = random_lines(rng, rows);
        let xs = random_lines(rng, cols);
        let boxes = logical
            .iter()
            .map(|l| {
                let m = rng.random_range(0.0..0.01);
                BBox::new(xs[l.start_col] + m, ys[l.start_row] + m, xs[l.end_col + 1] - m, ys[l.end_row + 1] - m)
            })
            .collect();
        let mut spans = Vec::with_capacity(n);
        let mut t = rng.random_range(1..=2);
        for _ in 0..n {
            let len = rng.random_range(2..=4);
            spans.push((t, t + len - 1));
            t += len + rng.random_range(0..=1);
        }
        let tokens_len = t + 1;
        let d = config.dim;
        let layers = (0..config.layers).map(|_| uniform_mat(rng, tokens_len, d, 1.0)).collect();
        let (h4, w4) = (config.p4_height, config.p4_width);
        let inputs = SgclInputs {
            hidden: HiddenStates::new(layers)?,
            spans: TokenSpanIndex::new(spans, tokens_len)?,
            p3: uniform_map(rng, config.c3, 2 * h4, 2 * w4),
            p4: uniform_map(rng, config.c4, h4, w4),
            p5: uniform_map(rng, config.c5, h4 / 2, w4 / 2),
        };
        let token_logits = uniform_mat(rng, Self::TARGET_TOKENS, Self::VOCAB, 2.0);
        let tokens = (0..Self::TARGET_TOKENS).map(|_| rng.random_range(0..Self::VOCAB)).collect();
        Ok(ToyInstance { config, logical, boxes, inputs, token_logits, tokens })
    }

    /// Shapes agree with the config and the cell count.
    pub fn check(&self) -> Result<(), SgclError> {
        self.config.check()?;
        let n = self.logical.len();
        let mis = |what, expected, found| Err(SgclError::Misaligned { what, expected, found });
        if self.boxes.len() != n {
            return mis("boxes", n, self.boxes.len());
        }
        if self.inputs.spans.len() != n {
            return mis("token spans", n, self.inputs.spans.len());
        }
        if self.inputs.hidden.layers().len() != self.config.layers {
            return mis("hidden layers", self.config.layers, self.inputs.hidden.layers().len());
        }
        if self.token_logits.rows() != self.tokens.len() {
            return mis("token logits", self.tokens.len(), self.token_logits.rows());
        }
        if let Some(&(_, e)) = self.inputs.spans.spans().last() {
            if e >= self.inputs.hidden.tokens() {
                return mis("token count", e + 1, self.inputs.hidden.tokens());
            }
        }
        if (self.inputs.p4.height(), self.inputs.p4.width()) != (self.config.p4_height, self.config.p4_width) {
            return mis("P4 positions", self.config.p4_height * self.config.p4_width, self.inputs.p4.data().len());
        }
        Ok(())
    }

    pub fn gt(&self) -> GtBundle {
        GtBundle {
            boxes: self.boxes.clone(),
            masks: mask_targets(&self.boxes, self.config.p4_height, self.config.p4_width),
            adjacency: adjacency_targets(&self.logical),
            tokens: self.tokens.clone(),
        }
    }

    /// Continuous inputs in a fixed order: hidden layers, P3, P4, P5, token logits.
    pub fn flat_inputs(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in self.inputs.hidden.layers() {
            v.extend_from_slice(l.data());
        }
        for f in [&self.inputs.p3, &self.inputs.p4, &self.inputs.p5] {
            v.extend_from_slice(f.data());
        }
        v.extend_from_slice(self.token_logits.data());
        v
    }

    /// Inputs rebuilt from [`ToyInstance::flat_inputs`] order.
    pub fn unflat_inputs<S: Real>(&self, v: &[S]) -> Result<(SgclInputs<S>, Mat<S>), SgclError> {
        let expected = self.flat_inputs().len();
        if v.len() != expected {
            return Err(SgclError::Shape { what: "input vector", expected, found: v.len() });
        }
        let mut it = v.iter().copied();
        let mut next = || it.next().unwrap();
        let layers = self.inputs.hidden.layers().iter().map(|l| l.map(&mut |_| next())).collect();
        let hidden = HiddenStates::new(layers)?;
        let p3 = self.inputs.p3.map(&mut |_| next());
        let p4 = self.inputs.p4.map(&mut |_| next());
        let p5 = self.inputs.p5.map(&mut |_| next());
        let logits = self.token_logits.map(&mut |_| next());
        let inputs = SgclInputs { hidden, spans: self.inputs.spans.clone(), p3, p4, p5 };
        Ok((inputs, logits))
    }

    /// The same table with cells listed in a new order: cell `i` of the result
    /// is cell `perm[i]` of `self`, and its token block moves with it.
    pub fn permuted(&self, perm: &[usize]) -> ToyInstance {
        let spans = self.inputs.spans.spans();
        let n = spans.len();
        let total = self.inputs.hidden.tokens();
        let block_end = |i: usize| if i + 1 < n { spans[i + 1].0 } else { spans[i].1 + 1 };
        let mut order: Vec<usize> = (0..spans.first().map_or(total, |s| s.0)).collect();
        let mut new_spans = Vec::with_capacity(n);
        for &p in perm {
            let start = order.len();
            new_spans.push((start, start + spans[p].1 - spans[p].0));
            order.extend(spans[p].0..block_end(p));
        }
        order.extend(spans.last().map_or(total, |s| s.1 + 1)..total);
        let layers = self.inputs.hidden.layers().iter().map(|l| l.permute_rows(&order)).collect();
        ToyInstance {
            config: self.config,
            logical: perm.iter().map(|&p| self.logical[p]).collect(),
            boxes: perm.iter().map(|&p| self.boxes[p]).collect(),
            inputs: SgclInputs {
                hidden: HiddenStates::new(layers).unwrap(),
                spans: TokenSpanIndex::new(new_spans, total).unwrap(),
                ..self.inputs.clone()
            },
            token_logits: self.token_logits.clone(),
            tokens: self.tokens.clone(),
        }
    }
}

/// Predictions the loss reads, taken from a forward pass.
pub fn prediction<S: Real>(f: &Forward<S>, token_logits: Mat<S>) -> PredBundle<S> {
    PredBundle {
        boxes: f.refined.all_corners(),
        mask_logits: f.mask_logits.clone(),
        adj_row: f.masks.logits_row.clone(),
        adj_col: f.masks.logits_col.clone(),
        token_logits,
    }
}

/// Every discrete decision a forward pass and loss make.
pub fn branches<S: Real>(f: &Forward<S>, gt: &GtBundle) -> Vec<bool> {
    let mut out: Vec<bool> = f.masks.row.data().to_vec();
    out.extend_from_slice(f.masks.col.data());
    for n in 0..f.refined.len() {
        let raw = f.refined.raw_corners(n).map(Real::val);
        out.extend(raw.iter().flat_map(|&v| [v < 0.0, v > 1.0]));
        let clipped = f.refined.corners(n).map(Real::val);
        out.extend(box_branches(&clipped, &gt.boxes[n]));
    }
    out
}

/// The five loss terms and the weighted total as functions of the parameters
/// and all continuous inputs of one instance.
///
/// Outputs are ordered `ce, b, iou, m, s, total`.
pub struct ToyProblem {
    pub instance: ToyInstance,
    pub weights: LossWeights,
    gt: GtBundle,
    param_len: usize,
}

impl ToyProblem {
    pub const OUTPUTS: [&'static str; 6] = ["L_ce", "L_b", "L_iou", "L_m", "L_s", "loss_total"];

    pub fn new(instance: ToyInstance, weights: LossWeights) -> Result<Self, SgclError> {
        instance.check()?;
        let param_len = SgclParams::zeros(instance.config)?.len();
        let gt = instance.gt();
        Ok(ToyProblem { instance, weights, gt, param_len })
    }

    pub fn gt(&self) -> &GtBundle {
        &self.gt
    }

    pub fn param_len(&self) -> usize {
        self.param_len
    }

    /// `params` followed by the instance inputs.
    pub fn point(&self, params: &SgclParams<f64>) -> Vec<f64> {
        let mut x = params.flat();
        x.extend(self.instance.flat_inputs());
        x
    }

    pub fn split<S: Real>(&self, x: &[S]) -> Result<(SgclParams<S>, SgclInputs<S>, Mat<S>), SgclError> {
        if x.len() < self.param_len {
            return Err(SgclError::Shape { what: "point", expected: self.param_len, found: x.len() });
        }
        let params = SgclParams::from_flat(self.instance.config, &x[..self.param_len])?;
        let (inputs, logits) = self.instance.unflat_inputs(&x[self.param_len..])?;
        Ok((params, inputs, logits))
    }

    pub fn forward<S: Real>(&self, x: &[S]) -> Result<(Forward<S>, PredBundle<S>), SgclError> {
        let (params, inputs, logits) = self.split(x)?;
        let f = forward(&params, &inputs)?;
        let pred = prediction(&f, logits);
        Ok((f, pred))
    }
}

impl Program for ToyProblem {
    fn dim(&self) -> usize {
        self.param_len + self.instance.flat_inputs().len()
    }

    fn outputs(&self) -> usize {
        Self::OUTPUTS.len()
    }

    fn run<S: Real>(&self, x: &[S]) -> Result<(Vec<S>, Vec<bool>), SgclError> {
        let (f, pred) = self.forward(x)?;
        let (total, t) = loss_total(&pred, &self.gt, &self.weights)?;
        let mut values = t.to_array().to_vec();
        values.push(total);
        Ok((values, branches(&f, &self.gt)))
    }
}

/// One plain gradient-descent step on the total loss.
pub fn descend(problem: &ToyProblem, x: &[f64], lr: f64) -> Result<Vec<f64>, SgclError> {
    let g = super::gradcheck::Differentiable::gradients(problem, x)?;
    let total = g.last().expect("total is the last output");
    Ok(x.iter().zip(total).map(|(v, d)| v - lr * d).collect())
}

/// Random unit vector of length `n`.
pub fn random_direction(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let norm = crate::math::sqrt(v.iter().map(|x| x * x).sum());
    v.into_iter().map(|x| x / norm).collect()
}

/// A uniformly random permutation of `0..n`.
pub fn random_permutation(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}
