//! Forward computation: pyramid fusion through anchor refinement.

use alloc::vec::Vec;
use core::f64::consts::PI;

use super::params::{Attention, Linear, Mlp, SgclParams};
use super::real::{masked_softmax, Real};
use super::tensor::{FeatureMap, HiddenStates, Mat, TokenSpanIndex};
use super::SgclError;
use crate::geometry::BBox;
use crate::math;

fn linear<S: Real>(x: &Mat<S>, l: &Linear<S>) -> Mat<S> {
    x.mul_t(&l.w).add_row(l.b.row(0))
}

fn mlp<S: Real>(x: &Mat<S>, m: &Mlp<S>) -> Mat<S> {
    let h = linear(x, &m.hidden);
    let h = h.map(&mut |v| v.tanh());
    linear(&h, &m.out)
}

fn conv1x1<S: Real>(f: &FeatureMap<S>, l: &Linear<S>) -> FeatureMap<S> {
    let t = linear(&f.tokens(), l);
    FeatureMap::from_tokens(&t, f.height(), f.width()).expect("token count preserved")
}

fn upsample2<S: Real>(f: &FeatureMap<S>) -> FeatureMap<S> {
    FeatureMap::from_fn(f.channels(), 2 * f.height(), 2 * f.width(), |c, y, x| f.at(c, y / 2, x / 2))
}

fn add_maps<S: Real>(a: &FeatureMap<S>, b: &FeatureMap<S>) -> FeatureMap<S> {
    FeatureMap::from_fn(a.channels(), a.height(), a.width(), |c, y, x| a.at(c, y, x) + b.at(c, y, x))
}

fn check_channels(what: &'static str, f_channels: usize, l: &Linear<impl Real>) -> Result<(), SgclError> {
    if f_channels != l.w.cols() {
        return Err(SgclError::Shape { what, expected: l.w.cols(), found: f_channels });
    }
    Ok(())
}

/// `P3' = Conv31(P3) + Conv32(Up(P4))` and `P4' = Conv41(P4) + Conv42(Up(P5))`.
///
/// Convolutions are 1x1 channel projections and upsampling repeats each
/// position into a 2x2 block.
pub fn fuse_pyramid<S: Real>(
    p3: &FeatureMap<S>,
    p4: &FeatureMap<S>,
    p5: &FeatureMap<S>,
    params: &SgclParams<S>,
) -> Result<(FeatureMap<S>, FeatureMap<S>), SgclError> {
    for (what, fine, coarse) in [("P3 size", p3, p4), ("P4 size", p4, p5)] {
        if (fine.height(), fine.width()) != (2 * coarse.height(), 2 * coarse.width()) {
            return Err(SgclError::Shape {
                what,
                expected: 4 * coarse.height() * coarse.width(),
                found: fine.height() * fine.width(),
            });
        }
    }
    check_channels("P3 channels", p3.channels(), &params.conv31)?;
    check_channels("P4 channels", p4.channels(), &params.conv32)?;
    check_channels("P4 channels", p4.channels(), &params.conv41)?;
    check_channels("P5 channels", p5.channels(), &params.conv42)?;
    let f3 = add_maps(&conv1x1(p3, &params.conv31), &conv1x1(&upsample2(p4), &params.conv32));
    let f4 = add_maps(&conv1x1(p4, &params.conv41), &conv1x1(&upsample2(p5), &params.conv42));
    Ok((f3, f4))
}

/// Visual tokens: row-major positions of `P4'` plus the positional table.
pub fn flatten_with_pos<S: Real>(p4: &FeatureMap<S>, pos: &Mat<S>) -> Result<Mat<S>, SgclError> {
    let t = p4.tokens();
    if t.shape() != pos.shape() {
        return Err(SgclError::Shape {
            what: "positional table",
            expected: t.rows() * t.cols(),
            found: pos.rows() * pos.cols(),
        });
    }
    Ok(t.add(pos))
}

pub fn softmax<S: Real>(w: &[S]) -> Vec<S> {
    masked_softmax(w, |_| true)
}

/// `H = sum_i softmax(w)_i h_i`.
pub fn aggregate_layers<S: Real>(h: &HiddenStates<S>, w: &[S]) -> Result<Mat<S>, SgclError> {
    if w.len() != h.layers().len() {
        return Err(SgclError::Shape {
            what: "layer weights",
            expected: h.layers().len(),
            found: w.len(),
        });
    }
    let a = softmax(w);
    let (t, d) = (h.tokens(), h.dim());
    Ok(Mat::from_fn(t, d, |r, c| {
        let col: Vec<S> = h.layers().iter().map(|l| *l.get(r, c)).collect();
        S::dot(&a, &col)
    }))
}

/// Mean of `H` rows over each inclusive span.
pub fn pool_cells<S: Real>(h: &Mat<S>, spans: &TokenSpanIndex) -> Result<Mat<S>, SgclError> {
    if let Some((i, &(s, e))) = spans.spans().iter().enumerate().find(|(_, &(_, e))| e >= h.rows()) {
        return Err(SgclError::BadSpan { cell: i, start: s, end: e });
    }
    let d = h.cols();
    let mut out = Mat::zeros(spans.len(), d);
    for (n, &(s, e)) in spans.spans().iter().enumerate() {
        let k = 1.0 / (e - s + 1) as f64;
        for c in 0..d {
            let col: Vec<S> = (s..=e).map(|r| *h.get(r, c)).collect();
            out.set(n, c, S::sum(&col).scale(k));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureMasks<S> {
    pub row: Mat<bool>,
    pub col: Mat<bool>,
    pub logits_row: Mat<S>,
    pub logits_col: Mat<S>,
}

/// Pairwise `<C^k_x, C^k_y> / dim(C^k)` and its threshold at zero.
pub fn adjacency_logits<S: Real>(c: &Mat<S>, proj: &Linear<S>) -> Mat<S> {
    let ck = linear(c, proj);
    let k = 1.0 / ck.cols() as f64;
    ck.mul_t(&ck).map(&mut |v| v.scale(k))
}

/// Binary mask from logits: strictly positive, diagonal always set.
pub fn threshold<S: Real>(logits: &Mat<S>) -> Mat<bool> {
    Mat::from_fn(logits.rows(), logits.cols(), |x, y| x == y || logits.get(x, y).val() > 0.0)
}

pub fn structure_masks<S: Real>(c: &Mat<S>, params: &SgclParams<S>) -> StructureMasks<S> {
    let logits_row = adjacency_logits(c, &params.proj_row);
    let logits_col = adjacency_logits(c, &params.proj_col);
    StructureMasks {
        row: threshold(&logits_row),
        col: threshold(&logits_col),
        logits_row,
        logits_col,
    }
}

/// Columns of `m` as rows, so weighted sums over rows become dot products.
fn transpose<S: Real>(m: &Mat<S>) -> Mat<S> {
    Mat::from_fn(m.cols(), m.rows(), |r, c| *m.get(c, r))
}

/// Adds `Wo * attend(q = Wq s_x, keys/values from `kv`)` to every `s_x`
/// (and to `delta_x`), attending only where `allowed(x, y)`.
fn attend<S: Real>(
    s: &mut Mat<S>,
    delta: &mut Mat<S>,
    kv: &Mat<S>,
    key_extra: Option<&Mat<S>>,
    a: &Attention<S>,
    allowed: &dyn Fn(usize, usize) -> bool,
) {
    let d = s.cols();
    let scale = 1.0 / math::sqrt(a.wq.rows() as f64);
    let q = s.mul_t(&a.wq);
    let keys = match key_extra {
        Some(e) => kv.add(e).mul_t(&a.wk),
        None => kv.mul_t(&a.wk),
    };
    let vals_t = transpose(&kv.mul_t(&a.wv));
    for x in 0..s.rows() {
        let logits: Vec<S> = (0..keys.rows()).map(|y| S::dot(q.row(x), keys.row(y)).scale(scale)).collect();
        let alpha = masked_softmax(&logits, |y| allowed(x, y));
        let o: Vec<S> = (0..vals_t.rows()).map(|c| S::dot(&alpha, vals_t.row(c))).collect();
        for r in 0..d {
            let u = S::dot(a.wo.row(r), &o);
            let cur = *s.get(x, r);
            s.set(x, r, cur + u);
            let dcur = *delta.get(x, r);
            delta.set(x, r, dcur + u);
        }
    }
}

/// Update one branch adds on top of `C`.
///
/// Self-attention blocks take queries from the running state and keys and
/// values from the branch input, so a cell only ever reads cells in its own
/// mask row. The cross-attention block reads the visual tokens.
pub fn branch<S: Real>(c: &Mat<S>, mask: &Mat<bool>, v: &Mat<S>, b: &super::params::Branch<S>) -> Mat<S> {
    let mut s = c.clone();
    let mut delta = Mat::zeros(c.rows(), c.cols());
    for blk in &b.self_attn {
        attend(&mut s, &mut delta, c, None, blk, &|x, y| *mask.get(x, y));
    }
    attend(&mut s, &mut delta, v, None, &b.cross, &|_, _| true);
    delta
}

/// `C' = C + branch_row(C) + branch_col(C)`.
pub fn enhance_cells<S: Real>(
    c: &Mat<S>,
    m_row: &Mat<bool>,
    m_col: &Mat<bool>,
    v: &Mat<S>,
    params: &SgclParams<S>,
) -> Result<Mat<S>, SgclError> {
    let n = c.rows();
    for m in [m_row, m_col] {
        if m.shape() != (n, n) {
            return Err(SgclError::Shape { what: "structure mask", expected: n * n, found: m.rows() * m.cols() });
        }
        if (0..n).any(|i| !*m.get(i, i)) {
            return Err(SgclError::MaskDiagonal);
        }
    }
    if v.cols() != c.cols() {
        return Err(SgclError::Shape { what: "visual token width", expected: c.cols(), found: v.cols() });
    }
    let r = branch(c, m_row, v, &params.branch_row);
    let k = branch(c, m_col, v, &params.branch_col);
    Ok(c.add(&r).add(&k))
}

/// Boxes kept as `(cx, cy, w, h)` logits, one row per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchors<S> {
    pub logits: Mat<S>,
}

impl<S: Real> Anchors<S> {
    pub fn len(&self) -> usize {
        self.logits.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cxcywh(&self, n: usize) -> [S; 4] {
        let r = self.logits.row(n);
        [r[0].sigmoid(), r[1].sigmoid(), r[2].sigmoid(), r[3].sigmoid()]
    }

    /// Corners before clipping to the unit square.
    pub fn raw_corners(&self, n: usize) -> [S; 4] {
        let [cx, cy, w, h] = self.cxcywh(n);
        let (hw, hh) = (w.scale(0.5), h.scale(0.5));
        [cx - hw, cy - hh, cx + hw, cy + hh]
    }

    pub fn corners(&self, n: usize) -> [S; 4] {
        self.raw_corners(n).map(Real::clamp01)
    }

    pub fn all_corners(&self) -> Vec<[S; 4]> {
        (0..self.len()).map(|n| self.corners(n)).collect()
    }

    pub fn boxes(&self) -> Vec<BBox> {
        (0..self.len())
            .map(|n| {
                let c = self.corners(n);
                BBox::new(c[0].val(), c[1].val(), c[2].val(), c[3].val())
            })
            .collect()
    }
}

/// Two-layer MLP to four logits per cell; boxes follow via sigmoid.
pub fn regress_initial<S: Real>(c: &Mat<S>, params: &SgclParams<S>) -> Anchors<S> {
    Anchors { logits: mlp(c, &params.regress) }
}

/// `k` interleaved sin/cos features of `v` at geometric frequencies.
pub fn sine_encode<S: Real>(v: S, k: usize, temperature: f64) -> Vec<S> {
    let mut out = Vec::with_capacity(k);
    for i in 0..k / 2 {
        let f = 2.0 * PI / math::pow(temperature, (2 * i) as f64 / k as f64);
        let a = v.scale(f);
        out.push(a.sin());
        out.push(a.cos());
    }
    out
}

/// Sine encoding of all four anchor coordinates, `dim / 4` features each.
pub fn anchor_encoding<S: Real>(a: &[S; 4], dim: usize, temperature: f64) -> Vec<S> {
    a.iter().flat_map(|&v| sine_encode(v, dim / 4, temperature)).collect()
}

/// Flattened feature tokens with the sine encoding of each position centre.
fn memory<S: Real>(maps: &[&FeatureMap<S>], temperature: f64) -> (Mat<S>, Mat<S>) {
    let d = maps[0].channels();
    let mut toks = Vec::new();
    let mut pe = Vec::new();
    let mut rows = 0;
    for f in maps {
        toks.extend_from_slice(f.tokens().data());
        for y in 0..f.height() {
            for x in 0..f.width() {
                let cx = (x as f64 + 0.5) / f.width() as f64;
                let cy = (y as f64 + 0.5) / f.height() as f64;
                pe.extend(sine_encode(S::cst(cx), d / 2, temperature));
                pe.extend(sine_encode(S::cst(cy), d / 2, temperature));
                rows += 1;
            }
        }
    }
    (Mat::from_vec(rows, d, toks).unwrap(), Mat::from_vec(rows, d, pe).unwrap())
}

/// Anchor refinement against the concatenated `P3'` and `P4'` tokens.
///
/// Each layer cross-attends from every cell query (seeded with `C'`) to the
/// visual tokens, with the query conditioned on the current anchor, then adds
/// a predicted delta to the anchor logits. Cells never interact, so the
/// output keeps the input order one-to-one.
pub fn refine_boxes<S: Real>(
    init: &Anchors<S>,
    c: &Mat<S>,
    p3: &FeatureMap<S>,
    p4: &FeatureMap<S>,
    params: &SgclParams<S>,
) -> Result<Anchors<S>, SgclError> {
    let d = params.config.dim;
    if c.rows() != init.len() {
        return Err(SgclError::Shape { what: "cell count", expected: init.len(), found: c.rows() });
    }
    for f in [p3, p4] {
        if f.channels() != d {
            return Err(SgclError::Shape { what: "fused feature channels", expected: d, found: f.channels() });
        }
    }
    let temp = params.config.temperature;
    let (mem, mem_pe) = memory(&[p3, p4], temp);
    let mut u = init.logits.clone();
    let mut s = c.clone();
    for layer in &params.refine {
        let mut q_in = s.clone();
        for n in 0..s.rows() {
            let a = Anchors { logits: Mat::from_vec(1, 4, u.row(n).to_vec()).unwrap() }.cxcywh(0);
            let pe = anchor_encoding(&a, d, temp);
            for r in 0..d {
                let v = *q_in.get(n, r) + S::dot(layer.anchor_proj.row(r), &pe);
                q_in.set(n, r, v);
            }
        }
        let mut delta = Mat::zeros(s.rows(), d);
        let mut q_state = q_in;
        attend(&mut q_state, &mut delta, &mem, Some(&mem_pe), &layer.attn, &|_, _| true);
        s = s.add(&delta);
        let du = mlp(&s, &layer.delta);
        u = u.add(&du);
    }
    Ok(Anchors { logits: u })
}

/// `logits_n(y, x) = <Wm C'_n, P4'[:, y, x]>`, one row per cell, positions row-major.
pub fn mask_alignment_logits<S: Real>(c: &Mat<S>, p4: &FeatureMap<S>, params: &SgclParams<S>) -> Mat<S> {
    c.mul_t(&params.mask_proj).mul_t(&p4.tokens())
}

/// Continuous inputs of one table.
#[derive(Debug, Clone, PartialEq)]
pub struct SgclInputs<S> {
    pub hidden: HiddenStates<S>,
    pub spans: TokenSpanIndex,
    pub p3: FeatureMap<S>,
    pub p4: FeatureMap<S>,
    pub p5: FeatureMap<S>,
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward<S> {
    pub p3: FeatureMap<S>,
    pub p4: FeatureMap<S>,
    pub visual: Mat<S>,
    pub aggregated: Mat<S>,
    pub cells: Mat<S>,
    pub masks: StructureMasks<S>,
    pub enhanced: Mat<S>,
    pub initial: Anchors<S>,
    pub refined: Anchors<S>,
    pub mask_logits: Mat<S>,
}

pub fn forward<S: Real>(params: &SgclParams<S>, inp: &SgclInputs<S>) -> Result<Forward<S>, SgclError> {
    if inp.hidden.dim() != params.config.dim {
        return Err(SgclError::Shape {
            what: "hidden width",
            expected: params.config.dim,
            found: inp.hidden.dim(),
        });
    }
    let (p3, p4) = fuse_pyramid(&inp.p3, &inp.p4, &inp.p5, params)?;
    let visual = flatten_with_pos(&p4, &params.pos)?;
    let aggregated = aggregate_layers(&inp.hidden, params.layer_weights.row(0))?;
    let cells = pool_cells(&aggregated, &inp.spans)?;
    let masks = structure_masks(&cells, params);
    let enhanced = enhance_cells(&cells, &masks.row, &masks.col, &visual, params)?;
    let initial = regress_initial(&enhanced, params);
    let refined = refine_boxes(&initial, &enhanced, &p3, &p4, params)?;
    let mask_logits = mask_alignment_logits(&enhanced, &p4, params);
    Ok(Forward {
        p3,
        p4,
        visual,
        aggregated,
        cells,
        masks,
        enhanced,
        initial,
        refined,
        mask_logits,
    })
}
