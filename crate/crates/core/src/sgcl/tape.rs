//! Reverse-mode differentiation over a flat operation list.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;
use core::ops::{Add, Div, Mul, Neg, Sub};

use super::real::Real;
use crate::math;

/// Records every operation on its [`Var`]s.
///
/// Each node stores the local partial derivative towards each of its parents,
/// computed when the node is created, so the backward pass is a single sweep.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

#[derive(Default)]
struct Inner {
    offsets: Vec<u32>,
    edges: Vec<(u32, f64)>,
}

impl Inner {
    fn push(&mut self, edges: impl IntoIterator<Item = (u32, f64)>) -> u32 {
        let id = self.offsets.len() as u32;
        self.offsets.push(self.edges.len() as u32);
        self.edges.extend(edges);
        id
    }
}

/// A value on a [`Tape`], or a constant that belongs to none.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    id: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({})", self.val)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// A new independent variable.
    pub fn var(&self, v: f64) -> Var<'_> {
        let id = self.inner.borrow_mut().push([]);
        Var { tape: Some(self), id, val: v }
    }

    pub fn vars(&self, v: &[f64]) -> Vec<Var<'_>> {
        v.iter().map(|&x| self.var(x)).collect()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// d out / d node for every node on the tape, indexed by creation order.
    ///
    /// Variables created first with [`Tape::vars`] occupy the leading indices.
    pub fn gradient(&self, out: Var<'_>) -> Vec<f64> {
        let inner = self.inner.borrow();
        let n = inner.offsets.len();
        let mut adj = vec![0.0; n];
        if out.tape.is_none() {
            return adj;
        }
        adj[out.id as usize] = 1.0;
        for i in (0..=out.id as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let lo = inner.offsets[i] as usize;
            let hi = inner.offsets.get(i + 1).map_or(inner.edges.len(), |&e| e as usize);
            for &(p, w) in &inner.edges[lo..hi] {
                adj[p as usize] += a * w;
            }
        }
        adj
    }
}

impl<'t> Var<'t> {
    pub fn constant(v: f64) -> Self {
        Var { tape: None, id: u32::MAX, val: v }
    }

    pub fn id(&self) -> Option<usize> {
        self.tape.map(|_| self.id as usize)
    }

    fn node<const K: usize>(val: f64, parents: [(Var<'t>, f64); K]) -> Self {
        let Some(tape) = parents.iter().find_map(|(p, _)| p.tape) else {
            return Var::constant(val);
        };
        let id = tape
            .inner
            .borrow_mut()
            .push(parents.iter().filter(|(p, _)| p.tape.is_some()).map(|(p, w)| (p.id, *w)));
        Var { tape: Some(tape), id, val }
    }

    fn unary(self, val: f64, d: f64) -> Self {
        Var::node(val, [(self, d)])
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Var::node(self.val + o.val, [(self, 1.0), (o, 1.0)])
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Var::node(self.val - o.val, [(self, 1.0), (o, -1.0)])
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Var::node(self.val * o.val, [(self, o.val), (o, self.val)])
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.val / o.val;
        Var::node(q, [(self, 1.0 / o.val), (o, -q / o.val)])
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> Real for Var<'t> {
    fn cst(v: f64) -> Self {
        Var::constant(v)
    }

    fn val(self) -> f64 {
        self.val
    }

    fn exp(self) -> Self {
        let e = math::exp(self.val);
        self.unary(e, e)
    }

    fn ln(self) -> Self {
        self.unary(math::ln(self.val), 1.0 / self.val)
    }

    fn tanh(self) -> Self {
        let t = math::tanh(self.val);
        self.unary(t, 1.0 - t * t)
    }

    fn sigmoid(self) -> Self {
        let s = math::sigmoid(self.val);
        self.unary(s, s * (1.0 - s))
    }

    fn softplus(self) -> Self {
        self.unary(math::softplus(self.val), math::sigmoid(self.val))
    }

    fn sin(self) -> Self {
        self.unary(math::sin(self.val), math::cos(self.val))
    }

    fn cos(self) -> Self {
        self.unary(math::cos(self.val), -math::sin(self.val))
    }

    fn abs(self) -> Self {
        let d = if self.val < 0.0 { -1.0 } else { 1.0 };
        self.unary(math::abs(self.val), d)
    }

    fn scale(self, k: f64) -> Self {
        self.unary(self.val * k, k)
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let val = a.iter().zip(b).map(|(x, y)| x.val * y.val).sum();
        let Some(tape) = a.iter().chain(b).find_map(|v| v.tape) else {
            return Var::constant(val);
        };
        let edges = a
            .iter()
            .zip(b)
            .flat_map(|(x, y)| [(*x, y.val), (*y, x.val)])
            .filter(|(v, _)| v.tape.is_some())
            .map(|(v, w)| (v.id, w));
        let id = tape.inner.borrow_mut().push(edges);
        Var { tape: Some(tape), id, val }
    }

    fn sum(a: &[Self]) -> Self {
        let val = a.iter().map(|v| v.val).sum();
        let Some(tape) = a.iter().find_map(|v| v.tape) else {
            return Var::constant(val);
        };
        let edges = a.iter().filter(|v| v.tape.is_some()).map(|v| (v.id, 1.0));
        let id = tape.inner.borrow_mut().push(edges);
        Var { tape: Some(tape), id, val }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f<S: Real>(x: S, y: S) -> S {
        (x * y + x.sin()) / (y.exp() + S::cst(1.0)) - x.tanh().abs() + S::dot(&[x, y], &[y, y])
    }

    #[test]
    fn matches_hand_derivative() {
        let (x0, y0) = (0.7, -0.3);
        let tape = Tape::new();
        let v = tape.vars(&[x0, y0]);
        let out = f(v[0], v[1]);
        assert!((out.val() - f(x0, y0)).abs() < 1e-15);
        let g = tape.gradient(out);
        let den = libm::exp(y0) + 1.0;
        let t = libm::tanh(x0);
        let dx = (y0 + libm::cos(x0)) / den - (1.0 - t * t) + y0;
        let dy = x0 / den - (x0 * y0 + libm::sin(x0)) * libm::exp(y0) / (den * den) + x0 + 2.0 * y0;
        assert!((g[0] - dx).abs() < 1e-14, "{} {}", g[0], dx);
        assert!((g[1] - dy).abs() < 1e-14, "{} {}", g[1], dy);
    }

    #[test]
    fn constants_stay_off_tape() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let c = Var::cst(3.0) * Var::cst(4.0);
        assert_eq!(c.id(), None);
        assert_eq!(tape.len(), 1);
        let y = x * c;
        assert_eq!(tape.gradient(y)[0], 12.0);
    }

    #[test]
    fn reused_variable_accumulates() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = x * x * x;
        assert_eq!(tape.gradient(y)[0], 27.0);
        let s = Var::sum(&[x, x, x * x]);
        assert_eq!(tape.gradient(s)[0], 8.0);
    }

    #[test]
    fn logsumexp_gradient_is_softmax() {
        let tape = Tape::new();
        let v = tape.vars(&[1.0, 2.0, 900.0]);
        let l = Var::logsumexp(&v);
        assert!((l.val() - 900.0).abs() < 1e-12);
        let g = tape.gradient(l);
        assert!((g[2] - 1.0).abs() < 1e-12 && g[0] >= 0.0);
        assert!((g.iter().take(3).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
