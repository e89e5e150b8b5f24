//! Central finite differences against analytic directional derivatives.

use alloc::vec::Vec;

use thiserror::Error;

use super::real::Real;
use super::tape::Tape;
use super::SgclError;
use crate::math;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GradCheckError {
    #[error("point has {found} coordinates, function expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("step must be positive and finite, got {0}")]
    Step(f64),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Eval(#[from] SgclError),
}

/// Function values at a point plus the outcome of every branch taken.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub values: Vec<f64>,
    pub branches: Vec<bool>,
}

/// A vector-valued function with exact gradients of each output.
pub trait Differentiable {
    fn dim(&self) -> usize;
    fn outputs(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> Result<Evaluation, SgclError>;
    /// One gradient per output.
    fn gradients(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, SgclError>;
}

/// A function written once over [`Real`]; gradients come from the tape.
pub trait Program {
    fn dim(&self) -> usize;
    fn outputs(&self) -> usize;
    /// Outputs and the branch outcomes taken while computing them.
    fn run<S: Real>(&self, x: &[S]) -> Result<(Vec<S>, Vec<bool>), SgclError>;
}

impl<P: Program> Differentiable for P {
    fn dim(&self) -> usize {
        Program::dim(self)
    }

    fn outputs(&self) -> usize {
        Program::outputs(self)
    }

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation, SgclError> {
        let (values, branches) = self.run(x)?;
        Ok(Evaluation { values, branches })
    }

    fn gradients(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, SgclError> {
        let tape = Tape::new();
        let vars = tape.vars(x);
        let (outs, _) = self.run(&vars)?;
        Ok(outs
            .into_iter()
            .map(|o| {
                let mut g = tape.gradient(o);
                g.truncate(x.len());
                g
            })
            .collect())
    }
}

/// `|a - f| / max(|a|, |f|, 1e-8)`.
pub fn relative_error(a: f64, f: f64) -> f64 {
    math::abs(a - f) / math::abs(a).max(math::abs(f)).max(1e-8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub errors: Vec<f64>,
    /// Every branch came out the same at `x - eps d`, `x` and `x + eps d`.
    pub smooth: bool,
}

impl GradCheck {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares `grad . d` with `(f(x + eps d) - f(x - eps d)) / (2 eps)` for each output.
pub fn grad_check<D: Differentiable + ?Sized>(
    op: &D,
    point: &[f64],
    direction: &[f64],
    eps: f64,
) -> Result<GradCheck, GradCheckError> {
    let dim = op.dim();
    for v in [point, direction] {
        if v.len() != dim {
            return Err(GradCheckError::Dimension { expected: dim, found: v.len() });
        }
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(GradCheckError::Step(eps));
    }
    if point.iter().chain(direction).any(|v| !v.is_finite()) {
        return Err(GradCheckError::NonFinite("point or direction"));
    }
    let shifted = |s: f64| -> Vec<f64> { point.iter().zip(direction).map(|(x, d)| x + s * d).collect() };
    let mid = op.evaluate(point)?;
    let plus = op.evaluate(&shifted(eps))?;
    let minus = op.evaluate(&shifted(-eps))?;
    let grads = op.gradients(point)?;
    let mut analytic = Vec::with_capacity(grads.len());
    let mut numeric = Vec::with_capacity(grads.len());
    for (k, g) in grads.iter().enumerate() {
        let a: f64 = g.iter().zip(direction).map(|(g, d)| g * d).sum();
        let f = (plus.values[k] - minus.values[k]) / (2.0 * eps);
        if !a.is_finite() {
            return Err(GradCheckError::NonFinite("analytic derivative"));
        }
        if !f.is_finite() {
            return Err(GradCheckError::NonFinite("finite difference"));
        }
        analytic.push(a);
        numeric.push(f);
    }
    let errors = analytic.iter().zip(&numeric).map(|(&a, &f)| relative_error(a, f)).collect();
    let smooth = plus.branches == mid.branches && minus.branches == mid.branches;
    Ok(GradCheck { analytic, numeric, errors, smooth })
}

/// Value and gradient supplied as plain closures.
pub struct Analytic<F, G> {
    pub dim: usize,
    pub outputs: usize,
    pub value: F,
    pub gradient: G,
}

impl<F, G> Differentiable for Analytic<F, G>
where
    F: Fn(&[f64]) -> Result<(Vec<f64>, Vec<bool>), SgclError>,
    G: Fn(&[f64]) -> Result<Vec<Vec<f64>>, SgclError>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn outputs(&self) -> usize {
        self.outputs
    }

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation, SgclError> {
        let (values, branches) = (self.value)(x)?;
        Ok(Evaluation { values, branches })
    }

    fn gradients(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, SgclError> {
        (self.gradient)(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    struct Affine;

    impl Program for Affine {
        fn dim(&self) -> usize {
            3
        }
        fn outputs(&self) -> usize {
            1
        }
        fn run<S: Real>(&self, x: &[S]) -> Result<(Vec<S>, Vec<bool>), SgclError> {
            Ok((vec![x[0].scale(3.0) - x[1].scale(0.5) + x[2] + S::cst(7.0)], vec![]))
        }
    }

    struct Abs;

    impl Program for Abs {
        fn dim(&self) -> usize {
            1
        }
        fn outputs(&self) -> usize {
            1
        }
        fn run<S: Real>(&self, x: &[S]) -> Result<(Vec<S>, Vec<bool>), SgclError> {
            Ok((vec![x[0].abs()], vec![x[0].val() < 0.0]))
        }
    }

    #[test]
    fn linear_is_exact() {
        let r = grad_check(&Affine, &[0.3, -1.0, 2.0], &[0.6, 0.0, -0.8], 1e-3).unwrap();
        assert!(r.max_error() <= 1e-10, "{:?}", r);
        assert!((r.analytic[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kinks_are_reported() {
        let r = grad_check(&Abs, &[1e-9], &[1.0], 1e-6).unwrap();
        assert!(!r.smooth);
        let r = grad_check(&Abs, &[0.5], &[1.0], 1e-6).unwrap();
        assert!(r.smooth && r.max_error() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(grad_check(&Affine, &[0.0], &[1.0, 0.0, 0.0], 1e-3), Err(GradCheckError::Dimension { .. })));
        assert!(matches!(grad_check(&Affine, &[0.0; 3], &[1.0; 3], 0.0), Err(GradCheckError::Step(_))));
        assert!(matches!(
            grad_check(&Affine, &[f64::NAN, 0.0, 0.0], &[1.0; 3], 1e-3),
            Err(GradCheckError::NonFinite(_))
        ));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-12, 0.0) - 1e-4).abs() < 1e-18);
        assert_eq!(relative_error(2.0, 1.0), 0.5);
    }
}
