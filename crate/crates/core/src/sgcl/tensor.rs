//! Dense containers for the cell-localization numerics.

use alloc::vec::Vec;

use super::real::Real;
use super::SgclError;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Mat<T> {
    pub fn filled(rows: usize, cols: usize, v: T) -> Self {
        Mat { rows, cols, data: alloc::vec![v; rows * cols] }
    }
}

impl<T> Mat<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, SgclError> {
        if data.len() != rows * cols {
            return Err(SgclError::Shape {
                what: "matrix data",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> &T {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Rows reordered so that row `i` of the result is row `perm[i]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self
    where
        T: Clone,
    {
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            data.extend_from_slice(self.row(p));
        }
        Mat { rows: perm.len(), cols: self.cols, data }
    }
}

impl<S: Real> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat::filled(rows, cols, S::cst(0.0))
    }

    pub fn lift(m: &Mat<f64>) -> Self {
        m.map(&mut |&v| S::cst(v))
    }

    pub fn values(&self) -> Mat<f64> {
        self.map(&mut |v| v.val())
    }

    /// `self * w^T`: each row of `self` against each row of `w`.
    pub fn mul_t(&self, w: &Mat<S>) -> Mat<S> {
        debug_assert_eq!(self.cols, w.cols);
        Mat::from_fn(self.rows, w.rows, |r, o| S::dot(self.row(r), w.row(o)))
    }

    pub fn add(&self, o: &Mat<S>) -> Mat<S> {
        debug_assert_eq!(self.shape(), o.shape());
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    /// Adds `b` to every row.
    pub fn add_row(&self, b: &[S]) -> Mat<S> {
        debug_assert_eq!(self.cols, b.len());
        Mat::from_fn(self.rows, self.cols, |r, c| *self.get(r, c) + b[c])
    }

    pub fn max_abs_diff(&self, o: &Mat<S>) -> f64 {
        self.data
            .iter()
            .zip(&o.data)
            .map(|(a, b)| crate::math::abs(a.val() - b.val()))
            .fold(0.0, f64::max)
    }
}

/// `channels x height x width` feature map, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<S> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<S>,
}

impl<S: Real> FeatureMap<S> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<S>) -> Result<Self, SgclError> {
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(SgclError::Shape { what: "feature map data", expected, found: data.len() });
        }
        if data.iter().any(|v| !v.val().is_finite()) {
            return Err(SgclError::NonFinite("feature map"));
        }
        Ok(FeatureMap { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        FeatureMap {
            channels,
            height,
            width,
            data: alloc::vec![S::cst(0.0); channels * height * width],
        }
    }

    pub fn from_fn(channels: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        FeatureMap { channels, height, width, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> S {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// The channel vector at one spatial position.
    pub fn pixel(&self, y: usize, x: usize) -> Vec<S> {
        (0..self.channels).map(|c| self.at(c, y, x)).collect()
    }

    /// One row per position in row-major order, one column per channel.
    pub fn tokens(&self) -> Mat<S> {
        Mat::from_fn(self.height * self.width, self.channels, |t, c| {
            self.at(c, t / self.width, t % self.width)
        })
    }

    /// Inverse of [`FeatureMap::tokens`].
    pub fn from_tokens(tokens: &Mat<S>, height: usize, width: usize) -> Result<Self, SgclError> {
        if tokens.rows() != height * width {
            return Err(SgclError::Shape {
                what: "token count",
                expected: height * width,
                found: tokens.rows(),
            });
        }
        Ok(FeatureMap::from_fn(tokens.cols(), height, width, |c, y, x| *tokens.get(y * width + x, c)))
    }

    pub fn map<U>(&self, f: &mut dyn FnMut(&S) -> U) -> FeatureMap<U> {
        FeatureMap {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }
}

/// Decoder hidden states, one `tokens x d` matrix per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates<S> {
    layers: Vec<Mat<S>>,
}

impl<S: Real> HiddenStates<S> {
    pub fn new(layers: Vec<Mat<S>>) -> Result<Self, SgclError> {
        let Some(first) = layers.first() else {
            return Err(SgclError::Empty("hidden state layers"));
        };
        let shape = first.shape();
        for l in &layers {
            if l.shape() != shape {
                return Err(SgclError::Shape {
                    what: "hidden state layer",
                    expected: shape.0 * shape.1,
                    found: l.rows() * l.cols(),
                });
            }
        }
        Ok(HiddenStates { layers })
    }

    pub fn layers(&self) -> &[Mat<S>] {
        &self.layers
    }

    pub fn tokens(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.layers[0].cols()
    }

    pub fn map<U>(&self, f: &mut dyn FnMut(&S) -> U) -> HiddenStates<U> {
        HiddenStates {
            layers: self.layers.iter().map(|l| l.map(f)).collect(),
        }
    }
}

/// Inclusive `(start, end)` token positions of each cell's `<td` and `</td>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpanIndex {
    spans: Vec<(usize, usize)>,
}

impl TokenSpanIndex {
    /// Spans must be non-empty, ordered, non-overlapping and inside `tokens`.
    pub fn new(spans: Vec<(usize, usize)>, tokens: usize) -> Result<Self, SgclError> {
        let mut prev_end: Option<usize> = None;
        for (i, &(s, e)) in spans.iter().enumerate() {
            if s > e || e >= tokens || prev_end.is_some_and(|p| s <= p) {
                return Err(SgclError::BadSpan { cell: i, start: s, end: e });
            }
            prev_end = Some(e);
        }
        Ok(TokenSpanIndex { spans })
    }

    pub fn spans(&self) -> &[(usize, usize)] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}
