//! Piecewise-constant functions on `(0, A]`.
//!
//! Every cell is half-open on the left, `(x_{i-1}, x_i]`, so a function built
//! from breakpoints `0 = x_0 < ... < x_k = A` returns `values[i-1]` on the
//! i-th cell and zero outside `(0, A]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.len() < 2 {
            return Err(Error::invalid(
                "a step function needs at least two breakpoints",
            ));
        }
        if breaks.len() != values.len() + 1 {
            return Err(Error::invalid(format!(
                "{} breakpoints but {} values",
                breaks.len(),
                values.len()
            )));
        }
        if breaks[0] != 0.0 {
            return Err(Error::invalid("first breakpoint must be 0"));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid(
                "breakpoints must be finite and strictly increasing",
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("step values must be finite"));
        }
        Ok(Self { breaks, values })
    }

    pub fn zero(support: f64) -> Self {
        Self::constant(support, 0.0)
    }

    pub fn constant(support: f64, value: f64) -> Self {
        assert!(support > 0.0, "support must be positive");
        Self {
            breaks: vec![0.0, support],
            values: vec![value],
        }
    }

    /// Builds a function on `(0, support]` from `(left, right, value)` pieces.
    /// Gaps between pieces are filled with zero.
    pub fn from_pieces(support: f64, pieces: &[(f64, f64, f64)]) -> Result<Self> {
        if !(support > 0.0) {
            return Err(Error::invalid("support must be positive"));
        }
        let mut sorted = pieces.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut breaks = vec![0.0];
        let mut values = Vec::new();
        let mut cursor = 0.0;
        for &(left, right, value) in &sorted {
            if !(left >= cursor && left < right && right <= support) {
                return Err(Error::invalid(format!(
                    "piece ({left}, {right}] overlaps another piece or leaves (0, {support}]"
                )));
            }
            if left > cursor {
                breaks.push(left);
                values.push(0.0);
            }
            breaks.push(right);
            values.push(value);
            cursor = right;
        }
        if cursor < support {
            breaks.push(support);
            values.push(0.0);
        }
        Self::new(breaks, values)
    }

    pub fn support(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breaks
            .windows(2)
            .zip(&self.values)
            .map(|(w, &v)| (w[0], w[1], v))
    }

    pub fn eval(&self, t: f64) -> f64 {
        if !(t > 0.0) || t > self.support() {
            return 0.0;
        }
        // first index with breaks[j] >= t; the containing cell is j - 1
        let j = self.breaks.partition_point(|&x| x < t);
        self.values[j - 1]
    }

    pub fn integral(&self) -> f64 {
        self.cells().map(|(a, b, v)| v * (b - a)).sum()
    }

    pub fn abs_integral(&self) -> f64 {
        self.cells().map(|(a, b, v)| v.abs() * (b - a)).sum()
    }

    pub fn l2_sq(&self) -> f64 {
        self.cells().map(|(a, b, v)| v * v * (b - a)).sum()
    }

    pub fn sup_positive(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, &v| m.max(v))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    /// Sum of `|value|` over cells, used to bound Fourier transforms.
    pub fn abs_value_sum(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    /// Exact `∫_lo^hi` of the function, with the bounds clamped to `[0, A]`.
    pub fn integral_over(&self, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(0.0);
        let hi = hi.min(self.support());
        if hi <= lo {
            return 0.0;
        }
        self.cells()
            .map(|(a, b, v)| {
                let overlap = b.min(hi) - a.max(lo);
                if overlap > 0.0 {
                    v * overlap
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Same function with `at` inserted as an extra breakpoint.
    pub fn split_at(&self, at: f64) -> Self {
        if !(at > 0.0 && at < self.support()) || self.breaks.contains(&at) {
            return self.clone();
        }
        let j = self.breaks.partition_point(|&x| x < at);
        let mut breaks = self.breaks.clone();
        let mut values = self.values.clone();
        breaks.insert(j, at);
        values.insert(j, self.values[j - 1]);
        Self { breaks, values }
    }

    /// Pointwise clamp of every value into `[lo, hi]`.
    pub fn clamp_values(&self, lo: f64, hi: f64) -> Self {
        Self {
            breaks: self.breaks.clone(),
            values: self.values.iter().map(|v| v.clamp(lo, hi)).collect(),
        }
    }

    /// Pointwise `self − other` on the merged breakpoints.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        if (self.support() - other.support()).abs() > 1e-12 * self.support() {
            return Err(Error::SupportMismatch {
                left: self.support(),
                right: other.support(),
            });
        }
        let breaks = merge_breaks(&self.breaks, &other.breaks);
        let values = breaks
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                self.eval(mid) - other.eval(mid)
            })
            .collect();
        let mut breaks = breaks;
        *breaks.last_mut().unwrap() = self.support();
        Self::new(breaks, values)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            breaks: self.breaks.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Sorted union of two breakpoint lists.
pub(crate) fn merge_breaks(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x <= y => {
                i += 1;
                if x == y {
                    j += 1;
                }
                x
            }
            (Some(_), Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        if out.last() != Some(&next) {
            out.push(next);
        }
    }
    out
}
