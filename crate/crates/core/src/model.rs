//! Partitions of `(0, A]`, models (disjoint interval sets) and clipping bounds.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A partition of `(0, A]` into consecutive cells `(x_{i-1}, x_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    breaks: Vec<f64>,
}

impl Partition {
    pub fn new(breaks: Vec<f64>) -> Result<Self> {
        if breaks.len() < 2 || breaks[0] != 0.0 {
            return Err(Error::invalid(
                "a partition starts at 0 and has at least one cell",
            ));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) || !breaks.last().unwrap().is_finite() {
            return Err(Error::invalid(
                "partition breakpoints must increase strictly",
            ));
        }
        Ok(Self { breaks })
    }

    /// The regular partition of `(0, support]` into `cells` equal cells.
    pub fn regular(support: f64, cells: usize) -> Result<Self> {
        if cells == 0 || !(support > 0.0) {
            return Err(Error::invalid(
                "regular partition needs cells >= 1 and support > 0",
            ));
        }
        let mut breaks: Vec<f64> = (0..=cells)
            .map(|i| support * i as f64 / cells as f64)
            .collect();
        breaks[cells] = support;
        Self::new(breaks)
    }

    pub fn len(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn support(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn cell(&self, i: usize) -> (f64, f64) {
        (self.breaks[i], self.breaks[i + 1])
    }

    pub fn cell_len(&self, i: usize) -> f64 {
        self.breaks[i + 1] - self.breaks[i]
    }

    pub fn min_cell_len(&self) -> f64 {
        (0..self.len())
            .map(|i| self.cell_len(i))
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the breakpoint equal to `x` up to a relative tolerance.
    pub fn break_index(&self, x: f64) -> Option<usize> {
        let tol = 1e-9 * self.support();
        let j = self.breaks.partition_point(|&b| b < x - tol);
        (j < self.breaks.len() && (self.breaks[j] - x).abs() <= tol).then_some(j)
    }
}

/// A set of disjoint intervals `(a, b] ⊆ (0, A]`, sorted by left endpoint.
///
/// When the model is written on a finest partition, `cells` holds for each
/// interval the range of partition cells whose union it is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    support: f64,
    intervals: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cells: Option<Vec<Range<usize>>>,
}

impl Model {
    pub fn new(support: f64, intervals: Vec<(f64, f64)>) -> Result<Self> {
        if !(support > 0.0) {
            return Err(Error::invalid("model support must be positive"));
        }
        let mut prev_right = 0.0;
        for &(a, b) in &intervals {
            if !(a >= prev_right && a < b && b <= support * (1.0 + 1e-12)) {
                return Err(Error::invalid(format!(
                    "interval ({a}, {b}] overlaps, is unsorted, or leaves (0, {support}]"
                )));
            }
            prev_right = b;
        }
        Ok(Self {
            support,
            intervals,
            cells: None,
        })
    }

    pub fn empty(support: f64) -> Self {
        Self {
            support,
            intervals: Vec::new(),
            cells: Some(Vec::new()),
        }
    }

    /// Model whose intervals are unions of consecutive cells of `partition`.
    pub fn on_partition(partition: &Partition, cells: Vec<Range<usize>>) -> Result<Self> {
        let mut prev_end = 0;
        for r in &cells {
            if r.start < prev_end || r.start >= r.end || r.end > partition.len() {
                return Err(Error::invalid(format!("bad cell range {r:?}")));
            }
            prev_end = r.end;
        }
        let intervals = cells
            .iter()
            .map(|r| (partition.breaks()[r.start], partition.breaks()[r.end]))
            .collect();
        Ok(Self {
            support: partition.support(),
            intervals,
            cells: Some(cells),
        })
    }

    /// Every cell of the partition as its own interval.
    pub fn full(partition: &Partition) -> Self {
        Self::on_partition(partition, (0..partition.len()).map(|i| i..i + 1).collect()).unwrap()
    }

    pub fn support(&self) -> f64 {
        self.support
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// `|m|`, the number of intervals.
    pub fn size(&self) -> usize {
        self.intervals.len()
    }

    /// `|m| + 1`, the dimension reported in outputs.
    pub fn dimension(&self) -> usize {
        self.size() + 1
    }

    pub fn cells(&self) -> Option<&[Range<usize>]> {
        self.cells.as_deref()
    }

    /// Cell ranges of this model on `partition`, or an error when some
    /// endpoint is not a breakpoint of it.
    pub fn cells_on(&self, partition: &Partition) -> Result<Vec<Range<usize>>> {
        if (partition.support() - self.support).abs() > 1e-9 * self.support {
            return Err(Error::SupportMismatch {
                left: partition.support(),
                right: self.support,
            });
        }
        self.intervals
            .iter()
            .map(
                |&(a, b)| match (partition.break_index(a), partition.break_index(b)) {
                    (Some(i), Some(j)) => Ok(i..j),
                    _ => Err(Error::NotOnPartition(format!("({a}, {b}]"))),
                },
            )
            .collect()
    }
}

/// Box `ν ∈ [ρ, η]`, `h ∈ [0, H]` for clipped estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipBounds {
    rho: f64,
    eta: f64,
    h_max: f64,
    mass: Option<f64>,
}

impl ClipBounds {
    pub fn new(rho: f64, eta: f64, h_max: f64, mass: Option<f64>) -> Result<Self> {
        if !(rho > 0.0 && rho <= eta) {
            return Err(Error::invalid("clip bounds need 0 < rho <= eta"));
        }
        if !(h_max > 0.0) {
            return Err(Error::invalid("clip bound H must be positive"));
        }
        if let Some(p) = mass {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid("clip bound P must lie in (0, 1)"));
            }
        }
        Ok(Self {
            rho,
            eta,
            h_max,
            mass,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn h_max(&self) -> f64 {
        self.h_max
    }
    pub fn mass(&self) -> Option<f64> {
        self.mass
    }
}
