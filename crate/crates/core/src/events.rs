//! Observed point sequences and the plain-text events file format.
//!
//! The file format is UTF-8 text with one numeric position per line. Lines
//! starting with `#` are comments; a comment of the form `# window: LO HI`
//! records the observation window and is picked up when no window is given
//! explicitly. Positions need not be sorted.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    times: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl EventSequence {
    /// Validates strictly increasing times inside `[lower, upper]`.
    pub fn new(times: Vec<f64>, lower: f64, upper: f64) -> Result<Self> {
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::invalid(format!("bad window [{lower}, {upper}]")));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("event times must be strictly increasing"));
        }
        if let (Some(&first), Some(&last)) = (times.first(), times.last()) {
            if first < lower || last > upper {
                return Err(Error::invalid(format!(
                    "events span [{first}, {last}] outside window [{lower}, {upper}]"
                )));
            }
        }
        Ok(Self {
            times,
            lower,
            upper,
        })
    }

    pub fn empty(lower: f64, upper: f64) -> Result<Self> {
        Self::new(Vec::new(), lower, upper)
    }

    /// Sorts, applies the duplicate policy, then validates.
    /// Returns the sequence and the number of duplicates dropped.
    pub fn from_unsorted(
        mut times: Vec<f64>,
        lower: f64,
        upper: f64,
        duplicates: DuplicatePolicy,
    ) -> Result<(Self, usize)> {
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("event times must be finite"));
        }
        times.sort_by(f64::total_cmp);
        let before = times.len();
        let dropped = match duplicates {
            DuplicatePolicy::Collapse => {
                times.dedup();
                before - times.len()
            }
            DuplicatePolicy::Jitter(eps) => {
                if !(eps > 0.0) {
                    return Err(Error::invalid("jitter spacing must be positive"));
                }
                let mut run = 0usize;
                let mut prev = None;
                for t in times.iter_mut() {
                    let original = *t;
                    if prev == Some(original) {
                        run += 1;
                        *t = original + run as f64 * eps;
                    } else {
                        run = 0;
                        prev = Some(original);
                    }
                }
                times.sort_by(f64::total_cmp);
                times.dedup();
                before - times.len()
            }
        };
        Ok((Self::new(times, lower, upper)?, dropped))
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// `N([t − a, t))`: points at or after `t − a` and strictly before `t`.
    pub fn window_count(&self, t: f64, a: f64) -> usize {
        let lo = self.times.partition_point(|&u| u < t - a);
        let hi = self.times.partition_point(|&u| u < t);
        hi.saturating_sub(lo)
    }

    /// Number of points in the closed interval `[lo, hi]`.
    pub fn count_closed(&self, lo: f64, hi: f64) -> usize {
        let a = self.times.partition_point(|&u| u < lo);
        let b = self.times.partition_point(|&u| u <= hi);
        b.saturating_sub(a)
    }

    /// Index range of points in `[lo, hi)`.
    pub(crate) fn index_range(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let a = self.times.partition_point(|&u| u < lo);
        let b = self.times.partition_point(|&u| u < hi);
        a..b.max(a)
    }

    /// The points in `[lo, hi]`, with `[lo, hi]` as the new window.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<Self> {
        if lo < self.lower || hi > self.upper {
            return Err(Error::Window {
                start: lo,
                end: hi,
                lo: self.lower,
                hi: self.upper,
            });
        }
        let a = self.times.partition_point(|&u| u < lo);
        let b = self.times.partition_point(|&u| u <= hi);
        Self::new(self.times[a..b].to_vec(), lo, hi)
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "# window: {} {}", self.lower, self.upper)?;
        for t in &self.times {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| Error::Io {
            path: path.display().to_string(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io_err)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(io_err)?;
        w.flush().map_err(io_err)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum DuplicatePolicy {
    #[default]
    Collapse,
    /// The k-th copy of a repeated position is shifted by `k·ε`.
    Jitter(f64),
}

#[derive(Debug, Clone)]
pub struct LoadedEvents {
    pub events: EventSequence,
    pub duplicates_dropped: usize,
}

/// Parsed file contents before a window is attached.
#[derive(Debug, Clone)]
pub struct ParsedEvents {
    pub times: Vec<f64>,
    pub window: Option<(f64, f64)>,
}

pub fn parse_events(text: &str) -> Result<ParsedEvents> {
    let mut times = Vec::new();
    let mut window = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(rest) = comment.trim().strip_prefix("window:") {
                let bounds: Vec<f64> = rest
                    .split_whitespace()
                    .filter_map(|s| s.parse().ok())
                    .collect();
                if let [lo, hi] = bounds[..] {
                    window = Some((lo, hi));
                }
            }
            continue;
        }
        let value: f64 = line.parse().map_err(|_| Error::Parse {
            line: i + 1,
            token: line.to_string(),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line: i + 1,
                token: line.to_string(),
            });
        }
        times.push(value);
    }
    Ok(ParsedEvents { times, window })
}

/// Reads an events file. `window` overrides any `# window:` directive; with
/// neither, the window is `[min, max]` of the positions.
pub fn load_events(
    path: impl AsRef<Path>,
    window: Option<(f64, f64)>,
    duplicates: DuplicatePolicy,
) -> Result<LoadedEvents> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let parsed = parse_events(&text)?;
    let (lower, upper) = match window.or(parsed.window) {
        Some(w) => w,
        None => {
            let lo = parsed.times.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = parsed
                .times
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            if parsed.times.is_empty() {
                return Err(Error::invalid("empty events file needs an explicit window"));
            }
            if lo == hi {
                (lo, lo + 1.0)
            } else {
                (lo, hi)
            }
        }
    };
    let (events, duplicates_dropped) =
        EventSequence::from_unsorted(parsed.times, lower, upper, duplicates)?;
    if duplicates_dropped > 0 {
        log::warn!(
            "{}: dropped {duplicates_dropped} duplicate positions",
            path.display()
        );
    }
    Ok(LoadedEvents {
        events,
        duplicates_dropped,
    })
}
