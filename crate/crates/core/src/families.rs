//! Model families: Nested, Regular, Irregular and Islands.
//!
//! A [`Family`] owns the Gram systems its models need (one shared system on
//! `Γ` for Irregular/Islands, one per partition for Nested/Regular) and maps
//! a closure over every fitted model in parallel. Model indices are stable:
//!
//! * Nested(J): `0` is void, `k ≥ 1` the regular partition with `2^{k−1}` cells;
//! * Regular(N): `0` is void, `k ≥ 1` the regular partition with `k` cells;
//! * Irregular(Γ): `0` is void, `k ≥ 1` the partition whose interior cuts are
//!   the bits of `k − 1` (bit `i` cuts after cell `i`);
//! * Islands(Γ): `k` is the bitmask of the selected cells, `0` being void.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrast::{build_gram, Estimator, FitScratch, FitSummary, GramSystem};
use crate::error::{Error, Result};
use crate::events::EventSequence;
use crate::model::{Model, Partition};

/// Largest `|Γ|` enumerated exhaustively without an explicit override.
pub const GAMMA_CAP: usize = 26;
/// Hard limit even when forced.
const GAMMA_HARD_LIMIT: usize = 40;
/// Largest Nested depth accepted.
const NESTED_MAX_J: u32 = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Nested { j: u32 },
    Regular { n: usize },
    Irregular { gamma: Partition },
    Islands { gamma: Partition },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Nested,
    Regular,
    Irregular,
    Islands,
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StrategyKind::Nested => "nested",
            StrategyKind::Regular => "regular",
            StrategyKind::Irregular => "irregular",
            StrategyKind::Islands => "islands",
        })
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nested" => Ok(StrategyKind::Nested),
            "regular" => Ok(StrategyKind::Regular),
            "irregular" => Ok(StrategyKind::Irregular),
            "islands" => Ok(StrategyKind::Islands),
            other => Err(Error::invalid(format!("unknown strategy '{other}'"))),
        }
    }
}

impl Strategy {
    /// Builds a strategy of `kind` whose size parameter is `size`: `J` for
    /// Nested, `N` for Regular, `|Γ|` (regular on `(0, A]`) otherwise.
    pub fn from_kind(kind: StrategyKind, size: usize, support: f64) -> Result<Self> {
        Ok(match kind {
            StrategyKind::Nested => Strategy::Nested { j: size as u32 },
            StrategyKind::Regular => Strategy::Regular { n: size },
            StrategyKind::Irregular => Strategy::Irregular {
                gamma: Partition::regular(support, size)?,
            },
            StrategyKind::Islands => Strategy::Islands {
                gamma: Partition::regular(support, size)?,
            },
        })
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            Strategy::Nested { .. } => StrategyKind::Nested,
            Strategy::Regular { .. } => StrategyKind::Regular,
            Strategy::Irregular { .. } => StrategyKind::Irregular,
            Strategy::Islands { .. } => StrategyKind::Islands,
        }
    }

    /// Checks the parameters; `force` lifts the `|Γ| ≤ 26` guard.
    pub fn validate(&self, force: bool) -> Result<()> {
        match self {
            Strategy::Nested { j } if *j > NESTED_MAX_J => Err(Error::invalid(format!(
                "nested depth J = {j} exceeds {NESTED_MAX_J}"
            ))),
            Strategy::Regular { n: 0 } => Err(Error::invalid("regular strategy needs N >= 1")),
            Strategy::Irregular { gamma } | Strategy::Islands { gamma } => {
                let size = gamma.len();
                if size > GAMMA_HARD_LIMIT || (size > GAMMA_CAP && !force) {
                    Err(Error::CapExceeded {
                        size,
                        cap: if force { GAMMA_HARD_LIMIT } else { GAMMA_CAP },
                    })
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Number of models, void included.
    pub fn model_count(&self) -> usize {
        match self {
            Strategy::Nested { j } => *j as usize + 2,
            Strategy::Regular { n } => n + 1,
            Strategy::Irregular { gamma } => (1usize << (gamma.len() - 1)) + 1,
            Strategy::Islands { gamma } => 1usize << gamma.len(),
        }
    }

    /// `|m|` of model `index`.
    pub fn model_size(&self, index: usize) -> usize {
        if index == 0 {
            return 0;
        }
        match self {
            Strategy::Nested { .. } => 1 << (index - 1),
            Strategy::Regular { .. } => index,
            Strategy::Irregular { .. } => (index - 1).count_ones() as usize + 1,
            Strategy::Islands { .. } => index.count_ones() as usize,
        }
    }

    /// Largest `|m|` in the family.
    pub fn max_size(&self) -> usize {
        match self {
            Strategy::Nested { j } => 1 << j,
            Strategy::Regular { n } => *n,
            Strategy::Irregular { gamma } | Strategy::Islands { gamma } => gamma.len(),
        }
    }

    /// Partition the model `index` is written on (`None` for void on
    /// Nested/Regular, which needs no partition).
    fn partition_of(&self, index: usize, support: f64) -> Result<Option<Partition>> {
        Ok(match self {
            Strategy::Irregular { gamma } | Strategy::Islands { gamma } => Some(gamma.clone()),
            _ if index == 0 => None,
            Strategy::Nested { .. } | Strategy::Regular { .. } => {
                Some(Partition::regular(support, self.model_size(index))?)
            }
        })
    }

    /// Cell ranges of model `index` on its partition, written into `cells`.
    pub fn cells_into(&self, index: usize, cells: &mut Vec<Range<usize>>) {
        cells.clear();
        if index == 0 {
            return;
        }
        match self {
            Strategy::Nested { .. } | Strategy::Regular { .. } => {
                cells.extend((0..self.model_size(index)).map(|c| c..c + 1));
            }
            Strategy::Irregular { gamma } => {
                let cuts = index - 1;
                let mut start = 0;
                for i in 0..gamma.len() - 1 {
                    if cuts >> i & 1 == 1 {
                        cells.push(start..i + 1);
                        start = i + 1;
                    }
                }
                cells.push(start..gamma.len());
            }
            Strategy::Islands { gamma } => {
                cells.extend(
                    (0..gamma.len())
                        .filter(|c| index >> c & 1 == 1)
                        .map(|c| c..c + 1),
                );
            }
        }
    }

    /// The model with enumeration index `index`.
    pub fn model(&self, index: usize, support: f64) -> Result<Model> {
        let mut cells = Vec::new();
        self.cells_into(index, &mut cells);
        match self.partition_of(index, support)? {
            Some(p) => Model::on_partition(&p, cells),
            None => Ok(Model::empty(support)),
        }
    }

    /// Every model in enumeration order.
    pub fn enumerate(&self, support: f64) -> Result<impl Iterator<Item = Model> + '_> {
        self.validate(true)?;
        if let Strategy::Irregular { gamma } | Strategy::Islands { gamma } = self {
            if (gamma.support() - support).abs() > 1e-9 * support {
                return Err(Error::SupportMismatch {
                    left: gamma.support(),
                    right: support,
                });
            }
        }
        Ok((0..self.model_count()).map(move |k| self.model(k, support).expect("valid index")))
    }
}

/// Where and how contrasts are integrated.
#[derive(Debug, Clone, Copy)]
pub struct FitContext<'a> {
    pub events: &'a EventSequence,
    pub window: (f64, f64),
    pub t_norm: f64,
}

impl<'a> FitContext<'a> {
    /// Full-sample fit: integrate over `[lower + A, upper]` normalized by its
    /// length. For data observed on `[−A, T]` this is `[0, T]` and `1/T`.
    pub fn full(events: &'a EventSequence, support: f64) -> Result<Self> {
        let start = events.lower() + support;
        let end = events.upper();
        if !(end > start) {
            return Err(Error::Window {
                start,
                end,
                lo: start,
                hi: end,
            });
        }
        Ok(Self {
            events,
            window: (start, end),
            t_norm: end - start,
        })
    }
}

/// One fitted model, handed to [`Family::map_fits`] closures.
pub struct ModelFit<'a> {
    pub index: usize,
    pub size: usize,
    pub cells: &'a [Range<usize>],
    /// `θ̂` in the normalized basis of `gram`, `ν̂` first.
    pub theta: &'a [f64],
    pub summary: FitSummary,
    pub gram: &'a GramSystem,
}

/// A strategy together with the Gram systems of its models.
#[derive(Debug, Clone)]
pub struct Family {
    strategy: Strategy,
    support: f64,
    /// One system (Irregular/Islands) or one per index `k ≥ 1` at `k − 1`,
    /// with void fitted on the first.
    grams: Vec<GramSystem>,
}

impl Family {
    pub fn new(
        strategy: Strategy,
        support: f64,
        ctx: &FitContext<'_>,
        force: bool,
    ) -> Result<Self> {
        strategy.validate(force)?;
        let grams = match &strategy {
            Strategy::Irregular { gamma } | Strategy::Islands { gamma } => {
                if (gamma.support() - support).abs() > 1e-9 * support {
                    return Err(Error::SupportMismatch {
                        left: gamma.support(),
                        right: support,
                    });
                }
                vec![build_gram(ctx.events, gamma, ctx.window, ctx.t_norm)?]
            }
            Strategy::Nested { .. } | Strategy::Regular { .. } => (1..strategy.model_count())
                .map(|k| {
                    let p = Partition::regular(support, strategy.model_size(k))?;
                    build_gram(ctx.events, &p, ctx.window, ctx.t_norm)
                })
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(Self {
            strategy,
            support,
            grams,
        })
    }

    pub fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    pub fn support(&self) -> f64 {
        self.support
    }

    pub fn len(&self) -> usize {
        self.strategy.model_count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn grams(&self) -> &[GramSystem] {
        &self.grams
    }

    /// Gram system model `index` is fitted on.
    pub fn gram_for(&self, index: usize) -> &GramSystem {
        if self.grams.len() == 1 {
            &self.grams[0]
        } else {
            &self.grams[index.saturating_sub(1)]
        }
    }

    pub fn model(&self, index: usize) -> Model {
        self.strategy
            .model(index, self.support)
            .expect("index within the family")
    }

    /// Fits model `index`.
    pub fn fit(&self, index: usize) -> Estimator {
        let mut cells = Vec::new();
        self.strategy.cells_into(index, &mut cells);
        let mut scratch = FitScratch::default();
        let gram = self.gram_for(index);
        let fit = gram.fit_cells(&cells, &mut scratch);
        let mut est = gram.estimator_from(&cells, scratch.theta(), fit);
        if cells.is_empty() {
            est.model = Model::empty(self.support);
        }
        est
    }

    /// Fits every model and maps `f` over them, in enumeration order.
    pub fn map_fits<V, F>(&self, f: F) -> Vec<V>
    where
        V: Send,
        F: Fn(&ModelFit<'_>) -> V + Sync,
    {
        (0..self.len())
            .into_par_iter()
            .with_min_len(256)
            .map_init(
                || (FitScratch::default(), Vec::new()),
                |(scratch, cells), index| {
                    self.strategy.cells_into(index, cells);
                    let gram = self.gram_for(index);
                    let summary = gram.fit_cells(cells, scratch);
                    f(&ModelFit {
                        index,
                        size: cells.len(),
                        cells,
                        theta: scratch.theta(),
                        summary,
                        gram,
                    })
                },
            )
            .collect()
    }

    /// Contrast `γ_T(ŝ_m)` of every model, in enumeration order.
    pub fn contrasts(&self) -> Vec<f64> {
        self.map_fits(|m| m.summary.contrast)
    }

    /// Best fitted model of every size.
    pub fn best_per_dimension(&self) -> ContrastCurve {
        let contrasts = self.contrasts();
        ContrastCurve::from_values(self, &contrasts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    /// `|m|`.
    pub size: usize,
    /// Enumeration index of the model.
    pub index: usize,
    pub contrast: f64,
    pub estimator: Estimator,
}

impl CurveRecord {
    /// `|m| + 1`.
    pub fn dimension(&self) -> usize {
        self.size + 1
    }
}

/// `m̂_D = argmin_{|m| = D} γ_T(ŝ_m)` for every available size `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastCurve {
    /// Sorted by size, one record per size present in the family.
    pub records: Vec<CurveRecord>,
}

impl ContrastCurve {
    /// Per-size minima of `values[index]`; ties go to the earliest index.
    pub fn from_values(family: &Family, values: &[f64]) -> Self {
        let strategy = family.strategy();
        let mut best: Vec<Option<(f64, usize)>> = vec![None; strategy.max_size() + 1];
        for (index, &v) in values.iter().enumerate() {
            let slot = &mut best[strategy.model_size(index)];
            match slot {
                Some((bv, _)) if !(v < *bv) => {}
                _ => *slot = Some((v, index)),
            }
        }
        let records = best
            .into_iter()
            .enumerate()
            .filter_map(|(size, b)| b.map(|(_, index)| (size, index)))
            .map(|(size, index)| {
                let estimator = family.fit(index);
                CurveRecord {
                    size,
                    index,
                    contrast: estimator.contrast,
                    estimator,
                }
            })
            .collect();
        Self { records }
    }

    pub fn record(&self, size: usize) -> Option<&CurveRecord> {
        self.records
            .binary_search_by_key(&size, |r| r.size)
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn max_size(&self) -> usize {
        self.records.last().map_or(0, |r| r.size)
    }

    /// `(|m|, γ_T(ŝ_{m̂}))` pairs.
    pub fn points(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.records.iter().map(|r| (r.size, r.contrast))
    }
}
