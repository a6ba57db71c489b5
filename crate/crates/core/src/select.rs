//! Penalized model selection, hold-out selection and clipping.
//!
//! All penalties here are linear in the dimension, `pen(m) = k · (|m| + 1)`,
//! so the penalized minimizer over a family is always one of its per-size
//! best models. Methods 1 to 8:
//!
//! | id | strategy  | penalty  |
//! |----|-----------|----------|
//! | 1  | Regular   | minimal  |
//! | 2  | Irregular | angle    |
//! | 3  | Irregular | minimal  |
//! | 4  | Islands   | angle    |
//! | 5  | Islands   | minimal  |
//! | 6  | Regular   | hold-out |
//! | 7  | Irregular | hold-out |
//! | 8  | Islands   | hold-out |

use log::warn;
use serde::{Deserialize, Serialize};

use crate::contrast::Estimator;
use crate::error::{Error, Result};
use crate::events::EventSequence;
use crate::families::{ContrastCurve, Family, FitContext, ModelFit, Strategy, StrategyKind};
use crate::model::ClipBounds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltySpec {
    /// `κ Q (|m|+1) log(T)² / T`.
    Theoretical {
        kappa: f64,
        q: f64,
    },
    /// Twice the slope of the contrast curve over `range` (sizes `|m|`).
    Minimal {
        range: Option<(usize, usize)>,
        intercept: bool,
    },
    /// Slope between the size-1 and full models.
    Angle,
    None,
}

impl PenaltySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PenaltySpec::Theoretical { .. } => "theoretical",
            PenaltySpec::Minimal { .. } => "minimal",
            PenaltySpec::Angle => "angle",
            PenaltySpec::None => "none",
        }
    }
}

/// `κ Q (|m| + 1) log(T)² / T`.
pub fn theoretical_penalty(size: usize, kappa: f64, q: f64, t: f64) -> Result<f64> {
    if !(kappa > 0.0 && q > 1.0 && t > 1.0) {
        return Err(Error::invalid(
            "theoretical penalty needs kappa > 0, Q > 1, T > 1",
        ));
    }
    Ok(kappa * q * (size as f64 + 1.0) * t.ln().powi(2) / t)
}

/// Default regression range of the minimal penalty: the upper half of sizes.
pub fn default_regression_range(max_size: usize) -> (usize, usize) {
    (max_size.div_ceil(2), max_size)
}

/// Slope `k̂` of `γ(ŝ_{m̂_D}) ≃ −k̂ (D + 1)` fitted over sizes in `range`.
///
/// With `intercept` the fit is affine and only its slope is kept; otherwise it
/// goes through the origin. Negative slopes are clamped to zero.
pub fn calibrate_minimal(
    curve: &ContrastCurve,
    range: Option<(usize, usize)>,
    intercept: bool,
) -> Result<f64> {
    let (lo, hi) = range.unwrap_or_else(|| default_regression_range(curve.max_size()));
    let pts: Vec<(f64, f64)> = curve
        .points()
        .filter(|&(d, _)| d >= lo && d <= hi)
        .map(|(d, g)| (d as f64 + 1.0, -g))
        .collect();
    if pts.len() < 2 {
        return Err(Error::invalid(format!(
            "regression range [{lo}, {hi}] holds {} curve point(s); need at least 2",
            pts.len()
        )));
    }
    let k = if intercept {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    } else {
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        sxy / sxx
    };
    if !k.is_finite() {
        return Err(Error::Numeric(
            "minimal penalty regression is singular".into(),
        ));
    }
    if k < 0.0 {
        warn!("minimal penalty slope {k:e} is negative; clamped to 0");
        return Ok(0.0);
    }
    Ok(k)
}

/// `k̄ = (γ(ŝ_{m̂_1}) − γ(ŝ_Γ)) / (|Γ| − 1)`.
pub fn calibrate_angle(curve: &ContrastCurve) -> Result<f64> {
    let full = curve.max_size();
    let one = curve
        .record(1)
        .ok_or_else(|| Error::invalid("angle calibration needs a size-1 model"))?;
    if full < 2 {
        return Err(Error::invalid(
            "angle calibration needs a full model of size >= 2",
        ));
    }
    let last = curve.record(full).expect("max size is present");
    let k = (one.contrast - last.contrast) / (full as f64 - 1.0);
    if k < 0.0 {
        warn!("angle slope {k:e} is negative; clamped to 0");
        return Ok(0.0);
    }
    Ok(k)
}

/// Position in `curve.records` minimizing `γ + slope · (|m| + 1)`; ties go
/// to the smallest size.
pub fn penalized_argmin(curve: &ContrastCurve, slope: f64) -> usize {
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for (i, r) in curve.records.iter().enumerate() {
        let v = r.contrast + slope * (r.size as f64 + 1.0);
        if v < best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

/// Enumeration index minimizing `γ + slope · (|m| + 1)` over every model of
/// the family; ties go to the smallest size, then the earliest index.
pub fn penalized_select_family(family: &Family, slope: f64) -> usize {
    let vals = family.map_fits(|m| (m.size, m.summary.contrast + slope * (m.size as f64 + 1.0)));
    let mut best = (f64::INFINITY, usize::MAX, 0);
    for (index, &(size, v)) in vals.iter().enumerate() {
        if v < best.0 || (v == best.0 && size < best.1) {
            best = (v, size, index);
        }
    }
    best.2
}

/// Clamps `ν̂` to `[ρ, η]` and `ĥ` to `[0, H]` pointwise. The stored contrast
/// is that of the unclipped fit.
pub fn clip_estimator(est: &Estimator, bounds: &ClipBounds) -> Estimator {
    let nu = est.nu_hat.clamp(bounds.rho(), bounds.eta());
    let h = est.h_hat.clamp_values(0.0, bounds.h_max());
    let mut coefficients = Vec::with_capacity(est.coefficients.len());
    coefficients.push(nu);
    for &(a, b) in est.model.intervals() {
        coefficients.push(h.eval(0.5 * (a + b)) * (b - a).sqrt());
    }
    Estimator {
        nu_hat: nu,
        h_hat: h,
        model: est.model.clone(),
        contrast: est.contrast,
        coefficients,
        degenerate: est.degenerate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// `|m| + 1`.
    pub dimension: usize,
    pub contrast: f64,
    pub penalty: f64,
    pub penalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub method: Option<u8>,
    pub strategy: StrategyKind,
    pub penalty_kind: String,
    /// `k̂`, `k̄` or `κQ log(T)²/T`; zero for hold-out.
    pub penalty_constant: f64,
    /// Multiplier of `|m| + 1` actually used (`2k̂` for the minimal penalty).
    pub slope: f64,
    /// Criterion per size: the penalized contrast, or for hold-out the best
    /// second-half score of each size.
    pub curve: Vec<CurvePoint>,
    pub chosen_index: usize,
    pub chosen: Estimator,
    pub nonstandard_pairing: bool,
}

impl SelectionReport {
    /// `|m̂| + 1`.
    pub fn dimension(&self) -> usize {
        self.chosen.dimension()
    }
}

/// Knobs shared by the eight methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodConfig {
    /// `|Γ|` for Irregular and Islands.
    pub gamma_size: usize,
    /// Largest regular partition for Regular.
    pub regular_max: usize,
    pub regression_range: Option<(usize, usize)>,
    /// Affine regression for the minimal penalty.
    pub intercept: bool,
    pub force_large_gamma: bool,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            gamma_size: 15,
            regular_max: 15,
            regression_range: None,
            intercept: true,
            force_large_gamma: false,
        }
    }
}

/// Selection rule of a method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    Penalized(PenaltySpec),
    HoldOut,
}

/// Strategy kind and rule of method `id`.
pub fn method_pairing(id: u8, cfg: &MethodConfig) -> Result<(StrategyKind, Rule)> {
    let minimal = PenaltySpec::Minimal {
        range: cfg.regression_range,
        intercept: cfg.intercept,
    };
    Ok(match id {
        1 => (StrategyKind::Regular, Rule::Penalized(minimal)),
        2 => (StrategyKind::Irregular, Rule::Penalized(PenaltySpec::Angle)),
        3 => (StrategyKind::Irregular, Rule::Penalized(minimal)),
        4 => (StrategyKind::Islands, Rule::Penalized(PenaltySpec::Angle)),
        5 => (StrategyKind::Islands, Rule::Penalized(minimal)),
        6 => (StrategyKind::Regular, Rule::HoldOut),
        7 => (StrategyKind::Irregular, Rule::HoldOut),
        8 => (StrategyKind::Islands, Rule::HoldOut),
        _ => return Err(Error::invalid(format!("method id {id} is not in 1..=8"))),
    })
}

/// Strategy of `kind` sized from `cfg`.
pub fn strategy_for(kind: StrategyKind, support: f64, cfg: &MethodConfig) -> Result<Strategy> {
    let size = match kind {
        StrategyKind::Regular => cfg.regular_max,
        StrategyKind::Nested => (cfg.regular_max.max(1) as f64).log2().floor() as usize,
        _ => cfg.gamma_size,
    };
    Strategy::from_kind(kind, size, support)
}

fn resolve_slope(spec: &PenaltySpec, curve: &ContrastCurve, t: f64) -> Result<(f64, f64)> {
    Ok(match *spec {
        PenaltySpec::Theoretical { kappa, q } => {
            let k = theoretical_penalty(0, kappa, q, t)?;
            (k, k)
        }
        PenaltySpec::Minimal { range, intercept } => {
            let k = calibrate_minimal(curve, range, intercept)?;
            (k, 2.0 * k)
        }
        PenaltySpec::Angle => {
            let k = calibrate_angle(curve)?;
            (k, k)
        }
        PenaltySpec::None => (0.0, 0.0),
    })
}

/// Penalized selection over an already fitted family, given its contrasts.
pub fn penalized_from_contrasts(
    family: &Family,
    contrasts: &[f64],
    spec: &PenaltySpec,
    t: f64,
) -> Result<SelectionReport> {
    let curve = ContrastCurve::from_values(family, contrasts);
    let (constant, slope) = resolve_slope(spec, &curve, t)?;
    let pos = penalized_argmin(&curve, slope);
    let points = curve
        .records
        .iter()
        .map(|r| {
            let penalty = slope * (r.size as f64 + 1.0);
            CurvePoint {
                dimension: r.dimension(),
                contrast: r.contrast,
                penalty,
                penalized: r.contrast + penalty,
            }
        })
        .collect();
    let chosen = &curve.records[pos];
    let kind = family.strategy().kind();
    Ok(SelectionReport {
        method: None,
        strategy: kind,
        penalty_kind: spec.name().to_string(),
        penalty_constant: constant,
        slope,
        curve: points,
        chosen_index: chosen.index,
        chosen: chosen.estimator.clone(),
        nonstandard_pairing: matches!(spec, PenaltySpec::Angle)
            && matches!(kind, StrategyKind::Regular | StrategyKind::Nested),
    })
}

/// Fits the family on the full sample and selects with `spec`.
pub fn penalized_select(
    events: &EventSequence,
    strategy: Strategy,
    support: f64,
    spec: &PenaltySpec,
    force: bool,
) -> Result<SelectionReport> {
    let ctx = FitContext::full(events, support)?;
    let family = Family::new(strategy, support, &ctx, force)?;
    let contrasts = family.contrasts();
    penalized_from_contrasts(&family, &contrasts, spec, ctx.t_norm)
}

/// First-half and second-half families of a hold-out split.
pub struct HoldoutSplit {
    pub first: Family,
    pub second: Family,
}

impl HoldoutSplit {
    /// With data on `[o − A, o + T]`: fits use points in `[o − A, o + T/2 − A]`
    /// integrated over `[o, o + T/2 − A]`; scores use points in
    /// `[o + T/2, o + T]` integrated over `[o + T/2 + A, o + T]`. Both are
    /// normalized by `1/T`.
    pub fn new(
        events: &EventSequence,
        strategy: Strategy,
        support: f64,
        force: bool,
    ) -> Result<Self> {
        let a = support;
        let o = events.lower() + a;
        let t = events.upper() - o;
        if !(t > 4.0 * a) {
            return Err(Error::invalid(format!(
                "hold-out needs T > 4A (T = {t}, A = {a})"
            )));
        }
        let h1 = events.restrict(o - a, o + t / 2.0 - a)?;
        let h2 = events.restrict(o + t / 2.0, o + t)?;
        if h1.is_empty() || h2.is_empty() {
            warn!(
                "hold-out half is empty ({} and {} points)",
                h1.len(),
                h2.len()
            );
        }
        let first = Family::new(
            strategy.clone(),
            a,
            &FitContext {
                events: &h1,
                window: (o, o + t / 2.0 - a),
                t_norm: t,
            },
            force,
        )?;
        let second = Family::new(
            strategy,
            a,
            &FitContext {
                events: &h2,
                window: (o + t / 2.0 + a, o + t),
                t_norm: t,
            },
            force,
        )?;
        Ok(Self { first, second })
    }

    /// Second-half score of every first-half fit, then `f` of each fit.
    pub fn scan<V, F>(&self, f: F) -> Vec<(f64, V)>
    where
        V: Send,
        F: Fn(&ModelFit<'_>) -> V + Sync,
    {
        self.first.map_fits(|m| {
            let score = SCRATCH.with(|s| {
                self.second
                    .gram_for(m.index)
                    .score_cells(m.cells, m.theta, &mut s.borrow_mut())
            });
            (score, f(m))
        })
    }

    /// Selection from per-model scores; ties go to the smallest size, then
    /// the earliest index.
    pub fn select_from_scores(&self, scores: &[f64]) -> SelectionReport {
        let strategy = self.first.strategy();
        let mut best = (f64::INFINITY, usize::MAX, 0);
        let mut per_size: Vec<Option<f64>> = vec![None; strategy.max_size() + 1];
        for (index, &s) in scores.iter().enumerate() {
            let size = strategy.model_size(index);
            if s < best.0 || (s == best.0 && size < best.1) {
                best = (s, size, index);
            }
            let slot = &mut per_size[size];
            if slot.map_or(true, |v| s < v) {
                *slot = Some(s);
            }
        }
        let curve = per_size
            .iter()
            .enumerate()
            .filter_map(|(size, s)| {
                s.map(|s| CurvePoint {
                    dimension: size + 1,
                    contrast: s,
                    penalty: 0.0,
                    penalized: s,
                })
            })
            .collect();
        SelectionReport {
            method: None,
            strategy: strategy.kind(),
            penalty_kind: "holdout".into(),
            penalty_constant: 0.0,
            slope: 0.0,
            curve,
            chosen_index: best.2,
            chosen: self.first.fit(best.2),
            nonstandard_pairing: false,
        }
    }
}

thread_local! {
    static SCRATCH: std::cell::RefCell<crate::contrast::FitScratch> = Default::default();
}

/// Hold-out selection on `strategy`.
pub fn holdout_select(
    events: &EventSequence,
    strategy: Strategy,
    support: f64,
    force: bool,
) -> Result<SelectionReport> {
    let split = HoldoutSplit::new(events, strategy, support, force)?;
    let scores: Vec<f64> = split.scan(|_| ()).into_iter().map(|(s, _)| s).collect();
    Ok(split.select_from_scores(&scores))
}

/// Runs method `id` on events observed on `[lower, upper]` with kernel
/// support `(0, A]`.
pub fn run_method(
    id: u8,
    events: &EventSequence,
    support: f64,
    cfg: &MethodConfig,
) -> Result<SelectionReport> {
    run_method_observed(id, events, support, cfg, |_| ()).map(|(r, _)| r)
}

/// As [`run_method`], also mapping `observe` over every fitted model of the
/// family the selection ranges over (the first-half fits for hold-out).
pub fn run_method_observed<V, F>(
    id: u8,
    events: &EventSequence,
    support: f64,
    cfg: &MethodConfig,
    observe: F,
) -> Result<(SelectionReport, Vec<V>)>
where
    V: Send,
    F: Fn(&ModelFit<'_>) -> V + Sync,
{
    let (kind, rule) = method_pairing(id, cfg)?;
    let strategy = strategy_for(kind, support, cfg)?;
    let (mut report, observed) = match rule {
        Rule::Penalized(spec) => {
            let ctx = FitContext::full(events, support)?;
            let family = Family::new(strategy, support, &ctx, cfg.force_large_gamma)?;
            let (contrasts, observed): (Vec<f64>, Vec<V>) = family
                .map_fits(|m| (m.summary.contrast, observe(m)))
                .into_iter()
                .unzip();
            (
                penalized_from_contrasts(&family, &contrasts, &spec, ctx.t_norm)?,
                observed,
            )
        }
        Rule::HoldOut => {
            let split = HoldoutSplit::new(events, strategy, support, cfg.force_large_gamma)?;
            let (scores, observed): (Vec<f64>, Vec<V>) = split.scan(observe).into_iter().unzip();
            (split.select_from_scores(&scores), observed)
        }
    };
    report.method = Some(id);
    Ok((report, observed))
}
