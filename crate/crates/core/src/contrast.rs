//! Least-squares contrast of candidate intensities.
//!
//! For a partition `Γ` of `(0, A]` with cells `I_1..I_N`, each indicator
//! candidate `Ψ_{(0, 1_I)}(t) = #{u : t − u ∈ I}` is a step function of `t`
//! with jumps at `u + x_k`. [`build_gram`] sweeps those jumps once and
//! accumulates exact integrals into
//!
//! ```text
//! b[0]    = N(window) / T            b[i]    = (1/T) Σ_{t ∈ window} Ψ_i(t)
//! X[0][0] = |window| / T             X[0][i] = (1/T) ∫ Ψ_i(t) dt
//! X[i][j] = (1/T) ∫ Ψ_i(t) Ψ_j(t) dt
//! ```
//!
//! on plain (unnormalized) indicators. Reducing to a model sums rows and
//! columns over the cells of each interval and rescales by `1/√ℓ(I)`, so the
//! coefficients live in the basis `{(1, 0)} ∪ {(0, 1_I/√ℓ(I))}`; the contrast
//! of `θ` is `−2 θᵀb + θᵀXθ` and the minimizer solves `X θ = b`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventSequence;
use crate::linalg::solve_psd;
use crate::model::{Model, Partition};
use crate::step::StepFunction;
use crate::truth::{Candidate, GroundTruth, Intensity, KernelRef};

/// `Ψ_f(t) = μ + Σ_{u ∈ [t−A, t)} g(t − u)`.
pub fn psi_eval(mu: f64, g: KernelRef<'_>, events: &EventSequence, t: f64) -> f64 {
    let a = g.support();
    let times = events.times();
    let lo = history_start(times, t, a);
    let hi = times.partition_point(|&u| u < t);
    mu + times[lo..hi.max(lo)]
        .iter()
        .map(|&u| g.eval(t - u))
        .sum::<f64>()
}

/// First index with `t − u ≤ a`, judged on the computed lag so that it agrees
/// with [`lag_cell`] when `t − a` rounds differently.
#[inline]
fn history_start(times: &[f64], t: f64, a: f64) -> usize {
    let mut from = times.partition_point(|&u| u < t - a);
    while from > 0 && t - times[from - 1] <= a {
        from -= 1;
    }
    while from < times.len() && t - times[from] > a {
        from += 1;
    }
    from
}

/// Lag cell containing `d ∈ (0, A]`, matching [`StepFunction::eval`].
#[inline]
fn lag_cell(breaks: &[f64], d: f64) -> Option<usize> {
    if !(d > 0.0) || d > breaks[breaks.len() - 1] {
        return None;
    }
    Some(breaks.partition_point(|&x| x < d) - 1)
}

#[derive(Debug, Clone)]
pub struct GramSystem {
    partition: Partition,
    b: Vec<f64>,
    x: Vec<f64>,
    window: (f64, f64),
    t_norm: f64,
    window_events: usize,
    prefix: Prefix,
}

/// Prefix sums over cell indices for O(1) block reductions.
#[derive(Debug, Clone, Default)]
struct Prefix {
    b: Vec<f64>,
    row0: Vec<f64>,
    block: Vec<f64>,
}

/// Builds the Gram system over `window = [start, end]`, normalizing by `t_norm`.
///
/// The window must satisfy `start ≥ events.lower + A` so every `Ψ` is fully
/// observed, and `end ≤ events.upper`.
pub fn build_gram(
    events: &EventSequence,
    partition: &Partition,
    window: (f64, f64),
    t_norm: f64,
) -> Result<GramSystem> {
    let (start, end) = window;
    let a = partition.support();
    let lo = events.lower() + a;
    let slack = 1e-9 * a.max(1.0);
    if !(start < end) || start < lo - slack || end > events.upper() + slack {
        return Err(Error::Window {
            start,
            end,
            lo,
            hi: events.upper(),
        });
    }
    if !(t_norm > 0.0) {
        return Err(Error::invalid("normalizer T must be positive"));
    }
    let n = partition.len();
    let dim = n + 1;
    let breaks = partition.breaks();
    let times = events.times();

    // b: evaluate every indicator at the window's points directly.
    let mut b = vec![0.0; dim];
    let window_events = events.count_closed(start, end);
    b[0] = window_events as f64;
    let first = times.partition_point(|&u| u < start);
    let last = times.partition_point(|&u| u <= end);
    for k in first..last {
        let t = times[k];
        let from = history_start(times, t, a);
        for &u in &times[from..k] {
            if let Some(c) = lag_cell(breaks, t - u) {
                b[c + 1] += 1.0;
            }
        }
    }

    // X: sweep the jumps u + x_k of all indicator candidates.
    let sources = events.index_range(start - a, end);
    let mut jumps: Vec<(f64, u32)> = Vec::with_capacity(sources.len() * (n + 1));
    for &u in &times[sources] {
        for (k, &x) in breaks.iter().enumerate() {
            jumps.push((u + x, k as u32));
        }
    }
    jumps.sort_unstable_by(|p, q| p.0.total_cmp(&q.0));

    let mut x = vec![0.0; dim * dim];
    let mut counts = vec![0i64; n];
    let mut active: Vec<usize> = Vec::with_capacity(n);
    let mut cursor = start;
    let accumulate = |len: f64, counts: &[i64], active: &mut Vec<usize>, x: &mut [f64]| {
        active.clear();
        active.extend((0..n).filter(|&c| counts[c] != 0));
        for (p, &ci) in active.iter().enumerate() {
            let vi = counts[ci] as f64 * len;
            x[ci + 1] += vi;
            let row = (ci + 1) * dim;
            for &cj in &active[p..] {
                x[row + cj + 1] += vi * counts[cj] as f64;
            }
        }
    };
    for &(tau, k) in &jumps {
        if tau > cursor {
            let seg_end = tau.min(end);
            if seg_end > cursor {
                accumulate(seg_end - cursor, &counts, &mut active, &mut x);
                cursor = seg_end;
            }
        }
        if tau >= end {
            break;
        }
        let k = k as usize;
        if k > 0 {
            counts[k - 1] -= 1;
        }
        if k < n {
            counts[k] += 1;
        }
    }
    if cursor < end {
        accumulate(end - cursor, &counts, &mut active, &mut x);
    }
    x[0] = end - start;
    // mirror row 0 and the upper triangle
    for i in 1..dim {
        x[i * dim] = x[i];
        for j in i + 1..dim {
            x[j * dim + i] = x[i * dim + j];
        }
    }
    let inv = 1.0 / t_norm;
    b.iter_mut().for_each(|v| *v *= inv);
    x.iter_mut().for_each(|v| *v *= inv);

    Ok(GramSystem::assemble(
        partition.clone(),
        b,
        x,
        window,
        t_norm,
        window_events,
    ))
}

/// Reusable buffers for repeated model fits on one Gram system.
#[derive(Debug, Clone, Default)]
pub struct FitScratch {
    xm: Vec<f64>,
    bm: Vec<f64>,
    theta: Vec<f64>,
    factor: Vec<f64>,
}

impl FitScratch {
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSummary {
    pub contrast: f64,
    pub degenerate: bool,
}

/// A model's reduced normal equations.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    pub dim: usize,
    /// Row-major `dim × dim`.
    pub x: Vec<f64>,
    pub b: Vec<f64>,
}

impl GramSystem {
    fn assemble(
        partition: Partition,
        b: Vec<f64>,
        x: Vec<f64>,
        window: (f64, f64),
        t_norm: f64,
        window_events: usize,
    ) -> Self {
        let mut g = Self {
            partition,
            b,
            x,
            window,
            t_norm,
            window_events,
            prefix: Prefix::default(),
        };
        g.prefix = g.compute_prefix();
        g
    }

    fn compute_prefix(&self) -> Prefix {
        let n = self.partition.len();
        let dim = n + 1;
        let mut pb = vec![0.0; n + 1];
        let mut row0 = vec![0.0; n + 1];
        for c in 0..n {
            pb[c + 1] = pb[c] + self.b[c + 1];
            row0[c + 1] = row0[c] + self.x[c + 1];
        }
        let stride = n + 1;
        let mut block = vec![0.0; stride * stride];
        for i in 0..n {
            for j in 0..n {
                block[(i + 1) * stride + j + 1] = self.x[(i + 1) * dim + j + 1]
                    + block[i * stride + j + 1]
                    + block[(i + 1) * stride + j]
                    - block[i * stride + j];
            }
        }
        Prefix { b: pb, row0, block }
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Unnormalized `(N+1) × (N+1)` matrix, row-major.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x_at(&self, i: usize, j: usize) -> f64 {
        self.x[i * (self.partition.len() + 1) + j]
    }

    pub fn dim(&self) -> usize {
        self.partition.len() + 1
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn t_norm(&self) -> f64 {
        self.t_norm
    }

    /// Points of the process inside the integration window.
    pub fn window_events(&self) -> usize {
        self.window_events
    }

    fn row0_sum(&self, r: &Range<usize>) -> f64 {
        if r.len() == 1 {
            self.x[r.start + 1]
        } else {
            self.prefix.row0[r.end] - self.prefix.row0[r.start]
        }
    }

    fn b_sum(&self, r: &Range<usize>) -> f64 {
        if r.len() == 1 {
            self.b[r.start + 1]
        } else {
            self.prefix.b[r.end] - self.prefix.b[r.start]
        }
    }

    fn block_sum(&self, r: &Range<usize>, s: &Range<usize>) -> f64 {
        if r.len() == 1 && s.len() == 1 {
            return self.x_at(r.start + 1, s.start + 1);
        }
        let stride = self.partition.len() + 1;
        let p = &self.prefix.block;
        p[r.end * stride + s.end] - p[r.start * stride + s.end] - p[r.end * stride + s.start]
            + p[r.start * stride + s.start]
    }

    fn span_len(&self, r: &Range<usize>) -> f64 {
        let br = self.partition.breaks();
        br[r.end] - br[r.start]
    }

    /// Writes the normalized reduced system of `cells` into `xm`, `bm`.
    pub fn reduce_into(&self, cells: &[Range<usize>], xm: &mut Vec<f64>, bm: &mut Vec<f64>) {
        let d = cells.len() + 1;
        xm.clear();
        xm.resize(d * d, 0.0);
        bm.clear();
        bm.resize(d, 0.0);
        xm[0] = self.x[0];
        bm[0] = self.b[0];
        let mut scale = [0.0f64; 64];
        let mut scale_vec;
        let scale: &mut [f64] = if cells.len() <= 64 {
            &mut scale[..cells.len()]
        } else {
            scale_vec = vec![0.0; cells.len()];
            &mut scale_vec
        };
        for (i, r) in cells.iter().enumerate() {
            scale[i] = 1.0 / self.span_len(r).sqrt();
        }
        for (i, r) in cells.iter().enumerate() {
            let v = self.row0_sum(r) * scale[i];
            xm[i + 1] = v;
            xm[(i + 1) * d] = v;
            bm[i + 1] = self.b_sum(r) * scale[i];
            for (j, s) in cells.iter().enumerate().skip(i) {
                let v = self.block_sum(r, s) * scale[i] * scale[j];
                xm[(i + 1) * d + j + 1] = v;
                xm[(j + 1) * d + i + 1] = v;
            }
        }
    }

    pub fn reduce_to_model(&self, model: &Model) -> Result<ReducedSystem> {
        let cells = model.cells_on(&self.partition)?;
        let mut x = Vec::new();
        let mut b = Vec::new();
        self.reduce_into(&cells, &mut x, &mut b);
        Ok(ReducedSystem {
            dim: cells.len() + 1,
            x,
            b,
        })
    }

    /// Solves the reduced system of `cells`; `θ̂` is left in `scratch.theta()`.
    pub fn fit_cells(&self, cells: &[Range<usize>], scratch: &mut FitScratch) -> FitSummary {
        let d = cells.len() + 1;
        let FitScratch {
            xm,
            bm,
            theta,
            factor,
        } = scratch;
        self.reduce_into(cells, xm, bm);
        theta.clear();
        theta.resize(d, 0.0);
        factor.resize(d * d, 0.0);
        let degenerate = solve_psd(xm, bm, theta, factor, d);
        let contrast = -theta.iter().zip(bm.iter()).map(|(t, b)| t * b).sum::<f64>();
        FitSummary {
            contrast,
            degenerate,
        }
    }

    /// `−2 θᵀ b_m + θᵀ X_m θ` for normalized coordinates `θ` on `cells`.
    pub fn score_cells(
        &self,
        cells: &[Range<usize>],
        theta: &[f64],
        scratch: &mut FitScratch,
    ) -> f64 {
        let d = cells.len() + 1;
        self.reduce_into(cells, &mut scratch.xm, &mut scratch.bm);
        quadratic_contrast(&scratch.xm, &scratch.bm, theta, d)
    }

    pub fn fit_model(&self, model: &Model) -> Result<Estimator> {
        let cells = model.cells_on(&self.partition)?;
        let mut scratch = FitScratch::default();
        let fit = self.fit_cells(&cells, &mut scratch);
        Ok(self.estimator_from(&cells, scratch.theta(), fit))
    }

    /// Packages normalized coefficients on `cells` as an estimator.
    pub fn estimator_from(
        &self,
        cells: &[Range<usize>],
        theta: &[f64],
        fit: FitSummary,
    ) -> Estimator {
        let a = self.partition.support();
        let br = self.partition.breaks();
        let pieces: Vec<(f64, f64, f64)> = cells
            .iter()
            .zip(&theta[1..])
            .map(|(r, &coef)| {
                let (lo, hi) = (br[r.start], br[r.end]);
                (lo, hi, coef / (hi - lo).sqrt())
            })
            .collect();
        let h_hat = if pieces.is_empty() {
            StepFunction::zero(a)
        } else {
            StepFunction::from_pieces(a, &pieces).expect("cells come from a valid partition")
        };
        Estimator {
            nu_hat: theta[0],
            h_hat,
            model: Model::on_partition(&self.partition, cells.to_vec())
                .expect("cells come from a valid partition"),
            contrast: fit.contrast,
            coefficients: theta.to_vec(),
            degenerate: fit.degenerate,
        }
    }

    /// Unnormalized coordinates of `f` on the partition, if `g` is constant on
    /// every cell.
    pub fn coordinates(&self, f: &Candidate) -> Option<Vec<f64>> {
        let p = &self.partition;
        if (f.g.support() - p.support()).abs() > 1e-9 * p.support() {
            return None;
        }
        if f.g.breaks().iter().any(|&x| p.break_index(x).is_none()) {
            return None;
        }
        let mut theta = Vec::with_capacity(self.dim());
        theta.push(f.mu);
        for c in 0..p.len() {
            let (lo, hi) = p.cell(c);
            theta.push(f.g.eval(0.5 * (lo + hi)));
        }
        Some(theta)
    }

    /// `γ_T(f) = −2θᵀb + θᵀXθ`; errors when `f` is not written on the partition.
    pub fn contrast_of(&self, f: &Candidate) -> Result<f64> {
        let theta = self
            .coordinates(f)
            .ok_or_else(|| Error::NotOnPartition("candidate kernel".into()))?;
        Ok(quadratic_contrast(&self.x, &self.b, &theta, self.dim()))
    }

    /// `D²_T(f) = θᵀXθ`.
    pub fn dt_square(&self, f: &Candidate) -> Result<f64> {
        let theta = self
            .coordinates(f)
            .ok_or_else(|| Error::NotOnPartition("candidate kernel".into()))?;
        Ok(quadratic_form(&self.x, &theta, self.dim()))
    }
}

pub(crate) fn quadratic_form(x: &[f64], theta: &[f64], d: usize) -> f64 {
    let mut q = 0.0;
    for i in 0..d {
        let row = &x[i * d..(i + 1) * d];
        q += theta[i] * row.iter().zip(theta).map(|(a, t)| a * t).sum::<f64>();
    }
    q
}

pub(crate) fn quadratic_contrast(x: &[f64], b: &[f64], theta: &[f64], d: usize) -> f64 {
    let lin: f64 = theta.iter().zip(b).map(|(t, b)| t * b).sum();
    -2.0 * lin + quadratic_form(x, theta, d)
}

/// Contrast of an arbitrary step candidate by its own sweep, without a Gram
/// system. Slow path for candidates not written on a given partition.
pub fn contrast_direct(
    f: &Candidate,
    events: &EventSequence,
    window: (f64, f64),
    t_norm: f64,
) -> Result<f64> {
    let (linear, square) = direct_parts(f, events, window)?;
    Ok((-2.0 * linear + square) / t_norm)
}

/// `D²_T(f) = (1/T) ∫ Ψ_f(t)² dt` over `window` for any step candidate.
pub fn dt_square_direct(
    f: &Candidate,
    events: &EventSequence,
    window: (f64, f64),
    t_norm: f64,
) -> Result<f64> {
    let (_, square) = direct_parts(f, events, window)?;
    Ok(square / t_norm)
}

/// `(Σ_{t ∈ window} Ψ_f(t), ∫_window Ψ_f²)`.
fn direct_parts(f: &Candidate, events: &EventSequence, window: (f64, f64)) -> Result<(f64, f64)> {
    let (start, end) = window;
    let a = f.g.support();
    if !(start < end) || start < events.lower() + a - 1e-9 * a || end > events.upper() {
        return Err(Error::Window {
            start,
            end,
            lo: events.lower() + a,
            hi: events.upper(),
        });
    }
    let kernel = KernelRef::Step(&f.g);
    let times = events.times();
    let linear: f64 = times[events.index_range(start, f64::INFINITY)]
        .iter()
        .take_while(|&&t| t <= end)
        .map(|&t| psi_eval(f.mu, kernel, events, t))
        .sum();

    // jumps of Ψ_f: at u + x_k the value moves from v_{k-1} to v_k
    let breaks = f.g.breaks();
    let values = f.g.values();
    let mut jumps: Vec<(f64, f64)> = Vec::new();
    for &u in &times[events.index_range(start - a, end)] {
        for (k, &x) in breaks.iter().enumerate() {
            let before = if k == 0 { 0.0 } else { values[k - 1] };
            let after = values.get(k).copied().unwrap_or(0.0);
            jumps.push((u + x, after - before));
        }
    }
    jumps.sort_unstable_by(|p, q| p.0.total_cmp(&q.0));
    let mut level = f.mu;
    let mut cursor = start;
    let mut square = 0.0;
    for &(tau, delta) in &jumps {
        if tau > cursor {
            let seg_end = tau.min(end);
            if seg_end > cursor {
                square += level * level * (seg_end - cursor);
                cursor = seg_end;
            }
        }
        if tau >= end {
            break;
        }
        level += delta;
    }
    if cursor < end {
        square += level * level * (end - cursor);
    }
    Ok((linear, square))
}

/// Orthogonal projection of the truth on `S_m`: same `ν`, kernel replaced by
/// its average on each interval of the model and zero elsewhere.
pub fn project_truth(truth: &GroundTruth, model: &Model) -> Result<Candidate> {
    let k = truth.kernel();
    if (k.support() - model.support()).abs() > 1e-9 * model.support() {
        return Err(Error::SupportMismatch {
            left: k.support(),
            right: model.support(),
        });
    }
    let pieces: Vec<(f64, f64, f64)> = model
        .intervals()
        .iter()
        .map(|&(lo, hi)| (lo, hi, k.integral_over(lo, hi) / (hi - lo)))
        .collect();
    let g = if pieces.is_empty() {
        StepFunction::zero(model.support())
    } else {
        StepFunction::from_pieces(model.support(), &pieces)?
    };
    Ok(Candidate::new(truth.nu(), g))
}

/// The projection estimator `ŝ_m` on one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimator {
    pub nu_hat: f64,
    pub h_hat: StepFunction,
    pub model: Model,
    /// `γ_T(ŝ_m) = −θ̂ᵀ b_m`.
    pub contrast: f64,
    /// `θ̂` in the normalized basis, `ν̂` first.
    pub coefficients: Vec<f64>,
    pub degenerate: bool,
}

impl Estimator {
    pub fn candidate(&self) -> Candidate {
        Candidate::new(self.nu_hat, self.h_hat.clone())
    }

    /// `|m| + 1`.
    pub fn dimension(&self) -> usize {
        self.model.dimension()
    }
}

impl Intensity for Estimator {
    fn background(&self) -> f64 {
        self.nu_hat
    }
    fn kernel(&self) -> KernelRef<'_> {
        KernelRef::Step(&self.h_hat)
    }
}
