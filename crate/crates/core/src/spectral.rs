//! Closed-form moments of the stationary linear Hawkes process with a
//! nonnegative step kernel, and Monte Carlo checks against them.
//!
//! With `p = ∫h < 1`, `λ̄ = ν/(1 − p)` and Bartlett spectrum
//! `f_N(w) = ν / (2π(1 − p) |1 − ℱh(w)|²)`,
//!
//! ```text
//! E[(Σ_{u<t} g(t − u))²] = λ̄² (∫g)² + ∫ |ℱg(w)|² f_N(w) dw.
//! ```
//!
//! The frequency integral is split as `λ̄ ∫g²` (Plancherel, exact) plus a
//! remainder weighted by `1/|1 − ℱh|² − 1`, which decays like `1/w³` and is
//! integrated adaptively on `[0, W]` with an analytic bound on the tail.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrast::{contrast_direct, dt_square_direct, psi_eval};
use crate::error::{Error, Result};
use crate::quad::adaptive_gk;
use crate::simulate::{simulate, SimConfig};
use crate::step::StepFunction;
use crate::truth::{Candidate, GroundTruth, Kernel, KernelRef};

/// `ℱ1_{(a,b]}(w) = ∫_a^b e^{iwt} dt`, written with a sinc to stay accurate
/// near `w = 0`.
fn indicator_transform(a: f64, b: f64, w: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let x = w * half;
    let sinc = if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    };
    let amp = (b - a) * sinc;
    let phase = w * 0.5 * (a + b);
    (amp * phase.cos(), amp * phase.sin())
}

/// `ℱg(w)` as `(re, im)`.
pub fn fourier(g: &StepFunction, w: f64) -> (f64, f64) {
    g.cells()
        .filter(|&(_, _, v)| v != 0.0)
        .fold((0.0, 0.0), |(re, im), (a, b, v)| {
            let (r, i) = indicator_transform(a, b, w);
            (re + v * r, im + v * i)
        })
}

fn step_truth(truth: &GroundTruth) -> Result<&StepFunction> {
    match truth.kernel_owned() {
        Kernel::Step(s) if s.is_nonnegative() => {
            truth.ensure_stationary()?;
            Ok(s)
        }
        Kernel::Step(_) => Err(Error::Unsupported(
            "spectral formulas need a nonnegative kernel".into(),
        )),
        Kernel::Smooth(_) => Err(Error::Unsupported(
            "spectral formulas need a step kernel".into(),
        )),
    }
}

/// `λ̄ = ν / (1 − p)`.
pub fn mean_intensity(truth: &GroundTruth) -> Result<f64> {
    if !truth.is_nonnegative() {
        return Err(Error::Unsupported(
            "mean intensity formula needs a nonnegative kernel".into(),
        ));
    }
    truth.ensure_stationary()?;
    Ok(truth.nu() / (1.0 - truth.branching()))
}

/// `f_N(w)`.
pub fn bartlett_density(truth: &GroundTruth, w: f64) -> Result<f64> {
    let h = step_truth(truth)?;
    let (re, im) = fourier(h, w);
    let p = truth.branching();
    Ok(truth.nu() / (2.0 * std::f64::consts::PI * (1.0 - p) * ((1.0 - re).powi(2) + im * im)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondMoment {
    pub value: f64,
    /// Quadrature error estimate plus the truncation bound.
    pub error: f64,
    pub converged: bool,
    /// Frequency cutoff `W`.
    pub cutoff: f64,
}

/// `E[(Σ_{u<t} g(t − u))²]` to relative tolerance `rel_tol`.
pub fn second_moment_exact(
    g: &StepFunction,
    truth: &GroundTruth,
    rel_tol: f64,
) -> Result<SecondMoment> {
    let h = step_truth(truth)?;
    let nu = truth.nu();
    let p = truth.branching();
    let lambda = nu / (1.0 - p);
    let int_g = g.integral();
    let base = lambda * lambda * int_g * int_g + lambda * g.l2_sq();
    let s_g = g.abs_value_sum();
    let s_h = h.abs_value_sum();
    if s_h == 0.0 || s_g == 0.0 {
        return Ok(SecondMoment {
            value: base,
            error: 0.0,
            converged: true,
            cutoff: 0.0,
        });
    }
    let tol = rel_tol * base.max(f64::MIN_POSITIVE);
    let weight = nu / (std::f64::consts::PI * (1.0 - p));
    // tail of ∫_W^∞ |ℱg|² |R| with |ℱg| ≤ 2S_g/w, |ℱh| ≤ q = min(p, 2S_h/W)
    let tail = |w: f64| {
        let q = p.min(2.0 * s_h / w);
        weight * 4.0 * s_g * s_g * s_h * (2.0 + q) / ((1.0 - q).powi(2) * w * w)
    };
    let mut cutoff =
        (weight * 4.0 * s_g * s_g * s_h * (2.0 + p) / ((1.0 - p).powi(2) * 0.5 * tol)).sqrt();
    while tail(cutoff * 0.9) < 0.5 * tol && cutoff > 1e-6 {
        cutoff *= 0.9;
    }
    let reach = g.support().max(h.support());
    let panels = ((cutoff * reach / std::f64::consts::PI).ceil() as usize).clamp(8, 200_000);
    let integrand = |w: f64| {
        let (gr, gi) = fourier(g, w);
        let (hr, hi) = fourier(h, w);
        let denom = (1.0 - hr).powi(2) + hi * hi;
        (gr * gr + gi * gi) * (1.0 / denom - 1.0)
    };
    let quad = adaptive_gk(
        integrand,
        0.0,
        cutoff,
        panels,
        0.25 * tol / weight,
        panels * 8,
    );
    Ok(SecondMoment {
        value: base + weight * quad.value,
        error: weight * quad.error + tail(cutoff),
        converged: quad.converged,
        cutoff,
    })
}

/// `λ̄² (∫g)² + ν/(1 − p)³ ∫g²`.
pub fn second_moment_upper_bound(g: &StepFunction, truth: &GroundTruth) -> Result<f64> {
    step_truth(truth)?;
    let nu = truth.nu();
    let p = truth.branching();
    let lambda = nu / (1.0 - p);
    Ok(lambda * lambda * g.integral().powi(2) + nu / (1.0 - p).powi(3) * g.l2_sq())
}

/// `(L², K²)` with `K² = 2 max[1, ν/(1−p)² (νA + 1/(1−p))]` and
/// `L² = min[ν/4, (1−p)/(8Aν + 1)]`.
pub fn norm_constants(nu: f64, p: f64, support: f64) -> Result<(f64, f64)> {
    if !(nu > 0.0 && (0.0..1.0).contains(&p) && support > 0.0) {
        return Err(Error::invalid(
            "norm constants need nu > 0, 0 <= p < 1, A > 0",
        ));
    }
    let k2 = 2.0 * (nu / (1.0 - p).powi(2) * (nu * support + 1.0 / (1.0 - p))).max(1.0);
    let l2 = (nu / 4.0).min((1.0 - p) / (8.0 * support * nu + 1.0));
    Ok((l2, k2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub mean_intensity: f64,
    pub second_moment: f64,
    pub quadrature_error: f64,
    pub upper_bound: f64,
    pub l2: f64,
    pub k2: f64,
}

pub fn spectral_report(
    g: &StepFunction,
    truth: &GroundTruth,
    rel_tol: f64,
) -> Result<SpectralReport> {
    let m = second_moment_exact(g, truth, rel_tol)?;
    if !m.converged {
        return Err(Error::Numeric(format!(
            "frequency quadrature did not converge (error {:e})",
            m.error
        )));
    }
    let (l2, k2) = norm_constants(truth.nu(), truth.branching(), truth.support())?;
    Ok(SpectralReport {
        mean_intensity: mean_intensity(truth)?,
        second_moment: m.value,
        quadrature_error: m.error,
        upper_bound: second_moment_upper_bound(g, truth)?,
        l2,
        k2,
    })
}

/// Mean and standard error over independent replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub replicates: usize,
}

impl McEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            f64::NAN
        };
        Self {
            mean,
            std_err: (var / n).sqrt(),
            replicates: xs.len(),
        }
    }

    /// `|mean − target| / std_err`.
    pub fn z(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.std_err
    }
}

fn replicate_values(
    truth: &GroundTruth,
    reps: usize,
    horizon: f64,
    seed: u64,
    f: impl Fn(&crate::events::EventSequence) -> Result<f64> + Sync,
) -> Result<Vec<f64>> {
    let base = SimConfig::new(horizon, truth.support(), seed);
    (0..reps as u64)
        .into_par_iter()
        .map(|r| f(&simulate(truth, &base.with_stream(r))?))
        .collect()
}

/// Monte Carlo `E[(Σ g(t − u))²]`: per replicate, the average over `probes`
/// equally spaced times of `[0, T]`.
pub fn second_moment_mc(
    g: &StepFunction,
    truth: &GroundTruth,
    reps: usize,
    horizon: f64,
    probes: usize,
    seed: u64,
) -> Result<McEstimate> {
    let xs = replicate_values(truth, reps, horizon, seed, |ev| {
        let total: f64 = (0..probes)
            .map(|k| {
                let t = horizon * (k as f64 + 0.5) / probes as f64;
                psi_eval(0.0, KernelRef::Step(g), ev, t).powi(2)
            })
            .sum();
        Ok(total / probes as f64)
    })?;
    Ok(McEstimate::from_samples(&xs))
}

/// Monte Carlo check of `L²‖f‖² ≤ E D²_T(f) ≤ K²‖f‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtCheck {
    pub estimate: McEstimate,
    pub norm_sq: f64,
    pub lower: f64,
    pub upper: f64,
    /// Inside the band with `slack` standard errors of tolerance.
    pub within: bool,
}

pub fn dt_expectation_check(
    f: &Candidate,
    truth: &GroundTruth,
    reps: usize,
    horizon: f64,
    seed: u64,
    slack: f64,
) -> Result<DtCheck> {
    let (l2, k2) = norm_constants(truth.nu(), truth.branching(), truth.support())?;
    let xs = replicate_values(truth, reps, horizon, seed, |ev| {
        dt_square_direct(f, ev, (0.0, horizon), horizon)
    })?;
    let estimate = McEstimate::from_samples(&xs);
    let norm_sq = f.norm_sq();
    let (lower, upper) = (l2 * norm_sq, k2 * norm_sq);
    let tol = slack * estimate.std_err.max(0.0);
    Ok(DtCheck {
        estimate,
        norm_sq,
        lower,
        upper,
        within: estimate.mean + tol >= lower && estimate.mean - tol <= upper,
    })
}

/// Per-replicate `γ_T(f) − (D²_T(f − s) − D²_T(s))`, whose expectation is 0.
pub fn contrast_identity_check(
    f: &Candidate,
    truth: &GroundTruth,
    reps: usize,
    horizon: f64,
    seed: u64,
) -> Result<McEstimate> {
    let s_kernel = step_truth(truth)?;
    let s = Candidate::new(truth.nu(), s_kernel.clone());
    let diff = Candidate::new(f.mu - s.mu, f.g.difference(&s.g)?);
    let window = (0.0, horizon);
    let xs = replicate_values(truth, reps, horizon, seed, |ev| {
        let gamma = contrast_direct(f, ev, window, horizon)?;
        let dfs = dt_square_direct(&diff, ev, window, horizon)?;
        let ds = dt_square_direct(&s, ev, window, horizon)?;
        Ok(gamma - (dfs - ds))
    })?;
    Ok(McEstimate::from_samples(&xs))
}
