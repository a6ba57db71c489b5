//! Hawkes process simulation on `[−A, T]`.
//!
//! Nonnegative kernels use the cluster representation: immigrants arrive as
//! a homogeneous Poisson process of rate `ν` and every point independently
//! spawns `Poisson(∫h)` children placed at lags drawn from `h/∫h`. Signed
//! kernels use Ogata thinning of `λ(t) = (ν + Σ h(t − u))₊`.
//!
//! Both start `burn_in` before `−A` with an empty history and keep only the
//! points on `[−A, T]`.
//!
//! Randomness comes from ChaCha8 seeded with `seed` on stream `stream`; batch
//! runs use the replicate index as the stream, so every replicate is
//! reproducible on its own regardless of scheduling.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventSequence;
use crate::truth::{GroundTruth, Intensity, KernelRef};

/// Generations beyond which the cluster recursion is declared runaway.
pub const MAX_GENERATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMethod {
    Cluster,
    Thinning,
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    /// Length simulated before `−A` and discarded.
    pub burn_in: f64,
    pub seed: u64,
    pub stream: u64,
    pub method: SimMethod,
}

impl SimConfig {
    /// Burn-in of `10·A`, the default used throughout.
    pub fn new(horizon: f64, support: f64, seed: u64) -> Self {
        Self {
            horizon,
            burn_in: 10.0 * support,
            seed,
            stream: 0,
            method: SimMethod::Auto,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn with_method(mut self, method: SimMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_burn_in(mut self, burn_in: f64) -> Self {
        self.burn_in = burn_in;
        self
    }

    fn validate(&self, support: f64) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::invalid("horizon T must be positive"));
        }
        if !(self.burn_in >= support) {
            return Err(Error::invalid(format!(
                "burn-in {} must be at least A = {support}",
                self.burn_in
            )));
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Dispatches on `cfg.method`; `Auto` picks the cluster method iff `h ≥ 0`.
pub fn simulate(truth: &GroundTruth, cfg: &SimConfig) -> Result<EventSequence> {
    match cfg.method {
        SimMethod::Cluster => simulate_cluster(truth, cfg),
        SimMethod::Thinning => simulate_thinning(truth, cfg),
        SimMethod::Auto if truth.is_nonnegative() => simulate_cluster(truth, cfg),
        SimMethod::Auto => simulate_thinning(truth, cfg),
    }
}

/// Offspring lag sampler for a nonnegative kernel.
enum LagSampler<'a> {
    Step {
        cells: Vec<(f64, f64)>,
        pick: WeightedIndex<f64>,
    },
    Smooth(&'a crate::truth::GaussianMixture),
    None,
}

impl<'a> LagSampler<'a> {
    fn new(kernel: KernelRef<'a>) -> Self {
        match kernel {
            KernelRef::Step(s) => {
                let (cells, weights): (Vec<_>, Vec<_>) = s
                    .cells()
                    .filter(|&(_, _, v)| v > 0.0)
                    .map(|(a, b, v)| ((a, b), v * (b - a)))
                    .unzip();
                match WeightedIndex::new(&weights) {
                    Ok(pick) => LagSampler::Step { cells, pick },
                    Err(_) => LagSampler::None,
                }
            }
            KernelRef::Smooth(m) => LagSampler::Smooth(m),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            LagSampler::Step { cells, pick } => {
                let (a, b) = cells[pick.sample(rng)];
                // 1 − U ∈ (0, 1] keeps the lag in (a, b]
                a + (b - a) * (1.0 - rng.gen::<f64>())
            }
            LagSampler::Smooth(m) => m.sample(rng),
            LagSampler::None => unreachable!("no offspring drawn for a zero kernel"),
        }
    }
}

pub fn simulate_cluster(truth: &GroundTruth, cfg: &SimConfig) -> Result<EventSequence> {
    let a = truth.support();
    cfg.validate(a)?;
    if !truth.is_nonnegative() {
        return Err(Error::Unsupported(
            "cluster simulation needs a nonnegative kernel; use thinning".into(),
        ));
    }
    truth.ensure_stationary()?;
    let p = truth.branching();
    let start = -a - cfg.burn_in;
    let end = cfg.horizon;
    let mut rng = cfg.rng();

    let immigrants = poisson_count(&mut rng, truth.nu() * (end - start));
    let mut generation: Vec<f64> = (0..immigrants)
        .map(|_| start + (end - start) * rng.gen::<f64>())
        .collect();
    let mut all = generation.clone();
    let sampler = LagSampler::new(truth.kernel());
    let mut depth = 0usize;
    while !generation.is_empty() && p > 0.0 {
        depth += 1;
        if depth > MAX_GENERATIONS {
            return Err(Error::Numeric(format!(
                "offspring recursion exceeded {MAX_GENERATIONS} generations"
            )));
        }
        let mut next = Vec::new();
        for &parent in &generation {
            for _ in 0..poisson_count(&mut rng, p) {
                let child = parent + sampler.draw(&mut rng);
                if child <= end {
                    next.push(child);
                }
            }
        }
        all.extend_from_slice(&next);
        generation = next;
    }
    finish(all, -a, end)
}

pub fn simulate_thinning(truth: &GroundTruth, cfg: &SimConfig) -> Result<EventSequence> {
    let a = truth.support();
    cfg.validate(a)?;
    truth.ensure_stationary()?;
    let kernel = truth.kernel();
    let h_plus = kernel.sup_positive();
    if !h_plus.is_finite() {
        return Err(Error::Unsupported("thinning needs a bounded kernel".into()));
    }
    let nu = truth.nu();
    let end = cfg.horizon;
    let mut rng = cfg.rng();
    let mut accepted: Vec<f64> = Vec::new();
    let mut t = -a - cfg.burn_in;
    loop {
        // points in (t − A, t]; none can enter before the next acceptance
        let lo = accepted.partition_point(|&u| u <= t - a);
        let bound = nu + h_plus * (accepted.len() - lo) as f64;
        t += -(1.0 - rng.gen::<f64>()).ln() / bound;
        if t > end {
            break;
        }
        let from = accepted.partition_point(|&u| u < t - a);
        let excitation: f64 = accepted[from..].iter().map(|&u| kernel.eval(t - u)).sum();
        let intensity = (nu + excitation).max(0.0);
        assert!(
            intensity <= bound * (1.0 + 1e-12),
            "dominating rate {bound} below intensity {intensity}"
        );
        if rng.gen::<f64>() * bound < intensity {
            accepted.push(t);
        }
    }
    finish(accepted, -a, end)
}

fn poisson_count<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).unwrap().sample(rng) as u64
}

fn finish(mut times: Vec<f64>, lower: f64, upper: f64) -> Result<EventSequence> {
    times.retain(|&t| t >= lower && t <= upper);
    times.sort_by(f64::total_cmp);
    times.dedup();
    EventSequence::new(times, lower, upper)
}

/// `E N[0, T] = νT / (1 − p)` for the linear (nonnegative) model.
pub fn expected_count(truth: &GroundTruth, horizon: f64) -> Result<f64> {
    if !truth.is_nonnegative() {
        return Err(Error::Unsupported(
            "expected count is closed-form only for nonnegative kernels".into(),
        ));
    }
    truth.ensure_stationary()?;
    Ok(truth.background() * horizon / (1.0 - truth.branching()))
}
