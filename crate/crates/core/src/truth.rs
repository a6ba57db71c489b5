//! The parameter pair `(ν, h)`: background rate and reproduction kernel.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::quad::composite_gl32;
use crate::step::{merge_breaks, StepFunction};

/// Mixture of Gaussian bumps truncated to `(0, support]` and rescaled to a
/// prescribed total mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    support: f64,
    /// `(weight, mean, standard deviation)` per component.
    components: Vec<(f64, f64, f64)>,
    scale: f64,
}

impl GaussianMixture {
    pub fn new(support: f64, components: Vec<(f64, f64, f64)>, mass: f64) -> Result<Self> {
        if !(support > 0.0) || components.is_empty() {
            return Err(Error::invalid(
                "mixture needs a positive support and components",
            ));
        }
        if components
            .iter()
            .any(|&(w, _, sd)| !(w > 0.0) || !(sd > 0.0))
        {
            return Err(Error::invalid(
                "mixture weights and deviations must be positive",
            ));
        }
        let inside: f64 = components
            .iter()
            .map(|&(w, mean, sd)| {
                let n = Normal::new(mean, sd).unwrap();
                w * (n.cdf(support) - n.cdf(0.0))
            })
            .sum();
        if !(inside > 0.0) {
            return Err(Error::invalid("mixture has no mass on (0, support]"));
        }
        Ok(Self {
            support,
            components,
            scale: mass / inside,
        })
    }

    pub fn support(&self) -> f64 {
        self.support
    }

    pub fn components(&self) -> &[(f64, f64, f64)] {
        &self.components
    }

    pub fn eval(&self, t: f64) -> f64 {
        if !(t > 0.0) || t > self.support {
            return 0.0;
        }
        self.scale
            * self
                .components
                .iter()
                .map(|&(w, mean, sd)| w * Normal::new(mean, sd).unwrap().pdf(t))
                .sum::<f64>()
    }

    /// Exact `∫_lo^hi` through the normal CDF.
    pub fn integral_over(&self, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(0.0);
        let hi = hi.min(self.support);
        if hi <= lo {
            return 0.0;
        }
        self.scale
            * self
                .components
                .iter()
                .map(|&(w, mean, sd)| {
                    let n = Normal::new(mean, sd).unwrap();
                    w * (n.cdf(hi) - n.cdf(lo))
                })
                .sum::<f64>()
    }

    pub fn integral(&self) -> f64 {
        self.integral_over(0.0, self.support)
    }

    /// Upper bound on the density, attained at or below the sum of peak heights.
    pub fn sup(&self) -> f64 {
        self.scale
            * self
                .components
                .iter()
                .map(|&(w, _, sd)| w / (sd * (2.0 * std::f64::consts::PI).sqrt()))
                .sum::<f64>()
    }

    /// Component index, then a normal draw, rejected until it lands in `(0, support]`.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        use rand_distr::Distribution;
        let total: f64 = self.components.iter().map(|c| c.0).sum();
        loop {
            let mut pick = rng.gen::<f64>() * total;
            let mut chosen = self.components[self.components.len() - 1];
            for &c in &self.components {
                if pick < c.0 {
                    chosen = c;
                    break;
                }
                pick -= c.0;
            }
            let x = rand_distr::Normal::new(chosen.1, chosen.2)
                .unwrap()
                .sample(rng);
            if x > 0.0 && x <= self.support {
                return x;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Step(StepFunction),
    Smooth(GaussianMixture),
}

#[derive(Debug, Clone, Copy)]
pub enum KernelRef<'a> {
    Step(&'a StepFunction),
    Smooth(&'a GaussianMixture),
}

impl Kernel {
    pub fn as_ref(&self) -> KernelRef<'_> {
        match self {
            Kernel::Step(s) => KernelRef::Step(s),
            Kernel::Smooth(m) => KernelRef::Smooth(m),
        }
    }
}

impl From<StepFunction> for Kernel {
    fn from(s: StepFunction) -> Self {
        Kernel::Step(s)
    }
}

impl<'a> KernelRef<'a> {
    pub fn support(self) -> f64 {
        match self {
            KernelRef::Step(s) => s.support(),
            KernelRef::Smooth(m) => m.support(),
        }
    }

    pub fn eval(self, t: f64) -> f64 {
        match self {
            KernelRef::Step(s) => s.eval(t),
            KernelRef::Smooth(m) => m.eval(t),
        }
    }

    pub fn integral_over(self, lo: f64, hi: f64) -> f64 {
        match self {
            KernelRef::Step(s) => s.integral_over(lo, hi),
            KernelRef::Smooth(m) => m.integral_over(lo, hi),
        }
    }

    /// `∫_lo^hi k²`, exact for steps and composite Gauss–Legendre otherwise.
    pub fn sq_integral_over(self, lo: f64, hi: f64) -> f64 {
        match self {
            KernelRef::Step(s) => {
                let lo = lo.max(0.0);
                let hi = hi.min(s.support());
                s.cells()
                    .map(|(a, b, v)| {
                        let len = b.min(hi) - a.max(lo);
                        if len > 0.0 {
                            v * v * len
                        } else {
                            0.0
                        }
                    })
                    .sum()
            }
            KernelRef::Smooth(m) => {
                let lo = lo.max(0.0);
                let hi = hi.min(m.support());
                if hi <= lo {
                    return 0.0;
                }
                composite_gl32(|t| m.eval(t).powi(2), &[lo, hi], m.support() / 1024.0)
            }
        }
    }

    pub fn abs_integral(self) -> f64 {
        match self {
            KernelRef::Step(s) => s.abs_integral(),
            // mixtures are positive everywhere
            KernelRef::Smooth(m) => m.integral(),
        }
    }

    pub fn is_nonnegative(self) -> bool {
        match self {
            KernelRef::Step(s) => s.is_nonnegative(),
            KernelRef::Smooth(_) => true,
        }
    }

    pub fn sup_positive(self) -> f64 {
        match self {
            KernelRef::Step(s) => s.sup_positive(),
            KernelRef::Smooth(m) => m.sup(),
        }
    }
}

/// Anything that can be read as a pair `(μ, g)` of the L² space.
pub trait Intensity {
    fn background(&self) -> f64;
    fn kernel(&self) -> KernelRef<'_>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    nu: f64,
    kernel: Kernel,
    branching: f64,
}

impl GroundTruth {
    pub fn new(nu: f64, kernel: impl Into<Kernel>) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::invalid(format!(
                "background rate must be positive, got {nu}"
            )));
        }
        let kernel = kernel.into();
        let branching = kernel.as_ref().abs_integral();
        Ok(Self {
            nu,
            kernel,
            branching,
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn kernel_owned(&self) -> &Kernel {
        &self.kernel
    }

    /// `∫|h|`; equals `∫h` for nonnegative kernels.
    pub fn branching(&self) -> f64 {
        self.branching
    }

    pub fn support(&self) -> f64 {
        self.kernel.as_ref().support()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.kernel.as_ref().is_nonnegative()
    }

    pub fn ensure_stationary(&self) -> Result<()> {
        if self.branching < 1.0 {
            Ok(())
        } else {
            Err(Error::NonStationary(self.branching))
        }
    }
}

impl Intensity for GroundTruth {
    fn background(&self) -> f64 {
        self.nu
    }
    fn kernel(&self) -> KernelRef<'_> {
        self.kernel.as_ref()
    }
}

/// `‖f − g‖² = (μ_f − μ_g)² + ∫_0^A (g_f − g_g)²`.
///
/// Exact when both kernels are step functions. When either is smooth the
/// integral uses 32-node Gauss–Legendre per cell of the merged step
/// breakpoints, refined to width at most `A/1024`.
pub fn l2_distance_sq(f: &(impl Intensity + ?Sized), g: &(impl Intensity + ?Sized)) -> Result<f64> {
    let (kf, kg) = (f.kernel(), g.kernel());
    let (af, ag) = (kf.support(), kg.support());
    if (af - ag).abs() > 1e-9 * af.max(ag) {
        return Err(Error::SupportMismatch {
            left: af,
            right: ag,
        });
    }
    let dmu = f.background() - g.background();
    let kernel_part = match (kf, kg) {
        (KernelRef::Step(a), KernelRef::Step(b)) => {
            let breaks = merge_breaks(a.breaks(), b.breaks());
            breaks
                .windows(2)
                .map(|w| {
                    let mid = 0.5 * (w[0] + w[1]);
                    let d = a.eval(mid) - b.eval(mid);
                    d * d * (w[1] - w[0])
                })
                .sum()
        }
        _ => {
            let mut breaks = vec![0.0, af];
            for k in [kf, kg] {
                if let KernelRef::Step(s) = k {
                    breaks = merge_breaks(&breaks, s.breaks());
                }
            }
            composite_gl32(|t| (kf.eval(t) - kg.eval(t)).powi(2), &breaks, af / 1024.0)
        }
    };
    Ok(dmu * dmu + kernel_part)
}

/// A bare `(μ, g)` with a step kernel, the element type of every `S_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub mu: f64,
    pub g: StepFunction,
}

impl Candidate {
    pub fn new(mu: f64, g: StepFunction) -> Self {
        Self { mu, g }
    }

    pub fn zero(support: f64) -> Self {
        Self::new(0.0, StepFunction::zero(support))
    }

    pub fn norm_sq(&self) -> f64 {
        self.mu * self.mu + self.g.l2_sq()
    }
}

impl Intensity for Candidate {
    fn background(&self) -> f64 {
        self.mu
    }
    fn kernel(&self) -> KernelRef<'_> {
        KernelRef::Step(&self.g)
    }
}
