//! Fixed-rule and adaptive quadrature on finite intervals.

use std::sync::OnceLock;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl32() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(32))
}

/// 32-node Gauss–Legendre on `[a, b]`.
pub fn gl32_integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (nodes, weights) = gl32();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes
        .iter()
        .zip(weights)
        .map(|(&x, &w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Composite 32-node Gauss–Legendre over the pieces of `breaks`, each piece
/// further split so no sub-piece is wider than `max_width`.
pub fn composite_gl32(f: impl Fn(f64) -> f64, breaks: &[f64], max_width: f64) -> f64 {
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let pieces = ((b - a) / max_width).ceil().max(1.0) as usize;
        let step = (b - a) / pieces as f64;
        for k in 0..pieces {
            let lo = a + k as f64 * step;
            let hi = if k + 1 == pieces { b } else { lo + step };
            total += gl32_integrate(&f, lo, hi);
        }
    }
    total
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss–Kronrod 7/15 panel: returns (integral, error estimate).
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(mid - dx) + f(mid + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    ((kronrod * half), ((kronrod - gauss) * half).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct Adaptive {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
    pub panels: usize,
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`, starting
/// from `initial` equal panels and bisecting the worst panel until the summed
/// error estimate drops below `abs_tol`.
pub fn adaptive_gk(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    initial: usize,
    abs_tol: f64,
    max_panels: usize,
) -> Adaptive {
    let initial = initial.max(1);
    let step = (b - a) / initial as f64;
    let mut panels: Vec<(f64, f64, f64, f64)> = (0..initial)
        .map(|k| {
            let lo = a + k as f64 * step;
            let hi = if k + 1 == initial { b } else { lo + step };
            let (v, e) = gk15(&f, lo, hi);
            (lo, hi, v, e)
        })
        .collect();
    let mut error: f64 = panels.iter().map(|p| p.3).sum();
    while error > abs_tol && panels.len() < max_panels {
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (lo, hi, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
        error = panels.iter().map(|p| p.3).sum();
    }
    Adaptive {
        value: panels.iter().map(|p| p.2).sum(),
        error,
        converged: error <= abs_tol,
        panels: panels.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_weights_sum_to_two_and_integrate_polynomials() {
        let (x, w) = gauss_legendre(32);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        let p62: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(62)).sum();
        assert!((p62 - 2.0 / 63.0).abs() < 1e-13);
        assert!((gl32_integrate(|t| t.exp(), 0.0, 1.0) - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_oscillation() {
        let r = adaptive_gk(|w| (50.0 * w).cos(), 0.0, 3.0, 4, 1e-12, 10_000);
        assert!(r.converged);
        assert!((r.value - (150.0f64).sin() / 50.0).abs() < 1e-11);
    }

    #[test]
    fn composite_respects_breaks() {
        let v = composite_gl32(|t| if t <= 1.0 { 1.0 } else { 3.0 }, &[0.0, 1.0, 2.0], 0.1);
        assert!((v - 4.0).abs() < 1e-13);
    }
}
