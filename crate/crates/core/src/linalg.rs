//! Small dense symmetric solves for the normal equations `X θ = b`.

use nalgebra::{DMatrix, DVector};

/// Relative cutoff below which eigenvalues are treated as zero.
pub const SINGULAR_CUTOFF: f64 = 1e-10;

/// Solves `a x = b` for symmetric positive semidefinite `a` (row-major,
/// `n × n`). Tries Cholesky first; when a pivot falls under
/// `SINGULAR_CUTOFF · max diag` it switches to the minimal-norm least-squares
/// solution from an eigendecomposition. Returns `true` when the system was
/// treated as degenerate.
///
/// `factor` is scratch space of at least `n × n` and `x` receives the solution.
pub fn solve_psd(a: &[f64], b: &[f64], x: &mut [f64], factor: &mut [f64], n: usize) -> bool {
    debug_assert!(a.len() >= n * n && b.len() >= n && x.len() >= n && factor.len() >= n * n);
    factor[..n * n].copy_from_slice(&a[..n * n]);
    let a_in = a;
    let a = factor;
    if cholesky_in_place(a, n) {
        x[..n].copy_from_slice(&b[..n]);
        // L y = b
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= a[i * n + k] * x[k];
            }
            x[i] = s / a[i * n + i];
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= a[k * n + i] * x[k];
            }
            x[i] = s / a[i * n + i];
        }
        false
    } else {
        min_norm_solve(a_in, b, x, n);
        true
    }
}

fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0_f64, f64::max);
    if !(max_diag > 0.0) {
        return false;
    }
    let floor = SINGULAR_CUTOFF * max_diag;
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > floor) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    true
}

/// Minimal-norm least-squares solution through the symmetric eigendecomposition,
/// dropping eigenvalues below `SINGULAR_CUTOFF · λ_max`.
pub fn min_norm_solve(a: &[f64], b: &[f64], x: &mut [f64], n: usize) {
    let m = DMatrix::from_row_slice(n, n, &a[..n * n]);
    let eig = m.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let rhs = DVector::from_column_slice(&b[..n]);
    let mut sol = DVector::zeros(n);
    if lmax > 0.0 {
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda.abs() > SINGULAR_CUTOFF * lmax {
                let v = eig.eigenvectors.column(k);
                sol += v * (v.dot(&rhs) / lambda);
            }
        }
    }
    x[..n].copy_from_slice(sol.as_slice());
}
