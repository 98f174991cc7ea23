//! Shared numerical routines: gamma function, adaptive quadrature, and a
//! small symmetric eigensolver.

use crate::error::{Result, RotError};

// Lanczos approximation, g = 7, 9 coefficients (GSL / Numerical Recipes set).
const LANCZOS_G: f64 = 7.0;
const LANCZOS_P: [f64; 9] = [
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
];

/// Gamma function via the Lanczos approximation; relative accuracy is
/// better than 1e-13 on [0.5, 10], which covers every coefficient this
/// crate needs.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection formula
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_P[0];
        for (i, p) in LANCZOS_P.iter().enumerate().skip(1) {
            acc += p / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to relative tolerance
/// `rel_tol` (absolute tolerance scaled by a coarse estimate of the
/// integral magnitude).
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fm = f(0.5 * (a + b));
    let fb = f(b);
    let whole = simpson(a, b, fa, fm, fb);
    let scale = whole.abs().max((b - a) * fm.abs()).max(f64::MIN_POSITIVE);
    adaptive_step(&f, a, b, fa, fm, fb, whole, rel_tol * scale, 48)
}

/// Minimum eigenvalue of a small symmetric matrix (row-major, d x d) via
/// cyclic Jacobi rotations. d <= 3 in practice.
pub fn symmetric_min_eigenvalue(mat: &[f64], d: usize) -> Result<f64> {
    if mat.len() != d * d {
        return Err(RotError::DimensionMismatch(format!(
            "expected {d}x{d} matrix, got {} entries",
            mat.len()
        )));
    }
    if d == 1 {
        return Ok(mat[0]);
    }
    let mut a = mat.to_vec();
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += a[i * d + j] * a[i * d + j];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frobenius(&a, d)) {
            break;
        }
        for i in 0..d {
            for j in (i + 1)..d {
                let apq = a[i * d + j];
                if apq == 0.0 {
                    continue;
                }
                let app = a[i * d + i];
                let aqq = a[j * d + j];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let aik = a[i * d + k];
                    let ajk = a[j * d + k];
                    a[i * d + k] = c * aik - s * ajk;
                    a[j * d + k] = s * aik + c * ajk;
                }
                for k in 0..d {
                    let aki = a[k * d + i];
                    let akj = a[k * d + j];
                    a[k * d + i] = c * aki - s * akj;
                    a[k * d + j] = s * aki + c * akj;
                }
            }
        }
    }
    let mut min = f64::INFINITY;
    for i in 0..d {
        min = min.min(a[i * d + i]);
    }
    Ok(min)
}

fn frobenius(a: &[f64], d: usize) -> f64 {
    a.iter().take(d * d).map(|x| x * x).sum::<f64>().sqrt()
}

/// FNV-1a over bytes; used for stable config hashes in artifact headers.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Positive-part power `(x)_+^e` with fast paths for the exponents this
/// crate actually hits (q-1 = 1 or 2).
#[inline]
pub fn pos_pow(x: f64, e: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else {
        x.powf(e)
    }
}

/// `(x)_+^e` with the convention `(t)_+^0 = 1_{t >= 0}`.
#[inline]
pub fn pos_pow_conv(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        if x >= 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        pos_pow(x, e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_half_integers() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let cases = [
            (0.5, sqrt_pi),
            (1.0, 1.0),
            (1.5, 0.5 * sqrt_pi),
            (2.0, 1.0),
            (2.5, 0.75 * sqrt_pi),
            (3.5, 15.0 / 8.0 * sqrt_pi),
            (5.0, 24.0),
            (10.0, 362880.0),
        ];
        for (x, expect) in cases {
            let got = gamma(x);
            assert!(
                ((got - expect) / expect).abs() < 1e-13,
                "gamma({x}) = {got}, expected {expect}"
            );
        }
    }

    #[test]
    fn gamma_6_5_exact() {
        // 5.5 * 4.5 * 3.5 * 2.5 * 1.5 * 0.5 * sqrt(pi)
        let expect = 5.5 * 4.5 * 3.5 * 2.5 * 1.5 * 0.5 * std::f64::consts::PI.sqrt();
        assert!(((gamma(6.5) - expect) / expect).abs() < 1e-13);
    }

    #[test]
    fn simpson_polynomial_exact() {
        let v = adaptive_simpson(|x| x * x * x, 0.0, 2.0, 1e-12);
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_smooth() {
        let v = adaptive_simpson(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-11);
    }

    #[test]
    fn simpson_kinked_integrand() {
        // (1 - x)_+ on [0, 2]
        let v = adaptive_simpson(|x| (1.0 - x).max(0.0), 0.0, 2.0, 1e-12);
        assert!((v - 0.5).abs() < 1e-10);
    }

    #[test]
    fn min_eigenvalue_2d() {
        // eigenvalues 1 and 3
        let m = [2.0, 1.0, 1.0, 2.0];
        assert!((symmetric_min_eigenvalue(&m, 2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn min_eigenvalue_identity() {
        let m = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert!((symmetric_min_eigenvalue(&m, 3).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pos_pow_convention() {
        assert_eq!(pos_pow_conv(-0.5, 0.0), 0.0);
        assert_eq!(pos_pow_conv(0.0, 0.0), 1.0);
        assert_eq!(pos_pow_conv(0.5, 0.0), 1.0);
        assert_eq!(pos_pow(-1.0, 2.0), 0.0);
        assert_eq!(pos_pow(3.0, 2.0), 9.0);
    }
}
