//! Closed-form reference solution for self-transport of the uniform
//! measure on the flat torus.
//!
//! For lambda = mu = Leb on T^d with the half squared geodesic cost, the
//! optimal duals are constant, `f = g = C_eps`, as long as the plan's
//! support radius `R_eps = 2 sqrt(C_eps)` stays below the injectivity
//! radius 1/2 (no cut-locus interaction). `C_eps` is fixed by the
//! marginal constraint
//!
//! `int_{|u| <= R} (2 C - |u|^2 / 2)^{q-1} du = kappa = eps^{q-1} q^{q-1}`,
//!
//! which evaluates in closed form via the beta integral. A second,
//! independent path computes the same constant by bisection on C with
//! adaptive quadrature of the radial integral; the two must agree to
//! near machine precision.

use crate::error::{Result, RotError};
use crate::measures::{check_p, torus_delta};
use crate::numerics::{adaptive_simpson, gamma, pos_pow};

/// Constant-potential solution of uniform self-transport on the torus.
#[derive(Debug, Clone)]
pub struct TorusSolution {
    pub d: usize,
    pub p: f64,
    pub q: f64,
    pub epsilon: f64,
    pub kappa: f64,
    /// Constant value of both dual potentials (symmetric gauge).
    pub c_eps: f64,
    /// Support radius of each section: `2 sqrt(c_eps)`.
    pub r_eps: f64,
}

fn check_inputs(d: usize, p: f64, epsilon: f64) -> Result<(f64, f64)> {
    check_p(p)?;
    if d == 0 {
        return Err(RotError::InvalidArgument("dimension must be >= 1".into()));
    }
    if !(epsilon > 0.0) {
        return Err(RotError::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let q = p / (p - 1.0);
    let kappa = epsilon.powf(q - 1.0) * q.powf(q - 1.0);
    Ok((q, kappa))
}

fn regime_check(d: usize, p: f64, epsilon: f64, c: f64) -> Result<()> {
    let r = 2.0 * c.sqrt();
    if !(r < 0.5) {
        return Err(RotError::OutOfRegime(format!(
            "support radius R = {r:.6} >= 1/2 at eps = {epsilon} (d = {d}, p = {p}); \
             sections would wrap around the torus"
        )));
    }
    Ok(())
}

/// `C_eps` via the closed-form beta-integral evaluation:
/// `C = [Gamma(d/2+q) q^{q-1} / (pi^{d/2} Gamma(q) 2^{q+d-1})]^{1/(q-1+d/2)}
///      * eps^{2 / (d (p-1) + 2)}`.
pub fn c_eps_closed_form(d: usize, p: f64, epsilon: f64) -> Result<TorusSolution> {
    let (q, kappa) = check_inputs(d, p, epsilon)?;
    let df = d as f64;
    let pi = std::f64::consts::PI;
    let coeff = gamma(df / 2.0 + q) * q.powf(q - 1.0)
        / (pi.powf(df / 2.0) * gamma(q) * 2f64.powf(q + df - 1.0));
    let c = coeff.powf(1.0 / (q - 1.0 + df / 2.0)) * epsilon.powf(2.0 / (df * (p - 1.0) + 2.0));
    regime_check(d, p, epsilon, c)?;
    Ok(TorusSolution {
        d,
        p,
        q,
        epsilon,
        kappa,
        c_eps: c,
        r_eps: 2.0 * c.sqrt(),
    })
}

/// The marginal integral `int_{|u| <= 2 sqrt(C)} (2C - |u|^2/2)^{q-1} du`
/// as a radial quadrature.
fn marginal_integral(d: usize, q: f64, c: f64) -> f64 {
    let df = d as f64;
    let pi = std::f64::consts::PI;
    let surface = 2.0 * pi.powf(df / 2.0) / gamma(df / 2.0);
    let r_max = 2.0 * c.sqrt();
    let radial = adaptive_simpson(
        |r| pos_pow(2.0 * c - 0.5 * r * r, q - 1.0) * r.powf(df - 1.0),
        0.0,
        r_max,
        1e-13,
    );
    surface * radial
}

/// Independent evaluation of `C_eps`: bisection on `C` in `(0, 1/16)`
/// against the quadrature of the marginal constraint. Errors with
/// `OutOfRegime` when no root exists below the cut-locus bound.
pub fn c_eps_quadrature(d: usize, p: f64, epsilon: f64) -> Result<TorusSolution> {
    let (q, kappa) = check_inputs(d, p, epsilon)?;
    // R < 1/2 is exactly C < 1/16
    let mut lo = 0.0;
    let mut hi = 0.0625;
    if marginal_integral(d, q, hi) < kappa {
        return Err(RotError::OutOfRegime(format!(
            "no admissible C_eps below the cut-locus bound at eps = {epsilon} (d = {d}, p = {p})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if marginal_integral(d, q, mid) < kappa {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let c = 0.5 * (lo + hi);
    regime_check(d, p, epsilon, c)?;
    Ok(TorusSolution {
        d,
        p,
        q,
        epsilon,
        kappa,
        c_eps: c,
        r_eps: 2.0 * c.sqrt(),
    })
}

/// Oracle plan density at a pair of torus points:
/// `rho(x, y) = (2 C_eps - dist(x,y)^2 / 2)_+^{q-1} / kappa`.
pub fn oracle_density(sol: &TorusSolution, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != sol.d || y.len() != sol.d {
        return Err(RotError::DimensionMismatch(format!(
            "oracle density: expected dimension {}, got {} and {}",
            sol.d,
            x.len(),
            y.len()
        )));
    }
    let mut dist2 = 0.0;
    for (a, b) in x.iter().zip(y) {
        let t = torus_delta(a - b);
        dist2 += t * t;
    }
    Ok(pos_pow(2.0 * sol.c_eps - 0.5 * dist2, sol.q - 1.0) / sol.kappa)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_regression_fixture() {
        // hand antiderivative, d = 1, q = 2 (p = 2), C = 0.01:
        // I(C) = 2 int_0^{0.2} (0.02 - r^2/2) dr = 2(0.004 - 0.2^3/6)
        //      = 0.016/3, so eps = I / 2 = 0.008/3
        let eps = 0.008 / 3.0;
        let sol = c_eps_quadrature(1, 2.0, eps).unwrap();
        assert!(
            (sol.c_eps - 0.01).abs() < 1e-12,
            "C_eps = {} expected 0.01",
            sol.c_eps
        );
        assert!((sol.r_eps - 0.2).abs() < 1e-11);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for (d, p, eps) in [
            (1, 2.0, 1e-3),
            (1, 1.5, 1e-3),
            (2, 2.0, 1e-3),
            (3, 1.25, 1e-4),
        ] {
            let a = c_eps_closed_form(d, p, eps).unwrap();
            let b = c_eps_quadrature(d, p, eps).unwrap();
            let rel = ((a.c_eps - b.c_eps) / a.c_eps).abs();
            assert!(rel <= 1e-10, "d={d} p={p} eps={eps}: rel err {rel:.3e}");
        }
    }

    #[test]
    fn closed_form_d1_p2_explicit() {
        // d = 1, p = q = 2: C = (3/8)^{2/3} eps^{2/3}
        let eps = 1e-3;
        let sol = c_eps_closed_form(1, 2.0, eps).unwrap();
        let expect = (3.0f64 / 8.0).powf(2.0 / 3.0) * eps.powf(2.0 / 3.0);
        assert!(((sol.c_eps - expect) / expect).abs() < 1e-13);
    }

    #[test]
    fn scaling_law() {
        let d = 2;
        let p = 1.5;
        let a = c_eps_closed_form(d, p, 1e-3).unwrap();
        let b = c_eps_closed_form(d, p, 2e-3).unwrap();
        let expect = 2f64.powf(2.0 / (d as f64 * (p - 1.0) + 2.0));
        assert!(((b.c_eps / a.c_eps - expect) / expect).abs() < 1e-12);
    }

    #[test]
    fn out_of_regime_rejected_by_both_paths() {
        // d = 1, p = 2: R >= 1/2 once eps >= 1/24
        assert!(matches!(
            c_eps_closed_form(1, 2.0, 0.05),
            Err(RotError::OutOfRegime(_))
        ));
        assert!(matches!(
            c_eps_quadrature(1, 2.0, 0.05),
            Err(RotError::OutOfRegime(_))
        ));
    }

    #[test]
    fn oracle_density_normalizes() {
        let sol = c_eps_closed_form(1, 1.5, 1e-3).unwrap();
        // trapezoid over a fine grid of y for fixed x
        let n = 200_000;
        let x = [0.3];
        let mut total = 0.0;
        for k in 0..n {
            let y = [k as f64 / n as f64];
            total += oracle_density(&sol, &x, &y).unwrap() / n as f64;
        }
        assert!((total - 1.0).abs() < 1e-6, "mass {total}");
    }

    #[test]
    fn oracle_density_support_edge() {
        let sol = c_eps_closed_form(1, 2.0, 1e-3).unwrap();
        let x = [0.5];
        let inside = [0.5 + 0.5 * sol.r_eps];
        let outside = [0.5 + 1.1 * sol.r_eps];
        assert!(oracle_density(&sol, &x, &inside).unwrap() > 0.0);
        assert_eq!(oracle_density(&sol, &x, &outside).unwrap(), 0.0);
    }
}
