//! Primal plan density, transport sections, barycentric maps, and
//! second-order (Hessian) diagnostics derived from the dual potentials.
//!
//! Throughout, `xi_ij = f_i + g_j - c_ij` and the plan density relative to
//! `lambda (x) mu` is `rho_ij = (xi_ij)_+^{q-1} / kappa`. The support of
//! row `i` (the "section" at `x_i`) is exactly `{j : xi_ij > 0}`.

use rayon::prelude::*;

use crate::dual_solver::{DualPotentials, RotInstance, SolverParams};
use crate::error::{Result, RotError};
use crate::measures::torus_delta;
use crate::numerics::{pos_pow, pos_pow_conv, symmetric_min_eigenvalue};

/// Dense plan density `rho_ij` relative to the product measure.
#[derive(Debug, Clone)]
pub struct PlanDensity {
    rho: Vec<f64>,
    n0: usize,
    n1: usize,
    pub params: SolverParams,
}

impl PlanDensity {
    #[inline]
    pub fn rho(&self, i: usize, j: usize) -> f64 {
        self.rho[i * self.n1 + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rho[i * self.n1..(i + 1) * self.n1]
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    /// Row marginal `sum_j rho_ij mu_j`; equals 1 at an exact solution.
    pub fn row_marginal(&self, i: usize, inst: &RotInstance) -> f64 {
        self.row(i)
            .iter()
            .zip(&inst.mu.weights)
            .map(|(r, w)| r * w)
            .sum()
    }
}

/// Plan density from the duals: `rho_ij = (f_i + g_j - c_ij)_+^{q-1} / kappa`.
pub fn density(duals: &DualPotentials, inst: &RotInstance, params: &SolverParams) -> PlanDensity {
    let n0 = inst.n0();
    let n1 = inst.n1();
    let qm1 = params.q - 1.0;
    let inv_kappa = 1.0 / params.kappa;
    let mut rho = vec![0.0; n0 * n1];
    rho.par_chunks_mut(n1).enumerate().for_each(|(i, row)| {
        let mut costs = vec![0.0; n1];
        inst.costs.row_into(i, &mut costs);
        for j in 0..n1 {
            row[j] = pos_pow(duals.f[i] + duals.g[j] - costs[j], qm1) * inv_kappa;
        }
    });
    PlanDensity {
        rho,
        n0,
        n1,
        params: params.clone(),
    }
}

/// `xi_ij = f_i + g_j - c_ij`.
#[inline]
pub fn xi(i: usize, j: usize, duals: &DualPotentials, inst: &RotInstance) -> f64 {
    duals.f[i] + duals.g[j] - inst.costs.at(i, j)
}

/// Largest slack in row `i`: `max_j xi_ij`.
pub fn max_xi(i: usize, duals: &DualPotentials, inst: &RotInstance) -> f64 {
    let n1 = inst.n1();
    let mut costs = vec![0.0; n1];
    inst.costs.row_into(i, &mut costs);
    let mut m = f64::NEG_INFINITY;
    for j in 0..n1 {
        m = m.max(duals.f[i] + duals.g[j] - costs[j]);
    }
    m
}

/// Lift `y` to the representative nearest to `x`, axis by axis, on the
/// torus; on a box `y` is returned as-is.
fn lift_near(x: &[f64], y: &[f64], torus: bool, out: &mut [f64]) {
    if torus {
        for a in 0..x.len() {
            out[a] = x[a] + torus_delta(y[a] - x[a]);
        }
    } else {
        out.copy_from_slice(y);
    }
}

/// Fold a point back into the torus fundamental domain `[0,1)^d`.
fn fold(torus: bool, v: &mut [f64]) {
    if torus {
        for c in v {
            *c = c.rem_euclid(1.0);
            // rem_euclid can round tiny negatives up to exactly 1.0
            if *c >= 1.0 {
                *c = 0.0;
            }
        }
    }
}

fn weighted_barycenter<F: Fn(usize) -> f64>(
    i: usize,
    inst: &RotInstance,
    weight_of: F,
    what: &str,
) -> Result<Vec<f64>> {
    let d = inst.lambda.dim();
    let torus = inst.lambda.domain.is_torus();
    let x = inst.lambda.point(i);
    let mut num = vec![0.0; d];
    let mut lifted = vec![0.0; d];
    let mut den = 0.0;
    for j in 0..inst.n1() {
        let w = weight_of(j);
        if w <= 0.0 {
            continue;
        }
        lift_near(x, inst.mu.point(j), torus, &mut lifted);
        for a in 0..d {
            num[a] += w * lifted[a];
        }
        den += w;
    }
    if den <= 0.0 {
        return Err(RotError::DegenerateSection {
            index: i,
            reason: format!("{what}: no active mu-points (all xi <= 0)"),
        });
    }
    for a in 0..d {
        num[a] /= den;
    }
    fold(torus, &mut num);
    Ok(num)
}

/// Gradient-based transport map at `x_i`: the `(xi)_+^{q-2}`-weighted
/// barycenter of the mu-points, with torus points lifted to the
/// representative nearest `x_i` before averaging and the result folded
/// back into `[0,1)^d`. Converges to the unregularized map as eps -> 0.
pub fn grad_phi(
    i: usize,
    duals: &DualPotentials,
    inst: &RotInstance,
    params: &SolverParams,
) -> Result<Vec<f64>> {
    let n1 = inst.n1();
    let qm2 = params.q - 2.0;
    let mut costs = vec![0.0; n1];
    inst.costs.row_into(i, &mut costs);
    weighted_barycenter(
        i,
        inst,
        |j| pos_pow_conv(duals.f[i] + duals.g[j] - costs[j], qm2) * inst.mu.weights[j],
        "grad_phi",
    )
}

/// `grad_phi` at every lambda-point, flattened row-major (`n0 * d`).
pub fn grad_phi_all(
    duals: &DualPotentials,
    inst: &RotInstance,
    params: &SolverParams,
) -> Result<Vec<Vec<f64>>> {
    (0..inst.n0())
        .into_par_iter()
        .map(|i| grad_phi(i, duals, inst, params))
        .collect()
}

/// Mirror-image map at `y_j`: the weighted barycenter of lambda-points.
pub fn grad_psi(
    j: usize,
    duals: &DualPotentials,
    inst: &RotInstance,
    params: &SolverParams,
) -> Result<Vec<f64>> {
    let n0 = inst.n0();
    let d = inst.mu.dim();
    let torus = inst.mu.domain.is_torus();
    let qm2 = params.q - 2.0;
    let mut costs = vec![0.0; n0];
    inst.costs.col_into(j, &mut costs);
    let y = inst.mu.point(j);
    let mut num = vec![0.0; d];
    let mut lifted = vec![0.0; d];
    let mut den = 0.0;
    for i in 0..n0 {
        let w = pos_pow_conv(duals.f[i] + duals.g[j] - costs[i], qm2) * inst.lambda.weights[i];
        if w <= 0.0 {
            continue;
        }
        lift_near(y, inst.lambda.point(i), torus, &mut lifted);
        for a in 0..d {
            num[a] += w * lifted[a];
        }
        den += w;
    }
    if den <= 0.0 {
        return Err(RotError::DegenerateSection {
            index: j,
            reason: "grad_psi: no active lambda-points".into(),
        });
    }
    for a in 0..d {
        num[a] /= den;
    }
    fold(torus, &mut num);
    Ok(num)
}

/// Barycentric map at `x_i`: `sum_j y_j rho_ij mu_j / sum_j rho_ij mu_j`
/// (torus-lifted as in `grad_phi`).
pub fn barycentric_map(i: usize, plan: &PlanDensity, inst: &RotInstance) -> Result<Vec<f64>> {
    let row = plan.row(i);
    weighted_barycenter(i, inst, |j| row[j] * inst.mu.weights[j], "barycentric_map")
}

/// The support of one plan row, with geometric summaries.
#[derive(Debug, Clone)]
pub struct Section {
    pub center_index: usize,
    /// Indices of mu-points with rho > 0, ascending.
    pub member_indices: Vec<usize>,
    /// Largest pairwise geodesic distance among members.
    pub diameter: f64,
    /// `grad_phi` barycenter of the section.
    pub barycenter: Vec<f64>,
    /// Member count times the mu cell volume; NaN when mu carries no cell
    /// volume (generic point cloud).
    pub volume_estimate: f64,
    /// Outer radius (max distance from the center point to a member)
    /// divided by eps^{1/(d(p-1)+2)}.
    pub outer_ratio: f64,
    /// Inner radius proxy (distance from the center point to the nearest
    /// non-member, minus one grid spacing, floored at 0) divided by the
    /// same power of eps. Infinite when the section covers all of mu.
    pub inner_ratio: f64,
}

fn section_impl(
    center_index: usize,
    center: &[f64],
    members: Vec<usize>,
    other: &crate::measures::DiscreteMeasure,
    inst: &RotInstance,
    params: &SolverParams,
    barycenter: Vec<f64>,
) -> Result<Section> {
    if members.is_empty() {
        return Err(RotError::DegenerateSection {
            index: center_index,
            reason: "empty section".into(),
        });
    }
    let kernel = &inst.kernel;
    let mut diameter = 0.0f64;
    for (a_pos, &a) in members.iter().enumerate() {
        let pa = other.point(a);
        for &b in &members[a_pos + 1..] {
            diameter = diameter.max(kernel.distance(pa, other.point(b)));
        }
    }
    let mut outer = 0.0f64;
    for &j in &members {
        outer = outer.max(kernel.distance(center, other.point(j)));
    }
    // nearest non-member distance
    let mut in_section = vec![false; other.n()];
    for &j in &members {
        in_section[j] = true;
    }
    let mut nearest_out = f64::INFINITY;
    for j in 0..other.n() {
        if !in_section[j] {
            nearest_out = nearest_out.min(kernel.distance(center, other.point(j)));
        }
    }
    let d = other.dim() as f64;
    let spacing = other.cell_volume.map(|v| v.powf(1.0 / d)).unwrap_or(0.0);
    let alpha = 1.0 / (d * (params.p - 1.0) + 2.0);
    let scale = params.epsilon.powf(alpha);
    let inner = if nearest_out.is_finite() {
        (nearest_out - spacing).max(0.0)
    } else {
        f64::INFINITY
    };
    let volume_estimate = match other.cell_volume {
        Some(v) => members.len() as f64 * v,
        None => f64::NAN,
    };
    Ok(Section {
        center_index,
        member_indices: members,
        diameter,
        barycenter,
        volume_estimate,
        outer_ratio: outer / scale,
        inner_ratio: inner / scale,
    })
}

/// Section of the plan at lambda-point `i`: members, diameter, barycenter,
/// volume estimate, and scaled inner/outer radius ratios.
pub fn section(
    i: usize,
    plan: &PlanDensity,
    duals: &DualPotentials,
    inst: &RotInstance,
    params: &SolverParams,
) -> Result<Section> {
    let row = plan.row(i);
    let members: Vec<usize> = (0..inst.n1()).filter(|&j| row[j] > 0.0).collect();
    let barycenter = grad_phi(i, duals, inst, params)?;
    section_impl(i, inst.lambda.point(i), members, &inst.mu, inst, params, barycenter)
}

/// Section of the plan at mu-point `j` (column support).
pub fn section_dual(
    j: usize,
    plan: &PlanDensity,
    duals: &DualPotentials,
    inst: &RotInstance,
    params: &SolverParams,
) -> Result<Section> {
    let members: Vec<usize> = (0..inst.n0()).filter(|&i| plan.rho(i, j) > 0.0).collect();
    let barycenter = grad_psi(j, duals, inst, params)?;
    section_impl(j, inst.mu.point(j), members, &inst.lambda, inst, params, barycenter)
}

/// How to evaluate the Hessian of the potential at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianMethod {
    /// Closed-form second-derivative expression; requires p < 2 (the
    /// `xi^{q-3}` weight degenerates into a boundary term at p = 2).
    Formula,
    /// Central finite differences of `grad_phi` across grid neighbors;
    /// valid for every p in (1, 2] but needs a grid-built lambda.
    FiniteDifference,
}

/// Relative slack floor below which members are excluded from the
/// singular `xi^{q-3}` weight when q < 3.
const SINGULAR_FLOOR: f64 = 1e-9;

/// Hessian (d x d, row-major) of the potential at lambda-point `i`.
pub fn hessian_phi(
    i: usize,
    duals: &DualPotentials,
    inst: &RotInstance,
    params: &SolverParams,
    method: HessianMethod,
) -> Result<Vec<f64>> {
    let d = inst.lambda.dim();
    match method {
        HessianMethod::Formula => {
            if params.p == 2.0 {
                return Err(RotError::UnsupportedMethod(
                    "closed-form Hessian is undefined at p = 2 (the xi^{q-3} weight \
                     degenerates to a boundary term); use finite differences"
                        .into(),
                ));
            }
            let q = params.q;
            let n1 = inst.n1();
            let torus = inst.lambda.domain.is_torus();
            let x = inst.lambda.point(i);
            let mut costs = vec![0.0; n1];
            inst.costs.row_into(i, &mut costs);
            // use the barycenter's representative nearest x, not the folded
            // one, so seam sections measure spreads on a single branch
            let mut bary = grad_phi(i, duals, inst, params)?;
            if torus {
                for a in 0..d {
                    bary[a] = x[a] + torus_delta(bary[a] - x[a]);
                }
            }
            let mx = {
                let mut m = f64::NEG_INFINITY;
                for j in 0..n1 {
                    m = m.max(duals.f[i] + duals.g[j] - costs[j]);
                }
                m
            };
            if !(mx > 0.0) {
                return Err(RotError::DegenerateSection {
                    index: i,
                    reason: "hessian: empty section".into(),
                });
            }
            let floor = if q < 3.0 { SINGULAR_FLOOR * mx } else { 0.0 };
            let mut num = vec![0.0; d * d];
            let mut den = 0.0;
            let mut lifted = vec![0.0; d];
            for j in 0..n1 {
                let xi = duals.f[i] + duals.g[j] - costs[j];
                if xi <= 0.0 {
                    continue;
                }
                den += pos_pow(xi, q - 2.0) * inst.mu.weights[j];
                if xi <= floor {
                    continue; // exclude near-singular members from xi^{q-3}
                }
                let w = pos_pow_conv(xi, q - 3.0) * inst.mu.weights[j];
                lift_near(x, inst.mu.point(j), torus, &mut lifted);
                for a in 0..d {
                    let da = bary[a] - lifted[a];
                    for b in 0..d {
                        num[a * d + b] += w * da * (bary[b] - lifted[b]);
                    }
                }
            }
            if den <= 0.0 {
                return Err(RotError::DegenerateSection {
                    index: i,
                    reason: "hessian: zero denominator".into(),
                });
            }
            let c = (q - 2.0) / den;
            for v in &mut num {
                *v *= c;
            }
            Ok(num)
        }
        HessianMethod::FiniteDifference => {
            if inst.lambda.grid_shape.is_none() {
                return Err(RotError::UnsupportedMethod(
                    "finite-difference Hessian needs a grid-built lambda".into(),
                ));
            }
            let torus = inst.lambda.domain.is_torus();
            let base = grad_phi(i, duals, inst, params)?;
            let mut hess = vec![0.0; d * d];
            for a in 0..d {
                let h = inst.lambda.grid_spacing(a).unwrap();
                let ip = inst.lambda.grid_neighbor(i, a, 1).ok_or_else(|| {
                    RotError::InvalidArgument(format!(
                        "finite differences need an interior node, index {i} is at a box edge"
                    ))
                })?;
                let im = inst.lambda.grid_neighbor(i, a, -1).ok_or_else(|| {
                    RotError::InvalidArgument(format!(
                        "finite differences need an interior node, index {i} is at a box edge"
                    ))
                })?;
                let gp = grad_phi(ip, duals, inst, params)?;
                let gm = grad_phi(im, duals, inst, params)?;
                for b in 0..d {
                    // lift both neighbor values to the branch nearest the
                    // center value before differencing
                    let dp = if torus { torus_delta(gp[b] - base[b]) } else { gp[b] - base[b] };
                    let dm = if torus { torus_delta(gm[b] - base[b]) } else { gm[b] - base[b] };
                    hess[a * d + b] = (dp - dm) / (2.0 * h);
                }
            }
            // symmetrize
            for a in 0..d {
                for b in (a + 1)..d {
                    let s = 0.5 * (hess[a * d + b] + hess[b * d + a]);
                    hess[a * d + b] = s;
                    hess[b * d + a] = s;
                }
            }
            Ok(hess)
        }
    }
}

/// Smallest eigenvalue of the Hessian at lambda-point `i`; the local
/// strong-convexity modulus of the potential.
pub fn strong_convexity_lambda_min(
    i: usize,
    duals: &DualPotentials,
    inst: &RotInstance,
    params: &SolverParams,
    method: HessianMethod,
) -> Result<f64> {
    let d = inst.lambda.dim();
    let h = hessian_phi(i, duals, inst, params, method)?;
    symmetric_min_eigenvalue(&h, d)
}
