//! Epsilon-sweep harness: solve a family of instances across a decreasing
//! grid of regularization strengths, collect the local-geometry
//! observables, and fit their scaling exponents.
//!
//! The governing exponent is `alpha = 1 / (d (p - 1) + 2)`: section radii
//! scale as `eps^alpha`, section slacks (`max_xi`) and the value gap as
//! `eps^{2 alpha}`, and section volumes as `eps^{d alpha}`. The grid is
//! refined with epsilon (`h <= radius_scale * eps^alpha / 8`) so that
//! discretization error stays a constant fraction of the quantities being
//! measured and the fitted slopes are clean.

use rayon::prelude::*;

use crate::dual_solver::{
    dual_objective, primal_objective, solve_dual, strong_duality_gap, DualPotentials, RotInstance,
    SolverParams,
};
use crate::error::{Result, RotError};
use crate::measures::{
    cosine_perturbed_torus_measure, is_interior, torus_delta, uniform_grid_measure, CostKernel,
    DiscreteMeasure, Domain,
};
use crate::numerics::symmetric_min_eigenvalue;
use crate::plan::{density, grad_phi_all, max_xi, section};

/// Scaling exponent `1 / (d (p - 1) + 2)`.
pub fn alpha(d: usize, p: f64) -> f64 {
    1.0 / (d as f64 * (p - 1.0) + 2.0)
}

/// Instance family being swept.
#[derive(Debug, Clone)]
pub enum SweepInstance {
    /// Uniform Lebesgue self-transport on the torus (closed-form oracle).
    TorusSelfTransport,
    /// 1-d torus: lambda has density 1 + amplitude cos(2 pi x), mu uniform.
    TorusCosinePerturbed { amplitude: f64 },
    /// Fixed user-supplied marginals, reused at every epsilon. The sweep
    /// refuses epsilons the fixed grid cannot resolve.
    Custom {
        lambda: DiscreteMeasure,
        mu: DiscreteMeasure,
    },
}

/// Sweep configuration.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub d: usize,
    pub p: f64,
    /// Strictly decreasing, all positive.
    pub epsilons: Vec<f64>,
    pub instance: SweepInstance,
    /// Multiplies the expected section radius in the resolution rule.
    pub radius_scale: f64,
    /// Interior band excluded near box boundaries (fraction of each side);
    /// every torus point is interior.
    pub interior_margin: f64,
    /// Reuse (resampled) duals from the previous epsilon as the next init.
    pub warm_start: bool,
    /// Relative residual tolerance handed to the solver.
    pub tol_residual: f64,
    /// Guard against runaway grids from tiny epsilons.
    pub max_resolution: usize,
}

impl SweepConfig {
    pub fn new(d: usize, p: f64, epsilons: Vec<f64>, instance: SweepInstance) -> Result<Self> {
        crate::measures::check_p(p)?;
        if epsilons.len() < 2 {
            return Err(RotError::InvalidArgument(
                "a sweep needs at least two epsilon values".into(),
            ));
        }
        for w in epsilons.windows(2) {
            if !(w[0] > w[1] && w[1] > 0.0) {
                return Err(RotError::InvalidArgument(
                    "epsilons must be strictly decreasing and positive".into(),
                ));
            }
        }
        if let SweepInstance::TorusCosinePerturbed { amplitude } = &instance {
            if d != 1 {
                return Err(RotError::InvalidArgument(
                    "the cosine-perturbed instance is 1-dimensional".into(),
                ));
            }
            if !(amplitude.abs() < 1.0) {
                return Err(RotError::InvalidArgument(
                    "cosine amplitude must lie in (-1, 1)".into(),
                ));
            }
        }
        Ok(SweepConfig {
            d,
            p,
            epsilons,
            instance,
            radius_scale: 1.0,
            interior_margin: 0.25,
            warm_start: true,
            tol_residual: 1e-10,
            max_resolution: 8192,
        })
    }

    /// Per-axis resolution for one epsilon: smallest `m` with
    /// `1/m <= radius_scale * eps^alpha / 8`.
    pub fn resolution_for(&self, eps: f64) -> Result<usize> {
        let h_max = self.radius_scale * eps.powf(alpha(self.d, self.p)) / 8.0;
        let m = (1.0 / h_max).ceil() as usize;
        let m = m.max(2);
        if m > self.max_resolution {
            return Err(RotError::InvalidArgument(format!(
                "eps = {eps} needs per-axis resolution {m} > max_resolution {}",
                self.max_resolution
            )));
        }
        Ok(m)
    }
}

/// Logarithmically spaced epsilons from `eps_max` down to `eps_min`.
pub fn log_spaced_epsilons(eps_max: f64, eps_min: f64, count: usize) -> Result<Vec<f64>> {
    if !(eps_max > eps_min && eps_min > 0.0) || count < 2 {
        return Err(RotError::InvalidArgument(
            "need eps_max > eps_min > 0 and count >= 2".into(),
        ));
    }
    let (la, lb) = (eps_max.ln(), eps_min.ln());
    Ok((0..count)
        .map(|k| (la + (lb - la) * k as f64 / (count - 1) as f64).exp())
        .collect())
}

/// Observables collected at one epsilon.
#[derive(Debug, Clone)]
pub struct EpsPoint {
    pub epsilon: f64,
    /// Per-axis resolution (0 for custom instances).
    pub m: usize,
    pub n: usize,
    /// Grid spacing proxy (cell_volume^{1/d}).
    pub h: f64,
    pub iters: usize,
    pub residual_rel: f64,
    pub median_diameter: f64,
    pub median_max_xi: f64,
    pub median_volume: f64,
    pub min_lambda_min: f64,
    pub min_inner_ratio: f64,
    pub max_outer_ratio: f64,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    /// Primal value without the entropy's additive constant; equals the
    /// transport value up to O(eps) entropy terms.
    pub rot_value: f64,
    /// Interior lambda indices used for the medians.
    pub interior: Vec<usize>,
    /// Lambda support, flattened n x d (for cross-epsilon map comparison).
    pub lambda_points: Vec<f64>,
    pub lambda_weights: Vec<f64>,
    /// grad_phi at every lambda point, flattened n x d.
    pub grads: Vec<f64>,
}

/// All per-epsilon observables of one sweep.
#[derive(Debug, Clone)]
pub struct SweepData {
    pub config: SweepConfig,
    pub points: Vec<EpsPoint>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Resample duals from one support onto another by nearest-point lookup.
fn resample_duals(
    old: &DualPotentials,
    old_inst: &RotInstance,
    new_lambda: &DiscreteMeasure,
    new_mu: &DiscreteMeasure,
) -> DualPotentials {
    let nearest = |pts: &DiscreteMeasure, old_pts: &DiscreteMeasure, vals: &[f64]| -> Vec<f64> {
        (0..pts.n())
            .into_par_iter()
            .map(|i| {
                let x = pts.point(i);
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for k in 0..old_pts.n() {
                    let d = old_inst.kernel.eval(x, old_pts.point(k));
                    if d < best_d {
                        best_d = d;
                        best = k;
                    }
                }
                vals[best]
            })
            .collect()
    };
    DualPotentials {
        f: nearest(new_lambda, &old_inst.lambda, &old.f),
        g: nearest(new_mu, &old_inst.mu, &old.g),
        gauge: crate::dual_solver::Gauge::None,
    }
}

/// Finite-difference min eigenvalue of the map Jacobian from cached grads.
fn lambda_min_from_grads(
    i: usize,
    grads: &[f64],
    lambda: &DiscreteMeasure,
) -> Result<f64> {
    let d = lambda.dim();
    let torus = lambda.domain.is_torus();
    let base = &grads[i * d..(i + 1) * d];
    let mut hess = vec![0.0; d * d];
    for a in 0..d {
        let h = lambda.grid_spacing(a).ok_or_else(|| {
            RotError::UnsupportedMethod("strong convexity sweep needs a grid-built lambda".into())
        })?;
        let ip = lambda.grid_neighbor(i, a, 1).ok_or_else(|| {
            RotError::InvalidArgument(format!("node {i} has no +1 neighbor on axis {a}"))
        })?;
        let im = lambda.grid_neighbor(i, a, -1).ok_or_else(|| {
            RotError::InvalidArgument(format!("node {i} has no -1 neighbor on axis {a}"))
        })?;
        for b in 0..d {
            let gp = grads[ip * d + b];
            let gm = grads[im * d + b];
            let dp = if torus { torus_delta(gp - base[b]) } else { gp - base[b] };
            let dm = if torus { torus_delta(gm - base[b]) } else { gm - base[b] };
            hess[a * d + b] = (dp - dm) / (2.0 * h);
        }
    }
    for a in 0..d {
        for b in (a + 1)..d {
            let s = 0.5 * (hess[a * d + b] + hess[b * d + a]);
            hess[a * d + b] = s;
            hess[b * d + a] = s;
        }
    }
    symmetric_min_eigenvalue(&hess, d)
}

fn build_marginals(config: &SweepConfig, eps: f64) -> Result<(DiscreteMeasure, DiscreteMeasure, usize)> {
    match &config.instance {
        SweepInstance::TorusSelfTransport => {
            let m = config.resolution_for(eps)?;
            let dom = Domain::torus(config.d)?;
            let grid = uniform_grid_measure(&dom, &vec![m; config.d])?;
            Ok((grid.clone(), grid, m))
        }
        SweepInstance::TorusCosinePerturbed { amplitude } => {
            let m = config.resolution_for(eps)?;
            let lambda = cosine_perturbed_torus_measure(m, *amplitude)?;
            let dom = Domain::torus(1)?;
            let mu = uniform_grid_measure(&dom, &[m])?;
            Ok((lambda, mu, m))
        }
        SweepInstance::Custom { lambda, mu } => {
            let h_max = config.radius_scale * eps.powf(alpha(config.d, config.p)) / 8.0;
            for (name, meas) in [("lambda", lambda), ("mu", mu)] {
                let h = meas
                    .cell_volume
                    .map(|v| v.powf(1.0 / config.d as f64))
                    .ok_or_else(|| {
                        RotError::InvalidArgument(format!(
                            "custom sweep {name} has no cell volume; cannot check resolution"
                        ))
                    })?;
                if h > h_max {
                    return Err(RotError::InvalidArgument(format!(
                        "custom {name} grid (h = {h:.4e}) is too coarse for eps = {eps} \
                         (needs h <= {h_max:.4e})"
                    )));
                }
            }
            Ok((lambda.clone(), mu.clone(), 0))
        }
    }
}

/// Solve every epsilon in the sweep and collect the observables.
pub fn collect(config: &SweepConfig) -> Result<SweepData> {
    let mut points = Vec::with_capacity(config.epsilons.len());
    let mut prev: Option<(DualPotentials, RotInstance)> = None;
    for &eps in &config.epsilons {
        let (lambda, mu, m) = build_marginals(config, eps)?;
        let kernel = CostKernel::for_domain(lambda.domain.clone());
        let inst = RotInstance::new(lambda, mu, kernel)?;
        let mut params = SolverParams::new(eps, config.p)?;
        params.tol_residual = config.tol_residual;
        let init = match (&prev, config.warm_start) {
            (Some((duals, old_inst)), true) => {
                Some(resample_duals(duals, old_inst, &inst.lambda, &inst.mu))
            }
            _ => None,
        };
        let (duals, report) = solve_dual(&inst, &params, init.as_ref())?;
        let plan = density(&duals, &inst, &params);

        let d = config.d;
        let interior: Vec<usize> = (0..inst.n0())
            .filter(|&i| is_interior(&inst.lambda.domain, inst.lambda.point(i), config.interior_margin))
            .collect();
        if interior.is_empty() {
            return Err(RotError::InvalidArgument(
                "interior margin leaves no lambda points".into(),
            ));
        }

        let sections: Result<Vec<_>> = interior
            .par_iter()
            .map(|&i| section(i, &plan, &duals, &inst, &params))
            .collect();
        let sections = sections?;
        let mut diameters: Vec<f64> = sections.iter().map(|s| s.diameter).collect();
        let mut volumes: Vec<f64> = sections.iter().map(|s| s.volume_estimate).collect();
        let min_inner = sections.iter().map(|s| s.inner_ratio).fold(f64::INFINITY, f64::min);
        let max_outer = sections.iter().map(|s| s.outer_ratio).fold(0.0f64, f64::max);
        let mut slacks: Vec<f64> = interior.iter().map(|&i| max_xi(i, &duals, &inst)).collect();

        let grads_nested = grad_phi_all(&duals, &inst, &params)?;
        let mut grads = Vec::with_capacity(inst.n0() * d);
        for g in &grads_nested {
            grads.extend_from_slice(g);
        }

        let min_lambda_min = if inst.lambda.grid_shape.is_some() {
            let vals: Result<Vec<f64>> = interior
                .par_iter()
                .map(|&i| lambda_min_from_grads(i, &grads, &inst.lambda))
                .collect();
            vals?.into_iter().fold(f64::INFINITY, f64::min)
        } else {
            f64::NAN
        };

        let primal = primal_objective(&plan, &inst, &params);
        let dual = dual_objective(&duals, &inst, &params);
        let gap = strong_duality_gap(primal, dual, &params);
        let rot_value = primal + params.epsilon * (params.q - 1.0);

        let h = inst
            .lambda
            .cell_volume
            .map(|v| v.powf(1.0 / d as f64))
            .unwrap_or(f64::NAN);

        points.push(EpsPoint {
            epsilon: eps,
            m,
            n: inst.n0(),
            h,
            iters: report.iters,
            residual_rel: report.final_residual_rel,
            median_diameter: median(&mut diameters),
            median_max_xi: median(&mut slacks),
            median_volume: median(&mut volumes),
            min_lambda_min,
            min_inner_ratio: min_inner,
            max_outer_ratio: max_outer,
            primal,
            dual,
            gap,
            rot_value,
            interior,
            lambda_points: inst.lambda.points_flat().to_vec(),
            lambda_weights: inst.lambda.weights.clone(),
            grads,
        });
        prev = Some((duals, inst));
    }
    Ok(SweepData {
        config: config.clone(),
        points,
    })
}

/// Result of fitting one observable against epsilon on log-log axes.
#[derive(Debug, Clone)]
pub struct RateFit {
    pub quantity: String,
    /// (epsilon, value) pairs that entered the fit.
    pub pairs: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub expected_slope: f64,
    pub tolerance: f64,
    pub one_sided: bool,
    pub pass: bool,
    /// "two-sided", "one-sided", "degenerate", or "reference-extrapolated".
    pub mode: String,
}

/// Ordinary least squares of `ln(value)` against `ln(eps)`. Two-sided
/// pass: `|slope - expected| <= tolerance`; one-sided pass:
/// `slope >= expected - tolerance`.
pub fn fit_loglog(
    pairs: &[(f64, f64)],
    expected_slope: f64,
    tolerance: f64,
    one_sided: bool,
    quantity: &str,
) -> Result<RateFit> {
    if pairs.len() < 2 {
        return Err(RotError::InvalidArgument(format!(
            "fit for {quantity} needs at least 2 points, got {}",
            pairs.len()
        )));
    }
    for (e, v) in pairs {
        if !(*e > 0.0 && *v > 0.0) {
            return Err(RotError::InvalidData(format!(
                "fit for {quantity}: nonpositive pair ({e}, {v})"
            )));
        }
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|(e, _)| e.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|(_, v)| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(RotError::InvalidData(format!(
            "fit for {quantity}: all epsilons identical"
        )));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    let pass = if one_sided {
        slope >= expected_slope - tolerance
    } else {
        (slope - expected_slope).abs() <= tolerance
    };
    Ok(RateFit {
        quantity: quantity.to_string(),
        pairs: pairs.to_vec(),
        slope,
        intercept,
        r_squared,
        expected_slope,
        tolerance,
        one_sided,
        pass,
        mode: if one_sided { "one-sided" } else { "two-sided" }.to_string(),
    })
}

fn pairs_of(data: &SweepData, f: impl Fn(&EpsPoint) -> f64) -> Vec<(f64, f64)> {
    data.points.iter().map(|pt| (pt.epsilon, f(pt))).collect()
}

/// Median section diameter vs eps; sharp rate `eps^alpha`, two-sided.
pub fn sparsity_fit(data: &SweepData) -> Result<RateFit> {
    let a = alpha(data.config.d, data.config.p);
    fit_loglog(
        &pairs_of(data, |p| p.median_diameter),
        a,
        0.05,
        false,
        "sparsity",
    )
}

/// Median row slack vs eps; sharp rate `eps^{2 alpha}`, two-sided.
pub fn max_xi_fit(data: &SweepData) -> Result<RateFit> {
    let a = alpha(data.config.d, data.config.p);
    fit_loglog(
        &pairs_of(data, |p| p.median_max_xi),
        2.0 * a,
        0.05,
        false,
        "max_xi",
    )
}

/// Median section volume vs eps; sharp rate `eps^{d alpha}`, two-sided.
pub fn volume_fit(data: &SweepData) -> Result<RateFit> {
    let a = alpha(data.config.d, data.config.p);
    fit_loglog(
        &pairs_of(data, |p| p.median_volume),
        data.config.d as f64 * a,
        0.05,
        false,
        "volume",
    )
}

/// Gap between the transport value and the known unregularized optimum;
/// upper-bound rate `eps^{2 alpha}`, one-sided. Only available when the
/// optimal transport value is known (self-transport families: OT = 0).
pub fn gap_fit(data: &SweepData) -> Result<RateFit> {
    let ot = match data.config.instance {
        SweepInstance::TorusSelfTransport => 0.0,
        _ => {
            return Err(RotError::UnsupportedMethod(
                "gap rate needs a known unregularized optimum; only the uniform \
                 self-transport family provides one"
                    .into(),
            ))
        }
    };
    let a = alpha(data.config.d, data.config.p);
    fit_loglog(
        &pairs_of(data, |p| p.rot_value - ot),
        2.0 * a,
        0.1,
        true,
        "gap",
    )
}

fn torus_dist2(a: &[f64], b: &[f64], torus: bool) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = if torus { torus_delta(x - y) } else { x - y };
        s += d * d;
    }
    s
}

/// Weighted L2 error of `grad_phi` against a reference map over the
/// interior points of one sweep point.
fn map_error_against(
    pt: &EpsPoint,
    d: usize,
    torus: bool,
    mut reference: impl FnMut(&[f64]) -> Vec<f64>,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in &pt.interior {
        let x = &pt.lambda_points[i * d..(i + 1) * d];
        let g = &pt.grads[i * d..(i + 1) * d];
        let r = reference(x);
        num += pt.lambda_weights[i] * torus_dist2(g, &r, torus);
        den += pt.lambda_weights[i];
    }
    (num / den).sqrt()
}

/// Convergence of the transport map: L2 error of `grad_phi` against the
/// identity (self-transport) or, when no closed-form reference exists,
/// against the map at the finest epsilon evaluated by nearest-node lookup
/// ("reference-extrapolated" mode; the finest point is excluded from the
/// fit). Rate lower bound `eps^alpha`, one-sided. When the errors are at
/// solver-noise level (self-transport on a symmetric grid) the fit is
/// skipped and the criterion passes in "degenerate" mode.
pub fn map_rate_fit(data: &SweepData) -> Result<RateFit> {
    let d = data.config.d;
    let a = alpha(d, data.config.p);
    let torus = !matches!(
        &data.config.instance,
        SweepInstance::Custom { lambda, .. } if !lambda.domain.is_torus()
    );
    let (pairs, mode): (Vec<(f64, f64)>, &str) = match &data.config.instance {
        SweepInstance::TorusSelfTransport => {
            let pairs: Vec<(f64, f64)> = data
                .points
                .iter()
                .map(|pt| {
                    (
                        pt.epsilon,
                        map_error_against(pt, d, torus, |x| x.to_vec()),
                    )
                })
                .collect();
            (pairs, "exact")
        }
        _ => {
            let finest = data.points.last().ok_or_else(|| {
                RotError::InvalidArgument("empty sweep".into())
            })?;
            let fi = |x: &[f64]| -> Vec<f64> {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for k in 0..finest.lambda_weights.len() {
                    let y = &finest.lambda_points[k * d..(k + 1) * d];
                    let dd = torus_dist2(x, y, torus);
                    if dd < best_d {
                        best_d = dd;
                        best = k;
                    }
                }
                finest.grads[best * d..(best + 1) * d].to_vec()
            };
            let pairs: Vec<(f64, f64)> = data.points[..data.points.len() - 1]
                .iter()
                .map(|pt| (pt.epsilon, map_error_against(pt, d, torus, fi)))
                .collect();
            (pairs, "reference-extrapolated")
        }
    };
    // Degenerate regime: the map already matches the reference to solver
    // noise at every epsilon; no meaningful rate to fit.
    let max_err = pairs.iter().fold(0.0f64, |m, (_, v)| m.max(*v));
    if max_err <= 1e-8 {
        return Ok(RateFit {
            quantity: "map_rate".into(),
            pairs,
            slope: f64::NAN,
            intercept: f64::NAN,
            r_squared: f64::NAN,
            expected_slope: a,
            tolerance: 0.1,
            one_sided: true,
            pass: true,
            mode: "degenerate".into(),
        });
    }
    let mut fit = fit_loglog(&pairs, a, 0.1, true, "map_rate")?;
    fit.mode = mode.to_string();
    Ok(fit)
}

/// Strong-convexity floor across the sweep.
#[derive(Debug, Clone)]
pub struct ConvexityReport {
    /// (epsilon, min interior lambda_min).
    pub per_eps: Vec<(f64, f64)>,
    pub threshold: f64,
    /// Smallest lambda_min across all epsilons.
    pub worst: f64,
    pub pass: bool,
}

/// Check that the smallest interior Hessian eigenvalue stays above
/// `threshold` at every epsilon.
pub fn strong_convexity_report(data: &SweepData, threshold: f64) -> Result<ConvexityReport> {
    let per_eps: Vec<(f64, f64)> = data
        .points
        .iter()
        .map(|p| (p.epsilon, p.min_lambda_min))
        .collect();
    if per_eps.iter().any(|(_, v)| v.is_nan()) {
        return Err(RotError::UnsupportedMethod(
            "strong convexity needs grid-built lambda marginals".into(),
        ));
    }
    let worst = per_eps.iter().fold(f64::INFINITY, |m, (_, v)| m.min(*v));
    Ok(ConvexityReport {
        per_eps,
        threshold,
        worst,
        pass: worst >= threshold,
    })
}

/// Inner/outer section-radius sandwich across the sweep.
#[derive(Debug, Clone)]
pub struct SandwichReport {
    /// (epsilon, min inner_ratio, max outer_ratio).
    pub per_eps: Vec<(f64, f64, f64)>,
    pub min_inner: f64,
    pub max_outer: f64,
    /// max_outer / min_inner across the sweep.
    pub spread: f64,
    /// Largest epsilon at which the inner ratio is already positive.
    pub eps0_proxy: f64,
    pub pass: bool,
}

/// Check that the scaled section radii are sandwiched: the inner ratio is
/// strictly positive everywhere and the outer/inner spread stays below
/// `max_spread`.
pub fn ratio_sandwich_report(data: &SweepData, max_spread: f64) -> SandwichReport {
    let per_eps: Vec<(f64, f64, f64)> = data
        .points
        .iter()
        .map(|p| (p.epsilon, p.min_inner_ratio, p.max_outer_ratio))
        .collect();
    let min_inner = per_eps.iter().fold(f64::INFINITY, |m, (_, i, _)| m.min(*i));
    let max_outer = per_eps.iter().fold(0.0f64, |m, (_, _, o)| m.max(*o));
    let spread = max_outer / min_inner;
    let eps0_proxy = per_eps
        .iter()
        .filter(|(_, i, _)| *i > 0.0)
        .fold(0.0f64, |m, (e, _, _)| m.max(*e));
    SandwichReport {
        per_eps,
        min_inner,
        max_outer,
        spread,
        eps0_proxy,
        pass: min_inner > 0.0 && min_inner.is_finite() && spread <= max_spread,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_values() {
        assert!((alpha(1, 2.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((alpha(1, 1.5) - 0.4).abs() < 1e-15);
        assert!((alpha(2, 2.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn log_spacing_endpoints() {
        let e = log_spaced_epsilons(1e-2, 1e-4, 5).unwrap();
        assert_eq!(e.len(), 5);
        assert!((e[0] - 1e-2).abs() < 1e-15);
        assert!((e[4] - 1e-4).abs() < 1e-18);
        assert!((e[2] - 1e-3).abs() < 1e-16);
        assert!(e.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        let pairs: Vec<(f64, f64)> = (1..=6)
            .map(|k| {
                let e = 10f64.powi(-k);
                (e, 3.7 * e.powf(0.625))
            })
            .collect();
        let fit = fit_loglog(&pairs, 0.625, 0.01, false, "synthetic").unwrap();
        assert!((fit.slope - 0.625).abs() < 1e-12);
        assert!((fit.intercept - 3.7f64.ln()).abs() < 1e-10);
        assert!(fit.r_squared > 1.0 - 1e-12);
        assert!(fit.pass);
    }

    #[test]
    fn fit_rejects_nonpositive_values() {
        let pairs = vec![(1e-2, 1.0), (1e-3, 0.0)];
        assert!(matches!(
            fit_loglog(&pairs, 1.0, 0.1, false, "bad"),
            Err(RotError::InvalidData(_))
        ));
    }

    #[test]
    fn one_sided_pass_semantics() {
        let pairs: Vec<(f64, f64)> = (1..=4)
            .map(|k| {
                let e = 10f64.powi(-k);
                (e, e.powf(0.9))
            })
            .collect();
        // steeper than expected is fine one-sided, fails two-sided
        let one = fit_loglog(&pairs, 0.5, 0.1, true, "x").unwrap();
        assert!(one.pass);
        let two = fit_loglog(&pairs, 0.5, 0.1, false, "x").unwrap();
        assert!(!two.pass);
    }

    #[test]
    fn resolution_rule() {
        let cfg = SweepConfig::new(
            1,
            2.0,
            vec![1e-2, 1e-3],
            SweepInstance::TorusSelfTransport,
        )
        .unwrap();
        // h <= eps^{1/3} / 8: eps = 1e-3 gives h <= 0.0125, m = 80
        assert_eq!(cfg.resolution_for(1e-3).unwrap(), 80);
        assert!(cfg.resolution_for(1e-2).unwrap() >= 38);
    }

    #[test]
    fn epsilons_must_decrease() {
        assert!(SweepConfig::new(
            1,
            2.0,
            vec![1e-3, 1e-2],
            SweepInstance::TorusSelfTransport
        )
        .is_err());
    }

    #[test]
    fn small_self_transport_sweep_end_to_end() {
        let cfg = SweepConfig::new(
            1,
            2.0,
            log_spaced_epsilons(8e-3, 1e-3, 4).unwrap(),
            SweepInstance::TorusSelfTransport,
        )
        .unwrap();
        let data = collect(&cfg).unwrap();
        assert_eq!(data.points.len(), 4);
        // diameters shrink monotonically with eps
        for w in data.points.windows(2) {
            assert!(w[0].median_diameter > w[1].median_diameter);
        }
        let sp = sparsity_fit(&data).unwrap();
        assert!(
            (sp.slope - 1.0 / 3.0).abs() < 0.05,
            "sparsity slope {}",
            sp.slope
        );
        let mx = max_xi_fit(&data).unwrap();
        assert!((mx.slope - 2.0 / 3.0).abs() < 0.05, "max_xi slope {}", mx.slope);
        let gap = gap_fit(&data).unwrap();
        assert!(gap.pass, "gap slope {}", gap.slope);
        let sc = strong_convexity_report(&data, 0.5).unwrap();
        assert!(sc.pass, "worst lambda_min {}", sc.worst);
        let sw = ratio_sandwich_report(&data, 10.0);
        assert!(sw.pass, "sandwich spread {}", sw.spread);
        let mr = map_rate_fit(&data).unwrap();
        assert!(mr.pass, "map rate mode {} slope {}", mr.mode, mr.slope);
    }

    #[test]
    fn custom_sweep_refuses_coarse_grid() {
        let dom = Domain::torus(1).unwrap();
        let grid = uniform_grid_measure(&dom, &[16]).unwrap();
        let cfg = SweepConfig::new(
            1,
            2.0,
            vec![1e-3, 5e-4],
            SweepInstance::Custom {
                lambda: grid.clone(),
                mu: grid,
            },
        )
        .unwrap();
        assert!(matches!(collect(&cfg), Err(RotError::InvalidArgument(_))));
    }

    #[test]
    fn gap_fit_needs_known_optimum() {
        let dom = Domain::torus(1).unwrap();
        let grid = uniform_grid_measure(&dom, &[64]).unwrap();
        let cfg = SweepConfig::new(
            1,
            2.0,
            vec![1e-2, 5e-3],
            SweepInstance::Custom {
                lambda: grid.clone(),
                mu: grid,
            },
        )
        .unwrap();
        let data = collect(&cfg).unwrap();
        assert!(matches!(gap_fit(&data), Err(RotError::UnsupportedMethod(_))));
    }
}
