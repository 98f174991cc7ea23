//! Dual solver for the Schrödinger system of the regularized transport
//! problem.
//!
//! The dual optimality conditions are a pair of marginal fixed-point
//! equations: for every row, `sum_j (f_i + g_j - c_ij)_+^{q-1} mu_j = kappa`
//! with `kappa = eps^{q-1} q^{q-1}`, and symmetrically for columns. Each row
//! equation is scalar, continuous, and nondecreasing in `f_i`, so we run
//! nonlinear Gauss-Seidel: solve every row given `g`, then every column
//! given `f`, with a safeguarded Newton iteration per scalar equation.

use rayon::prelude::*;

use crate::error::{Result, RotError};
use crate::measures::{check_p, CostKernel, DiscreteMeasure};
use crate::numerics::{pos_pow, pos_pow_conv};
use crate::plan::PlanDensity;

/// Solver parameters; `q` and `kappa` are derived from `(epsilon, p)`.
#[derive(Debug, Clone)]
pub struct SolverParams {
    pub epsilon: f64,
    pub p: f64,
    /// Young conjugate q = p/(p-1); q >= 2 since p <= 2.
    pub q: f64,
    /// Right-hand side of the Schrödinger system: eps^{q-1} q^{q-1}.
    pub kappa: f64,
    /// Outer stopping rule, relative to kappa.
    pub tol_residual: f64,
    pub max_outer_iters: usize,
    /// Absolute tolerance on the per-row scalar equation.
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    /// Cache the dense cost matrix if n0*n1 is at most this.
    pub cost_cache_threshold: usize,
}

impl SolverParams {
    pub fn new(epsilon: f64, p: f64) -> Result<Self> {
        check_p(p)?;
        if !(epsilon > 0.0) {
            return Err(RotError::InvalidArgument(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        let q = p / (p - 1.0);
        let kappa = epsilon.powf(q - 1.0) * q.powf(q - 1.0);
        Ok(SolverParams {
            epsilon,
            p,
            q,
            kappa,
            tol_residual: 1e-10,
            max_outer_iters: 10_000,
            newton_tol: 1e-14,
            newton_max_iters: 100,
            cost_cache_threshold: 20_000_000,
        })
    }

    /// Effective absolute tolerance for the scalar row solves. Tightened
    /// relative to kappa so the outer residual rule stays reachable when
    /// kappa is small.
    fn row_tol(&self) -> f64 {
        self.newton_tol.min(0.05 * self.tol_residual * self.kappa)
    }
}

/// Pairwise costs between the supports of the two marginals, cached as a
/// dense matrix when small enough and recomputed per row otherwise.
#[derive(Debug, Clone)]
pub struct CostTable {
    kernel: CostKernel,
    points0: Vec<f64>,
    points1: Vec<f64>,
    d: usize,
    n0: usize,
    n1: usize,
    cached: Option<Vec<f64>>,
}

impl CostTable {
    pub fn new(
        lambda: &DiscreteMeasure,
        mu: &DiscreteMeasure,
        kernel: &CostKernel,
        cache_threshold: usize,
    ) -> Result<Self> {
        let d = kernel.domain.dim();
        if lambda.dim() != d || mu.dim() != d {
            return Err(RotError::DimensionMismatch(format!(
                "kernel dimension {d} vs marginals {} and {}",
                lambda.dim(),
                mu.dim()
            )));
        }
        let n0 = lambda.n();
        let n1 = mu.n();
        let points0 = lambda.points_flat().to_vec();
        let points1 = mu.points_flat().to_vec();
        let cached = if n0.saturating_mul(n1) <= cache_threshold {
            let mut c = vec![0.0; n0 * n1];
            c.par_chunks_mut(n1).enumerate().for_each(|(i, row)| {
                let x = &points0[i * d..(i + 1) * d];
                for (j, cj) in row.iter_mut().enumerate() {
                    *cj = kernel.eval(x, &points1[j * d..(j + 1) * d]);
                }
            });
            Some(c)
        } else {
            None
        };
        Ok(CostTable {
            kernel: kernel.clone(),
            points0,
            points1,
            d,
            n0,
            n1,
            cached,
        })
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        match &self.cached {
            Some(c) => c[i * self.n1 + j],
            None => self.kernel.eval(
                &self.points0[i * self.d..(i + 1) * self.d],
                &self.points1[j * self.d..(j + 1) * self.d],
            ),
        }
    }

    /// Fill `buf` with row `i` of the cost matrix (costs to all mu-points).
    pub fn row_into(&self, i: usize, buf: &mut [f64]) {
        debug_assert_eq!(buf.len(), self.n1);
        match &self.cached {
            Some(c) => buf.copy_from_slice(&c[i * self.n1..(i + 1) * self.n1]),
            None => {
                let x = &self.points0[i * self.d..(i + 1) * self.d];
                for (j, cj) in buf.iter_mut().enumerate() {
                    *cj = self.kernel.eval(x, &self.points1[j * self.d..(j + 1) * self.d]);
                }
            }
        }
    }

    /// Fill `buf` with column `j` of the cost matrix (costs to all lambda-points).
    pub fn col_into(&self, j: usize, buf: &mut [f64]) {
        debug_assert_eq!(buf.len(), self.n0);
        match &self.cached {
            Some(c) => {
                for (i, ci) in buf.iter_mut().enumerate() {
                    *ci = c[i * self.n1 + j];
                }
            }
            None => {
                let y = &self.points1[j * self.d..(j + 1) * self.d];
                for (i, ci) in buf.iter_mut().enumerate() {
                    *ci = self.kernel.eval(&self.points0[i * self.d..(i + 1) * self.d], y);
                }
            }
        }
    }
}

/// A transport instance: the two marginals, the cost kernel, and the
/// (possibly cached) pairwise costs.
#[derive(Debug, Clone)]
pub struct RotInstance {
    pub lambda: DiscreteMeasure,
    pub mu: DiscreteMeasure,
    pub kernel: CostKernel,
    pub costs: CostTable,
}

impl RotInstance {
    pub fn new(lambda: DiscreteMeasure, mu: DiscreteMeasure, kernel: CostKernel) -> Result<Self> {
        Self::with_cache_threshold(lambda, mu, kernel, 20_000_000)
    }

    pub fn with_cache_threshold(
        lambda: DiscreteMeasure,
        mu: DiscreteMeasure,
        kernel: CostKernel,
        cache_threshold: usize,
    ) -> Result<Self> {
        let costs = CostTable::new(&lambda, &mu, &kernel, cache_threshold)?;
        Ok(RotInstance {
            lambda,
            mu,
            kernel,
            costs,
        })
    }

    pub fn n0(&self) -> usize {
        self.lambda.n()
    }

    pub fn n1(&self) -> usize {
        self.mu.n()
    }
}

/// Additive-constant normalization applied to a dual pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gauge {
    /// No normalization applied yet.
    None,
    /// f integrates to zero against lambda.
    MeanZeroF,
    /// Means of f (under lambda) and g (under mu) coincide.
    Symmetric,
}

/// Dual potentials over the two supports.
#[derive(Debug, Clone)]
pub struct DualPotentials {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub gauge: Gauge,
}

impl DualPotentials {
    pub fn zeros(n0: usize, n1: usize) -> Self {
        DualPotentials {
            f: vec![0.0; n0],
            g: vec![0.0; n1],
            gauge: Gauge::None,
        }
    }

    pub fn mean_f(&self, lambda: &DiscreteMeasure) -> f64 {
        self.f.iter().zip(&lambda.weights).map(|(f, w)| f * w).sum()
    }

    pub fn mean_g(&self, mu: &DiscreteMeasure) -> f64 {
        self.g.iter().zip(&mu.weights).map(|(g, w)| g * w).sum()
    }

    /// Shift to the mean-zero-f gauge; f + g pairs are unchanged.
    pub fn apply_mean_zero_f(&mut self, lambda: &DiscreteMeasure) {
        let m = self.mean_f(lambda);
        for f in &mut self.f {
            *f -= m;
        }
        for g in &mut self.g {
            *g += m;
        }
        self.gauge = Gauge::MeanZeroF;
    }

    /// Shift so the weighted means of f and g coincide (the symmetric
    /// split used when comparing against the self-transport oracle).
    pub fn apply_symmetric(&mut self, lambda: &DiscreteMeasure, mu: &DiscreteMeasure) {
        let a = 0.5 * (self.mean_g(mu) - self.mean_f(lambda));
        for f in &mut self.f {
            *f += a;
        }
        for g in &mut self.g {
            *g -= a;
        }
        self.gauge = Gauge::Symmetric;
    }
}

/// Scalar row map `Phi(t) = sum_j weights_j (t + other_j - costs_j)_+^{q-1}`
/// evaluated in fixed index order.
fn phi(t: f64, other: &[f64], weights: &[f64], costs: &[f64], qm1: f64) -> f64 {
    let mut acc = 0.0;
    for j in 0..weights.len() {
        acc += weights[j] * pos_pow(t + other[j] - costs[j], qm1);
    }
    acc
}

fn phi_derivative(t: f64, other: &[f64], weights: &[f64], costs: &[f64], q: f64) -> f64 {
    let qm2 = q - 2.0;
    let mut acc = 0.0;
    for j in 0..weights.len() {
        acc += weights[j] * pos_pow_conv(t + other[j] - costs[j], qm2);
    }
    (q - 1.0) * acc
}

/// Solve `Phi(t) = kappa` for one row by Newton with a bisection safeguard.
fn solve_row(other: &[f64], weights: &[f64], costs: &[f64], params: &SolverParams) -> Result<f64> {
    let q = params.q;
    let qm1 = q - 1.0;
    let kappa = params.kappa;
    let mut lo = f64::INFINITY;
    let mut smax = f64::NEG_INFINITY;
    let mut total_weight = 0.0;
    for j in 0..weights.len() {
        let s = costs[j] - other[j];
        lo = lo.min(s);
        smax = smax.max(s);
        total_weight += weights[j];
    }
    if !(lo.is_finite() && smax.is_finite() && total_weight > 0.0) {
        return Err(RotError::InvalidArgument(
            "row solve needs finite inputs and positive weight".into(),
        ));
    }
    // Phi(lo) = 0 < kappa; at hi every term exceeds kappa / total_weight.
    let mut hi = smax + (kappa / total_weight).powf(1.0 / qm1);
    let tol = params.row_tol();
    let mut t = hi;
    for _ in 0..params.newton_max_iters {
        let v = phi(t, other, weights, costs, qm1) - kappa;
        if v.abs() <= tol {
            return Ok(t);
        }
        if v > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        if hi - lo <= f64::EPSILON * (lo.abs() + hi.abs() + 1.0) {
            // bracket collapsed to machine precision
            return Ok(t);
        }
        let deriv = phi_derivative(t, other, weights, costs, q);
        let mut next = if deriv > 0.0 { t - v / deriv } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        t = next;
    }
    Err(RotError::RootNonConvergence {
        iters: params.newton_max_iters,
        lo,
        hi,
    })
}

/// Unique `t` with `sum_j (t + g_j - c_j)_+^{q-1} mu_j = kappa` for one
/// lambda-row.
pub fn update_f_row(
    _row_index: usize,
    g: &[f64],
    mu: &DiscreteMeasure,
    costs_row: &[f64],
    params: &SolverParams,
) -> Result<f64> {
    if g.len() != mu.n() || costs_row.len() != mu.n() {
        return Err(RotError::DimensionMismatch(format!(
            "row update: g has {}, costs {}, mu {}",
            g.len(),
            costs_row.len(),
            mu.n()
        )));
    }
    solve_row(g, &mu.weights, costs_row, params)
}

/// Residuals of the Schrödinger system at the given duals: per lambda-row
/// `sum_j (f_i + g_j - c_ij)_+^{q-1} mu_j - kappa` and symmetrically per
/// mu-column. Zero at a solver fixed point.
pub fn schrodinger_residual(
    duals: &DualPotentials,
    inst: &RotInstance,
    params: &SolverParams,
) -> (Vec<f64>, Vec<f64>) {
    let qm1 = params.q - 1.0;
    let n0 = inst.n0();
    let n1 = inst.n1();
    let res_f: Vec<f64> = (0..n0)
        .into_par_iter()
        .map_init(
            || vec![0.0; n1],
            |buf, i| {
                inst.costs.row_into(i, buf);
                phi(duals.f[i], &duals.g, &inst.mu.weights, buf, qm1) - params.kappa
            },
        )
        .collect();
    let res_g: Vec<f64> = (0..n1)
        .into_par_iter()
        .map_init(
            || vec![0.0; n0],
            |buf, j| {
                inst.costs.col_into(j, buf);
                phi(duals.g[j], &duals.f, &inst.lambda.weights, buf, qm1) - params.kappa
            },
        )
        .collect();
    (res_f, res_g)
}

/// Convergence diagnostics from `solve_dual`.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub iters: usize,
    /// Sup-norm residual, absolute.
    pub final_residual: f64,
    /// Sup-norm residual divided by kappa (the stopping quantity).
    pub final_residual_rel: f64,
    /// Per-outer-iteration sup-norm residuals.
    pub residual_trace: Vec<f64>,
}

/// Alternating row/column solves until the sup-norm residual drops below
/// `tol_residual * kappa`, then the mean-zero-f gauge is applied.
pub fn solve_dual(
    inst: &RotInstance,
    params: &SolverParams,
    init: Option<&DualPotentials>,
) -> Result<(DualPotentials, ConvergenceReport)> {
    let n0 = inst.n0();
    let n1 = inst.n1();
    let mut duals = match init {
        Some(d) => {
            if d.f.len() != n0 || d.g.len() != n1 {
                return Err(RotError::DimensionMismatch(format!(
                    "init duals sized ({}, {}), instance ({n0}, {n1})",
                    d.f.len(),
                    d.g.len()
                )));
            }
            d.clone()
        }
        None => DualPotentials::zeros(n0, n1),
    };
    let tol = params.tol_residual * params.kappa;
    let mut trace = Vec::new();
    for iter in 1..=params.max_outer_iters {
        // f-phase: rows are independent given g
        let f: Result<Vec<f64>> = (0..n0)
            .into_par_iter()
            .map_init(
                || vec![0.0; n1],
                |buf, i| {
                    inst.costs.row_into(i, buf);
                    solve_row(&duals.g, &inst.mu.weights, buf, params)
                },
            )
            .collect();
        duals.f = f?;
        // g-phase
        let g: Result<Vec<f64>> = (0..n1)
            .into_par_iter()
            .map_init(
                || vec![0.0; n0],
                |buf, j| {
                    inst.costs.col_into(j, buf);
                    solve_row(&duals.f, &inst.lambda.weights, buf, params)
                },
            )
            .collect();
        duals.g = g?;
        let (res_f, res_g) = schrodinger_residual(&duals, inst, params);
        let sup = res_f
            .iter()
            .chain(res_g.iter())
            .fold(0.0f64, |m, r| m.max(r.abs()));
        trace.push(sup);
        if sup <= tol {
            duals.apply_mean_zero_f(&inst.lambda);
            return Ok((
                duals,
                ConvergenceReport {
                    iters: iter,
                    final_residual: sup,
                    final_residual_rel: sup / params.kappa,
                    residual_trace: trace,
                },
            ));
        }
    }
    let last = trace.last().copied().unwrap_or(f64::INFINITY);
    Err(RotError::NonConvergence {
        iters: params.max_outer_iters,
        residual: last,
        tol,
        trace,
    })
}

/// Dual objective
/// `sum_i f_i lam_i + sum_j g_j mu_j - (1/(eps^{q-1} q^q)) sum_ij (f_i + g_j - c_ij)_+^q lam_i mu_j`.
pub fn dual_objective(duals: &DualPotentials, inst: &RotInstance, params: &SolverParams) -> f64 {
    let linear = duals.mean_f(&inst.lambda) + duals.mean_g(&inst.mu);
    let scale = 1.0 / (params.kappa * params.q); // eps^{q-1} q^q
    let n1 = inst.n1();
    let penalty: f64 = (0..inst.n0())
        .into_par_iter()
        .map_init(
            || vec![0.0; n1],
            |buf, i| {
                inst.costs.row_into(i, buf);
                let mut acc = 0.0;
                for j in 0..n1 {
                    acc += inst.mu.weights[j] * pos_pow(duals.f[i] + duals.g[j] - buf[j], params.q);
                }
                acc * inst.lambda.weights[i]
            },
        )
        .sum();
    linear - scale * penalty
}

/// Primal objective
/// `sum_ij c_ij rho_ij lam_i mu_j + eps sum_ij h_p(rho_ij) lam_i mu_j`.
pub fn primal_objective(plan: &PlanDensity, inst: &RotInstance, params: &SolverParams) -> f64 {
    let p = params.p;
    let n1 = inst.n1();
    let total: f64 = (0..inst.n0())
        .into_par_iter()
        .map_init(
            || vec![0.0; n1],
            |buf, i| {
                inst.costs.row_into(i, buf);
                let mut acc = 0.0;
                for j in 0..n1 {
                    let rho = plan.rho(i, j);
                    let h = if p == 2.0 {
                        rho * rho - 1.0
                    } else {
                        (rho.powf(p) - 1.0) / (p - 1.0)
                    };
                    acc += inst.mu.weights[j] * (buf[j] * rho + params.epsilon * h);
                }
                acc * inst.lambda.weights[i]
            },
        )
        .sum();
    total
}

/// Strong-duality gap between the primal and dual objectives.
///
/// The entropy `h_p` carries the additive constant `-1/(p-1)`; the dual
/// functional is conjugate to the penalty without that constant, so the
/// two optima differ by exactly `eps/(p-1) = eps (q-1)`. The gap reported
/// here accounts for the offset and is zero at an exact optimum.
pub fn strong_duality_gap(primal: f64, dual: f64, params: &SolverParams) -> f64 {
    primal + params.epsilon * (params.q - 1.0) - dual
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{uniform_grid_measure, CostKernel, Domain};
    use crate::plan::density;

    pub(crate) fn two_point_torus() -> DiscreteMeasure {
        let dom = Domain::torus(1).unwrap();
        let mut m = DiscreteMeasure::new(dom, vec![0.0, 0.5], vec![0.5, 0.5]).unwrap();
        m.cell_volume = Some(0.5);
        m
    }

    fn two_point_instance() -> RotInstance {
        let m = two_point_torus();
        let kernel = CostKernel::for_domain(m.domain.clone());
        RotInstance::new(m.clone(), m, kernel).unwrap()
    }

    #[test]
    fn params_derived_quantities() {
        let params = SolverParams::new(1e-3, 1.5).unwrap();
        assert!((params.q - 3.0).abs() < 1e-14);
        assert!((params.kappa - 1e-6 * 9.0).abs() < 1e-18);
        let params = SolverParams::new(0.01, 2.0).unwrap();
        assert!((params.kappa - 0.02).abs() < 1e-16);
        assert!(SolverParams::new(1e-3, 3.0).is_err());
        assert!(SolverParams::new(-1.0, 2.0).is_err());
    }

    #[test]
    fn row_update_single_atom_q2() {
        let dom = Domain::torus(1).unwrap();
        let mut mu = DiscreteMeasure::new(dom, vec![0.0], vec![1.0]).unwrap();
        mu.cell_volume = Some(1.0);
        let params = SolverParams::new(0.01, 2.0).unwrap();
        let t = update_f_row(0, &[0.0], &mu, &[0.0], &params).unwrap();
        assert!((t - params.kappa).abs() < 1e-14); // t = kappa = 2 eps
    }

    #[test]
    fn row_update_single_atom_q3() {
        let dom = Domain::torus(1).unwrap();
        let mu = DiscreteMeasure::new(dom, vec![0.3], vec![1.0]).unwrap();
        let params = SolverParams::new(0.01, 1.5).unwrap();
        let t = update_f_row(0, &[0.0], &mu, &[0.0], &params).unwrap();
        assert!((t - params.kappa.sqrt()).abs() < 1e-12); // t^2 = kappa
    }

    #[test]
    fn row_update_two_point_diagonal_only() {
        // g = 2 eps everywhere, row at x = 0 with the off-diagonal cost
        // large enough that only the diagonal term is active:
        // (1/2)(t + 2 eps)_+ = 2 eps, so t = 2 eps.
        let mu = two_point_torus();
        let eps = 0.01;
        let params = SolverParams::new(eps, 2.0).unwrap();
        let g = vec![2.0 * eps; 2];
        let costs = vec![0.0, 0.125];
        let t = update_f_row(0, &g, &mu, &costs, &params).unwrap();
        assert!((t - 2.0 * eps).abs() < 1e-14);
    }

    #[test]
    fn residual_all_minus_kappa_for_zero_duals() {
        let dom = Domain::torus(1).unwrap();
        let m = DiscreteMeasure::new(dom.clone(), vec![0.0, 0.5], vec![0.5, 0.5]).unwrap();
        let mut mu = m.clone();
        // shift mu so that every pairwise cost is strictly positive
        let mu_pts = vec![0.25, 0.75];
        mu = DiscreteMeasure::new(dom.clone(), mu_pts, mu.weights.clone()).unwrap();
        let inst = RotInstance::new(m, mu, CostKernel::for_domain(dom)).unwrap();
        let params = SolverParams::new(1e-3, 2.0).unwrap();
        let duals = DualPotentials::zeros(2, 2);
        let (rf, rg) = schrodinger_residual(&duals, &inst, &params);
        for r in rf.iter().chain(rg.iter()) {
            assert!((r + params.kappa).abs() < 1e-18);
        }
    }

    #[test]
    fn solve_two_point_fixture() {
        let inst = two_point_instance();
        let eps = 0.01;
        let params = SolverParams::new(eps, 2.0).unwrap();
        let (mut duals, report) = solve_dual(&inst, &params, None).unwrap();
        assert!(report.final_residual_rel <= params.tol_residual);
        // symmetric split gives f = g = 2 eps = 0.02
        duals.apply_symmetric(&inst.lambda, &inst.mu);
        for v in duals.f.iter().chain(duals.g.iter()) {
            assert!((v - 0.02).abs() < 1e-12, "got {v}");
        }
        // residual at the solution
        let (rf, rg) = schrodinger_residual(&duals, &inst, &params);
        for r in rf.iter().chain(rg.iter()) {
            assert!(r.abs() <= 1e-14_f64.max(1e-12 * params.kappa));
        }
    }

    #[test]
    fn solve_single_atom_gauge() {
        let dom = Domain::torus(1).unwrap();
        let m = DiscreteMeasure::new(dom.clone(), vec![0.0], vec![1.0]).unwrap();
        let inst = RotInstance::new(m.clone(), m, CostKernel::for_domain(dom)).unwrap();
        let params = SolverParams::new(0.01, 2.0).unwrap();
        let (duals, _) = solve_dual(&inst, &params, None).unwrap();
        // mean-zero-f gauge: f = 0, g = kappa^{1/(q-1)}
        assert!(duals.f[0].abs() < 1e-14);
        assert!((duals.g[0] - params.kappa).abs() < 1e-14);
    }

    #[test]
    fn dual_objective_examples() {
        // f = g = 0 with positive costs: everything vanishes
        let dom = Domain::torus(1).unwrap();
        let lam = DiscreteMeasure::new(dom.clone(), vec![0.0], vec![1.0]).unwrap();
        let mu = DiscreteMeasure::new(dom.clone(), vec![0.5], vec![1.0]).unwrap();
        let inst = RotInstance::new(lam, mu, CostKernel::for_domain(dom.clone())).unwrap();
        let params = SolverParams::new(0.01, 2.0).unwrap();
        assert_eq!(dual_objective(&DualPotentials::zeros(1, 1), &inst, &params), 0.0);

        // single atom at its solution (q = 2): 2 eps - (2 eps)^2/(4 eps) = eps
        let m = DiscreteMeasure::new(dom.clone(), vec![0.0], vec![1.0]).unwrap();
        let inst = RotInstance::new(m.clone(), m, CostKernel::for_domain(dom)).unwrap();
        let (duals, _) = solve_dual(&inst, &params, None).unwrap();
        let dv = dual_objective(&duals, &inst, &params);
        assert!((dv - params.epsilon).abs() < 1e-14);

        // two-point instance at its solution: 4 eps - (1/(4 eps)) (1/2)(4 eps)^2 = 2 eps
        let inst = two_point_instance();
        let (duals, _) = solve_dual(&inst, &params, None).unwrap();
        let dv = dual_objective(&duals, &inst, &params);
        assert!((dv - 2.0 * params.epsilon).abs() < 1e-13);
    }

    #[test]
    fn strong_duality_on_two_point() {
        let inst = two_point_instance();
        let params = SolverParams::new(0.01, 2.0).unwrap();
        let (duals, _) = solve_dual(&inst, &params, None).unwrap();
        let plan = density(&duals, &inst, &params);
        let primal = primal_objective(&plan, &inst, &params);
        let dual = dual_objective(&duals, &inst, &params);
        let gap = strong_duality_gap(primal, dual, &params);
        assert!(gap >= -1e-9 && gap <= 1e-6 * (1.0 + dual.abs()), "gap {gap}");
        // exact values: primal = eps, dual = 2 eps, offset eps (q - 1) = eps
        assert!((primal - 0.01).abs() < 1e-13);
        assert!((dual - 0.02).abs() < 1e-13);
    }

    #[test]
    fn gauge_invariance_of_solution() {
        let dom = Domain::torus(1).unwrap();
        let grid = uniform_grid_measure(&dom, &[16]).unwrap();
        let inst =
            RotInstance::new(grid.clone(), grid, CostKernel::for_domain(dom)).unwrap();
        let params = SolverParams::new(5e-3, 2.0).unwrap();
        let (base, _) = solve_dual(&inst, &params, None).unwrap();
        let mut shifted = DualPotentials::zeros(inst.n0(), inst.n1());
        for f in &mut shifted.f {
            *f += 0.37;
        }
        for g in &mut shifted.g {
            *g -= 0.37;
        }
        let (from_shifted, _) = solve_dual(&inst, &params, Some(&shifted)).unwrap();
        for (a, b) in base.f.iter().zip(&from_shifted.f) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in base.g.iter().zip(&from_shifted.g) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn nonconvergence_reports_trace() {
        let dom = Domain::torus(1).unwrap();
        let grid = uniform_grid_measure(&dom, &[32]).unwrap();
        let inst = RotInstance::new(grid.clone(), grid, CostKernel::for_domain(dom)).unwrap();
        let mut params = SolverParams::new(1e-3, 1.5).unwrap();
        params.max_outer_iters = 0;
        match solve_dual(&inst, &params, None) {
            Err(RotError::NonConvergence { iters, .. }) => assert_eq!(iters, 0),
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }

    #[test]
    fn phi_is_monotone_at_row_solution() {
        let mu = two_point_torus();
        let params = SolverParams::new(0.01, 1.5).unwrap();
        let g = vec![0.01, 0.02];
        let costs = vec![0.0, 0.125];
        let t = update_f_row(0, &g, &mu, &costs, &params).unwrap();
        let qm1 = params.q - 1.0;
        let at = |t: f64| phi(t, &g, &mu.weights, &costs, qm1);
        assert!((at(t) - params.kappa).abs() <= 1e-12 * params.kappa + 1e-14);
        assert!(at(t - 1e-6) <= at(t) && at(t) <= at(t + 1e-6));
    }
}
