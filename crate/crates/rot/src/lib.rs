//! L^p-entropy regularized optimal transport on discretized marginals.
//!
//! The crate solves the dual Schrödinger system of the regularized
//! problem, reconstructs the primal plan density, and measures the local
//! geometry of the plan's support (sections, barycentric maps, Hessians).
//! A closed-form oracle for uniform self-transport on the flat torus
//! anchors correctness, and the rate harness sweeps epsilon to verify the
//! predicted sparsity, value, and map-convergence rates.

pub mod cli;
pub mod dual_solver;
pub mod error;
pub mod measures;
pub mod numerics;
pub mod plan;
pub mod rate_harness;
pub mod torus_oracle;

pub use dual_solver::{
    dual_objective, primal_objective, schrodinger_residual, solve_dual, strong_duality_gap,
    update_f_row, ConvergenceReport, CostTable, DualPotentials, Gauge, RotInstance, SolverParams,
};
pub use error::{Result, RotError};
pub use measures::{
    cosine_perturbed_torus_measure, cost, h_p, is_interior, torus_delta, uniform_grid_measure,
    CostKernel, CostKind, DiscreteMeasure, Domain,
};
pub use plan::{
    barycentric_map, density, grad_phi, grad_phi_all, grad_psi, hessian_phi, max_xi, section,
    section_dual, strong_convexity_lambda_min, xi, HessianMethod, PlanDensity, Section,
};
pub use torus_oracle::{c_eps_closed_form, c_eps_quadrature, oracle_density, TorusSolution};
