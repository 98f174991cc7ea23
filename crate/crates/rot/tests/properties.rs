//! Randomized property tests for the library's algebraic invariants.

use proptest::prelude::*;

use rot::dual_solver::{update_f_row, DualPotentials, Gauge, RotInstance, SolverParams};
use rot::measures::{
    cost, h_p, torus_delta, uniform_grid_measure, CostKernel, DiscreteMeasure, Domain,
};
use rot::plan::{density, xi};
use rot::rate_harness::fit_loglog;

proptest! {
    #[test]
    fn cost_is_symmetric_and_shift_invariant(
        d in 1usize..=3,
        seed in prop::collection::vec(0.0..1.0f64, 9),
    ) {
        let x = &seed[0..d];
        let y = &seed[3..3 + d];
        let s = &seed[6..6 + d];
        let kernel = CostKernel::for_domain(Domain::torus(d).unwrap());
        let c_xy = cost(x, y, &kernel).unwrap();
        let c_yx = cost(y, x, &kernel).unwrap();
        prop_assert!((c_xy - c_yx).abs() <= 1e-12 * (1.0 + c_xy.abs()));
        let xs: Vec<f64> = x.iter().zip(s).map(|(a, b)| (a + b).rem_euclid(1.0)).collect();
        let ys: Vec<f64> = y.iter().zip(s).map(|(a, b)| (a + b).rem_euclid(1.0)).collect();
        let c_shift = cost(&xs, &ys, &kernel).unwrap();
        prop_assert!((c_xy - c_shift).abs() <= 1e-12 * (1.0 + c_xy.abs()));
    }

    #[test]
    fn torus_delta_is_a_representative(v in -10.0..10.0f64) {
        let r = torus_delta(v);
        prop_assert!((-0.5..0.5 + 1e-15).contains(&r));
        // differs from v by an integer
        prop_assert!(((v - r) - (v - r).round()).abs() < 1e-9);
    }

    #[test]
    fn h_p_is_convex_and_normalized(
        p in 1.0001..=2.0f64,
        z1 in 0.0..10.0f64,
        z2 in 0.0..10.0f64,
        t in 0.0..1.0f64,
    ) {
        prop_assert!(h_p(1.0, p).unwrap().abs() < 1e-12);
        let lhs = h_p(t * z1 + (1.0 - t) * z2, p).unwrap();
        let rhs = t * h_p(z1, p).unwrap() + (1.0 - t) * h_p(z2, p).unwrap();
        prop_assert!(lhs <= rhs + 1e-10);
    }

    #[test]
    fn fit_loglog_recovers_power_laws(
        slope in -2.0..2.0f64,
        amp in 0.1..10.0f64,
        decades in prop::collection::vec(0.3..1.0f64, 4),
    ) {
        let mut e = 0.1f64;
        let mut pairs = vec![(e, amp * e.powf(slope))];
        for step in decades {
            e *= 10f64.powf(-step);
            pairs.push((e, amp * e.powf(slope)));
        }
        let fit = fit_loglog(&pairs, slope, 1e-6, false, "synthetic").unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-9);
        prop_assert!((fit.intercept - amp.ln()).abs() < 1e-8);
        prop_assert!(fit.pass);
    }

    #[test]
    fn plan_support_is_positive_slack(
        n in 2usize..=8,
        seed in prop::collection::vec(0.0..1.0f64, 32),
        p in 1.1..=2.0f64,
        log_eps in -4.0..-1.0f64,
    ) {
        let dom = Domain::torus(1).unwrap();
        let pts: Vec<f64> = seed[..n].to_vec();
        let mut w: Vec<f64> = seed[8..8 + n].iter().map(|v| 0.1 + v).collect();
        let total: f64 = w.iter().sum();
        for v in &mut w { *v /= total; }
        let meas = DiscreteMeasure::new(dom.clone(), pts, w).unwrap();
        let inst = RotInstance::new(meas.clone(), meas, CostKernel::for_domain(dom)).unwrap();
        let params = SolverParams::new(10f64.powf(log_eps), p).unwrap();
        let duals = DualPotentials {
            f: seed[16..16 + n].iter().map(|v| 0.2 * v - 0.1).collect(),
            g: seed[24..24 + n].iter().map(|v| 0.2 * v - 0.1).collect(),
            gauge: Gauge::None,
        };
        let plan = density(&duals, &inst, &params);
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(plan.rho(i, j) > 0.0, xi(i, j, &duals, &inst) > 0.0);
            }
        }
    }

    #[test]
    fn row_update_satisfies_its_equation(
        m in 2usize..=16,
        p in 1.1..=2.0f64,
        log_eps in -4.0..-1.5f64,
        gshift in -0.05..0.05f64,
    ) {
        let dom = Domain::torus(1).unwrap();
        let mu = uniform_grid_measure(&dom, &[m]).unwrap();
        let params = SolverParams::new(10f64.powf(log_eps), p).unwrap();
        let kernel = CostKernel::for_domain(dom);
        let x = [0.3];
        let costs: Vec<f64> = (0..m).map(|j| kernel.eval(&x, mu.point(j))).collect();
        let g = vec![gshift; m];
        let t = update_f_row(0, &g, &mu, &costs, &params).unwrap();
        // plug back in
        let lhs: f64 = (0..m)
            .map(|j| {
                let s = t + g[j] - costs[j];
                if s > 0.0 { s.powf(params.q - 1.0) * mu.weights[j] } else { 0.0 }
            })
            .sum();
        prop_assert!(
            (lhs - params.kappa).abs() <= 1e-9 * params.kappa + 1e-14,
            "residual {} at kappa {}", lhs - params.kappa, params.kappa
        );
    }

    #[test]
    fn grid_measures_normalize(
        d in 1usize..=3,
        m in 2usize..=6,
    ) {
        let dom = Domain::torus(d).unwrap();
        let meas = uniform_grid_measure(&dom, &vec![m; d]).unwrap();
        let total: f64 = meas.weights.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!((meas.cell_volume.unwrap() * meas.n() as f64 - 1.0).abs() < 1e-12);
    }
}
