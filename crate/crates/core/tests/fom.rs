use std::f64::consts::PI;

use ddrom::linalg::norm2;
use ddrom::mesh_fom::*;
use ddrom::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_param(p: &FomProblem, rng: &mut ChaCha8Rng) -> [f64; 2] {
    let d = p.param_domain;
    [rng.random_range(d.lo[0]..=d.hi[0]), rng.random_range(d.lo[1]..=d.hi[1])]
}

/// Central differences of the residual, column by column.
fn fd_jacobian_check(p: &FomProblem, x: &[f64], mu: [f64; 2]) -> f64 {
    let h = 1e-6;
    let jac = p.jacobian(x, mu).unwrap().to_dense();
    let scale = jac.amax();
    let mut worst = 0.0f64;
    let mut xp = x.to_vec();
    for c in 0..p.n() {
        let step = h * (1.0 + x[c].abs());
        xp[c] = x[c] + step;
        let rp = p.residual(&xp, mu).unwrap();
        xp[c] = x[c] - step;
        let rm = p.residual(&xp, mu).unwrap();
        xp[c] = x[c];
        for r in 0..p.n() {
            let fd = (rp[r] - rm[r]) / (2.0 * step);
            worst = worst.max((fd - jac[(r, c)]).abs() / scale);
        }
    }
    worst
}

#[test]
fn heat_jacobian_matches_finite_differences() {
    let p = FomProblem::heat(6, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let mu = random_param(&p, &mut rng);
        let x: Vec<f64> = (0..p.n()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let err = fd_jacobian_check(&p, &x, mu);
        assert!(err <= 1e-5, "relative mismatch {err:e} at {mu:?}");
    }
}

#[test]
fn burgers_jacobian_matches_finite_differences() {
    let p = FomProblem::burgers(8, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let mu = random_param(&p, &mut rng);
        let x: Vec<f64> = (0..p.n()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let err = fd_jacobian_check(&p, &x, mu);
        assert!(err <= 1e-5, "relative mismatch {err:e} at {mu:?}");
    }
}

#[test]
fn heat_zero_state_residual_is_negative_load() {
    // Exact integral of the load against a bilinear hat function, separable in x and y.
    let nx = 40;
    let p = FomProblem::heat(nx, nx);
    let h = 1.0 / nx as f64;
    let w = 2.0 * PI;
    let hat = |t: f64| (2.0 - 2.0 * (w * h).cos()) * (w * t).sin() / (w * w * h);
    for mu in [[0.5, 0.5], [10.0, 0.01]] {
        let r = p.residual(&vec![0.0; p.n()], mu).unwrap();
        let load: Vec<f64> = (0..p.n())
            .map(|k| {
                let (i, j) = p.dof_grid(k);
                let (x, y) = p.mesh.coords(i, j);
                100.0 * hat(x) * hat(y)
            })
            .collect();
        let diff: Vec<f64> = r.iter().zip(&load).map(|(a, b)| a + b).collect();
        assert!(norm2(&diff) <= 1e-3 * norm2(&load));
    }
}

#[test]
fn heat_zero_state_jacobian_is_stiffness_plus_scaled_mass() {
    let p = FomProblem::heat(6, 6);
    let x = vec![0.0; p.n()];
    let j1 = p.jacobian(&x, [1.0, 3.0]).unwrap().to_dense();
    let j2 = p.jacobian(&x, [2.0, 7.0]).unwrap().to_dense();
    let j4 = p.jacobian(&x, [4.0, 0.5]).unwrap().to_dense();
    // J(0) = K + mu1 M, so it is affine in mu1 and independent of mu2.
    let mass = &j2 - &j1;
    assert!((&j4 - &j2 - &mass * 2.0).amax() < 1e-12);
    let stiff = &j1 - &mass;
    assert!((&stiff - stiff.transpose()).amax() < 1e-12);
    assert!(mass.iter().all(|&v| v >= -1e-15));
    // The center node has no Dirichlet neighbors, so its stiffness row sums to zero.
    let row_sum: f64 = stiff.row(p.n() / 2).iter().sum();
    assert!(row_sum.abs() < 1e-12);
}

#[test]
fn linear_heat_converges_in_one_iteration() {
    let p = FomProblem::heat(20, 20).with_param_domain(ParamDomain::new([0.0, 0.01], [10.0, 10.0]));
    let sol = newton_solve(&p, [0.0, 3.0], &vec![0.0; p.n()], &NewtonOptions::default()).unwrap();
    assert_eq!(sol.newton_iters, 1);
}

#[test]
fn heat_solution_has_four_alternating_lobes() {
    let p = FomProblem::heat_coarse();
    let sol = newton_solve(&p, [1.0, 1.0], &vec![0.0; p.n()], &NewtonOptions::default()).unwrap();
    let field = p.full_field(&sol.x, [1.0, 1.0]).unwrap();
    let at = |x: f64, y: f64| {
        let (i, j) = ((x * 40.0).round() as usize, (y * 40.0).round() as usize);
        field[0][j * 41 + i]
    };
    assert!(at(0.25, 0.25) > 0.0);
    assert!(at(0.75, 0.25) < 0.0);
    assert!(at(0.25, 0.75) < 0.0);
    assert!(at(0.75, 0.75) > 0.0);
    let peak = field[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!((at(0.25, 0.25).abs() - peak).abs() < 0.05 * peak);
}

#[test]
fn newton_residual_history_is_nonincreasing() {
    let p = FomProblem::burgers(60, 12);
    let sol = newton_solve(&p, [7692.5384, 21.9230], &vec![0.0; p.n()], &NewtonOptions::default()).unwrap();
    for w in sol.residual_history.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

#[test]
fn newton_reports_nonconvergence() {
    let p = FomProblem::burgers(30, 6);
    let opts = NewtonOptions {
        max_iters: 1,
        ..NewtonOptions::default()
    };
    let err = newton_solve(&p, [5000.0, 20.0], &vec![0.0; p.n()], &opts).unwrap_err();
    assert!(matches!(err, Error::NonConvergence { iters: 1, .. }));
}

#[test]
fn parameter_outside_domain_rejected() {
    let p = FomProblem::heat(4, 4);
    assert!(matches!(
        p.residual(&vec![0.0; p.n()], [11.0, 1.0]),
        Err(Error::ParameterOutOfDomain(..))
    ));
}

#[test]
fn burgers_exact_regression_value() {
    // Frozen from an independent symbolic evaluation of the Cole-Hopf solution.
    let (u1, u2) = burgers_exact(0.0, 0.025, [100.0, 10.0], &BurgersConstants::default()).unwrap();
    assert!((u1 - 1.989_739_619_148_432_8).abs() < 1e-13);
    assert!((u2 - 0.508_302_112_202_325_96).abs() < 1e-13);
}

#[test]
fn burgers_exact_bottom_edge_is_horizontal() {
    let c = BurgersConstants::default();
    for x1 in [-1.0, -0.3, 0.0, 0.7, 1.0] {
        assert_eq!(burgers_exact(x1, 0.0, [50.0, 12.0], &c).unwrap().1, 0.0);
    }
}

fn exact_state_residual(nx: usize, ny: usize, mu: [f64; 2]) -> f64 {
    let p = FomProblem::burgers(nx, ny);
    let r = p.residual(&p.burgers_exact_state(mu).unwrap(), mu).unwrap();
    r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[test]
fn burgers_truncation_residual_decreases_along_x() {
    let mu = [7692.5384, 21.9230];
    let norms: Vec<f64> = [30, 60, 120].iter().map(|&nx| exact_state_residual(nx, 12, mu)).collect();
    assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
}

#[test]
fn burgers_truncation_residual_is_second_order() {
    // Both spacings must shrink; with a fixed vertical spacing the error saturates.
    let orders = |mu: [f64; 2], meshes: &[(usize, usize)]| -> Vec<f64> {
        let norms: Vec<f64> = meshes.iter().map(|&(nx, ny)| exact_state_residual(nx, ny, mu)).collect();
        norms.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
    };
    let smooth = orders([100.0, 10.0], &[(60, 6), (120, 12), (240, 24)]);
    assert!(smooth.iter().all(|&o| o >= 1.9), "{smooth:?}");
    // The boundary layer of the stiff case is resolved only on finer grids.
    let stiff = orders([7692.5384, 21.9230], &[(480, 48), (960, 96)]);
    assert!(stiff[0] >= 1.8, "{stiff:?}");
}

#[test]
fn burgers_full_field_honors_dirichlet_data() {
    let p = FomProblem::burgers(10, 4);
    let mu = [300.0, 9.0];
    let x = vec![0.25; p.n()];
    let field = p.full_field(&x, mu).unwrap();
    let m = &p.mesh;
    for j in 0..=m.ny {
        for i in 0..=m.nx {
            let k = j * (m.nx + 1) + i;
            if m.is_boundary(i, j) {
                let (x1, x2) = m.coords(i, j);
                let (u1, u2) = burgers_exact(x1, x2, mu, &p.burgers).unwrap();
                assert_eq!((field[0][k], field[1][k]), (u1, u2));
            } else {
                assert_eq!((field[0][k], field[1][k]), (0.25, 0.25));
            }
        }
    }
}

#[test]
fn assembly_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for p in [FomProblem::heat(12, 9), FomProblem::burgers(16, 6)] {
        let x: Vec<f64> = (0..p.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mu = random_param(&p, &mut rng);
        let (r1, j1) = p.residual_and_jacobian(&x, mu).unwrap();
        let (r2, j2) = p.clone().residual_and_jacobian(&x, mu).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(j1.values(), j2.values());
    }
}

#[test]
fn sampled_rows_match_full_evaluation() {
    let p = FomProblem::burgers(12, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x: Vec<f64> = (0..p.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mu = [800.0, 14.0];
    let (r, j) = p.residual_and_jacobian(&x, mu).unwrap();
    let rows = [0, 7, 31, 64, p.n() - 1];
    let ev = p.evaluate(&p.row_plan(&rows), &x, mu, true).unwrap();
    let js = ev.jacobian.unwrap();
    for (k, &row) in rows.iter().enumerate() {
        assert_eq!(ev.residual[k], r[row]);
        for c in 0..p.n() {
            assert_eq!(js.get(k, c), j.get(row, c));
        }
    }
}

#[test]
fn dof_counts() {
    assert_eq!(FomProblem::heat_coarse().n(), 1521);
    assert_eq!(FomProblem::heat_fine().n(), 6241);
    assert_eq!(FomProblem::burgers_coarse().n(), 2618);
    let fine = FomProblem::burgers_fine();
    assert_eq!(fine.n(), 5258);
    let j = fine.jacobian(&vec![0.0; fine.n()], [7692.5384, 21.9230]).unwrap();
    assert_eq!((j.nrows(), j.ncols()), (5258, 5258));
}
