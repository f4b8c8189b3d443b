//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.

mod common;

use std::io::Write;

use common::*;
use ddrom::bases::BasisKind;
use ddrom::harness::*;
use ddrom::hyper::{greedy_sample_mesh, SeedRule};
use ddrom::mesh_fom::{newton_solve, FomProblem, NewtonOptions};
use ddrom::sqp::*;
use ddrom::training::run_top_down;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BURGERS_MU: [f64; 2] = [7692.5384, 21.9230];
const HEAT_MU: [f64; 2] = [5.005, 5.005];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|e| e * e).sum::<f64>().sqrt()
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b)
}

fn fom(p: &FomProblem, mu: [f64; 2]) -> Vec<f64> {
    newton_solve(p, mu, &vec![0.0; p.n()], &NewtonOptions::default()).unwrap().x
}

fn spec(method: Method, basis: BasisKind, constraint: ConstraintSpec, upsilon: f64) -> RunSpec {
    RunSpec {
        method,
        basis,
        constraint,
        upsilon_state: upsilon,
        upsilon_bnd: upsilon,
        upsilon_res: 1e-12,
        ratio: 2.0,
        seed: 0,
        seed_rule: SeedRule::BlockCorners,
    }
}

fn burgers_error(nx: usize, ny: usize) -> f64 {
    let p = FomProblem::burgers(nx, ny);
    rel_diff(&fom(&p, BURGERS_MU), &p.burgers_exact_state(BURGERS_MU).unwrap())
}

fn fom_fidelity() -> Outcome {
    let fine = burgers_error(240, 12);
    let errs: Vec<f64> = [(60, 6), (120, 12), (240, 24)].iter().map(|&(nx, ny)| burgers_error(nx, ny)).collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let pass = fine <= 5e-2 && orders.iter().all(|&o| o >= 1.8);
    outcome(pass, format!("240x12 error {fine:.3e} (<= 5e-2); refinement orders {orders:.3?} (>= 1.8)"))
}

fn exact_reproduction() -> Outcome {
    let p = FomProblem::heat_coarse();
    let store = run_top_down(&p, 5, 5, &NewtonOptions::default()).unwrap();
    let mu = store.params[12];
    let reference = store.states.column(12).as_slice().to_vec();
    let off = Offline::new(p, (2, 2), &store).unwrap();
    let s = spec(Method::DdLspg, BasisKind::Port, ConstraintSpec::Strong, 0.0);
    let out = run_online(&off, &s, mu, &reference, &SqpOptions::default(), 1).unwrap();
    let e = out.record.rel_err;
    outcome(e <= 1e-6, format!("relative error {e:.3e} at training point {mu:?} (<= 1e-6)"))
}

struct HeatCoarse {
    off: Offline,
    reference: Vec<f64>,
}

impl HeatCoarse {
    fn new() -> Self {
        let p = FomProblem::heat_coarse();
        let store = run_top_down(&p, 20, 20, &NewtonOptions::default()).unwrap();
        let reference = fom(&p, HEAT_MU);
        Self {
            off: Offline::new(p, (2, 2), &store).unwrap(),
            reference,
        }
    }

    fn run(&self, s: &RunSpec, repeats: usize) -> ddrom::Result<RunOutcome> {
        run_online(&self.off, s, HEAT_MU, &self.reference, &SqpOptions::default(), repeats)
    }

    fn error(&self, s: &RunSpec) -> f64 {
        self.run(s, 1).map(|o| o.record.rel_err).unwrap_or(f64::INFINITY)
    }
}

fn accuracy_band(h: &HeatCoarse) -> Outcome {
    let strong = ConstraintSpec::Strong;
    let port = h.error(&spec(Method::DdLspg, BasisKind::Port, strong, 1e-5));
    let fi = h.error(&spec(Method::DdLspg, BasisKind::FullInterface, strong, 1e-5));
    let fs = h.error(&spec(Method::DdLspg, BasisKind::FullSubdomain, strong, 1e-5));
    let pass = port <= 1e-2 && fi >= 0.1 && fs >= 0.1;
    outcome(
        pass,
        format!("port {port:.3e} (<= 1e-2); full-interface {fi:.3e}, full-subdomain {fs:.3e} (>= 0.1)"),
    )
}

fn weak_rescue(h: &HeatCoarse) -> Outcome {
    let strong = h.error(&spec(Method::DdLspg, BasisKind::FullInterface, ConstraintSpec::Strong, 1e-5));
    let weak: f64 = (0..5)
        .map(|seed| {
            let mut s = spec(Method::DdLspg, BasisKind::FullInterface, ConstraintSpec::Weak(1), 1e-5);
            s.seed = seed;
            h.error(&s)
        })
        .sum::<f64>()
        / 5.0;
    outcome(
        weak * 10.0 <= strong,
        format!("weak(1) mean {weak:.3e} vs strong {strong:.3e}; ratio {:.1} (>= 10)", strong / weak),
    )
}

fn gnat_consistency(h: &HeatCoarse) -> Outcome {
    let lspg = h.error(&spec(Method::DdLspg, BasisKind::Port, ConstraintSpec::Strong, 1e-5));
    let gnat = h.error(&spec(Method::DdGnat, BasisKind::Port, ConstraintSpec::Strong, 1e-5));
    let pass = gnat <= 3.0 * lspg && lspg <= 3.0 * gnat;
    outcome(pass, format!("DD-GNAT {gnat:.3e} vs DD-LSPG {lspg:.3e} (within 3x)"))
}

fn greedy_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let single: Vec<Vec<usize>> = (0..4).map(|l| vec![l]).collect();
    let paired: Vec<Vec<usize>> = (0..4).map(|l| vec![2 * l, 2 * l + 1]).collect();
    let (mut cases, mut bad) = (0, 0);
    for _ in 0..100 {
        for nodes in [&single, &paired] {
            let phi = random_matrix(&mut rng, nodes.len() * nodes[0].len(), 2);
            for (n_s, corners) in [(3, vec![]), (2, vec![]), (3, vec![2]), (4, vec![1]), (4, vec![])] {
                for n_w in 1..=2 {
                    let got = greedy_sample_mesh(&phi, nodes, n_s, n_w, &corners).unwrap();
                    let ok = got == brute_force_greedy(&phi, nodes, n_s, n_w, &corners)
                        && got.len() == n_s
                        && corners.iter().all(|c| got.contains(c));
                    cases += 1;
                    bad += usize::from(!ok);
                }
            }
        }
    }
    outcome(bad == 0, format!("{cases} toy instances, {bad} mismatches"))
}

fn stacked(y: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(y.iter().map(|b| b.len()).sum(), y.iter().flat_map(|b| b.iter().copied()))
}

fn sqp_correctness(h: &HeatCoarse) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = SqpOptions {
        tol: 1e-12,
        ..SqpOptions::default()
    };
    let (mut worst_y, mut worst_kkt, mut worst_it) = (0.0f64, 0.0f64, 0);
    for _ in 0..20 {
        let m = rng.random_range(2..=4);
        let dims: Vec<usize> = (0..m).map(|_| rng.random_range(2..=12)).collect();
        let total: usize = dims.iter().sum();
        let nc = rng.random_range(1..total.min(12));
        let p = RandomLsq::new(&mut rng, &dims, nc, 0.3, 0.01);
        let y0: Vec<DVector<f64>> = dims.iter().map(|&d| DVector::zeros(d)).collect();
        let res = sqp_solve(&p, &y0, &DVector::zeros(nc), &opts).unwrap();
        worst_y = worst_y.max((stacked(&res.y) - nullspace_oracle(&p, 1e-12)).amax());
        worst_kkt = worst_kkt.max(assemble_kkt(&p, &res.y, &res.lambda).unwrap().kkt_norm());
        worst_it = worst_it.max(res.iterations);
    }
    let heat = h
        .run(&spec(Method::DdGnat, BasisKind::Port, ConstraintSpec::Strong, 1e-5), 1)
        .map(|o| o.iterations)
        .unwrap_or(usize::MAX);
    let bp = FomProblem::burgers_coarse();
    let store = run_top_down(&bp, 20, 20, &NewtonOptions::default()).unwrap();
    let off = Offline::new(bp.clone(), (4, 2), &store).unwrap();
    let reference = fom(&bp, BURGERS_MU);
    let mut s = spec(Method::DdGnat, BasisKind::Port, ConstraintSpec::Strong, 1e-4);
    s.upsilon_res = 1e-14;
    let burgers = run_online(&off, &s, BURGERS_MU, &reference, &SqpOptions::default(), 1)
        .map(|o| o.iterations)
        .unwrap_or(usize::MAX);
    let pass = worst_y <= 1e-8 && worst_kkt <= 1e-8 && heat <= 20 && burgers <= 20;
    outcome(
        pass,
        format!(
            "random: max |y - oracle| {worst_y:.1e}, max KKT {worst_kkt:.1e}, max iters {worst_it}; \
             ROM iterations heat {heat}, Burgers {burgers} (<= 20)"
        ),
    )
}

fn bound_structure(h: &HeatCoarse) -> Outcome {
    // Forty truncation levels from 1e-2 to 1e-9; even runs fit, odd runs are held out.
    let mut pairs = Vec::new();
    for k in 0..40 {
        let upsilon = 10f64.powf(-2.0 - 7.0 * k as f64 / 39.0);
        let o = h
            .run(&spec(Method::DdLspg, BasisKind::Port, ConstraintSpec::Strong, upsilon), 1)
            .unwrap();
        let g = reconstruct_global(&o.solution, &h.off.decomposition, ReconstructMode::PortAverage).unwrap();
        let err: Vec<f64> = g.x.iter().zip(&h.reference).map(|(a, b)| a - b).collect();
        pairs.push((norm(&err), o.aposteriori));
    }
    let c_hat = pairs.iter().step_by(2).map(|&(e, r)| e / r).fold(0.0, f64::max);
    let violations = pairs.iter().skip(1).step_by(2).filter(|&&(e, r)| e > c_hat * r).count();
    outcome(
        violations == 0,
        format!("fitted constant {c_hat:.3e}; {violations} violations on 20 held-out runs"),
    )
}

fn cost_checks() -> Outcome {
    let uniform = |n: usize, ni: usize, ng: usize, n_a: usize| CostDims {
        subdomains: vec![
            SubdomainDims {
                n_hat_interior: ni,
                n_hat_interface: ng,
                ..Default::default()
            };
            n
        ],
        n_a,
    };
    let detailed = CostDims {
        subdomains: vec![SubdomainDims {
            n_hat_interior: 2,
            n_hat_interface: 1,
            n_s_interior: 5,
            n_s_interface: 3,
            n_s_residual: 4,
            n_b: 2,
            c_r: 10.0,
            c_j: 20.0,
            w_interior: 3.0,
            w_interface: 2.0,
            dense_weighting: true,
        }],
        n_a: 1,
    };
    let port = cost_model(&uniform(4, 3, 2, 12), BasisKind::Port);
    let full = cost_model(&uniform(4, 3, 3, 2), BasisKind::FullSubdomain);
    let d = cost_model(&detailed, BasisKind::Port);
    let checks = [
        ("step 4", port.step4, 96.0),
        ("port solve", port.step5, 32768.0 / 3.0),
        ("full-subdomain solve", full.step5, 2744.0 / 3.0),
        ("step 1", d.step1[0], 26.0),
        ("step 2", d.step2[0], 252.0),
    ];
    let bad: Vec<&str> = checks
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > 1e-12 * want)
        .map(|c| c.0)
        .collect();
    outcome(bad.is_empty(), format!("5 tuples, mismatches {bad:?}"))
}

fn speedup_trend(h: &HeatCoarse) -> Outcome {
    let (_, t_fom) = time_fom(&h.off.problem, HEAT_MU, &NewtonOptions::default(), 5).unwrap();
    let lspg = h.run(&spec(Method::DdLspg, BasisKind::Port, ConstraintSpec::Strong, 1e-5), 5).unwrap();
    let gnat = h.run(&spec(Method::DdGnat, BasisKind::Port, ConstraintSpec::Strong, 1e-5), 5).unwrap();
    let (tl, tg) = (lspg.record.t_total, gnat.record.t_total);
    outcome(
        tg < tl && tl < t_fom,
        format!("DD-GNAT {tg:.2e}s < DD-LSPG {tl:.2e}s < FOM {t_fom:.2e}s"),
    )
}

#[test]
fn acceptance_criteria() {
    let mut results = vec![
        ("1 FOM fidelity", fom_fidelity()),
        ("2 exact reproduction", exact_reproduction()),
    ];
    let h = HeatCoarse::new();
    results.push(("3 accuracy band", accuracy_band(&h)));
    results.push(("4 weak-constraint rescue", weak_rescue(&h)));
    results.push(("5 DD-GNAT consistency", gnat_consistency(&h)));
    results.push(("6 greedy oracle", greedy_oracle()));
    results.push(("7 SQP correctness", sqp_correctness(&h)));
    results.push(("8 bound structure", bound_structure(&h)));
    results.push(("9 cost model", cost_checks()));
    results.push(("10 speedup trend", speedup_trend(&h)));
    let mut err = std::io::stderr();
    for (name, o) in &results {
        writeln!(err, "{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail).unwrap();
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
