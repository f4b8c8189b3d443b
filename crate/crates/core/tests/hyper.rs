mod common;

use common::*;
use ddrom::bases::build_residual_bases;
use ddrom::decomp::build_decomposition;
use ddrom::hyper::*;
use ddrom::mesh_fom::{FomProblem, NewtonOptions};
use ddrom::training::run_top_down;
use ddrom::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn greedy_matches_exhaustive_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let single: Vec<Vec<usize>> = (0..4).map(|l| vec![l]).collect();
    let paired: Vec<Vec<usize>> = (0..4).map(|l| vec![2 * l, 2 * l + 1]).collect();
    let mut cases = 0;
    for _ in 0..100 {
        for nodes in [&single, &paired] {
            let phi = random_matrix(&mut rng, nodes.len() * nodes[0].len(), 2);
            for (n_s, corners) in [(3, vec![]), (2, vec![]), (3, vec![2]), (4, vec![1]), (4, vec![])] {
                for n_w in 1..=2 {
                    let got = greedy_sample_mesh(&phi, nodes, n_s, n_w, &corners).unwrap();
                    assert_eq!(got, brute_force_greedy(&phi, nodes, n_s, n_w, &corners));
                    assert_eq!(got.len(), n_s);
                    assert!(corners.iter().all(|c| got.contains(c)));
                    cases += 1;
                }
            }
        }
    }
    assert_eq!(cases, 2000);
}

#[test]
fn greedy_hand_example() {
    // Round one takes the two largest first-column entries (nodes 3, 0). Round two fits
    // the second column on those rows, alpha = 0.5 / 0.89, leaving residuals
    // -0.056 at node 1 and 0.888 at node 2.
    let phi = DMatrix::from_row_slice(4, 2, &[0.5, 1.0, 0.1, 0.0, 0.2, 1.0, 0.8, 0.0]);
    let nodes: Vec<Vec<usize>> = (0..4).map(|l| vec![l]).collect();
    let got = greedy_sample_mesh(&phi, &nodes, 3, 2, &[]).unwrap();
    assert_eq!(got, vec![3, 0, 2]);
}

#[test]
fn greedy_ties_go_to_lowest_node() {
    let phi = DMatrix::from_element(4, 1, 0.5);
    let nodes: Vec<Vec<usize>> = (0..4).map(|l| vec![l]).collect();
    assert_eq!(greedy_sample_mesh(&phi, &nodes, 2, 1, &[]).unwrap(), vec![0, 1]);
}

#[test]
fn budget_equal_to_corners_returns_corners() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let phi = random_matrix(&mut rng, 6, 2);
    let nodes: Vec<Vec<usize>> = (0..6).map(|l| vec![l]).collect();
    assert_eq!(greedy_sample_mesh(&phi, &nodes, 2, 1, &[4, 1]).unwrap(), vec![4, 1]);
    assert!(matches!(
        greedy_sample_mesh(&phi, &nodes, 1, 1, &[4, 1]),
        Err(Error::InsufficientBudget { budget: 1, corners: 2 })
    ));
}

#[test]
fn gappy_weighting_matches_dense_pseudo_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let phi = random_matrix(&mut rng, 8, 3).qr().q();
        let mut rows: Vec<usize> = rand::seq::index::sample(&mut rng, 8, 4).into_vec();
        rows.sort_unstable();
        let b = build_weighting(HyperScheme::GappyPod, Some(&phi), &rows).unwrap().unwrap();
        let zphi = DMatrix::from_fn(4, 3, |i, j| phi[(rows[i], j)]);
        let oracle = zphi.pseudo_inverse(1e-14).unwrap();
        let r = random_matrix(&mut rng, 4, 1);
        let (got, want) = (&b * &r, &oracle * &r);
        assert!((&got - &want).norm() <= 1e-10 * want.norm());
    }
}

#[test]
fn full_sampling_projects_onto_residual_basis() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let phi = random_matrix(&mut rng, 10, 4).qr().q();
    let rows: Vec<usize> = (0..10).collect();
    let b = build_weighting(HyperScheme::GappyPod, Some(&phi), &rows).unwrap().unwrap();
    let r = random_matrix(&mut rng, 10, 1);
    assert!((&b * &r - phi.transpose() * &r).amax() < 1e-12);
    let proj = &phi * (phi.transpose() * &r);
    assert!(((&b * &r).norm() - proj.norm()).abs() < 1e-12);
}

#[test]
fn too_few_samples_for_gappy_rejected() {
    let phi = DMatrix::<f64>::identity(6, 3);
    assert!(matches!(
        build_weighting(HyperScheme::GappyPod, Some(&phi), &[0, 1]),
        Err(Error::GappyRankDeficient { .. })
    ));
    // Rows that miss a basis direction leave the sampled basis singular.
    assert!(matches!(
        build_weighting(HyperScheme::GappyPod, Some(&phi), &[0, 1, 4, 5]),
        Err(Error::GappyRankDeficient { rank: 2, cols: 3 })
    ));
}

#[test]
fn line_stencil_samples_neighbors() {
    // One row of free nodes: the bilinear stencil reduces to three points.
    let p = FomProblem::heat(10, 2);
    assert_eq!(p.n(), 9);
    let d = build_decomposition(&p, (1, 1)).unwrap();
    for k in 0..9 {
        let (interior, interface) = induce_state_samplers(&p, &d, 0, &[k]);
        let want: Vec<usize> = (k.saturating_sub(1)..=(k + 1).min(8)).collect();
        assert_eq!(interior, want);
        assert!(interface.is_empty());
    }
}

#[test]
fn identity_scheme_samples_everything() {
    let p = FomProblem::heat(8, 8);
    let d = build_decomposition(&p, (2, 2)).unwrap();
    let h = build_hyper(&p, &d, None, &HyperConfig::identity()).unwrap();
    for (s, hs) in d.subdomains.iter().zip(&h.subdomains) {
        assert_eq!(hs.sample_rows, (0..s.n_rows()).collect::<Vec<_>>());
        assert_eq!(hs.state_interior, (0..s.n_interior()).collect::<Vec<_>>());
        assert_eq!(hs.state_interface, (0..s.n_interface()).collect::<Vec<_>>());
        assert!(hs.pseudo_inverse.is_none());
    }
}

struct Setup {
    problem: FomProblem,
    decomposition: ddrom::decomp::Decomposition,
    residual: ddrom::bases::ResidualBasis,
}

fn burgers_setup() -> Setup {
    let problem = FomProblem::burgers(24, 6);
    let store = run_top_down(&problem, 3, 3, &NewtonOptions::default()).unwrap();
    let decomposition = build_decomposition(&problem, (2, 2)).unwrap();
    let residual = build_residual_bases(&store.residual_matrix(), &decomposition, 1e-10).unwrap();
    Setup {
        problem,
        decomposition,
        residual,
    }
}

#[test]
fn sampled_evaluation_reads_only_sampled_states() {
    let s = burgers_setup();
    let (p, d) = (&s.problem, &s.decomposition);
    let cfg = HyperConfig {
        seed_rule: SeedRule::BlockCorners,
        ..HyperConfig::gappy(2.0)
    };
    let h = build_hyper(p, d, Some(&s.residual), &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mu = [2000.0, 15.0];
    for _ in 0..10 {
        let x: Vec<f64> = (0..p.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let full = p.residual(&x, mu).unwrap();
        for (i, (sub, hs)) in d.subdomains.iter().zip(&h.subdomains).enumerate() {
            // Scramble every state entry the samplers do not select.
            let mut y: Vec<f64> = x.iter().map(|v| v + 7.0).collect();
            for &k in &hs.state_interior {
                y[sub.interior[k]] = x[sub.interior[k]];
            }
            for &k in &hs.state_interface {
                y[sub.interface[k]] = x[sub.interface[k]];
            }
            let rows: Vec<usize> = hs.sample_rows.iter().map(|&k| sub.rows[k]).collect();
            let sampled = p.evaluate(&p.row_plan(&rows), &y, mu, false).unwrap().residual;
            let local: Vec<f64> = sub.rows.iter().map(|&r| full[r]).collect();
            let want = hs.weigh_full(&local);
            let got = hs.weigh_vector(&sampled);
            let scale = DVector::from_vec(want.clone()).norm().max(1.0);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-12 * scale, "subdomain {i}");
            }
        }
    }
}

#[test]
fn sample_sets_contain_seeds_and_respect_counts() {
    let s = burgers_setup();
    let (p, d) = (&s.problem, &s.decomposition);
    for rule in [SeedRule::BlockCorners, SeedRule::InterfaceNodes] {
        for scheme in [HyperScheme::Collocation, HyperScheme::GappyPod] {
            let cfg = HyperConfig {
                scheme,
                ratio: 4.0,
                n_w: None,
                seed_rule: rule,
            };
            let h = match build_hyper(p, d, Some(&s.residual), &cfg) {
                Ok(h) => h,
                Err(Error::InsufficientBudget { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            for (i, hs) in h.subdomains.iter().enumerate() {
                let corners = corner_nodes(p, d, i, rule);
                assert!(!corners.is_empty());
                assert!(corners.iter().all(|c| hs.sample_nodes.contains(c)));
                assert!(!hs.state_interface.is_empty());
                let n_r = s.residual.bases[i].ncols();
                let n_nodes = subdomain_nodes(p, d, i).len();
                assert_eq!(hs.sample_nodes.len(), (4 * n_r).min(n_nodes));
                let n_b = if scheme == HyperScheme::GappyPod { n_r } else { hs.sample_rows.len() };
                assert_eq!(hs.n_b(), n_b);
                assert!(hs.sample_rows.len() >= n_r);
            }
        }
    }
}

#[test]
fn sample_mesh_is_deterministic() {
    let s = burgers_setup();
    let cfg = HyperConfig {
        seed_rule: SeedRule::BlockCorners,
        ..HyperConfig::gappy(1.5)
    };
    let a = build_hyper(&s.problem, &s.decomposition, Some(&s.residual), &cfg).unwrap();
    let b = build_hyper(&s.problem, &s.decomposition, Some(&s.residual), &cfg).unwrap();
    for (x, y) in a.subdomains.iter().zip(&b.subdomains) {
        assert_eq!(x.sample_nodes, y.sample_nodes);
        assert_eq!(x.pseudo_inverse, y.pseudo_inverse);
    }
}

#[test]
fn interface_seed_exceeding_budget_is_reported() {
    let p = FomProblem::heat(20, 20);
    let store = run_top_down(&p, 2, 2, &NewtonOptions::default()).unwrap();
    let d = build_decomposition(&p, (2, 2)).unwrap();
    let rb = build_residual_bases(&store.residual_matrix(), &d, 0.5).unwrap();
    let err = build_hyper(&p, &d, Some(&rb), &HyperConfig::gappy(1.0)).unwrap_err();
    assert!(matches!(err, Error::InsufficientBudget { .. }));
}
