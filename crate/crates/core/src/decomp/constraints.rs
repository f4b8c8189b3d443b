use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Decomposition;
use crate::bases::BasisSet;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConstraintMode {
    Strong,
    Weak { n_c: Vec<usize>, seed: u64 },
}

/// Per-subdomain constraint matrices `A_i` with `sum_i A_i x_Gamma_i = 0`.
#[derive(Clone, Debug)]
pub struct ConstraintSet {
    pub mode: ConstraintMode,
    /// `n_A x n_Gamma_i` for every subdomain.
    pub matrices: Vec<DMatrix<f64>>,
    /// Test-function blocks `G_j` (`n_c_j x size_j`), empty for strong constraints.
    pub test_functions: Vec<DMatrix<f64>>,
    pub n_a: usize,
}

impl ConstraintSet {
    pub fn is_strong(&self) -> bool {
        matches!(self.mode, ConstraintMode::Strong)
    }

    /// `sum_i A_i x_Gamma_i` for interface vectors of all subdomains.
    pub fn apply(&self, interfaces: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_a];
        for (a, x) in self.matrices.iter().zip(interfaces) {
            for r in 0..self.n_a {
                for (c, &v) in x.iter().enumerate() {
                    out[r] += a[(r, c)] * v;
                }
            }
        }
        out
    }
}

/// Anchor-chain port equalities: for every port and every non-anchor member,
/// `x_anchor|port - x_member|port = 0`.
pub fn build_strong_constraints(d: &Decomposition) -> ConstraintSet {
    let n_a = d.n_abar();
    let mut matrices: Vec<DMatrix<f64>> = d
        .subdomains
        .iter()
        .map(|s| DMatrix::zeros(n_a, s.n_interface()))
        .collect();
    let mut row = 0;
    for p in &d.ports {
        let anchor = p.members[0];
        for (k, &m) in p.members.iter().enumerate().skip(1) {
            for t in 0..p.size() {
                matrices[anchor][(row + t, p.local[0][t])] = 1.0;
                matrices[m][(row + t, p.local[k][t])] = -1.0;
            }
            row += p.size();
        }
    }
    ConstraintSet {
        mode: ConstraintMode::Strong,
        matrices,
        test_functions: Vec::new(),
        n_a,
    }
}

fn port_rng(seed: u64, port: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (port as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Weak constraints `A_i = C Abar_i` with Gaussian test functions per port.
pub fn build_weak_constraints(d: &Decomposition, n_c: &[usize], seed: u64) -> Result<ConstraintSet> {
    if n_c.len() != d.n_ports() {
        return Err(Error::Dimension(format!(
            "{} constraint counts for {} ports",
            n_c.len(),
            d.n_ports()
        )));
    }
    let mut tests = Vec::with_capacity(d.n_ports());
    for (p, &nc) in d.ports.iter().zip(n_c) {
        if nc == 0 || nc > p.size() {
            return Err(Error::Invalid(format!(
                "port {} of size {} cannot carry {} test functions",
                p.id,
                p.size(),
                nc
            )));
        }
        let mut rng = port_rng(seed, p.id);
        let mut accepted = None;
        for _ in 0..10 {
            let g = DMatrix::from_fn(nc, p.size(), |_, _| StandardNormal.sample(&mut rng));
            if linalg::rank(&g, 1e-12) == nc {
                accepted = Some(g);
                break;
            }
        }
        tests.push(accepted.ok_or(Error::TestFunctionRankFailure(p.id))?);
    }
    let n_a: usize = d.ports.iter().zip(n_c).map(|(p, &nc)| p.pair_count() * nc).sum();
    let mut matrices: Vec<DMatrix<f64>> = d
        .subdomains
        .iter()
        .map(|s| DMatrix::zeros(n_a, s.n_interface()))
        .collect();
    let mut row = 0;
    for (p, g) in d.ports.iter().zip(&tests) {
        let anchor = p.members[0];
        for (k, &m) in p.members.iter().enumerate().skip(1) {
            for r in 0..g.nrows() {
                for t in 0..p.size() {
                    matrices[anchor][(row + r, p.local[0][t])] += g[(r, t)];
                    matrices[m][(row + r, p.local[k][t])] -= g[(r, t)];
                }
            }
            row += g.nrows();
        }
    }
    Ok(ConstraintSet {
        mode: ConstraintMode::Weak {
            n_c: n_c.to_vec(),
            seed,
        },
        matrices,
        test_functions: tests,
        n_a,
    })
}

/// Weak constraints with the same count on every port, clamped to the port size.
pub fn build_weak_constraints_uniform(d: &Decomposition, n_c: usize, seed: u64) -> Result<ConstraintSet> {
    let counts: Vec<usize> = d.ports.iter().map(|p| n_c.min(p.size())).collect();
    build_weak_constraints(d, &counts, seed)
}

/// `sum_i nhat_i - rank([A_1 Phi_Gamma_1, ..., A_n Phi_Gamma_n])`.
pub fn effective_dofs(bases: &BasisSet, c: &ConstraintSet) -> usize {
    let total: usize = (0..bases.subdomains.len()).map(|i| bases.dim(i)).sum();
    if c.n_a == 0 {
        return total;
    }
    let width: usize = bases.subdomains.iter().map(|b| b.interface.ncols()).sum();
    let mut m = DMatrix::zeros(c.n_a, width);
    let mut col = 0;
    for (a, b) in c.matrices.iter().zip(&bases.subdomains) {
        let block = a * &b.interface;
        m.view_mut((0, col), (c.n_a, block.ncols())).copy_from(&block);
        col += block.ncols();
    }
    total - linalg::rank(&m, 1e-12)
}
