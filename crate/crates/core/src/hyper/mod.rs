//! Residual weighting for hyper-reduction: identity, collocation and gappy POD,
//! the greedy sample mesh, and the state samplers induced by a sample set.

mod greedy;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bases::ResidualBasis;
use crate::decomp::Decomposition;
use crate::error::{Error, Result};
use crate::mesh_fom::FomProblem;

pub use greedy::{greedy_sample_mesh, greedy_schedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HyperScheme {
    Identity,
    Collocation,
    GappyPod,
}

impl HyperScheme {
    pub fn name(self) -> &'static str {
        match self {
            HyperScheme::Identity => "identity",
            HyperScheme::Collocation => "collocation",
            HyperScheme::GappyPod => "gappy-pod",
        }
    }
}

/// Which nodes seed every sample mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedRule {
    /// Every owned node carrying an interface DOF.
    InterfaceNodes,
    /// Only the corners of the owned node block that carry interface DOFs
    /// (falls back to one node per port for non-grid decompositions).
    BlockCorners,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    pub scheme: HyperScheme,
    /// Sample nodes per residual basis vector (`n_s / nhat_r`).
    pub ratio: f64,
    /// Working columns for the greedy loop; defaults to `min(nhat_r, gamma n_s)`.
    pub n_w: Option<usize>,
    pub seed_rule: SeedRule,
}

impl HyperConfig {
    pub fn identity() -> Self {
        Self {
            scheme: HyperScheme::Identity,
            ratio: 1.0,
            n_w: None,
            seed_rule: SeedRule::InterfaceNodes,
        }
    }

    pub fn gappy(ratio: f64) -> Self {
        Self {
            scheme: HyperScheme::GappyPod,
            ratio,
            n_w: None,
            seed_rule: SeedRule::InterfaceNodes,
        }
    }
}

/// Hyper-reduction data of one subdomain; all indices are local to the subdomain.
#[derive(Clone, Debug)]
pub struct SubdomainHyper {
    /// Sampled nodes (indices into the subdomain node list), sorted.
    pub sample_nodes: Vec<usize>,
    /// Sampled residual rows (indices into the subdomain rows), sorted.
    pub sample_rows: Vec<usize>,
    /// `(Z Phi_r)^+` for gappy POD; `None` means the weighting is `Z` itself.
    pub pseudo_inverse: Option<DMatrix<f64>>,
    /// Interior positions read by the sampled rows.
    pub state_interior: Vec<usize>,
    /// Interface positions read by the sampled rows.
    pub state_interface: Vec<usize>,
}

impl SubdomainHyper {
    /// Rows of the weighted residual `B r`.
    pub fn n_b(&self) -> usize {
        self.pseudo_inverse
            .as_ref()
            .map_or(self.sample_rows.len(), |p| p.nrows())
    }

    /// Applies `B` to values already restricted to the sampled rows.
    pub fn weigh_vector(&self, sampled: &[f64]) -> Vec<f64> {
        match &self.pseudo_inverse {
            None => sampled.to_vec(),
            Some(p) => (p * nalgebra::DVector::from_column_slice(sampled)).as_slice().to_vec(),
        }
    }

    pub fn weigh_matrix(&self, sampled: DMatrix<f64>) -> DMatrix<f64> {
        match &self.pseudo_inverse {
            None => sampled,
            Some(p) => p * sampled,
        }
    }

    /// Applies `B` to a full subdomain residual (`n_r_i` entries).
    pub fn weigh_full(&self, r: &[f64]) -> Vec<f64> {
        let sampled: Vec<f64> = self.sample_rows.iter().map(|&k| r[k]).collect();
        self.weigh_vector(&sampled)
    }
}

#[derive(Clone, Debug)]
pub struct HyperData {
    pub scheme: HyperScheme,
    pub subdomains: Vec<SubdomainHyper>,
}

/// Local residual rows grouped by node, in increasing node order.
pub fn subdomain_nodes(problem: &FomProblem, d: &Decomposition, sub: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut last = usize::MAX;
    for (k, &r) in d.subdomains[sub].rows.iter().enumerate() {
        let node = problem.dof_node(r);
        if node != last {
            out.push(Vec::new());
            last = node;
        }
        out.last_mut().unwrap().push(k);
    }
    out
}

/// Seed nodes of a subdomain's sample mesh (local node indices, sorted).
pub fn corner_nodes(problem: &FomProblem, d: &Decomposition, sub: usize, rule: SeedRule) -> Vec<usize> {
    let s = &d.subdomains[sub];
    let nodes = subdomain_nodes(problem, d, sub);
    let is_interface = |c: usize| s.interface.binary_search(&c).is_ok();
    let carries_interface = |l: usize| nodes[l].iter().any(|&k| is_interface(s.rows[k]));
    let mut out: Vec<usize> = match (rule, s.node_block) {
        (SeedRule::InterfaceNodes, _) => (0..nodes.len()).filter(|&l| carries_interface(l)).collect(),
        (SeedRule::BlockCorners, Some([ilo, ihi, jlo, jhi])) => (0..nodes.len())
            .filter(|&l| {
                let (i, j) = problem.dof_grid(s.rows[nodes[l][0]]);
                (i == ilo || i == ihi) && (j == jlo || j == jhi) && carries_interface(l)
            })
            .collect(),
        (SeedRule::BlockCorners, None) => s
            .ports
            .iter()
            .filter_map(|&pj| {
                let port = &d.ports[pj];
                (0..nodes.len()).find(|&l| {
                    nodes[l]
                        .iter()
                        .any(|&k| problem.stencil(s.rows[k]).iter().any(|c| port.dofs.binary_search(c).is_ok()))
                })
            })
            .collect(),
    };
    out.sort_unstable();
    out.dedup();
    out
}

/// Relative threshold on the R diagonal of the sampled residual basis.
const GAPPY_TOL: f64 = 1e-12;

/// Weighting for a sample set: `None` for identity/collocation (`B = Z`),
/// `(Z Phi_r)^+` for gappy POD computed from a thin QR factorization.
pub fn build_weighting(
    scheme: HyperScheme,
    phi_r: Option<&DMatrix<f64>>,
    sample_rows: &[usize],
) -> Result<Option<DMatrix<f64>>> {
    match scheme {
        HyperScheme::Identity | HyperScheme::Collocation => Ok(None),
        HyperScheme::GappyPod => {
            let phi = phi_r.ok_or(Error::Invalid("gappy POD needs a residual basis".into()))?;
            let k = phi.ncols();
            if sample_rows.len() < k {
                return Err(Error::GappyRankDeficient {
                    rank: sample_rows.len(),
                    cols: k,
                });
            }
            let zphi = DMatrix::from_fn(sample_rows.len(), k, |i, j| phi[(sample_rows[i], j)]);
            let qr = zphi.qr();
            let r = qr.r();
            let dmax = (0..k).map(|t| r[(t, t)].abs()).fold(0.0, f64::max);
            let rank = (0..k).filter(|&t| r[(t, t)].abs() > GAPPY_TOL * dmax).count();
            if rank < k {
                return Err(Error::GappyRankDeficient { rank, cols: k });
            }
            let qt = qr.q().transpose();
            let pinv = r
                .solve_upper_triangular(&qt)
                .ok_or(Error::GappyRankDeficient { rank, cols: k })?;
            Ok(Some(pinv))
        }
    }
}

/// Interior and interface positions read by the given local residual rows.
pub fn induce_state_samplers(
    problem: &FomProblem,
    d: &Decomposition,
    sub: usize,
    sample_rows: &[usize],
) -> (Vec<usize>, Vec<usize>) {
    let s = &d.subdomains[sub];
    let mut cols: Vec<usize> = sample_rows
        .iter()
        .flat_map(|&k| problem.stencil(s.rows[k]))
        .collect();
    cols.sort_unstable();
    cols.dedup();
    let mut interior = Vec::new();
    let mut interface = Vec::new();
    for c in cols {
        if let Ok(p) = s.interior.binary_search(&c) {
            interior.push(p);
        } else if let Ok(p) = s.interface.binary_search(&c) {
            interface.push(p);
        }
    }
    (interior, interface)
}

/// Builds hyper-reduction data for every subdomain.
pub fn build_hyper(
    problem: &FomProblem,
    d: &Decomposition,
    residual: Option<&ResidualBasis>,
    cfg: &HyperConfig,
) -> Result<HyperData> {
    let mut subdomains = Vec::with_capacity(d.n_subdomains());
    for i in 0..d.n_subdomains() {
        let s = &d.subdomains[i];
        let nodes = subdomain_nodes(problem, d, i);
        let (sample_nodes, pinv_basis) = match cfg.scheme {
            HyperScheme::Identity => ((0..nodes.len()).collect::<Vec<_>>(), None),
            scheme => {
                let rb = residual.ok_or(Error::Invalid("sampled schemes need residual bases".into()))?;
                let phi_r = &rb.bases[i];
                let gamma = problem.dofs_per_node();
                let corners = corner_nodes(problem, d, i, cfg.seed_rule);
                let n_s = ((cfg.ratio * phi_r.ncols() as f64).ceil() as usize).min(nodes.len());
                let n_w = cfg.n_w.unwrap_or(phi_r.ncols().min(gamma * n_s)).min(phi_r.ncols());
                let mut picked = greedy_sample_mesh(phi_r, &nodes, n_s, n_w, &corners)?;
                picked.sort_unstable();
                (picked, (scheme == HyperScheme::GappyPod).then_some(phi_r))
            }
        };
        let sample_rows: Vec<usize> = sample_nodes.iter().flat_map(|&l| nodes[l].iter().copied()).collect();
        let pseudo_inverse = build_weighting(cfg.scheme, pinv_basis, &sample_rows)?;
        let (state_interior, state_interface) = if cfg.scheme == HyperScheme::Identity {
            ((0..s.n_interior()).collect(), (0..s.n_interface()).collect())
        } else {
            induce_state_samplers(problem, d, i, &sample_rows)
        };
        subdomains.push(SubdomainHyper {
            sample_nodes,
            sample_rows,
            pseudo_inverse,
            state_interior,
            state_interface,
        });
    }
    Ok(HyperData {
        scheme: cfg.scheme,
        subdomains,
    })
}
