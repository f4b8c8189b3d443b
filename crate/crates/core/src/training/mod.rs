//! Offline snapshot generation: global solves over a parameter grid and
//! subdomain solves driven by random Legendre interface data.

mod legendre;

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomp::Decomposition;
use crate::error::{Error, Result};
use crate::harness::ddrb;
use crate::linalg::{norm2, CsrMatrix, SparseLu};
use crate::mesh_fom::{newton_solve, FomProblem, NewtonOptions};

pub use legendre::{legendre, legendre_port_functions, tensor_order};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", deny_unknown_fields)]
pub enum TrainingPlan {
    TopDown {
        n1: usize,
        n2: usize,
    },
    BottomUp {
        n_samples: usize,
        eta: f64,
        seed: u64,
        /// One training parameter per subdomain.
        mu_train: Vec<[f64; 2]>,
    },
}

/// Global snapshots from a top-down run.
#[derive(Clone, Debug)]
pub struct SnapshotStore {
    /// `n x n_train` converged states.
    pub states: DMatrix<f64>,
    pub params: Vec<[f64; 2]>,
    /// `residuals[k]` holds the residual at Newton iterate `k` of every solve that reached it.
    pub residuals: Vec<DMatrix<f64>>,
    pub newton_iters: Vec<usize>,
    /// Grid points whose solve failed, with the error message.
    pub skipped: Vec<([f64; 2], String)>,
}

impl SnapshotStore {
    /// All residual snapshots side by side.
    pub fn residual_matrix(&self) -> DMatrix<f64> {
        let n = self.states.nrows();
        let m: usize = self.residuals.iter().map(|r| r.ncols()).sum();
        let mut out = DMatrix::zeros(n, m);
        let mut col = 0;
        for r in &self.residuals {
            out.view_mut((0, col), (n, r.ncols())).copy_from(r);
            col += r.ncols();
        }
        out
    }

    /// Writes `states.ddrb`, `residuals/iter_k.ddrb` and `plan.json` under `dir`.
    pub fn save(&self, dir: &Path, plan: &TrainingPlan) -> Result<()> {
        std::fs::create_dir_all(dir.join("residuals")).map_err(|e| Error::io(dir, e))?;
        ddrb::write(&dir.join("states.ddrb"), &self.states)?;
        for (k, r) in self.residuals.iter().enumerate() {
            ddrb::write(&dir.join("residuals").join(format!("iter_{k}.ddrb")), r)?;
        }
        let meta = serde_json::json!({
            "plan": plan,
            "params": self.params,
            "newton_iters": self.newton_iters,
            "skipped": self.skipped.iter().map(|(m, e)| serde_json::json!({"mu": m, "error": e})).collect::<Vec<_>>(),
        });
        write_json(&dir.join("plan.json"), &meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let states = ddrb::read(&dir.join("states.ddrb"))?;
        let mut residuals = Vec::new();
        loop {
            let p = dir.join("residuals").join(format!("iter_{}.ddrb", residuals.len()));
            if !p.exists() {
                break;
            }
            residuals.push(ddrb::read(&p)?);
        }
        let path = dir.join("plan.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let params: Vec<[f64; 2]> = serde_json::from_value(meta["params"].clone()).map_err(|e| Error::Format {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let newton_iters: Vec<usize> = serde_json::from_value(meta["newton_iters"].clone()).unwrap_or_default();
        Ok(Self {
            states,
            params,
            residuals,
            newton_iters,
            skipped: Vec::new(),
        })
    }
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Newton solves over an `n1 x n2` equispaced grid of the parameter domain.
pub fn run_top_down(problem: &FomProblem, n1: usize, n2: usize, opts: &NewtonOptions) -> Result<SnapshotStore> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::EmptyInput("training grid"));
    }
    let opts = NewtonOptions {
        keep_residuals: true,
        ..*opts
    };
    let n = problem.n();
    let x0 = vec![0.0; n];
    let mut cols = Vec::new();
    let mut params = Vec::new();
    let mut iters = Vec::new();
    let mut per_iter: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut skipped = Vec::new();
    for mu in problem.param_domain.grid(n1, n2) {
        match newton_solve(problem, mu, &x0, &opts) {
            Ok(sol) => {
                for (k, r) in sol.residual_snapshots.into_iter().enumerate() {
                    if per_iter.len() <= k {
                        per_iter.push(Vec::new());
                    }
                    per_iter[k].push(r);
                }
                cols.push(sol.x);
                params.push(mu);
                iters.push(sol.newton_iters);
            }
            Err(e) => skipped.push((mu, e.to_string())),
        }
    }
    if cols.is_empty() {
        return Err(Error::EmptyInput("every training solve failed"));
    }
    let to_matrix = |c: &[Vec<f64>]| DMatrix::from_fn(n, c.len(), |i, j| c[j][i]);
    Ok(SnapshotStore {
        states: to_matrix(&cols),
        params,
        residuals: per_iter.iter().map(|c| to_matrix(c)).collect(),
        newton_iters: iters,
        skipped,
    })
}

/// Per-subdomain snapshots from a bottom-up run; rows are interior then interface.
#[derive(Clone, Debug)]
pub struct SubdomainSnapshots {
    pub blocks: Vec<DMatrix<f64>>,
    /// `(subdomain, sample, error)` for samples whose solve failed.
    pub skipped: Vec<(usize, usize, String)>,
}

/// Random interface data for one sample: `sum_k r_k k^(-eta) L^k` on every port.
pub fn random_interface(
    functions: &[(usize, DMatrix<f64>)],
    d: &Decomposition,
    sub: usize,
    eta: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let s = &d.subdomains[sub];
    let mut g = vec![0.0; s.n_interface()];
    for (pj, l) in functions {
        let local = d.ports[*pj].local_for(sub).expect("member port");
        for k in 0..l.ncols() {
            let r: f64 = rng.random_range(-1.0..1.0);
            let w = r * ((k + 1) as f64).powf(-eta);
            for (t, &pos) in local.iter().enumerate() {
                g[pos] += w * l[(t, k)];
            }
        }
    }
    g
}

/// Newton solve of the subdomain rows at interior DOFs for the interior DOFs,
/// with interface values frozen to `interface`.
pub fn solve_subdomain(
    problem: &FomProblem,
    d: &Decomposition,
    sub: usize,
    mu: [f64; 2],
    interface: &[f64],
    opts: &NewtonOptions,
) -> Result<Vec<f64>> {
    let s = &d.subdomains[sub];
    if interface.len() != s.n_interface() {
        return Err(Error::Dimension("interface data length".into()));
    }
    let plan = problem.row_plan(&s.interior);
    let mut x = vec![0.0; problem.n()];
    for (&c, &v) in s.interface.iter().zip(interface) {
        x[c] = v;
    }
    let mut pos = vec![usize::MAX; problem.n()];
    for (k, &c) in s.interior.iter().enumerate() {
        pos[c] = k;
    }
    let ni = s.n_interior();
    let restrict = |j: &CsrMatrix| -> CsrMatrix {
        let mut trip = Vec::with_capacity(j.nnz());
        for r in 0..j.nrows() {
            let (cols, vals) = j.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if pos[c] != usize::MAX {
                    trip.push((r, pos[c], v));
                }
            }
        }
        CsrMatrix::from_triplets(ni, ni, &trip)
    };
    let eval = |x: &[f64]| problem.evaluate(&plan, x, mu, false).map(|e| e.residual);
    let mut r = eval(&x)?;
    let mut rnorm = norm2(&r);
    let target = opts.tol * rnorm.max(1.0);
    let mut lu: Option<SparseLu> = None;
    let mut iters = 0;
    while rnorm > target {
        if iters == opts.max_iters {
            return Err(Error::NonConvergence {
                iters,
                last: rnorm,
                history: Vec::new(),
            });
        }
        let j = restrict(&problem.evaluate(&plan, &x, mu, true)?.jacobian.expect("requested"));
        if lu.is_none() {
            lu = Some(SparseLu::analyze(&j)?);
        }
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = lu.as_ref().unwrap().solve(&j, &neg)?;
        let mut alpha = 1.0;
        loop {
            let mut trial = x.clone();
            for (k, &c) in s.interior.iter().enumerate() {
                trial[c] += alpha * dx[k];
            }
            if let Ok(rt) = eval(&trial) {
                let nt = norm2(&rt);
                if nt.is_finite() && nt < rnorm {
                    x = trial;
                    r = rt;
                    rnorm = nt;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < opts.min_step {
                return Err(Error::NonConvergence {
                    iters,
                    last: rnorm,
                    history: Vec::new(),
                });
            }
        }
        iters += 1;
    }
    Ok(s.interior.iter().map(|&c| x[c]).collect())
}

fn subdomain_rng(seed: u64, sub: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (sub as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Bottom-up training: random Legendre data on every port of each subdomain.
pub fn run_bottom_up(
    problem: &FomProblem,
    d: &Decomposition,
    n_samples: usize,
    eta: f64,
    seed: u64,
    mu_train: &[[f64; 2]],
    opts: &NewtonOptions,
) -> Result<SubdomainSnapshots> {
    if !(eta > 0.0) {
        return Err(Error::Invalid("decay exponent must be positive".into()));
    }
    if mu_train.len() != d.n_subdomains() {
        return Err(Error::Dimension("one training parameter per subdomain expected".into()));
    }
    for &mu in mu_train {
        problem.check_param(mu)?;
    }
    let mut blocks = Vec::with_capacity(d.n_subdomains());
    let mut skipped = Vec::new();
    for (i, s) in d.subdomains.iter().enumerate() {
        let functions: Vec<(usize, DMatrix<f64>)> = s
            .ports
            .iter()
            .map(|&pj| legendre_port_functions(problem, &d.ports[pj]).map(|l| (pj, l)))
            .collect::<Result<_>>()?;
        let mut rng = subdomain_rng(seed, i);
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n_samples);
        for k in 0..n_samples {
            let g = random_interface(&functions, d, i, eta, &mut rng);
            match solve_subdomain(problem, d, i, mu_train[i], &g, opts) {
                Ok(xi) => cols.push(xi.into_iter().chain(g).collect()),
                Err(e) => skipped.push((i, k, e.to_string())),
            }
        }
        if cols.is_empty() {
            return Err(Error::EmptyInput("every subdomain training solve failed"));
        }
        let rows = s.n_interior() + s.n_interface();
        blocks.push(DMatrix::from_fn(rows, cols.len(), |r, c| cols[c][r]));
    }
    Ok(SubdomainSnapshots { blocks, skipped })
}
