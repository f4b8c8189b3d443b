use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{sqp_solve, ConstrainedLsq, SqpIteration, SqpOptions, SqpTiming, CONSTRAINT_RANK_TOL};
use crate::bases::BasisSet;
use crate::decomp::{ConstraintSet, Decomposition};
use crate::error::{Error, Result};
use crate::hyper::{HyperData, HyperScheme};
use crate::linalg;
use crate::mesh_fom::{FomProblem, RowPlan};

/// Per-subdomain operators of the reduced problem.
struct Block {
    /// Maps coordinates to interior states (`n_Omega x dim`).
    w_interior: DMatrix<f64>,
    /// Maps coordinates to interface states (`n_Gamma x dim`).
    w_interface: DMatrix<f64>,
    /// Rows of `[w_interior; w_interface]` at the sampled state DOFs.
    w_sampled: DMatrix<f64>,
    /// Global columns matching the rows of `w_sampled`.
    sampled_cols: Vec<usize>,
    /// Position in `w_sampled` of every global column, `usize::MAX` elsewhere.
    col_pos: Vec<usize>,
    plan: RowPlan,
}

/// The assembled reduced problem at one parameter.
pub struct RomProblem<'a> {
    pub problem: &'a FomProblem,
    pub decomposition: &'a Decomposition,
    pub bases: &'a BasisSet,
    pub constraints: &'a ConstraintSet,
    pub hyper: &'a HyperData,
    pub mu: [f64; 2],
    blocks: Vec<Block>,
    /// Row-compressed reduced constraint matrix.
    reduced_constraints: DMatrix<f64>,
}

impl<'a> RomProblem<'a> {
    pub fn new(
        problem: &'a FomProblem,
        decomposition: &'a Decomposition,
        bases: &'a BasisSet,
        constraints: &'a ConstraintSet,
        hyper: &'a HyperData,
        mu: [f64; 2],
    ) -> Result<Self> {
        problem.check_param(mu)?;
        let d = decomposition;
        let m = d.n_subdomains();
        if bases.subdomains.len() != m || constraints.matrices.len() != m || hyper.subdomains.len() != m {
            return Err(Error::Dimension("bases, constraints and hyper data must cover every subdomain".into()));
        }
        let n = problem.n();
        let mut blocks = Vec::with_capacity(m);
        for (i, s) in d.subdomains.iter().enumerate() {
            let b = &bases.subdomains[i];
            let h = &hyper.subdomains[i];
            let dim = bases.dim(i);
            if b.interior.nrows() != s.n_interior() || b.interface.nrows() != s.n_interface() {
                return Err(Error::Dimension(format!("basis rows of subdomain {i} do not match the decomposition")));
            }
            if constraints.matrices[i].ncols() != s.n_interface() {
                return Err(Error::Dimension(format!("constraint block {i} has the wrong width")));
            }
            if hyper.scheme != HyperScheme::Identity && h.n_b() < dim {
                return Err(Error::Invalid(format!(
                    "subdomain {i}: weighted residual has {} rows for {dim} coordinates",
                    h.n_b()
                )));
            }
            let (w_interior, w_interface) = if bases.coupled() {
                (b.interior.clone(), b.interface.clone())
            } else {
                let (ni, ng) = (b.interior.ncols(), b.interface.ncols());
                let mut wi = DMatrix::zeros(s.n_interior(), dim);
                wi.view_mut((0, 0), (s.n_interior(), ni)).copy_from(&b.interior);
                let mut wg = DMatrix::zeros(s.n_interface(), dim);
                wg.view_mut((0, ni), (s.n_interface(), ng)).copy_from(&b.interface);
                (wi, wg)
            };
            let k = h.state_interior.len() + h.state_interface.len();
            let mut w_sampled = DMatrix::zeros(k, dim);
            let mut sampled_cols = Vec::with_capacity(k);
            let mut col_pos = vec![usize::MAX; n];
            for (t, &p) in h.state_interior.iter().enumerate() {
                w_sampled.set_row(t, &w_interior.row(p));
                sampled_cols.push(s.interior[p]);
            }
            let off = h.state_interior.len();
            for (t, &p) in h.state_interface.iter().enumerate() {
                w_sampled.set_row(off + t, &w_interface.row(p));
                sampled_cols.push(s.interface[p]);
            }
            for (t, &c) in sampled_cols.iter().enumerate() {
                col_pos[c] = t;
            }
            let rows: Vec<usize> = h.sample_rows.iter().map(|&k| s.rows[k]).collect();
            let plan = problem.row_plan(&rows);
            blocks.push(Block {
                w_interior,
                w_interface,
                w_sampled,
                sampled_cols,
                col_pos,
                plan,
            });
        }
        let total: usize = (0..m).map(|i| bases.dim(i)).sum();
        let mut raw = DMatrix::zeros(constraints.n_a, total);
        let mut col = 0;
        for (a, blk) in constraints.matrices.iter().zip(&blocks) {
            let dblk = a * &blk.w_interface;
            raw.view_mut((0, col), (constraints.n_a, dblk.ncols())).copy_from(&dblk);
            col += dblk.ncols();
        }
        let reduced_constraints = linalg::row_space_basis(&raw, CONSTRAINT_RANK_TOL);
        Ok(Self {
            problem,
            decomposition,
            bases,
            constraints,
            hyper,
            mu,
            blocks,
            reduced_constraints,
        })
    }

    /// Rank of the reduced constraint matrix (number of active constraints).
    pub fn n_active_constraints(&self) -> usize {
        self.reduced_constraints.nrows()
    }

    /// Interior and interface states of subdomain `i` for coordinates `y`.
    pub fn subdomain_states(&self, i: usize, y: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let b = &self.blocks[i];
        (
            (&b.w_interior * y).as_slice().to_vec(),
            (&b.w_interface * y).as_slice().to_vec(),
        )
    }

    /// Weighted residual norm `(sum_i ||B_i r_i||^2)^(1/2)` at full subdomain states,
    /// with each subdomain residual evaluated from its own interior and interface values.
    pub fn weighted_residual_norm(&self, interior: &[Vec<f64>], interface: &[Vec<f64>]) -> Result<f64> {
        let d = self.decomposition;
        let mut total = 0.0;
        for (i, s) in d.subdomains.iter().enumerate() {
            let mut x = vec![0.0; self.problem.n()];
            for (&c, &v) in s.interior.iter().zip(&interior[i]) {
                x[c] = v;
            }
            for (&c, &v) in s.interface.iter().zip(&interface[i]) {
                x[c] = v;
            }
            let ev = self.problem.evaluate(&self.blocks[i].plan, &x, self.mu, false)?;
            let br = self.hyper.subdomains[i].weigh_vector(&ev.residual);
            total += br.iter().map(|v| v * v).sum::<f64>();
        }
        Ok(total.sqrt())
    }

    pub fn solve(&self, opts: &SqpOptions) -> Result<RomSolution> {
        let y0: Vec<DVector<f64>> = (0..self.n_blocks()).map(|i| DVector::zeros(self.block_dim(i))).collect();
        let l0 = DVector::zeros(self.n_active_constraints());
        self.solve_from(&y0, &l0, opts)
    }

    pub fn solve_from(&self, y0: &[DVector<f64>], lambda0: &DVector<f64>, opts: &SqpOptions) -> Result<RomSolution> {
        let res = sqp_solve(self, y0, lambda0, opts)?;
        let t0 = Instant::now();
        let (interior, interface): (Vec<_>, Vec<_>) =
            (0..self.n_blocks()).map(|i| self.subdomain_states(i, &res.y[i])).unzip();
        let mut timing = res.timing;
        timing.total += t0.elapsed().as_secs_f64();
        let constraint_residual = self
            .constraints
            .apply(&interface)
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        Ok(RomSolution {
            mu: self.mu,
            coordinates: res.y.iter().map(|v| v.as_slice().to_vec()).collect(),
            lambda: res.lambda.as_slice().to_vec(),
            iterations: res.iterations,
            objective: res.objective,
            constraint_residual,
            interior,
            interface,
            trace: res.trace,
            timing,
        })
    }
}

impl ConstrainedLsq for RomProblem<'_> {
    fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    fn block_dim(&self, i: usize) -> usize {
        self.bases.dim(i)
    }

    fn constraints(&self) -> &DMatrix<f64> {
        &self.reduced_constraints
    }

    fn evaluate_block(&self, i: usize, y: &[f64], with_jacobian: bool) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
        let b = &self.blocks[i];
        let h = &self.hyper.subdomains[i];
        let xs = &b.w_sampled * DVector::from_column_slice(y);
        let mut x = vec![0.0; self.problem.n()];
        for (&c, &v) in b.sampled_cols.iter().zip(xs.iter()) {
            x[c] = v;
        }
        let ev = self.problem.evaluate(&b.plan, &x, self.mu, with_jacobian)?;
        let r = DVector::from_vec(h.weigh_vector(&ev.residual));
        let m = ev
            .jacobian
            .map(|j| h.weigh_matrix(j.rows_times_basis(&b.col_pos, &b.w_sampled)));
        Ok((r, m))
    }
}

/// Converged reduced solution with reconstructed subdomain states.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RomSolution {
    pub mu: [f64; 2],
    pub coordinates: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub iterations: usize,
    pub objective: f64,
    /// `||sum_i A_i x_Gamma_i||`.
    pub constraint_residual: f64,
    pub interior: Vec<Vec<f64>>,
    pub interface: Vec<Vec<f64>>,
    pub trace: Vec<SqpIteration>,
    pub timing: SqpTiming,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReconstructMode {
    Strict,
    PortAverage,
}

#[derive(Clone, Debug)]
pub struct GlobalState {
    pub x: Vec<f64>,
    /// Largest spread of values assigned to one DOF by different subdomains.
    pub max_discrepancy: f64,
}

/// Scatters subdomain states into a global vector.
pub fn reconstruct_global(sol: &RomSolution, d: &Decomposition, mode: ReconstructMode) -> Result<GlobalState> {
    if sol.interior.len() != d.n_subdomains() || sol.interface.len() != d.n_subdomains() {
        return Err(Error::Dimension("solution does not match the decomposition".into()));
    }
    let mut x = vec![0.0; d.n];
    let mut count = vec![0usize; d.n];
    let mut lo = vec![f64::INFINITY; d.n];
    let mut hi = vec![f64::NEG_INFINITY; d.n];
    for (i, s) in d.subdomains.iter().enumerate() {
        for (&c, &v) in s.interior.iter().zip(&sol.interior[i]) {
            x[c] = v;
        }
        for (&c, &v) in s.interface.iter().zip(&sol.interface[i]) {
            x[c] += v;
            count[c] += 1;
            lo[c] = lo[c].min(v);
            hi[c] = hi[c].max(v);
        }
    }
    let mut max_discrepancy: f64 = 0.0;
    for c in 0..d.n {
        if count[c] > 0 {
            x[c] /= count[c] as f64;
            max_discrepancy = max_discrepancy.max(hi[c] - lo[c]);
        }
    }
    if mode == ReconstructMode::Strict {
        let scale = x.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if max_discrepancy > 1e-8 * scale {
            return Err(Error::PortMismatch(max_discrepancy));
        }
    }
    Ok(GlobalState { x, max_discrepancy })
}
