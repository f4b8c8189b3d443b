//! Gauss-Newton SQP for the constrained subdomain least-squares problem, the
//! null-space reduction of strong constraints, and global state reconstruction.

mod rom;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bases::BasisSet;
use crate::decomp::ConstraintSet;
use crate::error::{Error, Result};
use crate::linalg;

pub use rom::{reconstruct_global, GlobalState, ReconstructMode, RomProblem, RomSolution};

/// Relative singular-value threshold for the rank of reduced constraint matrices.
pub const CONSTRAINT_RANK_TOL: f64 = 1e-12;

/// A block-separable least-squares objective `sum_i ||f_i(y_i)||^2` with linear
/// coupling constraints `C y = 0`, where `y = (y_1, ..., y_m)`.
pub trait ConstrainedLsq {
    fn n_blocks(&self) -> usize;
    fn block_dim(&self, i: usize) -> usize;
    /// Full-row-rank constraint matrix with `sum_i block_dim(i)` columns.
    fn constraints(&self) -> &DMatrix<f64>;
    /// Weighted residual of block `i` and, when requested, its Jacobian with respect to `y_i`.
    fn evaluate_block(&self, i: usize, y: &[f64], with_jacobian: bool) -> Result<(DVector<f64>, Option<DMatrix<f64>>)>;

    fn total_dim(&self) -> usize {
        (0..self.n_blocks()).map(|i| self.block_dim(i)).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SqpOptions {
    /// Relative tolerance on the KKT residual norm.
    pub tol: f64,
    pub max_iters: usize,
    pub line_search: bool,
    /// Smallest step length tried by the backtracking search.
    pub min_step: f64,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 50,
            line_search: true,
            min_step: 1.0 / 1024.0,
        }
    }
}

/// One entry of the solver trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqpIteration {
    pub iter: usize,
    /// `||J^T r + C^T lambda||`.
    pub stationarity: f64,
    /// `||C y||`.
    pub feasibility: f64,
    pub kkt_norm: f64,
    /// Objective `sum_i ||B_i r_i||^2` at the start of the iteration.
    pub objective: f64,
    /// Accepted step length (0 for the converged entry).
    pub alpha: f64,
}

/// Wall-clock accounting; block assembly is charged as the max over blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SqpTiming {
    pub assembly_max: f64,
    pub assembly_total: f64,
    pub solve: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct SqpResult {
    pub y: Vec<DVector<f64>>,
    pub lambda: DVector<f64>,
    pub iterations: usize,
    pub objective: f64,
    pub trace: Vec<SqpIteration>,
    pub timing: SqpTiming,
}

/// Gauss-Newton KKT system at an iterate.
#[derive(Clone, Debug)]
pub struct KktSystem {
    /// `[[H, C^T], [C, 0]]`.
    pub matrix: DMatrix<f64>,
    /// `-[J^T r + C^T lambda; C y]`.
    pub rhs: DVector<f64>,
    pub objective: f64,
    pub stationarity: f64,
    pub feasibility: f64,
}

impl KktSystem {
    pub fn kkt_norm(&self) -> f64 {
        self.rhs.norm()
    }
}

fn offsets<P: ConstrainedLsq + ?Sized>(p: &P) -> Vec<usize> {
    let mut off = vec![0];
    for i in 0..p.n_blocks() {
        off.push(off[i] + p.block_dim(i));
    }
    off
}

fn split(y: &DVector<f64>, off: &[usize]) -> Vec<DVector<f64>> {
    off.windows(2).map(|w| y.rows(w[0], w[1] - w[0]).into_owned()).collect()
}

fn stack(blocks: &[DVector<f64>]) -> DVector<f64> {
    let n: usize = blocks.iter().map(|b| b.len()).sum();
    let mut out = DVector::zeros(n);
    let mut k = 0;
    for b in blocks {
        out.rows_mut(k, b.len()).copy_from(b);
        k += b.len();
    }
    out
}

/// Evaluates the objective only.
pub fn objective<P: ConstrainedLsq + ?Sized>(p: &P, y: &[DVector<f64>]) -> Result<f64> {
    let mut f = 0.0;
    for (i, yi) in y.iter().enumerate() {
        f += p.evaluate_block(i, yi.as_slice(), false)?.0.norm_squared();
    }
    Ok(f)
}

fn assemble_timed<P: ConstrainedLsq + ?Sized>(
    p: &P,
    y: &[DVector<f64>],
    lambda: &DVector<f64>,
    timing: &mut SqpTiming,
) -> Result<KktSystem> {
    let off = offsets(p);
    let nv = off[p.n_blocks()];
    let c = p.constraints();
    let na = c.nrows();
    if c.ncols() != nv || lambda.len() != na {
        return Err(Error::Dimension("constraint matrix does not match the block layout".into()));
    }
    let mut matrix = DMatrix::zeros(nv + na, nv + na);
    let mut grad = DVector::zeros(nv);
    let mut obj = 0.0;
    let mut block_max: f64 = 0.0;
    for i in 0..p.n_blocks() {
        let t0 = Instant::now();
        let (r, m) = p.evaluate_block(i, y[i].as_slice(), true)?;
        let m = m.ok_or(Error::Invalid("block Jacobian missing".into()))?;
        let h = m.tr_mul(&m);
        let g = m.tr_mul(&r);
        let dt = t0.elapsed().as_secs_f64();
        block_max = block_max.max(dt);
        timing.assembly_total += dt;
        let k = off[i + 1] - off[i];
        matrix.view_mut((off[i], off[i]), (k, k)).copy_from(&h);
        grad.rows_mut(off[i], k).copy_from(&g);
        obj += r.norm_squared();
    }
    timing.assembly_max += block_max;
    matrix.view_mut((nv, 0), (na, nv)).copy_from(c);
    matrix.view_mut((0, nv), (nv, na)).copy_from(&c.transpose());
    let ystack = stack(y);
    let stat = &grad + c.tr_mul(lambda);
    let feas = c * &ystack;
    let mut rhs = DVector::zeros(nv + na);
    rhs.rows_mut(0, nv).copy_from(&(-&stat));
    rhs.rows_mut(nv, na).copy_from(&(-&feas));
    if matrix.iter().chain(rhs.iter()).any(|v| !v.is_finite()) || !obj.is_finite() {
        return Err(Error::NonFiniteAssembly);
    }
    Ok(KktSystem {
        matrix,
        rhs,
        objective: obj,
        stationarity: stat.norm(),
        feasibility: feas.norm(),
    })
}

/// Assembles the Gauss-Newton saddle system at `(y, lambda)`.
pub fn assemble_kkt<P: ConstrainedLsq + ?Sized>(p: &P, y: &[DVector<f64>], lambda: &DVector<f64>) -> Result<KktSystem> {
    assemble_timed(p, y, lambda, &mut SqpTiming::default())
}

/// Relative backward error above which a saddle solution is rejected.
const BACKWARD_TOL: f64 = 1e-8;

/// Primal steps below this fraction of the iterate are accepted without a line search.
const NEGLIGIBLE_STEP: f64 = 1e-13;

const ROUNDOFF_FACTOR: f64 = 64.0;

/// Dense LU solve of the saddle system; rejects solutions with a large backward error.
pub fn solve_saddle(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = matrix.clone().lu();
    let x = lu.solve(rhs).ok_or(Error::SingularSaddle)?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularSaddle);
    }
    let resid = (matrix * &x - rhs).norm();
    if resid > BACKWARD_TOL * (matrix.norm() * x.norm() + rhs.norm()) {
        return Err(Error::SingularSaddle);
    }
    Ok(x)
}

fn merit<P: ConstrainedLsq + ?Sized>(p: &P, y: &[DVector<f64>], rho: f64) -> Result<f64> {
    let c = p.constraints();
    Ok(objective(p, y)? + rho * (c * stack(y)).norm())
}

/// Line-searched Gauss-Newton SQP from `(y0, lambda0)`.
pub fn sqp_solve<P: ConstrainedLsq + ?Sized>(
    p: &P,
    y0: &[DVector<f64>],
    lambda0: &DVector<f64>,
    opts: &SqpOptions,
) -> Result<SqpResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::Invalid("SQP tolerance must be positive".into()));
    }
    if y0.len() != p.n_blocks() || y0.iter().enumerate().any(|(i, b)| b.len() != p.block_dim(i)) {
        return Err(Error::Dimension("initial iterate does not match the block layout".into()));
    }
    let start = Instant::now();
    let off = offsets(p);
    let nv = off[p.n_blocks()];
    let mut timing = SqpTiming::default();
    let mut y: Vec<DVector<f64>> = y0.to_vec();
    let mut lambda = lambda0.clone();
    let mut trace = Vec::new();
    let mut threshold = None;
    let cnorm = p.constraints().norm();
    for iter in 0..=opts.max_iters {
        let kkt = assemble_timed(p, &y, &lambda, &mut timing)?;
        let norm = kkt.kkt_norm();
        let thr = *threshold.get_or_insert(opts.tol * norm.max(1.0));
        let mut entry = SqpIteration {
            iter,
            stationarity: kkt.stationarity,
            feasibility: kkt.feasibility,
            kkt_norm: norm,
            objective: kkt.objective,
            alpha: 0.0,
        };
        if norm <= thr {
            trace.push(entry);
            timing.total = start.elapsed().as_secs_f64();
            return Ok(SqpResult {
                y,
                lambda,
                iterations: iter,
                objective: kkt.objective,
                trace,
                timing,
            });
        }
        if iter == opts.max_iters {
            trace.push(entry);
            break;
        }
        let t0 = Instant::now();
        let step = solve_saddle(&kkt.matrix, &kkt.rhs)?;
        timing.solve += t0.elapsed().as_secs_f64();
        let dy = split(&step.rows(0, nv).into_owned(), &off);
        let dl = step.rows(nv, step.len() - nv).into_owned();
        let trial = |alpha: f64| -> Vec<DVector<f64>> { y.iter().zip(&dy).map(|(a, b)| a + b * alpha).collect() };
        let mut alpha = 1.0;
        let ynorm = y.iter().map(|b| b.amax()).fold(0.0, f64::max);
        let dynorm = dy.iter().map(|b| b.amax()).fold(0.0, f64::max);
        if opts.line_search && dynorm > NEGLIGIBLE_STEP * ynorm.max(1.0) {
            let rho = 10.0 * (&lambda + &dl).amax() + 1.0;
            let phi0 = kkt.objective + rho * kkt.feasibility;
            // Round-off in the objective and in the penalized constraint residual.
            let slack = 1e-12 * (1.0 + phi0) + rho * ROUNDOFF_FACTOR * f64::EPSILON * cnorm * (ynorm + dynorm);
            loop {
                let phi = merit(p, &trial(alpha), rho)?;
                if phi.is_finite() && phi <= phi0 + slack {
                    break;
                }
                alpha *= 0.5;
                if alpha < opts.min_step {
                    trace.push(entry);
                    return Err(Error::SqpNonConvergence {
                        iters: iter,
                        last: norm,
                    });
                }
            }
        }
        entry.alpha = alpha;
        trace.push(entry);
        y = trial(alpha);
        // The multiplier of the linearized subproblem does not depend on the primal step length.
        lambda += dl;
    }
    Err(Error::SqpNonConvergence {
        iters: opts.max_iters,
        last: trace.last().map_or(f64::NAN, |t| t.kkt_norm),
    })
}

/// Null-space basis of the reduced strong-constraint matrix
/// `[Abar_1 Phi_Gamma_1, ..., Abar_m Phi_Gamma_m]`, with its per-subdomain row blocks.
pub fn nullspace_reduce(c: &ConstraintSet, bases: &BasisSet) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    if !c.is_strong() {
        return Err(Error::Invalid("null-space reduction requires strong constraints".into()));
    }
    let widths: Vec<usize> = bases.subdomains.iter().map(|b| b.interface.ncols()).collect();
    let total: usize = widths.iter().sum();
    let mut d = DMatrix::zeros(c.n_a, total);
    let mut col = 0;
    for (a, b) in c.matrices.iter().zip(&bases.subdomains) {
        let block = a * &b.interface;
        d.view_mut((0, col), (c.n_a, block.ncols())).copy_from(&block);
        col += block.ncols();
    }
    let nbar = if c.n_a == 0 {
        DMatrix::identity(total, total)
    } else {
        linalg::null_space(&d, CONSTRAINT_RANK_TOL)
    };
    let mut blocks = Vec::with_capacity(widths.len());
    let mut row = 0;
    for w in widths {
        blocks.push(nbar.rows(row, w).into_owned());
        row += w;
    }
    Ok((nbar, blocks))
}

/// Unconstrained Gauss-Newton on `y = N z`, used as a reference for strong constraints.
pub fn nullspace_gauss_newton<P: ConstrainedLsq + ?Sized>(
    p: &P,
    n: &DMatrix<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<Vec<DVector<f64>>> {
    let off = offsets(p);
    let mut z = DVector::zeros(n.ncols());
    for it in 0..=max_iters {
        let y = split(&(n * &z), &off);
        let mut jt_r = DVector::zeros(n.ncols());
        let mut jtj = DMatrix::zeros(n.ncols(), n.ncols());
        for i in 0..p.n_blocks() {
            let (r, m) = p.evaluate_block(i, y[i].as_slice(), true)?;
            let m = m.ok_or(Error::Invalid("block Jacobian missing".into()))?;
            let jn = m * n.rows(off[i], off[i + 1] - off[i]);
            jt_r += jn.tr_mul(&r);
            jtj += jn.tr_mul(&jn);
        }
        if jt_r.norm() <= tol {
            return Ok(y);
        }
        if it == max_iters {
            break;
        }
        let dz = jtj.lu().solve(&(-jt_r)).ok_or(Error::SingularSaddle)?;
        z += dz;
    }
    Err(Error::SqpNonConvergence {
        iters: max_iters,
        last: f64::NAN,
    })
}
