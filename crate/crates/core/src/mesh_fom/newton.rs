use serde::{Deserialize, Serialize};

use super::FomProblem;
use crate::error::{Error, Result};
use crate::linalg::{norm2, SparseLu};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonOptions {
    /// Relative tolerance: stop once `||r|| <= tol * max(1, ||r(x0)||)`.
    pub tol: f64,
    pub max_iters: usize,
    /// Smallest backtracking step before the iteration is declared stagnant.
    pub min_step: f64,
    /// Keep the residual vector at the start of every iteration.
    pub keep_residuals: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 50,
            min_step: 1.0 / 1024.0,
            keep_residuals: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FomSolution {
    pub x: Vec<f64>,
    pub mu: [f64; 2],
    pub newton_iters: usize,
    /// Residual 2-norm at every iterate, including the final one.
    pub residual_history: Vec<f64>,
    /// Residuals of all iterates except the converged one (when requested).
    pub residual_snapshots: Vec<Vec<f64>>,
}

/// Damped Newton-Raphson with residual-norm backtracking.
pub fn newton_solve(problem: &FomProblem, mu: [f64; 2], x0: &[f64], opts: &NewtonOptions) -> Result<FomSolution> {
    if opts.tol <= 0.0 {
        return Err(Error::Invalid("Newton tolerance must be positive".into()));
    }
    problem.check_param(mu)?;
    let mut x = x0.to_vec();
    let mut r = problem.residual(&x, mu)?;
    let mut rnorm = norm2(&r);
    let target = opts.tol * rnorm.max(1.0);
    let mut history = vec![rnorm];
    let mut snapshots = Vec::new();
    let mut lu: Option<SparseLu> = None;
    let mut iters = 0;
    while rnorm > target {
        if iters == opts.max_iters {
            return Err(Error::NonConvergence {
                iters,
                last: rnorm,
                history,
            });
        }
        if opts.keep_residuals {
            snapshots.push(r.clone());
        }
        let (_, jac) = problem.residual_and_jacobian(&x, mu)?;
        if lu.is_none() {
            lu = Some(SparseLu::analyze(&jac)?);
        }
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = lu.as_ref().unwrap().solve(&jac, &neg)?;
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + alpha * d).collect();
            let rt = if trial.iter().all(|v| v.is_finite()) {
                problem.residual(&trial, mu).ok()
            } else {
                None
            };
            if let Some(rt) = rt {
                let nt = norm2(&rt);
                if nt < rnorm {
                    x = trial;
                    r = rt;
                    rnorm = nt;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < opts.min_step {
                return Err(Error::NonConvergence {
                    iters: iters + 1,
                    last: rnorm,
                    history,
                });
            }
        }
        iters += 1;
        history.push(rnorm);
    }
    Ok(FomSolution {
        x,
        mu,
        newton_iters: iters,
        residual_history: history,
        residual_snapshots: snapshots,
    })
}
