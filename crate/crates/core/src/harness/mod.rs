//! Error metrics, the operation-count model, parameter studies, reporting and
//! file formats.

pub mod config;
pub mod cost;
pub mod ddrb;
pub mod pipeline;
pub mod report;

use crate::decomp::Decomposition;
use crate::error::{Error, Result};
use crate::sqp::{RomProblem, RomSolution};

pub use config::{Config, ConstraintSpec, HyperSpec, ProblemConfig, ProblemName, RunSpec, StudyGrid};
pub use cost::{cost_model, CostDims, CostEstimate, SubdomainDims};
pub use pipeline::{expand_grid, run_online, run_study, scheme_of, time_fom, Offline, RunOutcome, StudyOutput};
pub use report::{pareto_front, read_csv, report, write_csv, Method, RunRecord, CSV_COLUMNS};

/// Root-mean-square over subdomains of the relative state error,
/// `sqrt((1/m) sum_i ||xt_i - x_i||^2 / ||x_i||^2)` with `x_i = [x_Omega_i; x_Gamma_i]`.
pub fn relative_error_parts(interior: &[Vec<f64>], interface: &[Vec<f64>], reference: &[f64], d: &Decomposition) -> Result<f64> {
    if reference.len() != d.n {
        return Err(Error::Dimension("reference state length".into()));
    }
    let m = d.n_subdomains();
    let mut acc = 0.0;
    for i in 0..m {
        let x = d.subdomain_state(i, reference);
        let xt: Vec<f64> = interior[i].iter().chain(&interface[i]).copied().collect();
        if xt.len() != x.len() {
            return Err(Error::Dimension(format!("subdomain {i} state length")));
        }
        let den: f64 = x.iter().map(|v| v * v).sum();
        if den == 0.0 {
            return Err(Error::ZeroReference(i));
        }
        let num: f64 = xt.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
        acc += num / den;
    }
    Ok((acc / m as f64).sqrt())
}

pub fn relative_error(rom: &RomSolution, reference: &[f64], d: &Decomposition) -> Result<f64> {
    relative_error_parts(&rom.interior, &rom.interface, reference, d)
}

/// `(sum_i ||B_i r_i(xt_Omega_i, xt_Gamma_i)||^2)^(1/2)` at the reduced solution.
pub fn aposteriori_residual(rom: &RomProblem, sol: &RomSolution) -> Result<f64> {
    rom.weighted_residual_norm(&sol.interior, &sol.interface)
}
