//! Offline data with cached bases, single online runs and parameter studies.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::{ConstraintSpec, RunSpec, StudyGrid};
use super::report::{Method, RunRecord};
use super::{aposteriori_residual, relative_error};
use crate::bases::{build_bases, build_residual_bases, BasisConfig, BasisKind, BasisSet, ResidualBasis, SnapshotSource};
use crate::decomp::{build_decomposition, build_strong_constraints, build_weak_constraints_uniform, ConstraintSet, Decomposition};
use crate::error::{Error, Result};
use crate::hyper::{build_hyper, HyperConfig, HyperData, HyperScheme, SeedRule};
use crate::mesh_fom::{newton_solve, FomProblem, FomSolution, NewtonOptions};
use crate::sqp::{reconstruct_global, ReconstructMode, RomProblem, RomSolution, SqpOptions, SqpTiming};
use crate::training::SnapshotStore;

type BasisKey = (BasisKind, u64, u64);
type HyperKey = (HyperScheme, u64, u64, SeedRule);

/// Training data of one problem and decomposition, with memoized bases.
pub struct Offline {
    pub problem: FomProblem,
    pub decomposition: Decomposition,
    pub states: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
    /// Bottom-up snapshots; when present they replace `states` for basis construction.
    pub subdomain_states: Option<Vec<DMatrix<f64>>>,
    basis_cache: RefCell<HashMap<BasisKey, Rc<BasisSet>>>,
    residual_cache: RefCell<HashMap<u64, Rc<ResidualBasis>>>,
    hyper_cache: RefCell<HashMap<HyperKey, Rc<HyperData>>>,
}

impl Offline {
    pub fn new(problem: FomProblem, split: (usize, usize), store: &SnapshotStore) -> Result<Self> {
        let decomposition = build_decomposition(&problem, split)?;
        Ok(Self::with_decomposition(problem, decomposition, store.states.clone(), store.residual_matrix()))
    }

    pub fn with_decomposition(
        problem: FomProblem,
        decomposition: Decomposition,
        states: DMatrix<f64>,
        residuals: DMatrix<f64>,
    ) -> Self {
        Self {
            problem,
            decomposition,
            states,
            residuals,
            subdomain_states: None,
            basis_cache: RefCell::default(),
            residual_cache: RefCell::default(),
            hyper_cache: RefCell::default(),
        }
    }

    /// Offline data from bottom-up training; no residual snapshots are available.
    pub fn bottom_up(problem: FomProblem, decomposition: Decomposition, blocks: Vec<DMatrix<f64>>) -> Self {
        let n = problem.n();
        let mut off = Self::with_decomposition(problem, decomposition, DMatrix::zeros(n, 0), DMatrix::zeros(n, 0));
        off.subdomain_states = Some(blocks);
        off
    }

    pub fn bases(&self, kind: BasisKind, upsilon_state: f64, upsilon_bnd: f64) -> Result<Rc<BasisSet>> {
        let key = (kind, upsilon_state.to_bits(), upsilon_bnd.to_bits());
        if let Some(b) = self.basis_cache.borrow().get(&key) {
            return Ok(b.clone());
        }
        let cfg = BasisConfig {
            kind,
            upsilon_interior: upsilon_state,
            upsilon_interface: upsilon_bnd,
        };
        let src = match &self.subdomain_states {
            Some(blocks) => SnapshotSource::PerSubdomain(blocks),
            None => SnapshotSource::Global(&self.states),
        };
        let b = Rc::new(build_bases(src, &self.decomposition, &cfg)?);
        self.basis_cache.borrow_mut().insert(key, b.clone());
        Ok(b)
    }

    pub fn residual_basis(&self, upsilon: f64) -> Result<Rc<ResidualBasis>> {
        if let Some(b) = self.residual_cache.borrow().get(&upsilon.to_bits()) {
            return Ok(b.clone());
        }
        let b = Rc::new(build_residual_bases(&self.residuals, &self.decomposition, upsilon)?);
        self.residual_cache.borrow_mut().insert(upsilon.to_bits(), b.clone());
        Ok(b)
    }

    pub fn hyper(&self, method: Method, ratio: f64, upsilon_res: f64, seed_rule: SeedRule) -> Result<Rc<HyperData>> {
        let scheme = scheme_of(method);
        let key = match scheme {
            HyperScheme::Identity => (scheme, 0, 0, SeedRule::InterfaceNodes),
            _ => (scheme, ratio.to_bits(), upsilon_res.to_bits(), seed_rule),
        };
        if let Some(h) = self.hyper_cache.borrow().get(&key) {
            return Ok(h.clone());
        }
        let cfg = HyperConfig {
            scheme,
            ratio,
            n_w: None,
            seed_rule,
        };
        let h = if scheme == HyperScheme::Identity {
            build_hyper(&self.problem, &self.decomposition, None, &cfg)?
        } else {
            let rb = self.residual_basis(upsilon_res)?;
            build_hyper(&self.problem, &self.decomposition, Some(&rb), &cfg)?
        };
        let h = Rc::new(h);
        self.hyper_cache.borrow_mut().insert(key, h.clone());
        Ok(h)
    }

    pub fn constraints(&self, spec: ConstraintSpec, seed: u64) -> Result<ConstraintSet> {
        match spec {
            ConstraintSpec::Strong => Ok(build_strong_constraints(&self.decomposition)),
            ConstraintSpec::Weak(n_c) => build_weak_constraints_uniform(&self.decomposition, n_c, seed),
        }
    }
}

pub fn scheme_of(method: Method) -> HyperScheme {
    match method {
        Method::DdLspg => HyperScheme::Identity,
        Method::DdGnat => HyperScheme::GappyPod,
        Method::Collocation => HyperScheme::Collocation,
    }
}

/// Everything measured in one online run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunOutcome {
    pub record: RunRecord,
    /// Reduced coordinates per subdomain.
    pub n_hat: Vec<usize>,
    pub n_a: usize,
    /// Rank of the reduced constraint matrix.
    pub n_a_active: usize,
    /// Sample nodes per subdomain.
    pub n_s: Vec<usize>,
    pub iterations: usize,
    pub aposteriori: f64,
    pub max_port_discrepancy: f64,
    pub solution: RomSolution,
}

/// Solves the reduced problem at `mu` and compares with a reference FOM state.
pub fn run_online(
    off: &Offline,
    spec: &RunSpec,
    mu: [f64; 2],
    reference: &[f64],
    opts: &SqpOptions,
    repeats: usize,
) -> Result<RunOutcome> {
    let basis_bnd = if spec.basis == BasisKind::FullSubdomain {
        spec.upsilon_state
    } else {
        spec.upsilon_bnd
    };
    let bases = off.bases(spec.basis, spec.upsilon_state, basis_bnd)?;
    let constraints = off.constraints(spec.constraint, spec.seed)?;
    let hyper = off.hyper(spec.method, spec.ratio, spec.upsilon_res, spec.seed_rule)?;
    let rom = RomProblem::new(&off.problem, &off.decomposition, &bases, &constraints, &hyper, mu)?;
    let mut solution = rom.solve(opts)?;
    let mut timing = solution.timing;
    for _ in 1..repeats.max(1) {
        let t = rom.solve(opts)?.timing;
        timing.assembly_max += t.assembly_max;
        timing.assembly_total += t.assembly_total;
        timing.solve += t.solve;
        timing.total += t.total;
    }
    let r = repeats.max(1) as f64;
    solution.timing = SqpTiming {
        assembly_max: timing.assembly_max / r,
        assembly_total: timing.assembly_total / r,
        solve: timing.solve / r,
        total: timing.total / r,
    };
    let rel_err = relative_error(&solution, reference, &off.decomposition)?;
    let aposteriori = aposteriori_residual(&rom, &solution)?;
    let global = reconstruct_global(&solution, &off.decomposition, ReconstructMode::PortAverage)?;
    let gnat = spec.method != Method::DdLspg;
    Ok(RunOutcome {
        record: RunRecord {
            method: spec.method,
            basis: spec.basis,
            constraint: spec.constraint.label().to_string(),
            n_c: spec.constraint.n_c(),
            upsilon_state: spec.upsilon_state,
            upsilon_bnd: basis_bnd,
            upsilon_res: if gnat { spec.upsilon_res } else { 0.0 },
            ratio: if gnat { spec.ratio } else { 0.0 },
            rel_err,
            t_asm: solution.timing.assembly_max,
            t_solve: solution.timing.solve,
            t_total: solution.timing.total,
            seed: spec.seed,
        },
        n_hat: (0..bases.subdomains.len()).map(|i| bases.dim(i)).collect(),
        n_a: constraints.n_a,
        n_a_active: rom.n_active_constraints(),
        n_s: hyper.subdomains.iter().map(|h| h.sample_nodes.len()).collect(),
        iterations: solution.iterations,
        aposteriori,
        max_port_discrepancy: global.max_discrepancy,
        solution,
    })
}

/// Mean wall time of `repeats` FOM solves from a zero initial guess.
pub fn time_fom(problem: &FomProblem, mu: [f64; 2], opts: &NewtonOptions, repeats: usize) -> Result<(FomSolution, f64)> {
    let x0 = vec![0.0; problem.n()];
    let mut total = 0.0;
    let mut sol = None;
    for _ in 0..repeats.max(1) {
        let t0 = Instant::now();
        let s = newton_solve(problem, mu, &x0, opts)?;
        total += t0.elapsed().as_secs_f64();
        sol = Some(s);
    }
    Ok((sol.expect("at least one solve"), total / repeats.max(1) as f64))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyOutput {
    pub records: Vec<RunRecord>,
    /// `(run key, error)` for runs that failed.
    pub failures: Vec<(String, String)>,
    pub fom_time: f64,
}

/// Expands a study grid into run specifications (one per seed for weak constraints).
pub fn expand_grid(grid: &StudyGrid, base_seed: u64) -> Vec<Vec<RunSpec>> {
    let mut out = Vec::new();
    let res_grid = |m: Method| -> Vec<(f64, f64)> {
        if m == Method::DdLspg {
            vec![(0.0, 0.0)]
        } else {
            grid.upsilon_res
                .iter()
                .flat_map(|&u| grid.ratios.iter().map(move |&r| (u, r)))
                .collect()
        }
    };
    for &method in &grid.methods {
        for &basis in &grid.basis_kinds {
            let bnd: Vec<f64> = if basis == BasisKind::FullSubdomain {
                vec![f64::NAN]
            } else {
                grid.upsilon_bnd.clone()
            };
            for &us in &grid.upsilon_state {
                for &ub in &bnd {
                    for &(ur, ratio) in &res_grid(method) {
                        for &constraint in &grid.constraints {
                            let seeds = match constraint {
                                ConstraintSpec::Strong => 1,
                                ConstraintSpec::Weak(_) => grid.weak_seeds.max(1),
                            };
                            out.push(
                                (0..seeds as u64)
                                    .map(|k| RunSpec {
                                        method,
                                        basis,
                                        constraint,
                                        upsilon_state: us,
                                        upsilon_bnd: if ub.is_nan() { us } else { ub },
                                        upsilon_res: if method == Method::DdLspg { 1e-12 } else { ur },
                                        ratio: if method == Method::DdLspg { 2.0 } else { ratio },
                                        seed: base_seed + k,
                                        seed_rule: grid.seed_rule,
                                    })
                                    .collect(),
                            );
                        }
                    }
                }
            }
        }
    }
    out
}

fn run_key(s: &RunSpec) -> String {
    format!(
        "{}/{}/{}/us={:e}/ub={:e}/ur={:e}/ratio={}",
        s.method.name(),
        s.basis.name(),
        match s.constraint {
            ConstraintSpec::Strong => "strong".to_string(),
            ConstraintSpec::Weak(n) => format!("weak{n}"),
        },
        s.upsilon_state,
        s.upsilon_bnd,
        s.upsilon_res,
        s.ratio
    )
}

/// Runs every grid point at `mu`; weak-constraint points are averaged over their seeds.
pub fn run_study(
    off: &Offline,
    grid: &StudyGrid,
    mu: [f64; 2],
    sqp: &SqpOptions,
    newton: &NewtonOptions,
    base_seed: u64,
) -> Result<StudyOutput> {
    let (fom, fom_time) = time_fom(&off.problem, mu, newton, grid.timing_repeats)?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for group in expand_grid(grid, base_seed) {
        let mut runs = Vec::with_capacity(group.len());
        let mut failed = None;
        for spec in &group {
            match run_online(off, spec, mu, &fom.x, sqp, grid.timing_repeats) {
                Ok(o) => runs.push(o.record),
                Err(e) => {
                    failed = Some(e.to_string());
                    break;
                }
            }
        }
        if let Some(e) = failed {
            failures.push((run_key(&group[0]), e));
            continue;
        }
        let k = runs.len() as f64;
        let mut rec = runs[0].clone();
        rec.rel_err = runs.iter().map(|r| r.rel_err).sum::<f64>() / k;
        rec.t_asm = runs.iter().map(|r| r.t_asm).sum::<f64>() / k;
        rec.t_solve = runs.iter().map(|r| r.t_solve).sum::<f64>() / k;
        rec.t_total = runs.iter().map(|r| r.t_total).sum::<f64>() / k;
        records.push(rec);
    }
    if records.is_empty() && !failures.is_empty() {
        return Err(Error::Invalid(format!("every study run failed; first: {}", failures[0].1)));
    }
    Ok(StudyOutput {
        records,
        failures,
        fom_time,
    })
}
