//! Structured meshes and the two benchmark full-order models.
//!
//! Free DOFs are numbered node by node with `x1` running fastest over the
//! interior nodes; for the Burgers model the two velocity components of a node
//! are stored consecutively as `(u1, u2)`.

mod burgers;
mod heat;
mod newton;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

pub use burgers::{burgers_exact, BurgersConstants};
pub use newton::{newton_solve, FomSolution, NewtonOptions};

/// Tensor-product grid of `nx x ny` cells on an axis-aligned box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuredMesh {
    pub nx: usize,
    pub ny: usize,
    /// `[[x1_min, x1_max], [x2_min, x2_max]]`
    pub domain_box: [[f64; 2]; 2],
    pub dofs_per_node: usize,
}

impl StructuredMesh {
    pub fn new(nx: usize, ny: usize, domain_box: [[f64; 2]; 2], dofs_per_node: usize) -> Self {
        assert!(nx >= 2 && ny >= 2, "mesh needs at least one interior node");
        assert!(dofs_per_node >= 1);
        Self {
            nx,
            ny,
            domain_box,
            dofs_per_node,
        }
    }

    pub fn hx(&self) -> f64 {
        (self.domain_box[0][1] - self.domain_box[0][0]) / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        (self.domain_box[1][1] - self.domain_box[1][0]) / self.ny as f64
    }

    pub fn node_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.domain_box[0][0] + i as f64 * self.hx(),
            self.domain_box[1][0] + j as f64 * self.hy(),
        )
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    /// Interior nodes per row of the grid.
    pub fn free_nx(&self) -> usize {
        self.nx - 1
    }

    pub fn free_node_count(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }

    pub fn free_dof_count(&self) -> usize {
        self.free_node_count() * self.dofs_per_node
    }

    /// Index of grid node `(i, j)` among free nodes, `None` on the boundary.
    pub fn free_node(&self, i: usize, j: usize) -> Option<usize> {
        if self.is_boundary(i, j) {
            None
        } else {
            Some((j - 1) * (self.nx - 1) + (i - 1))
        }
    }

    /// Grid indices of a free node.
    pub fn free_node_grid(&self, node: usize) -> (usize, usize) {
        (node % (self.nx - 1) + 1, node / (self.nx - 1) + 1)
    }
}

/// Axis-aligned box of admissible parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDomain {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl ParamDomain {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, mu: [f64; 2]) -> bool {
        (0..2).all(|k| mu[k] >= self.lo[k] && mu[k] <= self.hi[k])
    }

    pub fn midpoint(&self) -> [f64; 2] {
        [0.5 * (self.lo[0] + self.hi[0]), 0.5 * (self.lo[1] + self.hi[1])]
    }

    /// Equispaced `n1 x n2` grid including the box corners, `mu1` fastest.
    pub fn grid(&self, n1: usize, n2: usize) -> Vec<[f64; 2]> {
        let pts = |k: usize, n: usize| -> Vec<f64> {
            if n == 1 {
                vec![0.5 * (self.lo[k] + self.hi[k])]
            } else {
                (0..n)
                    .map(|i| self.lo[k] + (self.hi[k] - self.lo[k]) * i as f64 / (n - 1) as f64)
                    .collect()
            }
        };
        let (p1, p2) = (pts(0, n1), pts(1, n2));
        p2.iter().flat_map(|&b| p1.iter().map(move |&a| [a, b])).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemKind {
    HeatFem,
    BurgersFd,
}

/// A parameterized residual `r(x; mu) = 0` on a structured mesh.
#[derive(Debug)]
pub struct FomProblem {
    pub kind: ProblemKind,
    pub mesh: StructuredMesh,
    pub burgers: BurgersConstants,
    pub param_domain: ParamDomain,
    full_plan: OnceLock<RowPlan>,
}

impl Clone for FomProblem {
    fn clone(&self) -> Self {
        Self {
            kind: self.kind,
            mesh: self.mesh.clone(),
            burgers: self.burgers,
            param_domain: self.param_domain,
            full_plan: OnceLock::new(),
        }
    }
}

/// Residual entries and (optionally) Jacobian rows for a subset of residual rows.
#[derive(Clone, Debug)]
pub struct RowEvaluation {
    pub residual: Vec<f64>,
    /// `rows.len() x n` with global column indices; empty values when not requested.
    pub jacobian: Option<CsrMatrix>,
}

/// Precomputed evaluation schedule for a set of residual rows.
#[derive(Clone, Debug)]
pub struct RowPlan {
    rows: Vec<usize>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    inner: PlanKind,
}

#[derive(Clone, Debug)]
enum PlanKind {
    Heat(heat::HeatPlan),
    Burgers(burgers::BurgersPlan),
}

impl RowPlan {
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Union of the structural columns of all planned rows, sorted.
    pub fn touched_columns(&self) -> Vec<usize> {
        let mut cols = self.col_idx.clone();
        cols.sort_unstable();
        cols.dedup();
        cols
    }
}

impl FomProblem {
    pub fn new(
        kind: ProblemKind,
        mesh: StructuredMesh,
        burgers: BurgersConstants,
        param_domain: ParamDomain,
    ) -> Self {
        let dpn = match kind {
            ProblemKind::HeatFem => 1,
            ProblemKind::BurgersFd => 2,
        };
        assert_eq!(mesh.dofs_per_node, dpn, "dofs per node does not match the model");
        Self {
            kind,
            mesh,
            burgers,
            param_domain,
            full_plan: OnceLock::new(),
        }
    }

    /// Nonlinear diffusion on the unit square with `nx x ny` bilinear elements.
    pub fn heat(nx: usize, ny: usize) -> Self {
        Self::new(
            ProblemKind::HeatFem,
            StructuredMesh::new(nx, ny, [[0.0, 1.0], [0.0, 1.0]], 1),
            BurgersConstants::default(),
            ParamDomain::new([0.01, 0.01], [10.0, 10.0]),
        )
    }

    pub fn heat_coarse() -> Self {
        Self::heat(40, 40)
    }

    pub fn heat_fine() -> Self {
        Self::heat(80, 80)
    }

    /// Steady 2D Burgers on `[-1,1] x [0,0.05]` with exact-solution boundary data.
    pub fn burgers(nx: usize, ny: usize) -> Self {
        Self::new(
            ProblemKind::BurgersFd,
            StructuredMesh::new(nx, ny, [[-1.0, 1.0], [0.0, 0.05]], 2),
            BurgersConstants::default(),
            ParamDomain::new([1.0, 5.0], [10000.0, 25.0]),
        )
    }

    pub fn burgers_coarse() -> Self {
        Self::burgers(120, 12)
    }

    pub fn burgers_fine() -> Self {
        Self::burgers(240, 12)
    }

    pub fn with_param_domain(mut self, domain: ParamDomain) -> Self {
        self.param_domain = domain;
        self
    }

    /// Number of free DOFs (residual dimension).
    pub fn n(&self) -> usize {
        self.mesh.free_dof_count()
    }

    pub fn dofs_per_node(&self) -> usize {
        self.mesh.dofs_per_node
    }

    /// Free node carrying a DOF.
    pub fn dof_node(&self, dof: usize) -> usize {
        dof / self.mesh.dofs_per_node
    }

    /// Grid indices `(i, j)` of the node carrying a DOF.
    pub fn dof_grid(&self, dof: usize) -> (usize, usize) {
        self.mesh.free_node_grid(self.dof_node(dof))
    }

    pub fn check_param(&self, mu: [f64; 2]) -> Result<()> {
        if mu.iter().all(|m| m.is_finite()) && self.param_domain.contains(mu) {
            Ok(())
        } else {
            Err(Error::ParameterOutOfDomain(mu[0], mu[1]))
        }
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::Dimension(format!(
                "state has length {}, expected {}",
                x.len(),
                self.n()
            )));
        }
        if x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteState)
        }
    }

    /// Structural columns of residual row `row`, sorted.
    pub fn stencil(&self, row: usize) -> Vec<usize> {
        match self.kind {
            ProblemKind::HeatFem => heat::stencil(&self.mesh, row),
            ProblemKind::BurgersFd => burgers::stencil(&self.mesh, row),
        }
    }

    /// Jacobian sparsity pattern with unit values.
    pub fn pattern(&self) -> CsrMatrix {
        let plan = self.full_plan();
        let ones = vec![1.0; plan.col_idx.len()];
        CsrMatrix::new(
            self.n(),
            self.n(),
            plan.row_ptr.clone(),
            plan.col_idx.clone(),
            ones,
        )
    }

    /// Evaluation plan for the given residual rows (any order, no duplicates).
    pub fn row_plan(&self, rows: &[usize]) -> RowPlan {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for &r in rows {
            assert!(r < self.n(), "row {r} out of range");
            col_idx.extend(self.stencil(r));
            row_ptr.push(col_idx.len());
        }
        let inner = match self.kind {
            ProblemKind::HeatFem => PlanKind::Heat(heat::HeatPlan::new(&self.mesh, rows, &row_ptr, &col_idx)),
            ProblemKind::BurgersFd => {
                PlanKind::Burgers(burgers::BurgersPlan::new(&self.mesh, rows, &row_ptr, &col_idx))
            }
        };
        RowPlan {
            rows: rows.to_vec(),
            row_ptr,
            col_idx,
            inner,
        }
    }

    pub fn full_plan(&self) -> &RowPlan {
        self.full_plan.get_or_init(|| {
            let rows: Vec<usize> = (0..self.n()).collect();
            self.row_plan(&rows)
        })
    }

    /// Evaluates planned residual rows (and Jacobian rows) at a full-length state.
    ///
    /// Only the state entries in the stencils of the planned rows are read.
    pub fn evaluate(
        &self,
        plan: &RowPlan,
        x: &[f64],
        mu: [f64; 2],
        with_jacobian: bool,
    ) -> Result<RowEvaluation> {
        self.check_param(mu)?;
        if x.len() != self.n() {
            return Err(Error::Dimension(format!(
                "state has length {}, expected {}",
                x.len(),
                self.n()
            )));
        }
        let mut residual = vec![0.0; plan.rows.len()];
        let mut jac_vals = if with_jacobian {
            vec![0.0; plan.col_idx.len()]
        } else {
            Vec::new()
        };
        match &plan.inner {
            PlanKind::Heat(p) => heat::evaluate(&self.mesh, p, x, mu, &mut residual, &mut jac_vals)?,
            PlanKind::Burgers(p) => burgers::evaluate(
                &self.mesh,
                &self.burgers,
                p,
                x,
                mu,
                &mut residual,
                &mut jac_vals,
            )?,
        }
        let jacobian = with_jacobian.then(|| {
            CsrMatrix::new(
                plan.rows.len(),
                self.n(),
                plan.row_ptr.clone(),
                plan.col_idx.clone(),
                jac_vals,
            )
        });
        Ok(RowEvaluation { residual, jacobian })
    }

    pub fn residual(&self, x: &[f64], mu: [f64; 2]) -> Result<Vec<f64>> {
        self.check_state(x)?;
        Ok(self.evaluate(self.full_plan(), x, mu, false)?.residual)
    }

    pub fn jacobian(&self, x: &[f64], mu: [f64; 2]) -> Result<CsrMatrix> {
        Ok(self.residual_and_jacobian(x, mu)?.1)
    }

    pub fn residual_and_jacobian(&self, x: &[f64], mu: [f64; 2]) -> Result<(Vec<f64>, CsrMatrix)> {
        self.check_state(x)?;
        let ev = self.evaluate(self.full_plan(), x, mu, true)?;
        Ok((ev.residual, ev.jacobian.expect("requested")))
    }

    /// Values on the full `(nx+1) x (ny+1)` grid including Dirichlet data,
    /// indexed `[component][j * (nx + 1) + i]`.
    pub fn full_field(&self, x: &[f64], mu: [f64; 2]) -> Result<Vec<Vec<f64>>> {
        self.check_state(x)?;
        let m = &self.mesh;
        let dpn = m.dofs_per_node;
        let mut out = vec![vec![0.0; m.node_count()]; dpn];
        for j in 0..=m.ny {
            for i in 0..=m.nx {
                let k = j * (m.nx + 1) + i;
                match m.free_node(i, j) {
                    Some(node) => {
                        for c in 0..dpn {
                            out[c][k] = x[node * dpn + c];
                        }
                    }
                    None => {
                        if self.kind == ProblemKind::BurgersFd {
                            let (x1, x2) = m.coords(i, j);
                            let (u1, u2) = burgers_exact(x1, x2, mu, &self.burgers)?;
                            out[0][k] = u1;
                            out[1][k] = u2;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Exact Burgers solution sampled at the free DOFs.
    pub fn burgers_exact_state(&self, mu: [f64; 2]) -> Result<Vec<f64>> {
        let m = &self.mesh;
        let mut x = vec![0.0; self.n()];
        for node in 0..m.free_node_count() {
            let (i, j) = m.free_node_grid(node);
            let (x1, x2) = m.coords(i, j);
            let (u1, u2) = burgers_exact(x1, x2, mu, &self.burgers)?;
            x[2 * node] = u1;
            x[2 * node + 1] = u2;
        }
        Ok(x)
    }
}
