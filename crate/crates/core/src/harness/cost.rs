//! Floating-point operation counts of one SQP iteration.

use serde::{Deserialize, Serialize};

use crate::bases::BasisKind;

/// Dimensions of one subdomain entering the operation counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubdomainDims {
    /// Interior basis width (the shared width for full-subdomain bases).
    pub n_hat_interior: usize,
    /// Interface basis width (the shared width for full-subdomain bases).
    pub n_hat_interface: usize,
    /// Sampled interior states.
    pub n_s_interior: usize,
    /// Sampled interface states.
    pub n_s_interface: usize,
    /// Sampled residual rows.
    pub n_s_residual: usize,
    /// Rows of the weighting matrix.
    pub n_b: usize,
    /// Flops per residual entry.
    pub c_r: f64,
    /// Flops per Jacobian row.
    pub c_j: f64,
    /// Average Jacobian nonzeros per row in interior columns.
    pub w_interior: f64,
    /// Average Jacobian nonzeros per row in interface columns.
    pub w_interface: f64,
    /// Whether the weighting matrix is dense (gappy POD).
    pub dense_weighting: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostDims {
    pub subdomains: Vec<SubdomainDims>,
    pub n_a: usize,
}

/// Per-step counts; parallel steps are listed per subdomain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub step1: Vec<f64>,
    pub step2: Vec<f64>,
    pub step3: Vec<f64>,
    pub step4: f64,
    pub step5: f64,
    pub step6: f64,
    pub step7: f64,
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max)
}

impl CostEstimate {
    /// Assembly cost with parallel steps charged as the max over subdomains.
    pub fn assembly(&self) -> f64 {
        max_of(&self.step1) + max_of(&self.step2) + max_of(&self.step3) + self.step4
    }

    pub fn solve(&self) -> f64 {
        self.step5 + self.step6 + self.step7
    }

    pub fn total(&self) -> f64 {
        self.assembly() + self.solve()
    }
}

/// Evaluates the operation-count formulas of the assembly and solve steps.
///
/// For full-subdomain bases both widths of a subdomain equal its coupled
/// basis width and the saddle system holds one copy of the coordinates.
pub fn cost_model(dims: &CostDims, kind: BasisKind) -> CostEstimate {
    let n_a = dims.n_a as f64;
    let mut step1 = Vec::new();
    let mut step2 = Vec::new();
    let mut step3 = Vec::new();
    let mut system = n_a;
    let mut step6 = 0.0;
    for s in &dims.subdomains {
        let (ni, ng) = (s.n_hat_interior as f64, s.n_hat_interface as f64);
        let (si, sg, sr, nb) = (
            s.n_s_interior as f64,
            s.n_s_interface as f64,
            s.n_s_residual as f64,
            s.n_b as f64,
        );
        step1.push(2.0 * si * ni + 2.0 * sg * ng);
        let dense = if s.dense_weighting {
            2.0 * nb * sr * (1.0 + ni + ng)
        } else {
            0.0
        };
        step2.push(
            sr * s.c_r + sr * s.c_j + 2.0 * sr * s.w_interior * ni + 2.0 * sr * s.w_interface * ng + 4.0 * n_a * ng + dense,
        );
        step3.push(2.0 * ni * nb + 2.0 * ng * nb + ng + nb * nb * (ng * ng + 2.0 * ng * ni + ni * ni));
        let width = if kind == BasisKind::FullSubdomain { ni } else { ni + ng };
        system += width;
        step6 += 2.0 * width;
    }
    CostEstimate {
        step1,
        step2,
        step3,
        step4: 2.0 * dims.subdomains.len() as f64 * n_a,
        step5: system.powi(3) / 3.0,
        step6,
        step7: 2.0 * n_a,
    }
}
