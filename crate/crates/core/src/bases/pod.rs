use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{normalize_signs, thin_svd};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOL: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct PodResult {
    pub basis: DMatrix<f64>,
    pub sigma: Vec<f64>,
    /// Discarded-energy fraction used for truncation.
    pub upsilon: f64,
}

impl PodResult {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Quantity accumulated by the energy criterion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyMeasure {
    /// `sigma_j^2`, the captured Frobenius energy.
    #[default]
    Squared,
    /// `sigma_j` itself.
    Singular,
}

/// Smallest `p` with `sum_{j<=p} e_j >= (1 - upsilon) sum_j e_j`, capped at the numerical
/// rank, where `e_j` is `sigma_j` or `sigma_j^2`. Tail sums keep tiny `upsilon` exact.
pub fn truncation_rank(sigma: &[f64], upsilon: f64, measure: EnergyMeasure) -> usize {
    let e: Vec<f64> = match measure {
        EnergyMeasure::Squared => sigma.iter().map(|s| s * s).collect(),
        EnergyMeasure::Singular => sigma.to_vec(),
    };
    let total: f64 = e.iter().sum();
    let smax = sigma.first().copied().unwrap_or(0.0);
    let numerical_rank = sigma.iter().filter(|&&s| s > RANK_TOL * smax).count();
    let mut tail = vec![0.0; e.len() + 1];
    for i in (0..e.len()).rev() {
        tail[i] = tail[i + 1] + e[i];
    }
    let p = (1..=sigma.len())
        .find(|&i| tail[i] <= upsilon * total)
        .unwrap_or(sigma.len());
    p.min(numerical_rank).max(1)
}

/// Proper orthogonal decomposition with the squared-singular-value energy criterion.
pub fn pod(snapshots: &DMatrix<f64>, upsilon: f64) -> Result<PodResult> {
    pod_with(snapshots, upsilon, EnergyMeasure::Squared)
}

/// Proper orthogonal decomposition; `upsilon` is the energy fraction allowed to be discarded.
pub fn pod_with(snapshots: &DMatrix<f64>, upsilon: f64, measure: EnergyMeasure) -> Result<PodResult> {
    if snapshots.nrows() == 0 || snapshots.ncols() == 0 {
        return Err(Error::EmptyInput("snapshot matrix"));
    }
    if !(0.0..=1.0).contains(&upsilon) {
        return Err(Error::Invalid(format!("energy criterion {upsilon} outside [0, 1]")));
    }
    if snapshots.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("snapshot matrix contains non-finite entries".into()));
    }
    if snapshots.amax() == 0.0 {
        return Err(Error::ZeroSnapshots);
    }
    let svd = thin_svd(snapshots);
    let p = truncation_rank(&svd.sigma, upsilon, measure);
    let mut basis = svd.u.columns(0, p).into_owned();
    normalize_signs(&mut basis);
    Ok(PodResult {
        basis,
        sigma: svd.sigma,
        upsilon,
    })
}
