//! Subdomain reduced bases: interior, port, skeleton, full-interface and
//! full-subdomain constructions, plus residual bases for hyper-reduction.

mod pod;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::decomp::Decomposition;
use crate::error::{Error, Result};
use crate::linalg::normalize_signs;

pub use pod::{pod, pod_with, truncation_rank, EnergyMeasure, PodResult, RANK_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    Port,
    Skeleton,
    FullInterface,
    FullSubdomain,
}

impl BasisKind {
    pub const ALL: [BasisKind; 4] = [
        BasisKind::Port,
        BasisKind::Skeleton,
        BasisKind::FullInterface,
        BasisKind::FullSubdomain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BasisKind::Port => "port",
            BasisKind::Skeleton => "skeleton",
            BasisKind::FullInterface => "full-interface",
            BasisKind::FullSubdomain => "full-subdomain",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Interior and interface bases of one subdomain. For the full-subdomain
/// family both blocks share the same coordinates.
#[derive(Clone, Debug)]
pub struct SubdomainBasis {
    pub interior: DMatrix<f64>,
    pub interface: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct BasisSet {
    pub kind: BasisKind,
    pub subdomains: Vec<SubdomainBasis>,
    /// Shared port bases (port kind only), indexed by port id.
    pub port_bases: Vec<DMatrix<f64>>,
    pub upsilon_interior: f64,
    pub upsilon_interface: f64,
}

impl BasisSet {
    pub fn coupled(&self) -> bool {
        self.kind == BasisKind::FullSubdomain
    }

    /// Number of generalized coordinates of subdomain `i`.
    pub fn dim(&self, i: usize) -> usize {
        let b = &self.subdomains[i];
        if self.coupled() {
            b.interior.ncols()
        } else {
            b.interior.ncols() + b.interface.ncols()
        }
    }

    pub fn total_dim(&self) -> usize {
        (0..self.subdomains.len()).map(|i| self.dim(i)).sum()
    }
}

/// Where state snapshots come from.
#[derive(Clone, Copy, Debug)]
pub enum SnapshotSource<'a> {
    /// Global `n x m` snapshot matrix.
    Global(&'a DMatrix<f64>),
    /// One `(n_Omega_i + n_Gamma_i) x m_i` block per subdomain, rows ordered interior then interface.
    PerSubdomain(&'a [DMatrix<f64>]),
}

pub fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

impl<'a> SnapshotSource<'a> {
    fn interior(&self, d: &Decomposition, i: usize) -> DMatrix<f64> {
        match self {
            SnapshotSource::Global(x) => select_rows(x, &d.subdomains[i].interior),
            SnapshotSource::PerSubdomain(b) => b[i].rows(0, d.subdomains[i].n_interior()).into_owned(),
        }
    }

    fn interface(&self, d: &Decomposition, i: usize) -> DMatrix<f64> {
        match self {
            SnapshotSource::Global(x) => select_rows(x, &d.subdomains[i].interface),
            SnapshotSource::PerSubdomain(b) => {
                let s = &d.subdomains[i];
                b[i].rows(s.n_interior(), s.n_interface()).into_owned()
            }
        }
    }

    fn full(&self, d: &Decomposition, i: usize) -> DMatrix<f64> {
        match self {
            SnapshotSource::Global(x) => {
                let s = &d.subdomains[i];
                let rows: Vec<usize> = s.interior.iter().chain(&s.interface).copied().collect();
                select_rows(x, &rows)
            }
            SnapshotSource::PerSubdomain(b) => b[i].clone(),
        }
    }

    /// Verifies the row counts against the decomposition.
    pub fn check(&self, d: &Decomposition) -> Result<()> {
        match self {
            SnapshotSource::Global(x) if x.nrows() != d.n => Err(Error::Dimension(format!(
                "snapshots have {} rows, expected {}",
                x.nrows(),
                d.n
            ))),
            SnapshotSource::PerSubdomain(b) if b.len() != d.n_subdomains() => {
                Err(Error::Dimension("one snapshot block per subdomain expected".into()))
            }
            SnapshotSource::PerSubdomain(b) => {
                for (blk, s) in b.iter().zip(&d.subdomains) {
                    if blk.nrows() != s.n_interior() + s.n_interface() {
                        return Err(Error::Dimension("subdomain snapshot block has wrong row count".into()));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// POD of each subdomain's interior snapshot rows.
pub fn build_interior_bases(src: SnapshotSource, d: &Decomposition, upsilon: f64) -> Result<Vec<PodResult>> {
    src.check(d)?;
    (0..d.n_subdomains()).map(|i| pod(&src.interior(d, i), upsilon)).collect()
}

/// Shared POD basis per port; snapshots taken from the port's anchor member.
pub fn build_port_bases(src: SnapshotSource, d: &Decomposition, upsilon: f64) -> Result<Vec<PodResult>> {
    src.check(d)?;
    d.ports
        .iter()
        .map(|p| {
            let anchor = p.members[0];
            let gamma = src.interface(d, anchor);
            pod(&select_rows(&gamma, &p.local[0]), upsilon)
        })
        .collect()
}

/// Block assembly of the port bases into each subdomain's interface basis.
pub fn assemble_port_interface(d: &Decomposition, port_bases: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    d.subdomains
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let width: usize = s.ports.iter().map(|&j| port_bases[j].ncols()).sum();
            let mut phi = DMatrix::zeros(s.n_interface(), width);
            let mut col = 0;
            for &j in &s.ports {
                let local = d.ports[j].local_for(i).expect("member");
                let pb = &port_bases[j];
                for (t, &row) in local.iter().enumerate() {
                    for c in 0..pb.ncols() {
                        phi[(row, col + c)] = pb[(t, c)];
                    }
                }
                col += pb.ncols();
            }
            phi
        })
        .collect()
}

/// Relative threshold on the pivoted-QR diagonal used to detect rank.
pub const RRQR_TOL: f64 = 1e-12;

/// Orthonormal basis for the range of `m` via column-pivoted QR.
pub fn rrqr_range(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let qr = m.clone().col_piv_qr();
    let r = qr.r();
    let diag0 = r[(0, 0)].abs();
    let k = r.nrows().min(r.ncols());
    let rank = (0..k).filter(|&t| diag0 > 0.0 && r[(t, t)].abs() > RRQR_TOL * diag0).count();
    let mut q = qr.q().columns(0, rank).into_owned();
    normalize_signs(&mut q);
    q
}

/// Skeleton POD restricted to every subdomain interface and re-orthonormalized.
pub fn build_skeleton_bases(x: &DMatrix<f64>, d: &Decomposition, upsilon: f64) -> Result<(PodResult, Vec<DMatrix<f64>>)> {
    SnapshotSource::Global(x).check(d)?;
    let skeleton = d.skeleton();
    let global = pod(&select_rows(x, &skeleton), upsilon)?;
    let bases = d
        .subdomains
        .iter()
        .map(|s| {
            let rows: Vec<usize> = s
                .interface
                .iter()
                .map(|c| skeleton.binary_search(c).expect("interface DOF on skeleton"))
                .collect();
            rrqr_range(&select_rows(&global.basis, &rows))
        })
        .collect();
    Ok((global, bases))
}

pub fn build_full_interface_bases(src: SnapshotSource, d: &Decomposition, upsilon: f64) -> Result<Vec<PodResult>> {
    src.check(d)?;
    (0..d.n_subdomains()).map(|i| pod(&src.interface(d, i), upsilon)).collect()
}

/// POD of stacked interior/interface rows, returned as `(stacked, interior, interface)`.
pub fn build_full_subdomain_bases(
    src: SnapshotSource,
    d: &Decomposition,
    upsilon: f64,
) -> Result<Vec<(PodResult, DMatrix<f64>, DMatrix<f64>)>> {
    src.check(d)?;
    (0..d.n_subdomains())
        .map(|i| {
            let p = pod(&src.full(d, i), upsilon)?;
            let s = &d.subdomains[i];
            let top = p.basis.rows(0, s.n_interior()).into_owned();
            let bottom = p.basis.rows(s.n_interior(), s.n_interface()).into_owned();
            Ok((p, top, bottom))
        })
        .collect()
}

/// Settings for one basis construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub kind: BasisKind,
    /// Energy criterion for interior bases (and for the coupled full-subdomain basis).
    pub upsilon_interior: f64,
    /// Energy criterion for interface, port and skeleton bases.
    pub upsilon_interface: f64,
}

pub fn build_bases(src: SnapshotSource, d: &Decomposition, cfg: &BasisConfig) -> Result<BasisSet> {
    src.check(d)?;
    let mut port_bases = Vec::new();
    let subdomains = match cfg.kind {
        BasisKind::FullSubdomain => build_full_subdomain_bases(src, d, cfg.upsilon_interior)?
            .into_iter()
            .map(|(_, interior, interface)| SubdomainBasis { interior, interface })
            .collect(),
        kind => {
            let interior = build_interior_bases(src, d, cfg.upsilon_interior)?;
            let interface: Vec<DMatrix<f64>> = match kind {
                BasisKind::Port => {
                    port_bases = build_port_bases(src, d, cfg.upsilon_interface)?
                        .into_iter()
                        .map(|p| p.basis)
                        .collect();
                    assemble_port_interface(d, &port_bases)
                }
                BasisKind::Skeleton => match src {
                    SnapshotSource::Global(x) => build_skeleton_bases(x, d, cfg.upsilon_interface)?.1,
                    SnapshotSource::PerSubdomain(_) => {
                        return Err(Error::Invalid("skeleton bases need global snapshots".into()))
                    }
                },
                _ => build_full_interface_bases(src, d, cfg.upsilon_interface)?
                    .into_iter()
                    .map(|p| p.basis)
                    .collect(),
            };
            interior
                .into_iter()
                .zip(interface)
                .map(|(p, g)| SubdomainBasis {
                    interior: p.basis,
                    interface: g,
                })
                .collect()
        }
    };
    Ok(BasisSet {
        kind: cfg.kind,
        subdomains,
        port_bases,
        upsilon_interior: cfg.upsilon_interior,
        upsilon_interface: cfg.upsilon_interface,
    })
}

/// Per-subdomain residual bases.
#[derive(Clone, Debug)]
pub struct ResidualBasis {
    pub bases: Vec<DMatrix<f64>>,
    pub snapshot_count: usize,
    pub upsilon: f64,
}

/// POD of each subdomain's rows of the residual snapshot matrix (`n x m_r`).
pub fn build_residual_bases(xr: &DMatrix<f64>, d: &Decomposition, upsilon: f64) -> Result<ResidualBasis> {
    if xr.ncols() == 0 {
        return Err(Error::EmptyInput("residual snapshots"));
    }
    SnapshotSource::Global(xr).check(d)?;
    let bases = d
        .subdomains
        .iter()
        .map(|s| pod(&select_rows(xr, &s.rows), upsilon).map(|p| p.basis))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualBasis {
        bases,
        snapshot_count: xr.ncols(),
        upsilon,
    })
}
