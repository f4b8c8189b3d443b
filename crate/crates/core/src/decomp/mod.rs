//! Algebraic non-overlapping decomposition of a residual into subdomains,
//! ports shared between subdomains, and port compatibility constraints.

mod constraints;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::mesh_fom::FomProblem;

pub use constraints::{
    build_strong_constraints, build_weak_constraints, build_weak_constraints_uniform, effective_dofs,
    ConstraintMode, ConstraintSet,
};

/// Interface DOFs shared by a fixed group of subdomains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub id: usize,
    /// Member subdomains in increasing order; the first one is the anchor.
    pub members: Vec<usize>,
    /// Global DOF indices in increasing order.
    pub dofs: Vec<usize>,
    /// For each member, the positions of `dofs` within that member's interface list.
    pub local: Vec<Vec<usize>>,
}

impl Port {
    pub fn size(&self) -> usize {
        self.dofs.len()
    }

    /// Number of independent pairwise equality conditions.
    pub fn pair_count(&self) -> usize {
        self.members.len() - 1
    }

    /// Positions of the port DOFs inside the interface of subdomain `sub`.
    pub fn local_for(&self, sub: usize) -> Option<&[usize]> {
        self.members
            .iter()
            .position(|&m| m == sub)
            .map(|k| self.local[k].as_slice())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subdomain {
    /// Residual rows owned by the subdomain.
    pub rows: Vec<usize>,
    /// State DOFs touched only by this subdomain's rows.
    pub interior: Vec<usize>,
    /// State DOFs touched by this subdomain's rows and by other subdomains' rows.
    pub interface: Vec<usize>,
    /// Ports of this subdomain in increasing id order.
    pub ports: Vec<usize>,
    /// Owned grid-node block `[i_lo, i_hi, j_lo, j_hi]` (inclusive) for grid splits.
    pub node_block: Option<[usize; 4]>,
}

impl Subdomain {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_interface(&self) -> usize {
        self.interface.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub n: usize,
    pub subdomains: Vec<Subdomain>,
    pub ports: Vec<Port>,
    pub grid_split: Option<(usize, usize)>,
}

impl Decomposition {
    /// Derives interior, interface and port sets from a row partition and the
    /// Jacobian sparsity pattern.
    pub fn from_row_partition(pattern: &CsrMatrix, owner: &[usize], n_sub: usize) -> Result<Self> {
        let n = pattern.nrows();
        if owner.len() != n || pattern.ncols() != n {
            return Err(Error::Dimension("row owner list does not match the pattern".into()));
        }
        let mut rows = vec![Vec::new(); n_sub];
        for (r, &s) in owner.iter().enumerate() {
            if s >= n_sub {
                return Err(Error::Invalid(format!("row {r} assigned to subdomain {s}")));
            }
            rows[s].push(r);
        }
        if rows.iter().any(|r| r.is_empty()) {
            return Err(Error::DegenerateSplit(n_sub, 1));
        }
        let mut touchers: Vec<Vec<usize>> = vec![Vec::new(); n];
        for r in 0..n {
            let s = owner[r];
            for &c in pattern.row(r).0 {
                if !touchers[c].contains(&s) {
                    touchers[c].push(s);
                }
            }
        }
        let mut interior = vec![Vec::new(); n_sub];
        let mut interface = vec![Vec::new(); n_sub];
        let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        for (c, t) in touchers.iter_mut().enumerate() {
            t.sort_unstable();
            match t.len() {
                0 => {}
                1 => interior[t[0]].push(c),
                _ => {
                    for &s in t.iter() {
                        interface[s].push(c);
                    }
                    groups.entry(t.clone()).or_default().push(c);
                }
            }
        }
        let mut ports = Vec::with_capacity(groups.len());
        let mut sub_ports = vec![Vec::new(); n_sub];
        for (id, (members, dofs)) in groups.into_iter().enumerate() {
            let local = members
                .iter()
                .map(|&m| {
                    dofs.iter()
                        .map(|d| interface[m].binary_search(d).expect("port DOF in member interface"))
                        .collect()
                })
                .collect();
            for &m in &members {
                sub_ports[m].push(id);
            }
            ports.push(Port {
                id,
                members,
                dofs,
                local,
            });
        }
        let subdomains = (0..n_sub)
            .map(|s| Subdomain {
                rows: std::mem::take(&mut rows[s]),
                interior: std::mem::take(&mut interior[s]),
                interface: std::mem::take(&mut interface[s]),
                ports: std::mem::take(&mut sub_ports[s]),
                node_block: None,
            })
            .collect();
        Ok(Self {
            n,
            subdomains,
            ports,
            grid_split: None,
        })
    }

    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn n_ports(&self) -> usize {
        self.ports.len()
    }

    /// Strong constraint count `sum_j (|S_j| - 1) * size_j` (anchor-chain form).
    pub fn n_abar(&self) -> usize {
        self.ports.iter().map(|p| p.pair_count() * p.size()).sum()
    }

    /// Count of all pairwise equalities `sum_j C(|S_j|, 2) * size_j`, which
    /// includes conditions that are linear combinations of the chain ones.
    pub fn n_all_pairs(&self) -> usize {
        self.ports
            .iter()
            .map(|p| p.members.len() * (p.members.len() - 1) / 2 * p.size())
            .sum()
    }

    pub fn interior_values(&self, sub: usize, x: &[f64]) -> Vec<f64> {
        self.subdomains[sub].interior.iter().map(|&c| x[c]).collect()
    }

    pub fn interface_values(&self, sub: usize, x: &[f64]) -> Vec<f64> {
        self.subdomains[sub].interface.iter().map(|&c| x[c]).collect()
    }

    /// Subdomain state tuple `[interior; interface]`.
    pub fn subdomain_state(&self, sub: usize, x: &[f64]) -> Vec<f64> {
        let mut v = self.interior_values(sub, x);
        v.extend(self.interface_values(sub, x));
        v
    }

    /// Map from global DOF to position in a subdomain's interior (or `usize::MAX`).
    pub fn interior_positions(&self, sub: usize) -> Vec<usize> {
        let mut pos = vec![usize::MAX; self.n];
        for (k, &c) in self.subdomains[sub].interior.iter().enumerate() {
            pos[c] = k;
        }
        pos
    }

    pub fn interface_positions(&self, sub: usize) -> Vec<usize> {
        let mut pos = vec![usize::MAX; self.n];
        for (k, &c) in self.subdomains[sub].interface.iter().enumerate() {
            pos[c] = k;
        }
        pos
    }

    /// Union of all interfaces, sorted.
    pub fn skeleton(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.ports.iter().flat_map(|p| p.dofs.iter().copied()).collect();
        s.sort_unstable();
        s
    }

    /// Checks the structural invariants of the decomposition.
    pub fn validate(&self) -> Result<()> {
        let mut seen_row = vec![false; self.n];
        let mut seen_int = vec![false; self.n];
        for s in &self.subdomains {
            for &r in &s.rows {
                if std::mem::replace(&mut seen_row[r], true) {
                    return Err(Error::Invalid(format!("row {r} owned twice")));
                }
            }
            for &c in &s.interior {
                if std::mem::replace(&mut seen_int[c], true) {
                    return Err(Error::Invalid(format!("interior DOF {c} shared")));
                }
            }
        }
        if seen_row.iter().any(|v| !v) {
            return Err(Error::Invalid("rows not partitioned".into()));
        }
        for (i, s) in self.subdomains.iter().enumerate() {
            let mut covered = vec![false; s.n_interface()];
            for &pj in &s.ports {
                for &k in self.ports[pj].local_for(i).expect("member") {
                    if std::mem::replace(&mut covered[k], true) {
                        return Err(Error::Invalid(format!("ports overlap on subdomain {i}")));
                    }
                }
            }
            if covered.iter().any(|v| !v) {
                return Err(Error::Invalid(format!("ports do not cover interface of {i}")));
            }
        }
        let total: usize = self
            .subdomains
            .iter()
            .map(|s| s.n_interior() + s.n_interface())
            .sum();
        if self.n + self.n_abar() < total {
            return Err(Error::Invalid("counting inequality violated".into()));
        }
        Ok(())
    }
}

/// Splits the interior grid nodes of a structured problem into `px x py` blocks.
///
/// Node `(i, j)` belongs to block `(floor(i px / nx), floor(j py / ny))`; the
/// subdomain index runs over `x1` first.
pub fn build_decomposition(problem: &FomProblem, grid_split: (usize, usize)) -> Result<Decomposition> {
    let (px, py) = grid_split;
    let mesh = &problem.mesh;
    if px == 0 || py == 0 {
        return Err(Error::DegenerateSplit(px, py));
    }
    let block = |i: usize, p: usize, n: usize| ((i * p) / n).min(p - 1);
    let n_sub = px * py;
    let mut owner = vec![0usize; problem.n()];
    let mut blocks = vec![[usize::MAX, 0, usize::MAX, 0]; n_sub];
    let mut counts = vec![0usize; n_sub];
    for (dof, o) in owner.iter_mut().enumerate() {
        let (i, j) = problem.dof_grid(dof);
        let s = block(j, py, mesh.ny) * px + block(i, px, mesh.nx);
        *o = s;
        counts[s] += 1;
        let b = &mut blocks[s];
        b[0] = b[0].min(i);
        b[1] = b[1].max(i);
        b[2] = b[2].min(j);
        b[3] = b[3].max(j);
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::DegenerateSplit(px, py));
    }
    let mut d = Decomposition::from_row_partition(&problem.pattern(), &owner, n_sub)?;
    for (s, b) in d.subdomains.iter_mut().zip(blocks) {
        s.node_block = Some(b);
    }
    d.grid_split = Some(grid_split);
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_subdomain_has_no_interface() {
        let p = FomProblem::heat(6, 6);
        let d = build_decomposition(&p, (1, 1)).unwrap();
        assert_eq!(d.n_subdomains(), 1);
        assert_eq!(d.subdomains[0].n_interface(), 0);
        assert_eq!(d.subdomains[0].n_interior(), p.n());
        assert!(d.ports.is_empty());
        d.validate().unwrap();
    }

    #[test]
    fn too_many_blocks_is_degenerate() {
        let p = FomProblem::heat(4, 4);
        assert!(matches!(build_decomposition(&p, (5, 1)), Err(Error::DegenerateSplit(5, 1))));
    }
}
