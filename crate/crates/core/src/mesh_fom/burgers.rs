//! Centered finite differences for the steady Burgers system
//! `u . grad u = nu lap u` with Dirichlet data from a Cole-Hopf exact solution.

use serde::{Deserialize, Serialize};

use super::StructuredMesh;
use crate::error::{Error, Result};

/// Fixed coefficients of the exact solution; `a1 = a2 = mu1` and `lambda = mu2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurgersConstants {
    pub nu: f64,
    pub x1_0: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
}

impl Default for BurgersConstants {
    fn default() -> Self {
        Self {
            nu: 0.1,
            x1_0: 1.0,
            a3: 0.0,
            a4: 0.0,
            a5: 1.0,
        }
    }
}

/// Exact velocity `u = -2 nu grad(Phi) / Phi` with the harmonic potential
/// `Phi = a1 + a2 x1 + a3 x2 + a4 x1 x2 + a5 (e^{l(x1-x1_0)} + e^{-l(x1-x1_0)}) cos(l x2)`.
pub fn burgers_exact(x1: f64, x2: f64, mu: [f64; 2], c: &BurgersConstants) -> Result<(f64, f64)> {
    let (a1, lambda) = (mu[0], mu[1]);
    let a2 = a1;
    let ep = (lambda * (x1 - c.x1_0)).exp();
    let em = (-lambda * (x1 - c.x1_0)).exp();
    let (sn, cs) = (lambda * x2).sin_cos();
    let phi = a1 + a2 * x1 + c.a3 * x2 + c.a4 * x1 * x2 + c.a5 * (ep + em) * cs;
    if phi == 0.0 || !phi.is_finite() {
        return Err(Error::SingularDenominator(x1, x2));
    }
    let d1 = a2 + c.a4 * x2 + lambda * c.a5 * (ep - em) * cs;
    let d2 = c.a3 + c.a4 * x1 - lambda * c.a5 * (ep + em) * sn;
    Ok((-2.0 * c.nu * d1 / phi, -2.0 * c.nu * d2 / phi))
}

const NONE: usize = usize::MAX;

#[derive(Clone, Copy, Debug)]
enum Neighbor {
    Free { dof: usize, pos: usize },
    Boundary { x1: f64, x2: f64 },
}

#[derive(Clone, Debug)]
struct RowEntry {
    comp: usize,
    center: usize,
    center_pos: [usize; 2],
    // west, east, south, north
    nbr: [Neighbor; 4],
}

#[derive(Clone, Debug)]
pub(super) struct BurgersPlan {
    entries: Vec<RowEntry>,
}

fn neighbors(i: usize, j: usize) -> [(usize, usize); 4] {
    [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)]
}

pub(super) fn stencil(mesh: &StructuredMesh, row: usize) -> Vec<usize> {
    let node = row / 2;
    let comp = row % 2;
    let (i, j) = mesh.free_node_grid(node);
    let mut cols = vec![2 * node, 2 * node + 1];
    for (ii, jj) in neighbors(i, j) {
        if let Some(q) = mesh.free_node(ii, jj) {
            cols.push(2 * q + comp);
        }
    }
    cols.sort_unstable();
    cols
}

impl BurgersPlan {
    pub(super) fn new(mesh: &StructuredMesh, rows: &[usize], row_ptr: &[usize], col_idx: &[usize]) -> Self {
        let entries = rows
            .iter()
            .enumerate()
            .map(|(o, &r)| {
                let node = r / 2;
                let comp = r % 2;
                let (i, j) = mesh.free_node_grid(node);
                let cols = &col_idx[row_ptr[o]..row_ptr[o + 1]];
                let pos = |dof: usize| row_ptr[o] + cols.binary_search(&dof).expect("stencil column");
                let nb = neighbors(i, j).map(|(ii, jj)| match mesh.free_node(ii, jj) {
                    Some(q) => Neighbor::Free {
                        dof: 2 * q + comp,
                        pos: pos(2 * q + comp),
                    },
                    None => {
                        let (x1, x2) = mesh.coords(ii, jj);
                        Neighbor::Boundary { x1, x2 }
                    }
                });
                RowEntry {
                    comp,
                    center: node,
                    center_pos: [pos(2 * node), pos(2 * node + 1)],
                    nbr: nb,
                }
            })
            .collect();
        Self { entries }
    }
}

pub(super) fn evaluate(
    mesh: &StructuredMesh,
    consts: &BurgersConstants,
    plan: &BurgersPlan,
    x: &[f64],
    mu: [f64; 2],
    residual: &mut [f64],
    jac: &mut [f64],
) -> Result<()> {
    let (h1, h2) = (mesh.hx(), mesh.hy());
    let nu = consts.nu;
    let with_jac = !jac.is_empty();
    for (o, e) in plan.entries.iter().enumerate() {
        let u1 = x[2 * e.center];
        let u2 = x[2 * e.center + 1];
        let uc = x[2 * e.center + e.comp];
        let mut v = [0.0; 4];
        for (k, nb) in e.nbr.iter().enumerate() {
            v[k] = match *nb {
                Neighbor::Free { dof, .. } => x[dof],
                Neighbor::Boundary { x1, x2 } => {
                    let (b1, b2) = burgers_exact(x1, x2, mu, consts)?;
                    if e.comp == 0 {
                        b1
                    } else {
                        b2
                    }
                }
            };
        }
        if !(u1.is_finite() && u2.is_finite() && v.iter().all(|t| t.is_finite())) {
            return Err(Error::NonFiniteState);
        }
        let [w, ea, s, n] = v;
        let dx = (ea - w) / (2.0 * h1);
        let dy = (n - s) / (2.0 * h2);
        let lap = (ea - 2.0 * uc + w) / (h1 * h1) + (n - 2.0 * uc + s) / (h2 * h2);
        residual[o] = u1 * dx + u2 * dy - nu * lap;
        if with_jac {
            let diag = 2.0 * nu * (1.0 / (h1 * h1) + 1.0 / (h2 * h2));
            let d_center = [dx + if e.comp == 0 { diag } else { 0.0 }, dy + if e.comp == 1 { diag } else { 0.0 }];
            jac[e.center_pos[0]] += d_center[0];
            jac[e.center_pos[1]] += d_center[1];
            let coeffs = [
                -u1 / (2.0 * h1) - nu / (h1 * h1),
                u1 / (2.0 * h1) - nu / (h1 * h1),
                -u2 / (2.0 * h2) - nu / (h2 * h2),
                u2 / (2.0 * h2) - nu / (h2 * h2),
            ];
            for (k, nb) in e.nbr.iter().enumerate() {
                if let Neighbor::Free { pos, .. } = *nb {
                    debug_assert_ne!(pos, NONE);
                    jac[pos] += coeffs[k];
                }
            }
        }
    }
    Ok(())
}
