//! Bilinear finite elements for `-lap u + (mu1/mu2)(exp(mu2 u) - 1) = f` with
//! homogeneous Dirichlet data, integrated with 2x2 Gauss quadrature.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::StructuredMesh;
use crate::error::Result;

const NONE: usize = usize::MAX;

pub(super) fn load(x: f64, y: f64) -> f64 {
    100.0 * (2.0 * PI * x).sin() * (2.0 * PI * y).sin()
}

/// Source term `(mu1/mu2)(exp(mu2 u) - 1)` and its derivative.
fn source(mu: [f64; 2], u: f64) -> (f64, f64) {
    let e = (mu[1] * u).exp();
    let s = if mu[1] == 0.0 {
        mu[0] * u
    } else {
        mu[0] / mu[1] * (mu[1] * u).exp_m1()
    };
    (s, mu[0] * e)
}

fn gauss() -> [f64; 2] {
    let g = 0.5 / 3f64.sqrt();
    [0.5 - g, 0.5 + g]
}

/// Reference data for one rectangular Q1 element.
#[derive(Clone, Debug)]
struct Element {
    // phi[q][a] at the four Gauss points, q = qx + 2 qy
    phi: [[f64; 4]; 4],
    stiff: [[f64; 4]; 4],
    weight: f64,
}

impl Element {
    fn new(hx: f64, hy: f64) -> Self {
        let g = gauss();
        let mut phi = [[0.0; 4]; 4];
        let mut stiff = [[0.0; 4]; 4];
        let weight = 0.25 * hx * hy;
        for q in 0..4 {
            let (s, t) = (g[q % 2], g[q / 2]);
            let mut grad = [[0.0; 2]; 4];
            for a in 0..4 {
                let (fs, dfs) = if a % 2 == 0 { (1.0 - s, -1.0) } else { (s, 1.0) };
                let (ft, dft) = if a / 2 == 0 { (1.0 - t, -1.0) } else { (t, 1.0) };
                phi[q][a] = fs * ft;
                grad[a] = [dfs * ft / hx, fs * dft / hy];
            }
            for a in 0..4 {
                for b in 0..4 {
                    stiff[a][b] += weight * (grad[a][0] * grad[b][0] + grad[a][1] * grad[b][1]);
                }
            }
        }
        Self { phi, stiff, weight }
    }
}

#[derive(Clone, Debug)]
struct ElementEntry {
    dofs: [usize; 4],
    load: [f64; 4],
    // (local node, output row, positions of the four local columns in the value array)
    targets: Vec<(usize, usize, [usize; 4])>,
}

#[derive(Clone, Debug)]
pub(super) struct HeatPlan {
    element: Element,
    entries: Vec<ElementEntry>,
}

pub(super) fn stencil(mesh: &StructuredMesh, row: usize) -> Vec<usize> {
    let (i, j) = mesh.free_node_grid(row);
    let mut cols = Vec::with_capacity(9);
    for jj in j - 1..=j + 1 {
        for ii in i - 1..=i + 1 {
            if let Some(c) = mesh.free_node(ii, jj) {
                cols.push(c);
            }
        }
    }
    cols
}

impl HeatPlan {
    pub(super) fn new(mesh: &StructuredMesh, rows: &[usize], row_ptr: &[usize], col_idx: &[usize]) -> Self {
        let element = Element::new(mesh.hx(), mesh.hy());
        let g = gauss();
        let mut by_element: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for (o, &r) in rows.iter().enumerate() {
            let (i, j) = mesh.free_node_grid(r);
            for ej in j - 1..=j {
                for ei in i - 1..=i {
                    let a = (i - ei) + 2 * (j - ej);
                    by_element.entry((ej, ei)).or_default().push((a, o));
                }
            }
        }
        let entries = by_element
            .into_iter()
            .map(|((ej, ei), locals)| {
                let mut dofs = [NONE; 4];
                for (b, d) in dofs.iter_mut().enumerate() {
                    *d = mesh.free_node(ei + b % 2, ej + b / 2).unwrap_or(NONE);
                }
                let (x0, y0) = mesh.coords(ei, ej);
                let mut ld = [0.0; 4];
                for (q, l) in ld.iter_mut().enumerate() {
                    *l = load(x0 + g[q % 2] * mesh.hx(), y0 + g[q / 2] * mesh.hy());
                }
                let targets = locals
                    .into_iter()
                    .map(|(a, o)| {
                        let cols = &col_idx[row_ptr[o]..row_ptr[o + 1]];
                        let mut pos = [NONE; 4];
                        for b in 0..4 {
                            if dofs[b] != NONE {
                                let k = cols.binary_search(&dofs[b]).expect("stencil covers element");
                                pos[b] = row_ptr[o] + k;
                            }
                        }
                        (a, o, pos)
                    })
                    .collect();
                ElementEntry {
                    dofs,
                    load: ld,
                    targets,
                }
            })
            .collect();
        Self { element, entries }
    }
}

pub(super) fn evaluate(
    _mesh: &StructuredMesh,
    plan: &HeatPlan,
    x: &[f64],
    mu: [f64; 2],
    residual: &mut [f64],
    jac: &mut [f64],
) -> Result<()> {
    let el = &plan.element;
    let with_jac = !jac.is_empty();
    for e in &plan.entries {
        let mut u = [0.0; 4];
        for b in 0..4 {
            if e.dofs[b] != NONE {
                u[b] = x[e.dofs[b]];
                if !u[b].is_finite() {
                    return Err(crate::error::Error::NonFiniteState);
                }
            }
        }
        let mut s = [0.0; 4];
        let mut ds = [0.0; 4];
        for q in 0..4 {
            let uq: f64 = (0..4).map(|b| el.phi[q][b] * u[b]).sum();
            (s[q], ds[q]) = source(mu, uq);
        }
        for &(a, o, pos) in &e.targets {
            let mut acc = 0.0;
            for b in 0..4 {
                acc += el.stiff[a][b] * u[b];
            }
            for q in 0..4 {
                acc += el.weight * el.phi[q][a] * (s[q] - e.load[q]);
            }
            residual[o] += acc;
            if with_jac {
                for b in 0..4 {
                    if pos[b] != NONE {
                        let mut m = 0.0;
                        for q in 0..4 {
                            m += el.weight * el.phi[q][a] * el.phi[q][b] * ds[q];
                        }
                        jac[pos[b]] += el.stiff[a][b] + m;
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_element_stiffness() {
        let el = Element::new(0.1, 0.1);
        let expect = [
            [4.0, -1.0, -1.0, -2.0],
            [-1.0, 4.0, -2.0, -1.0],
            [-1.0, -2.0, 4.0, -1.0],
            [-2.0, -1.0, -1.0, 4.0],
        ];
        for a in 0..4 {
            for b in 0..4 {
                assert!((el.stiff[a][b] - expect[a][b] / 6.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn quadrature_weights_sum_to_area() {
        let el = Element::new(0.2, 0.5);
        let total: f64 = (0..4).map(|q| el.weight * el.phi[q].iter().sum::<f64>()).sum();
        assert!((total - 0.1).abs() < 1e-15);
    }
}
