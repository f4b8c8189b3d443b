use nalgebra::DMatrix;

use crate::decomp::Port;
use crate::error::{Error, Result};
use crate::mesh_fom::FomProblem;

/// Legendre polynomial `P_k(t)` by the three-term recurrence.
pub fn legendre(k: usize, t: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, t);
    match k {
        0 => p0,
        1 => p1,
        _ => {
            for m in 1..k {
                let mf = m as f64;
                let p2 = ((2.0 * mf + 1.0) * t * p1 - mf * p0) / (mf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

/// Degree pairs `(a, b)` with `a < na`, `b < nb`, ordered by total degree then lexicographically.
pub fn tensor_order(na: usize, nb: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..na).flat_map(|a| (0..nb).map(move |b| (a, b))).collect();
    out.sort_by_key(|&(a, b)| (a + b, a, b));
    out
}

fn distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn mapped(v: f64, vals: &[f64]) -> f64 {
    let (lo, hi) = (vals[0], vals[vals.len() - 1]);
    if hi > lo {
        2.0 * (v - lo) / (hi - lo) - 1.0
    } else {
        0.0
    }
}

/// Ordered Legendre functions evaluated at the port DOFs (`size x count`).
///
/// Functions are tensor products over the distinct node coordinates of the
/// port, each coordinate mapped to `[-1, 1]`. With several DOFs per node every
/// tensor function is applied to one component at a time. The sequence is
/// truncated at the port DOF count.
pub fn legendre_port_functions(problem: &FomProblem, port: &Port) -> Result<DMatrix<f64>> {
    let dpn = problem.dofs_per_node();
    let coords: Vec<(f64, f64)> = port
        .dofs
        .iter()
        .map(|&c| {
            let (i, j) = problem.dof_grid(c);
            problem.mesh.coords(i, j)
        })
        .collect();
    let xs = distinct(coords.iter().map(|c| c.0).collect());
    let ys = distinct(coords.iter().map(|c| c.1).collect());
    if xs.len() * ys.len() * dpn != port.size() {
        return Err(Error::UnsupportedPortGeometry(port.id));
    }
    let count = port.size();
    let mut out = DMatrix::zeros(port.size(), count);
    let mut k = 0;
    'outer: for (a, b) in tensor_order(xs.len(), ys.len()) {
        for comp in 0..dpn {
            if k == count {
                break 'outer;
            }
            for (t, &c) in port.dofs.iter().enumerate() {
                if c % dpn == comp {
                    let (x, y) = coords[t];
                    out[(t, k)] = legendre(a, mapped(x, &xs)) * legendre(b, mapped(y, &ys));
                }
            }
            k += 1;
        }
    }
    Ok(out)
}
