#![allow(dead_code)]

use ddrom::bases::{BasisKind, BasisSet, SubdomainBasis};
use ddrom::decomp::Decomposition;
use ddrom::linalg::CsrMatrix;
use nalgebra::DMatrix;

/// Decomposition from explicit row patterns and row owners.
pub fn decomposition_from_rows(rows: &[Vec<usize>], owner: &[usize], n_sub: usize) -> Decomposition {
    let n = rows.len();
    let entries: Vec<(usize, usize, f64)> = rows
        .iter()
        .enumerate()
        .flat_map(|(r, cols)| cols.iter().map(move |&c| (r, c, 1.0)))
        .collect();
    let pattern = CsrMatrix::from_triplets(n, n, &entries);
    Decomposition::from_row_partition(&pattern, owner, n_sub).unwrap()
}

/// Two subdomains with one interior DOF each (0 and 1) sharing a port {2, 3}.
pub fn two_subdomain_toy() -> Decomposition {
    let rows = vec![vec![0, 2, 3], vec![1, 2, 3], vec![2], vec![3]];
    decomposition_from_rows(&rows, &[0, 1, 0, 1], 2)
}

/// Four subdomains in a 2x2 arrangement: edge ports of two DOFs between
/// neighbors and one DOF shared by all four.
///
/// DOFs 0..4 are interior to subdomain i; DOFs 4..12 form the edge ports
/// {0,1}, {0,2}, {1,3}, {2,3}; DOF 12 is the corner.
pub fn four_subdomain_toy() -> Decomposition {
    let edges = [(0, 1), (0, 2), (1, 3), (2, 3)];
    let mut rows: Vec<Vec<usize>> = (0..4).map(|i| vec![i]).collect();
    let mut owner: Vec<usize> = (0..4).collect();
    for (e, &(a, b)) in edges.iter().enumerate() {
        for t in 0..2 {
            let dof = 4 + 2 * e + t;
            rows.push(vec![dof]);
            owner.push(a);
            rows[b].push(dof);
        }
    }
    rows.push(vec![12]);
    owner.push(0);
    for r in rows.iter_mut().take(4).skip(1) {
        r.push(12);
    }
    decomposition_from_rows(&rows, &owner, 4)
}

/// Port-kind basis set from explicit interior blocks and one shared basis per port.
pub fn port_basis_set(d: &Decomposition, interior: Vec<DMatrix<f64>>, port_bases: Vec<DMatrix<f64>>) -> BasisSet {
    let interface = ddrom::bases::assemble_port_interface(d, &port_bases);
    BasisSet {
        kind: BasisKind::Port,
        subdomains: interior
            .into_iter()
            .zip(interface)
            .map(|(interior, interface)| SubdomainBasis { interior, interface })
            .collect(),
        port_bases,
        upsilon_interior: 0.0,
        upsilon_interface: 0.0,
    }
}

pub fn random_matrix(rng: &mut impl rand::Rng, r: usize, c: usize) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// Block least-squares problem with residuals `A_i y_i - b_i + eps (Q_i y_i)^2`
/// (elementwise square) and random full-row-rank linear coupling `C y = 0`.
///
/// The data `b` are generated from a feasible point plus noise of size `noise`,
/// so the residual at the solution is small.
pub struct RandomLsq {
    pub a: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub b: Vec<nalgebra::DVector<f64>>,
    pub eps: f64,
    pub c: DMatrix<f64>,
}

impl RandomLsq {
    pub fn new(rng: &mut impl rand::Rng, dims: &[usize], n_constraints: usize, eps: f64, noise: f64) -> Self {
        let total: usize = dims.iter().sum();
        let c = random_matrix(rng, n_constraints, total);
        let y = random_matrix(rng, total, 1);
        let cct = &c * c.transpose();
        let y_star = &y - c.transpose() * cct.lu().solve(&(&c * &y)).unwrap();
        let mut p = Self {
            a: Vec::new(),
            q: Vec::new(),
            b: Vec::new(),
            eps,
            c,
        };
        let mut off = 0;
        for &d in dims {
            let rows = d + 3;
            let a = random_matrix(rng, rows, d);
            let q = random_matrix(rng, rows, d) * 0.5;
            let qy = &q * y_star.rows(off, d);
            let b = &a * y_star.rows(off, d) + qy.map(|v| v * v) * eps + random_matrix(rng, rows, 1) * noise;
            p.a.push(a);
            p.q.push(q);
            p.b.push(b.column(0).into_owned());
            off += d;
        }
        p
    }

    pub fn total_dim(&self) -> usize {
        self.a.iter().map(|a| a.ncols()).sum()
    }
}

impl ddrom::sqp::ConstrainedLsq for RandomLsq {
    fn n_blocks(&self) -> usize {
        self.a.len()
    }

    fn block_dim(&self, i: usize) -> usize {
        self.a[i].ncols()
    }

    fn constraints(&self) -> &DMatrix<f64> {
        &self.c
    }

    fn evaluate_block(
        &self,
        i: usize,
        y: &[f64],
        with_jacobian: bool,
    ) -> ddrom::Result<(nalgebra::DVector<f64>, Option<DMatrix<f64>>)> {
        let y = nalgebra::DVector::from_column_slice(y);
        let qy = &self.q[i] * &y;
        let r = &self.a[i] * &y - &self.b[i] + qy.map(|v| v * v) * self.eps;
        let jac = with_jacobian.then(|| {
            let mut j = self.a[i].clone();
            for row in 0..j.nrows() {
                let scale = 2.0 * self.eps * qy[row];
                for col in 0..j.ncols() {
                    j[(row, col)] += scale * self.q[i][(row, col)];
                }
            }
            j
        });
        Ok((r, jac))
    }
}

/// Gauss-Newton on `y = N z` with `N` an orthonormal kernel basis of `C` from a full SVD.
pub fn nullspace_oracle(p: &RandomLsq, tol: f64) -> nalgebra::DVector<f64> {
    let n = p.total_dim();
    let c = &p.c;
    let svd = c.clone().resize(n, n, 0.0).svd(false, true);
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.max();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].partial_cmp(&svd.singular_values[x]).unwrap());
    let kernel: Vec<usize> = order.into_iter().filter(|&k| svd.singular_values[k] <= 1e-12 * smax).collect();
    let basis = DMatrix::from_fn(n, kernel.len(), |r, k| vt[(kernel[k], r)]);
    let mut z = nalgebra::DVector::zeros(kernel.len());
    for _ in 0..200 {
        let y = &basis * &z;
        let mut g = nalgebra::DVector::zeros(z.len());
        let mut h = DMatrix::zeros(z.len(), z.len());
        let mut off = 0;
        for i in 0..p.a.len() {
            let d = p.a[i].ncols();
            let (r, j) = ddrom::sqp::ConstrainedLsq::evaluate_block(p, i, y.rows(off, d).as_slice(), true).unwrap();
            let jn = j.unwrap() * basis.rows(off, d);
            g += jn.tr_mul(&r);
            h += jn.tr_mul(&jn);
            off += d;
        }
        if g.norm() <= tol {
            return y;
        }
        z -= h.lu().solve(&g).unwrap();
    }
    panic!("reference Gauss-Newton did not converge");
}

/// Exhaustive reference for the greedy selection: every round fits the
/// working columns on the current sample rows with a dense pseudo-inverse and
/// scores every unselected node explicitly.
pub fn brute_force_greedy(phi: &DMatrix<f64>, nodes: &[Vec<usize>], n_s: usize, n_w: usize, corners: &[usize]) -> Vec<usize> {
    let mut selected = corners.to_vec();
    let mut nb = 0;
    for (n_ci, n_ad) in ddrom::hyper::greedy_schedule(n_s - corners.len(), n_w) {
        let target = phi.columns(nb, n_ci).into_owned();
        let r = if nb == 0 {
            target
        } else {
            let rows: Vec<usize> = selected.iter().flat_map(|&l| nodes[l].clone()).collect();
            let a = DMatrix::from_fn(rows.len(), nb, |i, k| phi[(rows[i], k)]);
            let b = DMatrix::from_fn(rows.len(), n_ci, |i, k| target[(rows[i], k)]);
            let pinv = a.pseudo_inverse(1e-12).unwrap();
            &target - phi.columns(0, nb) * (pinv * b)
        };
        let scores: Vec<f64> = nodes
            .iter()
            .map(|rows| rows.iter().map(|&d| r.row(d).norm_squared()).sum())
            .collect();
        for _ in 0..n_ad {
            let mut best = usize::MAX;
            for l in 0..nodes.len() {
                if selected.contains(&l) {
                    continue;
                }
                if best == usize::MAX || scores[l] > scores[best] {
                    best = l;
                }
            }
            selected.push(best);
        }
        nb += n_ci;
    }
    selected
}
