//! Sparse storage, a reusable sparse LU, and a few dense helpers built on nalgebra.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Compressed sparse row matrix with strictly increasing column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(row_ptr.len(), nrows + 1);
        assert_eq!(col_idx.len(), values.len());
        assert_eq!(*row_ptr.last().unwrap(), col_idx.len());
        debug_assert!((0..nrows).all(|i| {
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            cols.windows(2).all(|w| w[0] < w[1]) && cols.iter().all(|&c| c < ncols)
        }));
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Builds a matrix from `(row, col, value)` entries; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = entries.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self::new(nrows, ncols, row_ptr, col_idx, values)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                m[(i, c)] = v;
            }
        }
        m
    }

    /// Dense product of the selected rows with `basis` restricted to `cols`.
    ///
    /// `col_pos[c]` gives the row of `basis` that multiplies global column `c`,
    /// or `usize::MAX` when the column is not part of the block.
    pub fn rows_times_basis(&self, col_pos: &[usize], basis: &DMatrix<f64>) -> DMatrix<f64> {
        let k = basis.ncols();
        let mut out = DMatrix::zeros(self.nrows, k);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let p = col_pos[c];
                if p != usize::MAX {
                    for j in 0..k {
                        out[(i, j)] += v * basis[(p, j)];
                    }
                }
            }
        }
        out
    }
}

/// Sparse LU with the symbolic analysis computed once per sparsity pattern.
pub struct SparseLu {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    // position in the CSC value array of every CSR entry
    csr_to_csc: Vec<usize>,
    symbolic: SymbolicLu<usize>,
}

impl SparseLu {
    pub fn analyze(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!(
                "LU of a {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let mut col_ptr = vec![0usize; n + 1];
        for &c in a.col_idx() {
            col_ptr[c + 1] += 1;
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut next = col_ptr.clone();
        let mut row_idx = vec![0usize; a.nnz()];
        let mut csr_to_csc = vec![0usize; a.nnz()];
        for i in 0..n {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let c = a.col_idx[k];
                row_idx[next[c]] = i;
                csr_to_csc[k] = next[c];
                next[c] += 1;
            }
        }
        let sym = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
        let symbolic = SymbolicLu::try_new(sym).map_err(|_| Error::SingularJacobian)?;
        Ok(Self {
            n,
            col_ptr,
            row_idx,
            csr_to_csc,
            symbolic,
        })
    }

    /// Factorizes `a` (which must share the analyzed pattern) and solves `a x = b`.
    pub fn solve(&self, a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(a.nnz(), self.csr_to_csc.len());
        assert_eq!(b.len(), self.n);
        let mut vals = vec![0.0; a.nnz()];
        for (k, &v) in a.values().iter().enumerate() {
            vals[self.csr_to_csc[k]] = v;
        }
        let sym = SymbolicSparseColMatRef::new_checked(
            self.n,
            self.n,
            &self.col_ptr,
            None,
            &self.row_idx,
        );
        let mat = SparseColMatRef::new(sym, &vals);
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), mat)
            .map_err(|_| Error::SingularJacobian)?;
        let rhs = faer::Col::<f64>::from_fn(self.n, |i| b[i]);
        let x = lu.solve(&rhs);
        let out: Vec<f64> = (0..self.n).map(|i| x[i]).collect();
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::SingularJacobian)
        }
    }
}

/// One-shot sparse solve.
pub fn sparse_solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    SparseLu::analyze(a)?.solve(a, b)
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Thin SVD with singular values in descending order.
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

pub fn thin_svd(m: &DMatrix<f64>) -> ThinSvd {
    let svd = m.clone().svd(true, true);
    ThinSvd {
        u: svd.u.expect("left singular vectors requested"),
        sigma: svd.singular_values.iter().copied().collect(),
        v_t: svd.v_t.expect("right singular vectors requested"),
    }
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn rank_from_sigma(sigma: &[f64], rel_tol: f64) -> usize {
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sigma.iter().filter(|&&s| s > rel_tol * smax).count()
}

pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    rank_from_sigma(sv.as_slice(), rel_tol)
}

/// Orthonormal basis of the kernel of `a` (columns), using a square-padded SVD so
/// that the full right singular basis is available for wide matrices.
pub fn null_space(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let m = a.nrows().max(n);
    let mut padded = DMatrix::zeros(m, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = thin_svd(&padded);
    let r = rank_from_sigma(&svd.sigma, rel_tol);
    let mut kernel = DMatrix::zeros(n, n - r);
    let mut k = 0;
    let smax = svd.sigma.iter().cloned().fold(0.0, f64::max);
    for (i, &s) in svd.sigma.iter().enumerate() {
        if smax == 0.0 || s <= rel_tol * smax {
            kernel.set_column(k, &svd.v_t.row(i).transpose());
            k += 1;
        }
    }
    debug_assert_eq!(k, n - r);
    kernel
}

/// Orthonormal basis of the row space: `V_r^T` from the thin SVD, so `q x = 0` iff `a x = 0`.
pub fn row_space_basis(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DMatrix::zeros(0, a.ncols());
    }
    let svd = thin_svd(a);
    let r = rank_from_sigma(&svd.sigma, rel_tol);
    svd.v_t.rows(0, r).into_owned()
}

/// Flips column signs so the first entry with magnitude above `tol` is positive.
pub fn normalize_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let scale = m.column(j).amax();
        let tol = 1e-12 * scale;
        if let Some(first) = m.column(j).iter().find(|v| v.abs() > tol).copied() {
            if first < 0.0 {
                m.column_mut(j).neg_mut();
            }
        }
    }
}

/// Minimum-norm least-squares solution of `a x = b` for every column of `b`.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = thin_svd(a);
    let r = rank_from_sigma(&svd.sigma, rel_tol);
    let mut x = DMatrix::zeros(a.ncols(), b.ncols());
    for i in 0..r {
        let ui = svd.u.column(i);
        let vi = svd.v_t.row(i).transpose();
        for c in 0..b.ncols() {
            let coef = ui.dot(&b.column(c)) / svd.sigma[i];
            x.column_mut(c).axpy(coef, &vi, 1.0);
        }
    }
    x
}

pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
