use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::lstsq_min_norm;

/// Relative singular-value cutoff for the sampled least-squares fits.
const LS_TOL: f64 = 1e-12;

/// Greedy sample-node selection driven by residual-basis reconstruction error.
///
/// `node_rows[l]` lists the rows of `phi_r` carried by node `l`. The returned
/// nodes start with `corners` (in the given order) followed by greedy picks in
/// selection order; ties go to the lowest node index.
pub fn greedy_sample_mesh(
    phi_r: &DMatrix<f64>,
    node_rows: &[Vec<usize>],
    n_s: usize,
    n_w: usize,
    corners: &[usize],
) -> Result<Vec<usize>> {
    let n_nodes = node_rows.len();
    if n_s < corners.len() {
        return Err(Error::InsufficientBudget {
            budget: n_s,
            corners: corners.len(),
        });
    }
    if n_s > n_nodes {
        return Err(Error::Invalid(format!("sample budget {n_s} exceeds {n_nodes} nodes")));
    }
    let gamma = node_rows.iter().map(|r| r.len()).max().unwrap_or(1);
    if n_w == 0 || n_w > phi_r.ncols().min(gamma * n_s) {
        return Err(Error::Invalid(format!(
            "working column count {n_w} must lie in 1..={}",
            phi_r.ncols().min(gamma * n_s)
        )));
    }
    let mut selected: Vec<usize> = corners.to_vec();
    let mut is_selected = vec![false; n_nodes];
    for &c in corners {
        is_selected[c] = true;
    }
    let n_a = n_s - corners.len();
    if n_a == 0 {
        return Ok(selected);
    }
    let mut nb = 0;
    for (n_ci, n_ad) in greedy_schedule(n_a, n_w) {
        let targets = phi_r.columns(nb, n_ci).into_owned();
        let r = if nb == 0 {
            targets
        } else {
            let rows: Vec<usize> = selected.iter().flat_map(|&l| node_rows[l].iter().copied()).collect();
            let prev = phi_r.columns(0, nb);
            if rows.is_empty() {
                return Err(Error::SampleRankFailure);
            }
            let a = DMatrix::from_fn(rows.len(), nb, |i, k| prev[(rows[i], k)]);
            let b = DMatrix::from_fn(rows.len(), n_ci, |i, k| targets[(rows[i], k)]);
            let alpha = lstsq_min_norm(&a, &b, LS_TOL);
            targets - prev * alpha
        };
        for _ in 0..n_ad {
            let mut best: Option<(usize, f64)> = None;
            for l in 0..n_nodes {
                if is_selected[l] {
                    continue;
                }
                let score: f64 = (0..r.ncols())
                    .map(|q| node_rows[l].iter().map(|&d| r[(d, q)] * r[(d, q)]).sum::<f64>())
                    .sum();
                if best.is_none_or(|(_, s)| score > s) {
                    best = Some((l, score));
                }
            }
            let (l, _) = best.ok_or(Error::Invalid("no unselected node left".into()))?;
            is_selected[l] = true;
            selected.push(l);
        }
        nb += n_ci;
    }
    Ok(selected)
}

/// Per-iteration `(working vectors, nodes added)` schedule of the greedy loop.
pub fn greedy_schedule(n_a: usize, n_w: usize) -> Vec<(usize, usize)> {
    if n_a == 0 {
        return Vec::new();
    }
    let n_it = n_w.min(n_a);
    let n_rhs = n_w.div_ceil(n_a);
    let n_ci_min = n_w / n_it;
    let n_ad_min = n_a * n_rhs / n_w;
    (1..=n_it)
        .map(|j| {
            (
                n_ci_min + usize::from(j <= n_w % n_it),
                n_ad_min + usize::from(n_rhs == 1 && j <= n_a % n_w),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_uses_every_column_and_node() {
        for n_a in 1..40 {
            for n_w in 1..40 {
                let s = greedy_schedule(n_a, n_w);
                assert_eq!(s.iter().map(|t| t.0).sum::<usize>(), n_w, "columns n_a={n_a} n_w={n_w}");
                assert_eq!(s.iter().map(|t| t.1).sum::<usize>(), n_a, "nodes n_a={n_a} n_w={n_w}");
            }
        }
    }
}
