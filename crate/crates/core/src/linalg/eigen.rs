use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CsrMatrix;
use crate::error::{Error, Result};

/// Full eigendecomposition of a symmetric matrix with eigenvalues ascending
/// and eigenvectors as matching columns.
pub fn sorted_symmetric_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    // Symmetrize so rounding asymmetries in assembled products cannot leak in.
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

#[derive(Debug, Clone, Copy)]
pub struct FilterOptions {
    /// Residual tolerance relative to the spectral upper bound.
    pub tol: f64,
    pub max_iterations: usize,
    pub degree: usize,
    /// Extra block columns beyond the requested count.
    pub guard: usize,
    pub seed: u64,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iterations: 80,
            degree: 24,
            guard: 0,
            seed: 0x5eed_0f_5eed,
        }
    }
}

/// Lowest `k` eigenpairs of a sparse symmetric positive semidefinite matrix
/// by Chebyshev-filtered subspace iteration with Rayleigh–Ritz.
///
/// Used where a dense solve is too slow (tens of thousands of unknowns
/// would be out of reach, a few thousand already costs seconds).
pub fn filtered_lowest_eigenpairs(
    a: &CsrMatrix<f64>,
    k: usize,
    opts: FilterOptions,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.n_rows();
    if k == 0 || k > n {
        return Err(Error::OutOfRange(alloc::format!("requested {k} eigenpairs of an order-{n} matrix")));
    }
    let guard = if opts.guard > 0 { opts.guard } else { (k / 5).max(12) };
    let p = (k + guard).min(n);
    let upper = a.gershgorin_bound() * 1.0001 + 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() - 0.5);
    x = orthonormalize(x);
    let (mut ritz, mut basis) = rayleigh_ritz(a, &x);

    let mut residuals = Vec::new();
    for _ in 0..opts.max_iterations {
        residuals = ritz_residuals(a, &ritz, &basis, k);
        let worst = residuals.iter().copied().fold(0.0, f64::max);
        if worst <= opts.tol * upper {
            let vals = ritz[..k].to_vec();
            let vecs = basis.columns(0, k).into_owned();
            return Ok((vals, vecs));
        }
        let lower_cut = ritz[p - 1];
        let filtered = chebyshev_filter(a, &basis, opts.degree, lower_cut, upper, ritz[0]);
        x = orthonormalize(filtered);
        let (r, b) = rayleigh_ritz(a, &x);
        ritz = r;
        basis = b;
    }
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    Err(Error::EigenNonConvergence {
        iterations: opts.max_iterations,
        worst_residual: worst,
        residuals,
    })
}

fn sparse_times_dense(a: &CsrMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = (a.n_rows(), x.ncols());
    let mut y = DMatrix::zeros(n, p);
    for c in 0..p {
        let col = x.column(c);
        let src = col.as_slice();
        let mut out = y.column_mut(c);
        a.mul_vec_into(src, out.as_mut_slice());
    }
    y
}

fn orthonormalize(x: DMatrix<f64>) -> DMatrix<f64> {
    x.qr().q()
}

fn rayleigh_ritz(a: &CsrMatrix<f64>, q: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let aq = sparse_times_dense(a, q);
    let h = q.transpose() * aq;
    let (vals, vecs) = sorted_symmetric_eigen(&h);
    (vals, q * vecs)
}

fn ritz_residuals(a: &CsrMatrix<f64>, vals: &[f64], vecs: &DMatrix<f64>, k: usize) -> Vec<f64> {
    let head = vecs.columns(0, k).into_owned();
    let av = sparse_times_dense(a, &head);
    (0..k)
        .map(|j| {
            let r = av.column(j) - head.column(j) * vals[j];
            r.norm()
        })
        .collect()
}

/// Scaled Chebyshev filter damping the interval `[cut, upper]` while
/// amplifying everything below `cut`; `low` estimates the bottom of the
/// spectrum and fixes the scaling.
fn chebyshev_filter(
    a: &CsrMatrix<f64>,
    x: &DMatrix<f64>,
    degree: usize,
    cut: f64,
    upper: f64,
    low: f64,
) -> DMatrix<f64> {
    let e = (upper - cut) / 2.0;
    let c = (upper + cut) / 2.0;
    let mut sigma = e / (low - c);
    let tau = 2.0 / sigma;
    let mut prev = x.clone();
    let mut cur = (sparse_times_dense(a, x) - x * c) * (sigma / e);
    for _ in 1..degree {
        let sigma_next = 1.0 / (tau - sigma);
        let next = (sparse_times_dense(a, &cur) - &cur * c) * (2.0 * sigma_next / e) - &prev * (sigma * sigma_next);
        prev = cur;
        cur = next;
        sigma = sigma_next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_laplacian(nx: usize, ny: usize) -> CsrMatrix<f64> {
        let mut trip = Vec::new();
        let id = |i: usize, j: usize| (j % ny) * nx + (i % nx);
        for j in 0..ny {
            for i in 0..nx {
                let v = id(i, j);
                for u in [id(i + 1, j), id(i, j + 1)] {
                    trip.push((v, v, 1.0));
                    trip.push((u, u, 1.0));
                    trip.push((v, u, -1.0));
                    trip.push((u, v, -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(nx * ny, nx * ny, &trip)
    }

    #[test]
    fn dense_eigen_is_sorted() {
        let a = DMatrix::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let (vals, vecs) = sorted_symmetric_eigen(&a);
        assert_eq!(vals, [1.0, 2.0, 3.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn filtered_matches_dense_on_small_torus() {
        let a = grid_laplacian(12, 10);
        let (dense, _) = sorted_symmetric_eigen(&a.to_dense());
        let (vals, vecs) = filtered_lowest_eigenpairs(&a, 30, FilterOptions::default()).unwrap();
        for j in 0..30 {
            assert!((vals[j] - dense[j]).abs() < 1e-9, "{j}: {} vs {}", vals[j], dense[j]);
        }
        let g = vecs.transpose() * &vecs;
        assert!((g - DMatrix::identity(30, 30)).amax() < 1e-10);
    }
}
