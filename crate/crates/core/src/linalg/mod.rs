//! Linear algebra shared by every module.

mod band;
mod eigen;
mod sparse;

pub use band::{reverse_cuthill_mckee, BandLu};
pub use eigen::{filtered_lowest_eigenpairs, sorted_symmetric_eigen, FilterOptions};
pub use sparse::CsrMatrix;

use alloc::vec::Vec;
use num_traits::Float;
use nalgebra::DMatrix;

/// Weighted inner product `Σ w_i a_i b_i`.
pub fn weighted_dot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| x * y * w).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Singular values of `a`, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Numerical rank at relative tolerance `rel_tol` of the top singular value.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > rel_tol * top).count(),
        _ => 0,
    }
}

/// 2-norm condition number of a square matrix.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Orthonormal basis of the null space of `a` (columns), at relative
/// tolerance `rel_tol` of the largest singular value.
pub fn null_space(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Row space from a thin SVD of Aᵀ, then its complement from the QR of
    // [U_r | I]: the first r columns of Q span U_r, the rest complete it.
    let svd = a.transpose().svd(true, false);
    let u = svd.u.expect("requested U");
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cut = rel_tol * top.max(f64::MIN_POSITIVE);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > cut)
        .collect();
    let r = keep.len();
    if r == 0 {
        return DMatrix::identity(n, n);
    }
    let mut aug = DMatrix::zeros(n, r + n);
    for (c, &i) in keep.iter().enumerate() {
        aug.set_column(c, &u.column(i));
    }
    for i in 0..n {
        aug[(i, r + i)] = 1.0;
    }
    let q = aug.qr().q();
    q.columns(r, n - r).into_owned()
}

/// Distance between the orthogonal projectors onto the column spaces of
/// `a` and `b` (spectral norm). Columns must be orthonormal.
///
/// Equal dimensions give the sine of the largest principal angle, read off
/// the part of `b` outside the span of `a`; unequal ones give 1.
pub fn projector_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() != b.ncols() {
        return 1.0;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    let outside = b - a * (a.transpose() * b);
    singular_values(&outside).first().copied().unwrap_or(0.0).min(1.0)
}

/// Symmetric inverse square root of an SPD matrix.
pub fn inv_sqrt_spd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sorted_symmetric_eigen(a);
    let scaled = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| vecs[(i, j)] / vals[j].sqrt());
    scaled * vecs.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_two_constraints() {
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        let z = null_space(&a, 1e-12);
        assert_eq!(z.ncols(), 2);
        assert!((&a * &z).amax() < 1e-14);
        let g = z.transpose() * &z;
        assert!((g - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn projector_distance_is_gauge_free() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let (c, s) = (0.6, 0.8);
        let b = DMatrix::from_row_slice(3, 2, &[c, -s, s, c, 0.0, 0.0]);
        assert!(projector_distance(&a, &b) < 1e-15);
        let e = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
        assert_eq!(projector_distance(&a, &e), 1.0);
    }

    #[test]
    fn projector_distance_matches_dense_definition() {
        let t: f64 = 1e-3;
        let a = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(3, 1, &[t.cos(), 0.0, t.sin()]);
        let dense = singular_values(&(&a * a.transpose() - &b * b.transpose()))[0];
        assert!((projector_distance(&a, &b) - dense).abs() < 1e-12);
        assert!((projector_distance(&a, &b) - t.sin()).abs() < 1e-15);
    }
}
