//! Dense symmetric/Hermitian helpers shared by the solver and the SCA layer.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{domain, Result};
use crate::model::C64;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Position of entry `(i, j)`, `i >= j`, in the scaled vectorization of a side-`s` matrix.
#[inline]
pub fn svec_index(s: usize, i: usize, j: usize) -> usize {
    debug_assert!(i >= j && i < s);
    col_offset(s, j) + (i - j)
}

/// Offset of column `j` in the scaled vectorization.
#[inline]
fn col_offset(s: usize, j: usize) -> usize {
    j * (2 * s - j + 1) / 2
}

pub fn svec_len(s: usize) -> usize {
    s * (s + 1) / 2
}

pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let s = m.nrows();
    let mut out = Vec::with_capacity(svec_len(s));
    for j in 0..s {
        out.push(m[(j, j)]);
        for i in j + 1..s {
            out.push(SQRT2 * 0.5 * (m[(i, j)] + m[(j, i)]));
        }
    }
    out
}

pub fn smat(v: &[f64], s: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(s, s);
    let mut k = 0;
    for j in 0..s {
        m[(j, j)] = v[k];
        k += 1;
        for i in j + 1..s {
            let x = v[k] / SQRT2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    m
}

/// Side length of a PSD block with `len` vectorized rows.
pub fn side_from_len(len: usize) -> usize {
    (((8 * len + 1) as f64).sqrt() as usize - 1) / 2
}

pub fn max_skew(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}

pub fn max_skew_hermitian(m: &DMatrix<C64>) -> f64 {
    (m - m.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn hermitize(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::from(0.5)
}

/// Nearest PSD matrix in Frobenius norm (eigenvalue clipping).
pub fn psd_project(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return domain("psd_project needs a square matrix");
    }
    if max_skew(m) > 1e-9 * (1.0 + m.abs().max()) {
        return domain("psd_project input is not symmetric");
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    Ok(symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose())))
}

/// Hermitian PSD projection by eigenvalue clipping, after symmetrization.
pub fn psd_project_hermitian(m: &DMatrix<C64>) -> DMatrix<C64> {
    let eig = SymmetricEigen::new(hermitize(m));
    let clipped = eig.eigenvalues.map(|l| C64::from(l.max(0.0)));
    hermitize(&(&eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.adjoint()))
}

/// Eigenvalues in descending order with matching eigenvectors (columns).
pub fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = SymmetricEigen::new(hermitize(m));
    let n = m.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Largest eigenvalue and a unit eigenvector, phase-normalized so that its largest entry is real positive.
pub fn leading_eigenvector(m: &DMatrix<C64>) -> Result<(f64, DVector<C64>)> {
    if !m.is_square() || m.nrows() == 0 {
        return domain("leading_eigenvector needs a nonempty square matrix");
    }
    let scale = m.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if max_skew_hermitian(m) > 1e-9 * (1.0 + scale) {
        return domain("leading_eigenvector input is not Hermitian");
    }
    let (vals, vecs) = hermitian_eigen(m);
    let mut v: DVector<C64> = vecs.column(0).into_owned();
    let k = v.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).map(|(k, _)| k).unwrap_or(0);
    if v[k].norm() > 0.0 {
        let ph = v[k] / C64::from(v[k].norm());
        v.apply(|x| *x *= ph.conj());
    }
    let norm = v.norm();
    Ok((vals[0], v / C64::from(norm)))
}

/// `lambda_1 / sum(lambda)` over the clipped spectrum; 1 for the zero matrix.
pub fn rank_ratio(m: &DMatrix<C64>) -> f64 {
    let (vals, _) = hermitian_eigen(m);
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        1.0
    } else {
        vals[0].max(0.0) / total
    }
}

/// Real symmetric embedding `[[Re H, -Im H], [Im H, Re H]]` of a Hermitian matrix.
pub fn hermitian_embed(h: &DMatrix<C64>) -> DMatrix<f64> {
    let n = h.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i + n, j)] = z.im;
            out[(i, j + n)] = -z.im;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_layout() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let v = svec(&m);
        assert_eq!(v.len(), 6);
        assert_eq!(v[0], 1.0);
        assert!((v[1] - 2.0 * SQRT2).abs() < 1e-15);
        assert_eq!(v[3], 4.0);
        assert_eq!(v[5], 6.0);
        assert_eq!(smat(&v, 3), m);
        for s in 1..6 {
            let mut k = 0;
            for j in 0..s {
                for i in j..s {
                    assert_eq!(svec_index(s, i, j), k);
                    assert_eq!(col_offset(s, j) + (i - j), k);
                    k += 1;
                }
            }
            assert_eq!(side_from_len(svec_len(s)), s);
        }
    }

    #[test]
    fn project_clips() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -1.0]));
        let p = psd_project(&m).unwrap();
        assert!((p - DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]))).norm() < 1e-14);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(psd_project(&bad).is_err());
    }

    #[test]
    fn leading_pair_of_diag() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::from(3.0), C64::from(1.0)]));
        let (l, v) = leading_eigenvector(&m).unwrap();
        assert!((l - 3.0).abs() < 1e-14);
        assert!((v[0].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn embed_of_scalar_and_skew() {
        let a = DMatrix::from_element(1, 1, C64::from(2.5));
        assert_eq!(hermitian_embed(&a), DMatrix::from_diagonal(&DVector::from_vec(vec![2.5, 2.5])));
        let mut h = DMatrix::zeros(2, 2);
        h[(0, 1)] = C64::new(0.0, 1.0);
        h[(1, 0)] = C64::new(0.0, -1.0);
        let e = hermitian_embed(&h);
        assert_eq!(e[(0, 3)], -1.0);
        assert_eq!(e[(1, 2)], 1.0);
        assert_eq!(e[(3, 0)], -1.0);
        assert_eq!(e[(2, 1)], 1.0);
        assert_eq!(max_skew(&e), 0.0);
    }
}
