#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use star_secrecy::model::C64;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cn<R: Rng>(r: &mut R) -> C64 {
    let re: f64 = r.sample(StandardNormal);
    let im: f64 = r.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn cvec<R: Rng>(r: &mut R, n: usize) -> DVector<C64> {
    DVector::from_fn(n, |_, _| cn(r))
}

pub fn cmat<R: Rng>(r: &mut R, rows: usize, cols: usize) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| cn(r))
}

/// `A A^H` with `A` of the given rank.
pub fn psd<R: Rng>(r: &mut R, n: usize, rank: usize) -> DMatrix<C64> {
    let a = cmat(r, n, rank);
    &a * a.adjoint()
}

pub fn hermitian<R: Rng>(r: &mut R, n: usize) -> DMatrix<C64> {
    let a = cmat(r, n, n);
    (&a + a.adjoint()) * C64::from(0.5)
}

/// Entries of `lo + (hi - lo) u` with `u` uniform.
pub fn uniform<R: Rng>(r: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * r.random::<f64>()
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}
