//! Affine-expression front end for assembling [`ConeProgram`]s.

use nalgebra::DMatrix;
use std::ops::{Add, Mul, Neg, Sub};

use super::program::{Cone, ConeProgram, SparseMatrix};
use crate::error::Result;
use crate::model::C64;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// `sum_i a_i x_i + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(i: usize) -> Self {
        Self::term(i, 1.0)
    }

    pub fn term(i: usize, a: f64) -> Self {
        Self { terms: vec![(i, a)], constant: 0.0 }
    }

    pub fn push(&mut self, i: usize, a: f64) {
        if a != 0.0 {
            self.terms.push((i, a));
        }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, a: f64) {
        self.terms.extend(other.terms.iter().map(|&(i, c)| (i, c * a)));
        self.constant += other.constant * a;
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>()
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self.add_scaled(&rhs, 1.0);
        self
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: LinExpr) -> LinExpr {
        self.add_scaled(&rhs, -1.0);
        self
    }
}

impl Add<f64> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: f64) -> LinExpr {
        self.constant += rhs;
        self
    }
}

impl Sub<f64> for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: f64) -> LinExpr {
        self.constant -= rhs;
        self
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(mut self, rhs: f64) -> LinExpr {
        self.terms.iter_mut().for_each(|t| t.1 *= rhs);
        self.constant *= rhs;
        self
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self * -1.0
    }
}

/// Collects variables, a linear objective (minimized) and conic constraints `expr in K`.
#[derive(Debug, Clone, Default)]
pub struct ProgramBuilder {
    num_vars: usize,
    objective: LinExpr,
    blocks: Vec<(Cone, Vec<LinExpr>)>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Allocates `k` scalar variables and returns the first index.
    pub fn add_vars(&mut self, k: usize) -> usize {
        let first = self.num_vars;
        self.num_vars += k;
        first
    }

    pub fn add_var(&mut self) -> usize {
        self.add_vars(1)
    }

    pub fn minimize(&mut self, objective: LinExpr) {
        self.objective = objective;
    }

    pub fn zero(&mut self, exprs: Vec<LinExpr>) {
        if !exprs.is_empty() {
            self.blocks.push((Cone::Zero(exprs.len()), exprs));
        }
    }

    pub fn nonneg(&mut self, exprs: Vec<LinExpr>) {
        if !exprs.is_empty() {
            self.blocks.push((Cone::NonNeg(exprs.len()), exprs));
        }
    }

    /// `|x| <= t`.
    pub fn soc(&mut self, t: LinExpr, x: Vec<LinExpr>) {
        let mut rows = Vec::with_capacity(x.len() + 1);
        rows.push(t);
        rows.extend(x);
        self.blocks.push((Cone::SecondOrder(rows.len()), rows));
    }

    /// `|x|^2 <= y z` with `y, z >= 0`, as `|(2x, y - z)| <= y + z`.
    pub fn rotated_soc(&mut self, y: LinExpr, z: LinExpr, x: Vec<LinExpr>) {
        let t = y.clone() + z.clone();
        let mut rows: Vec<LinExpr> = x.into_iter().map(|e| e * 2.0).collect();
        rows.push(y - z);
        self.soc(t, rows);
    }

    /// Scaled lower-triangle vectorization of a symmetric matrix that must be PSD.
    pub fn psd(&mut self, side: usize, svec_rows: Vec<LinExpr>) {
        debug_assert_eq!(svec_rows.len(), side * (side + 1) / 2);
        self.blocks.push((Cone::Psd(side), svec_rows));
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn cones(&self) -> Vec<Cone> {
        self.blocks.iter().map(|b| b.0).collect()
    }

    /// Returns the program and the objective constant.
    pub fn build(&self) -> Result<(ConeProgram, f64)> {
        let mut c = vec![0.0; self.num_vars];
        for &(i, a) in &self.objective.terms {
            c[i] += a;
        }
        let mut trip = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::with_capacity(self.blocks.len());
        let mut row = 0;
        for (cone, exprs) in &self.blocks {
            for e in exprs {
                for &(i, a) in &e.terms {
                    trip.push((row, i, -a));
                }
                b.push(e.constant);
                row += 1;
            }
            cones.push(*cone);
        }
        let a = SparseMatrix::from_triplets(row, self.num_vars, trip)?;
        Ok((ConeProgram::new(c, a, b, cones)?, self.objective.constant))
    }
}

/// Complex Hermitian matrix variable parametrized by `n^2` reals:
/// the diagonal first, then `(re, im)` of each strictly upper entry in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermitianVar {
    pub side: usize,
    pub offset: usize,
}

fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl HermitianVar {
    pub fn new(builder: &mut ProgramBuilder, side: usize) -> Self {
        Self { side, offset: builder.add_vars(side * side) }
    }

    pub fn num_params(&self) -> usize {
        self.side * self.side
    }

    fn re_idx(&self, i: usize, j: usize) -> usize {
        self.offset + self.side + 2 * pair_index(self.side, i, j)
    }

    pub fn diag(&self, i: usize) -> LinExpr {
        LinExpr::var(self.offset + i)
    }

    /// Real and imaginary parts of entry `(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> (LinExpr, LinExpr) {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => (self.diag(i), LinExpr::zero()),
            Less => (LinExpr::var(self.re_idx(i, j)), LinExpr::var(self.re_idx(i, j) + 1)),
            Greater => (LinExpr::var(self.re_idx(j, i)), LinExpr::term(self.re_idx(j, i) + 1, -1.0)),
        }
    }

    pub fn trace(&self) -> LinExpr {
        let mut e = LinExpr::zero();
        for i in 0..self.side {
            e.push(self.offset + i, 1.0);
        }
        e
    }

    /// `Re Tr(X B)` for a Hermitian coefficient matrix `B`.
    pub fn inner(&self, b: &DMatrix<C64>) -> LinExpr {
        let n = self.side;
        let mut e = LinExpr::zero();
        for i in 0..n {
            e.push(self.offset + i, b[(i, i)].re);
            for j in i + 1..n {
                let k = self.re_idx(i, j);
                e.push(k, 2.0 * b[(i, j)].re);
                e.push(k + 1, 2.0 * b[(i, j)].im);
            }
        }
        e
    }

    /// Coordinates whose Euclidean norm equals the Frobenius norm of `X`.
    pub fn fro_coords(&self) -> Vec<LinExpr> {
        let n = self.side;
        let mut out: Vec<LinExpr> = (0..n).map(|i| self.diag(i)).collect();
        for i in 0..n {
            for j in i + 1..n {
                let k = self.re_idx(i, j);
                out.push(LinExpr::term(k, SQRT2));
                out.push(LinExpr::term(k + 1, SQRT2));
            }
        }
        out
    }

    /// Numeric counterpart of [`HermitianVar::fro_coords`] for a matrix value.
    pub fn fro_of(m: &DMatrix<C64>) -> Vec<f64> {
        let n = m.nrows();
        let mut out: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
        for i in 0..n {
            for j in i + 1..n {
                let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                out.push(SQRT2 * v.re);
                out.push(SQRT2 * v.im);
            }
        }
        out
    }

    /// Basis matrix of parameter `k`.
    pub fn basis(side: usize, k: usize) -> DMatrix<C64> {
        let mut b = DMatrix::zeros(side, side);
        if k < side {
            b[(k, k)] = C64::from(1.0);
            return b;
        }
        let p = (k - side) / 2;
        let imag = (k - side) % 2 == 1;
        let (mut i, mut rem) = (0, p);
        while rem >= side - i - 1 {
            rem -= side - i - 1;
            i += 1;
        }
        let j = i + 1 + rem;
        let v = if imag { C64::new(0.0, 1.0) } else { C64::new(1.0, 0.0) };
        b[(i, j)] = v;
        b[(j, i)] = v.conj();
        b
    }

    pub fn params_of(m: &DMatrix<C64>) -> Vec<f64> {
        let n = m.nrows();
        let mut out: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
        for i in 0..n {
            for j in i + 1..n {
                let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                out.push(v.re);
                out.push(v.im);
            }
        }
        out
    }

    pub fn value(&self, x: &[f64]) -> DMatrix<C64> {
        let n = self.side;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::from(x[self.offset + i]);
            for j in i + 1..n {
                let k = self.re_idx(i, j);
                let v = C64::new(x[k], x[k + 1]);
                m[(i, j)] = v;
                m[(j, i)] = v.conj();
            }
        }
        m
    }

    /// Scaled vectorization of the real embedding `[[Re X, -Im X], [Im X, Re X]]`.
    pub fn embed_rows(&self) -> Vec<LinExpr> {
        let n = self.side;
        let s = 2 * n;
        let entry = |p: usize, q: usize| -> LinExpr {
            let (pi, qi) = (p % n, q % n);
            let (re, im) = self.entry(pi, qi);
            match (p >= n, q >= n) {
                (false, false) | (true, true) => re,
                (true, false) => im,
                (false, true) => -im,
            }
        };
        let mut rows = Vec::with_capacity(s * (s + 1) / 2);
        for j in 0..s {
            for i in j..s {
                let e = entry(i, j);
                rows.push(if i == j { e } else { e * SQRT2 });
            }
        }
        rows
    }

    /// Adds the constraint `X >= 0` through the real embedding.
    pub fn constrain_psd(&self, builder: &mut ProgramBuilder) {
        builder.psd(2 * self.side, self.embed_rows());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::psd::{hermitian_embed, svec};

    fn sample(n: usize) -> DMatrix<C64> {
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::from(1.0 + i as f64)
            } else if i < j {
                C64::new(0.1 * (i + 2 * j) as f64, -0.3 * (j as f64) + 0.05 * i as f64)
            } else {
                C64::new(0.1 * (j + 2 * i) as f64, 0.3 * (i as f64) - 0.05 * j as f64)
            }
        })
    }

    #[test]
    fn params_round_trip_and_embedding() {
        let mut b = ProgramBuilder::new();
        let pad = b.add_vars(3);
        assert_eq!(pad, 0);
        let h = HermitianVar::new(&mut b, 3);
        let m = sample(3);
        let mut x = vec![0.0; b.num_vars()];
        x[h.offset..].copy_from_slice(&HermitianVar::params_of(&m));
        assert!((h.value(&x) - &m).norm() < 1e-15);
        let rows: Vec<f64> = h.embed_rows().iter().map(|e| e.eval(&x)).collect();
        let direct = svec(&hermitian_embed(&m));
        for (a, b) in rows.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-14);
        }
        let fro: f64 = h.fro_coords().iter().map(|e| e.eval(&x).powi(2)).sum::<f64>().sqrt();
        assert!((fro - m.norm()).abs() < 1e-13);
        let bm = sample(3) * C64::from(0.7);
        let tr = (&m * &bm).trace().re;
        assert!((h.inner(&bm).eval(&x) - tr).abs() < 1e-13);
        for k in 0..9 {
            let basis = HermitianVar::basis(3, k);
            let mut e = vec![0.0; 9];
            e[k] = 1.0;
            let mut xx = vec![0.0; b.num_vars()];
            xx[h.offset..].copy_from_slice(&e);
            assert!((h.value(&xx) - basis).norm() < 1e-15);
        }
    }
}
