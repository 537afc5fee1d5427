//! Primal-dual interior-point method on the homogeneous self-dual embedding,
//! with Nesterov-Todd scaling and a Mehrotra predictor-corrector.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, QR};
use serde::{Deserialize, Serialize};

use super::cones::{identity, jdiv, jprod, max_step, max_violation, Scaling};
use super::psd::smat;
use super::program::{Cone, ConeProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Target relative residuals and gap.
    pub tol: f64,
    /// Accepted accuracy when progress stalls before `tol` is reached.
    pub tol_reduced: f64,
    pub tol_infeasible: f64,
    pub step_fraction: f64,
    pub refine_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-8, tol_reduced: 1e-6, tol_infeasible: 1e-8, step_fraction: 0.99, refine_steps: 3 }
    }
}

/// Relative KKT residual above which the normal equations are abandoned for the QR path.
const KKT_ACCURACY: f64 = 1e-4;
const EXTRA_REFINE: usize = 6;

/// Relative residuals of an iterate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeSolution {
    pub x: Vec<f64>,
    /// Dual variable of the cone constraint.
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub status: SolveStatus,
    pub residuals: Residuals,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

struct Block {
    cone: Cone,
    start: usize,
    len: usize,
    support: Vec<usize>,
    a_sub: DMatrix<f64>,
    gram: Gram,
}

/// Iteration-independent data for forming `A_b' H_b^{-1} A_b` cheaply.
enum Gram {
    Dense,
    /// `sum_{i >= 1} a_i a_i'` over the rows of a second-order block.
    Soc(DMatrix<f64>),
    /// Nonzeros `(i, j, v)` of the symmetric matrix of each column of a PSD block.
    Psd(Vec<Vec<(usize, usize, f64)>>),
}

impl Gram {
    fn new(cone: Cone, a_sub: &DMatrix<f64>) -> Self {
        match cone {
            Cone::SecondOrder(_) if a_sub.ncols() > 0 => {
                let tail = a_sub.rows(1, a_sub.nrows() - 1);
                Gram::Soc(tail.tr_mul(&tail))
            }
            Cone::Psd(side) => {
                let cols: Vec<Vec<(usize, usize, f64)>> = (0..a_sub.ncols())
                    .map(|k| {
                        let m = smat(a_sub.column(k).as_slice(), side);
                        let mut e = Vec::new();
                        for j in 0..side {
                            for i in 0..side {
                                if m[(i, j)] != 0.0 {
                                    e.push((i, j, m[(i, j)]));
                                }
                            }
                        }
                        e
                    })
                    .collect();
                let work: usize = cols.iter().map(Vec::len).sum::<usize>().pow(2);
                if work <= a_sub.nrows() * a_sub.ncols() * a_sub.ncols() {
                    Gram::Psd(cols)
                } else {
                    Gram::Dense
                }
            }
            _ => Gram::Dense,
        }
    }
}

impl Block {
    fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

struct Data {
    /// Nonzeros of `A` as `(row, col, value)`.
    a_nz: Vec<(usize, usize, f64)>,
    c: DVector<f64>,
    b: DVector<f64>,
    blocks: Vec<Block>,
    zero_rows: Vec<usize>,
    a_zero: DMatrix<f64>,
    eq: Option<EqBasis>,
    degree: usize,
}

impl Data {
    fn new(p: &ConeProgram) -> Option<Self> {
        let a = p.a().to_dense();
        let (m, n) = (a.nrows(), a.ncols());
        let mut blocks = Vec::new();
        let mut zero_rows = Vec::new();
        let mut start = 0;
        for &cone in p.cones() {
            let len = cone.rows();
            if let Cone::Zero(_) = cone {
                zero_rows.extend(start..start + len);
            }
            let support: Vec<usize> = (0..n).filter(|&j| (start..start + len).any(|i| a[(i, j)] != 0.0)).collect();
            let a_sub = DMatrix::from_fn(len, support.len(), |i, k| a[(start + i, support[k])]);
            let gram = Gram::new(cone, &a_sub);
            blocks.push(Block { cone, start, len, support, a_sub, gram });
            start += len;
        }
        debug_assert_eq!(start, m);
        let _ = m;
        let a_zero = DMatrix::from_fn(zero_rows.len(), n, |i, j| a[(zero_rows[i], j)]);
        let eq = if zero_rows.is_empty() {
            None
        } else {
            EqBasis::new(&DMatrix::from_fn(zero_rows.len(), n, |i, j| a[(zero_rows[i], j)]))
        };
        let degree = p.cones().iter().map(Cone::degree).sum();
        Some(Self {
            a_nz: p.a().entries().to_vec(),
            c: DVector::from_column_slice(p.c()),
            b: DVector::from_column_slice(p.b()),
            blocks,
            zero_rows,
            a_zero,
            eq,
            degree,
        })
    }
}

impl Data {
    fn ax(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.b.len());
        for &(i, j, v) in &self.a_nz {
            y[i] += v * x[j];
        }
        y
    }

    fn atz(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.c.len());
        for &(i, j, v) in &self.a_nz {
            y[j] += v * z[i];
        }
        y
    }
}

/// Orthonormal split of the variable space against the equality rows:
/// `A_E' = Q1 R11`, with `Q2` spanning the null space of `A_E`.
struct EqBasis {
    q1: DMatrix<f64>,
    q2: DMatrix<f64>,
    r11: DMatrix<f64>,
}

impl EqBasis {
    fn new(a_eq: &DMatrix<f64>) -> Option<Self> {
        let (me, n) = a_eq.shape();
        if me > n {
            return None;
        }
        // QR of [A_E' | I] yields a full orthonormal basis whose leading columns span range(A_E').
        let mut aug = DMatrix::zeros(n, me + n);
        aug.view_mut((0, 0), (n, me)).copy_from(&a_eq.transpose());
        aug.view_mut((0, me), (n, n)).fill_with_identity();
        let qr = aug.qr();
        let q = qr.q();
        let r = qr.r();
        let r11 = r.view((0, 0), (me, me)).into_owned();
        let scale = a_eq.amax().max(1.0);
        if (0..me).any(|i| !(r11[(i, i)].abs() > 1e-12 * scale)) {
            return None;
        }
        Some(Self { q1: q.columns(0, me).into_owned(), q2: q.columns(me, n - me).into_owned(), r11 })
    }
}

/// Factorization of `[[0, A'], [A, -H]]`.
///
/// The normal-equation form (Cholesky of `A_G' H^{-1} A_G`, Schur complement for equality rows)
/// is cheap but squares the conditioning; the QR form factors `W^{-T} A_G Q2` directly and is
/// used once the normal equations stop delivering accurate directions.
enum Kkt {
    Normal {
        chol: Cholesky<f64, Dyn>,
        /// `M^{-1} A_E'` and the Cholesky factor of `A_E M^{-1} A_E'`.
        schur: Option<(DMatrix<f64>, Cholesky<f64, Dyn>)>,
    },
    Qr {
        /// `W^{-T} A_G` with zero rows on the equality positions.
        at_scaled: DMatrix<f64>,
        qr: QR<f64, Dyn, Dyn>,
        r: DMatrix<f64>,
        rdiag_floor: f64,
    },
}

fn chol_regularized(mut m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut reg = scale * 1e-14;
    for _ in 0..10 {
        for i in 0..n {
            m[(i, i)] += reg;
        }
        if let Some(c) = Cholesky::new(m.clone()) {
            return Some(c);
        }
        reg *= 10.0;
    }
    None
}

fn scaled_blocks(d: &Data, sc: &[Scaling]) -> Vec<DMatrix<f64>> {
    d.blocks
        .iter()
        .zip(sc)
        .map(|(blk, s)| {
            if matches!(blk.cone, Cone::Zero(_)) || blk.support.is_empty() {
                DMatrix::zeros(0, 0)
            } else {
                s.winv_t_cols(&blk.a_sub)
            }
        })
        .collect()
}

/// `H^{-1} v = W^{-1} W^{-T} v` on one block.
fn h_inv(s: &Scaling, v: &[f64]) -> DVector<f64> {
    let mut t = vec![0.0; v.len()];
    s.apply_winv_t(v, &mut t);
    let mut out = DVector::zeros(v.len());
    s.apply_winv(&t, out.as_mut_slice());
    out
}

/// `A_b' H_b^{-1} A_b` on the block's column support.
fn block_gram(blk: &Block, s: &Scaling) -> DMatrix<f64> {
    match (&blk.gram, s) {
        (Gram::Soc(g1), Scaling::Soc { eta, wb }) => {
            // W^{-1} = (E + V M V') / eta with E = diag(0, I), V = [e0, (0, w1)], M = [[w0, -1], [-1, c]]
            let a = &blk.a_sub;
            let w0 = wb[0];
            let c = 1.0 / (1.0 + w0);
            let a0 = a.row(0).transpose();
            let w1 = DVector::from_column_slice(&wb[1..]);
            let p1 = a.rows(1, a.nrows() - 1).tr_mul(&w1);
            let b0 = &a0 * w0 - &p1;
            let b1 = &p1 * c - &a0;
            let cross = &p1 * b1.transpose();
            let g = g1 + &cross + cross.transpose() + &b0 * b0.transpose() + &b1 * b1.transpose() * w1.norm_squared();
            g / (eta * eta)
        }
        (Gram::Psd(cols), Scaling::Psd { rinv, .. }) => {
            // <W^{-T} a_p, W^{-T} a_q> = Tr(A_p S A_q S) with S = Rinv' Rinv
            let sm = rinv.tr_mul(rinv);
            let k = cols.len();
            let mut g = DMatrix::zeros(k, k);
            for p in 0..k {
                for q in p..k {
                    let mut acc = 0.0;
                    for &(i, j, a) in &cols[p] {
                        for &(kk, l, b) in &cols[q] {
                            acc += a * b * sm[(j, kk)] * sm[(l, i)];
                        }
                    }
                    g[(p, q)] = acc;
                    g[(q, p)] = acc;
                }
            }
            g
        }
        _ => {
            let sb = s.winv_t_cols(&blk.a_sub);
            sb.tr_mul(&sb)
        }
    }
}

/// `W^{-T} r` on the cone rows, zero on equality rows.
fn scale_rhs(d: &Data, sc: &[Scaling], r2: &DVector<f64>) -> DVector<f64> {
    let mut v = DVector::zeros(r2.len());
    for (blk, s) in d.blocks.iter().zip(sc) {
        if matches!(blk.cone, Cone::Zero(_)) {
            continue;
        }
        let r = blk.range();
        s.apply_winv_t(&r2.as_slice()[r.clone()], &mut v.as_mut_slice()[r]);
    }
    v
}

/// `W^{-1} r` on the cone rows, zero on equality rows.
fn unscale(d: &Data, sc: &[Scaling], resid: &DVector<f64>) -> DVector<f64> {
    let mut z = DVector::zeros(resid.len());
    for (blk, s) in d.blocks.iter().zip(sc) {
        if matches!(blk.cone, Cone::Zero(_)) {
            continue;
        }
        let r = blk.range();
        s.apply_winv(&resid.as_slice()[r.clone()], &mut z.as_mut_slice()[r]);
    }
    z
}

impl Kkt {
    fn normal(d: &Data, sc: &[Scaling]) -> Option<Kkt> {
        let n = d.c.len();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for (blk, s) in d.blocks.iter().zip(sc) {
            if matches!(blk.cone, Cone::Zero(_)) || blk.support.is_empty() {
                continue;
            }
            let g = block_gram(blk, s);
            for (p, &i) in blk.support.iter().enumerate() {
                for (q, &j) in blk.support.iter().enumerate() {
                    m[(i, j)] += g[(p, q)];
                }
            }
        }
        if m.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let chol = chol_regularized(m)?;
        let schur = if d.zero_rows.is_empty() {
            None
        } else {
            let minv_aet = chol.solve(&d.a_zero.transpose());
            let s = &d.a_zero * &minv_aet;
            let s = (&s + s.transpose()) * 0.5;
            Some((minv_aet, chol_regularized(s)?))
        };
        Some(Kkt::Normal { chol, schur })
    }

    fn qr(d: &Data, sc: &[Scaling]) -> Option<Kkt> {
        let (m, n) = (d.b.len(), d.c.len());
        let mut at_scaled = DMatrix::zeros(m, n);
        for (blk, sub) in d.blocks.iter().zip(scaled_blocks(d, sc)) {
            for (k, &j) in blk.support.iter().enumerate().take(sub.ncols()) {
                at_scaled.view_mut((blk.start, j), (blk.len, 1)).copy_from(&sub.column(k));
            }
        }
        let mut b = match &d.eq {
            Some(eq) => &at_scaled * &eq.q2,
            None => at_scaled.clone(),
        };
        if b.nrows() < b.ncols() {
            // short systems get zero rows so that R is square
            let k = b.ncols();
            b = b.resize_vertically(k, 0.0);
        }
        if b.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let qr = b.qr();
        let r = qr.r();
        let rmax = if r.is_empty() { 0.0 } else { r.diagonal().amax() };
        Some(Kkt::Qr { at_scaled, qr, r, rdiag_floor: 1e-13 * rmax.max(1e-300) })
    }

    fn solve_once(&self, d: &Data, sc: &[Scaling], r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        match self {
            Kkt::Normal { chol, schur } => {
                // rt = r1 + A' H^{-1} r2
                let mut rt = r1.clone();
                for (blk, s) in d.blocks.iter().zip(sc) {
                    if matches!(blk.cone, Cone::Zero(_)) || blk.support.is_empty() {
                        continue;
                    }
                    let u = h_inv(s, &r2.as_slice()[blk.range()]);
                    let au = blk.a_sub.tr_mul(&u);
                    for (k, &j) in blk.support.iter().enumerate() {
                        rt[j] += au[k];
                    }
                }
                let mut ze = None;
                let x = match schur {
                    None => chol.solve(&rt),
                    Some((minv_aet, schol)) => {
                        let re = DVector::from_fn(d.zero_rows.len(), |i, _| r2[d.zero_rows[i]]);
                        let zeq = schol.solve(&(minv_aet.transpose() * &rt - re));
                        let x = chol.solve(&(rt - d.a_zero.transpose() * &zeq));
                        ze = Some(zeq);
                        x
                    }
                };
                // z = H^{-1} (A x - r2) on the cone rows
                let mut z = DVector::zeros(r2.len());
                for (blk, s) in d.blocks.iter().zip(sc) {
                    if matches!(blk.cone, Cone::Zero(_)) {
                        continue;
                    }
                    let r = blk.range();
                    let xs = DVector::from_fn(blk.support.len(), |k, _| x[blk.support[k]]);
                    let ax = &blk.a_sub * xs - DVector::from_column_slice(&r2.as_slice()[r.clone()]);
                    z.rows_mut(blk.start, blk.len).copy_from(&h_inv(s, ax.as_slice()));
                }
                if let Some(zeq) = ze {
                    for (i, &row) in d.zero_rows.iter().enumerate() {
                        z[row] = zeq[i];
                    }
                }
                (x, z)
            }
            Kkt::Qr { at_scaled, qr, r, rdiag_floor } => {
                let v = scale_rhs(d, sc, r2);
                let (xp, r1_free) = match &d.eq {
                    Some(eq) => {
                        let re = DVector::from_fn(d.zero_rows.len(), |i, _| r2[d.zero_rows[i]]);
                        let t = eq.r11.tr_solve_upper_triangular(&re).unwrap_or_else(|| DVector::zeros(re.len()));
                        (&eq.q1 * t, eq.q2.transpose() * r1)
                    }
                    None => (DVector::zeros(r1.len()), r1.clone()),
                };
                let w = &v - at_scaled * &xp;
                let k = r1_free.len();
                // R y = R^{-T} Q2' r1 + Q' w
                let mut h = r1_free;
                rt_solve(r, *rdiag_floor, &mut h);
                let mut qtw = w.resize_vertically(v.len().max(k), 0.0);
                qr.q_tr_mul(&mut qtw);
                for i in 0..k {
                    h[i] += qtw[i];
                }
                r_solve(r, *rdiag_floor, &mut h);
                let x = match &d.eq {
                    Some(eq) => xp + &eq.q2 * h,
                    None => h,
                };
                let resid = at_scaled * &x - &v;
                let mut z = unscale(d, sc, &resid);
                if let Some(eq) = &d.eq {
                    let g = r1 - at_scaled.transpose() * &resid;
                    let ze = eq.r11.solve_upper_triangular(&(eq.q1.transpose() * g)).unwrap_or_else(|| DVector::zeros(d.zero_rows.len()));
                    for (i, &row) in d.zero_rows.iter().enumerate() {
                        z[row] = ze[i];
                    }
                }
                (x, z)
            }
        }
    }

    /// Solve with iterative refinement; also returns the relative residual of the result.
    /// Refinement continues past `refine` steps while the residual is above accuracy and still shrinking.
    fn solve(&self, d: &Data, sc: &[Scaling], r1: &DVector<f64>, r2: &DVector<f64>, refine: usize) -> (DVector<f64>, DVector<f64>, f64) {
        let (mut x, mut z) = self.solve_once(d, sc, r1, r2);
        let scale = 1.0 + r1.amax().max(r2.amax());
        let mut prev = f64::INFINITY;
        let mut k = 0;
        loop {
            let e1 = r1 - d.atz(&z);
            let e2 = r2 - (d.ax(&x) - apply_h(d, sc, &z));
            let err = e1.amax().max(e2.amax()) / scale;
            let stalled = err > 0.5 * prev;
            if err <= 1e-14 || (k >= refine && err <= KKT_ACCURACY) || stalled || k >= refine + EXTRA_REFINE {
                return (x, z, err);
            }
            let (dx, dz) = self.solve_once(d, sc, &e1, &e2);
            x += dx;
            z += dz;
            prev = err;
            k += 1;
        }
    }
}

/// Solves `R y = h` with tiny pivots floored (directions not seen by any cone).
fn r_solve(r: &DMatrix<f64>, floor: f64, h: &mut DVector<f64>) {
    for i in (0..h.len()).rev() {
        let mut acc = h[i];
        for j in i + 1..h.len() {
            acc -= r[(i, j)] * h[j];
        }
        h[i] = acc / floor_pivot(r[(i, i)], floor);
    }
}

fn rt_solve(r: &DMatrix<f64>, floor: f64, h: &mut DVector<f64>) {
    for i in 0..h.len() {
        let mut acc = h[i];
        for j in 0..i {
            acc -= r[(j, i)] * h[j];
        }
        h[i] = acc / floor_pivot(r[(i, i)], floor);
    }
}

fn floor_pivot(p: f64, floor: f64) -> f64 {
    if p.abs() >= floor {
        p
    } else if p < 0.0 {
        -floor
    } else {
        floor
    }
}

fn apply_h(d: &Data, sc: &[Scaling], z: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(z.len());
    for (blk, s) in d.blocks.iter().zip(sc) {
        let r = blk.range();
        s.apply_h(&z.as_slice()[r.clone()], &mut out.as_mut_slice()[r]);
    }
    out
}

/// Blockwise map helper over the cone blocks of an m-vector.
fn per_block(d: &Data, out: &mut DVector<f64>, mut f: impl FnMut(&Block, usize, &mut [f64])) {
    for (k, blk) in d.blocks.iter().enumerate() {
        let r = blk.range();
        f(blk, k, &mut out.as_mut_slice()[r]);
    }
}

fn shift_into_interior(d: &Data, v: &mut DVector<f64>) {
    let mut worst = f64::NEG_INFINITY;
    for blk in &d.blocks {
        worst = worst.max(max_violation(blk.cone, &v.as_slice()[blk.range()]));
    }
    if worst >= -1e-8 {
        let shift = 1.0 + worst.max(0.0);
        let mut e = DVector::zeros(v.len());
        per_block(d, &mut e, |blk, _, seg| identity(blk.cone, seg));
        *v += e * shift;
    }
}

fn step_limit(d: &Data, x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    d.blocks
        .iter()
        .map(|blk| max_step(blk.cone, &x.as_slice()[blk.range()], &dx.as_slice()[blk.range()]))
        .fold(f64::INFINITY, f64::min)
}

/// Solves `min c'x s.t. Ax + s = b, s in K`.
pub fn solve(program: &ConeProgram, options: &SolverOptions) -> ConeSolution {
    let Some(d) = Data::new(program) else {
        // dependent equality rows
        let (m, n) = (program.num_rows(), program.num_vars());
        let inf = Residuals { primal: f64::INFINITY, dual: f64::INFINITY, gap: f64::INFINITY };
        return ConeSolution {
            x: vec![0.0; n],
            y: vec![0.0; m],
            s: vec![0.0; m],
            status: SolveStatus::MaxIterations,
            residuals: inf,
            iterations: 0,
            primal_objective: f64::NAN,
            dual_objective: f64::NAN,
        };
    };
    let (m, n) = (d.b.len(), d.c.len());
    let norm_b = d.b.norm();
    let norm_c = d.c.norm();

    // Initial point from two least-squares systems with H = I on cone rows.
    let ident: Vec<Scaling> = d
        .blocks
        .iter()
        .map(|blk| match blk.cone {
            Cone::Zero(_) => Scaling::Zero,
            _ => Scaling::NonNeg { w: vec![1.0; blk.len] },
        })
        .collect();
    let mut x;
    let mut s;
    let mut z;
    match Kkt::normal(&d, &ident).or_else(|| Kkt::qr(&d, &ident)) {
        Some(k0) => {
            let (xp, _, _) = k0.solve(&d, &ident, &DVector::zeros(n), &d.b, options.refine_steps);
            s = &d.b - d.ax(&xp);
            x = xp;
            let (_, zd, _) = k0.solve(&d, &ident, &(-&d.c), &DVector::zeros(m), options.refine_steps);
            z = zd;
        }
        None => {
            x = DVector::zeros(n);
            s = d.b.clone();
            z = DVector::zeros(m);
        }
    }
    for &r in &d.zero_rows {
        s[r] = 0.0;
    }
    shift_into_interior(&d, &mut s);
    shift_into_interior(&d, &mut z);
    let (mut tau, mut kappa) = (1.0_f64, 1.0_f64);

    let mut status = SolveStatus::MaxIterations;
    let mut residuals = Residuals::default();
    let mut iterations = 0;
    let mut stalls = 0;
    let mut use_qr = false;
    let mut best: Option<(f64, DVector<f64>, DVector<f64>, DVector<f64>, f64, Residuals)> = None;

    for iter in 0..=options.max_iter {
        iterations = iter;
        let rx = d.atz(&z) + &d.c * tau;
        let rz = d.ax(&x) + &s - &d.b * tau;
        let ctx = d.c.dot(&x);
        let btz = d.b.dot(&z);
        let rt = ctx + btz + kappa;
        let pobj = ctx / tau;
        let dobj = -btz / tau;
        residuals = Residuals {
            primal: rz.norm() / tau / (1.0 + norm_b),
            dual: rx.norm() / tau / (1.0 + norm_c),
            gap: (pobj - dobj).abs() / (1.0 + pobj.abs().min(dobj.abs())),
        };
        let worst = residuals.primal.max(residuals.dual).max(residuals.gap);
        if best.as_ref().map_or(true, |b| worst < b.0) {
            best = Some((worst, x.clone(), s.clone(), z.clone(), tau, residuals));
        }
        if worst <= options.tol {
            status = SolveStatus::Optimal;
            break;
        }
        if tau < kappa {
            let atz_norm = d.atz(&z).norm();
            if btz < 0.0 && atz_norm <= options.tol_infeasible * (-btz) * (1.0 + norm_c) {
                status = SolveStatus::PrimalInfeasible;
                break;
            }
            let axs = (d.ax(&x) + &s).norm();
            if ctx < 0.0 && axs <= options.tol_infeasible * (-ctx) * (1.0 + norm_b) {
                status = SolveStatus::DualInfeasible;
                break;
            }
        }
        if iter == options.max_iter || stalls >= 3 {
            break;
        }

        let scalings: Option<Vec<Scaling>> =
            d.blocks.iter().map(|blk| Scaling::compute(blk.cone, &s.as_slice()[blk.range()], &z.as_slice()[blk.range()])).collect();
        let Some(sc) = scalings else { break };
        let factored = if use_qr { Kkt::qr(&d, &sc) } else { Kkt::normal(&d, &sc).or_else(|| Kkt::qr(&d, &sc)) };
        let Some(mut kkt) = factored else { break };

        let mut lambda = DVector::zeros(m);
        per_block(&d, &mut lambda, |blk, k, seg| sc[k].lambda(&z.as_slice()[blk.range()], seg));
        let mu = (s.dot(&z) + tau * kappa) / (d.degree as f64 + 1.0);

        let (mut x2, mut z2, err) = kkt.solve(&d, &sc, &(-&d.c), &d.b, options.refine_steps);
        if err > KKT_ACCURACY && matches!(kkt, Kkt::Normal { .. }) {
            use_qr = true;
            let Some(k) = Kkt::qr(&d, &sc) else { break };
            kkt = k;
            (x2, z2, _) = kkt.solve(&d, &sc, &(-&d.c), &d.b, options.refine_steps);
        }
        // -c'x2 - b'z2 equals |W z2|^2; the explicit form avoids cancellation.
        let mut wz2 = DVector::zeros(m);
        per_block(&d, &mut wz2, |blk, k, seg| sc[k].apply_w(&z2.as_slice()[blk.range()], seg));
        let denom2 = kappa / tau + wz2.norm_squared();

        // Solves the Newton system for targets (ds, dk) and residual weight eta.
        let direction = |ds: &DVector<f64>, dk: f64, eta: f64| {
            let mut lds = DVector::zeros(m);
            per_block(&d, &mut lds, |blk, k, seg| jdiv(blk.cone, &lambda.as_slice()[blk.range()], &sc[k], &ds.as_slice()[blk.range()], seg));
            let mut wt_lds = DVector::zeros(m);
            per_block(&d, &mut wt_lds, |blk, k, seg| sc[k].apply_wt(&lds.as_slice()[blk.range()], seg));
            let r1 = -&rx * eta;
            let r2 = -&rz * eta + &wt_lds;
            let (x1, z1, _) = kkt.solve(&d, &sc, &r1, &r2, options.refine_steps);
            let dtau = (eta * rt + d.c.dot(&x1) + d.b.dot(&z1) - dk / tau) / denom2;
            let dx = x1 + &x2 * dtau;
            let dz = z1 + &z2 * dtau;
            let ds_step = -wt_lds - apply_h(&d, &sc, &dz);
            let dkappa = (-dk - kappa * dtau) / tau;
            (dx, dz, ds_step, dtau, dkappa)
        };
        let max_alpha = |dz: &DVector<f64>, dsv: &DVector<f64>, dtau: f64, dkappa: f64| {
            let mut a = step_limit(&d, &s, dsv).min(step_limit(&d, &z, dz));
            if dtau < 0.0 {
                a = a.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-kappa / dkappa);
            }
            a
        };

        // Predictor.
        let mut ds_aff = DVector::zeros(m);
        per_block(&d, &mut ds_aff, |blk, _, seg| {
            let l = &lambda.as_slice()[blk.range()];
            jprod(blk.cone, l, l, seg)
        });
        let (_, dz_a, ds_a, dtau_a, dkappa_a) = direction(&ds_aff, tau * kappa, 1.0);
        let alpha_a = max_alpha(&dz_a, &ds_a, dtau_a, dkappa_a).min(1.0);
        let sigma = (1.0 - alpha_a).powi(3);

        // Corrector with second-order term.
        let mut ws = DVector::zeros(m);
        per_block(&d, &mut ws, |blk, k, seg| sc[k].apply_winv_t(&ds_a.as_slice()[blk.range()], seg));
        let mut wz = DVector::zeros(m);
        per_block(&d, &mut wz, |blk, k, seg| sc[k].apply_w(&dz_a.as_slice()[blk.range()], seg));
        let mut e = DVector::zeros(m);
        per_block(&d, &mut e, |blk, _, seg| identity(blk.cone, seg));
        let mut ds_comb = DVector::zeros(m);
        per_block(&d, &mut ds_comb, |blk, _, seg| {
            let r = blk.range();
            jprod(blk.cone, &ws.as_slice()[r.clone()], &wz.as_slice()[r], seg)
        });
        ds_comb += &ds_aff - e * (sigma * mu);
        let dk_comb = tau * kappa + dtau_a * dkappa_a - sigma * mu;
        let (dx, dz, dsv, dtau, dkappa) = direction(&ds_comb, dk_comb, 1.0 - sigma);
        let alpha = (options.step_fraction * max_alpha(&dz, &dsv, dtau, dkappa)).min(1.0);
        if !(alpha > 1e-10) {
            if best.as_ref().is_some_and(|b| b.0 <= options.tol_reduced) {
                break;
            }
            stalls += 1;
            continue;
        }
        x += dx * alpha;
        s += dsv * alpha;
        z += dz * alpha;
        tau += dtau * alpha;
        kappa += dkappa * alpha;
        for &r in &d.zero_rows {
            s[r] = 0.0;
        }
        if alpha < 1e-8 {
            stalls += 1;
        } else {
            stalls = 0;
        }
    }

    if status == SolveStatus::MaxIterations {
        if let Some((worst, bx, bs, bz, btau, bres)) = best {
            x = bx;
            s = bs;
            z = bz;
            tau = btau;
            residuals = bres;
            if worst <= options.tol_reduced {
                status = SolveStatus::Optimal;
            }
        }
    }
    let scale = match status {
        SolveStatus::Optimal | SolveStatus::MaxIterations => 1.0 / tau,
        _ => 1.0,
    };
    let xs: Vec<f64> = x.iter().map(|v| v * scale).collect();
    let ys: Vec<f64> = z.iter().map(|v| v * scale).collect();
    let ss: Vec<f64> = s.iter().map(|v| v * scale).collect();
    let primal_objective = d.c.iter().zip(&xs).map(|(a, b)| a * b).sum();
    let dual_objective = -d.b.iter().zip(&ys).map(|(a, b)| a * b).sum::<f64>();
    ConeSolution { x: xs, y: ys, s: ss, status, residuals, iterations, primal_objective, dual_objective }
}
