//! Per-cone Nesterov-Todd scalings, Jordan products and step lengths.

use nalgebra::{DMatrix, SymmetricEigen};

use super::program::Cone;
use super::psd::{smat, svec};

/// Nesterov-Todd scaling `W` of one block with `W z = W^{-T} s = lambda`.
#[derive(Debug, Clone)]
pub(crate) enum Scaling {
    Zero,
    NonNeg { w: Vec<f64> },
    /// `W = eta [[w0, w1'], [w1, I + w1 w1' / (1 + w0)]]` with `wb = (w0, w1)` on the unit hyperboloid.
    Soc { eta: f64, wb: Vec<f64> },
    Psd { side: usize, r: DMatrix<f64>, rinv: DMatrix<f64>, lambda: Vec<f64> },
}

fn jdot(x: &[f64], y: &[f64]) -> f64 {
    x[0] * y[0] - x[1..].iter().zip(&y[1..]).map(|(a, b)| a * b).sum::<f64>()
}

impl Scaling {
    /// Scaling at a strictly interior pair; `None` if either point left the cone.
    pub fn compute(cone: Cone, s: &[f64], z: &[f64]) -> Option<Scaling> {
        match cone {
            Cone::Zero(_) => Some(Scaling::Zero),
            Cone::NonNeg(_) => {
                if s.iter().chain(z).any(|v| !(*v > 0.0)) {
                    return None;
                }
                Some(Scaling::NonNeg { w: s.iter().zip(z).map(|(a, b)| (a / b).sqrt()).collect() })
            }
            Cone::SecondOrder(n) => {
                let (sj, zj) = (jdot(s, s), jdot(z, z));
                if !(sj > 0.0 && zj > 0.0 && s[0] > 0.0 && z[0] > 0.0) {
                    return None;
                }
                let (sn, zn) = (sj.sqrt(), zj.sqrt());
                let sb: Vec<f64> = s.iter().map(|v| v / sn).collect();
                let zb: Vec<f64> = z.iter().map(|v| v / zn).collect();
                let dot: f64 = sb.iter().zip(&zb).map(|(a, b)| a * b).sum();
                let gamma = ((1.0 + dot) / 2.0).sqrt();
                let mut wb = vec![0.0; n];
                wb[0] = (sb[0] + zb[0]) / (2.0 * gamma);
                for i in 1..n {
                    wb[i] = (sb[i] - zb[i]) / (2.0 * gamma);
                }
                Some(Scaling::Soc { eta: (sn / zn).sqrt(), wb })
            }
            Cone::Psd(side) => {
                let ls = smat(s, side).cholesky()?.l();
                let lz = smat(z, side).cholesky()?.l();
                let svd = (lz.transpose() * &ls).svd(true, true);
                let vt = svd.v_t?;
                let sig = svd.singular_values;
                if sig.iter().any(|v| !(*v > 0.0)) {
                    return None;
                }
                // R = L_s V diag(sig)^{-1/2}
                let mut r = &ls * vt.transpose();
                for (j, sv) in sig.iter().enumerate() {
                    r.column_mut(j).scale_mut(1.0 / sv.sqrt());
                }
                let rinv = r.clone().try_inverse()?;
                Some(Scaling::Psd { side, r, rinv, lambda: sig.iter().copied().collect() })
            }
        }
    }

    /// Scaled point `lambda = W z`.
    pub fn lambda(&self, z: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Psd { side, lambda, .. } => {
                out.fill(0.0);
                let mut k = 0;
                for j in 0..*side {
                    out[k] = lambda[j];
                    k += side - j;
                }
            }
            _ => self.apply_w(z, out),
        }
    }

    pub fn apply_w(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Zero => out.fill(0.0),
            Scaling::NonNeg { w } => out.iter_mut().zip(w.iter().zip(v)).for_each(|(o, (a, b))| *o = a * b),
            Scaling::Soc { eta, wb } => soc_apply(*eta, wb, 1.0, v, out),
            Scaling::Psd { side, r, .. } => {
                let x = smat(v, *side);
                out.copy_from_slice(&svec(&(r.transpose() * x * r)));
            }
        }
    }

    pub fn apply_wt(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Psd { side, r, .. } => {
                let x = smat(v, *side);
                out.copy_from_slice(&svec(&(r * x * r.transpose())));
            }
            _ => self.apply_w(v, out),
        }
    }

    pub fn apply_winv_t(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Zero => out.fill(0.0),
            Scaling::NonNeg { w } => out.iter_mut().zip(w.iter().zip(v)).for_each(|(o, (a, b))| *o = b / a),
            Scaling::Soc { eta, wb } => soc_apply(1.0 / eta, wb, -1.0, v, out),
            Scaling::Psd { side, rinv, .. } => {
                let x = smat(v, *side);
                out.copy_from_slice(&svec(&(rinv * x * rinv.transpose())));
            }
        }
    }

    /// `H v = W^T W v`.
    pub fn apply_h(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Zero => out.fill(0.0),
            Scaling::NonNeg { w } => out.iter_mut().zip(w.iter().zip(v)).for_each(|(o, (a, b))| *o = a * a * b),
            Scaling::Soc { eta, wb } => {
                let mut t = vec![0.0; v.len()];
                soc_apply(*eta, wb, 1.0, v, &mut t);
                soc_apply(*eta, wb, 1.0, &t, out);
            }
            Scaling::Psd { side, r, .. } => {
                let rr = r * r.transpose();
                let x = smat(v, *side);
                out.copy_from_slice(&svec(&(&rr * x * &rr)));
            }
        }
    }

    /// `W^{-1} v`.
    pub fn apply_winv(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Psd { side, rinv, .. } => {
                let x = smat(v, *side);
                out.copy_from_slice(&svec(&(rinv.transpose() * x * rinv)));
            }
            _ => self.apply_winv_t(v, out),
        }
    }

    /// `W^{-T} A` for a dense block of columns.
    pub fn winv_t_cols(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Scaling::Zero => DMatrix::zeros(a.nrows(), a.ncols()),
            Scaling::NonNeg { w } => {
                let mut out = a.clone();
                for (i, wi) in w.iter().enumerate() {
                    out.row_mut(i).scale_mut(1.0 / wi);
                }
                out
            }
            Scaling::Soc { .. } | Scaling::Psd { .. } => {
                let mut out = DMatrix::zeros(a.nrows(), a.ncols());
                for j in 0..a.ncols() {
                    let col: Vec<f64> = a.column(j).iter().copied().collect();
                    self.apply_winv_t(&col, out.column_mut(j).as_mut_slice());
                }
                out
            }
        }
    }
}

/// `scale [[w0, sign w1'], [sign w1, I + w1 w1' / (1 + w0)]] v`; `sign = -1` gives the inverse up to scale.
fn soc_apply(scale: f64, wb: &[f64], sign: f64, v: &[f64], out: &mut [f64]) {
    let w0 = wb[0];
    let dot: f64 = wb[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum();
    out[0] = scale * (w0 * v[0] + sign * dot);
    let f = sign * v[0] + dot / (1.0 + w0);
    for i in 1..v.len() {
        out[i] = scale * (v[i] + wb[i] * f);
    }
}

/// Jordan product `u o v` of the cone algebra.
pub(crate) fn jprod(cone: Cone, u: &[f64], v: &[f64], out: &mut [f64]) {
    match cone {
        Cone::Zero(_) => out.fill(0.0),
        Cone::NonNeg(_) => out.iter_mut().zip(u.iter().zip(v)).for_each(|(o, (a, b))| *o = a * b),
        Cone::SecondOrder(_) => {
            out[0] = u.iter().zip(v).map(|(a, b)| a * b).sum();
            for i in 1..u.len() {
                out[i] = u[0] * v[i] + v[0] * u[i];
            }
        }
        Cone::Psd(side) => {
            let (a, b) = (smat(u, side), smat(v, side));
            let p = &a * &b;
            out.copy_from_slice(&svec(&((&p + p.transpose()) * 0.5)));
        }
    }
}

/// Solves `lambda o x = v` for `x`, with `lambda` the scaled point of `scaling`.
pub(crate) fn jdiv(cone: Cone, lambda: &[f64], scaling: &Scaling, v: &[f64], out: &mut [f64]) {
    match (cone, scaling) {
        (Cone::Zero(_), _) => out.fill(0.0),
        (Cone::NonNeg(_), _) => out.iter_mut().zip(lambda.iter().zip(v)).for_each(|(o, (l, b))| *o = b / l),
        (Cone::SecondOrder(_), _) => {
            let (u0, u1) = (lambda[0], &lambda[1..]);
            let det = u0 * u0 - u1.iter().map(|x| x * x).sum::<f64>();
            let u1v1: f64 = u1.iter().zip(&v[1..]).map(|(a, b)| a * b).sum();
            let x0 = (u0 * v[0] - u1v1) / det;
            out[0] = x0;
            for i in 1..lambda.len() {
                out[i] = (v[i] - x0 * lambda[i]) / u0;
            }
        }
        (Cone::Psd(side), Scaling::Psd { lambda: lam, .. }) => {
            let mut k = 0;
            for j in 0..side {
                for i in j..side {
                    out[k] = 2.0 * v[k] / (lam[i] + lam[j]);
                    k += 1;
                }
            }
        }
        (Cone::Psd(_), _) => unreachable!("PSD block without PSD scaling"),
    }
}

/// Identity element `e` of the block.
pub(crate) fn identity(cone: Cone, out: &mut [f64]) {
    out.fill(0.0);
    match cone {
        Cone::Zero(_) => {}
        Cone::NonNeg(_) => out.fill(1.0),
        Cone::SecondOrder(_) => out[0] = 1.0,
        Cone::Psd(side) => {
            let mut k = 0;
            for j in 0..side {
                out[k] = 1.0;
                k += side - j;
            }
        }
    }
}

/// Largest `t` with `x - t e` on the boundary direction, i.e. `-min eig(x)`.
pub(crate) fn max_violation(cone: Cone, x: &[f64]) -> f64 {
    match cone {
        Cone::Zero(_) => f64::NEG_INFINITY,
        Cone::NonNeg(_) => x.iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max),
        Cone::SecondOrder(_) => x[1..].iter().map(|v| v * v).sum::<f64>().sqrt() - x[0],
        Cone::Psd(side) => {
            let eig = SymmetricEigen::new(smat(x, side));
            -eig.eigenvalues.min()
        }
    }
}

/// Largest `alpha` keeping `x + alpha d` in the cone (may be infinite).
pub(crate) fn max_step(cone: Cone, x: &[f64], d: &[f64]) -> f64 {
    match cone {
        Cone::Zero(_) => f64::INFINITY,
        Cone::NonNeg(_) => x
            .iter()
            .zip(d)
            .filter(|(_, di)| **di < 0.0)
            .map(|(xi, di)| -xi / di)
            .fold(f64::INFINITY, f64::min),
        Cone::SecondOrder(_) => {
            let a = jdot(d, d);
            let b = jdot(x, d);
            let c = jdot(x, x).max(0.0);
            // f(t) = a t^2 + 2 b t + c, first positive root
            let disc = b * b - a * c;
            if a.abs() < 1e-300 {
                return if b < 0.0 { -c / (2.0 * b) } else { f64::INFINITY };
            }
            if disc < 0.0 {
                return f64::INFINITY;
            }
            let sq = disc.sqrt();
            let q = -(b + b.signum() * sq);
            let mut roots = [q / a, if q != 0.0 { c / q } else { f64::INFINITY }];
            roots.sort_by(f64::total_cmp);
            let t = roots.into_iter().find(|r| *r > 0.0).unwrap_or(f64::INFINITY);
            // guard the lower nappe when the roots do not bound the step
            if t.is_infinite() && d[0] < 0.0 {
                return -x[0] / d[0];
            }
            t
        }
        Cone::Psd(side) => {
            let Some(chol) = smat(x, side).cholesky() else {
                return 0.0;
            };
            let l = chol.l();
            let Some(linv) = l.try_inverse() else {
                return 0.0;
            };
            let m = &linv * smat(d, side) * linv.transpose();
            let lmin = SymmetricEigen::new((&m + m.transpose()) * 0.5).eigenvalues.min();
            if lmin < 0.0 {
                -1.0 / lmin
            } else {
                f64::INFINITY
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn check_scaling(cone: Cone, s: &[f64], z: &[f64]) {
        let sc = Scaling::compute(cone, s, z).unwrap();
        let n = s.len();
        let (mut wz, mut wis, mut lam) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        sc.apply_w(z, &mut wz);
        sc.apply_winv_t(s, &mut wis);
        sc.lambda(z, &mut lam);
        for i in 0..n {
            assert!((wz[i] - wis[i]).abs() < 1e-9, "{cone:?}: Wz != W^-T s");
            assert!((wz[i] - lam[i]).abs() < 1e-9, "{cone:?}: lambda mismatch");
        }
        // W^{-1} W^{-T} H = I on a probe vector
        let probe: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut hp = vec![0.0; n];
        sc.apply_h(&probe, &mut hp);
        let t = sc.winv_t_cols(&DMatrix::from_column_slice(n, 1, &hp));
        let mut back = vec![0.0; n];
        sc.apply_winv(t.as_slice(), &mut back);
        for i in 0..n {
            assert!((back[i] - probe[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn nt_scaling_identities() {
        check_scaling(Cone::NonNeg(3), &[1.0, 2.0, 0.5], &[3.0, 0.1, 1.0]);
        check_scaling(Cone::SecondOrder(3), &[2.0, 0.5, -1.0], &[3.0, -1.0, 2.0]);
        let s = svec(&DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]));
        let z = svec(&DMatrix::from_row_slice(2, 2, &[1.0, -0.2, -0.2, 0.5]));
        check_scaling(Cone::Psd(2), &s, &z);
    }

    #[test]
    fn jordan_division_inverts_product() {
        for cone in [Cone::NonNeg(3), Cone::SecondOrder(3)] {
            let lam = [2.0, 0.5, 0.7];
            let x = [0.3, -1.0, 0.4];
            let mut v = [0.0; 3];
            jprod(cone, &lam, &x, &mut v);
            let sc = Scaling::compute(cone, &lam, &lam).unwrap();
            let mut back = [0.0; 3];
            jdiv(cone, &lam, &sc, &v, &mut back);
            for i in 0..3 {
                assert!((back[i] - x[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn step_lengths() {
        assert!((max_step(Cone::NonNeg(2), &[1.0, 2.0], &[-1.0, 1.0]) - 1.0).abs() < 1e-15);
        let t = max_step(Cone::SecondOrder(2), &[2.0, 0.0], &[0.0, 1.0]);
        assert!((t - 2.0).abs() < 1e-12);
        let s = svec(&DMatrix::identity(2, 2));
        let d = svec(&DMatrix::from_diagonal(&DVector::from_vec(vec![-0.5, 1.0])));
        assert!((max_step(Cone::Psd(2), &s, &d) - 2.0).abs() < 1e-12);
    }
}
