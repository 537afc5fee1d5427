//! Successive-convex-approximation building blocks shared by the full- and
//! statistical-CSI pipelines.
//!
//! The bilinear terms `Tr(q^H W q U)` are split with the polarization identity
//! and bounded from both sides by first-order expansions around a local point.
//! Everything that enters a cone program is expressed in SNR units: the
//! cascades are pre-scaled by `sqrt(P / sigma^2)`.

use nalgebra::{DMatrix, DVector, SVD};
use rand::Rng;

use crate::channel::Cascades;
use crate::conic::psd::{hermitian_eigen, hermitize, psd_project_hermitian, rank_ratio};
use crate::conic::{HermitianVar, LinExpr, ProgramBuilder};
use crate::error::{domain, Error, Result};
use crate::model::{User, C64};
use crate::rng::{streams, substream};

fn check_shapes(q: &DMatrix<C64>, w: &DMatrix<C64>, u: &DMatrix<C64>) -> Result<()> {
    let (m, n) = q.shape();
    if w.shape() != (m, m) || u.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "cascade is {m}x{n} but W is {:?} and U is {:?}",
            w.shape(),
            u.shape()
        )));
    }
    Ok(())
}

fn fro_inner(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// `Tr(q^H W q U)` through `1/4 (|X + U|_F^2 - |X - U|_F^2)` with `X = q^H W q`.
pub fn polarization_value(q: &DMatrix<C64>, w: &DMatrix<C64>, u: &DMatrix<C64>) -> Result<f64> {
    check_shapes(q, w, u)?;
    let x = q.adjoint() * w * q;
    Ok(0.25 * ((&x + u).norm_squared() - (&x - u).norm_squared()))
}

/// Convex lower and upper surrogates of `Tr(q^H W q U)` around a local point.
///
/// With `P = X/c + cU` and `Q = X/c - cU`, the true value is `(|P|^2 - |Q|^2)/4`.
/// Linearizing `|P|^2` gives the lower bound, linearizing `-|Q|^2` the upper one.
/// The balance factor `c` equalizes the magnitudes of the two local terms and
/// does not change either bound at the local point.
#[derive(Debug, Clone)]
pub struct PolarizationBounds {
    q: DMatrix<C64>,
    balance: f64,
    p_local: DMatrix<C64>,
    q_local: DMatrix<C64>,
}

impl PolarizationBounds {
    pub fn new(q: &DMatrix<C64>, w_local: &DMatrix<C64>, u_local: &DMatrix<C64>) -> Result<Self> {
        check_shapes(q, w_local, u_local)?;
        let x = q.adjoint() * w_local * q;
        let (nx, nu) = (x.norm(), u_local.norm());
        let balance = if nx > 0.0 && nu > 0.0 { (nx / nu).sqrt() } else { 1.0 };
        let cu = u_local * C64::from(balance);
        let xs = &x / C64::from(balance);
        Ok(Self { q: q.clone(), balance, p_local: &xs + &cu, q_local: &xs - &cu })
    }

    pub fn balance(&self) -> f64 {
        self.balance
    }

    fn split(&self, w: &DMatrix<C64>, u: &DMatrix<C64>) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
        check_shapes(&self.q, w, u)?;
        let xs = self.q.adjoint() * w * &self.q / C64::from(self.balance);
        let cu = u * C64::from(self.balance);
        Ok((&xs + &cu, &xs - &cu))
    }

    /// Largest `T` allowed by `4T <= 2<P, P~> - |P~|^2 - |Q|^2`.
    pub fn lower(&self, w: &DMatrix<C64>, u: &DMatrix<C64>) -> Result<f64> {
        let (p, q) = self.split(w, u)?;
        Ok(0.25 * (2.0 * fro_inner(&p, &self.p_local) - self.p_local.norm_squared() - q.norm_squared()))
    }

    /// Smallest `T` allowed by `4T >= |P|^2 - 2<Q, Q~> + |Q~|^2`.
    pub fn upper(&self, w: &DMatrix<C64>, u: &DMatrix<C64>) -> Result<f64> {
        let (p, q) = self.split(w, u)?;
        Ok(0.25 * (p.norm_squared() - 2.0 * fro_inner(&q, &self.q_local) + self.q_local.norm_squared()))
    }
}

/// `(lower, upper)` surrogate values at `(W, U)` around the local point `(W~, U~)`.
pub fn polarization_bounds(
    q: &DMatrix<C64>,
    w: &DMatrix<C64>,
    u: &DMatrix<C64>,
    w_local: &DMatrix<C64>,
    u_local: &DMatrix<C64>,
) -> Result<(f64, f64)> {
    let b = PolarizationBounds::new(q, w_local, u_local)?;
    Ok((b.lower(w, u)?, b.upper(w, u)?))
}

/// Convex majorant `1/2 (varpi (P T + sigma^2)^2 + phi^2 / varpi)` of `(P T + sigma^2) phi`.
pub fn majorant_upper(t_upper: f64, phi: f64, varpi: f64, power: f64, noise: f64) -> Result<f64> {
    if !(varpi > 0.0) {
        return domain(format!("majorant parameter must be positive, got {varpi}"));
    }
    let d = power * t_upper + noise;
    Ok(0.5 * (varpi * d * d + phi * phi / varpi))
}

/// Parameter at which [`majorant_upper`] touches the bilinear term.
pub fn majorant_tangent(t_upper: f64, phi: f64, power: f64, noise: f64) -> f64 {
    phi / (power * t_upper + noise)
}

/// `Tr(U) - u1^H U u1`, the rank-one gap of `U` along the unit vector `u1`.
pub fn dc_penalty_row(u: &DMatrix<C64>, u1: &DVector<C64>) -> f64 {
    u.trace().re - (u1.adjoint() * u * u1)[(0, 0)].re
}

/// Leading unit eigenvector and `lambda_1 / sum(lambda)` of a Hermitian PSD matrix.
pub fn rank_one_extract(m: &DMatrix<C64>) -> (DVector<C64>, f64) {
    let h = hermitize(m);
    let (_, vecs) = hermitian_eigen(&h);
    (vecs.column(0).into_owned(), rank_ratio(&h))
}

/// Leading eigenpair scaled back to a vector: `sqrt(lambda_1) v_1`.
pub fn rank_one_vector(m: &DMatrix<C64>) -> DVector<C64> {
    let (vals, vecs) = hermitian_eigen(&hermitize(m));
    vecs.column(0) * C64::from(vals[0].max(0.0).sqrt())
}

/// Element indices available to the transmitting and reflecting sides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurfaceLayout {
    pub num_elements: usize,
    pub transmit: Vec<usize>,
    pub reflect: Vec<usize>,
}

impl SurfaceLayout {
    /// Every element both transmits and reflects.
    pub fn star(n: usize) -> Self {
        Self { num_elements: n, transmit: (0..n).collect(), reflect: (0..n).collect() }
    }

    /// Conventional surfaces: the first `floor(n/2)` elements transmit only, the rest reflect only.
    pub fn conventional(n: usize) -> Self {
        let h = n / 2;
        Self { num_elements: n, transmit: (0..h).collect(), reflect: (h..n).collect() }
    }

    /// Only the side serving `user` is present.
    pub fn only(self, user: User) -> Self {
        match user {
            User::Iu => Self { reflect: Vec::new(), ..self },
            User::Ou => Self { transmit: Vec::new(), ..self },
        }
    }

    /// Elements of the side serving `user` (transmit side for IU, reflect side for OU).
    pub fn elements(&self, user: User) -> &[usize] {
        match user {
            User::Iu => &self.transmit,
            User::Ou => &self.reflect,
        }
    }
}

/// Channel data shared by every program of one realization.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cascades: Cascades,
    pub layout: SurfaceLayout,
    pub noise: f64,
}

impl Scenario {
    pub fn new(cascades: Cascades, layout: SurfaceLayout, noise: f64) -> Result<Self> {
        let n = cascades.q_iu.ncols();
        if layout.num_elements != n {
            return Err(Error::Dimension(format!("layout has {} elements, channel has {n}", layout.num_elements)));
        }
        if layout.transmit.iter().chain(&layout.reflect).any(|&k| k >= n) {
            return Err(Error::Dimension("layout element index out of range".into()));
        }
        if !(noise > 0.0) {
            return domain("noise power must be positive");
        }
        Ok(Self { cascades, layout, noise })
    }

    pub fn scaled(&self, powers: [f64; 2]) -> ScaledCascades {
        ScaledCascades::new(&self.cascades, powers, self.noise)
    }

    /// `(Z, Z_E)` per user: unscaled `Tr(q^H W q U)` and `Tr(q_E q_E^H U)`.
    pub fn gains(&self, w: &DMatrix<C64>, u_t: &DMatrix<C64>, u_r: &DMatrix<C64>) -> ([f64; 2], [f64; 2]) {
        let s = ScaledCascades::new(&self.cascades, [self.noise; 2], self.noise);
        let (zi, zei) = s.snrs(User::Iu, w, u_t);
        let (zo, zeo) = s.snrs(User::Ou, w, u_r);
        ([zi, zo], [zei, zeo])
    }
}

/// State carried between SCA rounds. Matrices are full size; entries of
/// elements outside a side's layout stay zero. Slack bounds are SNR values.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingIterate {
    pub w: DMatrix<C64>,
    pub u_t: DMatrix<C64>,
    pub u_r: DMatrix<C64>,
    /// `T^lower` per user, indexed by [`User::index`].
    pub t_lower: [f64; 2],
    pub t_upper: [f64; 2],
    /// SINR slack of the user decoded first.
    pub phi: f64,
    pub varpi: f64,
    pub rho: [f64; 2],
    pub xi: f64,
    pub mu: f64,
    pub tau: f64,
    pub u_t1: DVector<C64>,
    pub u_r1: DVector<C64>,
}

impl BeamformingIterate {
    pub fn u(&self, user: User) -> &DMatrix<C64> {
        match user {
            User::Iu => &self.u_t,
            User::Ou => &self.u_r,
        }
    }

    pub fn u_mut(&mut self, user: User) -> &mut DMatrix<C64> {
        match user {
            User::Iu => &mut self.u_t,
            User::Ou => &mut self.u_r,
        }
    }

    pub fn leading(&self, user: User) -> &DVector<C64> {
        match user {
            User::Iu => &self.u_t1,
            User::Ou => &self.u_r1,
        }
    }

    /// Maximum-ratio receive direction for `q_I + q_O` and coefficients of
    /// magnitude `sqrt(0.5)` with one random phase per element, shared by both sides.
    pub fn initial(cascades: &Cascades, layout: &SurfaceLayout, tau: f64, seed: u64) -> Result<Self> {
        let n = layout.num_elements;
        let sum = &cascades.q_iu + &cascades.q_ou;
        if sum.ncols() != n {
            return Err(Error::Dimension("layout does not match the cascades".into()));
        }
        let m = sum.nrows();
        let svd = SVD::new(sum, true, false);
        let k = svd.singular_values.imax();
        let w: DVector<C64> = svd.u.ok_or_else(|| Error::Degenerate("SVD failed".into()))?.column(k).into_owned();
        let mut rng = substream(seed, streams::INIT_PHASE);
        let phases: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let side = |els: &[usize]| {
            let mut v = DVector::zeros(n);
            for &e in els {
                v[e] = C64::from_polar(0.5f64.sqrt(), phases[e]);
            }
            v
        };
        let ut = side(&layout.transmit);
        let ur = side(&layout.reflect);
        let unit = |v: &DVector<C64>| {
            let nv = v.norm();
            if nv > 0.0 {
                v / C64::from(nv)
            } else {
                DVector::zeros(v.len())
            }
        };
        Ok(Self {
            w: &w * w.adjoint(),
            u_t: &ut * ut.adjoint(),
            u_r: &ur * ur.adjoint(),
            t_lower: [0.0; 2],
            t_upper: [0.0; 2],
            phi: 0.0,
            varpi: 1.0,
            rho: [0.0; 2],
            xi: 0.0,
            mu: 0.0,
            tau,
            u_t1: unit(&ut),
            u_r1: unit(&ur),
        }
        .check_dims(m, n)?)
    }

    fn check_dims(self, m: usize, n: usize) -> Result<Self> {
        if self.w.shape() != (m, m) || self.u_t.shape() != (n, n) || self.u_r.shape() != (n, n) {
            return Err(Error::Dimension("iterate shape mismatch".into()));
        }
        Ok(self)
    }

    /// Hermitian PSD projection of every matrix, `Tr(W) = 1`, and refreshed leading vectors.
    pub fn clean(&mut self) {
        self.w = psd_project_hermitian(&self.w);
        let tr = self.w.trace().re;
        if tr > 0.0 {
            self.w /= C64::from(tr);
        }
        self.u_t = psd_project_hermitian(&self.u_t);
        self.u_r = psd_project_hermitian(&self.u_r);
        self.u_t1 = rank_one_extract(&self.u_t).0;
        self.u_r1 = rank_one_extract(&self.u_r).0;
    }

    /// Sum of the rank-one gaps of both coefficient matrices along their own leading vectors.
    pub fn rank_gap(&self) -> f64 {
        dc_penalty_row(&self.u_t, &self.u_t1) + dc_penalty_row(&self.u_r, &self.u_r1)
    }

    /// Worst rank ratio over `W` and the non-empty coefficient matrices.
    pub fn min_rank_ratio(&self) -> f64 {
        let mut r = rank_ratio(&self.w);
        for u in [&self.u_t, &self.u_r] {
            if u.trace().re > 0.0 {
                r = r.min(rank_ratio(u));
            }
        }
        r
    }

    /// Max over elements of `diag(U_t) + diag(U_r) - 1`.
    pub fn split_violation(&self) -> f64 {
        (0..self.u_t.nrows()).map(|k| self.u_t[(k, k)].re + self.u_r[(k, k)].re - 1.0).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Cascades scaled to SNR units for the given transmit powers.
#[derive(Debug, Clone)]
pub struct ScaledCascades {
    pub a: [DMatrix<C64>; 2],
    pub e: [DVector<C64>; 2],
}

impl ScaledCascades {
    pub fn new(c: &Cascades, powers: [f64; 2], noise: f64) -> Self {
        let s = powers.map(|p| C64::from((p / noise).sqrt()));
        Self { a: [&c.q_iu * s[0], &c.q_ou * s[1]], e: [&c.qe_iu * s[0], &c.qe_ou * s[1]] }
    }

    /// `(t, gamma_E)`: legitimate and eavesdropper SNR of `user` at `(W, U)`.
    pub fn snrs(&self, user: User, w: &DMatrix<C64>, u: &DMatrix<C64>) -> (f64, f64) {
        let a = &self.a[user.index()];
        let e = &self.e[user.index()];
        let t = fro_inner(&(a.adjoint() * w * a), u);
        let ge = (e.adjoint() * u * e)[(0, 0)].re;
        (t.max(0.0), ge.max(0.0))
    }
}

fn restrict_cols(a: &DMatrix<C64>, els: &[usize]) -> DMatrix<C64> {
    DMatrix::from_fn(a.nrows(), els.len(), |i, j| a[(i, els[j])])
}

pub(crate) fn restrict_vec(v: &DVector<C64>, els: &[usize]) -> DVector<C64> {
    DVector::from_fn(els.len(), |i, _| v[els[i]])
}

pub(crate) fn restrict_square(m: &DMatrix<C64>, els: &[usize]) -> DMatrix<C64> {
    DMatrix::from_fn(els.len(), els.len(), |i, j| m[(els[i], els[j])])
}

pub(crate) fn embed_square(m: &DMatrix<C64>, els: &[usize], n: usize) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(n, n);
    for (i, &ei) in els.iter().enumerate() {
        for (j, &ej) in els.iter().enumerate() {
            out[(ei, ej)] = m[(i, j)];
        }
    }
    out
}

/// How the upper slack of a side enters the program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum UpperSlack {
    Absent,
    Used,
    /// Present but unused by the current decoding order; bounded above so the program stays bounded.
    Capped,
}

/// Variables of one side of the surface.
#[derive(Debug, Clone)]
pub(crate) struct SideVars {
    pub user: User,
    pub elements: Vec<usize>,
    pub u: HermitianVar,
    pub t_lo: usize,
    pub t_up: Option<usize>,
    pub rho: usize,
    pub e: DVector<C64>,
}

impl SideVars {
    /// Eavesdropper SNR `e^H U e` as an affine expression.
    pub fn eve_snr(&self) -> LinExpr {
        self.u.inner(&(&self.e * self.e.adjoint()))
    }
}

/// Variables and constraints common to every lifted program: `W >= 0` with
/// unit trace, the coefficient matrices with energy splitting, two-sided
/// surrogates of each legitimate SNR and the rank-one gaps.
#[derive(Debug, Clone)]
pub(crate) struct Lifted {
    pub w: HermitianVar,
    pub sides: Vec<SideVars>,
}

impl Lifted {
    pub fn side(&self, user: User) -> Option<&SideVars> {
        self.sides.iter().find(|s| s.user == user)
    }

    pub fn build(
        b: &mut ProgramBuilder,
        it: &BeamformingIterate,
        layout: &SurfaceLayout,
        scaled: &ScaledCascades,
        upper: [UpperSlack; 2],
    ) -> Result<Self> {
        let n = layout.num_elements;
        let m = it.w.nrows();
        if it.split_violation() > 1e-6 {
            return Err(Error::Construction(format!(
                "local point violates energy splitting by {:.3e}",
                it.split_violation()
            )));
        }
        if (it.w.trace().re - 1.0).abs() > 1e-6 {
            return Err(Error::Construction("local receive matrix must have unit trace".into()));
        }
        let w = HermitianVar::new(b, m);
        let users: Vec<User> = User::BOTH.into_iter().filter(|u| !layout.elements(*u).is_empty()).collect();
        let mut sides = Vec::new();
        for &user in &users {
            let els = layout.elements(user).to_vec();
            let u = HermitianVar::new(b, els.len());
            let t_lo = b.add_var();
            let t_up = (upper[user.index()] != UpperSlack::Absent).then(|| b.add_var());
            let rho = b.add_var();
            let e = restrict_vec(&scaled.e[user.index()], &els);
            sides.push(SideVars { user, elements: els, u, t_lo, t_up, rho, e });
        }
        w.constrain_psd(b);
        b.zero(vec![w.trace() - 1.0]);

        // energy splitting, element by element
        let mut split = Vec::with_capacity(n);
        for k in 0..n {
            let mut e = LinExpr::constant(1.0);
            for s in &sides {
                if let Some(pos) = s.elements.iter().position(|&x| x == k) {
                    e.add_scaled(&s.u.diag(pos), -1.0);
                }
            }
            if !e.terms.is_empty() {
                split.push(e);
            }
        }
        b.nonneg(split);

        let w_basis: Vec<DMatrix<C64>> = (0..m * m).map(|p| HermitianVar::basis(m, p)).collect();
        for s in &sides {
            s.u.constrain_psd(b);
            let a = restrict_cols(&scaled.a[s.user.index()], &s.elements);
            let u_local = restrict_square(it.u(s.user), &s.elements);
            let bounds = PolarizationBounds::new(&a, &it.w, &u_local)?;
            let mode = upper[s.user.index()];
            emit_polarization(b, &w, &s.u, &a, &w_basis, &bounds, s.t_lo, s.t_up, mode);
            b.nonneg(vec![LinExpr::var(s.t_lo)]);
            // rank-one gap along the previous leading vector
            let u1 = restrict_vec(it.leading(s.user), &s.elements);
            let u1 = if u1.norm() > 0.0 { &u1 / C64::from(u1.norm()) } else { u1 };
            let proj = DMatrix::identity(s.elements.len(), s.elements.len()) - &u1 * u1.adjoint();
            b.nonneg(vec![LinExpr::var(s.rho) - s.u.inner(&proj)]);
        }
        Ok(Self { w, sides })
    }

    /// Reads back matrices and slacks into a copy of `it` (scalars specific to a program are set by the caller).
    pub fn decode(&self, x: &[f64], it: &BeamformingIterate) -> BeamformingIterate {
        let mut out = it.clone();
        out.w = self.w.value(x);
        let n = it.u_t.nrows();
        for user in User::BOTH {
            match self.side(user) {
                Some(s) => {
                    *out.u_mut(user) = embed_square(&s.u.value(x), &s.elements, n);
                    out.t_lower[user.index()] = x[s.t_lo];
                    out.t_upper[user.index()] = s.t_up.map_or(x[s.t_lo], |v| x[v]);
                    out.rho[user.index()] = x[s.rho];
                }
                None => {
                    *out.u_mut(user) = DMatrix::zeros(n, n);
                    out.t_lower[user.index()] = 0.0;
                    out.t_upper[user.index()] = 0.0;
                    out.rho[user.index()] = 0.0;
                }
            }
        }
        out
    }
}

/// Emits the surrogate constraints for `T^lower` and optionally `T^upper` of one side.
#[allow(clippy::too_many_arguments)]
fn emit_polarization(
    b: &mut ProgramBuilder,
    w: &HermitianVar,
    u: &HermitianVar,
    a: &DMatrix<C64>,
    w_basis: &[DMatrix<C64>],
    bounds: &PolarizationBounds,
    t_lo: usize,
    t_up: Option<usize>,
    mode: UpperSlack,
) {
    let c = bounds.balance;
    let x_fro: Vec<Vec<f64>> = w_basis.iter().map(|bp| HermitianVar::fro_of(&(a.adjoint() * bp * a))).collect();
    let u_fro = u.fro_coords();
    let coords = |sign: f64| -> Vec<LinExpr> {
        (0..u_fro.len())
            .map(|r| {
                let mut e = LinExpr::zero();
                for (p, xf) in x_fro.iter().enumerate() {
                    e.push(w.offset + p, xf[r] / c);
                }
                e.add_scaled(&u_fro[r], sign * c);
                e
            })
            .collect()
    };
    // <M, L> for M = X/c + sign*c*U and a constant Hermitian L
    let inner = |l: &DMatrix<C64>, sign: f64| -> LinExpr {
        let mut e = w.inner(&(a * l * a.adjoint())) * (1.0 / c);
        e.add_scaled(&u.inner(l), sign * c);
        e
    };

    let s_q = b.add_var();
    let e_q = b.add_var();
    b.soc(LinExpr::var(s_q), coords(-1.0));
    b.rotated_soc(LinExpr::var(e_q), LinExpr::constant(1.0), vec![LinExpr::var(s_q)]);
    let lin = inner(&bounds.p_local, 1.0) * 2.0 - bounds.p_local.norm_squared() - LinExpr::var(e_q) - LinExpr::term(t_lo, 4.0);
    b.nonneg(vec![lin]);

    if let Some(t_up) = t_up {
        let s_p = b.add_var();
        let e_p = b.add_var();
        b.soc(LinExpr::var(s_p), coords(1.0));
        b.rotated_soc(LinExpr::var(e_p), LinExpr::constant(1.0), vec![LinExpr::var(s_p)]);
        let lin = LinExpr::term(t_up, 4.0) - LinExpr::var(e_p) + inner(&bounds.q_local, -1.0) * 2.0
            - bounds.q_local.norm_squared();
        b.nonneg(vec![lin]);
        if mode == UpperSlack::Capped {
            let cap = a.norm_squared() * a.ncols() as f64 + 1.0;
            b.nonneg(vec![LinExpr::constant(cap) - LinExpr::var(t_up)]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_polarization() {
        let one = |v: f64| DMatrix::from_element(1, 1, C64::from(v));
        assert!((polarization_value(&one(1.0), &one(4.0), &one(9.0)).unwrap() - 36.0).abs() < 1e-12);
        assert_eq!(polarization_value(&one(1.0), &one(4.0), &one(0.0)).unwrap(), 0.0);
        assert!(polarization_value(&one(1.0), &DMatrix::zeros(2, 2), &one(1.0)).is_err());
    }

    #[test]
    fn majorant_examples() {
        // P T + sigma^2 = 2
        assert!((majorant_upper(1.0, 2.0, 1.0, 1.0, 1.0).unwrap() - 4.0).abs() < 1e-15);
        assert!((majorant_upper(1.0, 2.0, 2.0, 1.0, 1.0).unwrap() - 5.0).abs() < 1e-15);
        assert!(majorant_upper(1.0, 2.0, 0.0, 1.0, 1.0).is_err());
        assert!((majorant_tangent(1.0, 2.0, 1.0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn penalty_examples() {
        let e1 = DVector::from_vec(vec![C64::from(1.0), C64::from(0.0)]);
        assert!((dc_penalty_row(&DMatrix::identity(2, 2), &e1) - 1.0).abs() < 1e-15);
        let v = DVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        assert!(dc_penalty_row(&(&v * v.adjoint()), &v).abs() < 1e-15);
    }

    #[test]
    fn layouts() {
        let c = SurfaceLayout::conventional(5);
        assert_eq!(c.transmit, vec![0, 1]);
        assert_eq!(c.reflect, vec![2, 3, 4]);
        let s = SurfaceLayout::star(3).only(User::Ou);
        assert!(s.transmit.is_empty());
        assert_eq!(s.elements(User::Ou), &[0, 1, 2]);
    }

    #[test]
    fn extraction_ratios() {
        let (_, r) = rank_one_extract(&(DMatrix::<C64>::identity(4, 4) * C64::from(0.25)));
        assert!((r - 0.25).abs() < 1e-12);
        let v = DVector::from_vec(vec![C64::new(1.0, 1.0), C64::new(0.0, 2.0)]);
        let (u, r) = rank_one_extract(&(&v * v.adjoint()));
        assert!((r - 1.0).abs() < 1e-12);
        assert!((u.norm() - 1.0).abs() < 1e-12);
        let back = rank_one_vector(&(&v * v.adjoint()));
        assert!(((&back * back.adjoint()) - &v * v.adjoint()).norm() < 1e-12);
    }
}
