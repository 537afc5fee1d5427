//! Minimum secrecy capacity maximization with full eavesdropper CSI.
//!
//! Beamforming and surface coefficients are optimized by a penalty-based SCA
//! loop whose inner iterations also carry the Dinkelbach ratio; transmit
//! powers follow a closed-form policy. The two steps alternate until the
//! minimum secrecy capacity settles.

use nalgebra::{DMatrix, DVector};

use crate::channel::ChannelSet;
use crate::conic::{solve, ConeProgram, LinExpr, ProgramBuilder, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::model::{DecodingOrder, RadioConfig, SecrecyReport, StarCoefficients, Tolerances, User, C64};
use crate::sca::{
    rank_one_extract, rank_one_vector, BeamformingIterate, Lifted, ScaledCascades, Scenario, SurfaceLayout, UpperSlack,
};

/// Smallest majorant parameter used when the strong user's SINR slack is zero.
const MIN_VARPI: f64 = 1e-12;

/// Which legitimate links share the surface in one program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    /// Both users, decoded with SIC in the given order.
    Noma(DecodingOrder),
    /// One user alone, as in a TDMA slot.
    Single(User),
}

impl Link {
    pub(crate) fn upper_slacks(self) -> [UpperSlack; 2] {
        match self {
            Link::Noma(order) => {
                let mut u = [UpperSlack::Capped; 2];
                u[order.second().index()] = UpperSlack::Used;
                u
            }
            Link::Single(_) => [UpperSlack::Absent; 2],
        }
    }
}

/// Cone program of one SCA round together with the handles needed to read it back.
#[derive(Debug, Clone)]
pub struct SecrecyProgram {
    pub program: ConeProgram,
    pub objective_offset: f64,
    lifted: Lifted,
    phi: Option<usize>,
    xi: usize,
    link: Link,
}

impl SecrecyProgram {
    /// Number of scalar variables excluding the norm and epigraph auxiliaries of the quadratic terms.
    pub fn num_main_vars(&self) -> usize {
        let aux = self.lifted.sides.iter().map(|s| 2 * (1 + usize::from(s.t_up.is_some()))).sum::<usize>();
        self.program.num_vars() - aux
    }

    /// Iterate read from a solver point, cleaned and with refreshed majorant parameter and ratio.
    pub fn decode(&self, x: &[f64], it: &BeamformingIterate, scaled: &ScaledCascades) -> BeamformingIterate {
        let mut out = self.lifted.decode(x, it);
        out.phi = self.phi.map_or(0.0, |p| x[p].max(0.0));
        out.xi = x[self.xi].max(0.0);
        out.clean();
        if let Link::Noma(order) = self.link {
            let t_up = out.t_upper[order.second().index()];
            out.varpi = (out.phi / (t_up + 1.0)).max(MIN_VARPI);
        }
        out.mu = dinkelbach_mu(&out, scaled, self.link);
        out
    }
}

/// Assembles the SCA program around the local point `it`.
///
/// Maximizes `xi - tau (rho_t + rho_r)` subject to `1 + SINR slack - mu (1 + gamma_E) >= xi`
/// for every served user, SIC ordering, the majorized SINR product and the
/// common surface constraints. Powers enter through the SNR scaling of the cascades.
pub fn build_secrecy_program(
    scenario: &Scenario,
    it: &BeamformingIterate,
    powers: [f64; 2],
    link: Link,
    mu: f64,
    tau: f64,
) -> Result<SecrecyProgram> {
    if !(mu >= 0.0) || !(tau > 0.0) {
        return Err(Error::Construction(format!("need mu >= 0 and tau > 0, got {mu}, {tau}")));
    }
    let scaled = scenario.scaled(powers);
    let mut b = ProgramBuilder::new();
    let lifted = Lifted::build(&mut b, it, &scenario.layout, &scaled, link.upper_slacks())?;
    let xi = b.add_var();
    b.nonneg(vec![LinExpr::var(xi)]);
    let missing = |u: User| Error::Construction(format!("layout has no elements serving {u:?}"));
    let phi = match link {
        Link::Noma(order) => {
            let strong = lifted.side(order.first()).ok_or_else(|| missing(order.first()))?;
            let weak = lifted.side(order.second()).ok_or_else(|| missing(order.second()))?;
            let t_up_w = weak.t_up.expect("weak user carries an upper slack");
            let phi = b.add_var();
            b.nonneg(vec![LinExpr::var(phi), LinExpr::var(strong.t_lo) - LinExpr::var(t_up_w)]);
            let varpi = it.varpi.max(MIN_VARPI);
            let sv = varpi.sqrt();
            b.rotated_soc(
                LinExpr::term(strong.t_lo, 2.0),
                LinExpr::constant(1.0),
                vec![(LinExpr::var(t_up_w) + 1.0) * sv, LinExpr::term(phi, 1.0 / sv)],
            );
            b.nonneg(vec![
                LinExpr::var(phi) + 1.0 - (strong.eve_snr() + 1.0) * mu - LinExpr::var(xi),
                LinExpr::var(weak.t_lo) + 1.0 - (weak.eve_snr() + 1.0) * mu - LinExpr::var(xi),
            ]);
            Some(phi)
        }
        Link::Single(user) => {
            let s = lifted.side(user).ok_or_else(|| missing(user))?;
            b.nonneg(vec![LinExpr::var(s.t_lo) + 1.0 - (s.eve_snr() + 1.0) * mu - LinExpr::var(xi)]);
            None
        }
    };
    let mut obj = LinExpr::term(xi, -1.0);
    for s in &lifted.sides {
        obj.push(s.rho, tau);
    }
    b.minimize(obj);
    let (program, objective_offset) = b.build()?;
    Ok(SecrecyProgram { program, objective_offset, lifted, phi, xi, link })
}

/// Dinkelbach ratio: the smallest of `(1 + SINR slack) / (1 + gamma_E)` over served users.
pub fn dinkelbach_mu(it: &BeamformingIterate, scaled: &ScaledCascades, link: Link) -> f64 {
    let eve = |u: User| scaled.snrs(u, &it.w, it.u(u)).1;
    match link {
        Link::Noma(order) => {
            let (s, w) = (order.first(), order.second());
            let r_s = (1.0 + it.phi) / (1.0 + eve(s));
            let r_w = (1.0 + it.t_lower[w.index()]) / (1.0 + eve(w));
            r_s.min(r_w)
        }
        Link::Single(u) => (1.0 + it.t_lower[u.index()]) / (1.0 + eve(u)),
    }
}

/// Exact `(1 + SINR) / (1 + gamma_E)` per served user at the matrices of `it`.
pub fn secrecy_ratios(it: &BeamformingIterate, scaled: &ScaledCascades, link: Link) -> Vec<f64> {
    let snr = |u: User| scaled.snrs(u, &it.w, it.u(u));
    match link {
        Link::Noma(order) => {
            let (s, w) = (order.first(), order.second());
            let ((ts, es), (tw, ew)) = (snr(s), snr(w));
            vec![(1.0 + ts / (tw + 1.0)) / (1.0 + es), (1.0 + tw) / (1.0 + ew)]
        }
        Link::Single(u) => {
            let (t, e) = snr(u);
            vec![(1.0 + t) / (1.0 + e)]
        }
    }
}

/// Slacks set to the exact values at the matrices of `it`, so that `it` is a
/// feasible, tangent local point for new powers; `mu` becomes the exact ratio.
pub fn warm_start(it: &mut BeamformingIterate, scaled: &ScaledCascades, link: Link) {
    for u in User::BOTH {
        let (t, _) = scaled.snrs(u, &it.w, it.u(u));
        it.t_lower[u.index()] = t;
        it.t_upper[u.index()] = t;
    }
    if let Link::Noma(order) = link {
        let tw = it.t_upper[order.second().index()];
        it.phi = it.t_lower[order.first().index()] / (tw + 1.0);
        it.varpi = (it.phi / (tw + 1.0)).max(MIN_VARPI);
    }
    it.mu = secrecy_ratios(it, scaled, link).into_iter().fold(f64::INFINITY, f64::min);
}

/// Result of the two-layer SCA loop at fixed powers.
#[derive(Debug, Clone)]
pub struct TwoLayerOutcome {
    pub iterate: BeamformingIterate,
    /// Rank-one quality was not reached within the outer iteration budget.
    pub degraded: bool,
    /// `xi` after every solved program.
    pub xi_trace: Vec<f64>,
    pub mu_trace: Vec<f64>,
    pub solves: usize,
}

/// Solver settings for SCA rounds. High-SNR programs can stall a little short
/// of the default reduced accuracy; such points are still good linearization points.
pub(crate) fn sca_solver_options() -> SolverOptions {
    SolverOptions { tol_reduced: 1e-4, ..SolverOptions::default() }
}

/// Inner loop over SCA rounds with the Dinkelbach update, outer loop growing the rank penalty.
///
/// With `warm` unset the ratio starts at zero; otherwise `start` must hold
/// exact slacks for `powers` (see [`warm_start`]) and its ratio is kept.
pub fn two_layer_solve(
    scenario: &Scenario,
    powers: [f64; 2],
    link: Link,
    tol: &Tolerances,
    start: &BeamformingIterate,
    warm: bool,
) -> Result<TwoLayerOutcome> {
    if !(powers[0] >= 0.0 && powers[1] >= 0.0) {
        return Err(Error::Domain("powers must be nonnegative".into()));
    }
    let scaled = scenario.scaled(powers);
    let opts = sca_solver_options();
    let mut it = start.clone();
    if !warm {
        it.mu = 0.0;
    }
    let mut xi_trace = Vec::new();
    let mut mu_trace = Vec::new();
    let mut solves = 0;
    for _outer in 0..tol.max_outer {
        let mut prev_xi: Option<f64> = None;
        for _inner in 0..tol.max_inner {
            let prob = build_secrecy_program(scenario, &it, powers, link, it.mu, it.tau)?;
            let sol = solve(&prob.program, &opts);
            solves += 1;
            if sol.status != SolveStatus::Optimal {
                return Err(Error::Solver { iteration: solves, status: sol.status });
            }
            let next = prob.decode(&sol.x, &it, &scaled);
            // the ratio never decreases: the previous point stays feasible
            let next = BeamformingIterate { mu: next.mu.max(it.mu), ..next };
            xi_trace.push(next.xi);
            mu_trace.push(next.mu);
            let done = prev_xi.is_some_and(|p| (next.xi - p).abs() <= tol.inner_tol * next.mu.max(1.0));
            prev_xi = Some(next.xi);
            it = next;
            if done {
                break;
            }
        }
        if it.rank_gap() <= tol.penalty_tol {
            break;
        }
        it.tau *= tol.penalty_growth;
    }
    let degraded = it.min_rank_ratio() < 1.0 - tol.penalty_tol;
    Ok(TwoLayerOutcome { iterate: it, degraded, xi_trace, mu_trace, solves })
}

fn solve_quadratic(a2: f64, a1: f64, a0: f64) -> Vec<f64> {
    let scale = a2.abs().max(a1.abs()).max(a0.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if a2.abs() <= 1e-14 * scale {
        return if a1 != 0.0 { vec![-a0 / a1] } else { Vec::new() };
    }
    let disc = a1 * a1 - 4.0 * a2 * a0;
    if disc < 0.0 {
        return Vec::new();
    }
    let sgn = if a1 >= 0.0 { 1.0 } else { -1.0 };
    let q = -0.5 * (a1 + sgn * disc.sqrt());
    let mut r = vec![q / a2];
    if q != 0.0 {
        r.push(a0 / q);
    }
    r.sort_by(f64::total_cmp);
    r
}

/// Closed-form power policy at fixed beamforming.
///
/// The user decoded first transmits at its cap. The other user's power is the
/// crossing of the two secrecy ratios (a quadratic root), limited by the SIC
/// ordering and its own cap. `z` and `ze` are unscaled channel gains per user.
#[allow(clippy::too_many_arguments)]
pub fn optimal_power_full(
    z_i: f64,
    z_o: f64,
    z_ei: f64,
    z_eo: f64,
    noise: f64,
    p_i_max: f64,
    p_o_max: f64,
    order: DecodingOrder,
) -> Result<(f64, f64)> {
    if !(z_i > 0.0 && z_o > 0.0) {
        return Err(Error::Degenerate(format!("zero legitimate gain (Z_I = {z_i}, Z_O = {z_o})")));
    }
    if !(noise > 0.0) || !(z_ei >= 0.0 && z_eo >= 0.0) {
        return Err(Error::Domain("noise must be positive and eavesdropper gains nonnegative".into()));
    }
    let caps = [p_i_max, p_o_max];
    let z = [z_i / noise, z_o / noise];
    let ze = [z_ei / noise, z_eo / noise];
    let (s, w) = (order.first().index(), order.second().index());
    let p = caps[s];
    // ratio of the first-decoded user minus ratio of the other, as a function of the latter's power
    let gap = |x: f64| {
        let rs = (1.0 + p * z[s] / (x * z[w] + 1.0)) / (1.0 + p * ze[s]);
        let rw = (1.0 + x * z[w]) / (1.0 + x * ze[w]);
        rs - rw
    };
    let a2 = p * ze[s] * z[w] * z[w] + z[w] * z[w] - z[w] * ze[w];
    let a1 = z[w] + 2.0 * p * ze[s] * z[w] - ze[w] - p * z[s] * ze[w];
    let a0 = p * (ze[s] - z[s]);
    let crossing = solve_quadratic(a2, a1, a0).into_iter().filter(|r| r.is_finite() && *r > 0.0).find(|&r| {
        let h = 1e-6 * r;
        let tol = 1e-9 * (1.0 + gap(r - h).abs().max(gap(r + h).abs()));
        gap(r - h) >= -tol && gap(r + h) <= tol
    });
    let sic = p * z[s] / z[w];
    let pw = crossing.unwrap_or(caps[w]).min(sic).min(caps[w]).max(0.0);
    let mut out = [0.0; 2];
    out[s] = p;
    out[w] = pw;
    Ok((out[0], out[1]))
}

/// Minimum secrecy capacity for unscaled gains and powers under `order`.
pub fn min_secrecy_from_gains(z: [f64; 2], ze: [f64; 2], powers: [f64; 2], order: DecodingOrder, noise: f64) -> f64 {
    let t = [powers[0] * z[0] / noise, powers[1] * z[1] / noise];
    let e = [powers[0] * ze[0] / noise, powers[1] * ze[1] / noise];
    let (s, w) = (order.first().index(), order.second().index());
    let mut sinr = [0.0; 2];
    sinr[s] = t[s] / (t[w] + 1.0);
    sinr[w] = t[w];
    let c = |g: f64, ge: f64| ((1.0 + g).log2() - (1.0 + ge).log2()).max(0.0);
    c(sinr[0], e[0]).min(c(sinr[1], e[1]))
}

/// Full-CSI result for the better decoding order.
#[derive(Debug, Clone)]
pub struct FullCsiOutcome {
    pub iterate: BeamformingIterate,
    pub w: DVector<C64>,
    pub u_t: DVector<C64>,
    pub u_r: DVector<C64>,
    pub coefficients: StarCoefficients,
    pub p_iu: f64,
    pub p_ou: f64,
    pub order: DecodingOrder,
    /// Minimum secrecy capacity of the relaxed matrices after every alternation.
    pub trace: Vec<f64>,
    /// Minimum secrecy capacity of the extracted rank-one point.
    pub objective: f64,
    pub report: SecrecyReport,
    pub degraded: bool,
    pub converged: bool,
    pub solves: usize,
}

/// Caps, with the later-decoded user's power lowered if the SIC ordering requires it.
pub fn sic_repaired_caps(caps: [f64; 2], z: [f64; 2], order: DecodingOrder) -> [f64; 2] {
    let (s, w) = (order.first().index(), order.second().index());
    let mut p = caps;
    if z[w] > 0.0 && p[w] * z[w] > p[s] * z[s] {
        p[w] = p[s] * z[s] / z[w];
    }
    p
}

/// Rank-one vectors from the relaxed matrices, scaled to respect energy splitting.
pub fn extract_design(it: &BeamformingIterate) -> (DVector<C64>, DVector<C64>, DVector<C64>) {
    let (w, _) = rank_one_extract(&it.w);
    let mut ut = rank_one_vector(&it.u_t);
    let mut ur = rank_one_vector(&it.u_r);
    for k in 0..ut.len() {
        let s = ut[k].norm_sqr() + ur[k].norm_sqr();
        if s > 1.0 {
            let f = C64::from(1.0 / s.sqrt());
            ut[k] *= f;
            ur[k] *= f;
        }
    }
    (w, ut, ur)
}

fn rank_one(v: &DVector<C64>) -> DMatrix<C64> {
    v * v.adjoint()
}

/// Alternation of beamforming and power updates for one decoding order.
pub fn ahb_order(
    scenario: &Scenario,
    caps: [f64; 2],
    order: DecodingOrder,
    tol: &Tolerances,
    seed: u64,
) -> Result<FullCsiOutcome> {
    let link = Link::Noma(order);
    let noise = scenario.noise;
    let mut it = BeamformingIterate::initial(&scenario.cascades, &scenario.layout, tol.penalty_init, seed)?;
    let (z0, _) = scenario.gains(&it.w, &it.u_t, &it.u_r);
    let mut powers = sic_repaired_caps(caps, z0, order);
    warm_start(&mut it, &scenario.scaled(powers), link);
    let res = two_layer_solve(scenario, powers, link, tol, &it, false)?;
    let mut solves = res.solves;
    let mut degraded = res.degraded;
    let mut it = res.iterate;
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..tol.max_alt {
        let (z, ze) = scenario.gains(&it.w, &it.u_t, &it.u_r);
        let (pi, po) = optimal_power_full(z[0], z[1], ze[0], ze[1], noise, caps[0], caps[1], order)?;
        powers = [pi, po];
        let r = min_secrecy_from_gains(z, ze, powers, order, noise);
        let settled = trace.last().is_some_and(|p: &f64| (r - p).abs() <= tol.alt_tol);
        trace.push(r);
        if settled {
            converged = true;
            break;
        }
        warm_start(&mut it, &scenario.scaled(powers), link);
        let res = two_layer_solve(scenario, powers, link, tol, &it, true)?;
        solves += res.solves;
        degraded = res.degraded;
        it = res.iterate;
    }
    let (w, ut, ur) = extract_design(&it);
    let (w1, ut1, ur1) = (rank_one(&w), rank_one(&ut), rank_one(&ur));
    let (z, ze) = scenario.gains(&w1, &ut1, &ur1);
    let (pi, po) = match optimal_power_full(z[0], z[1], ze[0], ze[1], noise, caps[0], caps[1], order) {
        Ok(p) => p,
        Err(_) => (powers[0], powers[1]),
    };
    let objective = min_secrecy_from_gains(z, ze, [pi, po], order, noise);
    let report = report_from_gains(z, ze, [pi, po], order, noise);
    let coefficients = StarCoefficients::from_vectors(&ut, &ur);
    Ok(FullCsiOutcome {
        iterate: it,
        w,
        u_t: ut,
        u_r: ur,
        coefficients,
        p_iu: pi,
        p_ou: po,
        order,
        trace,
        objective,
        report,
        degraded,
        converged,
        solves,
    })
}

pub(crate) fn report_from_gains(
    z: [f64; 2],
    ze: [f64; 2],
    powers: [f64; 2],
    order: DecodingOrder,
    noise: f64,
) -> SecrecyReport {
    let t = [powers[0] * z[0] / noise, powers[1] * z[1] / noise];
    let e = [powers[0] * ze[0] / noise, powers[1] * ze[1] / noise];
    let (s, w) = (order.first().index(), order.second().index());
    let mut sinr = [0.0; 2];
    sinr[s] = t[s] / (t[w] + 1.0);
    sinr[w] = t[w];
    SecrecyReport::from_snrs(order, (sinr[0], sinr[1]), (e[0], e[1]), (powers[0], powers[1]))
}

/// Runs [`ahb_order`] for every order in `orders` and keeps the larger minimum secrecy capacity.
pub fn ahb_best(
    scenario: &Scenario,
    caps: [f64; 2],
    orders: &[DecodingOrder],
    tol: &Tolerances,
    seed: u64,
) -> Result<FullCsiOutcome> {
    let mut best: Option<FullCsiOutcome> = None;
    let mut first_err = None;
    for &order in orders {
        match ahb_order(scenario, caps, order, tol, seed) {
            Ok(o) => {
                if best.as_ref().is_none_or(|b| o.objective > b.objective) {
                    best = Some(o);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or_else(|| Error::Construction("no decoding order given".into())))
}

/// Full-CSI design on a STAR surface, trying both decoding orders.
pub fn ahb_solve(channels: &ChannelSet, radio: &RadioConfig, tol: &Tolerances, seed: u64) -> Result<FullCsiOutcome> {
    ahb_solve_with(channels, SurfaceLayout::star(channels.num_elements()), radio, tol, seed)
}

/// Same as [`ahb_solve`] with an explicit element layout.
pub fn ahb_solve_with(
    channels: &ChannelSet,
    layout: SurfaceLayout,
    radio: &RadioConfig,
    tol: &Tolerances,
    seed: u64,
) -> Result<FullCsiOutcome> {
    radio.validate()?;
    tol.validate()?;
    let scenario = Scenario::new(channels.cascades(), layout, radio.noise_power)?;
    ahb_best(&scenario, [radio.p_max_iu, radio.p_max_ou], &DecodingOrder::BOTH, tol, seed)
}
