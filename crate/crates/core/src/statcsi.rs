//! Maximum secrecy-outage minimization with statistical eavesdropper CSI.
//!
//! Only the Rayleigh statistics of the eavesdropper link are known, so each
//! user's outage probability depends on the surface amplitudes and the transmit
//! power alone. The beamforming step minimizes the larger normalized leakage
//! under the codeword-rate targets; the power step returns the smallest powers
//! meeting those targets.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::ChannelSet;
use crate::conic::{solve, ConeProgram, LinExpr, ProgramBuilder, SolveStatus};
use crate::error::{domain, Error, Result};
use crate::fullcsi::{extract_design, sca_solver_options, report_from_gains, sic_repaired_caps, warm_start, Link};
use crate::model::{DecodingOrder, RadioConfig, RateConfig, SecrecyReport, StarCoefficients, Tolerances, User, C64};
use crate::rng::{streams, substream};
use crate::sca::{BeamformingIterate, Lifted, Scenario, SurfaceLayout};

/// Inputs of the closed-form outage probability of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SopParams {
    /// `sum_n beta_n |h~_n|^2` over the small-scale user channel.
    pub effective_gain: f64,
    /// Product of the eavesdropper and user large-scale power gains.
    pub large_scale_product: f64,
    /// Redundancy `R_c - R_s` in bits/s/Hz.
    pub rate_gap: f64,
    pub power: f64,
    pub noise: f64,
}

impl SopParams {
    pub fn new(
        beta: &[f64],
        h_small: &DVector<C64>,
        large_scale_product: f64,
        rate_gap: f64,
        power: f64,
        noise: f64,
    ) -> Result<Self> {
        if beta.len() != h_small.len() {
            return Err(Error::Dimension("amplitudes and channel differ in length".into()));
        }
        let effective_gain = beta.iter().zip(h_small.iter()).map(|(b, h)| b * h.norm_sqr()).sum();
        let p = Self { effective_gain, large_scale_product, rate_gap, power, noise };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let v = [self.effective_gain, self.large_scale_product, self.rate_gap, self.power, self.noise];
        if v.iter().any(|x| !(*x >= 0.0)) {
            return domain(format!("outage parameters must be nonnegative, got {self:?}"));
        }
        Ok(())
    }

    /// Eavesdropper SNR threshold `(2^gap - 1)` of the outage event.
    pub fn snr_threshold(&self) -> f64 {
        self.rate_gap.exp2() - 1.0
    }

    /// Mean eavesdropper SNR divided by the threshold; the outage probability is `exp(-1 / leakage)`.
    pub fn leakage(&self) -> f64 {
        let mean = self.power * self.large_scale_product * self.effective_gain / self.noise;
        let g = self.snr_threshold();
        if g == 0.0 {
            f64::INFINITY
        } else {
            mean / g
        }
    }
}

/// Exact outage probability `exp(-(2^gap - 1) sigma^2 / (P L sum beta |h~|^2))`.
pub fn sop_closed_form(p: &SopParams) -> Result<f64> {
    p.validate()?;
    if !(p.noise > 0.0) {
        return domain("noise power must be positive");
    }
    Ok(sop_from_leakage(p.leakage()))
}

pub(crate) fn sop_from_leakage(leakage: f64) -> f64 {
    if leakage.is_infinite() {
        1.0
    } else if leakage <= 0.0 {
        0.0
    } else {
        (-1.0 / leakage).exp()
    }
}

/// Monte-Carlo estimate and standard error of the outage probability of `user`.
///
/// Each trial draws a fresh small-scale eavesdropper channel and tests whether
/// its SNR exceeds the threshold of the wiretap code.
#[allow(clippy::too_many_arguments)]
pub fn sop_monte_carlo(
    coeffs: &StarCoefficients,
    user: User,
    channels: &ChannelSet,
    rate_gap: f64,
    power: f64,
    noise: f64,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if trials < 1000 {
        return domain(format!("need at least 1000 trials, got {trials}"));
    }
    if !(noise > 0.0 && power >= 0.0 && rate_gap >= 0.0) {
        return domain("noise must be positive, power and rate gap nonnegative");
    }
    let h = channels.h_user_small(user);
    let u = coeffs.u(user);
    if u.len() != h.len() {
        return Err(Error::Dimension("coefficients do not match the channel".into()));
    }
    let ls = channels.large_scale();
    let scale = power * ls.eve * ls.of(user) / noise;
    let threshold = rate_gap.exp2() - 1.0;
    let uh: Vec<C64> = u.iter().zip(h.iter()).map(|(a, b)| a * b).collect();
    let mut rng = substream(seed, streams::MONTE_CARLO);
    let mut hits = 0usize;
    for _ in 0..trials {
        let mut xi = C64::new(0.0, 0.0);
        for c in &uh {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            // conj of a CN(0, 1) draw
            xi += C64::new(re, -im) * std::f64::consts::FRAC_1_SQRT_2 * c;
        }
        if scale * xi.norm_sqr() > threshold {
            hits += 1;
        }
    }
    let p = hits as f64 / trials as f64;
    Ok((p, (p * (1.0 - p) / trials as f64).sqrt()))
}

/// Channel data of the statistical pipeline: the legitimate cascades plus the
/// per-element mean leakage `L_E L_rho |h~_rho,n|^2` of each user.
#[derive(Debug, Clone)]
pub struct StatScenario {
    pub base: Scenario,
    pub large_scale_product: [f64; 2],
    pub gain_small: [Vec<f64>; 2],
}

impl StatScenario {
    pub fn new(channels: &ChannelSet, layout: SurfaceLayout, noise: f64) -> Result<Self> {
        let base = Scenario::new(channels.cascades(), layout, noise)?;
        let ls = channels.large_scale();
        let large_scale_product = User::BOTH.map(|u| ls.eve * ls.of(u));
        let gain_small = User::BOTH.map(|u| channels.h_user_small(u).iter().map(|h| h.norm_sqr()).collect());
        Ok(Self { base, large_scale_product, gain_small })
    }

    fn leakage_weights(&self, user: User) -> Vec<f64> {
        self.gain_small[user.index()].iter().map(|g| g * self.large_scale_product[user.index()]).collect()
    }

    /// Normalized leakage of `user` for amplitudes `diag(U)` at `power`.
    pub fn leakage(&self, user: User, u: &DMatrix<C64>, power: f64, threshold: f64) -> f64 {
        let mean: f64 = self.leakage_weights(user).iter().enumerate().map(|(k, w)| w * u[(k, k)].re.max(0.0)).sum::<f64>()
            * power
            / self.base.noise;
        if threshold == 0.0 {
            f64::INFINITY
        } else {
            mean / threshold
        }
    }
}

/// SNR targets `2^gap - 1` of both users. A TDMA slot halves the pre-log, which doubles the gap.
pub fn snr_targets(rates: &RateConfig, link: Link) -> [f64; 2] {
    let factor = if matches!(link, Link::Single(_)) { 2.0 } else { 1.0 };
    User::BOTH.map(|u| (factor * rates.gap(u)).exp2() - 1.0)
}

fn served(link: Link) -> Vec<User> {
    match link {
        Link::Noma(_) => User::BOTH.to_vec(),
        Link::Single(u) => vec![u],
    }
}

/// Cone program of one SCA round of the outage pipeline.
#[derive(Debug, Clone)]
pub struct LeakageProgram {
    pub program: ConeProgram,
    pub objective_offset: f64,
    lifted: Lifted,
    epigraph: usize,
}

impl LeakageProgram {
    /// Cleaned iterate and the epigraph value of the larger leakage.
    pub fn decode(&self, x: &[f64], it: &BeamformingIterate) -> (BeamformingIterate, f64) {
        let mut out = self.lifted.decode(x, it);
        out.clean();
        (out, x[self.epigraph])
    }
}

/// Assembles the leakage-minimization program around the local point `it`.
///
/// Minimizes `v + tau (rho_t + rho_r)` with `v` above every served user's
/// normalized leakage, subject to the SNR targets through the surrogate
/// slacks, SIC ordering and the common surface constraints.
pub fn build_leakage_program(
    scenario: &StatScenario,
    it: &BeamformingIterate,
    powers: [f64; 2],
    link: Link,
    rates: &RateConfig,
    tau: f64,
) -> Result<LeakageProgram> {
    rates.validate()?;
    if !(tau > 0.0) {
        return Err(Error::Construction(format!("need tau > 0, got {tau}")));
    }
    let g = snr_targets(rates, link);
    for u in served(link) {
        if !(g[u.index()] > 0.0) {
            return Err(Error::Construction(format!(
                "{u:?} has zero rate redundancy: its outage probability is identically one"
            )));
        }
    }
    let base = &scenario.base;
    let scaled = base.scaled(powers);
    let mut b = ProgramBuilder::new();
    let lifted = Lifted::build(&mut b, it, &base.layout, &scaled, link.upper_slacks())?;
    let missing = |u: User| Error::Construction(format!("layout has no elements serving {u:?}"));
    let v = b.add_var();
    for u in served(link) {
        let s = lifted.side(u).ok_or_else(|| missing(u))?;
        let w = scenario.leakage_weights(u);
        let coef = powers[u.index()] / (base.noise * g[u.index()]);
        let mut leak = LinExpr::zero();
        for (pos, &k) in s.elements.iter().enumerate() {
            leak.add_scaled(&s.u.diag(pos), coef * w[k]);
        }
        b.nonneg(vec![LinExpr::var(v) - leak]);
    }
    match link {
        Link::Noma(order) => {
            let (su, wu) = (order.first(), order.second());
            let strong = lifted.side(su).ok_or_else(|| missing(su))?;
            let weak = lifted.side(wu).ok_or_else(|| missing(wu))?;
            let t_up_w = weak.t_up.expect("weak user carries an upper slack");
            b.nonneg(vec![
                LinExpr::var(strong.t_lo) - LinExpr::var(t_up_w),
                LinExpr::var(strong.t_lo) - (LinExpr::var(t_up_w) + 1.0) * g[su.index()],
                LinExpr::var(weak.t_lo) - g[wu.index()],
            ]);
        }
        Link::Single(u) => {
            let s = lifted.side(u).ok_or_else(|| missing(u))?;
            b.nonneg(vec![LinExpr::var(s.t_lo) - g[u.index()]]);
        }
    }
    let mut obj = LinExpr::var(v);
    for s in &lifted.sides {
        obj.push(s.rho, tau);
    }
    b.minimize(obj);
    let (program, objective_offset) = b.build()?;
    Ok(LeakageProgram { program, objective_offset, lifted, epigraph: v })
}

/// Largest normalized leakage over the served users at the matrices of `it`.
pub fn max_leakage(scenario: &StatScenario, it: &BeamformingIterate, powers: [f64; 2], link: Link, rates: &RateConfig) -> f64 {
    let g = snr_targets(rates, link);
    served(link)
        .into_iter()
        .map(|u| scenario.leakage(u, it.u(u), powers[u.index()], g[u.index()]))
        .fold(0.0, f64::max)
}

/// Smallest powers meeting the SNR targets under `order`.
///
/// The later-decoded user is served first; the other user then needs enough
/// power to clear both its target under interference and the SIC ordering.
/// Exceeding either cap means the targets are unreachable at these gains.
pub fn optimal_power_stat(
    z_i: f64,
    z_o: f64,
    noise: f64,
    rates: &RateConfig,
    caps: [f64; 2],
    order: DecodingOrder,
) -> Result<(f64, f64)> {
    let p = minimal_powers([z_i, z_o], noise, snr_targets(rates, Link::Noma(order)), caps, Link::Noma(order))?;
    Ok((p[0], p[1]))
}

pub(crate) fn minimal_powers(z: [f64; 2], noise: f64, g: [f64; 2], caps: [f64; 2], link: Link) -> Result<[f64; 2]> {
    if !(noise > 0.0) {
        return domain("noise power must be positive");
    }
    let mut p = [0.0; 2];
    for u in served(link) {
        if !(z[u.index()] > 0.0) {
            return Err(Error::Degenerate(format!("zero legitimate gain for {u:?}")));
        }
    }
    match link {
        Link::Noma(order) => {
            let (s, w) = (order.first().index(), order.second().index());
            p[w] = noise * g[w] / z[w];
            let rx_w = p[w] * z[w];
            p[s] = ((rx_w + noise) * g[s] / z[s]).max(rx_w / z[s]);
        }
        Link::Single(u) => p[u.index()] = noise * g[u.index()] / z[u.index()],
    }
    for u in User::BOTH {
        if p[u.index()] > caps[u.index()] {
            return Err(Error::Infeasible(format!(
                "{u:?} needs {:.4e} W to meet its rate target, cap is {:.4e} W",
                p[u.index()],
                caps[u.index()]
            )));
        }
    }
    Ok(p)
}

/// Result of the two-layer loop at fixed powers.
#[derive(Debug, Clone)]
pub struct StatTwoLayer {
    pub iterate: BeamformingIterate,
    pub degraded: bool,
    /// Larger normalized leakage after every solved program.
    pub leakage_trace: Vec<f64>,
    pub solves: usize,
}

/// SCA rounds until the leakage settles, with the rank penalty grown between rounds.
pub fn two_layer_stat(
    scenario: &StatScenario,
    powers: [f64; 2],
    link: Link,
    rates: &RateConfig,
    tol: &Tolerances,
    start: &BeamformingIterate,
) -> Result<StatTwoLayer> {
    let opts = sca_solver_options();
    let mut it = start.clone();
    let mut leakage_trace = Vec::new();
    let mut solves = 0;
    for _outer in 0..tol.max_outer {
        let mut prev: Option<f64> = None;
        for _inner in 0..tol.max_inner {
            let prob = build_leakage_program(scenario, &it, powers, link, rates, it.tau)?;
            let sol = solve(&prob.program, &opts);
            solves += 1;
            match sol.status {
                SolveStatus::Optimal => {}
                SolveStatus::PrimalInfeasible => {
                    return Err(Error::Infeasible("rate targets unreachable from the current point".into()))
                }
                status => return Err(Error::Solver { iteration: solves, status }),
            }
            let (next, _) = prob.decode(&sol.x, &it);
            let v = max_leakage(scenario, &next, powers, link, rates);
            leakage_trace.push(v);
            let done = prev.is_some_and(|p| (v - p).abs() <= tol.inner_tol * v.max(1.0));
            prev = Some(v);
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
    Ok(StatTwoLayer { iterate: it, degraded, leakage_trace, solves })
}

/// Statistical-CSI result for one link configuration.
#[derive(Debug, Clone)]
pub struct StatCsiOutcome {
    pub iterate: BeamformingIterate,
    pub w: DVector<C64>,
    pub u_t: DVector<C64>,
    pub u_r: DVector<C64>,
    pub coefficients: StarCoefficients,
    pub p_iu: f64,
    pub p_ou: f64,
    pub link: Link,
    /// Outage probability per user, zero for a user not served by the link.
    pub sop: [f64; 2],
    pub max_sop: f64,
    /// Larger outage probability of the relaxed matrices after every power update.
    pub trace: Vec<f64>,
    /// Link summary at the extracted point for the realized eavesdropper channel (NOMA only).
    pub report: Option<SecrecyReport>,
    pub degraded: bool,
    pub converged: bool,
    pub solves: usize,
}

fn rank_one(v: &DVector<C64>) -> DMatrix<C64> {
    v * v.adjoint()
}

/// Alternation of beamforming and minimal-power updates for one link configuration.
pub fn extended_ahb_link(
    scenario: &StatScenario,
    caps: [f64; 2],
    link: Link,
    rates: &RateConfig,
    tol: &Tolerances,
    seed: u64,
) -> Result<StatCsiOutcome> {
    let base = &scenario.base;
    let noise = base.noise;
    let g = snr_targets(rates, link);
    let mut it = BeamformingIterate::initial(&base.cascades, &base.layout, tol.penalty_init, seed)?;
    let mut powers = match link {
        Link::Noma(order) => sic_repaired_caps(caps, base.gains(&it.w, &it.u_t, &it.u_r).0, order),
        Link::Single(u) => {
            let mut p = [0.0; 2];
            p[u.index()] = caps[u.index()];
            p
        }
    };
    let mut trace = Vec::new();
    let mut solves = 0;
    let mut degraded = false;
    let mut converged = false;
    for _ in 0..tol.max_alt {
        warm_start(&mut it, &base.scaled(powers), link);
        let res = two_layer_stat(scenario, powers, link, rates, tol, &it)?;
        solves += res.solves;
        degraded = res.degraded;
        it = res.iterate;
        let (z, _) = base.gains(&it.w, &it.u_t, &it.u_r);
        powers = minimal_powers(z, noise, g, caps, link)?;
        let sop = sop_from_leakage(max_leakage(scenario, &it, powers, link, rates));
        let settled = trace.last().is_some_and(|p: &f64| (sop - p).abs() <= tol.alt_tol);
        trace.push(sop);
        if settled {
            converged = true;
            break;
        }
    }
    let (w, mut ut, mut ur) = extract_design(&it);
    // Without a direct link the leakage at minimal powers ignores a common
    // amplitude scale, so use the full element budget and lower the powers.
    let peak = (0..ut.len()).map(|k| ut[k].norm_sqr() + ur[k].norm_sqr()).fold(0.0, f64::max);
    if peak > 0.0 && peak < 1.0 {
        let s = C64::from(peak.sqrt().recip());
        ut *= s;
        ur *= s;
    }
    let (w1, ut1, ur1) = (rank_one(&w), rank_one(&ut), rank_one(&ur));
    let (z, ze) = base.gains(&w1, &ut1, &ur1);
    let p = minimal_powers(z, noise, g, caps, link)?;
    let coefficients = StarCoefficients::from_vectors(&ut, &ur);
    let mut sop = [0.0; 2];
    for u in served(link) {
        let u_mat = if u == User::Iu { &ut1 } else { &ur1 };
        sop[u.index()] = sop_from_leakage(scenario.leakage(u, u_mat, p[u.index()], g[u.index()]));
    }
    let max_sop = sop[0].max(sop[1]);
    let report = match link {
        Link::Noma(order) => {
            let mut r = report_from_gains(z, ze, p, order, noise);
            r.sop_iu = Some(sop[0]);
            r.sop_ou = Some(sop[1]);
            Some(r)
        }
        Link::Single(_) => None,
    };
    Ok(StatCsiOutcome {
        iterate: it,
        w,
        u_t: ut,
        u_r: ur,
        coefficients,
        p_iu: p[0],
        p_ou: p[1],
        link,
        sop,
        max_sop,
        trace,
        report,
        degraded,
        converged,
        solves,
    })
}

/// Runs [`extended_ahb_link`] for every link in `links` and keeps the smaller maximum outage.
pub fn extended_ahb_best(
    scenario: &StatScenario,
    caps: [f64; 2],
    links: &[Link],
    rates: &RateConfig,
    tol: &Tolerances,
    seed: u64,
) -> Result<StatCsiOutcome> {
    let mut best: Option<StatCsiOutcome> = None;
    let mut first_err = None;
    for &link in links {
        match extended_ahb_link(scenario, caps, link, rates, tol, seed) {
            Ok(o) => {
                if best.as_ref().is_none_or(|b| o.max_sop < b.max_sop) {
                    best = Some(o);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or_else(|| Error::Construction("no link configuration given".into())))
}

/// Statistical-CSI design on a STAR surface, trying both decoding orders.
pub fn extended_ahb(
    channels: &ChannelSet,
    radio: &RadioConfig,
    rates: &RateConfig,
    tol: &Tolerances,
    seed: u64,
) -> Result<StatCsiOutcome> {
    extended_ahb_with(channels, SurfaceLayout::star(channels.num_elements()), radio, rates, tol, seed)
}

/// Same as [`extended_ahb`] with an explicit element layout.
pub fn extended_ahb_with(
    channels: &ChannelSet,
    layout: SurfaceLayout,
    radio: &RadioConfig,
    rates: &RateConfig,
    tol: &Tolerances,
    seed: u64,
) -> Result<StatCsiOutcome> {
    radio.validate()?;
    rates.validate()?;
    tol.validate()?;
    let scenario = StatScenario::new(channels, layout, radio.noise_power)?;
    let links = DecodingOrder::BOTH.map(Link::Noma);
    extended_ahb_best(&scenario, [radio.p_max_iu, radio.p_max_ou], &links, rates, tol, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(gain: f64, gap: f64, power: f64) -> SopParams {
        SopParams { effective_gain: gain, large_scale_product: 1.0, rate_gap: gap, power, noise: 1.0 }
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(sop_closed_form(&params(1.0, 0.0, 1.0)).unwrap(), 1.0);
        assert!((sop_closed_form(&params(1.0, 1.0, 1.0)).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(sop_closed_form(&params(1.0, 1.0, 0.0)).unwrap(), 0.0);
        assert_eq!(sop_closed_form(&params(0.0, 0.0, 0.0)).unwrap(), 1.0);
        assert!(sop_closed_form(&params(-1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn minimal_power_example() {
        let rates = RateConfig { r_c_iu: 1.0, r_s_iu: 0.0, r_c_ou: 1.0, r_s_ou: 0.0 };
        let (pi, po) = optimal_power_stat(1.0, 1.0, 1.0, &rates, [10.0; 2], DecodingOrder::IuFirst).unwrap();
        assert!((po - 1.0).abs() < 1e-15 && (pi - 2.0).abs() < 1e-15);
        assert!(matches!(
            optimal_power_stat(1.0, 1.0, 1.0, &rates, [1.5, 10.0], DecodingOrder::IuFirst),
            Err(Error::Infeasible(_))
        ));
        let rates = RateConfig { r_c_ou: 0.5, r_s_ou: 0.5, ..rates };
        let (_, po) = optimal_power_stat(1.0, 1.0, 1.0, &rates, [10.0; 2], DecodingOrder::IuFirst).unwrap();
        assert_eq!(po, 0.0);
    }
}
