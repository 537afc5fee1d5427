//! Comparison schemes: OMA slots, conventional surfaces, random coefficients,
//! and finite-resolution quantization of the surface coefficients.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::conic::psd::hermitian_eigen;
use crate::error::{domain, Error, Result};
use crate::fullcsi::{
    ahb_solve_with, extract_design, min_secrecy_from_gains, optimal_power_full, sic_repaired_caps, two_layer_solve,
    warm_start, Link,
};
use crate::model::{
    eavesdropper_snr, effective_gains, secrecy_capacity, wrap_phase, DecodingOrder, RadioConfig, RateConfig,
    SecrecyReport, StarCoefficients, Tolerances, User, C64,
};
use crate::rng::{streams, substream};
use crate::sca::{BeamformingIterate, Scenario, SurfaceLayout};
use crate::statcsi::{extended_ahb_link, extended_ahb_with, minimal_powers, snr_targets, sop_from_leakage, StatScenario};

/// Random phases and a random energy split `beta_t = s`, `beta_r = 1 - s` with `s ~ U[0, 1]`.
pub fn random_coefficients(n: usize, seed: u64) -> StarCoefficients {
    let mut rng = substream(seed, streams::RANDOM_COEFFS);
    let mut c = StarCoefficients { beta_t: vec![], beta_r: vec![], theta_t: vec![], theta_r: vec![] };
    for _ in 0..n {
        let s: f64 = rng.random_range(0.0..=1.0);
        c.beta_t.push(s);
        c.beta_r.push(1.0 - s);
        c.theta_t.push(rng.random_range(0.0..TAU));
        c.theta_r.push(rng.random_range(0.0..TAU));
    }
    c
}

fn snap_phase(theta: f64, levels: f64) -> f64 {
    let step = TAU / levels;
    wrap_phase((wrap_phase(theta) / step).round() * step)
}

/// Snaps phases to `{0, 2 pi / 2^q, ...}` and amplitudes-squared to `{0, 1/(2^q - 1), ..., 1}`.
///
/// When both amplitudes of an element round up past the energy budget, the
/// larger one is lowered by one grid step.
pub fn quantize_coefficients(c: &StarCoefficients, q: u32) -> Result<StarCoefficients> {
    if q == 0 || q > 30 {
        return domain(format!("quantization needs 1 to 30 bits, got {q}"));
    }
    c.validate()?;
    let levels = (1u64 << q) as f64;
    let step = 1.0 / (levels - 1.0);
    let snap_amp = |b: f64| ((b / step).round() * step).clamp(0.0, 1.0);
    let mut out = StarCoefficients {
        beta_t: c.beta_t.iter().map(|&b| snap_amp(b)).collect(),
        beta_r: c.beta_r.iter().map(|&b| snap_amp(b)).collect(),
        theta_t: c.theta_t.iter().map(|&t| snap_phase(t, levels)).collect(),
        theta_r: c.theta_r.iter().map(|&t| snap_phase(t, levels)).collect(),
    };
    for k in 0..out.len() {
        if out.beta_t[k] + out.beta_r[k] > 1.0 + 1e-12 {
            let b = if out.beta_t[k] >= out.beta_r[k] { &mut out.beta_t[k] } else { &mut out.beta_r[k] };
            *b = (*b - step).max(0.0);
        }
    }
    Ok(out)
}

/// Smallest circular distance between two phases.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Largest phase error of a `q`-bit grid.
pub fn phase_resolution(q: u32) -> f64 {
    PI / (1u64 << q) as f64
}

/// Transmission schemes compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    StarNoma,
    StarOma,
    CRisNoma,
    CRisOma,
    RandomPhase,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] =
        [SchemeKind::StarNoma, SchemeKind::StarOma, SchemeKind::CRisNoma, SchemeKind::CRisOma, SchemeKind::RandomPhase];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::StarNoma => "star-noma",
            SchemeKind::StarOma => "star-oma",
            SchemeKind::CRisNoma => "cris-noma",
            SchemeKind::CRisOma => "cris-oma",
            SchemeKind::RandomPhase => "random-phase",
        }
    }

    fn layout(self, n: usize) -> SurfaceLayout {
        match self {
            SchemeKind::CRisNoma | SchemeKind::CRisOma => SurfaceLayout::conventional(n),
            _ => SurfaceLayout::star(n),
        }
    }

    fn is_oma(self) -> bool {
        matches!(self, SchemeKind::StarOma | SchemeKind::CRisOma)
    }
}

/// A scheme, optionally with its optimized coefficients quantized to `bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Scheme {
    pub kind: SchemeKind,
    pub bits: Option<u32>,
}

impl Scheme {
    pub fn new(kind: SchemeKind) -> Self {
        Self { kind, bits: None }
    }

    pub fn quantized(kind: SchemeKind, bits: u32) -> Self {
        Self { kind, bits: Some(bits) }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.bits {
            Some(q) => write!(f, "{}-q{q}", self.kind.name()),
            None => f.write_str(self.kind.name()),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, bits) = match s.rsplit_once("-q") {
            Some((b, q)) if !q.is_empty() && q.bytes().all(|c| c.is_ascii_digit()) => {
                let q: u32 = q.parse().map_err(|_| Error::Config(format!("bad bit count in scheme {s:?}")))?;
                (b, Some(q))
            }
            _ => (s, None),
        };
        let kind = SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == base)
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))?;
        if bits == Some(0) {
            return Err(Error::Config(format!("scheme {s:?} needs at least one bit")));
        }
        if bits.is_some() && kind == SchemeKind::RandomPhase {
            return Err(Error::Config("random coefficients are not quantized".into()));
        }
        Ok(Self { kind, bits })
    }
}

impl Serialize for Scheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Scheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Figure of merit of a scheme evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Minimum secrecy capacity with full eavesdropper CSI, bits/s/Hz.
    MinSecrecy,
    /// Maximum secrecy outage probability with statistical eavesdropper CSI.
    MaxSop,
    /// Minimum achievable rate when the eavesdropper is ignored, bits/s/Hz.
    Rate,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::MinSecrecy => "min-secrecy",
            Metric::MaxSop => "max-sop",
            Metric::Rate => "rate",
        }
    }
}

/// Value of one scheme on one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeResult {
    pub value: f64,
    /// NOMA link summary at the final design, when the scheme has one.
    pub report: Option<SecrecyReport>,
}

/// Receive vector and powers chosen for fixed surface coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedSurfaceDesign {
    pub w: DVector<C64>,
    pub p_iu: f64,
    pub p_ou: f64,
    pub order: DecodingOrder,
    pub report: SecrecyReport,
}

fn unit(v: DVector<C64>) -> DVector<C64> {
    let n = v.norm();
    if n > 0.0 {
        v / C64::from(n)
    } else {
        let mut e = DVector::zeros(v.len());
        e[0] = C64::from(1.0);
        e
    }
}

/// Per-user effective channels `q_rho u_rho` at the BS.
fn effective_channels(channels: &ChannelSet, coeffs: &StarCoefficients) -> [DVector<C64>; 2] {
    let c = channels.cascades();
    [&c.q_iu * coeffs.u_t(), &c.q_ou * coeffs.u_r()]
}

/// Full-CSI design for fixed coefficients under one decoding order.
///
/// Alternates the receive vector that maximizes the first-decoded user's SINR
/// (the generalized eigenvector of its signal and interference-plus-noise
/// covariances) with the closed-form power policy, keeping the best point.
pub fn fixed_surface_full(
    channels: &ChannelSet,
    coeffs: &StarCoefficients,
    radio: &RadioConfig,
    order: DecodingOrder,
    tol: &Tolerances,
) -> Result<FixedSurfaceDesign> {
    coeffs.validate()?;
    let noise = radio.noise_power;
    let caps = [radio.p_max_iu, radio.p_max_ou];
    let g = effective_channels(channels, coeffs);
    let (ei, eo) = eavesdropper_snr(channels, coeffs, noise, noise, noise)?;
    let ze = [ei, eo];
    let (s, wk) = (order.first().index(), order.second().index());
    let m = channels.num_antennas();
    let gains = |w: &DVector<C64>| [w.dotc(&g[0]).norm_sqr(), w.dotc(&g[1]).norm_sqr()];

    let mut w = unit(&g[0] + &g[1]);
    let mut powers = sic_repaired_caps(caps, gains(&w), order);
    let mut best: Option<(f64, DVector<C64>, [f64; 2])> = None;
    let mut prev: Option<f64> = None;
    for step in 0..=tol.max_alt {
        if step > 0 {
            let cov = &g[wk] * g[wk].adjoint() * C64::from(powers[wk]) + DMatrix::identity(m, m) * C64::from(noise);
            let dir = cov.lu().solve(&g[s]).ok_or_else(|| Error::Degenerate("singular receive covariance".into()))?;
            w = unit(dir);
        }
        let z = gains(&w);
        let p = match optimal_power_full(z[0], z[1], ze[0], ze[1], noise, caps[0], caps[1], order) {
            Ok((pi, po)) => [pi, po],
            Err(_) => sic_repaired_caps(caps, z, order),
        };
        let r = min_secrecy_from_gains(z, ze, p, order, noise);
        if best.as_ref().is_none_or(|b| r > b.0) {
            best = Some((r, w.clone(), p));
        }
        if prev.is_some_and(|q| (r - q).abs() <= tol.alt_tol) {
            break;
        }
        prev = Some(r);
        powers = p;
    }
    let (_, w, p) = best.expect("at least one candidate");
    let report = SecrecyReport::evaluate(channels, coeffs, &w, p[0], p[1], order, noise)?;
    Ok(FixedSurfaceDesign { w, p_iu: p[0], p_ou: p[1], order, report })
}

/// [`fixed_surface_full`] under both decoding orders, keeping the larger minimum secrecy capacity.
pub fn fixed_surface_full_best(
    channels: &ChannelSet,
    coeffs: &StarCoefficients,
    radio: &RadioConfig,
    tol: &Tolerances,
) -> Result<FixedSurfaceDesign> {
    let a = fixed_surface_full(channels, coeffs, radio, DecodingOrder::IuFirst, tol)?;
    let b = fixed_surface_full(channels, coeffs, radio, DecodingOrder::OuFirst, tol)?;
    Ok(if b.report.min_secrecy > a.report.min_secrecy { b } else { a })
}

/// Unit `w` maximizing `min(|w^H x|^2, |w^H y|^2)`, through the smallest largest
/// eigenvalue of `l x x^H + (1 - l) y y^H` over `l` in `[0, 1]`.
fn max_min_direction(x: &DVector<C64>, y: &DVector<C64>) -> DVector<C64> {
    let top = |l: f64| {
        let m = x * x.adjoint() * C64::from(l) + y * y.adjoint() * C64::from(1.0 - l);
        let (vals, vecs) = hermitian_eigen(&m);
        (vals[0], vecs.column(0).into_owned())
    };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 1.0);
    for _ in 0..80 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if top(c).0 <= top(d).0 {
            b = d;
        } else {
            a = c;
        }
    }
    let mut best = top(0.5 * (a + b)).1;
    let score = |w: &DVector<C64>| w.dotc(x).norm_sqr().min(w.dotc(y).norm_sqr());
    for l in [0.0, 1.0] {
        let v = top(l).1;
        if score(&v) > score(&best) {
            best = v;
        }
    }
    best
}

/// Statistical-CSI design for fixed coefficients: the receive vector that
/// minimizes the larger leakage at the minimal powers, for both orders.
pub fn fixed_surface_stat(
    channels: &ChannelSet,
    coeffs: &StarCoefficients,
    radio: &RadioConfig,
    rates: &RateConfig,
) -> Result<(f64, FixedSurfaceDesign)> {
    coeffs.validate()?;
    let noise = radio.noise_power;
    let caps = [radio.p_max_iu, radio.p_max_ou];
    let scen = StatScenario::new(channels, SurfaceLayout::star(channels.num_elements()), noise)?;
    let g = effective_channels(channels, coeffs);
    let umat = [coeffs.u_t(), coeffs.u_r()].map(|u| &u * u.adjoint());
    let mut best: Option<(f64, FixedSurfaceDesign)> = None;
    let mut first_err = None;
    for order in DecodingOrder::BOTH {
        let link = Link::Noma(order);
        let t = snr_targets(rates, link);
        let (s, wk) = (order.first().index(), order.second().index());
        // leakage per unit received gain at the minimal powers
        let strong_factor = ((t[wk] + 1.0) * t[s]).max(t[wk]) / t[s];
        let leak = [User::Iu, User::Ou].map(|u| scen.leakage(u, &umat[u.index()], noise, t[u.index()]));
        let weight = |k: usize, f: f64| if leak[k] > 0.0 { (1.0 / (leak[k] * f)).sqrt() } else { 0.0 };
        let x = &g[wk] * C64::from(weight(wk, 1.0));
        let y = &g[s] * C64::from(weight(s, strong_factor));
        let w = unit(max_min_direction(&x, &y));
        let z = [w.dotc(&g[0]).norm_sqr(), w.dotc(&g[1]).norm_sqr()];
        match minimal_powers(z, noise, t, caps, link) {
            Ok(p) => {
                let sop = User::BOTH.map(|u| sop_from_leakage(scen.leakage(u, &umat[u.index()], p[u.index()], t[u.index()])));
                let max_sop = sop[0].max(sop[1]);
                let mut report = SecrecyReport::evaluate(channels, coeffs, &w, p[0], p[1], order, noise)?;
                report.sop_iu = Some(sop[0]);
                report.sop_ou = Some(sop[1]);
                if best.as_ref().is_none_or(|b| max_sop < b.0) {
                    best = Some((max_sop, FixedSurfaceDesign { w, p_iu: p[0], p_ou: p[1], order, report }));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("both orders tried"))
}

/// Design of one TDMA slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDesign {
    /// Slot secrecy capacity with the half pre-log, bits/s/Hz.
    pub secrecy: f64,
    pub w: DVector<C64>,
    pub coefficients: StarCoefficients,
    pub power: f64,
}

/// One TDMA slot with full CSI: the user transmits at its cap with the surface
/// serving it alone.
pub fn oma_slot_full(
    channels: &ChannelSet,
    layout: &SurfaceLayout,
    radio: &RadioConfig,
    user: User,
    tol: &Tolerances,
    seed: u64,
) -> Result<SlotDesign> {
    let noise = radio.noise_power;
    let scenario = Scenario::new(channels.cascades(), layout.clone().only(user), noise)?;
    let link = Link::Single(user);
    let mut powers = [0.0; 2];
    powers[user.index()] = radio.p_max(user);
    let mut it = BeamformingIterate::initial(&scenario.cascades, &scenario.layout, tol.penalty_init, seed)?;
    warm_start(&mut it, &scenario.scaled(powers), link);
    let res = two_layer_solve(&scenario, powers, link, tol, &it, false)?;
    let (w, ut, ur) = extract_design(&res.iterate);
    let (z, ze) = scenario.gains(&(&w * w.adjoint()), &(&ut * ut.adjoint()), &(&ur * ur.adjoint()));
    let k = user.index();
    let p = powers[k];
    Ok(SlotDesign {
        secrecy: 0.5 * secrecy_capacity(p * z[k] / noise, p * ze[k] / noise),
        w,
        coefficients: StarCoefficients::from_vectors(&ut, &ur),
        power: p,
    })
}

/// One TDMA slot with statistical CSI: outage probability of the slot's user.
pub fn oma_slot_stat(
    channels: &ChannelSet,
    layout: &SurfaceLayout,
    radio: &RadioConfig,
    rates: &RateConfig,
    user: User,
    tol: &Tolerances,
    seed: u64,
) -> Result<f64> {
    let scen = StatScenario::new(channels, layout.clone().only(user), radio.noise_power)?;
    let out = extended_ahb_link(&scen, [radio.p_max_iu, radio.p_max_ou], Link::Single(user), rates, tol, seed)?;
    Ok(out.sop[user.index()])
}

/// Evaluates `scheme` on one channel realization.
///
/// NOMA schemes run the full pipelines on their layout; OMA schemes run one
/// single-user slot per user; the random scheme draws coefficients from `seed`
/// and only chooses the receive vector and powers. With `bits` set, the
/// optimized coefficients are quantized and the receive vector and powers are
/// chosen again for the quantized surface.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_scheme(
    scheme: Scheme,
    metric: Metric,
    channels: &ChannelSet,
    radio: &RadioConfig,
    rates: &RateConfig,
    tol: &Tolerances,
    seed: u64,
) -> Result<SchemeResult> {
    radio.validate()?;
    tol.validate()?;
    if metric == Metric::Rate {
        let quiet = channels.without_eavesdropper();
        return evaluate_scheme(scheme, Metric::MinSecrecy, &quiet, radio, rates, tol, seed);
    }
    let n = channels.num_elements();
    let kind = scheme.kind;
    let layout = kind.layout(n);
    if scheme.bits.is_some() && (kind == SchemeKind::RandomPhase || kind.is_oma()) {
        return Err(Error::Config(format!("scheme {scheme} cannot be quantized")));
    }
    match (metric, kind) {
        (Metric::MinSecrecy, SchemeKind::RandomPhase) => {
            let d = fixed_surface_full_best(channels, &random_coefficients(n, seed), radio, tol)?;
            Ok(SchemeResult { value: d.report.min_secrecy, report: Some(d.report) })
        }
        (Metric::MaxSop, SchemeKind::RandomPhase) => {
            let (v, d) = fixed_surface_stat(channels, &random_coefficients(n, seed), radio, rates)?;
            Ok(SchemeResult { value: v, report: Some(d.report) })
        }
        (Metric::MinSecrecy, k) if k.is_oma() => {
            let a = oma_slot_full(channels, &layout, radio, User::Iu, tol, seed)?.secrecy;
            let b = oma_slot_full(channels, &layout, radio, User::Ou, tol, seed)?.secrecy;
            Ok(SchemeResult { value: a.min(b), report: None })
        }
        (Metric::MaxSop, k) if k.is_oma() => {
            let a = oma_slot_stat(channels, &layout, radio, rates, User::Iu, tol, seed)?;
            let b = oma_slot_stat(channels, &layout, radio, rates, User::Ou, tol, seed)?;
            Ok(SchemeResult { value: a.max(b), report: None })
        }
        (Metric::MinSecrecy, _) => {
            let out = ahb_solve_with(channels, layout, radio, tol, seed)?;
            match scheme.bits {
                None => Ok(SchemeResult { value: out.objective, report: Some(out.report) }),
                Some(q) => {
                    let d = fixed_surface_full_best(channels, &quantize_coefficients(&out.coefficients, q)?, radio, tol)?;
                    Ok(SchemeResult { value: d.report.min_secrecy, report: Some(d.report) })
                }
            }
        }
        (Metric::MaxSop, _) => {
            let out = extended_ahb_with(channels, layout, radio, rates, tol, seed)?;
            match scheme.bits {
                None => Ok(SchemeResult { value: out.max_sop, report: out.report }),
                Some(q) => {
                    let (v, d) = fixed_surface_stat(channels, &quantize_coefficients(&out.coefficients, q)?, radio, rates)?;
                    Ok(SchemeResult { value: v, report: Some(d.report) })
                }
            }
        }
        (Metric::Rate, _) => unreachable!("handled above"),
    }
}

/// Minimum user rate of the full-CSI design when the eavesdropper is ignored.
pub fn transmission_rate_no_eve(channels: &ChannelSet, radio: &RadioConfig, tol: &Tolerances, seed: u64) -> Result<f64> {
    let quiet = channels.without_eavesdropper();
    let out = ahb_solve_with(&quiet, SurfaceLayout::star(channels.num_elements()), radio, tol, seed)?;
    Ok(out.report.min_secrecy)
}

/// Rates of the quantization study on one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedRates {
    /// Continuous coefficients, re-evaluated like the quantized ones.
    pub continuous: f64,
    /// `(bits, rate)` per requested resolution.
    pub quantized: Vec<(u32, f64)>,
}

/// Designs the surface once without the eavesdropper, then re-evaluates the
/// continuous and every quantized version with the fixed-surface design.
pub fn quantized_rates(
    channels: &ChannelSet,
    radio: &RadioConfig,
    tol: &Tolerances,
    bits: &[u32],
    seed: u64,
) -> Result<QuantizedRates> {
    let quiet = channels.without_eavesdropper();
    let out = ahb_solve_with(&quiet, SurfaceLayout::star(channels.num_elements()), radio, tol, seed)?;
    let rate = |c: &StarCoefficients| -> Result<f64> { Ok(fixed_surface_full_best(&quiet, c, radio, tol)?.report.min_secrecy) };
    let continuous = rate(&out.coefficients)?;
    let quantized = bits
        .iter()
        .map(|&q| Ok((q, rate(&quantize_coefficients(&out.coefficients, q)?)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantizedRates { continuous, quantized })
}

/// Exact link gains of a fixed design, exposed for checks against closed forms.
pub fn design_gains(channels: &ChannelSet, coeffs: &StarCoefficients, w: &DVector<C64>) -> Result<(f64, f64)> {
    effective_gains(channels, coeffs, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_snapping_is_circular() {
        let c = StarCoefficients { beta_t: vec![0.5, 0.5], beta_r: vec![0.5, 0.5], theta_t: vec![2.0, 5.5], theta_r: vec![0.0, 0.0] };
        let q = quantize_coefficients(&c, 1).unwrap();
        assert!((q.theta_t[0] - PI).abs() < 1e-15);
        assert_eq!(q.theta_t[1], 0.0);
    }

    #[test]
    fn scheme_names_round_trip() {
        for k in SchemeKind::ALL {
            let s = Scheme::new(k);
            assert_eq!(s.to_string().parse::<Scheme>().unwrap(), s);
        }
        assert_eq!("star-noma-q3".parse::<Scheme>().unwrap(), Scheme::quantized(SchemeKind::StarNoma, 3));
        assert!("star-noma-q0".parse::<Scheme>().is_err());
        assert!("nope".parse::<Scheme>().is_err());
    }
}
