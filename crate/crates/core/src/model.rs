//! Domain types, geometry, configuration and closed-form link metrics.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::channel::ChannelSet;
use crate::error::{domain, Error, Result};

pub type C64 = Complex64;

/// Magnitudes above this negative value are treated as round-off and clamped to zero.
const NEG_CLAMP: f64 = -1e-12;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Large-scale power gain `L0 * d^-alpha` with `L0` given in dB.
pub fn path_loss(distance: f64, exponent: f64, reference_loss_db: f64) -> Result<f64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return domain(format!("path loss needs a positive distance, got {distance}"));
    }
    if !(exponent > 0.0) {
        return domain(format!("path loss exponent must be positive, got {exponent}"));
    }
    Ok(db_to_linear(reference_loss_db) * distance.powf(-exponent))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathlossExponents {
    pub bs: f64,
    pub iu: f64,
    pub ou: f64,
    pub eve: f64,
}

/// Node positions in meters and the path-loss law of every RIS link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemGeometry {
    pub bs_pos: [f64; 3],
    pub ris_pos: [f64; 3],
    pub eve_pos: [f64; 3],
    pub iu_pos: [f64; 3],
    pub ou_pos: [f64; 3],
    pub pathloss_exponents: PathlossExponents,
    pub reference_loss_db: f64,
}

impl Default for SystemGeometry {
    fn default() -> Self {
        Self {
            bs_pos: [0.0, 5.0, 0.0],
            ris_pos: [50.0, 10.0, 0.0],
            eve_pos: [0.0, 0.0, 0.0],
            iu_pos: [50.0, 15.0, 0.0],
            ou_pos: [50.0, -15.0, 0.0],
            pathloss_exponents: PathlossExponents { bs: 2.2, iu: 2.5, ou: 2.5, eve: 2.5 },
            reference_loss_db: -30.0,
        }
    }
}

impl SystemGeometry {
    pub fn validate(&self) -> Result<()> {
        let pts = [self.bs_pos, self.ris_pos, self.eve_pos, self.iu_pos, self.ou_pos];
        if pts.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("positions must be finite".into()));
        }
        let e = self.pathloss_exponents;
        if [e.bs, e.iu, e.ou, e.eve].iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::Config("path-loss exponents must be positive".into()));
        }
        if !self.reference_loss_db.is_finite() {
            return Err(Error::Config("reference loss must be finite".into()));
        }
        for (name, p) in [("bs", self.bs_pos), ("eve", self.eve_pos), ("iu", self.iu_pos), ("ou", self.ou_pos)] {
            if distance(p, self.ris_pos) <= 0.0 {
                return Err(Error::Config(format!("{name} coincides with the RIS")));
            }
        }
        Ok(())
    }

    /// Power gains of the BS, IU, OU and eavesdropper links to the RIS.
    pub fn large_scale(&self) -> Result<LargeScale> {
        let e = self.pathloss_exponents;
        let l0 = self.reference_loss_db;
        Ok(LargeScale {
            bs: path_loss(distance(self.bs_pos, self.ris_pos), e.bs, l0)?,
            iu: path_loss(distance(self.iu_pos, self.ris_pos), e.iu, l0)?,
            ou: path_loss(distance(self.ou_pos, self.ris_pos), e.ou, l0)?,
            eve: path_loss(distance(self.eve_pos, self.ris_pos), e.eve, l0)?,
        })
    }
}

/// Large-scale power gains of the four RIS links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LargeScale {
    pub bs: f64,
    pub iu: f64,
    pub ou: f64,
    pub eve: f64,
}

impl LargeScale {
    pub fn of(&self, user: User) -> f64 {
        match user {
            User::Iu => self.iu,
            User::Ou => self.ou,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub num_bs_antennas: usize,
    pub num_ris_elements: usize,
    /// Receiver noise power in watts.
    pub noise_power: f64,
    /// Linear Rician factor of the RIS-BS link; `inf` gives a pure line-of-sight link.
    pub rician_factor: f64,
    pub p_max_iu: f64,
    pub p_max_ou: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            num_bs_antennas: 4,
            num_ris_elements: 8,
            noise_power: dbm_to_watts(-115.0),
            rician_factor: db_to_linear(3.0),
            p_max_iu: dbm_to_watts(15.0),
            p_max_ou: dbm_to_watts(15.0),
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_bs_antennas == 0 || self.num_ris_elements == 0 {
            return Err(Error::Config("antenna and element counts must be positive".into()));
        }
        if !(self.noise_power > 0.0) || !self.noise_power.is_finite() {
            return Err(Error::Config("noise power must be positive".into()));
        }
        if !(self.rician_factor >= 0.0) {
            return Err(Error::Config("rician factor must be nonnegative".into()));
        }
        if !(self.p_max_iu > 0.0 && self.p_max_ou > 0.0) || !(self.p_max_iu.is_finite() && self.p_max_ou.is_finite()) {
            return Err(Error::Config("power limits must be positive".into()));
        }
        Ok(())
    }

    pub fn p_max(&self, user: User) -> f64 {
        match user {
            User::Iu => self.p_max_iu,
            User::Ou => self.p_max_ou,
        }
    }
}

/// Constant-rate wiretap code parameters in bits/s/Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateConfig {
    pub r_c_iu: f64,
    pub r_c_ou: f64,
    pub r_s_iu: f64,
    pub r_s_ou: f64,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self { r_c_iu: 2.0, r_c_ou: 0.5, r_s_iu: 1.9, r_s_ou: 0.4 }
    }
}

impl RateConfig {
    pub fn validate(&self) -> Result<()> {
        for (rc, rs) in [(self.r_c_iu, self.r_s_iu), (self.r_c_ou, self.r_s_ou)] {
            if !(rs >= 0.0 && rs <= rc) || !rc.is_finite() {
                return Err(Error::Config(format!("rates need 0 <= r_s <= r_c, got r_c={rc}, r_s={rs}")));
            }
        }
        Ok(())
    }

    /// Redundancy `R_c - R_s` of the wiretap code.
    pub fn gap(&self, user: User) -> f64 {
        match user {
            User::Iu => self.r_c_iu - self.r_s_iu,
            User::Ou => self.r_c_ou - self.r_s_ou,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum User {
    Iu,
    Ou,
}

impl User {
    pub const BOTH: [User; 2] = [User::Iu, User::Ou];

    /// Array slot of the user: 0 for IU, 1 for OU.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn other(self) -> User {
        match self {
            User::Iu => User::Ou,
            User::Ou => User::Iu,
        }
    }
}

/// SIC decoding order. `IuFirst` corresponds to `u_I = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodingOrder {
    IuFirst,
    OuFirst,
}

impl DecodingOrder {
    pub const BOTH: [DecodingOrder; 2] = [DecodingOrder::IuFirst, DecodingOrder::OuFirst];

    pub fn from_indicators(u_iu: u8, u_ou: u8) -> Result<Self> {
        match (u_iu, u_ou) {
            (1, 0) => Ok(DecodingOrder::IuFirst),
            (0, 1) => Ok(DecodingOrder::OuFirst),
            _ => domain(format!("decoding indicators must be one-hot, got ({u_iu},{u_ou})")),
        }
    }

    pub fn u_iu(self) -> u8 {
        matches!(self, DecodingOrder::IuFirst) as u8
    }

    pub fn u_ou(self) -> u8 {
        matches!(self, DecodingOrder::OuFirst) as u8
    }

    /// User decoded first, i.e. the one that sees the other user as interference.
    pub fn first(self) -> User {
        match self {
            DecodingOrder::IuFirst => User::Iu,
            DecodingOrder::OuFirst => User::Ou,
        }
    }

    pub fn second(self) -> User {
        self.first().other()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub inner_tol: f64,
    pub penalty_tol: f64,
    pub alt_tol: f64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub max_alt: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            inner_tol: 1e-3,
            penalty_tol: 1e-3,
            alt_tol: 1e-4,
            penalty_init: 1e-3,
            penalty_growth: 5.0,
            max_inner: 30,
            max_outer: 8,
            max_alt: 30,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.inner_tol, self.penalty_tol, self.alt_tol, self.penalty_init];
        if pos.iter().any(|v| !(*v > 0.0)) || !(self.penalty_growth > 1.0) {
            return Err(Error::Config("tolerances must be positive and penalty_growth > 1".into()));
        }
        if self.max_inner == 0 || self.max_outer == 0 || self.max_alt == 0 {
            return Err(Error::Config("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

/// Per-element energy-splitting coefficients of the surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarCoefficients {
    pub beta_t: Vec<f64>,
    pub beta_r: Vec<f64>,
    pub theta_t: Vec<f64>,
    pub theta_r: Vec<f64>,
}

impl StarCoefficients {
    pub fn len(&self) -> usize {
        self.beta_t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta_t.is_empty()
    }

    /// Builds coefficients from complex transmission/reflection vectors.
    pub fn from_vectors(u_t: &DVector<C64>, u_r: &DVector<C64>) -> Self {
        let split = |u: &DVector<C64>| -> (Vec<f64>, Vec<f64>) {
            u.iter().map(|c| (c.norm_sqr(), wrap_phase(c.arg()))).unzip()
        };
        let (beta_t, theta_t) = split(u_t);
        let (beta_r, theta_r) = split(u_r);
        Self { beta_t, beta_r, theta_t, theta_r }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.beta_t.len();
        if self.beta_r.len() != n || self.theta_t.len() != n || self.theta_r.len() != n {
            return Err(Error::Dimension("coefficient vectors differ in length".into()));
        }
        for i in 0..n {
            let (bt, br) = (self.beta_t[i], self.beta_r[i]);
            if !(bt >= 0.0 && br >= 0.0) || bt + br > 1.0 + 1e-9 {
                return domain(format!("element {i} violates energy splitting: {bt} + {br}"));
            }
        }
        Ok(())
    }

    pub fn u_t(&self) -> DVector<C64> {
        coeff_vector(&self.beta_t, &self.theta_t)
    }

    pub fn u_r(&self) -> DVector<C64> {
        coeff_vector(&self.beta_r, &self.theta_r)
    }

    pub fn u(&self, user: User) -> DVector<C64> {
        match user {
            User::Iu => self.u_t(),
            User::Ou => self.u_r(),
        }
    }

    pub fn beta(&self, user: User) -> &[f64] {
        match user {
            User::Iu => &self.beta_t,
            User::Ou => &self.beta_r,
        }
    }
}

fn coeff_vector(beta: &[f64], theta: &[f64]) -> DVector<C64> {
    DVector::from_iterator(beta.len(), beta.iter().zip(theta).map(|(b, t)| C64::from_polar(b.max(0.0).sqrt(), *t)))
}

pub fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

fn clamp_small(v: f64) -> f64 {
    if v < 0.0 && v > NEG_CLAMP {
        0.0
    } else {
        v
    }
}

/// `|w^H G^H Theta h|^2` for the transmission (IU) and reflection (OU) paths.
pub fn effective_gains(channels: &ChannelSet, coeffs: &StarCoefficients, w: &DVector<C64>) -> Result<(f64, f64)> {
    let n = channels.num_elements();
    if coeffs.len() != n || w.len() != channels.num_antennas() {
        return Err(Error::Dimension("coefficients or receive vector do not match the channel".into()));
    }
    let gw = channels.g() * w; // N-vector G w; w^H G^H x = conj(Gw)^T x
    let path = |u: DVector<C64>, h: &DVector<C64>| -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..n {
            acc += gw[k].conj() * u[k] * h[k];
        }
        acc.norm_sqr()
    };
    Ok((path(coeffs.u_t(), channels.h_is()), path(coeffs.u_r(), channels.h_os())))
}

/// Legitimate SINRs `(gamma_I, gamma_O)` at the BS under the given decoding order.
pub fn legitimate_sinr(
    channels: &ChannelSet,
    coeffs: &StarCoefficients,
    w: &DVector<C64>,
    p_iu: f64,
    p_ou: f64,
    order: DecodingOrder,
    noise: f64,
) -> Result<(f64, f64)> {
    let wn = w.norm();
    if wn == 0.0 {
        return domain("receive vector has zero norm");
    }
    if (wn - 1.0).abs() > 1e-9 {
        return domain(format!("receive vector must be unit norm, got {wn}"));
    }
    let (a, b) = effective_gains(channels, coeffs, w)?;
    Ok(sinr_from_gains(a, b, p_iu, p_ou, order, noise))
}

/// SINRs from effective gains `a = |w^H q_I u_t|^2`, `b = |w^H q_O u_r|^2` with `|w| = 1`.
pub fn sinr_from_gains(a: f64, b: f64, p_iu: f64, p_ou: f64, order: DecodingOrder, noise: f64) -> (f64, f64) {
    let (si, so) = (p_iu * a, p_ou * b);
    let (gi, go) = match order {
        DecodingOrder::IuFirst => (si / (so + noise), so / noise),
        DecodingOrder::OuFirst => (si / noise, so / (si + noise)),
    };
    (clamp_small(gi), clamp_small(go))
}

/// Worst-case eavesdropper SNRs `(gamma_EI, gamma_EO)`, both interference-free.
pub fn eavesdropper_snr(channels: &ChannelSet, coeffs: &StarCoefficients, p_iu: f64, p_ou: f64, noise: f64) -> Result<(f64, f64)> {
    coeffs.validate()?;
    let n = channels.num_elements();
    if coeffs.len() != n {
        return Err(Error::Dimension("coefficients do not match the channel".into()));
    }
    let path = |u: DVector<C64>, h: &DVector<C64>| -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..n {
            acc += channels.h_es()[k].conj() * u[k] * h[k];
        }
        acc.norm_sqr()
    };
    let ei = p_iu * path(coeffs.u_t(), channels.h_is()) / noise;
    let eo = p_ou * path(coeffs.u_r(), channels.h_os()) / noise;
    Ok((clamp_small(ei), clamp_small(eo)))
}

/// `[log2(1+gamma) - log2(1+gamma_E)]^+`.
pub fn secrecy_capacity(gamma: f64, gamma_e: f64) -> f64 {
    let g = clamp_small(gamma).max(0.0);
    let e = clamp_small(gamma_e).max(0.0);
    ((1.0 + g).log2() - (1.0 + e).log2()).max(0.0)
}

/// Per-user link summary of a design point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecrecyReport {
    pub order: DecodingOrder,
    pub sinr_iu: f64,
    pub sinr_ou: f64,
    pub eve_snr_iu: f64,
    pub eve_snr_ou: f64,
    pub secrecy_iu: f64,
    pub secrecy_ou: f64,
    pub min_secrecy: f64,
    pub p_iu: f64,
    pub p_ou: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sop_iu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sop_ou: Option<f64>,
}

impl SecrecyReport {
    pub fn from_snrs(order: DecodingOrder, sinr: (f64, f64), eve: (f64, f64), powers: (f64, f64)) -> Self {
        let secrecy_iu = secrecy_capacity(sinr.0, eve.0);
        let secrecy_ou = secrecy_capacity(sinr.1, eve.1);
        Self {
            order,
            sinr_iu: sinr.0,
            sinr_ou: sinr.1,
            eve_snr_iu: eve.0,
            eve_snr_ou: eve.1,
            secrecy_iu,
            secrecy_ou,
            min_secrecy: secrecy_iu.min(secrecy_ou),
            p_iu: powers.0,
            p_ou: powers.1,
            sop_iu: None,
            sop_ou: None,
        }
    }

    /// Evaluates a physical design point `(w, Theta, P)` with the exact link formulas.
    pub fn evaluate(
        channels: &ChannelSet,
        coeffs: &StarCoefficients,
        w: &DVector<C64>,
        p_iu: f64,
        p_ou: f64,
        order: DecodingOrder,
        noise: f64,
    ) -> Result<Self> {
        let sinr = legitimate_sinr(channels, coeffs, w, p_iu, p_ou, order, noise)?;
        let eve = eavesdropper_snr(channels, coeffs, p_iu, p_ou, noise)?;
        Ok(Self::from_snrs(order, sinr, eve, (p_iu, p_ou)))
    }

    pub fn max_sop(&self) -> Option<f64> {
        Some(self.sop_iu?.max(self.sop_ou?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_loss_reference_and_rus_distance() {
        assert!((path_loss(1.0, 2.5, -30.0).unwrap() - 1e-3).abs() < 1e-18);
        let v = path_loss(5.0, 2.5, -30.0).unwrap();
        assert!((v - 1.788_854_381_999_831_8e-5).abs() < 1e-14);
        assert!(path_loss(0.0, 2.5, -30.0).is_err());
        assert!(path_loss(-1.0, 2.5, -30.0).is_err());
    }

    #[test]
    fn sinr_substitution() {
        let (gi, go) = sinr_from_gains(1.0, 1.0, 2.0, 1.0, DecodingOrder::IuFirst, 1.0);
        assert_eq!((gi, go), (1.0, 1.0));
        let (gi, _) = sinr_from_gains(1.0, 1.0, 0.0, 1.0, DecodingOrder::IuFirst, 1.0);
        assert_eq!(gi, 0.0);
        let (gi, go) = sinr_from_gains(1.0, 1.0, 2.0, 1.0, DecodingOrder::OuFirst, 1.0);
        assert_eq!((gi, go), (2.0, 1.0 / 3.0));
    }

    #[test]
    fn secrecy_capacity_cases() {
        assert!((secrecy_capacity(3.0, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(secrecy_capacity(1.0, 3.0), 0.0);
        assert_eq!(secrecy_capacity(2.5, 2.5), 0.0);
    }

    #[test]
    fn decoding_indicators() {
        assert_eq!(DecodingOrder::from_indicators(1, 0).unwrap(), DecodingOrder::IuFirst);
        assert_eq!(DecodingOrder::from_indicators(0, 1).unwrap(), DecodingOrder::OuFirst);
        assert!(DecodingOrder::from_indicators(1, 1).is_err());
        assert!(DecodingOrder::from_indicators(0, 0).is_err());
        assert_eq!(DecodingOrder::OuFirst.first(), User::Ou);
    }

    #[test]
    fn defaults_validate() {
        SystemGeometry::default().validate().unwrap();
        RadioConfig::default().validate().unwrap();
        RateConfig::default().validate().unwrap();
        Tolerances::default().validate().unwrap();
        let r = RadioConfig::default();
        assert!((r.noise_power - 10f64.powf(-14.5)).abs() < 1e-25);
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(-0.0), 0.0);
        assert!((wrap_phase(-1.0) - (TAU - 1.0)).abs() < 1e-15);
        assert!(wrap_phase(TAU) < 1e-15);
    }
}
