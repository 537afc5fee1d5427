//! Channel realizations: Rician RIS-BS link, Rayleigh user and eavesdropper links.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{LargeScale, RadioConfig, SystemGeometry, User, C64};
use crate::rng::{streams, substream};

/// One realization of every channel in the system.
///
/// `g` is the N x M RIS-to-BS matrix; user and eavesdropper vectors have length N.
/// Small-scale parts are kept alongside the composite channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    g: DMatrix<C64>,
    g_los: DMatrix<C64>,
    g_nlos: DMatrix<C64>,
    h_is: DVector<C64>,
    h_os: DVector<C64>,
    h_es: DVector<C64>,
    h_is_small: DVector<C64>,
    h_os_small: DVector<C64>,
    h_es_small: DVector<C64>,
    large_scale: LargeScale,
    rician_factor: f64,
}

fn cn<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Half-wavelength uniform linear array response along the y axis.
fn steering(len: usize, sin_angle: f64) -> DVector<C64> {
    DVector::from_fn(len, |k, _| C64::from_polar(1.0, PI * k as f64 * sin_angle))
}

/// Unit-modulus line-of-sight component of the RIS-BS link.
///
/// Both arrays lie along the y axis; angles follow from the positions.
pub fn los_component(geometry: &SystemGeometry, n: usize, m: usize) -> DMatrix<C64> {
    let (b, r) = (geometry.bs_pos, geometry.ris_pos);
    let d = crate::model::distance(b, r);
    let sin_ris = (b[1] - r[1]) / d;
    let sin_bs = (r[1] - b[1]) / d;
    steering(n, sin_ris) * steering(m, sin_bs).adjoint()
}

fn rician_weights(kappa: f64) -> (f64, f64) {
    if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
    }
}

/// Draws a channel realization; identical seeds give identical channels.
pub fn sample_channels(geometry: &SystemGeometry, radio: &RadioConfig, seed: u64) -> Result<ChannelSet> {
    geometry.validate()?;
    radio.validate()?;
    let (n, m) = (radio.num_ris_elements, radio.num_bs_antennas);
    let ls = geometry.large_scale()?;
    let mut rng = substream(seed, streams::CHANNEL);
    let g_nlos = DMatrix::from_fn(n, m, |_, _| cn(&mut rng));
    let h_is_small = DVector::from_fn(n, |_, _| cn(&mut rng));
    let h_os_small = DVector::from_fn(n, |_, _| cn(&mut rng));
    let h_es_small = DVector::from_fn(n, |_, _| cn(&mut rng));
    let g_los = los_component(geometry, n, m);
    Ok(ChannelSet::from_small_scale(g_los, g_nlos, h_is_small, h_os_small, h_es_small, ls, radio.rician_factor))
}

impl ChannelSet {
    /// Assembles composite channels from small-scale parts and large-scale power gains.
    pub fn from_small_scale(
        g_los: DMatrix<C64>,
        g_nlos: DMatrix<C64>,
        h_is_small: DVector<C64>,
        h_os_small: DVector<C64>,
        h_es_small: DVector<C64>,
        large_scale: LargeScale,
        rician_factor: f64,
    ) -> Self {
        let (wl, wn) = rician_weights(rician_factor);
        let g = (&g_los * C64::from(wl) + &g_nlos * C64::from(wn)) * C64::from(large_scale.bs.sqrt());
        let h_is = &h_is_small * C64::from(large_scale.iu.sqrt());
        let h_os = &h_os_small * C64::from(large_scale.ou.sqrt());
        let h_es = &h_es_small * C64::from(large_scale.eve.sqrt());
        Self { g, g_los, g_nlos, h_is, h_os, h_es, h_is_small, h_os_small, h_es_small, large_scale, rician_factor }
    }

    /// Channels given directly, with unit large-scale gains and no line-of-sight part.
    pub fn from_raw(g: DMatrix<C64>, h_is: DVector<C64>, h_os: DVector<C64>, h_es: DVector<C64>) -> Result<Self> {
        let n = g.nrows();
        if h_is.len() != n || h_os.len() != n || h_es.len() != n {
            return Err(Error::Dimension("channel vectors must have one entry per element".into()));
        }
        let ls = LargeScale { bs: 1.0, iu: 1.0, ou: 1.0, eve: 1.0 };
        let g_los = DMatrix::zeros(n, g.ncols());
        Ok(Self::from_small_scale(g_los, g, h_is, h_os, h_es, ls, 0.0))
    }

    pub fn num_elements(&self) -> usize {
        self.g.nrows()
    }

    pub fn num_antennas(&self) -> usize {
        self.g.ncols()
    }

    pub fn g(&self) -> &DMatrix<C64> {
        &self.g
    }

    pub fn g_los(&self) -> &DMatrix<C64> {
        &self.g_los
    }

    pub fn g_nlos(&self) -> &DMatrix<C64> {
        &self.g_nlos
    }

    pub fn h_is(&self) -> &DVector<C64> {
        &self.h_is
    }

    pub fn h_os(&self) -> &DVector<C64> {
        &self.h_os
    }

    pub fn h_es(&self) -> &DVector<C64> {
        &self.h_es
    }

    pub fn h_user(&self, user: User) -> &DVector<C64> {
        match user {
            User::Iu => &self.h_is,
            User::Ou => &self.h_os,
        }
    }

    pub fn h_user_small(&self, user: User) -> &DVector<C64> {
        match user {
            User::Iu => &self.h_is_small,
            User::Ou => &self.h_os_small,
        }
    }

    pub fn h_es_small(&self) -> &DVector<C64> {
        &self.h_es_small
    }

    pub fn large_scale(&self) -> &LargeScale {
        &self.large_scale
    }

    pub fn rician_factor(&self) -> f64 {
        self.rician_factor
    }

    /// Copy with the eavesdropper link removed.
    pub fn without_eavesdropper(&self) -> Self {
        let mut c = self.clone();
        c.h_es.fill(C64::new(0.0, 0.0));
        c.h_es_small.fill(C64::new(0.0, 0.0));
        c
    }

    /// Cascaded channels of both users and of the eavesdropper.
    pub fn cascades(&self) -> Cascades {
        let n = self.num_elements();
        let gh = self.g.adjoint();
        let q = |h: &DVector<C64>| {
            let mut q = gh.clone();
            for k in 0..n {
                let hk = h[k];
                q.column_mut(k).apply(|x| *x *= hk);
            }
            q
        };
        let qe = |h: &DVector<C64>| DVector::from_fn(n, |k, _| self.h_es[k] * h[k].conj());
        Cascades { q_iu: q(&self.h_is), q_ou: q(&self.h_os), qe_iu: qe(&self.h_is), qe_ou: qe(&self.h_os) }
    }

    /// Serializes to the line-oriented text format read by [`ChannelSet::from_text`].
    ///
    /// ```text
    /// star-secrecy-channels 1
    /// dims <N> <M>
    /// large_scale <bs> <iu> <ou> <eve>
    /// rician <kappa>
    /// g_los <N*M row-major re,im pairs>
    /// g_nlos <...>
    /// h_is_small <N pairs>
    /// h_os_small <N pairs>
    /// h_es_small <N pairs>
    /// ```
    /// Composite channels are rebuilt on load.
    pub fn to_text(&self) -> String {
        let mut out = String::from("star-secrecy-channels 1\n");
        let (n, m) = (self.num_elements(), self.num_antennas());
        let ls = &self.large_scale;
        writeln!(out, "dims {n} {m}").unwrap();
        writeln!(out, "large_scale {:e} {:e} {:e} {:e}", ls.bs, ls.iu, ls.ou, ls.eve).unwrap();
        writeln!(out, "rician {:e}", self.rician_factor).unwrap();
        let pairs = |it: &mut dyn Iterator<Item = C64>| it.map(|c| format!("{:e},{:e}", c.re, c.im)).collect::<Vec<_>>().join(" ");
        let rows = |mat: &DMatrix<C64>| {
            let mut it = (0..n).flat_map(move |i| (0..m).map(move |j| mat[(i, j)]));
            pairs(&mut it)
        };
        writeln!(out, "g_los {}", rows(&self.g_los)).unwrap();
        writeln!(out, "g_nlos {}", rows(&self.g_nlos)).unwrap();
        writeln!(out, "h_is_small {}", pairs(&mut self.h_is_small.iter().copied())).unwrap();
        writeln!(out, "h_os_small {}", pairs(&mut self.h_os_small.iter().copied())).unwrap();
        writeln!(out, "h_es_small {}", pairs(&mut self.h_es_small.iter().copied())).unwrap();
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let perr = |m: &str| Error::Parse(format!("channel text: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some("star-secrecy-channels 1") {
            return Err(perr("missing header"));
        }
        let mut field = |name: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| perr(&format!("missing {name}")))?;
            let mut toks = line.split_whitespace();
            if toks.next() != Some(name) {
                return Err(perr(&format!("expected {name}")));
            }
            Ok(toks.map(str::to_owned).collect())
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| perr(&format!("bad number {s}")));
        let cplx = |s: &String| -> Result<C64> {
            let (re, im) = s.split_once(',').ok_or_else(|| perr(&format!("bad pair {s}")))?;
            Ok(C64::new(num(re)?, num(im)?))
        };
        let dims = field("dims")?;
        if dims.len() != 2 {
            return Err(perr("dims needs two values"));
        }
        let n: usize = dims[0].parse().map_err(|_| perr("bad N"))?;
        let m: usize = dims[1].parse().map_err(|_| perr("bad M"))?;
        let ls = field("large_scale")?.iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
        if ls.len() != 4 {
            return Err(perr("large_scale needs four values"));
        }
        let kappa = field("rician")?.first().map(|s| num(s)).ok_or_else(|| perr("missing kappa"))??;
        let mut read = |name: &str, len: usize| -> Result<Vec<C64>> {
            let v = field(name)?.iter().map(cplx).collect::<Result<Vec<_>>>()?;
            if v.len() != len {
                return Err(perr(&format!("{name} has {} entries, expected {len}", v.len())));
            }
            Ok(v)
        };
        let g_los = DMatrix::from_row_slice(n, m, &read("g_los", n * m)?);
        let g_nlos = DMatrix::from_row_slice(n, m, &read("g_nlos", n * m)?);
        let his = DVector::from_vec(read("h_is_small", n)?);
        let hos = DVector::from_vec(read("h_os_small", n)?);
        let hes = DVector::from_vec(read("h_es_small", n)?);
        let large = LargeScale { bs: ls[0], iu: ls[1], ou: ls[2], eve: ls[3] };
        Ok(Self::from_small_scale(g_los, g_nlos, his, hos, hes, large, kappa))
    }
}

/// Cascaded forms: `q_rho = G^H diag(h_rho)` (M x N) and the eavesdropper vectors
/// `qe_rho = h_E .* conj(h_rho)`, so that `|h_E^H Theta h_rho|^2 = |u^H qe_rho|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascades {
    pub q_iu: DMatrix<C64>,
    pub q_ou: DMatrix<C64>,
    pub qe_iu: DVector<C64>,
    pub qe_ou: DVector<C64>,
}

impl Cascades {
    pub fn q(&self, user: User) -> &DMatrix<C64> {
        match user {
            User::Iu => &self.q_iu,
            User::Ou => &self.q_ou,
        }
    }

    pub fn qe(&self, user: User) -> &DVector<C64> {
        match user {
            User::Iu => &self.qe_iu,
            User::Ou => &self.qe_ou,
        }
    }
}

pub fn cascaded_forms(channels: &ChannelSet) -> Cascades {
    channels.cascades()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RadioConfig, SystemGeometry};

    #[test]
    fn deterministic_per_seed() {
        let g = SystemGeometry::default();
        let r = RadioConfig::default();
        let a = sample_channels(&g, &r, 11).unwrap();
        let b = sample_channels(&g, &r, 11).unwrap();
        let c = sample_channels(&g, &r, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn pure_los_limit() {
        let g = SystemGeometry::default();
        let r = RadioConfig { rician_factor: f64::INFINITY, ..RadioConfig::default() };
        let ch = sample_channels(&g, &r, 3).unwrap();
        let scaled = ch.g() / C64::from(ch.large_scale().bs.sqrt());
        assert!((scaled - ch.g_los()).norm() < 1e-12);
    }

    #[test]
    fn scalar_cascade() {
        let g = DMatrix::from_element(1, 1, C64::new(0.3, -0.7));
        let h = DVector::from_element(1, C64::new(1.1, 0.4));
        let ch = ChannelSet::from_raw(g.clone(), h.clone(), h.clone(), DVector::zeros(1)).unwrap();
        let c = ch.cascades();
        assert!((c.q_iu[(0, 0)] - g[(0, 0)].conj() * h[0]).norm() < 1e-15);
        assert_eq!(c.qe_iu[0], C64::new(0.0, 0.0));
    }

    #[test]
    fn text_round_trip() {
        let ch = sample_channels(&SystemGeometry::default(), &RadioConfig::default(), 5).unwrap();
        let back = ChannelSet::from_text(&ch.to_text()).unwrap();
        assert_eq!(ch, back);
        assert!(ChannelSet::from_text("nonsense").is_err());
    }
}
