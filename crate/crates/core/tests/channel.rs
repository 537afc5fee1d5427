mod common;

use common::{close, cmat, cvec, rng};
use nalgebra::DVector;
use proptest::prelude::*;
use star_secrecy::channel::los_component;
use star_secrecy::model::C64;
use star_secrecy::{sample_channels, ChannelSet, RadioConfig, SystemGeometry};

fn radio(n: usize, m: usize, kappa: f64) -> RadioConfig {
    RadioConfig { num_ris_elements: n, num_bs_antennas: m, rician_factor: kappa, ..RadioConfig::default() }
}

#[test]
fn identical_seeds_identical_channels() {
    let geo = SystemGeometry::default();
    let r = RadioConfig::default();
    assert_eq!(sample_channels(&geo, &r, 5).unwrap(), sample_channels(&geo, &r, 5).unwrap());
    assert_ne!(sample_channels(&geo, &r, 5).unwrap(), sample_channels(&geo, &r, 6).unwrap());
}

#[test]
fn pure_line_of_sight_limit() {
    let geo = SystemGeometry::default();
    let ch = sample_channels(&geo, &radio(8, 4, f64::INFINITY), 3).unwrap();
    let ls = geo.large_scale().unwrap();
    let expect = los_component(&geo, 8, 4) * C64::from(ls.bs.sqrt());
    assert!((ch.g() - expect).norm() <= 1e-15 * ch.g().norm());
    for x in ch.g().iter() {
        assert!(close(x.norm_sqr(), ls.bs, 1e-12));
    }
}

#[test]
fn no_line_of_sight_entry_variance() {
    let geo = SystemGeometry::default();
    let ls = geo.large_scale().unwrap();
    let r = radio(4, 4, 0.0);
    let draws = 10_000;
    let mut acc = 0.0;
    for s in 0..draws {
        acc += sample_channels(&geo, &r, s).unwrap().g().norm_squared();
    }
    let mean = acc / (draws as f64 * 16.0);
    assert!(close(mean, ls.bs, 0.02), "{mean} vs {}", ls.bs);
}

#[test]
fn user_link_second_moment() {
    let geo = SystemGeometry::default();
    let ls = geo.large_scale().unwrap();
    let r = radio(8, 2, 1.0);
    let draws = 4000u64;
    let samples: Vec<f64> = (0..draws)
        .flat_map(|s| sample_channels(&geo, &r, s).unwrap().h_is().iter().map(|h| h.norm_sqr()).collect::<Vec<_>>())
        .collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!((mean - ls.iu).abs() <= 3.0 * se, "{mean} vs {} (se {se})", ls.iu);
}

#[test]
fn cascade_identity() {
    let mut r = rng(21);
    let (n, m) = (7, 3);
    let ch = ChannelSet::from_raw(cmat(&mut r, n, m), cvec(&mut r, n), cvec(&mut r, n), cvec(&mut r, n)).unwrap();
    let cas = ch.cascades();
    let u = cvec(&mut r, n);
    // Theta = diag(u)
    let theta_h = DVector::from_fn(n, |k, _| u[k] * ch.h_is()[k]);
    let direct = ch.g().adjoint() * theta_h;
    let via = &cas.q_iu * &u;
    assert!((direct - via).norm() <= 1e-12);
    let eve_direct: C64 = (0..n).map(|k| ch.h_es()[k].conj() * u[k] * ch.h_os()[k]).sum();
    let eve_via = u.dotc(&cas.qe_ou);
    assert!((eve_direct.norm_sqr() - eve_via.norm_sqr()).abs() <= 1e-12 * (1.0 + eve_direct.norm_sqr()));
}

#[test]
fn scalar_cascade_and_silent_eavesdropper() {
    let g = nalgebra::DMatrix::from_element(1, 1, C64::new(0.3, -1.2));
    let h = DVector::from_element(1, C64::new(2.0, 0.5));
    let z = DVector::from_element(1, C64::new(0.0, 0.0));
    let ch = ChannelSet::from_raw(g.clone(), h.clone(), h.clone(), z).unwrap();
    let cas = ch.cascades();
    assert!((cas.q_iu[(0, 0)] - g[(0, 0)].conj() * h[0]).norm() < 1e-15);
    assert_eq!(cas.qe_iu[0], C64::new(0.0, 0.0));
    assert_eq!(cas.qe_ou[0], C64::new(0.0, 0.0));
}

#[test]
fn dimension_mismatch_rejected() {
    let mut r = rng(2);
    assert!(ChannelSet::from_raw(cmat(&mut r, 3, 2), cvec(&mut r, 3), cvec(&mut r, 2), cvec(&mut r, 3)).is_err());
}

#[test]
fn text_round_trip() {
    let ch = sample_channels(&SystemGeometry::default(), &RadioConfig::default(), 9).unwrap();
    let back = ChannelSet::from_text(&ch.to_text()).unwrap();
    assert_eq!(back, ch);
    assert!(ChannelSet::from_text("star-secrecy-channels 1\ndims 2\n").is_err());
    assert!(ChannelSet::from_text("").is_err());
}

#[test]
fn without_eavesdropper_clears_leakage() {
    let ch = sample_channels(&SystemGeometry::default(), &RadioConfig::default(), 4).unwrap().without_eavesdropper();
    let cas = ch.cascades();
    assert!(cas.qe_iu.iter().chain(cas.qe_ou.iter()).all(|x| x.norm() == 0.0));
}

proptest! {
    #[test]
    fn cascades_linear_in_user_channel(seed in 0u64..500, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut r = rng(seed);
        let (n, m) = (4, 2);
        let g = cmat(&mut r, n, m);
        let (h1, h2, he) = (cvec(&mut r, n), cvec(&mut r, n), cvec(&mut r, n));
        let (ca, cb) = (C64::new(a, 0.5), C64::new(b, -0.25));
        let mix = &h1 * ca + &h2 * cb;
        let q = |h: &DVector<C64>| ChannelSet::from_raw(g.clone(), h.clone(), h.clone(), he.clone()).unwrap().cascades();
        let (q1, q2, qm) = (q(&h1), q(&h2), q(&mix));
        prop_assert!((&qm.q_iu - (&q1.q_iu * ca + &q2.q_iu * cb)).norm() <= 1e-12 * (1.0 + qm.q_iu.norm()));
        prop_assert!((&qm.qe_iu - (&q1.qe_iu * ca.conj() + &q2.qe_iu * cb.conj())).norm() <= 1e-12 * (1.0 + qm.qe_iu.norm()));
    }
}
