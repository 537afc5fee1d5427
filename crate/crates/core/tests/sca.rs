mod common;

use common::{close, cmat, cvec, hermitian, psd, rng, uniform};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use star_secrecy::model::C64;
use star_secrecy::sca::{
    dc_penalty_row, majorant_tangent, majorant_upper, polarization_bounds, polarization_value, rank_one_extract,
    BeamformingIterate, Scenario, SurfaceLayout,
};
use star_secrecy::{sample_channels, ChannelSet, RadioConfig, SystemGeometry, User};

fn direct_trace(q: &DMatrix<C64>, w: &DMatrix<C64>, u: &DMatrix<C64>) -> f64 {
    (q.adjoint() * w * q * u).trace().re
}

#[test]
fn polarization_hand_values() {
    let q = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
    let w = DMatrix::from_element(1, 1, C64::new(2.0, 0.0));
    let u = DMatrix::from_element(1, 1, C64::new(3.0, 0.0));
    assert!(close(polarization_value(&q, &w, &u).unwrap(), 6.0, 1e-15));
    // q = [1 1], W = 1, U = I: Tr([[1,1],[1,1]]) = 2
    let q = DMatrix::from_element(1, 2, C64::new(1.0, 0.0));
    let u = DMatrix::identity(2, 2);
    assert!(close(polarization_value(&q, &DMatrix::identity(1, 1), &u).unwrap(), 2.0, 1e-15));
    assert!(polarization_value(&q, &DMatrix::identity(2, 2), &u).is_err());
}

#[test]
fn polarization_random_instances() {
    let mut r = rng(31);
    for _ in 0..100 {
        let m = r.random_range(1..=8);
        let n = r.random_range(1..=16);
        let q = cmat(&mut r, m, n);
        let w = psd(&mut r, m, 1 + m / 2);
        let u = psd(&mut r, n, 1 + n / 3);
        let v = polarization_value(&q, &w, &u).unwrap();
        let d = direct_trace(&q, &w, &u);
        assert!((v - d).abs() <= 1e-9 * (1.0 + d.abs()), "{v} vs {d}");
    }
}

#[test]
fn bounds_touch_and_sandwich() {
    let mut r = rng(32);
    for _ in 0..10 {
        let (m, n) = (3, 5);
        let q = cmat(&mut r, m, n);
        let wl = psd(&mut r, m, 1);
        let ul = psd(&mut r, n, 2);
        let (lo, up) = polarization_bounds(&q, &wl, &ul, &wl, &ul).unwrap();
        let t = direct_trace(&q, &wl, &ul);
        assert!((lo - t).abs() <= 1e-10 * (1.0 + t.abs()));
        assert!((up - t).abs() <= 1e-10 * (1.0 + t.abs()));
        for _ in 0..100 {
            let s = uniform(&mut r, 0.0, 2.0);
            let w = &wl + hermitian(&mut r, m) * C64::from(s);
            let u = &ul + hermitian(&mut r, n) * C64::from(s);
            let (lo, up) = polarization_bounds(&q, &w, &u, &wl, &ul).unwrap();
            let t = direct_trace(&q, &w, &u);
            let slack = 1e-10 * (1.0 + t.abs());
            assert!(lo <= t + slack && t <= up + slack, "{lo} <= {t} <= {up}");
        }
    }
}

#[test]
fn majorant_hand_values() {
    // T = 1, phi = 2, P = 1, sigma^2 = 1: d = 2, tangent varpi = 1, value = (4 + 4)/2 = 4 = d phi
    assert_eq!(majorant_tangent(1.0, 2.0, 1.0, 1.0), 1.0);
    assert!(close(majorant_upper(1.0, 2.0, 1.0, 1.0, 1.0).unwrap(), 4.0, 1e-15));
    assert!(close(majorant_upper(1.0, 2.0, 2.0, 1.0, 1.0).unwrap(), 5.0, 1e-15));
    assert!(majorant_upper(1.0, 2.0, 0.0, 1.0, 1.0).is_err());
}

#[test]
fn majorant_dominates_and_touches() {
    let mut r = rng(33);
    for _ in 0..1000 {
        let t = uniform(&mut r, 0.0, 50.0);
        let phi = uniform(&mut r, 0.01, 50.0);
        let p = uniform(&mut r, 0.1, 10.0);
        let s2 = uniform(&mut r, 0.01, 2.0);
        let exact = (p * t + s2) * phi;
        let vt = majorant_tangent(t, phi, p, s2);
        assert!(close(majorant_upper(t, phi, vt, p, s2).unwrap(), exact, 1e-12));
        let other = vt * uniform(&mut r, 0.1, 10.0);
        assert!(majorant_upper(t, phi, other, p, s2).unwrap() >= exact * (1.0 - 1e-12));
    }
}

#[test]
fn dc_penalty_cases() {
    let mut r = rng(34);
    let v = cvec(&mut r, 4);
    let unit = &v / C64::from(v.norm());
    let rank_one = &unit * unit.adjoint() * C64::from(3.0);
    assert!(dc_penalty_row(&rank_one, &unit).abs() <= 1e-12);
    let id = DMatrix::<C64>::identity(4, 4);
    assert!(close(dc_penalty_row(&id, &unit), 3.0, 1e-12));
}

#[test]
fn dc_penalty_minimized_by_leading_vector() {
    let mut r = rng(35);
    for _ in 0..50 {
        let u = psd(&mut r, 6, 3);
        let (lead, _) = rank_one_extract(&u);
        let best = dc_penalty_row(&u, &lead);
        let eig = u.clone().symmetric_eigenvalues();
        let lmax = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(close(best, u.trace().re - lmax, 1e-9));
        for _ in 0..10 {
            let v = cvec(&mut r, 6);
            assert!(dc_penalty_row(&u, &(&v / C64::from(v.norm()))) >= best - 1e-9);
        }
    }
}

#[test]
fn rank_ratio_cases() {
    let mut r = rng(36);
    let (_, ratio) = rank_one_extract(&psd(&mut r, 5, 1));
    assert!(close(ratio, 1.0, 1e-12));
    let (_, ratio) = rank_one_extract(&DMatrix::<C64>::identity(5, 5));
    assert!(close(ratio, 0.2, 1e-12));
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::from(3.0), C64::from(1.0)]));
    let (v, ratio) = rank_one_extract(&d);
    assert!(close(ratio, 0.75, 1e-12));
    assert!(close(v[0].norm(), 1.0, 1e-12));
}

#[test]
fn layouts() {
    let c = SurfaceLayout::conventional(5);
    assert_eq!(c.transmit, vec![0, 1]);
    assert_eq!(c.reflect, vec![2, 3, 4]);
    let s = SurfaceLayout::star(3).only(User::Ou);
    assert!(s.elements(User::Iu).is_empty());
    assert_eq!(s.elements(User::Ou), &[0, 1, 2]);
}

#[test]
fn initial_iterate_is_feasible() {
    let ch = sample_channels(&SystemGeometry::default(), &RadioConfig::default(), 2).unwrap();
    for layout in [SurfaceLayout::star(8), SurfaceLayout::conventional(8)] {
        let it = BeamformingIterate::initial(&ch.cascades(), &layout, 1.0, 2).unwrap();
        assert!(close(it.w.trace().re, 1.0, 1e-12));
        assert!(it.split_violation() <= 1e-12);
        assert!(it.min_rank_ratio() >= 1.0 - 1e-12);
    }
}

#[test]
fn scenario_gains_match_direct_forms() {
    let mut r = rng(37);
    let (n, m) = (5, 2);
    let ch = ChannelSet::from_raw(cmat(&mut r, n, m), cvec(&mut r, n), cvec(&mut r, n), cvec(&mut r, n)).unwrap();
    let cas = ch.cascades();
    let sc = Scenario::new(cas.clone(), SurfaceLayout::star(n), 0.3).unwrap();
    let (w, ut, ur) = (psd(&mut r, m, 1), psd(&mut r, n, 1), psd(&mut r, n, 2));
    let (z, ze) = sc.gains(&w, &ut, &ur);
    assert!(close(z[0], direct_trace(&cas.q_iu, &w, &ut), 1e-10));
    assert!(close(z[1], direct_trace(&cas.q_ou, &w, &ur), 1e-10));
    assert!(close(ze[1], (cas.qe_ou.adjoint() * &ur * &cas.qe_ou)[(0, 0)].re, 1e-10));
    let (t, ge) = sc.scaled([2.0, 1.0]).snrs(User::Iu, &w, &ut);
    assert!(close(t, 2.0 / 0.3 * z[0], 1e-10) && close(ge, 2.0 / 0.3 * ze[0], 1e-10));
    assert!(Scenario::new(cas, SurfaceLayout::star(n + 1), 0.3).is_err());
}

proptest! {
    #[test]
    fn polarization_is_bilinear(seed in 0u64..1000, a in 0.0f64..3.0) {
        let mut r = rng(seed);
        let q = cmat(&mut r, 2, 4);
        let (w, u) = (psd(&mut r, 2, 2), psd(&mut r, 4, 2));
        let base = polarization_value(&q, &w, &u).unwrap();
        let scaled = polarization_value(&q, &(&w * C64::from(a)), &u).unwrap();
        prop_assert!((scaled - a * base).abs() <= 1e-10 * (1.0 + base.abs()));
        prop_assert!(base >= -1e-10);
    }

    #[test]
    fn majorant_matches_bilinear_slopes(t in 0.0f64..20.0, phi in 0.1f64..20.0, p in 0.1f64..5.0, s2 in 0.05f64..2.0) {
        let vt = majorant_tangent(t, phi, p, s2);
        let h = 1e-6;
        let dt = (majorant_upper(t + h, phi, vt, p, s2).unwrap() - majorant_upper(t - h, phi, vt, p, s2).unwrap()) / (2.0 * h);
        let dphi = (majorant_upper(t, phi + h, vt, p, s2).unwrap() - majorant_upper(t, phi - h, vt, p, s2).unwrap()) / (2.0 * h);
        prop_assert!((dt - p * phi).abs() <= 1e-6 * (1.0 + p * phi));
        prop_assert!((dphi - (p * t + s2)).abs() <= 1e-6 * (1.0 + p * t + s2));
    }
}
