mod common;

use common::{close, cmat, cvec, rng, uniform};
use nalgebra::{DMatrix, DVector};
use star_secrecy::baselines::random_coefficients;
use star_secrecy::fullcsi::Link;
use star_secrecy::model::C64;
use star_secrecy::sca::{BeamformingIterate, SurfaceLayout};
use star_secrecy::statcsi::{
    build_leakage_program, extended_ahb, max_leakage, optimal_power_stat, sop_closed_form, sop_monte_carlo,
    two_layer_stat, SopParams, StatScenario,
};
use star_secrecy::{
    sample_channels, ChannelSet, DecodingOrder, Error, RadioConfig, RateConfig, StarCoefficients, SystemGeometry,
    Tolerances, User,
};

fn params(gain: f64, ls: f64, gap: f64, p: f64, noise: f64) -> SopParams {
    SopParams { effective_gain: gain, large_scale_product: ls, rate_gap: gap, power: p, noise }
}

#[test]
fn closed_form_cases() {
    assert_eq!(sop_closed_form(&params(1.0, 1.0, 0.0, 1.0, 1.0)).unwrap(), 1.0);
    assert!(sop_closed_form(&params(1.0, 1.0, 1.0, 1e-12, 1.0)).unwrap() < 1e-100);
    assert_eq!(sop_closed_form(&params(1.0, 1.0, 1.0, 0.0, 1.0)).unwrap(), 0.0);
    assert!(close(sop_closed_form(&params(1.0, 1.0, 1.0, 1.0, 1.0)).unwrap(), (-1.0f64).exp(), 1e-15));
    assert!(sop_closed_form(&params(1.0, -1.0, 1.0, 1.0, 1.0)).is_err());
    let h = DVector::from_vec(vec![C64::new(1.0, 1.0), C64::new(0.0, 2.0)]);
    let p = SopParams::new(&[0.5, 0.25], &h, 1.0, 1.0, 1.0, 1.0).unwrap();
    assert!(close(p.effective_gain, 2.0, 1e-15));
    assert!(SopParams::new(&[0.5], &h, 1.0, 1.0, 1.0, 1.0).is_err());
}

fn mc_channels(seed: u64, n: usize) -> ChannelSet {
    let mut r = rng(seed);
    ChannelSet::from_raw(cmat(&mut r, n, 2), cvec(&mut r, n), cvec(&mut r, n), cvec(&mut r, n)).unwrap()
}

#[test]
fn monte_carlo_zero_amplitudes() {
    let ch = mc_channels(51, 4);
    let c = StarCoefficients { beta_t: vec![0.0; 4], beta_r: vec![1.0; 4], theta_t: vec![1.0; 4], theta_r: vec![0.0; 4] };
    let (p, se) = sop_monte_carlo(&c, User::Iu, &ch, 1.0, 1.0, 1.0, 10_000, 3).unwrap();
    assert_eq!((p, se), (0.0, 0.0));
    assert!(sop_monte_carlo(&c, User::Iu, &ch, 1.0, 1.0, 1.0, 999, 3).is_err());
}

#[test]
fn monte_carlo_matches_closed_form() {
    for seed in 0..4 {
        let ch = mc_channels(60 + seed, 6);
        let c = random_coefficients(6, seed);
        for user in User::BOTH {
            let beta = match user {
                User::Iu => &c.beta_t,
                User::Ou => &c.beta_r,
            };
            let sp = SopParams::new(beta, ch.h_user_small(user), 1.0, 1.0, 0.4, 1.0).unwrap();
            let exact = sop_closed_form(&sp).unwrap();
            let (est, se) = sop_monte_carlo(&c, user, &ch, 1.0, 0.4, 1.0, 100_000, seed).unwrap();
            assert!((est - exact).abs() <= 3.0 * se.max(1e-6), "{user:?}: {est} vs {exact} (se {se})");
        }
    }
}

#[test]
fn outage_ignores_phases() {
    let ch = mc_channels(52, 5);
    let a = random_coefficients(5, 1);
    let b = StarCoefficients { theta_t: a.theta_t.iter().map(|t| t + 1.3).collect(), ..a.clone() };
    let sp = SopParams::new(&a.beta_t, ch.h_is(), 1.0, 1.0, 0.5, 1.0).unwrap();
    let sp_b = SopParams::new(&b.beta_t, ch.h_is(), 1.0, 1.0, 0.5, 1.0).unwrap();
    assert_eq!(sop_closed_form(&sp).unwrap(), sop_closed_form(&sp_b).unwrap());
    let (pa, sa) = sop_monte_carlo(&a, User::Iu, &ch, 1.0, 0.5, 1.0, 50_000, 8).unwrap();
    let (pb, sb) = sop_monte_carlo(&b, User::Iu, &ch, 1.0, 0.5, 1.0, 50_000, 9).unwrap();
    assert!((pa - pb).abs() <= 3.0 * (sa * sa + sb * sb).sqrt());
}

fn rates(gap_i: f64, gap_o: f64) -> RateConfig {
    RateConfig { r_c_iu: 2.0, r_s_iu: 2.0 - gap_i, r_c_ou: 1.0, r_s_ou: 1.0 - gap_o }
}

#[test]
fn minimal_power_hand_values() {
    let (pi, po) = optimal_power_stat(1.0, 1.0, 1.0, &rates(1.0, 1.0), [10.0, 10.0], DecodingOrder::IuFirst).unwrap();
    assert!(close(po, 1.0, 1e-15) && close(pi, 2.0, 1e-15));
    let (_, po) = optimal_power_stat(1.0, 1.0, 1.0, &rates(1.0, 0.0), [10.0, 10.0], DecodingOrder::IuFirst).unwrap();
    assert_eq!(po, 0.0);
    let err = optimal_power_stat(1.0, 1.0, 1.0, &rates(1.0, 1.0), [1.5, 10.0], DecodingOrder::IuFirst).unwrap_err();
    assert!(matches!(err, Error::Infeasible(_)));
    assert!(matches!(
        optimal_power_stat(0.0, 1.0, 1.0, &rates(1.0, 1.0), [10.0, 10.0], DecodingOrder::IuFirst),
        Err(Error::Degenerate(_))
    ));
}

#[test]
fn minimal_powers_are_tight() {
    let mut r = rng(53);
    for _ in 0..50 {
        let z = [uniform(&mut r, 0.1, 5.0), uniform(&mut r, 0.1, 5.0)];
        let noise = uniform(&mut r, 0.1, 2.0);
        let rc = rates(uniform(&mut r, 0.05, 1.5), uniform(&mut r, 0.05, 0.9));
        for order in DecodingOrder::BOTH {
            let (pi, po) = optimal_power_stat(z[0], z[1], noise, &rc, [1e6, 1e6], order).unwrap();
            let p = [pi, po];
            let (s, w) = (order.first(), order.second());
            let g = |u: User| rc.gap(u).exp2() - 1.0;
            let rx = |u: User| p[u.index()] * z[u.index()];
            let sinr_s = rx(s) / (rx(w) + noise);
            let sinr_w = rx(w) / noise;
            assert!(close(sinr_w, g(w), 1e-9));
            assert!(sinr_s >= g(s) * (1.0 - 1e-9));
            assert!(rx(s) >= rx(w) * (1.0 - 1e-12));
            // the binding branch holds with equality
            assert!(close(sinr_s, g(s), 1e-9) || close(rx(s), rx(w), 1e-9));
            // one percent less power on either user breaks a constraint
            let cut_w = 0.99 * rx(w) / noise < g(w);
            let p_s_cut = 0.99 * rx(s);
            let cut_s = p_s_cut / (rx(w) + noise) < g(s) || p_s_cut < rx(w);
            assert!(cut_w && cut_s);
        }
    }
}

#[test]
fn zero_redundancy_rejected() {
    let ch = mc_channels(54, 3);
    let sc = StatScenario::new(&ch, SurfaceLayout::star(3), 1.0).unwrap();
    let it = BeamformingIterate::initial(&sc.base.cascades, &sc.base.layout, 1e-3, 1).unwrap();
    let err = build_leakage_program(&sc, &it, [1.0, 1.0], Link::Noma(DecodingOrder::IuFirst), &rates(0.0, 0.5), 1e-3)
        .unwrap_err();
    assert!(matches!(err, Error::Construction(_)), "{err}");
}

#[test]
fn epigraph_matches_recomputed_leakage() {
    let ch = mc_channels(55, 4);
    let sc = StatScenario::new(&ch, SurfaceLayout::star(4), 1.0).unwrap();
    let rc = rates(1.0, 0.5);
    let link = Link::Noma(DecodingOrder::IuFirst);
    let it = BeamformingIterate::initial(&sc.base.cascades, &sc.base.layout, 1e-3, 2).unwrap();
    let prob = build_leakage_program(&sc, &it, [20.0, 20.0], link, &rc, 1e-3).unwrap();
    let sol = star_secrecy::conic::solve(&prob.program, &star_secrecy::conic::SolverOptions::default());
    assert_eq!(sol.status, star_secrecy::conic::SolveStatus::Optimal);
    let (next, v) = prob.decode(&sol.x, &it);
    let recomputed = max_leakage(&sc, &next, [20.0, 20.0], link, &rc);
    assert!((v - recomputed).abs() <= 1e-6 * (1.0 + v.abs()), "{v} vs {recomputed}");
}

#[test]
fn single_element_matches_amplitude_grid() {
    let one = |v: f64, i: f64| DVector::from_element(1, C64::new(v, i));
    let ch = ChannelSet::from_raw(DMatrix::from_element(1, 1, C64::new(1.0, 0.0)), one(1.0, 0.5), one(0.8, -0.2), one(0.3, 0.1))
        .unwrap();
    let sc = StatScenario::new(&ch, SurfaceLayout::star(1), 1.0).unwrap();
    let rc = rates(1.0, 0.5);
    let powers = [8.0, 6.0];
    let link = Link::Noma(DecodingOrder::IuFirst);
    let tol = Tolerances::default();
    let mut it = BeamformingIterate::initial(&sc.base.cascades, &sc.base.layout, tol.penalty_init, 4).unwrap();
    star_secrecy::fullcsi::warm_start(&mut it, &sc.base.scaled(powers), link);
    let res = two_layer_stat(&sc, powers, link, &rc, &tol, &it).unwrap();
    let got = max_leakage(&sc, &res.iterate, powers, link, &rc);

    let (qi, qo) = (sc.base.cascades.q_iu[(0, 0)].norm_sqr(), sc.base.cascades.q_ou[(0, 0)].norm_sqr());
    let g = [rc.gap(User::Iu).exp2() - 1.0, rc.gap(User::Ou).exp2() - 1.0];
    let (li, lo) = (ch.h_is()[0].norm_sqr() * powers[0] / g[0], ch.h_os()[0].norm_sqr() * powers[1] / g[1]);
    let mut best = f64::INFINITY;
    let steps = 1000;
    for i in 0..=steps {
        for j in 0..=(steps - i) {
            let (bt, br) = (i as f64 / steps as f64, j as f64 / steps as f64);
            let (ti, to) = (powers[0] * bt * qi, powers[1] * br * qo);
            if ti >= to && ti / (to + 1.0) >= g[0] && to >= g[1] {
                best = best.min((li * bt).max(lo * br));
            }
        }
    }
    assert!(best.is_finite());
    assert!(got <= best * (1.0 + 1e-3) && got >= best * (1.0 - 1e-2), "sca {got} vs grid {best}");
}

/// Default geometry with the eavesdropper a few meters from the surface, so outages are not negligible.
fn near_eve() -> SystemGeometry {
    SystemGeometry { eve_pos: [47.0, 8.0, 0.0], ..SystemGeometry::default() }
}

#[test]
fn outage_trace_and_design() {
    let radio = RadioConfig::default();
    let ch = sample_channels(&near_eve(), &radio, 3).unwrap();
    let rc = RateConfig::default();
    let out = extended_ahb(&ch, &radio, &rc, &Tolerances::default(), 3).unwrap();
    for w in out.trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "trace increased: {:?}", out.trace);
    }
    assert!(out.coefficients.validate().is_ok());
    assert!(out.p_iu <= radio.p_max_iu && out.p_ou <= radio.p_max_ou);
    assert_eq!(out.max_sop, out.sop[0].max(out.sop[1]));
    // the reported outage agrees with the closed form at the extracted amplitudes
    let ls = ch.large_scale();
    let sp = SopParams::new(&out.coefficients.beta_t, ch.h_user_small(User::Iu), ls.eve * ls.iu, rc.gap(User::Iu), out.p_iu, radio.noise_power)
        .unwrap();
    assert!(close(sop_closed_form(&sp).unwrap(), out.sop[0], 1e-9));
}

#[test]
fn lower_codeword_rate_lowers_outage() {
    let radio = RadioConfig { num_ris_elements: 4, num_bs_antennas: 2, ..RadioConfig::default() };
    let tol = Tolerances::default();
    let loose = RateConfig::default();
    let tight = RateConfig { r_c_iu: loose.r_c_iu - 0.05, r_c_ou: loose.r_c_ou - 0.05, ..loose };
    let (mut a, mut b) = (0.0, 0.0);
    for seed in 0..3 {
        let ch = sample_channels(&near_eve(), &radio, seed).unwrap();
        a += extended_ahb(&ch, &radio, &loose, &tol, seed).unwrap().max_sop;
        b += extended_ahb(&ch, &radio, &tight, &tol, seed).unwrap().max_sop;
    }
    assert!(b < a, "R_c lowered: {b} vs {a}");
}
