use num_complex::Complex64;
use pairwell_core::resonance::{
    find_bound_states, find_resonances, fit_energy_vs_height, matching_factors, matching_residual,
    region_momenta, symmetric_residual, transmission_coefficient, transmission_levels,
};
use pairwell_core::{WellParams, SPEED_OF_LIGHT};
use proptest::prelude::*;

const C: f64 = SPEED_OF_LIGHT;

/// Independent residual: momenta in a.u. straight from the dispersion
/// relations, evanescent roots chosen as +iκ explicitly, and the
/// exponential form of the matching condition.
fn oracle_residual(e: f64, v1: f64, v2: f64, d: f64) -> f64 {
    let mom = |x: f64| {
        let s = C * C * (x * x - 1.0);
        if s >= 0.0 {
            Complex64::new(s.sqrt(), 0.0)
        } else {
            Complex64::new(0.0, (-s).sqrt())
        }
    };
    let (p1, p2, p3) = (mom(e), mom(e + v2), mom(e + v2 - v1));
    let c2 = C * C;
    let g = p1 * C / (c2 * (e + 1.0)) * (c2 * (e + v2 + 1.0)) / (p2 * C);
    let t = p2 * C / (c2 * (e + v2 + 1.0)) * (c2 * (e + v2 - v1 + 1.0)) / (p3 * C);
    let i = Complex64::new(0.0, 1.0);
    let f =
        (g + 1.0) * (t + 1.0) * (-i * p2 * d).exp() + (g - 1.0) * (t - 1.0) * (i * p2 * d).exp();
    f.re
}

fn oracle_roots(v1: f64, v2: f64, d: f64, points: usize) -> Vec<f64> {
    let lo = (1.0 - v2).max(v1 - v2 - 1.0).max(-1.0);
    let hi = (v1 - v2 + 1.0).min(1.0);
    if lo >= hi {
        return vec![];
    }
    let xs: Vec<f64> = (1..points)
        .map(|k| lo + (hi - lo) * k as f64 / points as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| oracle_residual(x, v1, v2, d)).collect();
    (0..xs.len() - 1)
        .filter(|&k| ys[k] * ys[k + 1] < 0.0)
        .map(|k| {
            // Linear interpolation inside the oracle cell.
            xs[k] - ys[k] * (xs[k + 1] - xs[k]) / (ys[k + 1] - ys[k])
        })
        .collect()
}

#[test]
fn bound_states_match_dense_scan() {
    let p = WellParams::sharp(1.5, 0.25, 0.2).unwrap();
    let oracle = oracle_roots(1.5, 0.25, 0.2, 1_000_000);
    let found = find_bound_states(&p).unwrap();
    assert_eq!(found.len(), oracle.len());
    for (s, o) in found.iter().zip(&oracle) {
        assert!((s.energy.re - o).abs() < 1e-6, "{} vs {o}", s.energy.re);
    }
}

#[test]
fn single_root_just_above_threshold() {
    let (v2, d) = (0.25, 0.02);
    let count = |v1: f64| oracle_roots(v1, v2, d, 200_000).len();
    assert_eq!(count(0.02), 0);
    assert_eq!(count(0.1), 1);
    let (mut a, mut b) = (0.02, 0.1);
    for _ in 0..30 {
        let m = 0.5 * (a + b);
        if count(m) == 0 {
            a = m;
        } else {
            b = m;
        }
    }
    let above = WellParams::sharp(b + 1e-3, v2, d).unwrap();
    let below = WellParams::sharp(a - 1e-3, v2, d).unwrap();
    assert_eq!(find_bound_states(&above).unwrap().len(), 1);
    assert_eq!(find_bound_states(&below).unwrap().len(), 0);
}

#[test]
fn level_count_grows_with_width() {
    let mut last = 0;
    for d in [0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4] {
        let n = find_bound_states(&WellParams::sharp(1.5, 0.25, d).unwrap())
            .unwrap()
            .len();
        assert_eq!(n, oracle_roots(1.5, 0.25, d, 200_000).len(), "d = {d}");
        assert!(n >= last, "d = {d}: {n} < {last}");
        last = n;
    }
}

#[test]
fn symmetric_roots_agree_between_residual_forms() {
    let p = WellParams::sharp(3.0, 3.0, 10.0 / C).unwrap();
    let report = find_resonances(&p, None).unwrap();
    assert_eq!(report.solutions.len(), 5);
    for s in &report.solutions {
        // Newton stores |Im E|; the root itself lies at the raw sign.
        let e = [s.energy, s.energy.conj()]
            .into_iter()
            .min_by(|a, b| {
                matching_residual(*a, &p)
                    .norm()
                    .total_cmp(&matching_residual(*b, &p).norm())
            })
            .unwrap();
        let polished =
            pairwell_core::resonance::newton_root(|z| symmetric_residual(z, &p), e).unwrap();
        assert!((polished - e).norm() < 1e-10, "{e} vs {polished}");
    }
}

#[test]
fn transmission_peaks_bracket_continuation() {
    let p = WellParams::sharp(3.0, 3.0, 10.0 / C).unwrap();
    let peaks = transmission_levels(&p).unwrap();
    let roots = find_resonances(&p, None).unwrap().solutions;
    assert_eq!(peaks.len(), roots.len());
    for (t, r) in peaks.iter().zip(&roots) {
        assert!((t.energy.re - r.energy.re).abs() / t.energy.re.abs() < 1.5e-3);
        let hw = t.fwhm_half.unwrap();
        assert!((r.energy.im - hw).abs() / hw < 0.06);
        assert!((transmission_coefficient(t.energy.re, &p).unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn fit_tracks_every_level_and_matches_continuation() {
    let t = WellParams::sharp(1.5, 0.25, 0.2).unwrap();
    let samples = pairwell_core::resonance::default_fit_samples();
    let roots = find_resonances(&t.with_v1(2.5), None).unwrap().solutions;
    for level in 2..=7 {
        let fit = fit_energy_vs_height(level, &t, &samples).unwrap();
        assert!(fit.correlation > 0.99 && fit.correlation <= 1.0);
        let resid: f64 = samples
            .iter()
            .zip(&fit.energies)
            .map(|(v, e)| (e - fit.intercept - fit.slope * v).powi(2))
            .sum::<f64>()
            / samples.len() as f64;
        assert!(resid.sqrt() < 1e-4);
        let cont = roots.iter().find(|r| r.level_index == level).unwrap();
        let e_fit = pairwell_core::resonance::extrapolate_level(&fit, 2.5);
        assert!((e_fit - cont.energy.re).abs() < 1e-3, "level {level}");
    }
}

proptest! {
    #[test]
    fn momenta_satisfy_dispersion(re in -3.0f64..3.0, im in -0.5f64..0.5, v1 in 0.0f64..4.0, v2 in 0.0f64..3.0) {
        let p = WellParams::sharp(v1, v2, 0.2).unwrap();
        let e = Complex64::new(re, im);
        let m = region_momenta(e, &p);
        let c2 = C * C;
        for (pk, x) in [(m.p1, e), (m.p2, e + v2), (m.p3, e + v2 - v1)] {
            let want = c2 * (x * x - 1.0);
            prop_assert!((pk * pk - want).norm() <= 1e-9 * want.norm().max(c2));
        }
    }

    #[test]
    fn symmetric_well_has_reciprocal_factors(v in 0.05f64..1.99, x in -0.99f64..0.99) {
        let p = WellParams::sharp(v, v, 0.1).unwrap();
        let f = matching_factors(Complex64::new(x, 0.0), &p);
        prop_assert!((f.gamma * f.tau - 1.0).norm() < 1e-12);
    }

    #[test]
    fn subcritical_residual_is_real_in_the_window(v1 in 1.0f64..1.99, x in 0.76f64..0.999) {
        let p = WellParams::sharp(v1, 0.25, 0.2).unwrap();
        let f = matching_residual(Complex64::new(x, 0.0), &p);
        prop_assert!(f.im.abs() <= 1e-9 * f.norm().max(1.0));
        let o = oracle_residual(x, v1, 0.25, 0.2);
        prop_assert!((f.re - o).abs() <= 1e-8 * o.abs().max(1.0));
    }
}
