//! Properties of the closed-form moments, checked against independent
//! computations.

use multigen::*;
use proptest::prelude::*;

/// Grandparent coefficient from the 2x2 normal equations of a regression of
/// child on (parent, grandparent), solved by Cramer's rule.
fn normal_equations_gp(b1: f64, b2: f64) -> f64 {
    // [1 b1; b1 1] [bp; bgp] = [b1; b2]
    let det = 1.0 - b1 * b1;
    (1.0 * b2 - b1 * b1) / det
}

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(64)
}

fn latent() -> impl Strategy<Value = LatentFactorParams> {
    (0.05f64..0.99, 0.0f64..0.99).prop_map(|(r, l)| LatentFactorParams::new(r, l))
}

fn ar2() -> impl Strategy<Value = GrandparentAR2Params> {
    (-0.9f64..0.9, -0.9f64..0.9)
        .prop_map(|(p, g)| GrandparentAR2Params::new(p, g))
        .prop_filter("stationary", |p| {
            p.is_stationary() && ModelSpec::GrandparentAR2(p.clone()).check().is_ok()
        })
}

fn multiplicity() -> impl Strategy<Value = MultiplicityParams> {
    (0.01f64..0.98, 0.0f64..1.0, 0.0f64..0.99, 0.0f64..0.99)
        .prop_map(|(r1, frac, l1, l2)| MultiplicityParams::new(r1, frac * (1.0 - r1), l1, l2))
        .prop_filter("valid", |p| ModelSpec::Multiplicity(p.clone()).check().is_ok())
}

fn assortative() -> impl Strategy<Value = AssortativeParams> {
    (0.05f64..0.99, 0.0f64..0.99, 0.0f64..0.99).prop_map(|(r, l, m)| AssortativeParams::new(r, l, m))
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn duality_matches_normal_equations_latent(p in latent()) {
        let m = latent_factor_moments(&p, 2).unwrap();
        let (b1, b2) = (m.beta(1).unwrap(), m.beta(2).unwrap());
        prop_assert!((duality_gp_coefficient(b1, b2).unwrap() - normal_equations_gp(b1, b2)).abs() < 1e-12);
    }

    #[test]
    fn duality_matches_normal_equations_ar2(p in ar2()) {
        let m = ar2_moments(&p, 2).unwrap();
        let (b1, b2) = (m.beta(1).unwrap(), m.beta(2).unwrap());
        let gp = duality_gp_coefficient(b1, b2).unwrap();
        prop_assert!((gp - normal_equations_gp(b1, b2)).abs() < 1e-12);
        // In the AR(2) model the population grandparent coefficient is the
        // structural one.
        prop_assert!((gp - p.gamma_gp).abs() < 1e-12);
    }

    #[test]
    fn duality_matches_normal_equations_multiplicity(p in multiplicity()) {
        let m = multiplicity_moments(&p, 2).unwrap();
        let (b1, b2) = (m.beta(1).unwrap(), m.beta(2).unwrap());
        prop_assert!((duality_gp_coefficient(b1, b2).unwrap() - normal_equations_gp(b1, b2)).abs() < 1e-12);
    }

    #[test]
    fn duality_matches_normal_equations_assortative(p in assortative()) {
        let m = assortative_moments(&p, 2).unwrap();
        let (b1, b2) = (m.beta(1).unwrap(), m.beta(2).unwrap());
        prop_assert!((duality_gp_coefficient(b1, b2).unwrap() - normal_equations_gp(b1, b2)).abs() < 1e-12);
    }

    #[test]
    fn jensen_gap_is_non_positive(r1 in 0.01f64..0.99, l1 in 0.0f64..0.99, l2 in 0.0f64..0.99) {
        let p = MultiplicityParams::new(r1, 1.0 - r1, l1, l2);
        let d = multiplicity_extrapolation_error(&p).unwrap();
        prop_assert!(d <= 0.0);
        prop_assert!((d - r1 * (r1 - 1.0) * (l1 - l2).powi(2)).abs() < 1e-12);
        // Same quantity straight from the moments.
        let m = multiplicity_moments(&p, 2).unwrap();
        let b1 = m.beta(1).unwrap();
        prop_assert!((d - (b1 * b1 - m.beta(2).unwrap())).abs() < 1e-12);
    }

    #[test]
    fn latent_excess_persistence(p in (0.05f64..0.95, 0.05f64..0.99).prop_map(|(r, l)| LatentFactorParams::new(r, l))) {
        let m = latent_factor_moments(&p, 2).unwrap();
        let b1 = m.beta(1).unwrap();
        prop_assert!(m.beta(2).unwrap() > b1 * b1);
        prop_assert!(latent_factor_extrapolation_error(&p).unwrap() < 0.0);
    }

    #[test]
    fn cousin_exceeds_squared_sibling(p in (0.05f64..0.95, 0.1f64..0.99).prop_map(|(r, l)| LatentFactorParams::new(r, l))) {
        let m = latent_factor_moments(&p, 1).unwrap();
        let (sib, cousin) = (m.sibling.unwrap(), m.cousin.unwrap());
        prop_assert!(cousin > sib * sib);
    }

    #[test]
    fn correlations_decay_monotonically(p in (0.05f64..0.99, 0.01f64..0.99).prop_map(|(r, l)| LatentFactorParams::new(r, l))) {
        let m = latent_factor_moments(&p, 20).unwrap();
        for k in 1..20 {
            prop_assert!(m.beta(k + 1).unwrap() < m.beta(k).unwrap());
        }
    }

    #[test]
    fn assortative_correlations_rise_with_m(r in 0.05f64..0.99, l in 0.05f64..0.99, m1 in 0.0f64..0.98, dm in 0.001f64..0.5) {
        let m2 = (m1 + dm).min(0.99);
        prop_assume!(m2 > m1);
        let lo = assortative_moments(&AssortativeParams::new(r, l, m1), 7).unwrap();
        let hi = assortative_moments(&AssortativeParams::new(r, l, m2), 7).unwrap();
        for k in 1..=7 {
            prop_assert!(hi.beta(k).unwrap() > lo.beta(k).unwrap());
        }
        prop_assert!(hi.spousal.unwrap() > lo.spousal.unwrap());
    }

    #[test]
    fn fit_inverts_latent_moments(r2 in 0.05f64..1.0, l in 0.05f64..0.95) {
        let p = LatentFactorParams::new(r2.sqrt(), l);
        let exact = fit_latent_factor(&latent_factor_moments(&p, 2).unwrap()).unwrap();
        prop_assert!((exact.rho_sq - r2).abs() < 1e-12, "{} vs {}", exact.rho_sq, r2);
        prop_assert!((exact.lambda - l).abs() < 1e-12);
        prop_assert!(exact.residual_norm < 1e-12 && !exact.misfit);
    }

    #[test]
    fn nonlinear_fit_recovers_consistent_moments(r2 in 0.1f64..1.0, l in 0.1f64..0.9) {
        let p = LatentFactorParams::new(r2.sqrt(), l);
        let fit = fit_latent_factor(&latent_factor_moments(&p, 6).unwrap()).unwrap();
        prop_assert!((fit.rho_sq - r2).abs() < 1e-7, "{} vs {}", fit.rho_sq, r2);
        prop_assert!((fit.lambda - l).abs() < 1e-7);
        prop_assert!(!fit.misfit);
    }

    #[test]
    fn ar2_moments_satisfy_yule_walker(p in ar2()) {
        let m = ar2_moments(&p, 8).unwrap();
        let b = |k: u32| if k == 0 { 1.0 } else { m.beta(k).unwrap() };
        for k in 1..=8 {
            // Symmetry: beta_{-1} = beta_1.
            let lag2 = if k == 1 { b(1) } else { b(k - 2) };
            prop_assert!((b(k) - (p.gamma_p * b(k - 1) + p.gamma_gp * lag2)).abs() < 1e-12);
        }
        let unit = p.gamma_p * b(1) + p.gamma_gp * b(2) + p.shock_variance();
        prop_assert!((unit - 1.0).abs() < 1e-12);
    }
}

#[test]
fn figure_values() {
    let lf = latent_factor_moments(&LatentFactorParams::new(0.8, 0.7), 7).unwrap();
    assert!((lf.beta(1).unwrap() - 0.448).abs() < 1e-12);
    assert!((lf.beta(2).unwrap() - 0.3136).abs() < 1e-12);
    let shared = latent_factor_moments(&LatentFactorParams::new(0.8, 0.7).with_sibling_shocks(0.4, 0.0), 1).unwrap();
    assert!((shared.sibling.unwrap() - 0.4576).abs() < 1e-12);
    let d = multiplicity_extrapolation_error(&MultiplicityParams::new(0.3, 0.7, 0.9, 0.5)).unwrap();
    assert!((d + 0.0336).abs() < 1e-12);
    for (m, b1) in [(0.0, 0.224), (0.5, 0.336), (0.8, 0.4032)] {
        let a = assortative_moments(&AssortativeParams::new(0.8, 0.7, m), 1).unwrap();
        assert!((a.beta(1).unwrap() - b1).abs() < 1e-12);
    }
    assert!((duality_gp_coefficient(0.448, 0.3136).unwrap() - 0.141_244_294_979_582).abs() < 1e-14);
}
