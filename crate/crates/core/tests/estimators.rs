//! Estimators on simulated panels, checked against population values.

use multigen::io::parse_panel_csv;
use multigen::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::path::Path;

fn latent(rho: f64, lambda: f64) -> ModelSpec {
    ModelSpec::LatentFactor(LatentFactorParams::new(rho, lambda))
}

fn within(estimate: f64, target: f64, se: f64, bands: f64) -> bool {
    (estimate - target).abs() <= bands * se
}

#[test]
fn parent_and_grandparent_slopes_match_population_values() {
    let ped = simulate(&latent(0.8, 0.7), &SimTopology::new(50_000, 3, 1, 11)).unwrap();
    let opts = PairOptions::in_generation(2);
    let one = beta_k_estimate(&ped, 1, &opts).unwrap();
    let b = one.coef("parent_y").unwrap();
    assert!(within(b, 0.448, one.se("parent_y").unwrap(), 3.0), "{b}");
    // Homoskedastic SE at 50k observations.
    let expected_se = ((1.0 - 0.448f64.powi(2)) / 50_000.0).sqrt();
    assert!((one.se("parent_y").unwrap() - expected_se).abs() < 2e-4);

    let two = multigen_regression(&ped, &[1, 2], &[], &opts).unwrap();
    let gp = duality_gp_coefficient(0.448, 0.3136).unwrap();
    let est = two.coef("grandparent_y").unwrap();
    assert!(within(est, gp, two.se("grandparent_y").unwrap(), 3.0), "{est} vs {gp}");
    assert!(two.r_squared > one.r_squared);
}

#[test]
fn lag_one_multigen_regression_is_the_beta_k_estimate() {
    let ped = simulate(&latent(0.8, 0.7), &SimTopology::new(2_000, 4, 2, 1)).unwrap();
    let opts = PairOptions::default();
    assert_eq!(
        beta_k_estimate(&ped, 1, &opts).unwrap(),
        multigen_regression(&ped, &[1], &[], &opts).unwrap()
    );
}

#[test]
fn deepest_lag_on_a_two_generation_panel() {
    let ped = simulate(&latent(0.8, 0.7), &SimTopology::new(2_000, 2, 1, 2)).unwrap();
    let k = ped.generation_count() - 1;
    assert_eq!(k, 1);
    assert!(beta_k_estimate(&ped, k, &PairOptions::default()).is_ok());
    assert!(matches!(
        beta_k_estimate(&ped, 2, &PairOptions::default()),
        Err(Error::InsufficientData(_))
    ));
}

#[test]
fn sibling_slope_with_shared_shock() {
    let p = LatentFactorParams::new(0.8, 0.7).with_sibling_shocks(0.4, 0.0);
    let ped = simulate(&ModelSpec::LatentFactor(p), &SimTopology::new(25_000, 2, 2, 4)).unwrap();
    let r = sibling_regression(&ped, false, &PairOptions::in_generation(1)).unwrap();
    assert_eq!(r.n_obs, 50_000);
    // Each unordered pair enters twice, so the reported SE is too small by
    // about sqrt(2).
    let se = r.se("sibling_y").unwrap() * 2f64.sqrt();
    let est = r.coef("sibling_y").unwrap();
    assert!(within(est, 0.4576, se, 3.0), "{est}");
}

#[test]
fn iid_outcomes_have_no_slope() {
    let ped = simulate(&latent(0.8, 0.0), &SimTopology::new(30_000, 2, 4, 9)).unwrap();
    let r = beta_k_estimate(&ped, 1, &PairOptions::default()).unwrap();
    assert!(within(r.coef("parent_y").unwrap(), 0.0, r.se("parent_y").unwrap(), 3.0));
    let g = group_level_estimate(&ped, (0, 1)).unwrap();
    let (name, est) = g.coefficients.iter().next().unwrap();
    assert!(within(*est, 0.0, g.se(name).unwrap(), 3.0), "{est}");
}

#[test]
fn single_member_groups_reduce_to_the_parent_slope() {
    let ped = simulate(&latent(0.8, 0.7), &SimTopology::new(20_000, 2, 1, 6)).unwrap();
    let g = group_level_estimate(&ped, (0, 1)).unwrap();
    let b = beta_k_estimate(&ped, 1, &PairOptions::in_generation(1)).unwrap();
    let (name, gs) = g.coefficients.iter().next().unwrap();
    assert!((gs - b.coef("parent_y").unwrap()).abs() < 1e-12);
    assert!(within(*gs, 0.448, g.se(name).unwrap(), 3.0));
}

#[test]
fn noise_regressor_explains_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 50_000;
    let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let r = ols(&y, &[("noise", &x)]).unwrap();
    assert!(r.r_squared <= 0.001, "{}", r.r_squared);
    assert!(r2_of(&r) <= 0.001);
}

#[test]
fn mother_control_shrinks_grandparent_slope_under_sorting() {
    let spec = ModelSpec::Assortative(AssortativeParams::new(0.8, 0.7, 0.8));
    let ped = simulate(&spec, &SimTopology::new(20_000, 3, 1, 17)).unwrap();
    let opts = PairOptions::in_generation(2);
    let plain = multigen_regression(&ped, &[1, 2], &[], &opts).unwrap();
    let ctrl = multigen_regression(&ped, &[1, 2], &[Control::MotherY], &opts).unwrap();
    assert!(ctrl.coef("grandparent_y").unwrap() < plain.coef("grandparent_y").unwrap());
    assert!(ctrl.coef("mother_y").unwrap() > 0.0);
}

#[test]
fn excess_persistence_shows_up_in_estimates() {
    let ped = simulate(&latent(0.8, 0.7), &SimTopology::new(30_000, 3, 1, 23)).unwrap();
    let opts = PairOptions::in_generation(2);
    let b1 = beta_k_estimate(&ped, 1, &opts).unwrap().coef("parent_y").unwrap();
    let b2 = beta_k_estimate(&ped, 2, &opts).unwrap().coef("grandparent_y").unwrap();
    assert!(b2 > b1 * b1);
}

#[test]
fn fit_flags_multiplicity_moments() {
    let p = MultiplicityParams::new(0.3, 0.7, 0.9, 0.5);
    let m = multiplicity_moments(&p, 6).unwrap();
    let fit = fit_latent_factor(&m).unwrap();
    assert!(fit.misfit);
    assert!(fit.residual_norm > 1e-6);
}

#[test]
fn panel_round_trip_preserves_estimates() {
    let spec = ModelSpec::Assortative(AssortativeParams::new(0.8, 0.7, 0.5));
    let ped = simulate(&spec, &SimTopology::new(3_000, 3, 2, 31)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for format in [Format::Csv, Format::Json] {
        let path = dir.path().join(format!("panel.{format:?}").to_lowercase());
        export_panel(&ped, &path, format, false, None).unwrap();
        let back = load_panel(&path, format).unwrap();
        let opts = PairOptions::in_generation(2);
        assert_eq!(
            multigen_regression(&ped, &[1, 2], &[Control::MotherY], &opts).unwrap(),
            multigen_regression(&back, &[1, 2], &[Control::MotherY], &opts).unwrap()
        );
        assert_eq!(
            sibling_regression(&ped, true, &PairOptions::default()).unwrap(),
            sibling_regression(&back, true, &PairOptions::default()).unwrap()
        );
        assert_eq!(
            group_level_estimate(&ped, (1, 2)).unwrap(),
            group_level_estimate(&back, (1, 2)).unwrap()
        );
    }
}

#[test]
fn controls_need_their_columns() {
    let text = "person_id,dynasty_id,generation,father_id,y\n\
                0,0,0,,0.5\n1,0,1,0,0.1\n2,0,2,1,-0.3\n\
                3,1,0,,-1.0\n4,1,1,3,0.7\n5,1,2,4,0.2\n";
    let ped = parse_panel_csv(text, Path::new("bare.csv")).unwrap();
    let opts = PairOptions::default();
    for (control, column) in [(Control::MotherY, "mother_id"), (Control::SpouseY, "spouse_id")] {
        match multigen_regression(&ped, &[1], &[control], &opts) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, column),
            other => panic!("expected missing {column}, got {other:?}"),
        }
    }
    let maternal = PairOptions {
        line: AncestorLine::Maternal,
        ..PairOptions::default()
    };
    assert!(matches!(beta_k_estimate(&ped, 1, &maternal), Err(Error::MissingColumn(_))));
}
