mod common;

use common::{day_grid_gpd, exp, lexis, oracle_fit};
use lifespan::hazard::{
    bootstrap_hazard_envelope, fit_spline_hazard, fit_spline_with_knots, homogeneity_test, local_hazard_blocks, spline_loglik,
    yearly_blocks, SplineHazardModel, DEFAULT_X_MAX_DAYS,
};
use lifespan::lifetimes::Exceedance;
use lifespan::optim::OptimOptions;
use lifespan::{ExcessSample, Scheme};

fn data(n: usize, seed: u64) -> ExcessSample {
    lexis(Scheme::LeftTruncRightCens, 105.0, n, &exp(1.45), seed).sample()
}

#[test]
fn no_knots_is_the_day_grid_gpd() {
    for seed in 1..4 {
        let s = data(500, seed);
        let fit = fit_spline_with_knots(&s, &[], DEFAULT_X_MAX_DAYS, &OptimOptions::default()).unwrap();
        let (sigma, gamma) = oracle_fit(&s, DEFAULT_X_MAX_DAYS);
        assert!((fit.model.sigma - sigma).abs() < 1e-6, "{} vs {sigma}", fit.model.sigma);
        assert!((fit.model.gamma - gamma).abs() < 1e-6, "{} vs {gamma}", fit.model.gamma);
        let oracle = day_grid_gpd(&s, sigma, gamma, DEFAULT_X_MAX_DAYS);
        assert!((fit.loglik - oracle).abs() < 1e-6 * oracle.abs());
    }
}

#[test]
fn likelihood_matches_the_oracle_off_the_optimum() {
    let s = data(300, 9);
    let m = SplineHazardModel { sigma: 1.3, gamma: 0.04, knots: vec![], coefficients: vec![], base_age: 105.0, x_max_days: DEFAULT_X_MAX_DAYS };
    let (ll, _) = spline_loglik(&s, &m).unwrap();
    let oracle = day_grid_gpd(&s, 1.3, 0.04, DEFAULT_X_MAX_DAYS);
    assert!((ll - oracle).abs() < 1e-9 * oracle.abs());
}

#[test]
fn gradient_matches_finite_differences() {
    let s = data(400, 4);
    let m = SplineHazardModel {
        sigma: 1.4,
        gamma: 0.02,
        knots: vec![1.0, 2.5, 4.0],
        coefficients: vec![0.001, -0.0005, 0.0002],
        base_age: 105.0,
        x_max_days: DEFAULT_X_MAX_DAYS,
    };
    let (_, g) = spline_loglik(&s, &m).unwrap();
    let eval = |i: usize, h: f64| {
        let mut q = m.clone();
        match i {
            0 => q.sigma += h,
            1 => q.gamma += h,
            k => q.coefficients[k - 2] += h,
        }
        spline_loglik(&s, &q).unwrap().0
    };
    for (i, gi) in g.iter().enumerate() {
        let h = 1e-6;
        let fd = (eval(i, h) - eval(i, -h)) / (2.0 * h);
        assert!((fd - gi).abs() < 1e-4 * (1.0 + gi.abs()), "{i}: {fd} vs {gi}");
    }
}

#[test]
fn pmf_is_a_distribution_and_survival_decreases() {
    let s = data(600, 5);
    let fit = fit_spline_hazard(&s, 5, 11).unwrap();
    let (pmf, tail) = fit.model.pmf();
    assert!((pmf.iter().sum::<f64>() + tail - 1.0).abs() < 1e-10);
    assert!(pmf.iter().all(|p| *p >= 0.0));
    let surv = fit.model.survival();
    assert!(surv.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(fit, fit_spline_hazard(&s, 5, 11).unwrap());
    assert_eq!(fit.model.knots.len(), 5);
    assert!(fit.model.knots.iter().all(|k| (0.5..5.5).contains(k)));
}

#[test]
fn doubly_truncated_data_are_refused() {
    let s = lexis(Scheme::DoublyTruncated, 105.0, 200, &exp(1.45), 1).sample();
    assert!(fit_spline_hazard(&s, 2, 1).is_err());
    assert!(local_hazard_blocks(&s, &yearly_blocks(105.0, 110.0), 0.95).is_err());
}

#[test]
fn splitting_a_block_splits_its_counts() {
    let s = data(800, 6);
    let whole = local_hazard_blocks(&s, &[(106.0, 108.0)], 0.95).unwrap();
    let parts = local_hazard_blocks(&s, &[(106.0, 107.0), (107.0, 108.0)], 0.95).unwrap();
    assert!((whole[0].exposure - parts[0].exposure - parts[1].exposure).abs() < 1e-9);
    assert_eq!(whole[0].deaths, parts[0].deaths + parts[1].deaths);
    let all = local_hazard_blocks(&s, &yearly_blocks(105.0, 112.0), 0.95).unwrap();
    let exposure: f64 = all.iter().map(|b| b.exposure).sum();
    let total: f64 = s.obs.iter().map(|o| o.excess - o.lower).sum();
    assert!((exposure - total).abs() < 1e-8);
    assert_eq!(all.iter().map(|b| b.deaths).sum::<usize>(), s.n_deaths());
}

#[test]
fn constant_hazard_passes_homogeneity() {
    let mut accepted = 0;
    let runs = 200;
    for seed in 0..runs {
        let s = data(415, 1000 + seed);
        let blocks = local_hazard_blocks(&s, &yearly_blocks(105.0, 110.0), 0.95).unwrap();
        if homogeneity_test(&blocks).unwrap().p_value > 0.05 {
            accepted += 1;
        }
    }
    assert!(accepted as f64 >= 0.9 * runs as f64, "{accepted}/{runs}");
}

#[test]
fn cohorts_with_different_scales_separate() {
    let young = data(1500, 7);
    let old = lexis(Scheme::LeftTruncRightCens, 105.0, 1500, &exp(1.1), 8).sample();
    let tag = |s: &ExcessSample, c: i32| s.obs.iter().map(|o| Exceedance { cohort: c, ..*o }).collect::<Vec<_>>();
    let mut obs = tag(&young, 1910);
    obs.extend(tag(&old, 1900));
    let both = ExcessSample { scheme: Scheme::LeftTruncRightCens, threshold: 105.0, obs };
    let ages = yearly_blocks(105.0, 108.0);
    let a = local_hazard_blocks(&both.filter(|o| o.cohort == 1910), &ages, 0.95).unwrap();
    let b = local_hazard_blocks(&both.filter(|o| o.cohort == 1900), &ages, 0.95).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(x.hazard < y.hazard);
        assert!((x.hazard - 1.0 / 1.45).abs() < 4.0 * (x.upper - x.lower) / 3.92);
        assert!((y.hazard - 1.0 / 1.1).abs() < 4.0 * (y.upper - y.lower) / 3.92);
    }
    let pooled = local_hazard_blocks(&both, &ages, 0.95).unwrap();
    assert!(homogeneity_test(&pooled).is_ok());
}

#[test]
fn bootstrap_bands_are_nested_and_reproducible() {
    let s = data(300, 3);
    let b = bootstrap_hazard_envelope(&s, 100, 2, 5).unwrap();
    assert_eq!(b, bootstrap_hazard_envelope(&s, 100, 2, 5).unwrap());
    assert_eq!(b.hazard.len(), DEFAULT_X_MAX_DAYS);
    for i in 0..b.days.len() {
        assert!(b.lo_simultaneous[i] <= b.lo_pointwise[i] && b.lo_pointwise[i] <= b.hi_pointwise[i]);
        assert!(b.hi_pointwise[i] <= b.hi_simultaneous[i]);
    }
    assert!(b.support_days > 0 && b.support_days <= DEFAULT_X_MAX_DAYS);
    assert!(bootstrap_hazard_envelope(&s, 0, 2, 5).is_err());
}
