mod common;

use common::{exp, kaplan_meier, lexis, ltrc};
use lifespan::diagnostics::{product_limit_cdf, qq_envelope, qq_positions};
use lifespan::rng::stream;
use lifespan::{LifetimeModel, Scheme};
use proptest::prelude::*;
use rand::Rng;

fn rounded_draws(n: usize, seed: u64, censor_at: Option<f64>) -> Vec<(f64, bool)> {
    let mut rng = stream(seed, 0);
    (0..n)
        .map(|_| {
            let x = ((-rng.random::<f64>().ln() * 1.4) * 12.0).round().max(1.0) / 12.0;
            let c = censor_at.map(|m| (rng.random::<f64>() * m * 12.0).round().max(1.0) / 12.0);
            match c {
                Some(c) if c < x => (c, false),
                _ => (x, true),
            }
        })
        .collect()
}

#[test]
fn untruncated_uncensored_is_the_ecdf() {
    let obs = rounded_draws(300, 1, None);
    let s = ltrc(&obs.iter().map(|&(x, _)| (x, 0.0, true)).collect::<Vec<_>>());
    let pl = product_limit_cdf(&s).unwrap();
    let n = obs.len() as f64;
    for (j, &t) in pl.times.iter().enumerate() {
        let ecdf = obs.iter().filter(|o| o.0 <= t).count() as f64 / n;
        assert!((pl.cdf[j] - ecdf).abs() < 1e-12, "{} vs {ecdf}", pl.cdf[j]);
    }
    assert!((pl.cdf.last().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn censoring_only_is_kaplan_meier() {
    let obs = rounded_draws(400, 2, Some(4.0));
    assert!(obs.iter().any(|o| !o.1));
    let s = ltrc(&obs.iter().map(|&(x, d)| (x, 0.0, d)).collect::<Vec<_>>());
    let pl = product_limit_cdf(&s).unwrap();
    let km = kaplan_meier(&obs);
    assert_eq!(pl.times.len(), km.len());
    for (j, (t, f)) in km.iter().enumerate() {
        assert_eq!(pl.times[j], *t);
        assert!((pl.cdf[j] - f).abs() < 1e-12);
    }
}

#[test]
fn plotting_positions_scale_with_the_data() {
    let s = lexis(Scheme::LeftTruncRightCens, 105.0, 300, &exp(1.45), 3).sample();
    let c = 2.5;
    let mut t = s.clone();
    for o in &mut t.obs {
        o.excess *= c;
        o.lower *= c;
        o.upper *= c;
    }
    let a = product_limit_cdf(&s).unwrap();
    let b = product_limit_cdf(&t).unwrap();
    for (x, y) in a.cdf.iter().zip(&b.cdf) {
        assert!((x - y).abs() < 1e-12);
    }
    let qa = qq_positions(&s, &LifetimeModel::Exponential { sigma: 1.4 }).unwrap();
    let qb = qq_positions(&t, &LifetimeModel::Exponential { sigma: 1.4 * c }).unwrap();
    for (p, q) in qa.iter().zip(&qb) {
        assert!((q.position - c * p.position).abs() < 1e-9 * (1.0 + q.position));
        assert!((q.observed - c * p.observed).abs() < 1e-9 * (1.0 + q.observed));
    }
}

#[test]
fn envelope_narrows_with_more_data() {
    let width = |n: usize| {
        let s = lexis(Scheme::LeftTruncRightCens, 105.0, n, &exp(1.45), 4).sample();
        let e = qq_envelope(&s, &exp(1.45), 100, 7).unwrap();
        let mut w: Vec<f64> = (0..e.points.len())
            .filter(|&i| e.points[i].position.is_finite())
            .map(|i| e.hi_pointwise[i] - e.lo_pointwise[i])
            .collect();
        w.sort_by(f64::total_cmp);
        w[w.len() / 2]
    };
    assert!(width(800) < width(100));
}

#[test]
fn envelope_is_seeded() {
    let s = lexis(Scheme::LeftTruncRightCens, 105.0, 150, &exp(1.45), 5).sample();
    let a = qq_envelope(&s, &exp(1.45), 50, 1).unwrap();
    // NaN positions make PartialEq useless here
    assert_eq!(format!("{a:?}"), format!("{:?}", qq_envelope(&s, &exp(1.45), 50, 1).unwrap()));
    assert_ne!(a.lo_pointwise, qq_envelope(&s, &exp(1.45), 50, 2).unwrap().lo_pointwise);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn product_limit_is_a_cdf(seed in 0u64..10_000, n in 5usize..300) {
        let s = lexis(Scheme::LeftTruncRightCens, 105.0, n, &exp(1.45), seed).sample();
        if let Ok(pl) = product_limit_cdf(&s) {
            prop_assert!(pl.cdf.iter().all(|c| (0.0..=1.0).contains(c)));
            prop_assert!(pl.cdf.windows(2).all(|w| w[1] >= w[0]));
            prop_assert!(pl.times.windows(2).all(|w| w[1] > w[0]));
            prop_assert!(pl.at_risk.iter().zip(&pl.deaths).all(|(r, d)| d <= r));
        }
    }
}
