//! Acceptance criteria, one PASS/FAIL line each.
//!
//! `ACCEPTANCE_ONLY=1,5,11` runs a subset. `ACCEPTANCE_STRICT=1` makes any
//! failure set a nonzero exit status.

mod common;

use std::time::Instant;

use common::{day_grid_gpd, exp, kaplan_meier, ltrc, oracle_fit};
use lifespan::diagnostics::{product_limit_cdf, qq_envelope};
use lifespan::hazard::{bootstrap_hazard_envelope, fit_spline_hazard, fit_spline_with_knots, DEFAULT_X_MAX_DAYS};
use lifespan::inference::{
    bootstrap_p_value, gamma_zero, gompertz_statistic, half_chisq_p, pool_inverse_variance, profile_ci, replicate, se_from_ci, BootTest,
    CiParam,
};
use lifespan::lifetimes::{generate_lexis, Conditioning, GeneratorConfig};
use lifespan::likelihood::{fit_exponential_closed_form, fit_mle, log_likelihood, FitOptions};
use lifespan::optim::{self, OptimOptions};
use lifespan::power::{power_endpoint, power_sex_ratio, power_shape, Study};
use lifespan::rng::stream;
use lifespan::{synthetic, ExcessSample, Family, LifetimeModel, SamplingFrame, Scheme};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn near(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() < tol
}

/// Exponential lifetimes on the ISTAT frame, without fixing the censoring count.
fn istat_like(seed: u64) -> ExcessSample {
    let p = synthetic::istat();
    generate_lexis(&p.config().unwrap(), &exp(1.45), seed).unwrap().sample()
}

fn transforms() -> Outcome {
    let (lo, hi) = (1.29, 1.61);
    let h = exp(1.45).hazard(0.0).unwrap();
    let s = exp(1.45).survive_one_year(0.0);
    let h_ci = (exp(hi).hazard(0.0).unwrap(), exp(lo).hazard(0.0).unwrap());
    let s_ci = (exp(lo).survive_one_year(0.0), exp(hi).survive_one_year(0.0));
    let checks = [(h, 0.690), (s, 0.502), (h_ci.0, 0.62), (h_ci.1, 0.77), (s_ci.0, 0.46), (s_ci.1, 0.54)];
    let pass = checks.iter().all(|&(v, t)| near(v, t, 1e-3));
    outcome(
        pass,
        format!(
            "hazard {h:.4}, one-year survival {s:.4}, hazard CI ({:.4}, {:.4}), survival CI ({:.4}, {:.4})",
            h_ci.0, h_ci.1, s_ci.0, s_ci.1
        ),
    )
}

fn closed_form() -> Outcome {
    let begin = common::date("2009-01-01");
    let end = common::date("2016-01-01");
    let mut worst: f64 = 0.0;
    let mut se_exact = true;
    let mut sizes = (usize::MAX, 0);
    for i in 0..200u64 {
        let mut rng = stream(2024, i);
        let n = (50.0 * 100f64.powf(rng.random::<f64>())).round() as usize;
        let first = rng.random_range(1980..2008);
        let growth = rng.random_range(0.0..0.12);
        let sigma = rng.random_range(0.8..2.2);
        let u = [105.0, 108.0, 110.0][i as usize % 3];
        let frame = SamplingFrame::new(begin, end, Scheme::LeftTruncRightCens, u).unwrap();
        let cfg = GeneratorConfig::geometric(frame, first, 2015, n, growth).unwrap();
        let s = generate_lexis(&cfg, &exp(sigma), i).unwrap().sample();
        sizes = (sizes.0.min(s.len()), sizes.1.max(s.len()));
        let cf = fit_exponential_closed_form(&s).unwrap();
        let ml = fit_mle(&s, Family::Exponential, None, &FitOptions::default()).unwrap();
        worst = worst.max((cf.model.sigma() - ml.model.sigma()).abs());
        se_exact &= cf.std_errors.as_ref().unwrap()[0] == cf.model.sigma() / (s.n_deaths() as f64).sqrt();
    }
    outcome(worst < 1e-8 && se_exact, format!("max |dsigma| {worst:.2e} over n in [{}, {}], se exact: {se_exact}", sizes.0, sizes.1))
}

fn truncation_bias() -> Outcome {
    let runs = 500;
    let (rows, failed) = replicate(runs, |r| {
        let s = istat_like(10_000 + r as u64);
        let corrected = fit_exponential_closed_form(&s)?.model.sigma();
        let deaths: Vec<f64> = s.obs.iter().filter(|o| o.dead).map(|o| o.excess).collect();
        let naive = deaths.iter().sum::<f64>() / deaths.len() as f64;
        let ci = profile_ci(&s, CiParam::SigmaE, 0.95)?;
        Ok((naive < corrected, ci.lower <= 1.45 && 1.45 <= ci.upper, naive, corrected))
    })
    .unwrap();
    let n = rows.len() as f64;
    let below = rows.iter().filter(|r| r.0).count() as f64 / n;
    let cover = rows.iter().filter(|r| r.1).count() as f64 / n;
    let naive = rows.iter().map(|r| r.2).sum::<f64>() / n;
    let corrected = rows.iter().map(|r| r.3).sum::<f64>() / n;
    outcome(
        below >= 0.99 && (0.93..=0.97).contains(&cover) && failed == 0,
        format!("naive below corrected {below:.3}, coverage {cover:.3} (mean naive {naive:.3}, corrected {corrected:.3})"),
    )
}

/// Asymptotic Kolmogorov p-value with the Stephens correction.
fn ks_p(values: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let p: f64 = (1..200).map(|k| 2.0 * (-1f64).powi(k - 1) * (-2.0 * (k * k) as f64 * lambda * lambda).exp()).sum();
    (d, p.clamp(0.0, 1.0))
}

fn boundary_null() -> Outcome {
    let runs = 2000;
    let (w, failed) = replicate(runs, |r| gompertz_statistic(&istat_like(20_000 + r as u64), &FitOptions::default()).map(|s| s.0)).unwrap();
    let zero = w.iter().filter(|&&x| x == 0.0).count() as f64 / w.len() as f64;
    let positive: Vec<f64> = w.iter().copied().filter(|&x| x > 0.0).collect();
    let chi = ChiSquared::new(1.0).unwrap();
    let (d, p) = ks_p(&positive, |x| chi.cdf(x));
    let p584 = half_chisq_p(0.584);
    outcome(
        near(zero, 0.5, 0.03) && p > 0.01 && near(p584, 0.222, 0.001),
        format!("zero fraction {zero:.3}, KS D {d:.4} p {p:.3} on {} positive, p(0.584) {p584:.4}, {failed} failed", positive.len()),
    )
}

fn pooling() -> Outcome {
    let a = (1.45, se_from_ci(1.29, 1.61, 0.95));
    let b = (1.42, se_from_ci(1.28, 1.56, 0.95));
    let p = pool_inverse_variance(&[a, b], 0.95).unwrap();
    outcome(
        near(p.estimate, 1.43, 0.01) && near(p.lower, 1.33, 0.01) && near(p.upper, 1.52, 0.01),
        format!("pooled {:.4} ({:.4}, {:.4})", p.estimate, p.lower, p.upper),
    )
}

fn presets() -> Vec<Study> {
    synthetic::all().into_iter().map(|p| Study::new(p.name.clone(), p.generate(1).unwrap().sample())).collect()
}

fn power_reproduction() -> Outcome {
    let studies = presets();
    let endpoint = power_endpoint(&studies, &[125.0, 130.0, 135.0], 2000, 1).unwrap();
    let shape = power_shape(&studies, &[-0.1], 2000, 1).unwrap();
    let combined = |curves: &[lifespan::power::PowerCurve]| curves.iter().find(|c| c.dataset == "combined").unwrap().clone();
    let e = combined(&endpoint);
    let s = combined(&shape);
    let ep: Vec<f64> = e.points.iter().map(|p| p.power).collect();
    let sp = s.points[0].power;
    let pass = ep.iter().zip([0.96, 0.80, 0.64]).all(|(&p, t)| near(p, t, 0.10)) && near(sp, 0.97, 0.05);
    outcome(pass, format!("endpoint power at 125/130/135 {:.3}/{:.3}/{:.3}, shape power at -0.1 {sp:.3}", ep[0], ep[1], ep[2]))
}

fn sex_ratio() -> Outcome {
    let s = synthetic::istat().generate(1).unwrap().sample();
    let c = power_sex_ratio(&s, &[1.61], 2000, 1).unwrap();
    let p = c.points[0].power;
    outcome(near(p, 0.80, 0.05), format!("power at lambda 1.61: {p:.3} (mc se {:.3})", c.points[0].mc_se))
}

fn p_infinity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut signs = (0, 0);
    for r in 0..200u64 {
        let gamma = [-0.08, 0.0, 0.06][r as usize % 3];
        let m = LifetimeModel::Gpd { sigma: 1.45, gamma };
        let p = synthetic::istat();
        let s = generate_lexis(&p.config().unwrap(), &m, 30_000 + r).unwrap().sample();
        let g = gamma_zero(&s, &FitOptions::default()).unwrap();
        let gh = g.gpd.estimate("gamma").unwrap();
        let p2 = g.test.p_value;
        let expect = if gh < 0.0 { p2 / 2.0 } else { 1.0 - p2 / 2.0 };
        if gh < 0.0 {
            signs.0 += 1;
        } else {
            signs.1 += 1;
        }
        worst = worst.max((g.p_infinity - expect).abs());
    }
    outcome(worst <= 0.005 && signs.0 > 0 && signs.1 > 0, format!("max deviation {worst:.2e}, {} negative and {} positive shapes", signs.0, signs.1))
}

fn spline_nesting() -> Outcome {
    let mut worst: f64 = 0.0;
    for r in 0..3 {
        let s = istat_like(40_000 + r);
        let fit = fit_spline_with_knots(&s, &[], DEFAULT_X_MAX_DAYS, &OptimOptions::default()).unwrap();
        let (sigma, gamma) = oracle_fit(&s, DEFAULT_X_MAX_DAYS);
        worst = worst.max((fit.model.sigma - sigma).abs()).max((fit.model.gamma - gamma).abs());
        let ll = day_grid_gpd(&s, sigma, gamma, DEFAULT_X_MAX_DAYS);
        worst = worst.max((fit.loglik - ll).abs() / ll.abs());
    }
    let mut mass: f64 = 0.0;
    for r in 0..5 {
        let fit = fit_spline_hazard(&istat_like(41_000 + r), 5, r).unwrap();
        let (pmf, tail) = fit.model.pmf();
        mass = mass.max((pmf.iter().sum::<f64>() + tail - 1.0).abs());
    }
    let outer = 50;
    let mut constant = 0;
    for r in 0..outer {
        let s = istat_like(42_000 + r);
        let b = bootstrap_hazard_envelope(&s, 500, 5, r).unwrap();
        if b.admits_constant(1, b.support_days) {
            constant += 1;
        }
    }
    outcome(
        worst < 1e-6 && mass < 1e-10 && constant as f64 >= 0.9 * outer as f64,
        format!("K=0 vs day-grid GPD {worst:.2e}, pmf mass error {mass:.1e}, constant inside band {constant}/{outer}"),
    )
}

fn rounded(n: usize, seed: u64, censor: bool) -> Vec<(f64, bool)> {
    let mut rng = stream(seed, 0);
    (0..n)
        .map(|_| {
            let x = ((-rng.random::<f64>().ln() * 1.45) * 12.0).round().max(1.0) / 12.0;
            let c = ((rng.random::<f64>() * 4.0) * 12.0).round().max(1.0) / 12.0;
            if censor && c < x {
                (c, false)
            } else {
                (x, true)
            }
        })
        .collect()
}

fn product_limit() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let obs = rounded(400, seed, false);
        let pl = product_limit_cdf(&ltrc(&obs.iter().map(|&(x, _)| (x, 0.0, true)).collect::<Vec<_>>())).unwrap();
        for (j, &t) in pl.times.iter().enumerate() {
            let ecdf = obs.iter().filter(|o| o.0 <= t).count() as f64 / obs.len() as f64;
            worst = worst.max((pl.cdf[j] - ecdf).abs());
        }
        let obs = rounded(400, 100 + seed, true);
        let pl = product_limit_cdf(&ltrc(&obs.iter().map(|&(x, d)| (x, 0.0, d)).collect::<Vec<_>>())).unwrap();
        let km = kaplan_meier(&obs);
        if km.len() != pl.times.len() {
            worst = f64::INFINITY;
            continue;
        }
        for (j, (t, f)) in km.iter().enumerate() {
            worst = worst.max(if pl.times[j] == *t { (pl.cdf[j] - f).abs() } else { f64::INFINITY });
        }
    }
    let runs = 500;
    let mut inside = 0;
    for r in 0..runs {
        let s = istat_like(50_000 + r);
        let fitted = fit_exponential_closed_form(&s).unwrap().model;
        let env = qq_envelope(&s, &fitted, 200, r).unwrap();
        if env.escapes() == 0 {
            inside += 1;
        }
    }
    let rate = inside as f64 / runs as f64;
    outcome(
        worst < 1e-12 && near(rate, 0.95, 0.02 + 1e-12),
        format!("max reduction error {worst:.1e}, envelope coverage {rate:.3} over {runs} runs"),
    )
}

fn properties() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let mut cont: f64 = 0.0;
    for sigma in [0.5, 1.0, 1.45, 3.0] {
        let e = exp(sigma);
        let top = e.quantile(0.999).unwrap();
        for i in 0..=200 {
            let x = top * i as f64 / 200.0;
            for g in [1e-12, -1e-12] {
                let m = LifetimeModel::Gpd { sigma, gamma: g };
                cont = cont.max((m.pdf(x) / e.pdf(x) - 1.0).abs()).max((m.cdf(x) - e.cdf(x)).abs());
            }
            for g in [1e-6, -1e-6] {
                let a = LifetimeModel::Gpd { sigma, gamma: g * (1.0 - 1e-6) };
                let b = LifetimeModel::Gpd { sigma, gamma: g * (1.0 + 1e-6) };
                cont = cont.max((a.pdf(x) / b.pdf(x) - 1.0).abs());
            }
        }
    }
    pass &= cont <= 1e-8;
    notes.push(format!("continuity {cont:.1e}"));

    let models = [
        exp(1.45),
        LifetimeModel::Gpd { sigma: 1.3, gamma: 0.2 },
        LifetimeModel::Gpd { sigma: 1.5, gamma: -0.3 },
        LifetimeModel::Gpd { sigma: 2.0, gamma: 3e-7 },
        LifetimeModel::Gompertz { sigma: 1.4, beta: 0.1 },
        LifetimeModel::Gompertz { sigma: 0.8, beta: 1.5 },
    ];
    let (mut trip, mut ident): (f64, f64) = (0.0, 0.0);
    for m in &models {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let x = m.quantile(p).unwrap();
            trip = trip.max((m.cdf(x) - p).abs());
            let h = m.hazard(x).unwrap();
            ident = ident.max((h - m.pdf(x) / m.sf(x)).abs() / h);
        }
    }
    pass &= trip <= 1e-10 && ident <= 1e-10;
    notes.push(format!("round trip {trip:.1e}, hazard identity {ident:.1e}"));

    let s = istat_like(60_000);
    let d = s.n_deaths() as f64;
    let exposure: f64 = s.obs.iter().map(|o| o.excess - o.lower).sum();
    let f = |p: &[f64]| log_likelihood(&s, &LifetimeModel::Exponential { sigma: p[0] });
    let mut grad: f64 = 0.0;
    for sigma in [1.0, 1.45, 2.0] {
        let analytic = -d / sigma + exposure / (sigma * sigma);
        let fd = optim::gradient(&f, &[sigma], f(&[sigma]), 1e-6)[0];
        grad = grad.max((fd - analytic).abs() / (1.0 + analytic.abs()));
    }
    pass &= grad <= 1e-6;
    notes.push(format!("gradient {grad:.1e}"));

    let same = determinism();
    pass &= same.is_empty();
    notes.push(if same.is_empty() { "all stochastic operations reproducible".into() } else { format!("not reproducible: {}", same.join(", ")) });
    outcome(pass, notes.join("; "))
}

fn determinism() -> Vec<&'static str> {
    let mut bad = Vec::new();
    let s = istat_like(70_000);
    let mut check = |name: &'static str, a: String, b: String| {
        if a != b {
            bad.push(name);
        }
    };
    let p = synthetic::istat();
    check("generator", format!("{:?}", istat_like(1)), format!("{:?}", istat_like(1)));
    check("preset", format!("{:?}", p.generate(2).unwrap()), format!("{:?}", p.generate(2).unwrap()));
    let sim = |seed| format!("{:?}", s.simulate(&exp(1.45), Conditioning::Frame, &mut stream(seed, 0)).unwrap());
    check("simulate", sim(3), sim(3));
    let boot = || format!("{:?}", bootstrap_p_value(&s, BootTest::GompertzBoundary, 100, 4).unwrap());
    check("bootstrap", boot(), boot());
    let study = [Study::new("istat", s.clone())];
    let shape = || format!("{:?}", power_shape(&study, &[-0.2], 20, 5).unwrap());
    check("shape power", shape(), shape());
    let split = p.generate(3).unwrap().sample();
    let sex = || format!("{:?}", power_sex_ratio(&split, &[1.5], 20, 6).unwrap());
    check("sex power", sex(), sex());
    let m = fit_exponential_closed_form(&s).unwrap().model;
    let qq = || format!("{:?}", qq_envelope(&s, &m, 30, 7).unwrap());
    check("qq envelope", qq(), qq());
    let spline = || format!("{:?}", fit_spline_hazard(&s, 3, 8).unwrap());
    check("spline knots", spline(), spline());
    let hz = || format!("{:?}", bootstrap_hazard_envelope(&s, 20, 2, 9).unwrap());
    check("hazard bands", hz(), hz());
    bad
}

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: [(usize, &str, fn() -> Outcome); 11] = [
        (1, "transform identities", transforms),
        (2, "closed form vs numerical fit", closed_form),
        (3, "truncation-correction bias", truncation_bias),
        (4, "boundary null calibration", boundary_null),
        (5, "pooling", pooling),
        (6, "power reproduction", power_reproduction),
        (7, "sex-ratio power", sex_ratio),
        (8, "p-infinity consistency", p_infinity),
        (9, "spline hazard nesting", spline_nesting),
        (10, "product-limit reductions", product_limit),
        (11, "property suite", properties),
    ];
    let (mut passed, mut failed) = (0, 0);
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if o.pass {
            passed += 1;
        } else {
            failed += 1;
        }
        println!("{tag} {id:>2} {name}: {} [{:.1}s]", o.detail, t.elapsed().as_secs_f64());
    }
    println!("acceptance: {passed} passed, {failed} failed");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
