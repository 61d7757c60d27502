#![allow(dead_code)]

use chrono::NaiveDate;
use lifespan::lifetimes::{generate_lexis, Exceedance, GeneratorConfig, Sex};
use lifespan::{Dataset, ExcessSample, LifetimeModel, SamplingFrame, Scheme};

pub fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

pub fn frame(scheme: Scheme, u: f64) -> SamplingFrame {
    SamplingFrame::new(date("2009-01-01"), date("2016-01-01"), scheme, u).unwrap()
}

/// Entrants spread evenly over the twenty years before the frame and its own span.
pub fn lexis(scheme: Scheme, u: f64, n: usize, model: &LifetimeModel, seed: u64) -> Dataset {
    let cfg = GeneratorConfig::geometric(frame(scheme, u), 1990, 2015, n, 0.05).unwrap();
    generate_lexis(&cfg, model, seed).unwrap()
}

pub fn exp(sigma: f64) -> LifetimeModel {
    LifetimeModel::Exponential { sigma }
}

pub fn ltrc(obs: &[(f64, f64, bool)]) -> ExcessSample {
    ExcessSample {
        scheme: Scheme::LeftTruncRightCens,
        threshold: 105.0,
        obs: obs
            .iter()
            .map(|&(excess, lower, dead)| Exceedance { excess, lower, upper: if dead { excess + 1.0 } else { excess }, dead, sex: Sex::F, cohort: 1900 })
            .collect(),
    }
}

/// Day-grid likelihood of r(x) = σ + γx, one record at a time.
pub fn day_grid_gpd(sample: &ExcessSample, sigma: f64, gamma: f64, x_max: usize) -> f64 {
    let a = |z: usize| {
        let r = sigma + gamma * z as f64 / 365.0;
        if r > 0.0 {
            1.0 / (365.0 * r)
        } else {
            f64::NAN
        }
    };
    let mut ll = 0.0;
    for o in &sample.obs {
        let start = (o.lower * 365.25).round() as usize;
        let mut exit = (o.excess * 365.25).round() as usize;
        let mut dead = o.dead;
        if dead && exit == 0 {
            exit = 1;
        }
        if start >= x_max {
            continue;
        }
        if exit > x_max {
            exit = x_max;
            dead = false;
        }
        let last = if dead { exit - 1 } else { exit };
        for z in start + 1..=last {
            ll -= a(z);
        }
        if dead {
            ll += (1.0 - (-a(exit)).exp()).ln();
        }
    }
    ll
}

/// Newton's method on the oracle with central differences.
pub fn oracle_fit(sample: &ExcessSample, x_max: usize) -> (f64, f64) {
    let f = |p: [f64; 2]| day_grid_gpd(sample, p[0], p[1], x_max);
    let d = sample.n_deaths() as f64;
    let mut p = [sample.obs.iter().map(|o| o.excess - o.lower).sum::<f64>() / d, 0.0];
    for _ in 0..50 {
        let h = 1e-4;
        let e = |i: usize, s: f64| {
            let mut q = p;
            q[i] += s;
            q
        };
        let g = [(f(e(0, h)) - f(e(0, -h))) / (2.0 * h), (f(e(1, h)) - f(e(1, -h))) / (2.0 * h)];
        let f0 = f(p);
        let h00 = (f(e(0, h)) - 2.0 * f0 + f(e(0, -h))) / (h * h);
        let h11 = (f(e(1, h)) - 2.0 * f0 + f(e(1, -h))) / (h * h);
        let pp = |a: f64, b: f64| f([p[0] + a, p[1] + b]);
        let h01 = (pp(h, h) - pp(h, -h) - pp(-h, h) + pp(-h, -h)) / (4.0 * h * h);
        let det = h00 * h11 - h01 * h01;
        let step = [(h11 * g[0] - h01 * g[1]) / det, (h00 * g[1] - h01 * g[0]) / det];
        p = [p[0] - step[0], p[1] - step[1]];
        if step[0].abs().max(step[1].abs()) < 1e-11 {
            break;
        }
    }
    (p[0], p[1])
}

/// Kaplan–Meier with deaths counted before censorings at tied times.
pub fn kaplan_meier(obs: &[(f64, bool)]) -> Vec<(f64, f64)> {
    let mut v = obs.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut at_risk = v.len() as f64;
    let mut surv = 1.0;
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let t = v[i].0;
        let mut d = 0.0;
        let mut c = 0.0;
        while i < v.len() && v[i].0 == t {
            if v[i].1 {
                d += 1.0;
            } else {
                c += 1.0;
            }
            i += 1;
        }
        if d > 0.0 {
            surv *= 1.0 - d / at_risk;
            out.push((t, 1.0 - surv));
        }
        at_risk -= d + c;
    }
    out
}
