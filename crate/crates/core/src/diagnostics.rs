//! Goodness of fit under left truncation and right censoring: the
//! product-limit estimate of the excess-lifetime distribution, QQ plotting
//! positions and parametric simulation envelopes.

use std::io::Write;

use serde::Serialize;

use crate::distributions::{Family, LifetimeModel};
use crate::error::{Error, Result};
use crate::hazard::curve_bands;
use crate::inference::{fit_exponential, replicate};
use crate::lifetimes::{Conditioning, ExcessSample, Scheme};
use crate::likelihood::{fit_mle, FitOptions};
use crate::rng::stream;

/// Product-limit estimate G̃ with jumps at the distinct death times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductLimit {
    pub times: Vec<f64>,
    pub deaths: Vec<usize>,
    pub at_risk: Vec<usize>,
    /// G̃ just after each jump.
    pub cdf: Vec<f64>,
    /// First death time with an empty risk set; G̃ is undefined from there on.
    pub undefined_from: Option<f64>,
}

impl ProductLimit {
    /// Right-continuous G̃(x).
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.times.partition_point(|t| *t <= x);
        if k == 0 {
            0.0
        } else {
            self.cdf[k - 1]
        }
    }

    /// G̃(x⁻) + ½ jump at the `j`th jump.
    pub fn mid_jump(&self, j: usize) -> f64 {
        let before = if j == 0 { 0.0 } else { self.cdf[j - 1] };
        0.5 * (before + self.cdf[j])
    }
}

fn require_ltrc(sample: &ExcessSample) -> Result<()> {
    if sample.scheme != Scheme::LeftTruncRightCens {
        return Err(Error::InvalidConfig("product-limit diagnostics need left-truncated, right-censored data".into()));
    }
    Ok(())
}

pub fn product_limit_cdf(sample: &ExcessSample) -> Result<ProductLimit> {
    require_ltrc(sample)?;
    let mut death_times: Vec<f64> = sample.obs.iter().filter(|o| o.dead).map(|o| o.excess).collect();
    if death_times.is_empty() {
        return Err(Error::Undefined("no deaths".into()));
    }
    death_times.sort_by(f64::total_cmp);
    let mut pl = ProductLimit { times: Vec::new(), deaths: Vec::new(), at_risk: Vec::new(), cdf: Vec::new(), undefined_from: None };
    let mut surv = 1.0;
    let mut i = 0;
    while i < death_times.len() {
        let x = death_times[i];
        let mut d = 0;
        while i < death_times.len() && death_times[i] == x {
            d += 1;
            i += 1;
        }
        let r = sample.obs.iter().filter(|o| o.lower < x && x <= o.excess).count();
        if r == 0 {
            pl.undefined_from = Some(x);
            break;
        }
        surv *= 1.0 - d as f64 / r as f64;
        pl.times.push(x);
        pl.deaths.push(d);
        pl.at_risk.push(r);
        pl.cdf.push(1.0 - surv);
    }
    Ok(pl)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QqPoint {
    pub position: f64,
    pub observed: f64,
    pub flag: Option<String>,
}

/// Plotting positions F̂⁻¹{G̃(xᵢ)} for the ordered deaths, with G̃ taken at
/// mid-jump.
pub fn qq_positions(sample: &ExcessSample, fitted: &LifetimeModel) -> Result<Vec<QqPoint>> {
    let pl = product_limit_cdf(sample)?;
    let mut out = Vec::new();
    for (j, &x) in pl.times.iter().enumerate() {
        let p = pl.mid_jump(j);
        let (position, flag) = match fitted.endpoint() {
            Some(end) if x > end => (f64::NAN, Some(format!("observation {x} beyond the fitted endpoint {end}"))),
            _ if p >= 1.0 => (f64::NAN, Some("product-limit estimate already reached one".into())),
            _ => match fitted.quantile(p) {
                Ok(q) => (q, None),
                Err(e) => (f64::NAN, Some(e.to_string())),
            },
        };
        for _ in 0..pl.deaths[j] {
            out.push(QqPoint { position, observed: x, flag: flag.clone() });
        }
    }
    if let Some(x) = pl.undefined_from {
        let n_after = sample.obs.iter().filter(|o| o.dead && o.excess >= x).count();
        for _ in 0..n_after {
            out.push(QqPoint { position: f64::NAN, observed: x, flag: Some("empty risk set".into()) });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QqEnvelope {
    pub points: Vec<QqPoint>,
    pub level: f64,
    /// Bands for the observed excess at each plotting position.
    pub lo_pointwise: Vec<f64>,
    pub hi_pointwise: Vec<f64>,
    pub lo_simultaneous: Vec<f64>,
    pub hi_simultaneous: Vec<f64>,
    /// Replicate curves as (position, observed) pairs, in rank order.
    pub curves: Vec<Vec<(f64, f64)>>,
    pub n_sims: usize,
    pub n_failed: usize,
    pub seed: u64,
}

impl QqEnvelope {
    /// Number of points with a defined position outside the simultaneous band.
    pub fn escapes(&self) -> usize {
        (0..self.points.len())
            .filter(|&i| self.points[i].position.is_finite())
            .filter(|&i| {
                let y = self.points[i].observed;
                !(y >= self.lo_simultaneous[i] && y <= self.hi_simultaneous[i])
            })
            .count()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["position", "observed", "lo_pointwise", "hi_pointwise", "lo_simultaneous", "hi_simultaneous"])?;
        for (i, p) in self.points.iter().enumerate() {
            out.write_record([
                p.position.to_string(),
                p.observed.to_string(),
                self.lo_pointwise[i].to_string(),
                self.hi_pointwise[i].to_string(),
                self.lo_simultaneous[i].to_string(),
                self.hi_simultaneous[i].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn refit(sample: &ExcessSample, family: Family) -> Result<LifetimeModel> {
    let opts = FitOptions::fast();
    Ok(match family {
        Family::Exponential => fit_exponential(sample, &opts)?.model,
        f => fit_mle(sample, f, None, &opts)?.model,
    })
}

/// Simulation envelope for the QQ plot. Each replicate redraws the deaths
/// inside their observation windows, keeps censored records, refits the
/// model family and recomputes G̃. Bands are built from the replicate
/// deviations observed − position at each rank, placed at the data's positions.
pub fn qq_envelope(sample: &ExcessSample, fitted: &LifetimeModel, n_sims: usize, seed: u64) -> Result<QqEnvelope> {
    qq_envelope_with(sample, fitted, n_sims, seed, 0.95)
}

pub fn qq_envelope_with(sample: &ExcessSample, fitted: &LifetimeModel, n_sims: usize, seed: u64, level: f64) -> Result<QqEnvelope> {
    if n_sims == 0 {
        return Err(Error::InvalidParameter("at least one simulation is needed".into()));
    }
    let points = qq_positions(sample, fitted)?;
    let family = fitted.family();
    let n = points.len();
    let (curves, n_failed) = replicate(n_sims, |b| {
        let mut rng = stream(seed, b as u64);
        let sim = sample.simulate(fitted, Conditioning::Status, &mut rng)?;
        let m = refit(&sim, family)?;
        let pts = qq_positions(&sim, &m)?;
        if pts.len() != n {
            return Err(Error::Undefined("replicate plotting positions are incomplete".into()));
        }
        Ok(pts.into_iter().map(|p| (p.position, p.observed)).collect::<Vec<_>>())
    })?;
    let ratios: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| c.iter().map(|&(p, y)| if p > 0.0 && y > 0.0 { y / p } else { f64::NAN }).collect())
        .collect();
    let [lo, hi, slo, shi] = curve_bands(&ratios, level, true);
    let at = |band: &[f64]| -> Vec<f64> { points.iter().zip(band).map(|(p, r)| p.position * r).collect() };
    Ok(QqEnvelope {
        lo_pointwise: at(&lo),
        hi_pointwise: at(&hi),
        lo_simultaneous: at(&slo),
        hi_simultaneous: at(&shi),
        points,
        level,
        curves,
        n_sims,
        n_failed,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifetimes::{Exceedance, Sex};

    fn ltrc(obs: &[(f64, f64, bool)]) -> ExcessSample {
        ExcessSample {
            scheme: Scheme::LeftTruncRightCens,
            threshold: 108.0,
            obs: obs
                .iter()
                .map(|&(excess, lower, dead)| Exceedance { excess, lower, upper: 10.0, dead, sex: Sex::F, cohort: 1900 })
                .collect(),
        }
    }

    #[test]
    fn hand_computed_risk_sets() {
        let s = ltrc(&[(0.5, 0.0, true), (2.0, 0.0, false), (3.0, 1.0, true)]);
        let pl = product_limit_cdf(&s).unwrap();
        assert_eq!(pl.times, vec![0.5, 3.0]);
        assert_eq!(pl.at_risk, vec![2, 1]);
        assert_eq!(pl.cdf, vec![0.5, 1.0]);
        assert_eq!(pl.eval(0.4), 0.0);
        assert_eq!(pl.eval(2.0), 0.5);
    }

    #[test]
    fn single_observation_sits_at_the_median() {
        let s = ltrc(&[(1.3, 0.0, true)]);
        let m = LifetimeModel::Exponential { sigma: 2.0 };
        let q = qq_positions(&s, &m).unwrap();
        assert_eq!(q.len(), 1);
        assert!((q[0].position - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert_eq!(q[0].observed, 1.3);
    }

    #[test]
    fn ties_share_a_position() {
        let s = ltrc(&[(1.0, 0.0, true), (1.0, 0.0, true), (2.0, 0.0, true)]);
        let q = qq_positions(&s, &LifetimeModel::Exponential { sigma: 1.0 }).unwrap();
        assert_eq!(q[0].position, q[1].position);
        assert!((q[0].position - (-(1.0f64 - 1.0 / 3.0).ln())).abs() < 1e-12);
    }

    #[test]
    fn beyond_endpoint_is_flagged() {
        let s = ltrc(&[(1.0, 0.0, true), (5.0, 0.0, true)]);
        let m = LifetimeModel::Gpd { sigma: 1.0, gamma: -0.5 };
        let q = qq_positions(&s, &m).unwrap();
        assert!(q[0].flag.is_none());
        assert!(q[1].position.is_nan() && q[1].flag.is_some());
    }

    #[test]
    fn envelope_is_deterministic_and_ordered() {
        let m = LifetimeModel::Exponential { sigma: 1.4 };
        let mut rng = stream(1, 0);
        let obs: Vec<(f64, f64, bool)> = (0..80)
            .map(|i| {
                let lower = (i % 3) as f64;
                let x = m.sample_truncated(lower, f64::INFINITY, &mut rng).unwrap();
                if x > lower + 3.0 {
                    (lower + 3.0, lower, false)
                } else {
                    (x, lower, true)
                }
            })
            .collect();
        let s = ltrc(&obs);
        let e = qq_envelope(&s, &m, 60, 4).unwrap();
        assert_eq!(e, qq_envelope(&s, &m, 60, 4).unwrap());
        for i in 0..e.points.len() {
            assert!(e.lo_simultaneous[i] <= e.lo_pointwise[i] && e.lo_pointwise[i] <= e.hi_pointwise[i]);
            assert!(e.hi_pointwise[i] <= e.hi_simultaneous[i]);
        }
    }
}
