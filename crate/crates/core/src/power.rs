//! Monte-Carlo power of the shape, endpoint and sex-difference tests,
//! simulating new lifetimes inside each dataset's own sampling frame.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::distributions::{Family, LifetimeModel};
use crate::error::{Error, Result};
use crate::inference::{self, replicate};
use crate::lifetimes::{Conditioning, ExcessSample, Sex};
use crate::likelihood::{self, fit_mle, FitOptions, ProfileParam};
use crate::optim::{self, OptimOptions};
use crate::rng::stream2;

pub const LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    AsymptoticNull,
    SimulatedNull,
}

impl std::fmt::Display for Calibration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Calibration::AsymptoticNull => "asymptotic_null",
            Calibration::SimulatedNull => "simulated_null",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    Gamma,
    Iota,
    Lambda,
}

impl std::fmt::Display for Alternative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Alternative::Gamma => "gamma",
            Alternative::Iota => "iota",
            Alternative::Lambda => "lambda",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerPoint {
    pub value: f64,
    pub power: f64,
    pub mc_se: f64,
    /// Replicates that produced a statistic.
    pub n_sims: usize,
    pub n_failed: usize,
    pub note: Option<String>,
}

impl PowerPoint {
    fn from_rejections(value: f64, rejected: usize, n: usize, failed: usize) -> Self {
        let p = rejected as f64 / n as f64;
        Self { value, power: p, mc_se: (p * (1.0 - p) / n as f64).sqrt(), n_sims: n, n_failed: failed, note: None }
    }

    fn infeasible(value: f64, note: String) -> Self {
        Self { value, power: f64::NAN, mc_se: f64::NAN, n_sims: 0, n_failed: 0, note: Some(note) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerCurve {
    pub dataset: String,
    pub alternative: Alternative,
    pub calibration: Calibration,
    /// Rejection region is `statistic < critical_value` for shape and
    /// endpoint tests, `statistic > critical_value` for the sex test.
    pub critical_value: Option<f64>,
    pub points: Vec<PowerPoint>,
}

impl PowerCurve {
    pub fn at(&self, value: f64) -> Option<&PowerPoint> {
        self.points.iter().find(|p| p.value == value)
    }
}

/// Long-format CSV with one line per dataset and grid point.
pub fn write_power_csv<W: Write>(curves: &[PowerCurve], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["dataset", "alternative_type", "alternative_value", "power", "mc_se", "n_sims", "calibration"])?;
    for c in curves {
        for p in &c.points {
            out.write_record([
                c.dataset.clone(),
                c.alternative.to_string(),
                p.value.to_string(),
                p.power.to_string(),
                p.mc_se.to_string(),
                p.n_sims.to_string(),
                c.calibration.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// A dataset entering a power study.
#[derive(Debug, Clone)]
pub struct Study {
    pub label: String,
    pub sample: ExcessSample,
}

impl Study {
    pub fn new(label: impl Into<String>, sample: ExcessSample) -> Self {
        Self { label: label.into(), sample }
    }
}

/// Lower `level` quantile by the type-7 rule.
pub fn lower_quantile(values: &[f64], level: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * level;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Wald statistic γ̂/se(γ̂) and directed root sign(γ̂)√LRT for one sample.
pub fn shape_statistics(sample: &ExcessSample) -> Result<(f64, f64)> {
    let opts = FitOptions { multistart: false, std_errors: true, optim: OptimOptions::default() };
    let gpd = fit_mle(sample, Family::Gpd, None, &opts)?;
    let gamma = gpd.estimate("gamma").expect("shape");
    let se = gpd.se("gamma").filter(|s| s.is_finite() && *s > 0.0).ok_or_else(|| Error::Undefined("no standard error for the shape".into()))?;
    let exp = inference::fit_exponential(sample, &FitOptions::fast())?;
    let lrt = (2.0 * (gpd.loglik - exp.loglik)).max(0.0);
    Ok((gamma / se, gamma.signum() * lrt.sqrt()))
}

/// Directed root sign(γ̂)√LRT alone, skipping standard errors.
pub fn shape_root(sample: &ExcessSample) -> Result<f64> {
    let fast = FitOptions::fast();
    let gpd = fit_mle(sample, Family::Gpd, None, &fast)?;
    let exp = inference::fit_exponential(sample, &fast)?;
    let lrt = (2.0 * (gpd.loglik - exp.loglik)).max(0.0);
    Ok(gpd.estimate("gamma").expect("shape").signum() * lrt.sqrt())
}

fn stream_for(seed: u64, grid: u64, rep: usize, n_sets: usize, set: usize) -> rand_chacha::ChaCha8Rng {
    stream2(seed, grid, (rep * n_sets + set) as u64)
}

/// Grid index reserved for null simulations used in calibration.
const NULL_GRID: u64 = 0;

/// Power of the one-sided Wald test of γ = 0 against γ < 0, per dataset and
/// for the rule rejecting when any dataset rejects. Critical values come
/// from separate simulations under each dataset's fitted exponential.
pub fn power_shape(studies: &[Study], gamma_grid: &[f64], n_sims: usize, seed: u64) -> Result<Vec<PowerCurve>> {
    if studies.is_empty() || n_sims == 0 {
        return Err(Error::InvalidParameter("power needs at least one dataset and one simulation".into()));
    }
    if let Some(g) = gamma_grid.iter().find(|g| !(**g > -1.0 && **g <= 0.0)) {
        return Err(Error::InvalidParameter(format!("shape alternative {g} outside (-1, 0]")));
    }
    let k = studies.len();
    let fopts = FitOptions::default();
    // null critical values
    let mut crit = Vec::with_capacity(k);
    for (d, st) in studies.iter().enumerate() {
        let null = inference::fit_exponential(&st.sample, &fopts)?.model;
        let (w, _) = replicate(n_sims, |j| {
            let mut rng = stream_for(seed, NULL_GRID, j, k, d);
            let sim = st.sample.simulate(&null, Conditioning::Frame, &mut rng)?;
            shape_statistics(&sim).map(|s| s.0)
        })?;
        crit.push(lower_quantile(&w, LEVEL));
    }
    let mut curves: Vec<PowerCurve> = studies
        .iter()
        .zip(&crit)
        .map(|(st, &c)| PowerCurve {
            dataset: st.label.clone(),
            alternative: Alternative::Gamma,
            calibration: Calibration::SimulatedNull,
            critical_value: Some(c),
            points: Vec::new(),
        })
        .collect();
    let mut combined = Vec::new();
    for (gi, &gamma) in gamma_grid.iter().enumerate() {
        let mut models = Vec::with_capacity(k);
        for st in studies {
            let sigma = if gamma == 0.0 {
                inference::fit_exponential(&st.sample, &fopts)?.model.sigma()
            } else {
                let s0 = inference::fit_exponential(&st.sample, &fopts)?.model.sigma();
                let p = likelihood::profile_point(&st.sample, ProfileParam::Gamma, gamma, s0, &fopts);
                if !p.loglik.is_finite() {
                    return Err(Error::Infeasible(format!("no profile fit at gamma = {gamma} for {}", st.label)));
                }
                p.sigma
            };
            models.push(LifetimeModel::Gpd { sigma, gamma });
        }
        let (rows, failed) = replicate(n_sims, |j| {
            studies
                .iter()
                .enumerate()
                .map(|(d, st)| {
                    let mut rng = stream_for(seed, gi as u64 + 1, j, k, d);
                    let sim = st.sample.simulate(&models[d], Conditioning::Frame, &mut rng)?;
                    Ok(shape_statistics(&sim)?.0 < crit[d])
                })
                .collect::<Result<Vec<bool>>>()
        })?;
        let n = rows.len();
        for d in 0..k {
            let r = rows.iter().filter(|row| row[d]).count();
            curves[d].points.push(PowerPoint::from_rejections(gamma, r, n, failed));
        }
        let any = rows.iter().filter(|row| row.iter().any(|&b| b)).count();
        combined.push(PowerPoint::from_rejections(gamma, any, n, failed));
    }
    if k > 1 {
        curves.push(PowerCurve {
            dataset: "combined".into(),
            alternative: Alternative::Gamma,
            calibration: Calibration::SimulatedNull,
            critical_value: None,
            points: combined,
        });
    }
    Ok(curves)
}

/// Joint GPD fit with a common endpoint and one scale per dataset.
///
/// Coordinates are θ = 1/(ι − u_ref), with u_ref the highest threshold, and
/// log σ per dataset; θ = 0 is the exponential model and θ < 0 a positive
/// shape. Returns (θ̂, maximized log-likelihood).
pub fn joint_endpoint_fit(samples: &[&ExcessSample], sigma_start: &[f64]) -> Result<(f64, f64)> {
    let u_ref = samples.iter().map(|s| s.threshold).fold(f64::NEG_INFINITY, f64::max);
    let deltas: Vec<f64> = samples.iter().map(|s| u_ref - s.threshold).collect();
    let f = |p: &[f64]| {
        let theta = p[0];
        let mut total = 0.0;
        for (d, s) in samples.iter().enumerate() {
            let denom = 1.0 + deltas[d] * theta;
            if denom <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let sigma = p[d + 1].exp();
            let gamma = -sigma * theta / denom;
            if !(gamma > -1.0) {
                return f64::NEG_INFINITY;
            }
            total += likelihood::log_likelihood(s, &LifetimeModel::Gpd { sigma, gamma });
            if total == f64::NEG_INFINITY {
                return total;
            }
        }
        total
    };
    let opts = OptimOptions::default();
    let mut best: Option<optim::OptimResult> = None;
    for theta0 in [0.0, 0.05, -0.02] {
        let mut x0 = vec![theta0];
        x0.extend(sigma_start.iter().map(|s| s.ln()));
        if !f(&x0).is_finite() {
            continue;
        }
        let r = optim::maximize(f, &x0, &opts);
        let done = r.converged;
        if best.as_ref().is_none_or(|b| r.value > b.value) {
            best = Some(r);
        }
        if done {
            break;
        }
    }
    let b = best.ok_or_else(|| Error::Infeasible("joint endpoint fit has no feasible start".into()))?;
    Ok((b.x[0], b.value))
}

/// Directed root −sign(θ̂)√(2{ℓ_joint − Σℓ_exp}); negative values point to a finite endpoint.
pub fn endpoint_root(samples: &[&ExcessSample]) -> Result<f64> {
    let fopts = FitOptions::fast();
    let mut exp_ll = 0.0;
    let mut sig = Vec::with_capacity(samples.len());
    for s in samples {
        let e = inference::fit_exponential(s, &fopts)?;
        exp_ll += e.loglik;
        sig.push(e.model.sigma());
    }
    let (theta, ll) = joint_endpoint_fit(samples, &sig)?;
    let lrt = (2.0 * (ll - exp_ll)).max(0.0);
    Ok(-theta.signum() * lrt.sqrt())
}

/// Power of the likelihood-ratio test of an infinite endpoint against a
/// finite one, per dataset and for the joint test with a common endpoint.
pub fn power_endpoint(studies: &[Study], iota_grid: &[f64], n_sims: usize, seed: u64) -> Result<Vec<PowerCurve>> {
    if studies.is_empty() || n_sims == 0 {
        return Err(Error::InvalidParameter("power needs at least one dataset and one simulation".into()));
    }
    let k = studies.len();
    let fopts = FitOptions::default();
    let nulls: Vec<LifetimeModel> =
        studies.iter().map(|st| inference::fit_exponential(&st.sample, &fopts).map(|f| f.model)).collect::<Result<_>>()?;

    // per-replicate statistics: one root per dataset, then the joint root
    let stats = |models: &[LifetimeModel], grid: u64, j: usize| -> Result<Vec<f64>> {
        let mut sims = Vec::with_capacity(k);
        let mut out = Vec::with_capacity(k + 1);
        for (d, st) in studies.iter().enumerate() {
            let mut rng = stream_for(seed, grid, j, k, d);
            let sim = st.sample.simulate(&models[d], Conditioning::Frame, &mut rng)?;
            out.push(shape_root(&sim)?);
            sims.push(sim);
        }
        if k > 1 {
            let refs: Vec<&ExcessSample> = sims.iter().collect();
            out.push(endpoint_root(&refs)?);
        }
        Ok(out)
    };
    let (null_stats, _) = replicate(n_sims, |j| stats(&nulls, NULL_GRID, j))?;
    let n_curves = if k > 1 { k + 1 } else { k };
    let crit: Vec<f64> = (0..n_curves).map(|c| lower_quantile(&null_stats.iter().map(|r| r[c]).collect::<Vec<_>>(), LEVEL)).collect();
    let mut labels: Vec<String> = studies.iter().map(|s| s.label.clone()).collect();
    if k > 1 {
        labels.push("combined".into());
    }
    let mut curves: Vec<PowerCurve> = labels
        .into_iter()
        .zip(&crit)
        .map(|(dataset, &c)| PowerCurve {
            dataset,
            alternative: Alternative::Iota,
            calibration: Calibration::SimulatedNull,
            critical_value: Some(c),
            points: Vec::new(),
        })
        .collect();
    for (gi, &iota) in iota_grid.iter().enumerate() {
        let mut models = Vec::with_capacity(k);
        let mut bad = None;
        for (st, null) in studies.iter().zip(&nulls) {
            if iota.is_infinite() {
                models.push(*null);
                continue;
            }
            if !(iota > st.sample.max_age()) {
                bad = Some(format!("endpoint {iota} is below the oldest age {:.2} in {}", st.sample.max_age(), st.label));
                break;
            }
            let p = likelihood::profile_point(&st.sample, ProfileParam::Iota, iota, null.sigma(), &fopts);
            if !p.loglik.is_finite() {
                bad = Some(format!("no profile fit at endpoint {iota} for {}", st.label));
                break;
            }
            let gamma = likelihood::iota_gamma(p.sigma, iota - st.sample.threshold);
            models.push(LifetimeModel::Gpd { sigma: p.sigma, gamma });
        }
        if let Some(note) = bad {
            for c in curves.iter_mut() {
                c.points.push(PowerPoint::infeasible(iota, note.clone()));
            }
            continue;
        }
        let (rows, failed) = replicate(n_sims, |j| stats(&models, gi as u64 + 1, j))?;
        let n = rows.len();
        for (c, curve) in curves.iter_mut().enumerate() {
            let r = rows.iter().filter(|row| row[c] < crit[c]).count();
            curve.points.push(PowerPoint::from_rejections(iota, r, n, failed));
        }
    }
    Ok(curves)
}

/// Likelihood-ratio statistic for different exponential scales in women and men.
pub fn sex_lrt(sample: &ExcessSample) -> Result<f64> {
    let fopts = FitOptions::fast();
    let women = sample.filter(|o| o.sex == Sex::F);
    let men = sample.filter(|o| o.sex == Sex::M);
    let pooled = sample.filter(|o| o.sex != Sex::Unknown);
    let l1 = inference::fit_exponential(&women, &fopts)?.loglik;
    let l2 = inference::fit_exponential(&men, &fopts)?.loglik;
    let l0 = inference::fit_exponential(&pooled, &fopts)?.loglik;
    Ok((2.0 * (l1 + l2 - l0)).max(0.0))
}

/// Power of the sex-difference LRT at the asymptotic χ²₁ 5% point, when
/// women's exponential scale is λ times men's. Scales are σ̂√λ and σ̂/√λ
/// around the pooled fit, keeping their geometric mean.
pub fn power_sex_ratio(sample: &ExcessSample, lambda_grid: &[f64], n_sims: usize, seed: u64) -> Result<PowerCurve> {
    let n_f = sample.obs.iter().filter(|o| o.sex == Sex::F).count();
    let n_m = sample.obs.iter().filter(|o| o.sex == Sex::M).count();
    if n_f == 0 || n_m == 0 {
        return Err(Error::InvalidParameter("the sex-difference test needs both women and men".into()));
    }
    if let Some(l) = lambda_grid.iter().find(|l| !(**l >= 1.0 && l.is_finite())) {
        return Err(Error::InvalidParameter(format!("scale ratio {l} must be at least 1")));
    }
    let sample = sample.filter(|o| o.sex != Sex::Unknown);
    let sigma = inference::fit_exponential(&sample, &FitOptions::default())?.model.sigma();
    let crit = inference::chisq1_quantile(1.0 - LEVEL);
    let (fs, ms) = (sample.filter(|o| o.sex == Sex::F), sample.filter(|o| o.sex == Sex::M));
    let mut points = Vec::new();
    for (gi, &lambda) in lambda_grid.iter().enumerate() {
        let women = LifetimeModel::Exponential { sigma: sigma * lambda.sqrt() };
        let men = LifetimeModel::Exponential { sigma: sigma / lambda.sqrt() };
        let (rej, failed) = replicate(n_sims, |j| {
            let mut rng = stream2(seed, gi as u64 + 1, j as u64);
            let f = fs.simulate(&women, Conditioning::Frame, &mut rng)?;
            let m = ms.simulate(&men, Conditioning::Frame, &mut rng)?;
            let mut all = f;
            all.obs.extend(m.obs);
            Ok(sex_lrt(&all)? > crit)
        })?;
        let n = rej.len();
        points.push(PowerPoint::from_rejections(lambda, rej.iter().filter(|&&b| b).count(), n, failed));
    }
    Ok(PowerCurve {
        dataset: "sex_ratio".into(),
        alternative: Alternative::Lambda,
        calibration: Calibration::AsymptoticNull,
        critical_value: Some(crit),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_rule() {
        let v: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(lower_quantile(&v, 0.05), 5.0);
        assert_eq!(lower_quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
    }

    #[test]
    fn csv_layout() {
        let c = PowerCurve {
            dataset: "x".into(),
            alternative: Alternative::Iota,
            calibration: Calibration::SimulatedNull,
            critical_value: None,
            points: vec![PowerPoint::from_rejections(125.0, 5, 10, 0)],
        };
        let mut buf = Vec::new();
        write_power_csv(&[c], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().next().unwrap(), "dataset,alternative_type,alternative_value,power,mc_se,n_sims,calibration");
        assert_eq!(s.lines().nth(1).unwrap(), "x,iota,125,0.5,0.15811388300841897,10,simulated_null");
    }
}
