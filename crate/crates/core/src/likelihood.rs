//! Log-likelihoods corrected for truncation and censoring, and their maximization.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::distributions::{Family, LifetimeModel};
use crate::error::{Error, Result};
use crate::lifetimes::{Exceedance, ExcessSample, LifetimeRecord, SamplingFrame, Scheme};
use crate::optim::{self, OptimOptions};

/// log of one observation's likelihood contribution; `-inf` when the model
/// gives it zero probability.
#[inline]
pub fn log_contribution(o: &Exceedance, scheme: Scheme, m: &LifetimeModel) -> f64 {
    let lo = m.log_sf(o.lower);
    if lo == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    match (scheme, o.dead) {
        (Scheme::LeftTruncRightCens, true) => m.log_pdf(o.excess) - lo,
        (Scheme::LeftTruncRightCens, false) => m.log_sf(o.excess) - lo,
        (Scheme::DoublyTruncated, _) => {
            let hi = m.log_sf(o.upper);
            // log{F(upper) − F(lower)} = log S(lower) + log{1 − S(upper)/S(lower)}
            m.log_pdf(o.excess) - lo - (-(hi - lo).exp_m1()).ln()
        }
    }
}

/// Log-likelihood contribution of a single record.
pub fn loglik_contribution(record: &LifetimeRecord, frame: &SamplingFrame, model: &LifetimeModel) -> Result<f64> {
    let o = Exceedance::from_record(record, frame);
    check_support(&o, frame.scheme, model, 0)?;
    Ok(log_contribution(&o, frame.scheme, model))
}

fn check_support(o: &Exceedance, scheme: Scheme, m: &LifetimeModel, index: usize) -> Result<()> {
    let lo = m.log_sf(o.lower);
    let degenerate = lo == f64::NEG_INFINITY
        || match scheme {
            Scheme::DoublyTruncated => !(m.log_sf(o.upper) < lo),
            Scheme::LeftTruncRightCens => false,
        };
    if degenerate {
        Err(Error::DegenerateSupport { index })
    } else {
        Ok(())
    }
}

/// Summed log-likelihood; `-inf` if any observation is impossible.
pub fn log_likelihood(sample: &ExcessSample, model: &LifetimeModel) -> f64 {
    let mut total = 0.0;
    for o in &sample.obs {
        let c = log_contribution(o, sample.scheme, model);
        if !(c > f64::NEG_INFINITY) {
            return f64::NEG_INFINITY;
        }
        total += c;
    }
    total
}

/// Summed log-likelihood, reporting which record has a degenerate
/// truncation set.
pub fn log_likelihood_checked(sample: &ExcessSample, model: &LifetimeModel) -> Result<f64> {
    for (i, o) in sample.obs.iter().enumerate() {
        check_support(o, sample.scheme, model, i)?;
    }
    Ok(log_likelihood(sample, model))
}

/// A parameter held fixed while the others are maximized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fixed", content = "value", rename_all = "snake_case")]
pub enum Constraint {
    Gamma(f64),
    /// Upper endpoint ι of the lifetime, as an age.
    Iota(f64),
    Beta(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub model: LifetimeModel,
    pub loglik: f64,
    /// Aligned with `model.parameters()`. Fixed parameters have se 0.
    pub std_errors: Option<Vec<f64>>,
    pub n_exceedances: usize,
    pub n_deaths: usize,
    pub converged: bool,
    pub iterations: usize,
    /// The optimum sits on the edge of the parameter space (β = 0).
    pub boundary: bool,
    pub threshold: f64,
    pub constraint: Option<Constraint>,
    pub diagnostic: Option<String>,
}

impl FitResult {
    pub fn estimate(&self, name: &str) -> Option<f64> {
        let i = self.model.family().parameter_names().iter().position(|n| *n == name)?;
        Some(self.model.parameters()[i])
    }

    pub fn se(&self, name: &str) -> Option<f64> {
        let i = self.model.family().parameter_names().iter().position(|n| *n == name)?;
        self.std_errors.as_ref().map(|s| s[i])
    }

    pub fn to_json(&self) -> serde_json::Value {
        let names = self.model.family().parameter_names();
        let values = self.model.parameters();
        let params: Vec<_> = names
            .iter()
            .zip(&values)
            .enumerate()
            .map(|(i, (n, v))| json!({"name": n, "estimate": v, "se": self.std_errors.as_ref().map(|s| s[i])}))
            .collect();
        json!({
            "family": self.model.family().to_string(),
            "threshold": self.threshold,
            "parameters": params,
            "loglik": self.loglik,
            "n_u": self.n_exceedances,
            "n_deaths": self.n_deaths,
            "converged": self.converged,
            "iterations": self.iterations,
            "boundary": self.boundary,
            "constraint": self.constraint,
            "diagnostic": self.diagnostic,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Try every starting point and keep the best; otherwise stop at the
    /// first start that converges.
    pub multistart: bool,
    pub std_errors: bool,
    pub optim: OptimOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { multistart: true, std_errors: true, optim: OptimOptions::default() }
    }
}

impl FitOptions {
    /// Single start, no standard errors: for fits inside simulation loops.
    pub fn fast() -> Self {
        Self { multistart: false, std_errors: false, optim: OptimOptions::default() }
    }
}

/// Exponential scale by total time on test: Σ(x − lower) / #deaths, where a
/// censored record contributes its exposure up to the frame end.
pub fn fit_exponential_closed_form(sample: &ExcessSample) -> Result<FitResult> {
    if sample.scheme != Scheme::LeftTruncRightCens {
        return Err(Error::InvalidConfig("the closed-form estimator needs left-truncated, right-censored data".into()));
    }
    let d = sample.n_deaths();
    if d == 0 {
        return Err(Error::Undefined("no deaths: the exponential scale estimate is undefined".into()));
    }
    let exposure: f64 = sample.obs.iter().map(|o| o.excess - o.lower).sum();
    let sigma = exposure / d as f64;
    let model = LifetimeModel::Exponential { sigma };
    Ok(FitResult {
        model,
        loglik: log_likelihood(sample, &model),
        std_errors: Some(vec![sigma / (d as f64).sqrt()]),
        n_exceedances: sample.len(),
        n_deaths: d,
        converged: true,
        iterations: 0,
        boundary: false,
        threshold: sample.threshold,
        constraint: None,
        diagnostic: None,
    })
}

/// Crude scale used to start the optimizer.
fn start_scale(sample: &ExcessSample) -> f64 {
    let d = sample.n_deaths().max(1) as f64;
    let s = sample.obs.iter().map(|o| o.excess - o.lower).sum::<f64>() / d;
    if s.is_finite() && s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Shape implied by an endpoint `span` years above the threshold.
#[inline]
pub fn iota_gamma(sigma: f64, span: f64) -> f64 {
    if span.is_infinite() {
        0.0
    } else {
        -sigma / span
    }
}

/// A family with an optional constraint, and the map from optimizer
/// coordinates (log σ first) to models.
#[derive(Debug, Clone, Copy)]
struct Setup {
    family: Family,
    constraint: Option<Constraint>,
    threshold: f64,
}

impl Setup {
    fn dim(&self) -> usize {
        match (self.family, self.constraint) {
            (Family::Exponential, _) | (_, Some(_)) => 1,
            _ => 2,
        }
    }

    /// Model at natural coordinates (σ, second parameter). Gompertz shapes
    /// below zero are allowed so the optimizer can cross the boundary.
    fn model_nat(&self, nat: &[f64]) -> Option<LifetimeModel> {
        let sigma = nat[0];
        if !(sigma > 0.0 && sigma.is_finite()) {
            return None;
        }
        let gpd = |gamma: f64| (gamma > -1.0).then_some(LifetimeModel::Gpd { sigma, gamma });
        match (self.family, self.constraint) {
            (Family::Exponential, _) => Some(LifetimeModel::Exponential { sigma }),
            (Family::Gpd, None) => gpd(nat[1]),
            (Family::Gpd, Some(Constraint::Gamma(g))) => gpd(g),
            (Family::Gpd, Some(Constraint::Iota(i))) => gpd(iota_gamma(sigma, i - self.threshold)),
            (Family::Gompertz, None) => nat[1].is_finite().then_some(LifetimeModel::Gompertz { sigma, beta: nat[1] }),
            (Family::Gompertz, Some(Constraint::Beta(b))) => Some(LifetimeModel::Gompertz { sigma, beta: b }),
            _ => None,
        }
    }

    fn to_nat(&self, th: &[f64]) -> Vec<f64> {
        let mut v = th.to_vec();
        v[0] = th[0].exp();
        v
    }

    fn from_nat(&self, nat: &[f64]) -> Vec<f64> {
        let mut v = nat.to_vec();
        v[0] = nat[0].ln();
        v
    }

    fn check(&self, sample: &ExcessSample) -> Result<()> {
        match (self.family, self.constraint) {
            (_, None)
            | (Family::Gpd, Some(Constraint::Gamma(_)))
            | (Family::Gompertz, Some(Constraint::Beta(_))) => {}
            (Family::Gpd, Some(Constraint::Iota(i))) => {
                if !(i > sample.max_age()) {
                    return Err(Error::Infeasible(format!(
                        "endpoint {i} does not exceed the oldest observed age {:.3}",
                        sample.max_age()
                    )));
                }
            }
            (f, Some(c)) => {
                return Err(Error::InvalidParameter(format!("constraint {c:?} does not apply to family {f}")));
            }
        }
        if let Some(Constraint::Gamma(g)) = self.constraint {
            if !(g > -1.0 && g.is_finite()) {
                return Err(Error::InvalidParameter(format!("fixed shape {g} must exceed -1")));
            }
        }
        if let Some(Constraint::Beta(b)) = self.constraint {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::InvalidParameter(format!("fixed Gompertz shape {b} must be non-negative")));
            }
        }
        Ok(())
    }
}

/// Maximum-likelihood fit of `family`, optionally with one parameter fixed.
///
/// Gompertz fits with β̂ ≤ 0 are reported at β = 0 with the boundary flag set.
pub fn fit_mle(sample: &ExcessSample, family: Family, constraint: Option<Constraint>, opts: &FitOptions) -> Result<FitResult> {
    let setup = Setup { family, constraint, threshold: sample.threshold };
    setup.check(sample)?;
    if sample.n_deaths() == 0 {
        return Err(Error::Undefined("no deaths: maximum-likelihood estimates are undefined".into()));
    }
    let s0 = start_scale(sample);
    let starts: Vec<Vec<f64>> = match setup.dim() {
        1 => vec![vec![s0], vec![0.5 * s0], vec![2.0 * s0]],
        _ if family == Family::Gpd => {
            vec![vec![s0, 0.0], vec![s0, -0.1], vec![s0, 0.1], vec![0.8 * s0, 0.0], vec![1.2 * s0, 0.0]]
        }
        _ => vec![vec![s0, 0.0], vec![s0, 0.05], vec![s0, 0.2], vec![0.8 * s0, 0.05], vec![1.2 * s0, 0.05]],
    };
    let fit = fit_from(sample, setup, &starts, opts);
    if family == Family::Gompertz && constraint.is_none() {
        return gompertz_with_boundary(sample, fit, s0, opts);
    }
    fit
}

fn gompertz_with_boundary(sample: &ExcessSample, interior: Result<FitResult>, s0: f64, opts: &FitOptions) -> Result<FitResult> {
    let setup0 = Setup { family: Family::Gompertz, constraint: Some(Constraint::Beta(0.0)), threshold: sample.threshold };
    let mut edge = fit_from(sample, setup0, &[vec![s0], vec![0.5 * s0], vec![2.0 * s0]], opts)?;
    let use_edge = match &interior {
        Ok(f) => f.estimate("beta").is_none_or(|b| b <= 0.0) || f.loglik <= edge.loglik,
        Err(_) => true,
    };
    if !use_edge {
        return interior;
    }
    edge.constraint = None;
    edge.boundary = true;
    edge.diagnostic = Some("shape at the boundary beta = 0".into());
    if opts.std_errors {
        let full = Setup { family: Family::Gompertz, constraint: None, threshold: sample.threshold };
        edge.std_errors = std_errors(sample, full, &[edge.model.sigma(), 0.0]);
    }
    Ok(edge)
}

/// Fits from the given natural-coordinate starting points.
fn fit_from(sample: &ExcessSample, setup: Setup, starts: &[Vec<f64>], opts: &FitOptions) -> Result<FitResult> {
    let f = |th: &[f64]| setup.model_nat(&setup.to_nat(th)).map_or(f64::NEG_INFINITY, |m| log_likelihood(sample, &m));
    let mut best: Option<(optim::OptimResult, bool)> = None;
    let mut iterations = 0;
    for s in starts {
        let th0 = setup.from_nat(s);
        if !f(&th0).is_finite() {
            continue;
        }
        let r = optim::maximize(f, &th0, &opts.optim);
        iterations += r.iterations;
        let g = optim::gradient(&f, &r.x, r.value, opts.optim.fd_step);
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ok = r.converged || gn < 1e-6 * (1.0 + r.value.abs());
        let better = match &best {
            None => true,
            Some((b, bok)) => r.value > b.value + 1e-9 || (ok && !bok && r.value >= b.value - 1e-9),
        };
        if better {
            best = Some((r, ok));
        }
        if !opts.multistart && best.as_ref().is_some_and(|(_, ok)| *ok) {
            break;
        }
    }
    let Some((r, ok)) = best else {
        return Err(Error::Infeasible("no starting point has finite likelihood".into()));
    };
    let nat = setup.to_nat(&r.x);
    if !ok || !r.value.is_finite() {
        return Err(Error::NonConvergence { iterations, loglik: r.value, best: nat });
    }
    let model = setup.model_nat(&nat).expect("optimum is feasible");
    let se = if opts.std_errors { std_errors(sample, setup, &nat) } else { None };
    let diagnostic = (opts.std_errors && se.is_none()).then(|| "observed information is not positive definite".to_string());
    Ok(FitResult {
        model,
        loglik: r.value,
        std_errors: se,
        n_exceedances: sample.len(),
        n_deaths: sample.n_deaths(),
        converged: true,
        iterations,
        boundary: false,
        threshold: sample.threshold,
        constraint: setup.constraint,
        diagnostic,
    })
}

/// Standard errors from the inverse observed information in natural
/// coordinates, laid out like `model.parameters()`.
fn std_errors(sample: &ExcessSample, setup: Setup, nat: &[f64]) -> Option<Vec<f64>> {
    let f = |p: &[f64]| setup.model_nat(p).map_or(f64::NEG_INFINITY, |m| log_likelihood(sample, &m));
    let h = optim::hessian(&f, nat, 1e-4)?;
    let neg: Vec<Vec<f64>> = h.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    let inv = optim::spd_inverse(&neg)?;
    let se: Vec<f64> = (0..nat.len()).map(|i| inv[i][i].sqrt()).collect();
    Some(match (setup.family, setup.constraint) {
        (Family::Exponential, _) | (_, None) => se,
        (Family::Gpd, Some(Constraint::Iota(i))) => {
            let span = i - setup.threshold;
            vec![se[0], se[0] / span]
        }
        _ => vec![se[0], 0.0],
    })
}

/// The profiled parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileParam {
    Gamma,
    Iota,
    Beta,
}

impl ProfileParam {
    pub fn family(self) -> Family {
        match self {
            ProfileParam::Beta => Family::Gompertz,
            _ => Family::Gpd,
        }
    }

    pub fn constraint(self, value: f64) -> Constraint {
        match self {
            ProfileParam::Gamma => Constraint::Gamma(value),
            ProfileParam::Iota => Constraint::Iota(value),
            ProfileParam::Beta => Constraint::Beta(value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub value: f64,
    pub loglik: f64,
    /// Profiled scale at this value.
    pub sigma: f64,
    pub converged: bool,
}

/// Maximized log-likelihood at one fixed value of `param`, started from `sigma0`.
pub fn profile_point(sample: &ExcessSample, param: ProfileParam, value: f64, sigma0: f64, opts: &FitOptions) -> ProfilePoint {
    let setup = Setup { family: param.family(), constraint: Some(param.constraint(value)), threshold: sample.threshold };
    let failed = ProfilePoint { value, loglik: f64::NEG_INFINITY, sigma: f64::NAN, converged: false };
    if setup.check(sample).is_err() {
        return failed;
    }
    let s0 = start_scale(sample);
    let mut starts = vec![vec![sigma0], vec![s0]];
    if param == ProfileParam::Gamma && value < 0.0 {
        // the smallest scale keeping every observation inside the support
        starts.push(vec![-value * sample.max_excess() * 1.05 + 1e-3]);
    }
    let o = FitOptions { multistart: false, std_errors: false, ..*opts };
    match fit_from(sample, setup, &starts, &o) {
        Ok(f) => ProfilePoint { value, loglik: f.loglik, sigma: f.model.sigma(), converged: true },
        Err(Error::NonConvergence { loglik, best, .. }) => ProfilePoint { value, loglik, sigma: best[0], converged: false },
        Err(_) => failed,
    }
}

/// Profile log-likelihood over `grid`, warm-starting each point from the previous one.
pub fn profile_loglik(sample: &ExcessSample, param: ProfileParam, grid: &[f64], opts: &FitOptions) -> Vec<ProfilePoint> {
    let mut sigma = start_scale(sample);
    grid.iter()
        .map(|&v| {
            let p = profile_point(sample, param, v, sigma, opts);
            if p.converged {
                sigma = p.sigma;
            }
            p
        })
        .collect()
}
