//! Likelihood-ratio tests, profile intervals, bootstrap p-values and pooling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::distributions::{Family, LifetimeModel};
use crate::error::{Error, Result};
use crate::lifetimes::{Conditioning, ExcessSample, Scheme};
use crate::likelihood::{self, fit_exponential_closed_form, fit_mle, FitOptions, FitResult, ProfileParam};
use crate::optim;
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullDist {
    ChiSq1,
    /// ½χ²₀ + ½χ²₁.
    HalfChiSqMixture,
    Normal,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub null_dist: NullDist,
    /// The alternative fit sits on the null boundary.
    pub boundary: bool,
    /// Asymptotic p-value, reported alongside simulation-based ones.
    pub asymptotic_p: f64,
    pub seed: Option<u64>,
    pub n_replicates: Option<usize>,
    pub n_failed: Option<usize>,
    pub mc_se: Option<f64>,
}

impl TestResult {
    fn asymptotic(statistic: f64, p: f64, null_dist: NullDist, boundary: bool) -> Self {
        Self { statistic, p_value: p, null_dist, boundary, asymptotic_p: p, seed: None, n_replicates: None, n_failed: None, mc_se: None }
    }
}

/// Pr(χ²₁ > w).
pub fn chisq1_p(w: f64) -> f64 {
    if w <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(1.0).expect("valid").sf(w)
}

/// Upper tail of the ½χ²₀ + ½χ²₁ mixture: 1 at w = 0, ½Pr(χ²₁ > w) otherwise.
pub fn half_chisq_p(w: f64) -> f64 {
    if w <= 0.0 {
        1.0
    } else {
        0.5 * chisq1_p(w)
    }
}

/// χ²₁ quantile at `level`.
pub fn chisq1_quantile(level: f64) -> f64 {
    ChiSquared::new(1.0).expect("valid").inverse_cdf(level)
}

pub fn std_normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Exponential fit, in closed form where one exists.
pub fn fit_exponential(sample: &ExcessSample, opts: &FitOptions) -> Result<FitResult> {
    match sample.scheme {
        Scheme::LeftTruncRightCens => fit_exponential_closed_form(sample),
        Scheme::DoublyTruncated => fit_mle(sample, Family::Exponential, None, opts),
    }
}

/// Both fits behind the test of γ = 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaZero {
    pub gpd: FitResult,
    pub exponential: FitResult,
    pub test: TestResult,
    pub p_infinity: f64,
}

pub fn gamma_zero(sample: &ExcessSample, opts: &FitOptions) -> Result<GammaZero> {
    let exponential = fit_exponential(sample, opts)?;
    let gpd = fit_mle(sample, Family::Gpd, None, opts)?;
    let lrt = (2.0 * (gpd.loglik - exponential.loglik)).max(0.0);
    let gamma = gpd.estimate("gamma").expect("gpd has a shape");
    let test = TestResult::asymptotic(lrt, chisq1_p(lrt), NullDist::ChiSq1, false);
    let p_infinity = directed_root_p(gamma, lrt);
    Ok(GammaZero { gpd, exponential, test, p_infinity })
}

/// Φ(sign(γ̂)√LRT).
pub fn directed_root_p(gamma_hat: f64, lrt: f64) -> f64 {
    if gamma_hat == 0.0 || lrt <= 0.0 {
        return 0.5;
    }
    std_normal_cdf(gamma_hat.signum() * lrt.sqrt())
}

/// Likelihood-ratio test of γ = 0 in the GPD, against χ²₁.
pub fn lrt_gamma_zero(sample: &ExcessSample) -> Result<TestResult> {
    Ok(gamma_zero(sample, &FitOptions::default())?.test)
}

/// Probability that γ ≥ 0 from the directed likelihood root at γ = 0.
pub fn p_infinity(sample: &ExcessSample) -> Result<f64> {
    Ok(gamma_zero(sample, &FitOptions::default())?.p_infinity)
}

/// Boundary LRT of β = 0 in the Gompertz model.
pub fn boundary_lrt_gompertz(sample: &ExcessSample) -> Result<TestResult> {
    gompertz_statistic(sample, &FitOptions::default()).map(|(w, b)| TestResult::asymptotic(w, half_chisq_p(w), NullDist::HalfChiSqMixture, b))
}

/// (w, boundary) with w = 2(ℓ_Gompertz − ℓ_exponential), exactly 0 on the boundary.
pub fn gompertz_statistic(sample: &ExcessSample, opts: &FitOptions) -> Result<(f64, bool)> {
    let gomp = fit_mle(sample, Family::Gompertz, None, opts)?;
    if gomp.boundary {
        return Ok((0.0, true));
    }
    let exp = fit_exponential(sample, opts)?;
    Ok(((2.0 * (gomp.loglik - exp.loglik)).max(0.0), false))
}

/// Statistics that can be calibrated by parametric bootstrap under the exponential null.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootTest {
    GompertzBoundary,
    GammaZero,
}

impl BootTest {
    fn statistic(self, sample: &ExcessSample, opts: &FitOptions) -> Result<f64> {
        match self {
            BootTest::GompertzBoundary => gompertz_statistic(sample, opts).map(|(w, _)| w),
            BootTest::GammaZero => gamma_zero(sample, opts).map(|g| g.test.statistic),
        }
    }

    fn asymptotic_p(self, w: f64) -> f64 {
        match self {
            BootTest::GompertzBoundary => half_chisq_p(w),
            BootTest::GammaZero => chisq1_p(w),
        }
    }
}

/// Share of replicate failures above which a simulation run is rejected.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// Runs `f` on `n` replicates in parallel, dropping failures up to the
/// allowed rate. Results are in replicate order.
pub fn replicate<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<(Vec<T>, usize)> {
    let out: Vec<Result<T>> = (0..n).into_par_iter().map(f).collect();
    let total = out.len();
    let ok: Vec<T> = out.into_iter().filter_map(|r| r.ok()).collect();
    let failed = total - ok.len();
    if failed as f64 > MAX_FAILURE_RATE * total as f64 {
        return Err(Error::TooManyFailures { failed, total });
    }
    Ok((ok, failed))
}

/// Parametric-bootstrap p-value under the fitted exponential null. Replicates
/// keep each record's entry date, truncation and censoring status.
pub fn bootstrap_p_value(sample: &ExcessSample, test: BootTest, n_replicates: usize, seed: u64) -> Result<TestResult> {
    bootstrap_p_value_with(sample, test, n_replicates, seed, Conditioning::Status)
}

pub fn bootstrap_p_value_with(sample: &ExcessSample, test: BootTest, n_replicates: usize, seed: u64, how: Conditioning) -> Result<TestResult> {
    if n_replicates < 100 {
        return Err(Error::InvalidParameter(format!("need at least 100 bootstrap replicates, got {n_replicates}")));
    }
    let opts = FitOptions::default();
    let w = test.statistic(sample, &opts)?;
    let null = fit_exponential(sample, &opts)?.model;
    let fast = FitOptions::fast();
    let (stats, failed) = replicate(n_replicates, |i| {
        let mut rng = stream(seed, i as u64);
        let sim = sample.simulate(&null, how, &mut rng)?;
        test.statistic(&sim, &fast)
    })?;
    let n = stats.len() as f64;
    let p = stats.iter().filter(|&&s| s >= w).count() as f64 / n;
    Ok(TestResult {
        statistic: w,
        p_value: p,
        null_dist: NullDist::Bootstrap,
        boundary: w == 0.0,
        asymptotic_p: test.asymptotic_p(w),
        seed: Some(seed),
        n_replicates: Some(n_replicates),
        n_failed: Some(failed),
        mc_se: Some((p * (1.0 - p) / n).sqrt()),
    })
}

/// Parameter for a profile-likelihood interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiParam {
    Gamma,
    SigmaE,
    Iota,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub estimate: f64,
    /// `-inf`/`inf` (or the edge of the parameter space) when the profile
    /// never drops below the cut-off on that side.
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

/// Profile-likelihood confidence interval, endpoints located by bisection to 1e-6.
pub fn profile_ci(sample: &ExcessSample, param: CiParam, level: f64) -> Result<Interval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence level {level} outside (0, 1)")));
    }
    let crit = chisq1_quantile(level);
    let opts = FitOptions::default();
    match param {
        CiParam::SigmaE => {
            let fit = fit_exponential(sample, &opts)?;
            let s = fit.model.sigma();
            let prof = |v: f64| (v > 0.0).then(|| likelihood::log_likelihood(sample, &LifetimeModel::Exponential { sigma: v }));
            let step = fit.std_errors.as_ref().map_or(0.1 * s, |e| e[0]);
            let (lo, hi) = profile_interval(&prof, s, fit.loglik, crit, (0.0, f64::INFINITY), step)?;
            Ok(Interval { estimate: s, lower: lo, upper: hi, level })
        }
        CiParam::Gamma => {
            let fit = fit_mle(sample, Family::Gpd, None, &opts)?;
            let g = fit.estimate("gamma").expect("shape");
            let s0 = fit.model.sigma();
            let prof = |v: f64| {
                let p = likelihood::profile_point(sample, ProfileParam::Gamma, v, s0, &opts);
                p.loglik.is_finite().then_some(p.loglik)
            };
            let step = fit.se("gamma").filter(|v| v.is_finite() && *v > 0.0).unwrap_or(0.05);
            let (lo, hi) = profile_interval(&prof, g, fit.loglik, crit, (-1.0, f64::INFINITY), step)?;
            Ok(Interval { estimate: g, lower: lo, upper: hi, level })
        }
        CiParam::Iota => {
            // profile in η = 1/(ι − u), where η = 0 is the exponential model
            let fit = fit_mle(sample, Family::Gpd, None, &opts)?;
            let u = sample.threshold;
            let g = fit.estimate("gamma").expect("shape");
            let s0 = fit.model.sigma();
            let exp_ll = fit_exponential(sample, &opts)?.loglik;
            let eta_max = 1.0 / sample.max_excess();
            let prof = |eta: f64| {
                if eta == 0.0 {
                    return Some(exp_ll);
                }
                if !(eta > 0.0 && eta < eta_max) {
                    return None;
                }
                let p = likelihood::profile_point(sample, ProfileParam::Iota, u + 1.0 / eta, s0, &opts);
                p.loglik.is_finite().then_some(p.loglik)
            };
            let eta_hat = if g < 0.0 { (-g / s0).min(eta_max * (1.0 - 1e-9)) } else { 0.0 };
            let step = 0.05 * eta_max;
            let (eta_lo, eta_hi) = profile_interval(&prof, eta_hat, fit.loglik.max(exp_ll), crit, (0.0, eta_max), step)?;
            let to_iota = |eta: f64| if eta <= 0.0 { f64::INFINITY } else { u + 1.0 / eta };
            Ok(Interval { estimate: to_iota(eta_hat), lower: to_iota(eta_hi), upper: to_iota(eta_lo), level })
        }
    }
}

/// Walks outward from `est` on both sides until the deviance exceeds
/// `crit`, then bisects. `prof` returns `None` outside the feasible region.
fn profile_interval(
    prof: &dyn Fn(f64) -> Option<f64>,
    est: f64,
    lmax: f64,
    crit: f64,
    limits: (f64, f64),
    step: f64,
) -> Result<(f64, f64)> {
    let cut = lmax - crit / 2.0;
    let tol = 1e-6 * (1.0 + lmax.abs());
    let above = |v: f64| prof(v).map_or(-1.0, |l| l - cut);
    let mut bumps = Vec::new();
    let mut side = |dir: f64, limit: f64| -> Result<f64> {
        let mut inner = est;
        let mut h = step.max(1e-8);
        for _ in 0..80 {
            let mut outer = est + dir * h;
            let at_limit = (outer - limit) * dir >= 0.0;
            if at_limit {
                outer = limit;
            }
            match prof(outer) {
                Some(l) if l > lmax + tol => bumps.push(outer),
                _ => {}
            }
            if above(outer) < 0.0 {
                let root = optim::bisect(&above, inner, outer, 1e-6).unwrap_or(outer);
                return Ok(root);
            }
            if at_limit {
                return Ok(limit);
            }
            inner = outer;
            h *= 2.0;
        }
        Ok(if dir > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY })
    };
    let hi = side(1.0, limits.1)?;
    let lo = side(-1.0, limits.0)?;
    if !bumps.is_empty() {
        return Err(Error::NonUnimodal(bumps));
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pooled {
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

/// Standard error implied by a symmetric Wald interval.
pub fn se_from_ci(lower: f64, upper: f64, level: f64) -> f64 {
    (upper - lower) / (2.0 * std_normal_quantile(0.5 + level / 2.0))
}

/// Inverse-variance weighted average of `(estimate, se)` pairs with a Wald interval.
pub fn pool_inverse_variance(estimates: &[(f64, f64)], level: f64) -> Result<Pooled> {
    if estimates.len() < 2 {
        return Err(Error::InvalidParameter("pooling needs at least two estimates".into()));
    }
    if let Some((_, se)) = estimates.iter().find(|(_, se)| !(*se > 0.0 && se.is_finite())) {
        return Err(Error::InvalidParameter(format!("standard error {se} must be positive")));
    }
    let wsum: f64 = estimates.iter().map(|(_, se)| se.powi(-2)).sum();
    let estimate = estimates.iter().map(|(e, se)| e * se.powi(-2)).sum::<f64>() / wsum;
    let se = wsum.powf(-0.5);
    let z = std_normal_quantile(0.5 + level / 2.0);
    Ok(Pooled { estimate, se, lower: estimate - z * se, upper: estimate + z * se, level })
}
