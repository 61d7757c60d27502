//! Parametric models for excess lifetimes above a threshold.
//!
//! Three families are supported: the generalized Pareto distribution (GPD),
//! its exponential special case, and the Gompertz distribution. All
//! evaluation is done on the log scale where possible; survival-based
//! inversion keeps truncated sampling accurate far into the tail.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::open_unit;

/// Below this |γ| the GPD is evaluated through its series expansion in γ.
pub const GPD_SERIES_CUTOFF: f64 = 1e-6;

/// Family selector used by fitting routines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gpd,
    #[serde(alias = "exp")]
    Exponential,
    Gompertz,
}

impl Family {
    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            Family::Gpd => &["sigma", "gamma"],
            Family::Exponential => &["sigma"],
            Family::Gompertz => &["sigma", "beta"],
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gpd" | "gp" => Ok(Family::Gpd),
            "exp" | "exponential" => Ok(Family::Exponential),
            "gompertz" => Ok(Family::Gompertz),
            other => Err(Error::InvalidParameter(format!("unknown family '{other}'"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Family::Gpd => "gpd",
            Family::Exponential => "exponential",
            Family::Gompertz => "gompertz",
        };
        f.write_str(s)
    }
}

/// A lifetime distribution for the excess `x = age - u`, in years.
///
/// Serialized as `{"family":"gpd","sigma":1.47,"gamma":-0.01}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum LifetimeModel {
    Gpd {
        sigma: f64,
        gamma: f64,
    },
    #[serde(alias = "exp")]
    Exponential {
        sigma: f64,
    },
    Gompertz {
        sigma: f64,
        beta: f64,
    },
}

impl LifetimeModel {
    pub fn gpd(sigma: f64, gamma: f64) -> Result<Self> {
        Self::Gpd { sigma, gamma }.validated()
    }

    pub fn exponential(sigma: f64) -> Result<Self> {
        Self::Exponential { sigma }.validated()
    }

    pub fn gompertz(sigma: f64, beta: f64) -> Result<Self> {
        Self::Gompertz { sigma, beta }.validated()
    }

    /// Checks parameter constraints, returning the model unchanged if valid.
    pub fn validated(self) -> Result<Self> {
        let sigma = self.sigma();
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        match self {
            LifetimeModel::Gpd { gamma, .. } if !gamma.is_finite() => {
                Err(Error::InvalidParameter(format!("gamma must be finite, got {gamma}")))
            }
            LifetimeModel::Gompertz { beta, .. } if !(beta >= 0.0 && beta.is_finite()) => {
                Err(Error::InvalidParameter(format!("beta must be non-negative, got {beta}")))
            }
            _ => Ok(self),
        }
    }

    /// Parses and validates the JSON form.
    pub fn from_json(s: &str) -> Result<Self> {
        let m: LifetimeModel = serde_json::from_str(s)?;
        m.validated()
    }

    /// Parses the compact CLI form `exp:1.45`, `gpd:1.47:-0.01`, `gompertz:1.4:0.05`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(|| Error::InvalidParameter(format!("model '{s}' is incomplete")))?
                .parse::<f64>()
                .map_err(|e| Error::InvalidParameter(format!("model '{s}': {e}")))
        };
        match parts[0].parse::<Family>()? {
            Family::Exponential => Self::exponential(num(1)?),
            Family::Gpd => Self::gpd(num(1)?, num(2)?),
            Family::Gompertz => Self::gompertz(num(1)?, num(2)?),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            LifetimeModel::Gpd { .. } => Family::Gpd,
            LifetimeModel::Exponential { .. } => Family::Exponential,
            LifetimeModel::Gompertz { .. } => Family::Gompertz,
        }
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            LifetimeModel::Gpd { sigma, .. }
            | LifetimeModel::Exponential { sigma }
            | LifetimeModel::Gompertz { sigma, .. } => sigma,
        }
    }

    /// Parameter vector in the order of [`Family::parameter_names`].
    pub fn parameters(&self) -> Vec<f64> {
        match *self {
            LifetimeModel::Gpd { sigma, gamma } => vec![sigma, gamma],
            LifetimeModel::Exponential { sigma } => vec![sigma],
            LifetimeModel::Gompertz { sigma, beta } => vec![sigma, beta],
        }
    }

    /// Finite upper endpoint of the excess distribution, if any.
    pub fn endpoint(&self) -> Option<f64> {
        match *self {
            LifetimeModel::Gpd { sigma, gamma } if gamma < 0.0 => Some(-sigma / gamma),
            _ => None,
        }
    }

    /// log S(x).
    pub fn log_sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x == f64::INFINITY {
            return f64::NEG_INFINITY;
        }
        match *self {
            LifetimeModel::Exponential { sigma } => -x / sigma,
            LifetimeModel::Gpd { sigma, gamma } => gpd_log_sf(x / sigma, gamma),
            LifetimeModel::Gompertz { sigma, beta } => gompertz_log_sf(x / sigma, beta),
        }
    }

    pub fn sf(&self, x: f64) -> f64 {
        self.log_sf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        -self.log_sf(x).exp_m1()
    }

    /// log of the hazard, `-inf`/`+inf` outside the support.
    pub fn log_hazard(&self, x: f64) -> f64 {
        match *self {
            LifetimeModel::Exponential { sigma } => -sigma.ln(),
            LifetimeModel::Gpd { sigma, gamma } => {
                let r = sigma + gamma * x;
                if r > 0.0 {
                    -r.ln()
                } else {
                    f64::INFINITY
                }
            }
            LifetimeModel::Gompertz { sigma, beta } => beta * x / sigma - sigma.ln(),
        }
    }

    /// log f(x).
    pub fn log_pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return f64::NEG_INFINITY;
        }
        let ls = self.log_sf(x);
        if ls == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        self.log_hazard(x) + ls
    }

    /// Density, evaluated from its closed form.
    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match *self {
            LifetimeModel::Exponential { sigma } => (-x / sigma).exp() / sigma,
            LifetimeModel::Gpd { sigma, gamma } => {
                if gamma.abs() < GPD_SERIES_CUTOFF {
                    return self.log_pdf(x).exp();
                }
                let z = 1.0 + gamma * x / sigma;
                if z <= 0.0 {
                    return 0.0;
                }
                z.powf(-1.0 / gamma - 1.0) / sigma
            }
            LifetimeModel::Gompertz { sigma, beta } => {
                let y = x / sigma;
                if beta == 0.0 {
                    return (-y).exp() / sigma;
                }
                (beta * y).exp() * (-(beta * y).exp_m1() / beta).exp() / sigma
            }
        }
    }

    /// Hazard h(x) = f(x)/S(x).
    pub fn hazard(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::OutOfSupport { x });
        }
        if let Some(end) = self.endpoint() {
            if x >= end {
                return Err(Error::OutOfSupport { x });
            }
        }
        Ok(self.log_hazard(x).exp())
    }

    /// The x with -log S(x) = `cum_hazard`.
    pub fn inverse_cum_hazard(&self, cum_hazard: f64) -> f64 {
        let l = cum_hazard;
        match *self {
            LifetimeModel::Exponential { sigma } => sigma * l,
            LifetimeModel::Gpd { sigma, gamma } => {
                if gamma.abs() < GPD_SERIES_CUTOFF {
                    sigma * l * (1.0 + gamma * l / 2.0 + gamma * gamma * l * l / 6.0)
                } else {
                    sigma * (gamma * l).exp_m1() / gamma
                }
            }
            LifetimeModel::Gompertz { sigma, beta } => {
                if beta == 0.0 {
                    sigma * l
                } else {
                    sigma * (beta * l).ln_1p() / beta
                }
            }
        }
    }

    /// Quantile function F⁻¹(p).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("probability {p} outside [0, 1]")));
        }
        Ok(self.inverse_cum_hazard(-(-p).ln_1p()))
    }

    /// Probability of surviving one more year at excess age `x`.
    pub fn survive_one_year(&self, x: f64) -> f64 {
        let ls0 = self.log_sf(x);
        let ls1 = self.log_sf(x + 1.0);
        if ls1 == f64::NEG_INFINITY || ls0 == f64::NEG_INFINITY {
            return 0.0;
        }
        (ls1 - ls0).exp()
    }

    /// Unconditional draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.inverse_cum_hazard(-(-open_unit(rng)).ln_1p())
    }

    /// Draw from X | lower < X <= upper by inversion of the conditional
    /// survival function. `upper` may be `f64::INFINITY`.
    pub fn sample_truncated<R: Rng + ?Sized>(&self, lower: f64, upper: f64, rng: &mut R) -> Result<f64> {
        let (lo_ls, diff) = self.truncation_log_terms(lower, upper)?;
        let u = open_unit(rng);
        // log S(X) = log S(lower) + log(1 - u (1 - S(upper)/S(lower)))
        let target = lo_ls + (u * diff.exp_m1()).ln_1p();
        let x = self.inverse_cum_hazard(-target);
        Ok(x.clamp(lower, upper))
    }

    /// Returns `(log S(lower), log S(upper) - log S(lower))`, checking that
    /// the interval carries positive probability.
    fn truncation_log_terms(&self, lower: f64, upper: f64) -> Result<(f64, f64)> {
        if !(lower >= 0.0 && upper > lower) {
            return Err(Error::DegenerateInterval { lower, upper });
        }
        let lo_ls = self.log_sf(lower);
        let hi_ls = self.log_sf(upper);
        if lo_ls == f64::NEG_INFINITY || !(hi_ls < lo_ls) {
            return Err(Error::DegenerateInterval { lower, upper });
        }
        Ok((lo_ls, hi_ls - lo_ls))
    }
}

fn gpd_log_sf(y: f64, gamma: f64) -> f64 {
    if gamma.abs() < GPD_SERIES_CUTOFF {
        // -log1p(γy)/γ expanded to second order in γ
        return -(y - gamma * y * y / 2.0 + gamma * gamma * y * y * y / 3.0);
    }
    let z = gamma * y;
    if z <= -1.0 {
        return f64::NEG_INFINITY;
    }
    -z.ln_1p() / gamma
}

fn gompertz_log_sf(y: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        return -y;
    }
    -(beta * y).exp_m1() / beta
}

/// log S(x) of a GPD written in terms of its (σ, γ) parameters; exposed for
/// callers that evaluate many observations without building a model.
#[inline]
pub fn gpd_log_survival(x: f64, sigma: f64, gamma: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gpd_log_sf(x / sigma, gamma)
    }
}
