//! Fits over a range of thresholds, for parameter-stability tables and plots.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::Family;
use crate::error::{Error, Result};
use crate::inference::{self, BootTest, CiParam, Interval, TestResult};
use crate::lifetimes::ExcessSample;
use crate::likelihood::{fit_mle, FitOptions, FitResult};

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub families: Vec<Family>,
    /// Rows with fewer exceedances are reported but not fitted.
    pub min_exceedances: usize,
    pub level: f64,
    pub profile_cis: bool,
    /// Bootstrap replicates and seed for the Gompertz boundary test.
    pub gompertz_bootstrap: Option<(usize, u64)>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            families: vec![Family::Gpd, Family::Exponential],
            min_exceedances: 20,
            level: 0.95,
            profile_cis: true,
            gompertz_bootstrap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub n_u: usize,
    pub n_deaths: usize,
    pub gpd: Option<FitResult>,
    pub exponential: Option<FitResult>,
    pub gompertz: Option<FitResult>,
    pub p_lrt: Option<f64>,
    pub p_inf: Option<f64>,
    pub gamma_ci: Option<Interval>,
    pub sigma_e_ci: Option<Interval>,
    pub gompertz_test: Option<TestResult>,
    /// Why the row is incomplete, if it is.
    pub flag: Option<String>,
}

impl ThresholdRow {
    fn empty(threshold: f64, n_u: usize, n_deaths: usize, flag: String) -> Self {
        Self {
            threshold,
            n_u,
            n_deaths,
            gpd: None,
            exponential: None,
            gompertz: None,
            p_lrt: None,
            p_inf: None,
            gamma_ci: None,
            sigma_e_ci: None,
            gompertz_test: None,
            flag: Some(flag),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityTable {
    pub level: f64,
    pub rows: Vec<ThresholdRow>,
}

/// Integer thresholds from the sample's own, stopping before the first with
/// fewer than `min_exceedances`.
pub fn default_thresholds(sample: &ExcessSample, min_exceedances: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut u = sample.threshold;
    while let Ok(s) = sample.rethreshold(u) {
        if s.len() < min_exceedances {
            break;
        }
        out.push(u);
        u += 1.0;
    }
    out
}

/// Fits the requested families at each threshold. Rows are independent and
/// evaluated in parallel.
pub fn threshold_sweep(sample: &ExcessSample, thresholds: &[f64], opts: &SweepOptions) -> Result<StabilityTable> {
    if thresholds.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("thresholds must be strictly increasing".into()));
    }
    let rows = thresholds.par_iter().map(|&u| sweep_row(sample, u, opts)).collect::<Result<Vec<_>>>()?;
    Ok(StabilityTable { level: opts.level, rows })
}

fn sweep_row(sample: &ExcessSample, u: f64, opts: &SweepOptions) -> Result<ThresholdRow> {
    let s = match sample.rethreshold(u) {
        Ok(s) => s,
        Err(Error::EmptyExceedances(_)) => return Ok(ThresholdRow::empty(u, 0, 0, "no exceedances".into())),
        Err(e) => return Err(e),
    };
    if s.len() < opts.min_exceedances {
        let flag = format!("fewer than {} exceedances", opts.min_exceedances);
        return Ok(ThresholdRow::empty(u, s.len(), s.n_deaths(), flag));
    }
    let fo = FitOptions::default();
    let mut row = ThresholdRow::empty(u, s.len(), s.n_deaths(), String::new());
    row.flag = None;
    let mut problems = Vec::new();
    let want = |f: Family| opts.families.contains(&f);
    if want(Family::Gpd) {
        match inference::gamma_zero(&s, &fo) {
            Ok(g) => {
                row.p_lrt = Some(g.test.p_value);
                row.p_inf = Some(g.p_infinity);
                row.gpd = Some(g.gpd);
                row.exponential = Some(g.exponential);
            }
            Err(e) => problems.push(format!("gpd: {e}")),
        }
        if opts.profile_cis {
            match inference::profile_ci(&s, CiParam::Gamma, opts.level) {
                Ok(ci) => row.gamma_ci = Some(ci),
                Err(e) => problems.push(format!("gamma interval: {e}")),
            }
        }
    }
    if want(Family::Exponential) {
        if row.exponential.is_none() {
            match inference::fit_exponential(&s, &fo) {
                Ok(f) => row.exponential = Some(f),
                Err(e) => problems.push(format!("exponential: {e}")),
            }
        }
        if opts.profile_cis {
            match inference::profile_ci(&s, CiParam::SigmaE, opts.level) {
                Ok(ci) => row.sigma_e_ci = Some(ci),
                Err(e) => problems.push(format!("sigma_e interval: {e}")),
            }
        }
    }
    if want(Family::Gompertz) {
        match fit_mle(&s, Family::Gompertz, None, &fo) {
            Ok(f) => row.gompertz = Some(f),
            Err(e) => problems.push(format!("gompertz: {e}")),
        }
        let test = match opts.gompertz_bootstrap {
            Some((n, seed)) => inference::bootstrap_p_value(&s, BootTest::GompertzBoundary, n, seed),
            None => inference::boundary_lrt_gompertz(&s),
        };
        match test {
            Ok(t) => row.gompertz_test = Some(t),
            Err(e) => problems.push(format!("gompertz test: {e}")),
        }
    }
    if !opts.families.contains(&Family::Exponential) {
        row.exponential = None;
    }
    if !problems.is_empty() {
        row.flag = Some(problems.join("; "));
    }
    Ok(row)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl StabilityTable {
    /// One line per threshold, with the columns of a Table-1 style summary.
    pub fn write_table_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["threshold", "n_u", "sigma", "sigma_se", "gamma", "gamma_se", "sigma_e", "sigma_e_se", "p_lrt", "p_inf"])?;
        for r in &self.rows {
            let g = r.gpd.as_ref();
            let e = r.exponential.as_ref();
            out.write_record([
                r.threshold.to_string(),
                r.n_u.to_string(),
                cell(g.and_then(|f| f.estimate("sigma"))),
                cell(g.and_then(|f| f.se("sigma"))),
                cell(g.and_then(|f| f.estimate("gamma"))),
                cell(g.and_then(|f| f.se("gamma"))),
                cell(e.and_then(|f| f.estimate("sigma"))),
                cell(e.and_then(|f| f.se("sigma"))),
                cell(r.p_lrt),
                cell(r.p_inf),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Long format for stability plots: one line per threshold, family and parameter.
    pub fn write_long_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["threshold", "estimate", "ci_lo", "ci_hi", "family", "parameter"])?;
        let z = inference::std_normal_quantile(0.5 + self.level / 2.0);
        for r in &self.rows {
            let fits = [(Family::Gpd, &r.gpd), (Family::Exponential, &r.exponential), (Family::Gompertz, &r.gompertz)];
            for (family, fit) in fits {
                let Some(fit) = fit else { continue };
                for (i, name) in family.parameter_names().iter().enumerate() {
                    let est = fit.model.parameters()[i];
                    let profile = match (family, *name) {
                        (Family::Gpd, "gamma") => r.gamma_ci,
                        (Family::Exponential, "sigma") => r.sigma_e_ci,
                        _ => None,
                    };
                    let (lo, hi) = match profile {
                        Some(ci) => (Some(ci.lower), Some(ci.upper)),
                        None => match fit.std_errors.as_ref().map(|s| s[i]) {
                            Some(se) => (Some(est - z * se), Some(est + z * se)),
                            None => (None, None),
                        },
                    };
                    out.write_record([r.threshold.to_string(), est.to_string(), cell(lo), cell(hi), family.to_string(), name.to_string()])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}
