//! Synthetic stand-ins for the ISTAT, France 2019 and IDL 2016 sampling frames.
//!
//! Entrant counts per calendar year are proportional to a geometric birth
//! flow times the probability of being included in the frame, so a frame
//! with `total` records has the age structure a real register would show.

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::distributions::LifetimeModel;
use crate::error::{Error, Result};
use crate::lifetimes::{generate_lexis, years_between, Dataset, GeneratorConfig, SamplingFrame, Scheme, Sex, Status, YearCount};
use crate::rng::{stream, stream2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub frame: SamplingFrame,
    /// First calendar year in which entrants reach the threshold age.
    pub first_entry_year: i32,
    /// Yearly log growth of the number reaching the threshold.
    pub growth: f64,
    pub total: usize,
    /// Exact number of censored records to reproduce, searched over seeds.
    pub censored: Option<usize>,
    /// Men as (total, of which censored).
    pub men: Option<(usize, usize)>,
    pub male_fraction: f64,
    pub model: LifetimeModel,
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

/// Italy 2009–2015, left-truncated and right-censored, above 108:
/// 415 exceedances, 94 censored, 40 men of whom 15 censored.
pub fn istat() -> Preset {
    Preset {
        name: "ISTAT".into(),
        frame: SamplingFrame { begin: date(2009, 1, 1), end: date(2016, 1, 1), scheme: Scheme::LeftTruncRightCens, threshold_age_u: 108.0 },
        first_entry_year: 1990,
        growth: 0.1,
        total: 415,
        censored: Some(94),
        men: Some((40, 15)),
        male_fraction: 0.0,
        model: LifetimeModel::Exponential { sigma: 1.45 },
    }
}

/// France, doubly truncated above 108 with 1210 exceedances, deaths from
/// 1987 to 2017. The growth rate reproduces the published standard error of
/// the exponential scale.
pub fn france() -> Preset {
    Preset {
        name: "France".into(),
        frame: SamplingFrame { begin: date(1987, 1, 1), end: date(2018, 1, 1), scheme: Scheme::DoublyTruncated, threshold_age_u: 108.0 },
        first_entry_year: 1967,
        growth: 0.11,
        total: 1210,
        censored: None,
        men: None,
        male_fraction: 0.1,
        model: LifetimeModel::Exponential { sigma: 1.41 },
    }
}

/// IDL 2016 without the French records, doubly truncated above 110 with 566 exceedances.
pub fn idl_minus_france() -> Preset {
    Preset {
        name: "IDL".into(),
        frame: SamplingFrame { begin: date(1995, 1, 1), end: date(2006, 1, 1), scheme: Scheme::DoublyTruncated, threshold_age_u: 110.0 },
        first_entry_year: 1975,
        growth: 0.0,
        total: 566,
        censored: None,
        men: None,
        male_fraction: 0.1,
        model: LifetimeModel::Exponential { sigma: 1.42 },
    }
}

pub fn all() -> Vec<Preset> {
    vec![istat(), france(), idl_minus_france()]
}

pub fn by_name(name: &str) -> Result<Preset> {
    match name.to_ascii_lowercase().as_str() {
        "istat" => Ok(istat()),
        "france" => Ok(france()),
        "idl" => Ok(idl_minus_france()),
        other => Err(Error::InvalidConfig(format!("unknown preset '{other}' (expected istat, france or idl)"))),
    }
}

impl Preset {
    /// Probability that someone reaching the threshold at `t` is in the frame.
    fn inclusion(&self, t: NaiveDate) -> f64 {
        let f = &self.frame;
        let lower = years_between(t, f.begin).max(0.0);
        let upper = years_between(t, f.end);
        if upper <= 0.0 {
            return 0.0;
        }
        match f.scheme {
            Scheme::LeftTruncRightCens => self.model.sf(lower),
            Scheme::DoublyTruncated => self.model.sf(lower) - self.model.sf(upper),
        }
    }

    pub fn config(&self) -> Result<GeneratorConfig> {
        let last = self.frame.end.pred_opt().expect("valid date").year();
        if self.first_entry_year > last {
            return Err(Error::InvalidConfig("empty entry window".into()));
        }
        let weights: Vec<f64> = (self.first_entry_year..=last)
            .map(|y| {
                // average inclusion over the middle of each month
                let inc: f64 = (1..=12).map(|m| self.inclusion(date(y, m, 15))).sum::<f64>() / 12.0;
                (self.growth * (y - self.first_entry_year) as f64).exp() * inc
            })
            .collect();
        let counts = allocate(self.total, &weights);
        let entries = (self.first_entry_year..=last)
            .zip(counts)
            .filter(|(_, c)| *c > 0)
            .map(|(year, count)| YearCount { year, count })
            .collect();
        Ok(GeneratorConfig { frame: self.frame, entries, male_fraction: self.male_fraction, label: self.name.clone() })
    }

    /// Simulates the preset, searching successive streams for one with the
    /// configured number of censored records.
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        self.generate_with(&self.model, seed)
    }

    /// As [`Preset::generate`], with lifetimes from another model.
    pub fn generate_with(&self, model: &LifetimeModel, seed: u64) -> Result<Dataset> {
        let config = self.config()?;
        let mut ds = None;
        for k in 0..20_000u64 {
            let s = stream2(seed, k, 0).next_u64();
            let d = generate_lexis(&config, model, s)?;
            let cens = d.len() - d.n_deaths();
            if self.censored.is_none_or(|c| c == cens) {
                ds = Some(d);
                break;
            }
        }
        let mut ds = ds.ok_or_else(|| Error::Infeasible(format!("no simulated {} frame has the requested censoring", self.name)))?;
        if let Some((men, men_censored)) = self.men {
            assign_men(&mut ds, men, men_censored, seed)?;
        }
        Ok(ds)
    }
}

fn assign_men(ds: &mut Dataset, men: usize, men_censored: usize, seed: u64) -> Result<()> {
    let mut dead: Vec<usize> = (0..ds.len()).filter(|&i| ds.records[i].status == Status::Dead).collect();
    let mut cens: Vec<usize> = (0..ds.len()).filter(|&i| ds.records[i].status == Status::Censored).collect();
    if men_censored > cens.len() || men < men_censored || men - men_censored > dead.len() {
        return Err(Error::InvalidConfig("requested sex split does not fit the simulated frame".into()));
    }
    let mut rng = stream(seed, 1 << 40);
    dead.shuffle(&mut rng);
    cens.shuffle(&mut rng);
    for r in ds.records.iter_mut() {
        r.sex = Sex::F;
    }
    for &i in dead.iter().take(men - men_censored).chain(cens.iter().take(men_censored)) {
        ds.records[i].sex = Sex::M;
    }
    Ok(())
}

/// Splits `total` in proportion to `weights` by largest remainders.
fn allocate(total: usize, weights: &[f64]) -> Vec<usize> {
    let s: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / s).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest: Vec<usize> = (0..weights.len()).collect();
    rest.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let missing = total - counts.iter().sum::<usize>();
    for &i in rest.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}
