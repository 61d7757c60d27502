//! Individual lifetimes observed through a calendar sampling frame.
//!
//! A [`Dataset`] holds validated [`LifetimeRecord`]s together with the
//! [`SamplingFrame`] they were drawn under. Likelihood code works on the
//! derived [`ExcessSample`], which carries, per individual, the excess
//! lifetime in years and the truncation bounds implied by the frame.

use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::LifetimeModel;
use crate::error::{Error, Result};
use crate::rng::stream;

/// Days per year for calendar-to-year conversion.
pub const DAYS_PER_YEAR: f64 = 365.25;

/// Years elapsed from `from` to `to` (negative if `to` precedes `from`).
pub fn years_between(from: NaiveDate, to: NaiveDate) -> f64 {
    (to - from).num_days() as f64 / DAYS_PER_YEAR
}

fn add_days(d: NaiveDate, days: i64) -> NaiveDate {
    d + chrono::Duration::days(days)
}

/// Date at which someone born on `birth` reaches `age` years.
pub fn date_at_age(birth: NaiveDate, age: f64) -> NaiveDate {
    if age.fract() == 0.0 {
        let y = birth.year() + age as i32;
        if let Some(d) = birth.with_year(y) {
            return d;
        }
        // 29 February birthdays fall on 1 March in common years
        return NaiveDate::from_ymd_opt(y, 3, 1).expect("valid date");
    }
    add_days(birth, (age * DAYS_PER_YEAR).round() as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Left-truncated at the frame start, right-censored at the frame end.
    #[serde(rename = "ltrc", alias = "LeftTruncRightCens")]
    LeftTruncRightCens,
    /// Only deaths inside the frame are observed.
    #[serde(rename = "dt", alias = "doubly", alias = "DoublyTruncated")]
    DoublyTruncated,
}

/// Calendar window `(begin, end)` and threshold age `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingFrame {
    pub begin: NaiveDate,
    pub end: NaiveDate,
    pub scheme: Scheme,
    #[serde(rename = "u")]
    pub threshold_age_u: f64,
}

impl SamplingFrame {
    pub fn new(begin: NaiveDate, end: NaiveDate, scheme: Scheme, threshold_age_u: f64) -> Result<Self> {
        Self { begin, end, scheme, threshold_age_u }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.begin >= self.end {
            return Err(Error::InvalidConfig(format!(
                "frame begin {} is not before end {}",
                self.begin, self.end
            )));
        }
        if !(self.threshold_age_u > 0.0 && self.threshold_age_u.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "threshold age must be positive, got {}",
                self.threshold_age_u
            )));
        }
        Ok(self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<SamplingFrame>(s)?.validated()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Frame length in years.
    pub fn length_years(&self) -> f64 {
        years_between(self.begin, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Dead,
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Sex {
    F,
    M,
    #[default]
    Unknown,
}

impl Sex {
    fn parse(s: &str) -> Option<Sex> {
        match s.trim() {
            "F" | "f" | "female" | "Female" | "W" | "w" => Some(Sex::F),
            "M" | "m" | "male" | "Male" => Some(Sex::M),
            "" | "U" | "u" | "NA" | "unknown" => Some(Sex::Unknown),
            _ => None,
        }
    }

    fn code(self) -> &'static str {
        match self {
            Sex::F => "F",
            Sex::M => "M",
            Sex::Unknown => "U",
        }
    }
}

/// One individual who reached the threshold age.
#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeRecord {
    pub id: String,
    pub birth_date: Option<NaiveDate>,
    /// Date the threshold age was reached (t).
    pub entry_date: NaiveDate,
    /// Date of death, or the frame end for censored records.
    pub exit_date: NaiveDate,
    pub status: Status,
    pub sex: Sex,
    pub birth_cohort: i32,
}

impl LifetimeRecord {
    /// Excess lifetime in whole days; deaths on the entry day count as one day.
    pub fn excess_days(&self) -> i64 {
        let d = (self.exit_date - self.entry_date).num_days();
        if d == 0 && self.status == Status::Dead {
            1
        } else {
            d
        }
    }

    /// Excess lifetime x in years.
    pub fn excess_x(&self) -> f64 {
        self.excess_days() as f64 / DAYS_PER_YEAR
    }

    fn check(&self, frame: &SamplingFrame, row: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::FrameViolation { row, msg });
        if self.exit_date < self.entry_date {
            return fail(format!("exit {} precedes entry {}", self.exit_date, self.entry_date));
        }
        if self.entry_date >= frame.end {
            return fail(format!("threshold age reached on {} at or after frame end", self.entry_date));
        }
        match (frame.scheme, self.status) {
            (Scheme::DoublyTruncated, Status::Censored) => {
                fail("censored record under a doubly truncated scheme".into())
            }
            (Scheme::DoublyTruncated, Status::Dead) => {
                if self.exit_date < frame.begin {
                    fail(format!("death {} before frame begin {}", self.exit_date, frame.begin))
                } else if self.exit_date > frame.end {
                    fail(format!("death {} after frame end {}", self.exit_date, frame.end))
                } else {
                    Ok(())
                }
            }
            (Scheme::LeftTruncRightCens, Status::Dead) => {
                if self.exit_date <= frame.begin {
                    fail(format!("death {} not after frame begin {}", self.exit_date, frame.begin))
                } else if self.exit_date > frame.end {
                    fail(format!("death {} after frame end {}", self.exit_date, frame.end))
                } else {
                    Ok(())
                }
            }
            (Scheme::LeftTruncRightCens, Status::Censored) => {
                if self.exit_date != frame.end {
                    fail(format!("censored record exits on {} instead of frame end", self.exit_date))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// (b − t)₊ in years.
pub fn truncation_offset(record: &LifetimeRecord, frame: &SamplingFrame) -> f64 {
    years_between(record.entry_date, frame.begin).max(0.0)
}

/// A validated collection of records observed under one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frame: SamplingFrame,
    pub records: Vec<LifetimeRecord>,
    pub label: String,
}

impl Dataset {
    pub fn new(frame: SamplingFrame, records: Vec<LifetimeRecord>, label: impl Into<String>) -> Result<Self> {
        let frame = frame.validated()?;
        for (i, r) in records.iter().enumerate() {
            r.check(&frame, i + 1)?;
        }
        Ok(Self { frame, records, label: label.into() })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_deaths(&self) -> usize {
        self.records.iter().filter(|r| r.status == Status::Dead).count()
    }

    /// Subset of records, keeping the frame.
    pub fn filter(&self, label: impl Into<String>, keep: impl Fn(&LifetimeRecord) -> bool) -> Dataset {
        Dataset {
            frame: self.frame,
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            label: label.into(),
        }
    }

    /// Excess sample at the frame's own threshold.
    pub fn sample(&self) -> ExcessSample {
        let frame = &self.frame;
        let obs = self
            .records
            .iter()
            .map(|r| Exceedance::from_record(r, frame))
            .collect();
        ExcessSample { scheme: frame.scheme, threshold: frame.threshold_age_u, obs }
    }

    /// Excess sample re-derived at a higher threshold age.
    pub fn at_threshold(&self, u: f64) -> Result<ExcessSample> {
        self.sample().rethreshold(u)
    }

    pub fn load_csv(path: impl AsRef<Path>, frame: SamplingFrame, label: impl Into<String>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, frame, label)
    }

    pub fn read_csv<R: std::io::Read>(reader: R, frame: SamplingFrame, label: impl Into<String>) -> Result<Self> {
        let frame = frame.validated()?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut records = Vec::new();
        for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
            let row_no = i + 1;
            let row = row.map_err(|e| Error::Parse { row: row_no, msg: e.to_string() })?;
            let rec = row.into_record(&frame, row_no)?;
            rec.check(&frame, row_no)?;
            records.push(rec);
        }
        Ok(Self { frame, records, label: label.into() })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(file)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "id",
            "birth_date",
            "entry_date",
            "death_date",
            "sex",
            "cohort",
            "excess_years",
            "offset_years",
            "status",
        ])?;
        for r in &self.records {
            let death = match r.status {
                Status::Dead => r.exit_date.to_string(),
                Status::Censored => String::new(),
            };
            w.write_record([
                r.id.clone(),
                r.birth_date.map(|d| d.to_string()).unwrap_or_default(),
                r.entry_date.to_string(),
                death,
                r.sex.code().to_string(),
                r.birth_cohort.to_string(),
                format!("{:.6}", r.excess_x()),
                format!("{:.6}", truncation_offset(r, &self.frame)),
                match r.status {
                    Status::Dead => "dead".to_string(),
                    Status::Censored => "censored".to_string(),
                },
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    id: String,
    #[serde(default)]
    birth_date: String,
    #[serde(default)]
    entry_date: String,
    #[serde(default)]
    death_date: String,
    #[serde(default)]
    sex: String,
    #[serde(default)]
    cohort: String,
}

impl CsvRow {
    fn into_record(self, frame: &SamplingFrame, row: usize) -> Result<LifetimeRecord> {
        let date = |field: &str, s: &str| -> Result<Option<NaiveDate>> {
            if s.is_empty() {
                return Ok(None);
            }
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map(Some)
                .map_err(|e| Error::Parse { row, msg: format!("bad {field} '{s}': {e}") })
        };
        let birth = date("birth_date", &self.birth_date)?;
        let entry = match (date("entry_date", &self.entry_date)?, birth) {
            (Some(e), _) => e,
            (None, Some(b)) => date_at_age(b, frame.threshold_age_u),
            (None, None) => {
                return Err(Error::Parse { row, msg: "either entry_date or birth_date is required".into() })
            }
        };
        let (exit, status) = match date("death_date", &self.death_date)? {
            Some(d) => (d, Status::Dead),
            None => (frame.end, Status::Censored),
        };
        let sex = Sex::parse(&self.sex).ok_or_else(|| Error::Parse { row, msg: format!("bad sex '{}'", self.sex) })?;
        let birth_cohort = if self.cohort.is_empty() {
            match birth {
                Some(b) => b.year(),
                None => {
                    // infer from the threshold age
                    entry.year() - frame.threshold_age_u.floor() as i32
                }
            }
        } else {
            self.cohort
                .parse()
                .map_err(|e| Error::Parse { row, msg: format!("bad cohort '{}': {e}", self.cohort) })?
        };
        Ok(LifetimeRecord { id: self.id, birth_date: birth, entry_date: entry, exit_date: exit, status, sex, birth_cohort })
    }
}

/// One individual's contribution on the excess scale (years).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exceedance {
    /// Observed excess: age at death, or at censoring, minus u.
    pub excess: f64,
    /// Excess at which observation began, (b − t)₊.
    pub lower: f64,
    /// Excess reached at the frame end, e − t.
    pub upper: f64,
    pub dead: bool,
    pub sex: Sex,
    pub cohort: i32,
}

impl Exceedance {
    pub fn from_record(r: &LifetimeRecord, frame: &SamplingFrame) -> Self {
        Exceedance {
            excess: r.excess_x(),
            lower: truncation_offset(r, frame),
            upper: years_between(r.entry_date, frame.end),
            dead: r.status == Status::Dead,
            sex: r.sex,
            cohort: r.birth_cohort,
        }
    }
}

/// How replicate samples are drawn conditionally on an observed sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// Keep entry times and truncation; draw fresh lifetimes and apply the
    /// frame (censor past `upper` for LTRC, truncate to the window otherwise).
    Frame,
    /// Also keep the censoring indicators: deaths are redrawn inside
    /// `(lower, upper]`, censored individuals stay censored.
    Status,
}

/// Exceedances of a threshold together with their sampling scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcessSample {
    pub scheme: Scheme,
    pub threshold: f64,
    pub obs: Vec<Exceedance>,
}

impl ExcessSample {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn n_deaths(&self) -> usize {
        self.obs.iter().filter(|o| o.dead).count()
    }

    /// Largest excess the model must support with positive density or survival.
    pub fn max_excess(&self) -> f64 {
        self.obs.iter().map(|o| o.excess).fold(0.0, f64::max)
    }

    /// Oldest attained age in the sample.
    pub fn max_age(&self) -> f64 {
        self.threshold + self.max_excess()
    }

    /// Keeps individuals whose excess exceeds `u - threshold` and shifts
    /// their entry to the date they reached age `u`.
    pub fn rethreshold(&self, u: f64) -> Result<ExcessSample> {
        let d = u - self.threshold;
        if d < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "threshold {u} is below the sample threshold {}",
                self.threshold
            )));
        }
        let obs: Vec<Exceedance> = self
            .obs
            .iter()
            .filter(|o| o.excess > d)
            .map(|o| Exceedance {
                excess: o.excess - d,
                lower: (o.lower - d).max(0.0),
                upper: o.upper - d,
                ..*o
            })
            .collect();
        if obs.is_empty() {
            return Err(Error::EmptyExceedances(u));
        }
        Ok(ExcessSample { scheme: self.scheme, threshold: u, obs })
    }

    pub fn filter(&self, keep: impl Fn(&Exceedance) -> bool) -> ExcessSample {
        ExcessSample { scheme: self.scheme, threshold: self.threshold, obs: self.obs.iter().filter(|o| keep(o)).copied().collect() }
    }

    /// Fresh lifetimes from `model`, conditioned on this sample's frame.
    pub fn simulate<R: Rng + ?Sized>(&self, model: &LifetimeModel, how: Conditioning, rng: &mut R) -> Result<ExcessSample> {
        let mut obs = Vec::with_capacity(self.obs.len());
        for o in &self.obs {
            let new = match (self.scheme, how) {
                (_, Conditioning::Status) if !o.dead => *o,
                (Scheme::LeftTruncRightCens, Conditioning::Frame) => {
                    let x = model.sample_truncated(o.lower, f64::INFINITY, rng)?;
                    if x >= o.upper {
                        Exceedance { excess: o.upper, dead: false, ..*o }
                    } else {
                        Exceedance { excess: x, dead: true, ..*o }
                    }
                }
                _ => {
                    let x = model.sample_truncated(o.lower, o.upper, rng)?;
                    Exceedance { excess: x, dead: true, ..*o }
                }
            };
            obs.push(new);
        }
        Ok(ExcessSample { scheme: self.scheme, threshold: self.threshold, obs })
    }
}

/// Number of individuals reaching the threshold age in one calendar year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearCount {
    pub year: i32,
    pub count: usize,
}

/// Settings for the synthetic Lexis-diagram generator.
///
/// Entry dates are uniform over the days of each configured year. Under
/// left truncation every configured entrant is included: those entering
/// before the frame start are drawn conditional on surviving to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub frame: SamplingFrame,
    pub entries: Vec<YearCount>,
    #[serde(default)]
    pub male_fraction: f64,
    #[serde(default = "default_label")]
    pub label: String,
}

fn default_label() -> String {
    "synthetic".to_string()
}

impl GeneratorConfig {
    /// Entrant counts growing geometrically by `growth` per year and summing to about `total`.
    pub fn geometric(frame: SamplingFrame, first_year: i32, last_year: i32, total: usize, growth: f64) -> Result<Self> {
        if last_year < first_year {
            return Err(Error::InvalidConfig("empty entry window".into()));
        }
        let w: Vec<f64> = (first_year..=last_year).map(|y| (growth * (y - first_year) as f64).exp()).collect();
        let s: f64 = w.iter().sum();
        let mut entries: Vec<YearCount> = (first_year..=last_year)
            .zip(&w)
            .map(|(year, wi)| YearCount { year, count: (total as f64 * wi / s).round() as usize })
            .collect();
        // absorb rounding in the last year so the total is exact
        let got: usize = entries.iter().map(|e| e.count).sum();
        if let Some(last) = entries.last_mut() {
            last.count = (last.count + total).saturating_sub(got);
        }
        Ok(Self { frame, entries, male_fraction: 0.0, label: default_label() })
    }

    pub fn total(&self) -> usize {
        self.entries.iter().map(|e| e.count).sum()
    }

    fn validate(&self) -> Result<()> {
        self.frame.validated()?;
        if self.entries.is_empty() || self.total() == 0 {
            return Err(Error::InvalidConfig("generator has no entrants".into()));
        }
        if !(0.0..=1.0).contains(&self.male_fraction) {
            return Err(Error::InvalidConfig(format!("male fraction {} outside [0, 1]", self.male_fraction)));
        }
        let last_year = self.frame.end.year();
        if let Some(bad) = self.entries.iter().find(|e| e.year > last_year) {
            return Err(Error::InvalidConfig(format!("entry year {} after frame end", bad.year)));
        }
        Ok(())
    }
}

/// Simulates a dataset on a Lexis diagram. A pure function of its inputs.
pub fn generate_lexis(config: &GeneratorConfig, model: &LifetimeModel, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let frame = config.frame;
    let u = frame.threshold_age_u;
    let mut rng = stream(seed, 0);
    let mut records = Vec::with_capacity(config.total());
    for yc in &config.entries {
        let start = NaiveDate::from_ymd_opt(yc.year, 1, 1).expect("valid year");
        let days_in_year = (NaiveDate::from_ymd_opt(yc.year + 1, 1, 1).expect("valid year") - start).num_days();
        for _ in 0..yc.count {
            let mut entry = add_days(start, rng.random_range(0..days_in_year));
            if entry >= frame.end {
                entry = add_days(frame.end, -1);
            }
            let male = rng.random::<f64>() < config.male_fraction;
            let lower = years_between(entry, frame.begin).max(0.0);
            let upper = years_between(entry, frame.end);
            let (exit, status) = match frame.scheme {
                Scheme::LeftTruncRightCens => {
                    let x = model.sample_truncated(lower, f64::INFINITY, &mut rng)?;
                    let mut death = add_days(entry, (x * DAYS_PER_YEAR).round() as i64);
                    if death <= frame.begin {
                        death = add_days(frame.begin, 1);
                    }
                    if death >= frame.end {
                        (frame.end, Status::Censored)
                    } else {
                        (death, Status::Dead)
                    }
                }
                Scheme::DoublyTruncated => {
                    let x = model.sample_truncated(lower, upper, &mut rng)?;
                    let death = add_days(entry, (x * DAYS_PER_YEAR).round() as i64).clamp(frame.begin.max(entry), frame.end);
                    (death, Status::Dead)
                }
            };
            let birth = add_days(entry, -((u * DAYS_PER_YEAR).round() as i64));
            records.push(LifetimeRecord {
                id: format!("{}{:06}", config.label.chars().next().unwrap_or('s'), records.len() + 1),
                birth_date: Some(birth),
                entry_date: entry,
                exit_date: exit,
                status,
                sex: if male { Sex::M } else { Sex::F },
                birth_cohort: birth.year(),
            });
        }
    }
    Dataset::new(frame, records, config.label.clone())
}
