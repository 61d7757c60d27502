//! Hazard estimation beyond the parametric families: a spline-augmented
//! reciprocal hazard on a grid of days, with bootstrap bands, and
//! exponential fits restricted to yearly age blocks.

use std::io::Write;

use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::inference::{replicate, std_normal_quantile};
use crate::lifetimes::{ExcessSample, Scheme, DAYS_PER_YEAR};
use crate::optim::{maximize_with_gradient, OptimOptions};
use crate::rng::{stream, stream2};

/// Days per year in the cumulative hazard.
pub const HAZARD_DAYS: f64 = 365.0;
/// Sixteen years of days.
pub const DEFAULT_X_MAX_DAYS: usize = 16 * 365;
pub const DEFAULT_KNOTS: usize = 5;
/// Knots fall in equal bins spanning this range of years above the base age.
pub const KNOT_SPAN: (f64, f64) = (0.5, 5.5);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplineHazardModel {
    pub sigma: f64,
    pub gamma: f64,
    /// Years above the base age, ascending.
    pub knots: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub base_age: f64,
    pub x_max_days: usize,
}

impl SplineHazardModel {
    /// Reciprocal hazard r(x) at `x` years above the base age, before the positive part.
    pub fn raw_reciprocal(&self, x: f64) -> f64 {
        let g: f64 = self.knots.iter().zip(&self.coefficients).map(|(k, b)| b * (k - x).max(0.0).powi(3)).sum();
        self.sigma + self.gamma * x + g
    }

    pub fn reciprocal(&self, x: f64) -> f64 {
        self.raw_reciprocal(x).max(0.0)
    }

    /// Hazard per year on day `day`; infinite where r vanishes.
    pub fn hazard_day(&self, day: usize) -> f64 {
        1.0 / self.reciprocal(day as f64 / HAZARD_DAYS)
    }

    /// Hazard on days 1..=x_max.
    pub fn hazard_curve(&self) -> Vec<f64> {
        (1..=self.x_max_days).map(|d| self.hazard_day(d)).collect()
    }

    /// H(0), H(1), …, H(x_max).
    pub fn cum_hazard(&self) -> Vec<f64> {
        let mut h = Vec::with_capacity(self.x_max_days + 1);
        let mut acc = 0.0;
        h.push(0.0);
        for d in 1..=self.x_max_days {
            acc += self.hazard_day(d) / HAZARD_DAYS;
            h.push(acc);
        }
        h
    }

    /// Pr(X > x) for x = 0..=x_max.
    pub fn survival(&self) -> Vec<f64> {
        self.cum_hazard().iter().map(|h| (-h).exp()).collect()
    }

    /// Pr(X = x) for x = 1..=x_max, and Pr(X > x_max).
    pub fn pmf(&self) -> (Vec<f64>, f64) {
        let s = self.survival();
        let p = s.windows(2).map(|w| w[0] - w[1]).collect();
        (p, s[self.x_max_days])
    }

    fn is_feasible(&self) -> bool {
        (1..=self.x_max_days).all(|d| self.raw_reciprocal(d as f64 / HAZARD_DAYS) > 0.0)
    }
}

/// One uniform draw inside each of `k` equal bins over [`KNOT_SPAN`].
pub fn draw_knots<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let (a, b) = KNOT_SPAN;
    let w = (b - a) / k as f64;
    (0..k).map(|i| a + w * (i as f64 + rng.random::<f64>())).collect()
}

/// An individual on the day grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct DayRecord {
    start: usize,
    exit: usize,
    dead: bool,
}

fn to_days(x: f64) -> usize {
    (x * DAYS_PER_YEAR).round().max(0.0) as usize
}

fn day_records(sample: &ExcessSample, x_max: usize) -> Result<Vec<DayRecord>> {
    if sample.scheme != Scheme::LeftTruncRightCens {
        return Err(Error::InvalidConfig("spline hazards need left-truncated, right-censored data".into()));
    }
    let mut out = Vec::with_capacity(sample.len());
    for o in &sample.obs {
        let start = to_days(o.lower);
        let mut exit = to_days(o.excess);
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
        out.push(DayRecord { start, exit, dead });
    }
    if !out.iter().any(|r| r.dead) {
        return Err(Error::Undefined("no deaths on the day grid".into()));
    }
    Ok(out)
}

/// Sufficient statistics of the discrete likelihood: the log-likelihood is
/// Σ_z T[z] a(z) + D[z] log(1 − e^{−a(z)}), with a(z) = h(z)/365.
struct DayStats {
    tail: Vec<f64>,
    deaths: Vec<f64>,
}

impl DayStats {
    fn new(records: &[DayRecord], x_max: usize) -> Self {
        let mut weight = vec![0.0; x_max + 2];
        let mut deaths = vec![0.0; x_max + 1];
        for r in records {
            weight[r.start] += 1.0;
            if r.dead {
                deaths[r.exit] += 1.0;
                weight[r.exit - 1] -= 1.0;
            } else {
                weight[r.exit] -= 1.0;
            }
        }
        let mut tail = vec![0.0; x_max + 1];
        let mut acc = 0.0;
        for z in (1..=x_max).rev() {
            acc += weight[z];
            tail[z] = acc;
        }
        DayStats { tail, deaths }
    }
}

/// Internal coordinates: σ, γ, then each β_k times κ_k³.
struct Design<'a> {
    stats: &'a DayStats,
    knots: &'a [f64],
    x_max: usize,
}

impl Design<'_> {
    fn basis(&self, x: f64, out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = x;
        for (o, k) in out[2..].iter_mut().zip(self.knots) {
            *o = ((k - x).max(0.0) / k).powi(3);
        }
    }

    fn eval(&self, p: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let mut q = vec![0.0; p.len()];
        let mut g = vec![0.0; p.len()];
        let mut ll = 0.0;
        let want = grad.is_some();
        for z in 1..=self.x_max {
            self.basis(z as f64 / HAZARD_DAYS, &mut q);
            let r: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
            if !(r > 0.0) {
                return f64::NEG_INFINITY;
            }
            let a = 1.0 / (r * HAZARD_DAYS);
            let d = self.stats.deaths[z];
            ll += self.stats.tail[z] * a;
            if d > 0.0 {
                ll += d * (-(-a).exp_m1()).ln();
            }
            if want {
                let c = (self.stats.tail[z] + if d > 0.0 { d / a.exp_m1() } else { 0.0 }) * (-HAZARD_DAYS * a * a);
                for (gj, qj) in g.iter_mut().zip(&q) {
                    *gj += c * qj;
                }
            }
        }
        if let Some(out) = grad {
            out.copy_from_slice(&g);
        }
        ll
    }

    fn model(&self, p: &[f64], base_age: f64) -> SplineHazardModel {
        SplineHazardModel {
            sigma: p[0],
            gamma: p[1],
            knots: self.knots.to_vec(),
            coefficients: p[2..].iter().zip(self.knots).map(|(b, k)| b / k.powi(3)).collect(),
            base_age,
            x_max_days: self.x_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplineFit {
    pub model: SplineHazardModel,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_records: usize,
    pub n_deaths: usize,
    pub knot_seed: Option<u64>,
}

/// Log-likelihood of the discrete model, and its gradient in
/// (σ, γ, β₁, …, β_K).
pub fn spline_loglik(sample: &ExcessSample, model: &SplineHazardModel) -> Result<(f64, Vec<f64>)> {
    let records = day_records(sample, model.x_max_days)?;
    let stats = DayStats::new(&records, model.x_max_days);
    let design = Design { stats: &stats, knots: &model.knots, x_max: model.x_max_days };
    let mut p = vec![model.sigma, model.gamma];
    p.extend(model.coefficients.iter().zip(&model.knots).map(|(b, k)| b * k.powi(3)));
    let mut g = vec![0.0; p.len()];
    let ll = design.eval(&p, Some(&mut g));
    for (gj, k) in g[2..].iter_mut().zip(&model.knots) {
        *gj *= k.powi(3);
    }
    Ok((ll, g))
}

/// Fits the spline hazard with `k` random knots drawn from `knot_seed`.
pub fn fit_spline_hazard(sample: &ExcessSample, k: usize, knot_seed: u64) -> Result<SplineFit> {
    let knots = draw_knots(k, &mut stream(knot_seed, 0));
    let mut fit = fit_spline_with_knots(sample, &knots, DEFAULT_X_MAX_DAYS, &OptimOptions::default())?;
    fit.knot_seed = Some(knot_seed);
    Ok(fit)
}

/// Fits the spline hazard with the given knots (years above the base age).
pub fn fit_spline_with_knots(sample: &ExcessSample, knots: &[f64], x_max: usize, opts: &OptimOptions) -> Result<SplineFit> {
    if knots.windows(2).any(|w| !(w[1] > w[0])) || knots.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::InvalidParameter("knots must be positive and increasing".into()));
    }
    if x_max == 0 {
        return Err(Error::InvalidParameter("the day grid is empty".into()));
    }
    let records = day_records(sample, x_max)?;
    fit_records(&records, knots, x_max, sample.threshold, opts)
}

fn fit_records(records: &[DayRecord], knots: &[f64], x_max: usize, base_age: f64, opts: &OptimOptions) -> Result<SplineFit> {
    let stats = DayStats::new(records, x_max);
    let design = Design { stats: &stats, knots, x_max };
    let n_deaths = records.iter().filter(|r| r.dead).count();
    let exposure: f64 = records.iter().map(|r| (r.exit - r.start) as f64).sum::<f64>() / HAZARD_DAYS;
    let mut x0 = vec![exposure / n_deaths as f64, 0.0];
    x0.resize(knots.len() + 2, 0.0);
    let f = |p: &[f64]| design.eval(p, None);
    let g = |p: &[f64], _: f64| {
        let mut out = vec![0.0; p.len()];
        design.eval(p, Some(&mut out));
        out
    };
    let res = maximize_with_gradient(&f, g, &x0, opts);
    let grad = {
        let mut out = vec![0.0; res.x.len()];
        design.eval(&res.x, Some(&mut out));
        out
    };
    let gnorm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ok = res.value.is_finite() && (res.converged || gnorm < 1e-6 * (1.0 + res.value.abs()));
    if !ok {
        return Err(Error::NonConvergence { iterations: res.iterations, loglik: res.value, best: res.x });
    }
    let model = design.model(&res.x, base_age);
    debug_assert!(model.is_feasible());
    Ok(SplineFit {
        model,
        loglik: res.value,
        converged: true,
        iterations: res.iterations,
        n_records: records.len(),
        n_deaths,
        knot_seed: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HazardBands {
    pub fit: SplineFit,
    pub level: f64,
    /// Days above the base age, 1..=x_max.
    pub days: Vec<usize>,
    pub hazard: Vec<f64>,
    pub lo_pointwise: Vec<f64>,
    pub hi_pointwise: Vec<f64>,
    pub lo_simultaneous: Vec<f64>,
    pub hi_simultaneous: Vec<f64>,
    /// Largest observed exit day; beyond it the curves are extrapolated.
    pub support_days: usize,
    pub n_boot: usize,
    pub n_failed: usize,
    pub seed: u64,
}

impl HazardBands {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["age_days", "hazard", "lo_pointwise", "hi_pointwise", "lo_simultaneous", "hi_simultaneous"])?;
        for i in 0..self.days.len() {
            out.write_record([
                self.days[i].to_string(),
                self.hazard[i].to_string(),
                self.lo_pointwise[i].to_string(),
                self.hi_pointwise[i].to_string(),
                self.lo_simultaneous[i].to_string(),
                self.hi_simultaneous[i].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Whether some constant hazard lies inside the simultaneous band on days `from..=to`.
    pub fn admits_constant(&self, from: usize, to: usize) -> bool {
        let idx = (from.max(1) - 1)..to.min(self.days.len());
        let lo = self.lo_simultaneous[idx.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let hi = self.hi_simultaneous[idx].iter().copied().fold(f64::INFINITY, f64::min);
        lo <= hi
    }
}

/// Type-7 quantile of sorted values.
pub(crate) fn sorted_quantile(v: &[f64], p: f64) -> f64 {
    let h = (v.len() - 1) as f64 * p;
    let i = h.floor() as usize;
    if i + 1 >= v.len() {
        return v[v.len() - 1];
    }
    v[i] + (h - i as f64) * (v[i + 1] - v[i])
}

/// Pointwise percentile bands of `curves` and a simultaneous band obtained by
/// stretching the pointwise band about the median until a share `level` of
/// the curves lies entirely inside it. With `log` the stretch is multiplicative.
/// Missing (NaN) values are skipped.
pub(crate) fn curve_bands(curves: &[Vec<f64>], level: f64, log: bool) -> [Vec<f64>; 4] {
    let m = curves[0].len();
    let a = (1.0 - level) / 2.0;
    let (mut lo, mut hi, mut med) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut col = Vec::with_capacity(curves.len());
    for j in 0..m {
        col.clear();
        col.extend(curves.iter().map(|c| c[j]).filter(|v| !v.is_nan()));
        if col.is_empty() {
            (lo[j], hi[j], med[j]) = (f64::NAN, f64::NAN, f64::NAN);
            continue;
        }
        col.sort_by(f64::total_cmp);
        lo[j] = sorted_quantile(&col, a);
        hi[j] = sorted_quantile(&col, 1.0 - a);
        med[j] = sorted_quantile(&col, 0.5);
    }
    let tr = |v: f64| if log { v.ln() } else { v };
    let inv = |v: f64| if log { v.exp() } else { v };
    let stretch = |dev: f64, width: f64| {
        if !(dev > 1e-12 * (1.0 + width.abs())) {
            0.0
        } else if width > 0.0 {
            dev / width
        } else {
            f64::INFINITY
        }
    };
    let mut t: Vec<f64> = curves
        .iter()
        .map(|c| {
            (0..m)
                .map(|j| {
                    let (v, md) = (tr(c[j]), tr(med[j]));
                    stretch(md - v, md - tr(lo[j])).max(stretch(v - md, tr(hi[j]) - md))
                })
                .fold(0.0, f64::max)
        })
        .collect();
    t.sort_by(f64::total_cmp);
    let need = ((level * (t.len() + 1) as f64).ceil() as usize).clamp(1, t.len());
    let k = t[need - 1].max(1.0);
    let (slo, shi): (Vec<f64>, Vec<f64>) = if k.is_finite() {
        (
            (0..m).map(|j| if lo[j] == med[j] { lo[j] } else { inv(tr(med[j]) - k * (tr(med[j]) - tr(lo[j]))) }).collect(),
            (0..m).map(|j| if hi[j] == med[j] { hi[j] } else { inv(tr(med[j]) + k * (tr(hi[j]) - tr(med[j]))) }).collect(),
        )
    } else {
        (
            (0..m).map(|j| curves.iter().map(|c| c[j]).fold(f64::INFINITY, f64::min)).collect(),
            (0..m).map(|j| curves.iter().map(|c| c[j]).fold(f64::NEG_INFINITY, f64::max)).collect(),
        )
    };
    let slo = slo.iter().zip(&lo).map(|(a, b): (&f64, &f64)| a.min(*b)).collect();
    let shi = shi.iter().zip(&hi).map(|(a, b): (&f64, &f64)| a.max(*b)).collect();
    [lo, hi, slo, shi]
}

/// Nonparametric bootstrap of records, refitting with fresh knots each time.
pub fn bootstrap_hazard_envelope(sample: &ExcessSample, n_boot: usize, k: usize, seed: u64) -> Result<HazardBands> {
    bootstrap_hazard_envelope_with(sample, n_boot, k, seed, 0.95)
}

pub fn bootstrap_hazard_envelope_with(sample: &ExcessSample, n_boot: usize, k: usize, seed: u64, level: f64) -> Result<HazardBands> {
    if n_boot == 0 {
        return Err(Error::InvalidParameter("at least one bootstrap replicate is needed".into()));
    }
    let x_max = DEFAULT_X_MAX_DAYS;
    let records = day_records(sample, x_max)?;
    let fit = fit_spline_hazard(sample, k, seed)?;
    let opts = OptimOptions { polish_steps: 0, ..OptimOptions::default() };
    let (curves, n_failed) = replicate(n_boot, |b| {
        let mut rng = stream2(seed, b as u64 + 1, 0);
        let boot: Vec<DayRecord> = (0..records.len()).map(|_| records[rng.random_range(0..records.len())]).collect();
        if !boot.iter().any(|r| r.dead) {
            return Err(Error::Undefined("bootstrap sample without deaths".into()));
        }
        let knots = draw_knots(k, &mut stream2(seed, b as u64 + 1, 1));
        Ok(fit_records(&boot, &knots, x_max, sample.threshold, &opts)?.model.hazard_curve())
    })?;
    let [lo, hi, slo, shi] = curve_bands(&curves, level, true);
    Ok(HazardBands {
        level,
        days: (1..=x_max).collect(),
        hazard: fit.model.hazard_curve(),
        lo_pointwise: lo,
        hi_pointwise: hi,
        lo_simultaneous: slo,
        hi_simultaneous: shi,
        fit,
        support_days: records.iter().map(|r| r.exit).max().unwrap_or(1),
        n_boot,
        n_failed,
        seed,
    })
}

/// Exponential fit to the exposure inside one age interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalHazard {
    pub age_lo: f64,
    pub age_hi: f64,
    /// Person-years at risk inside the interval.
    pub exposure: f64,
    pub deaths: usize,
    pub hazard: f64,
    pub lower: f64,
    pub upper: f64,
    pub flag: Option<String>,
}

/// Yearly intervals [a, a+1) from `from` up to `to`, the last one open.
pub fn yearly_blocks(from: f64, to: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut a = from;
    while a + 1.0 < to {
        out.push((a, a + 1.0));
        a += 1.0;
    }
    out.push((a, f64::INFINITY));
    out
}

/// Hazard estimates per age interval, with intervals of CI `level`.
pub fn local_hazard_blocks(sample: &ExcessSample, ages: &[(f64, f64)], level: f64) -> Result<Vec<LocalHazard>> {
    if sample.scheme != Scheme::LeftTruncRightCens {
        return Err(Error::InvalidConfig("yearly blocks need left-truncated, right-censored data".into()));
    }
    if ages.iter().any(|(a, b)| !(b > a)) || ages.windows(2).any(|w| w[1].0 < w[0].1) {
        return Err(Error::InvalidParameter("age intervals must be ordered and disjoint".into()));
    }
    let z = std_normal_quantile(0.5 + level / 2.0);
    let u = sample.threshold;
    let mut out = Vec::with_capacity(ages.len());
    for &(a, b) in ages {
        let mut exposure = 0.0;
        let mut deaths = 0;
        for o in &sample.obs {
            let (entry, exit) = (u + o.lower, u + o.excess);
            exposure += (exit.min(b) - entry.max(a)).max(0.0);
            if o.dead && exit > a && exit <= b {
                deaths += 1;
            }
        }
        let mut row = LocalHazard { age_lo: a, age_hi: b, exposure, deaths, hazard: f64::NAN, lower: f64::NAN, upper: f64::NAN, flag: None };
        if exposure <= 0.0 {
            row.flag = Some("no exposure".into());
        } else if deaths == 0 {
            row.hazard = 0.0;
            row.lower = 0.0;
            row.upper = -(1.0 - level).ln() / exposure;
            row.flag = Some("no deaths; one-sided upper bound".into());
        } else {
            // reciprocal of the exponential fit σ̂ = exposure / deaths
            let sigma = exposure / deaths as f64;
            let se = sigma / (deaths as f64).sqrt();
            row.hazard = 1.0 / sigma;
            row.lower = 1.0 / (sigma + z * se);
            row.upper = if sigma > z * se { 1.0 / (sigma - z * se) } else { f64::INFINITY };
        }
        out.push(row);
    }
    Ok(out)
}

/// Pearson χ² test that all blocks with exposure share one hazard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Homogeneity {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

pub fn homogeneity_test(blocks: &[LocalHazard]) -> Result<Homogeneity> {
    let used: Vec<&LocalHazard> = blocks.iter().filter(|b| b.exposure > 0.0).collect();
    let e: f64 = used.iter().map(|b| b.exposure).sum();
    let d: usize = used.iter().map(|b| b.deaths).sum();
    if used.len() < 2 || d == 0 {
        return Err(Error::Undefined("homogeneity needs two exposed blocks and a death".into()));
    }
    let rate = d as f64 / e;
    let statistic = used
        .iter()
        .map(|b| {
            let expected = rate * b.exposure;
            (b.deaths as f64 - expected).powi(2) / expected
        })
        .sum();
    let df = used.len() - 1;
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::Undefined(e.to_string()))?;
    Ok(Homogeneity { statistic, df, p_value: chi.sf(statistic) })
}

pub fn write_blocks_csv<W: Write>(groups: &[(String, Vec<LocalHazard>)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["group", "age_lo", "age_hi", "exposure", "deaths", "hazard", "ci_lo", "ci_hi", "flag"])?;
    for (g, rows) in groups {
        for r in rows {
            out.write_record([
                g.clone(),
                r.age_lo.to_string(),
                r.age_hi.to_string(),
                r.exposure.to_string(),
                r.deaths.to_string(),
                r.hazard.to_string(),
                r.lower.to_string(),
                r.upper.to_string(),
                r.flag.clone().unwrap_or_default(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
