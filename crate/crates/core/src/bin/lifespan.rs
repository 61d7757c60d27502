use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use lifespan::diagnostics::qq_envelope_with;
use lifespan::hazard::{self, bootstrap_hazard_envelope_with, fit_spline_hazard, local_hazard_blocks, yearly_blocks};
use lifespan::inference::{self, CiParam};
use lifespan::lifetimes::{generate_lexis, ExcessSample, GeneratorConfig, Sex};
use lifespan::likelihood::{fit_mle, FitOptions};
use lifespan::power::{self, Study};
use lifespan::threshold::{default_thresholds, threshold_sweep, SweepOptions};
use lifespan::{synthetic, Dataset, Error, ErrorKind, Family, LifetimeModel, SamplingFrame};

#[derive(Parser, Debug)]
#[command(name = "lifespan", version, about = "Likelihood analysis of extreme lifetimes under truncation and censoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Records CSV: id,birth_date,entry_date,death_date,sex,cohort.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Sampling frame JSON.
    #[arg(long, global = true)]
    frame: Option<PathBuf>,
    /// Synthetic data set instead of --data: istat, france or idl.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Threshold age; defaults to the frame's.
    #[arg(long, global = true)]
    u: Option<f64>,
    #[arg(long, global = true)]
    family: Option<String>,
    #[arg(long, global = true, default_value_t = 0.95)]
    level: f64,
    #[arg(long, global = true)]
    nboot: Option<usize>,
    #[arg(long, global = true)]
    nsims: Option<usize>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Maximum-likelihood fit of one family.
    Fit {
        #[arg(long)]
        by: Option<By>,
    },
    /// Fits over a range of thresholds.
    Sweep {
        /// Integer thresholds `a:b`, inclusive.
        #[arg(long)]
        thresholds: Option<String>,
    },
    /// Monte Carlo power of the shape, endpoint and sex-difference tests.
    Power {
        #[arg(long, value_delimiter = ',')]
        gamma_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        iota_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        lambda_grid: Vec<f64>,
    },
    /// Spline hazard with bootstrap bands, and yearly local hazards.
    Hazard {
        #[arg(long, default_value_t = hazard::DEFAULT_KNOTS)]
        knots: usize,
        #[arg(long)]
        by: Option<By>,
    },
    /// QQ plot data with simulation envelopes.
    Qq,
    /// Simulates a data set on a frame.
    Simulate {
        /// Lifetime model, e.g. exp:1.45 or gpd:1.5:-0.05.
        #[arg(long, default_value = "exp:1.45")]
        model: String,
        /// Number of records when no preset gives the entry structure.
        #[arg(long, default_value_t = 415)]
        n: usize,
        /// Yearly log growth of entrants.
        #[arg(long, default_value_t = 0.0)]
        growth: f64,
        /// First entry year; defaults to twenty years before the frame begins.
        #[arg(long)]
        first_year: Option<i32>,
    },
    /// Inverse-variance pooling of scale estimates.
    Pool {
        /// Estimates with standard errors, `est:se,...`.
        #[arg(long, value_delimiter = ',')]
        estimates: Vec<String>,
        /// Estimates with confidence intervals, `est:lo:hi,...`.
        #[arg(long, value_delimiter = ',')]
        ci: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum By {
    Sex,
    Cohort,
}

type Res<T> = lifespan::Result<T>;

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

struct Run {
    common: Common,
    outputs: Vec<String>,
    notes: Value,
}

impl Run {
    fn path(&mut self, name: &str) -> Res<PathBuf> {
        fs::create_dir_all(&self.common.out)?;
        self.outputs.push(name.to_string());
        Ok(self.common.out.join(name))
    }

    fn create(&mut self, name: &str) -> Res<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name)?)?))
    }

    fn write_json(&mut self, name: &str, v: &Value) -> Res<()> {
        let path = self.path(name)?;
        fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
        Ok(())
    }

    fn dataset(&self) -> Res<Dataset> {
        let c = &self.common;
        match (&c.data, &c.preset) {
            (Some(_), Some(_)) => Err(usage("give either --data or --preset")),
            (Some(path), None) => {
                let frame = self.frame()?.ok_or_else(|| usage("--data needs --frame"))?;
                let label = path.file_stem().map_or("data".into(), |s| s.to_string_lossy().into_owned());
                Dataset::load_csv(path, frame, label)
            }
            (None, Some(name)) => synthetic::by_name(name)?.generate(c.seed),
            (None, None) => Err(usage("no data: give --data with --frame, or --preset")),
        }
    }

    fn frame(&self) -> Res<Option<SamplingFrame>> {
        self.common.frame.as_ref().map(SamplingFrame::load).transpose()
    }

    fn sample(&self) -> Res<ExcessSample> {
        let ds = self.dataset()?;
        match self.common.u {
            Some(u) => ds.at_threshold(u),
            None => Ok(ds.sample()),
        }
    }

    fn family(&self, default: Family) -> Res<Family> {
        self.common.family.as_deref().map_or(Ok(default), str::parse)
    }
}

fn groups(sample: &ExcessSample, by: Option<By>) -> Vec<(String, ExcessSample)> {
    match by {
        None => vec![("all".into(), sample.clone())],
        Some(By::Sex) => [(Sex::F, "women"), (Sex::M, "men")]
            .into_iter()
            .map(|(s, name)| (name.to_string(), sample.filter(|o| o.sex == s)))
            .filter(|(_, g)| !g.is_empty())
            .collect(),
        Some(By::Cohort) => {
            let mut cohorts: Vec<i32> = sample.obs.iter().map(|o| o.cohort).collect();
            cohorts.sort_unstable();
            let split = cohorts[cohorts.len() / 2];
            let lo = sample.filter(|o| o.cohort < split);
            let hi = sample.filter(|o| o.cohort >= split);
            let mut out = Vec::new();
            if !lo.is_empty() {
                out.push((format!("cohort<{split}"), lo));
            }
            out.push((format!("cohort>={split}"), hi));
            out
        }
    }
}

fn fit_one(sample: &ExcessSample, family: Family, level: f64) -> Res<Value> {
    let opts = FitOptions::default();
    let mut v = match family {
        Family::Exponential => inference::fit_exponential(sample, &opts)?.to_json(),
        f => fit_mle(sample, f, None, &opts)?.to_json(),
    };
    let obj = v.as_object_mut().expect("object");
    match family {
        Family::Gpd => {
            let g = inference::gamma_zero(sample, &opts)?;
            obj.insert("lrt_gamma_zero".into(), json!(g.test));
            obj.insert("p_infinity".into(), json!(g.p_infinity));
            obj.insert("gamma_ci".into(), json!(inference::profile_ci(sample, CiParam::Gamma, level).ok()));
        }
        Family::Exponential => {
            obj.insert("sigma_ci".into(), json!(inference::profile_ci(sample, CiParam::SigmaE, level).ok()));
        }
        Family::Gompertz => {
            obj.insert("boundary_test".into(), json!(inference::boundary_lrt_gompertz(sample)?));
        }
    }
    Ok(v)
}

fn cmd_fit(run: &mut Run, by: Option<By>) -> Res<()> {
    let sample = run.sample()?;
    let family = run.family(Family::Gpd)?;
    let mut fits = Vec::new();
    for (name, g) in groups(&sample, by) {
        let mut v = fit_one(&g, family, run.common.level)?;
        v["group"] = json!(name);
        fits.push(v);
    }
    let out = if by.is_none() { fits.remove(0) } else { json!({ "groups": fits }) };
    run.write_json("fit.json", &out)
}

fn parse_range(s: &str) -> Res<Vec<f64>> {
    let (a, b) = s.split_once(':').ok_or_else(|| usage(format!("thresholds '{s}' should look like 105:111")))?;
    let a: i64 = a.trim().parse().map_err(|_| usage(format!("bad threshold '{a}'")))?;
    let b: i64 = b.trim().parse().map_err(|_| usage(format!("bad threshold '{b}'")))?;
    if b < a {
        return Err(usage("threshold range is empty"));
    }
    Ok((a..=b).map(|u| u as f64).collect())
}

fn cmd_sweep(run: &mut Run, thresholds: Option<String>) -> Res<()> {
    let sample = run.sample()?;
    let mut opts = SweepOptions { level: run.common.level, ..SweepOptions::default() };
    if let Some(f) = run.common.family.as_deref() {
        let f: Family = f.parse()?;
        if !opts.families.contains(&f) {
            opts.families.push(f);
        }
        if f == Family::Gompertz {
            opts.gompertz_bootstrap = run.common.nboot.map(|n| (n, run.common.seed));
        }
    }
    let us = match thresholds {
        Some(s) => parse_range(&s)?,
        None => default_thresholds(&sample, opts.min_exceedances),
    };
    let table = threshold_sweep(&sample, &us, &opts)?;
    table.write_table_csv(run.create("table.csv")?)?;
    table.write_long_csv(run.create("stability.csv")?)?;
    run.write_json("sweep.json", &json!(table))
}

fn studies(run: &Run) -> Res<Vec<Study>> {
    let c = &run.common;
    match &c.preset {
        Some(list) if c.data.is_none() => list
            .split(',')
            .map(|name| {
                let p = synthetic::by_name(name.trim())?;
                Ok(Study::new(p.name.clone(), p.generate(c.seed)?.sample()))
            })
            .collect(),
        _ => {
            let ds = run.dataset()?;
            Ok(vec![Study::new(ds.label.clone(), run.sample()?)])
        }
    }
}

fn cmd_power(run: &mut Run, gamma_grid: Vec<f64>, iota_grid: Vec<f64>, lambda_grid: Vec<f64>) -> Res<()> {
    if gamma_grid.is_empty() && iota_grid.is_empty() && lambda_grid.is_empty() {
        return Err(usage("give at least one of --gamma-grid, --iota-grid, --lambda-grid"));
    }
    let studies = studies(run)?;
    let n = run.common.nsims.unwrap_or(1000);
    let seed = run.common.seed;
    let mut curves = Vec::new();
    if !gamma_grid.is_empty() {
        curves.extend(power::power_shape(&studies, &gamma_grid, n, seed)?);
    }
    if !iota_grid.is_empty() {
        curves.extend(power::power_endpoint(&studies, &iota_grid, n, seed)?);
    }
    if !lambda_grid.is_empty() {
        let study = studies.iter().find(|s| s.sample.obs.iter().any(|o| o.sex == Sex::M)).unwrap_or(&studies[0]);
        let mut c = power::power_sex_ratio(&study.sample, &lambda_grid, n, seed)?;
        c.dataset = study.label.clone();
        curves.push(c);
    }
    power::write_power_csv(&curves, run.create("power.csv")?)?;
    run.write_json("power.json", &json!(curves))
}

fn cmd_hazard(run: &mut Run, knots: usize, by: Option<By>) -> Res<()> {
    let sample = run.sample()?;
    let seed = run.common.seed;
    let level = run.common.level;
    match run.common.nboot {
        Some(n) if n > 0 => {
            let bands = bootstrap_hazard_envelope_with(&sample, n, knots, seed, level)?;
            bands.write_csv(run.create("hazard.csv")?)?;
            run.write_json("spline.json", &json!({ "fit": bands.fit, "n_boot": n, "n_failed": bands.n_failed, "seed": seed }))?;
        }
        _ => {
            let fit = fit_spline_hazard(&sample, knots, seed)?;
            run.write_json("spline.json", &json!({ "fit": fit }))?;
        }
    }
    let blocks = yearly_blocks(sample.threshold, sample.max_age().ceil());
    let mut rows = Vec::new();
    let mut tests = serde_json::Map::new();
    for (name, g) in groups(&sample, by) {
        let b = local_hazard_blocks(&g, &blocks, level)?;
        tests.insert(name.clone(), json!(hazard::homogeneity_test(&b).ok()));
        rows.push((name, b));
    }
    hazard::write_blocks_csv(&rows, run.create("blocks.csv")?)?;
    run.notes = json!({ "homogeneity": tests, "knots": knots });
    Ok(())
}

fn cmd_qq(run: &mut Run) -> Res<()> {
    let sample = run.sample()?;
    let family = run.family(Family::Exponential)?;
    let model = match family {
        Family::Exponential => inference::fit_exponential(&sample, &FitOptions::default())?.model,
        f => fit_mle(&sample, f, None, &FitOptions::default())?.model,
    };
    let env = qq_envelope_with(&sample, &model, run.common.nsims.unwrap_or(100), run.common.seed, run.common.level)?;
    env.write_csv(run.create("qq.csv")?)?;
    run.notes = json!({ "model": model, "n_failed": env.n_failed, "escapes": env.escapes() });
    Ok(())
}

fn cmd_simulate(run: &mut Run, model: &str, n: usize, growth: f64, first_year: Option<i32>) -> Res<()> {
    let model = LifetimeModel::parse(model)?;
    let seed = run.common.seed;
    let ds = match (&run.common.preset, run.frame()?) {
        (Some(name), None) => synthetic::by_name(name)?.generate_with(&model, seed)?,
        (None, Some(frame)) => {
            use chrono::Datelike;
            let last = frame.end.pred_opt().expect("valid date").year();
            let first = first_year.unwrap_or(frame.begin.year() - 20);
            generate_lexis(&GeneratorConfig::geometric(frame, first, last, n, growth)?, &model, seed)?
        }
        _ => return Err(usage("simulate needs exactly one of --frame or --preset")),
    };
    let path = run.path("data.csv")?;
    ds.save_csv(path)?;
    run.write_json("frame.json", &json!(ds.frame))?;
    run.notes = json!({ "model": model, "n_records": ds.len(), "n_deaths": ds.n_deaths() });
    Ok(())
}

fn parse_numbers(s: &str, n: usize) -> Res<Vec<f64>> {
    let v: Vec<f64> = s.split(':').map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| usage(format!("cannot read '{s}'")))?;
    if v.len() != n {
        return Err(usage(format!("'{s}' should have {n} numbers separated by ':'")));
    }
    Ok(v)
}

fn cmd_pool(run: &mut Run, estimates: Vec<String>, ci: Vec<String>) -> Res<()> {
    let level = run.common.level;
    let mut pairs = Vec::new();
    for e in &estimates {
        let v = parse_numbers(e, 2)?;
        pairs.push((v[0], v[1]));
    }
    for c in &ci {
        let v = parse_numbers(c, 3)?;
        pairs.push((v[0], inference::se_from_ci(v[1], v[2], level)));
    }
    let pooled = inference::pool_inverse_variance(&pairs, level)?;
    run.write_json("pool.json", &json!({ "inputs": pairs, "pooled": pooled }))
}

fn manifest(run: &Run, command: &str, started: f64, elapsed: f64, status: &str) -> Value {
    let c = &run.common;
    json!({
        "command": command,
        "argv": std::env::args().collect::<Vec<_>>(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": c.seed,
        "inputs": { "data": c.data, "frame": c.frame, "preset": c.preset, "u": c.u, "family": c.family },
        "level": c.level,
        "nboot": c.nboot,
        "nsims": c.nsims,
        "threads": rayon::current_num_threads(),
        "started_unix": started,
        "wall_time_s": elapsed,
        "outputs": run.outputs,
        "notes": run.notes,
        "status": status,
    })
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Usage => 2,
        ErrorKind::Data | ErrorKind::Io => 3,
        ErrorKind::Numerical => 4,
    }
}

fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Fit { .. } => "fit",
        Command::Sweep { .. } => "sweep",
        Command::Power { .. } => "power",
        Command::Hazard { .. } => "hazard",
        Command::Qq => "qq",
        Command::Simulate { .. } => "simulate",
        Command::Pool { .. } => "pool",
    }
}

fn dispatch(run: &mut Run, cmd: Command) -> Res<()> {
    match cmd {
        Command::Fit { by } => cmd_fit(run, by),
        Command::Sweep { thresholds } => cmd_sweep(run, thresholds),
        Command::Power { gamma_grid, iota_grid, lambda_grid } => cmd_power(run, gamma_grid, iota_grid, lambda_grid),
        Command::Hazard { knots, by } => cmd_hazard(run, knots, by),
        Command::Qq => cmd_qq(run),
        Command::Simulate { model, n, growth, first_year } => cmd_simulate(run, &model, n, growth, first_year),
        Command::Pool { estimates, ci } => cmd_pool(run, estimates, ci),
    }
}

fn write_manifest(out: &Path, m: &Value) -> Res<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(m)? + "\n")?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let clock = Instant::now();
    let command = name(&cli.command);
    let mut run = Run { common: cli.common, outputs: Vec::new(), notes: Value::Null };
    let result = dispatch(&mut run, cli.command);
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("error: {e}"),
    };
    let m = manifest(&run, command, started, clock.elapsed().as_secs_f64(), &status);
    let out = run.common.out.clone();
    if let Err(e) = write_manifest(&out, &m) {
        eprintln!("error: cannot write manifest: {e}");
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
