//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig};
use crate::error::Error;
use crate::evolution::{picard_iterate, OutcomeKind};
use crate::experiments::{label, sweep, sweep_csv, sweep_manifest, SweepSpec};
use crate::fit::decay_fit;
use crate::geometry::{
    doubling_report, lemma21_sample, muckenhoupt_constant, verify_lemma21, BallSampler, CheckReport,
};
use crate::kernel::{
    build_propagator, estimate_kernel, gaussian_deviation, kernel_times, verify_k3_sandwich, verify_k_axioms,
    K3Options, Scheme,
};
use crate::report::{fmt17, parse_series_csv, series_csv, to_json17_string};
use crate::weight::WeightKind;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable overriding the configured output directory.
pub const OUT_ENV: &str = "FUJITA_LAB_OUT";

#[derive(Debug, Parser)]
#[command(name = "fujita-lab", version, about = "Weighted semilinear heat equation laboratory")]
pub struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory (overrides the environment and the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for sampled checks (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Muckenhoupt, doubling and volume-envelope checks of the weight.
    WeightCheck,
    /// Discrete fundamental solution and its axioms and bounds.
    KernelVerify,
    /// One run of the nonlinear equation.
    Simulate,
    /// Phase diagram over `sweep.p` × `sweep.alpha`.
    Sweep,
    /// Log-log decay fit of a `t,value` CSV.
    Fit {
        series: PathBuf,
        /// Fit window `lo,hi` in t.
        #[arg(long, value_parser = parse_window)]
        window: Option<(f64, f64)>,
    },
    /// Picard iterates of the mild formulation.
    Picard,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad number {a:?}"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad number {b:?}"))?;
    if !(lo > 0.0 && hi > lo) {
        return Err("need 0 < lo < hi".into());
    }
    Ok((lo, hi))
}

#[derive(Debug)]
enum Failure {
    Config(ConfigError),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

struct Ctx {
    config: ExperimentConfig,
    out: PathBuf,
    jobs: usize,
    seed: u64,
}

impl Ctx {
    fn write(&self, name: &str, contents: &str) -> Result<(), Failure> {
        std::fs::create_dir_all(&self.out)?;
        std::fs::write(self.out.join(name), contents)?;
        Ok(())
    }
}

/// Output directory precedence: flag, then environment, then `output.dir`.
pub fn resolve_out_dir(flag: Option<&Path>, env: Option<&str>, config: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(e) = env.filter(|e| !e.is_empty()) {
        return PathBuf::from(e);
    }
    PathBuf::from(config.text_or("output.dir", "out").unwrap_or("out"))
}

/// Runs a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, Failure> {
    let config = match (&cli.config, &cli.command) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Command::Fit { .. }) => ExperimentConfig::default(),
        (None, _) => return Err(ConfigError::Missing("--config".into()).into()),
    };
    let env = std::env::var(OUT_ENV).ok();
    let ctx = Ctx {
        out: resolve_out_dir(cli.out.as_deref(), env.as_deref(), &config),
        seed: match cli.seed {
            Some(s) => s,
            None => config.seed()?,
        },
        jobs: cli.jobs.max(1),
        config,
    };
    match cli.command {
        Command::WeightCheck => weight_check(&ctx),
        Command::KernelVerify => kernel_verify(&ctx),
        Command::Simulate => simulate(&ctx),
        Command::Sweep => run_sweep(&ctx),
        Command::Fit { series, window } => fit(&ctx, &series, window),
        Command::Picard => picard(&ctx),
    }
}

#[derive(Serialize)]
struct WeightCheckOutput {
    config_hash: String,
    muckenhoupt_a2: f64,
    checks: Vec<CheckReport>,
    pass: bool,
}

/// Tolerance on the fitted doubling order.
const DOUBLING_TOLERANCE: f64 = 0.02;
/// Muckenhoupt products above this are reported as failures.
const MUCKENHOUPT_LIMIT: f64 = 1e3;

fn weight_check(ctx: &Ctx) -> Result<i32, Failure> {
    let w = ctx.config.weight()?;
    let sampler = BallSampler {
        seed: ctx.seed,
        ..BallSampler::default()
    };
    let a2 = muckenhoupt_constant(&w, 2.0, &sampler)?;
    let s_values = [1.0, 2.0, 4.0, 8.0, 16.0];
    let mut checks = vec![doubling_report(&w, &s_values, &sampler, DOUBLING_TOLERANCE)?.to_check()];
    if w.kind == WeightKind::AxisPower && w.exponent > -1.0 && w.exponent < 1.0 {
        let sample = lemma21_sample(&w, ctx.seed, 200);
        checks.push(verify_lemma21(&w, &sample)?.to_check());
    }
    let pass = a2.is_finite() && a2 <= MUCKENHOUPT_LIMIT && checks.iter().all(|c| c.pass);
    let out = WeightCheckOutput {
        config_hash: ctx.config.hash(),
        muckenhoupt_a2: a2,
        checks,
        pass,
    };
    ctx.write("weight_check.json", &to_json17_string(&out))?;
    println!(
        "weight-check {} A2 = {:.6} {}",
        w.kind,
        a2,
        if pass { "pass" } else { "FAIL" }
    );
    Ok(if pass { EXIT_PASS } else { EXIT_CHECK_FAILED })
}

#[derive(Serialize)]
struct KernelOutput<T: Serialize, U: Serialize, V: Serialize> {
    config_hash: String,
    manifest: T,
    axioms: U,
    sandwich: V,
    gaussian_deviation: Option<f64>,
    pass: bool,
}

fn kernel_verify(ctx: &Ctx) -> Result<i32, Failure> {
    let c = &ctx.config;
    let w = c.weight()?;
    let grid = c.grid()?;
    let dt = c.float_or("kernel.dt", 1e-3)?;
    let t0 = c.float_or("kernel.t0", 0.1)?;
    let t1 = c.float_or("kernel.t1", 10.0)?;
    if !(t1 > t0) {
        return Err(ConfigError::Invalid {
            key: "kernel.t1".into(),
            message: "must exceed kernel.t0".into(),
        }
        .into());
    }
    let prop = build_propagator(&w, grid, dt, c.boundary()?, Scheme::ImplicitEuler)?;
    let times = kernel_times(t0, t1, dt);
    let y = vec![0.0; grid.dim];
    let kernel = estimate_kernel(&prop, &y, &times)?;
    let s = times[times.len() / 2];
    let t = *times.last().expect("nonempty");
    let axioms = verify_k_axioms(&prop, &kernel, s, t)?;
    let sandwich = verify_k3_sandwich(&w, &kernel, &K3Options::default())?;
    let gauss = if w.exponent == 0.0 {
        Some(gaussian_deviation(&kernel, t, 4.0)?)
    } else {
        None
    };
    let slopes_ok = sandwich.norm_slopes.iter().all(|s| s.pass);
    let pass = axioms.pass && slopes_ok && gauss.is_none_or(|g| g <= 0.01);
    ctx.write("kernel.csv", &kernel.to_csv())?;
    let out = KernelOutput {
        config_hash: c.hash(),
        manifest: kernel.manifest(&w),
        axioms: &axioms,
        sandwich: &sandwich,
        gaussian_deviation: gauss,
        pass,
    };
    ctx.write("kernel.json", &to_json17_string(&out))?;
    println!(
        "kernel-verify mass {:.1e} restart {:.1e} symmetry {:.1e} sup-slope {:.4}{} {}",
        axioms.max_mass_error,
        axioms.restart_deviation,
        axioms.symmetry_deviation,
        sandwich.norm_slopes.last().map_or(f64::NAN, |s| s.slope),
        gauss.map_or(String::new(), |g| format!(" gaussian {g:.1e}")),
        if pass { "pass" } else { "FAIL" }
    );
    Ok(if pass { EXIT_PASS } else { EXIT_CHECK_FAILED })
}

#[derive(Serialize)]
struct RunManifest<T: Serialize> {
    config_hash: String,
    outcome: String,
    t_estimate: Option<f64>,
    bracket: Option<(f64, f64)>,
    consistency: String,
    point: T,
    channels: Vec<String>,
}

fn simulate(ctx: &Ctx) -> Result<i32, Failure> {
    let cfg = ctx.config.run_config()?;
    let run = crate::evolution::run(&cfg)?;
    let mut names = Vec::new();
    for ch in &run.channels {
        let name = format!("channel_{}.csv", ch.name);
        ctx.write(&name, &series_csv(&ch.series))?;
        names.push(name);
    }
    ctx.write("channel_mass.csv", &series_csv(&run.mass))?;
    names.push("channel_mass.csv".into());
    let point = label(&cfg, run);
    let (t_est, bracket) = match point.outcome {
        OutcomeKind::BlowUp {
            t_estimate,
            lower,
            upper,
        } => (Some(t_estimate), Some((lower, upper))),
        _ => (None, None),
    };
    let summary = match point.outcome {
        OutcomeKind::BlowUp { lower, upper, .. } => format!("BlowUp t∈[{lower:.6},{upper:.6}]"),
        k => format!(
            "{} slope_inf {} ({})",
            k.name(),
            point.slope_inf.map_or("n/a".to_string(), |f| format!("{:.4}", f.slope)),
            point.consistency.name()
        ),
    };
    let manifest = RunManifest {
        config_hash: ctx.config.hash(),
        outcome: point.outcome.name().into(),
        t_estimate: t_est,
        bracket,
        consistency: point.consistency.name().into(),
        point: &point,
        channels: names,
    };
    ctx.write("run.json", &to_json17_string(&manifest))?;
    println!("{summary}");
    Ok(EXIT_PASS)
}

fn run_sweep(ctx: &Ctx) -> Result<i32, Failure> {
    let c = &ctx.config;
    let template = c.run_config()?;
    let p_values = c
        .list("sweep.p")?
        .ok_or_else(|| ConfigError::Missing("sweep.p".into()))?
        .to_vec();
    let alpha_values = c
        .list("sweep.alpha")?
        .map(|v| v.to_vec())
        .unwrap_or_else(|| vec![template.weight.exponent]);
    let spec = SweepSpec {
        p_values,
        alpha_values,
        template,
        jobs: ctx.jobs,
    };
    let rows = sweep(&spec)?;
    ctx.write("sweep.csv", &sweep_csv(&rows))?;
    ctx.write("sweep.json", &to_json17_string(&sweep_manifest(&rows, &c.hash())))?;
    let errors = rows.iter().filter(|r| r.error.is_some()).count();
    println!("sweep {} points, {} errors", rows.len(), errors);
    Ok(EXIT_PASS)
}

fn fit(ctx: &Ctx, path: &Path, window: Option<(f64, f64)>) -> Result<i32, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(ConfigError::Io(format!("{}: {e}", path.display()))))?;
    let series = parse_series_csv(&text).map_err(|e| Failure::Config(ConfigError::Io(e)))?;
    let f = decay_fit(&series, window, 0.0)?;
    ctx.write("fit.json", &to_json17_string(&f))?;
    println!(
        "slope {} ± {} ({} points)",
        fmt17(f.slope),
        fmt17(f.half_width),
        f.points
    );
    Ok(EXIT_PASS)
}

#[derive(Serialize)]
struct PicardOutput {
    config_hash: String,
    times: Vec<f64>,
    iterate_sups: Vec<Vec<f64>>,
    c_star: f64,
    max_decrease: f64,
    monotone: bool,
}

fn picard(ctx: &Ctx) -> Result<i32, Failure> {
    let c = &ctx.config;
    let cfg = c.run_config()?;
    let n = c.int_or("picard.iterations", 8)? as usize;
    let tau = c.float_or("picard.tau", 0.5)?;
    let every = c.int_or("picard.every", 1)? as usize;
    let r = picard_iterate(&cfg, n, tau, every)?;
    let mut max_decrease: f64 = 0.0;
    for pair in r.iterates.windows(2) {
        for (a, b) in pair[0].iter().zip(&pair[1]) {
            for (x, y) in a.values.iter().zip(&b.values) {
                max_decrease = max_decrease.max(x - y);
            }
        }
    }
    let monotone = max_decrease <= 1e-12;
    let out = PicardOutput {
        config_hash: c.hash(),
        times: r.times.clone(),
        iterate_sups: r
            .iterates
            .iter()
            .map(|it| it.iter().map(|f| f.sup()).collect())
            .collect(),
        c_star: r.c_star,
        max_decrease,
        monotone,
    };
    ctx.write("picard.json", &to_json17_string(&out))?;
    println!("picard {} iterates, c_* = {:.6}, monotone {}", n, r.c_star, monotone);
    Ok(if monotone { EXIT_PASS } else { EXIT_CHECK_FAILED })
}
