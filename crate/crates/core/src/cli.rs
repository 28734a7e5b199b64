//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::Serialize;

use crate::direct::{self, testfns, DirectConfig};
use crate::error::{Error, Result};
use crate::gp::{self, FitConfig, GpHyperparams, GpPosterior, IterateSet};
use crate::gpo::{self, GpoConfig};
use crate::io::{fmt_f64, read_iterates, read_observations, theta_header, write_json, write_table};
use crate::kalman::{grid_mle, kalman_loglik};
use crate::normality::{normality_diagnostic, qq_points, summarize, MIN_SAMPLES};
use crate::particle::{estimate_loglik, replicate_loglik, LogLikEstimate, Resampling};
use crate::rng::seeded;
use crate::spsa::{run_spsa, SpsaConfig};
use crate::ssm::{model_by_name, simulate, ObservationSeries, StateSpaceModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "ssm-gpo",
    version,
    about = "Parameter inference in state-space models with GP optimisation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a latent path and observations.
    Simulate(SimulateArgs),
    /// Particle-filter log-likelihood estimates at one parameter.
    PfLoglik(PfLoglikArgs),
    /// Exact LGSS log-likelihood maximized on a grid.
    KalmanGrid(KalmanGridArgs),
    /// GP optimisation of the particle-filter log-likelihood.
    Gpo(GpoArgs),
    /// SPSA baseline.
    Spsa(SpsaArgs),
    /// DIRECT on a built-in test function.
    DirectTest(DirectTestArgs),
    /// GP posterior mean and standard deviation on a grid.
    GpDump(DumpArgs),
    /// Expected improvement on a grid.
    EiDump(EiDumpArgs),
    /// Replicated log-likelihood estimates with a normality summary.
    ReplicateStudy(ReplicateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: String,
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub theta: Vec<f64>,
    #[arg(long = "T")]
    pub steps: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PfLoglikArgs {
    #[arg(long)]
    pub model: String,
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub theta: Vec<f64>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub particles: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value = "systematic")]
    pub resampling: Resampling,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KalmanGridArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 201)]
    pub grid: usize,
}

#[derive(Debug, Args)]
pub struct GpoArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub theta1: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    pub iters: usize,
    #[arg(long, default_value_t = 1000)]
    pub particles: usize,
    #[arg(long, default_value_t = 0.01)]
    pub zeta: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "systematic")]
    pub resampling: Resampling,
    /// DIRECT budget for the acquisition and final maximization.
    #[arg(long, default_value_t = 500)]
    pub direct_evals: usize,
    /// Iterations at which to write `surface_<k>.csv`.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Vec<usize>,
    #[arg(long, default_value_t = 101)]
    pub grid_points: usize,
}

#[derive(Debug, Args)]
pub struct SpsaArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub theta0: Vec<f64>,
    #[arg(long, default_value_t = 150)]
    pub iters: usize,
    #[arg(long, default_value_t = 1000)]
    pub particles: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.03)]
    pub a: f64,
    #[arg(long, default_value_t = 0.04)]
    pub c: f64,
    #[arg(long, default_value_t = 0.602)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.101)]
    pub gamma: f64,
    /// Stability constant; 10% of the iteration count when omitted.
    #[arg(long)]
    pub stability: Option<f64>,
    #[arg(long, default_value = "systematic")]
    pub resampling: Resampling,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DirectTestArgs {
    #[arg(long = "fn")]
    pub function: String,
    #[arg(long, default_value_t = 500)]
    pub max_evals: usize,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[arg(long)]
    pub model: String,
    /// Iterate trace (`theta…,loglik_hat` columns) to condition on.
    #[arg(long, conflicts_with = "data")]
    pub iterates: Option<PathBuf>,
    /// Use only the first `k` rows of the iterate trace.
    #[arg(long, requires = "iterates")]
    pub k: Option<usize>,
    /// Observations for a fresh design of `--points` uniform draws.
    #[arg(long, requires = "seed")]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[arg(long, default_value_t = 1000)]
    pub particles: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EiDumpArgs {
    #[command(flatten)]
    pub dump: DumpArgs,
    #[arg(long, default_value_t = 0.01)]
    pub zeta: f64,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[arg(long)]
    pub model: String,
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub theta: Vec<f64>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub particles: usize,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "systematic")]
    pub resampling: Resampling,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let stdout = std::io::stdout();
    match execute(cli.command, &mut stdout.lock()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

/// Runs a parsed command, writing any console output to `out`.
pub fn execute(command: Command, out: &mut impl Write) -> Result<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::PfLoglik(a) => cmd_pf_loglik(a),
        Command::KalmanGrid(a) => cmd_kalman_grid(a, out),
        Command::Gpo(a) => cmd_gpo(a),
        Command::Spsa(a) => cmd_spsa(a),
        Command::DirectTest(a) => cmd_direct_test(a, out),
        Command::GpDump(a) => cmd_dump(a, None),
        Command::EiDump(a) => cmd_dump(a.dump, Some(a.zeta)),
        Command::ReplicateStudy(a) => cmd_replicate(a),
    }
}

fn model_and_theta(name: &str, theta: &[f64]) -> Result<Box<dyn StateSpaceModel>> {
    let model = model_by_name(name)?;
    model.domain().check(theta)?;
    Ok(model)
}

fn require_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::InvalidInput(format!("--{name} must be at least 1")));
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let model = model_and_theta(&a.model, &a.theta)?;
    let sim = simulate(model.as_ref(), &a.theta, a.steps, a.seed)?;
    let header = ["t", "x", "y"].map(String::from);
    let rows = sim
        .states
        .iter()
        .zip(sim.observations.iter())
        .enumerate()
        .map(|(t, (x, y))| vec![(t + 1).to_string(), fmt_f64(*x), fmt_f64(*y)]);
    write_table(&a.out, &header, rows)
}

fn estimate_rows(estimates: &[LogLikEstimate]) -> Vec<Vec<String>> {
    estimates
        .iter()
        .enumerate()
        .map(|(r, e)| {
            vec![
                r.to_string(),
                e.seed.to_string(),
                fmt_f64(e.value),
                e.degenerate.to_string(),
            ]
        })
        .collect()
}

fn estimate_header() -> Vec<String> {
    ["rep", "seed", "loglik", "degenerate"]
        .map(String::from)
        .to_vec()
}

fn cmd_pf_loglik(a: PfLoglikArgs) -> Result<()> {
    let model = model_and_theta(&a.model, &a.theta)?;
    require_positive("particles", a.particles)?;
    require_positive("reps", a.reps)?;
    let y = read_observations(&a.data)?;
    let estimates = if a.reps == 1 {
        vec![estimate_loglik(
            model.as_ref(),
            &a.theta,
            &y,
            a.particles,
            a.seed,
            a.resampling,
        )?]
    } else {
        replicate_loglik(
            model.as_ref(),
            &a.theta,
            &y,
            a.particles,
            a.reps,
            a.seed,
            a.resampling,
        )?
        .estimates
    };
    write_table(&a.out, &estimate_header(), estimate_rows(&estimates))
}

fn cmd_kalman_grid(a: KalmanGridArgs, out: &mut impl Write) -> Result<()> {
    if a.grid < 3 {
        return Err(Error::InvalidInput("--grid must be at least 3".into()));
    }
    let y = read_observations(&a.data)?;
    let (theta, ll) = grid_mle(&y, a.grid);
    writeln!(out, "theta_mle,loglik")?;
    writeln!(out, "{},{}", fmt_f64(theta), fmt_f64(ll))?;
    Ok(())
}

#[derive(Serialize)]
struct GpoSummary<'a> {
    model: &'a str,
    theta_hat: &'a [f64],
    mu_hat: f64,
    hyperparams: &'a GpHyperparams,
    loglik_evaluations: usize,
    degenerate_evaluations: usize,
    config: &'a GpoConfig,
}

fn cmd_gpo(a: GpoArgs) -> Result<()> {
    let model = model_and_theta(&a.model, &a.theta1)?;
    let domain = model.domain().clone();
    for &k in &a.snapshots {
        if k == 0 || k > a.iters {
            return Err(Error::InvalidInput(format!(
                "snapshot {k} outside 1..={}",
                a.iters
            )));
        }
    }
    if !a.snapshots.is_empty() && domain.dim() > 2 {
        return Err(Error::UnsupportedDimension(domain.dim()));
    }
    let y = read_observations(&a.data)?;
    let mut config = GpoConfig::new(a.iters, a.particles, a.theta1.clone(), a.seed);
    config.zeta = a.zeta;
    config.resampling = a.resampling;
    config.direct.max_evals = a.direct_evals;
    config.final_max_evals = a.direct_evals;
    let result = gpo::run_gpo(model.as_ref(), &y, &config)?;

    fs::create_dir_all(&a.out_dir)?;
    let d = domain.dim();
    let mut header = vec!["k".to_string()];
    header.extend(theta_header(d));
    header.extend(["loglik_hat", "mu_max", "ei_max"].map(String::from));
    let rows = result.per_iteration.iter().map(|it| {
        let mut row = vec![it.k.to_string()];
        row.extend(it.theta.iter().map(|&v| fmt_f64(v)));
        row.extend([
            fmt_f64(it.loglik_hat),
            fmt_f64(it.mu_max),
            fmt_f64(it.ei_max),
        ]);
        row
    });
    write_table(&a.out_dir.join("iterates.csv"), &header, rows)?;

    write_json(
        &a.out_dir.join("result.json"),
        &GpoSummary {
            model: model.name(),
            theta_hat: &result.theta_hat,
            mu_hat: result.mu_hat,
            hyperparams: result.final_posterior.hyper(),
            loglik_evaluations: result.loglik_evaluations,
            degenerate_evaluations: result.n_degenerate(),
            config: &config,
        },
    )?;

    for &k in &a.snapshots {
        let rows = gpo::emit_diagnostics(&result, &domain, k, a.grid_points, a.zeta)?;
        let mut header = theta_header(d);
        header.extend(["mu", "sigma", "ei"].map(String::from));
        write_table(
            &a.out_dir.join(format!("surface_{k}.csv")),
            &header,
            rows.into_iter().map(|r| {
                let mut row: Vec<String> = r.theta.iter().map(|&v| fmt_f64(v)).collect();
                row.extend([fmt_f64(r.mu), fmt_f64(r.sigma), fmt_f64(r.ei)]);
                row
            }),
        )?;
    }
    Ok(())
}

fn cmd_spsa(a: SpsaArgs) -> Result<()> {
    let model = model_and_theta(&a.model, &a.theta0)?;
    require_positive("particles", a.particles)?;
    let y = read_observations(&a.data)?;
    let config = SpsaConfig {
        a: a.a,
        c: a.c,
        alpha: a.alpha,
        gamma: a.gamma,
        stability: a.stability.unwrap_or(0.1 * a.iters as f64),
        iterations: a.iters,
    };
    let mut failure = None;
    let trace = run_spsa(
        |theta, seed| match estimate_loglik(
            model.as_ref(),
            theta,
            &y,
            a.particles,
            seed,
            a.resampling,
        ) {
            Ok(e) => e.value,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        &a.theta0,
        model.domain(),
        &config,
        a.seed,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut header = vec!["iter".to_string()];
    header.extend(theta_header(a.theta0.len()));
    header.push("evals".into());
    let rows = trace.iterates.iter().enumerate().map(|(k, t)| {
        let mut row = vec![k.to_string()];
        row.extend(t.iter().map(|&v| fmt_f64(v)));
        row.push((2 * k).to_string());
        row
    });
    write_table(&a.out, &header, rows)
}

fn cmd_direct_test(a: DirectTestArgs, out: &mut impl Write) -> Result<()> {
    let tf = testfns::by_name(&a.function).ok_or_else(|| {
        let names: Vec<_> = testfns::REGISTRY.iter().map(|t| t.name).collect();
        Error::InvalidInput(format!(
            "unknown test function `{}` (known: {})",
            a.function,
            names.join(", ")
        ))
    })?;
    require_positive("max-evals", a.max_evals)?;
    let domain = tf.domain();
    let cfg = DirectConfig {
        max_evals: a.max_evals,
        ..DirectConfig::default()
    };
    let r = direct::maximize(tf.f, &domain, &cfg);
    let mut header = theta_header(domain.dim());
    header.extend(["value", "n_evals"].map(String::from));
    let mut row: Vec<String> = r.theta.iter().map(|&v| fmt_f64(v)).collect();
    row.extend([fmt_f64(r.value), r.n_evals.to_string()]);
    writeln!(out, "{}", header.join(","))?;
    writeln!(out, "{}", row.join(","))?;
    Ok(())
}

/// Uniform design of `points` parameters, each scored by one particle filter run.
fn design(
    model: &dyn StateSpaceModel,
    y: &ObservationSeries,
    points: usize,
    particles: usize,
    seed: u64,
) -> Result<IterateSet> {
    let domain = model.domain();
    let mut rng = seeded(seed);
    let mut set = IterateSet::new();
    for i in 0..points {
        let u: Vec<f64> = (0..domain.dim()).map(|_| rng.random::<f64>()).collect();
        let theta = domain.from_unit(&u);
        let pf_seed = seed.wrapping_add(1 + i as u64);
        let value =
            estimate_loglik(model, &theta, y, particles, pf_seed, Default::default())?.value;
        if value.is_finite() {
            set.push(theta, value)?;
        }
    }
    if set.is_empty() {
        return Err(Error::Degenerate);
    }
    Ok(set)
}

fn cmd_dump(a: DumpArgs, zeta: Option<f64>) -> Result<()> {
    let model = model_by_name(&a.model)?;
    let domain = model.domain();
    if domain.dim() > 2 {
        return Err(Error::UnsupportedDimension(domain.dim()));
    }
    if a.grid < 2 {
        return Err(Error::InvalidInput("--grid must be at least 2".into()));
    }
    let data = match (&a.iterates, &a.data, a.seed) {
        (Some(path), _, _) => {
            let set = read_iterates(path)?;
            match a.k {
                Some(k) if k == 0 || k > set.len() => {
                    return Err(Error::InvalidInput(format!(
                        "--k {k} outside 1..={}",
                        set.len()
                    )))
                }
                Some(k) => set.prefix(k),
                None => set,
            }
        }
        (None, Some(path), Some(seed)) => {
            require_positive("points", a.points)?;
            require_positive("particles", a.particles)?;
            let y = read_observations(path)?;
            design(model.as_ref(), &y, a.points, a.particles, seed)?
        }
        _ => {
            return Err(Error::InvalidInput(
                "give --iterates, or --data with --seed".into(),
            ))
        }
    };
    if data.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            got: data.dim(),
        });
    }
    let fit_cfg = FitConfig::default();
    let init = gp::default_hyperparams(&data, domain, fit_cfg.noise_floor);
    let post: GpPosterior = gp::fit(&data, domain, &init, &fit_cfg)?;
    let rows = gpo::surface(&post, domain, a.grid, zeta.unwrap_or(0.0))?;
    let mut header = theta_header(domain.dim());
    match zeta {
        Some(_) => header.push("ei".into()),
        None => header.extend(["mu", "sigma"].map(String::from)),
    }
    write_table(
        &a.out,
        &header,
        rows.into_iter().map(|r| {
            let mut row: Vec<String> = r.theta.iter().map(|&v| fmt_f64(v)).collect();
            match zeta {
                Some(_) => row.push(fmt_f64(r.ei)),
                None => row.extend([fmt_f64(r.mu), fmt_f64(r.sigma)]),
            }
            row
        }),
    )
}

#[derive(Serialize)]
struct ReplicateSummary {
    model: String,
    theta: Vec<f64>,
    particles: usize,
    reps: usize,
    degenerate: usize,
    mean: f64,
    std: f64,
    skewness: f64,
    kurtosis: f64,
    statistic: f64,
    p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_loglik: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bias: Option<f64>,
}

fn cmd_replicate(a: ReplicateArgs) -> Result<()> {
    let model = model_and_theta(&a.model, &a.theta)?;
    require_positive("particles", a.particles)?;
    if a.reps < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "--reps must be at least {MIN_SAMPLES}"
        )));
    }
    let y = read_observations(&a.data)?;
    let reps = replicate_loglik(
        model.as_ref(),
        &a.theta,
        &y,
        a.particles,
        a.reps,
        a.seed,
        a.resampling,
    )?;
    let values = reps.finite_values();
    let test = normality_diagnostic(&values)?;
    let s = summarize(&values);
    let exact_loglik = (model.name() == "lgss").then(|| kalman_loglik(a.theta[0], &y));

    fs::create_dir_all(&a.out_dir)?;
    write_table(
        &a.out_dir.join("replicates.csv"),
        &estimate_header(),
        estimate_rows(&reps.estimates),
    )?;
    write_table(
        &a.out_dir.join("qq.csv"),
        &["theoretical".to_string(), "sample".to_string()],
        qq_points(&values)
            .into_iter()
            .map(|(q, v)| vec![fmt_f64(q), fmt_f64(v)]),
    )?;
    write_json(
        &a.out_dir.join("summary.json"),
        &ReplicateSummary {
            model: model.name().to_string(),
            theta: a.theta.clone(),
            particles: a.particles,
            reps: a.reps,
            degenerate: reps.n_degenerate(),
            mean: s.mean,
            std: s.std,
            skewness: s.skewness,
            kurtosis: s.kurtosis,
            statistic: test.statistic,
            p_value: test.p_value,
            exact_loglik,
            bias: exact_loglik.map(|e| s.mean - e),
        },
    )
}

/// Runs with `args` following the program name.
pub fn run_paths(args: &[&str]) -> i32 {
    run(std::iter::once("ssm-gpo").chain(args.iter().copied()))
}
