//! Command-line front end. Errors are reported as one line on stderr,
//! `error kind=<validation|numeric> field=<name|-> message="..."`, with exit
//! code 2 for validation and 3 for numeric failures.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, ErrorKind, Result};
use crate::estimator::{compute_stats, pathwise_lse, theoretical_lse};
use crate::fbm::TimeGrid;
use crate::model::{check_consistency, theoretical_rate, Basis};
use crate::montecarlo::{error_ratio_2h, fmt_num, run_mc, values_at, write_report, EstimatorKind, McReport};
use crate::simulate::{reconstruct_field, ModeTrajectorySet, Simulator};
use crate::special::{compensation_delta, delta_prime, delta_second, DeltaParams};

#[derive(Debug, Parser)]
#[command(
    name = "pathlse",
    version,
    about = "Fourier-mode fOU simulation and pathwise drift estimation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (flat TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads for Monte Carlo runs.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Master seed, overriding the config file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one set of mode trajectories and write trajectories.csv.
    Simulate(Common),
    /// Estimate the drift from a trajectory CSV.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV, overriding the `trajectory` key.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Monte Carlo experiment writing estimates, summary, rate and qq tables.
    Mc(Common),
    /// Existence and consistency conditions of the configured growth.
    Check(Common),
    /// Print Δ, Δ′ and Δ″ at one point.
    Delta {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        hurst: f64,
        #[arg(long)]
        horizon: f64,
    },
}

fn error_line(e: &Error) -> String {
    let kind = match e.kind() {
        ErrorKind::Validation => "validation",
        ErrorKind::Numeric => "numeric",
    };
    let field = match e {
        Error::Invalid { field, .. } => field.as_str(),
        _ => "-",
    };
    format!("error kind={kind} field={field} message={:?}", e.to_string())
}

pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        ErrorKind::Validation => 2,
        ErrorKind::Numeric => 3,
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = std::io::stdout().lock();
    match execute(cli.command, &mut stdout) {
        Ok(()) => 0,
        // a closed stdout (e.g. piped into `head`) is not a failure
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            exit_code(&e)
        }
    }
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    Ok(cfg)
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Simulate(c) => cmd_simulate(&load(&c)?, &c.out, out),
        Command::Estimate { common, trajectory } => {
            let cfg = load(&common)?;
            let path = trajectory
                .or_else(|| cfg.trajectory.clone())
                .ok_or_else(|| Error::invalid("trajectory", "is required"))?;
            cmd_estimate(&cfg, &path, out)
        }
        Command::Mc(c) => {
            let cfg = load(&c)?;
            match c.threads {
                Some(0) => Err(Error::invalid("threads", "must be positive")),
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::invalid("threads", e.to_string()))?
                    .install(|| mc_report(&cfg, &c.out))
                    .and_then(|r| print_mc(&r, out)),
                None => mc_report(&cfg, &c.out).and_then(|r| print_mc(&r, out)),
            }
        }
        Command::Check(c) => cmd_check(&load(&c)?, out),
        Command::Delta { mu, hurst, horizon } => cmd_delta(mu, hurst, horizon, out),
    }
}

fn write_matrix(path: &Path, header: &str, times: &[f64], rows: &[Vec<f64>]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "{header}")?;
    for (i, t) in times.iter().enumerate() {
        let mut line = fmt_num(*t);
        for r in rows {
            line.push(',');
            line.push_str(&fmt_num(r[i]));
        }
        writeln!(f, "{line}")?;
    }
    f.flush()?;
    Ok(())
}

fn column_header(n: usize, prefix: &str) -> String {
    std::iter::once("t".to_string())
        .chain((1..=n).map(|k| format!("{prefix}{k}")))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn cmd_simulate(cfg: &RunConfig, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let model = cfg.model()?;
    let grid = TimeGrid::new(model.horizon, cfg.n_steps())?;
    let sim = Simulator::new(&model, grid, cfg.sim_options()?)?;
    let (traj, noise) = sim.run_with_noise(cfg.seed(), 0)?;
    fs::create_dir_all(dir)?;
    let times = grid.times();
    let n = traj.n_modes();
    write_matrix(
        &dir.join("trajectories.csv"),
        &column_header(n, "x"),
        &times,
        &traj.values,
    )?;
    if cfg.export_noise.unwrap_or(false) {
        write_matrix(&dir.join("fbm.csv"), &column_header(n, "b"), &times, &noise.paths)?;
    }
    if let Some(indices) = &cfg.field_times {
        let points = cfg.field_points.unwrap_or(101);
        if points < 2 {
            return Err(Error::invalid("field_points", "must be at least 2"));
        }
        let xi: Vec<f64> = (0..points).map(|j| j as f64 / (points - 1) as f64).collect();
        let snaps = reconstruct_field(&traj, model.basis.as_ref(), &xi, indices)?;
        let mut f = std::io::BufWriter::new(fs::File::create(dir.join("field.csv"))?);
        match model.basis {
            Some(Basis::Sine2d(_)) => writeln!(f, "time_index,t,xi1,xi2,u")?,
            _ => writeln!(f, "time_index,t,xi,u")?,
        }
        for s in &snaps {
            for (p, u) in s.points.iter().zip(&s.values) {
                let coords: Vec<String> = p.iter().map(|&v| fmt_num(v)).collect();
                writeln!(
                    f,
                    "{},{},{},{}",
                    s.time_index,
                    fmt_num(s.time),
                    coords.join(","),
                    fmt_num(*u)
                )?;
            }
        }
        f.flush()?;
    }
    writeln!(out, "modes = {n}")?;
    writeln!(out, "n_steps = {}", grid.n_steps())?;
    writeln!(out, "trajectories = {}", dir.join("trajectories.csv").display())?;
    Ok(())
}

/// Read a `t,x1,...,xN` trajectory table on a uniform grid starting at 0.
pub fn read_trajectories(path: &Path, horizon: f64) -> Result<ModeTrajectorySet> {
    let schema = |msg: String| Error::Schema(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| schema(e.to_string()))?;
    let headers = reader.headers().map_err(|e| schema(e.to_string()))?.clone();
    let n = headers.len().saturating_sub(1);
    if n == 0
        || &headers[0] != "t"
        || headers
            .iter()
            .skip(1)
            .enumerate()
            .any(|(k, h)| h != format!("x{}", k + 1))
    {
        return Err(schema("header must be t,x1,...,xN".into()));
    }
    let mut times = Vec::new();
    let mut cols = vec![Vec::new(); n];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| schema(e.to_string()))?;
        let mut values = record.iter().map(|v| {
            v.parse::<f64>()
                .map_err(|_| schema(format!("row {}: '{v}' is not a number", line + 1)))
        });
        times.push(values.next().unwrap()?);
        for col in cols.iter_mut() {
            col.push(values.next().unwrap()?);
        }
    }
    if times.len() < 2 {
        return Err(schema(format!("{} rows, at least 2 required", times.len())));
    }
    let steps = times.len() - 1;
    let last = times[steps];
    if (last - horizon).abs() > 1e-9 * horizon {
        return Err(schema(format!("last time {last} does not match horizon {horizon}")));
    }
    let grid = TimeGrid::new(horizon, steps)?;
    let tol = 1e-9 * grid.step();
    for (i, &t) in times.iter().enumerate() {
        if (t - grid.time(i)).abs() > tol {
            return Err(schema(format!(
                "time {t} in row {} is off the uniform grid on [0, {horizon}] with {steps} steps",
                i + 1
            )));
        }
    }
    ModeTrajectorySet::from_values(grid, cols)
}

pub fn cmd_estimate(cfg: &RunConfig, path: &Path, out: &mut dyn Write) -> Result<()> {
    let traj = read_trajectories(path, cfg.horizon())?;
    let model = cfg.model_with(Some(traj.n_modes()))?;
    let stats = compute_stats(&traj, &model)?;
    let result = pathwise_lse(&stats)?;
    writeln!(out, "{result}")?;
    if let Some(l) = model.lambda_true {
        writeln!(out, "theoretical_lse = {:.17e}", theoretical_lse(&stats, l)?)?;
    }
    writeln!(out, "modes = {}", stats.n_modes())?;
    writeln!(out, "nonzero_initial = {}", stats.nonzero_initial())?;
    Ok(())
}

fn mc_report(cfg: &RunConfig, dir: &Path) -> Result<McReport> {
    let mc = cfg.mc_config()?;
    let report = run_mc(&mc)?;
    write_report(&report, dir)?;
    Ok(report)
}

fn print_mc(report: &McReport, out: &mut dyn Write) -> Result<()> {
    for c in &report.cells {
        writeln!(
            out,
            "N={} estimator={} median={} rmse={} failures={}",
            c.n,
            c.estimator,
            fmt_num(c.quantiles[2]),
            fmt_num(c.rmse),
            c.failures
        )?;
    }
    for r in &report.rates {
        let slope = r.slope.map_or("nan".to_string(), |s| fmt_num(s.0));
        let rho = r.theory.map_or("nan".to_string(), |t| fmt_num(t.rho));
        writeln!(
            out,
            "rate estimator={} slope={slope} theoretical_rho={rho}",
            r.estimator
        )?;
    }
    if let Ok(ratio) = error_ratio_2h(report) {
        writeln!(
            out,
            "ratio median={} mean={} used={} excluded={}",
            fmt_num(ratio.median),
            fmt_num(ratio.mean),
            ratio.used,
            ratio.excluded
        )?;
    }
    let n_max = *report.n_list.last().unwrap();
    writeln!(
        out,
        "pathwise_samples_at_max_n = {}",
        values_at(report, n_max, EstimatorKind::Pathwise).len()
    )?;
    writeln!(out, "nonzero_initial = {}", report.nonzero_initial)?;
    Ok(())
}

pub fn cmd_check(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let hurst = cfg.hurst.ok_or_else(|| Error::invalid("hurst", "is required"))?;
    let growth = match cfg.growth()? {
        Some(g) => g,
        None => cfg
            .model()?
            .growth
            .ok_or_else(|| Error::invalid("growth_m1", "raw models need growth_m1, growth_m2, growth_d"))?,
    };
    let report = check_consistency(&growth, hurst)?;
    writeln!(out, "{report}")?;
    match theoretical_rate(&growth, hurst) {
        Ok(rate) => {
            writeln!(out, "rate_rho = {}", rate.rho)?;
            writeln!(out, "rate_log_factor = {}", rate.log_factor)?;
        }
        Err(_) => writeln!(out, "rate_rho = none")?,
    }
    Ok(())
}

pub fn cmd_delta(mu: f64, hurst: f64, horizon: f64, out: &mut dyn Write) -> Result<()> {
    let p = DeltaParams::new(mu, hurst, horizon)?;
    writeln!(
        out,
        "{} {} {}",
        compensation_delta(&p),
        delta_prime(&p),
        delta_second(&p)
    )?;
    Ok(())
}
