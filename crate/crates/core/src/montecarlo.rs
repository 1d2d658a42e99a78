//! Repeated simulate-and-estimate experiments.
//!
//! Each run simulates the largest requested number of modes once and
//! estimates on every prefix, so estimates for different `N` within one run
//! are dependent. Runs are independent and reduced in run order.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimator::{compute_stats, pathwise_lse, theoretical_lse, CaseTag};
use crate::fbm::TimeGrid;
use crate::model::{theoretical_rate, RateSpec, SpectralModel};
use crate::simulate::{SimOptions, Simulator};
use crate::special::unit_fou_stationary_variance;

pub const DEFAULT_BURN_IN: usize = 8;
pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Pathwise,
    Theoretical,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Pathwise => "pathwise",
            EstimatorKind::Theoretical => "theoretical",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pathwise" => Ok(EstimatorKind::Pathwise),
            "theoretical" => Ok(EstimatorKind::Theoretical),
            other => Err(Error::invalid("estimators", format!("unknown estimator '{other}'"))),
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    /// Model with at least `max(n_list)` modes and a true drift.
    pub model: SpectralModel,
    pub n_list: Vec<usize>,
    pub runs: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub sim: SimOptions,
    pub burn_in: usize,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs < 2 {
            return Err(Error::invalid("runs", "at least 2 runs are required"));
        }
        if self.n_list.is_empty() || self.n_list[0] == 0 {
            return Err(Error::invalid(
                "n_list",
                "must be a non-empty list of positive mode counts",
            ));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("n_list", "must be strictly increasing"));
        }
        if *self.n_list.last().unwrap() > self.model.n_modes() {
            return Err(Error::invalid(
                "n_list",
                format!("largest entry exceeds the {} available modes", self.model.n_modes()),
            ));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid("estimators", "at least one estimator is required"));
        }
        if self.model.lambda_true.is_none() {
            return Err(Error::invalid("lambda1", "true drift is required"));
        }
        if let Some(g) = &self.model.growth {
            if !crate::model::check_existence(g).0 {
                return Err(Error::Domain("model fails the existence condition".into()));
            }
        }
        Ok(())
    }
}

/// One estimate; `value` is `None` when the solver did not converge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub run: usize,
    pub n: usize,
    pub estimator: EstimatorKind,
    pub value: Option<f64>,
    pub case: Option<CaseTag>,
}

impl Estimate {
    /// Counted as a failure in summaries.
    pub fn failed(&self) -> bool {
        self.value.is_none() || self.case == Some(CaseTag::None)
    }

    fn case_str(&self) -> &'static str {
        match (self.value, self.case) {
            (None, _) => "failed",
            (Some(_), Some(c)) => c.as_str(),
            (Some(_), None) => "-",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub n: usize,
    pub estimator: EstimatorKind,
    pub count: usize,
    pub bias: f64,
    pub rmse: f64,
    pub quantiles: [f64; 5],
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub estimator: EstimatorKind,
    pub slope: Option<(f64, f64)>,
    pub theory: Option<RateSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioSummary {
    pub mean: f64,
    pub median: f64,
    pub used: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QqPoint {
    pub normal_q: f64,
    pub sample_q: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub lambda_true: f64,
    pub hurst: f64,
    pub nonzero_initial: bool,
    pub n_list: Vec<usize>,
    pub estimators: Vec<EstimatorKind>,
    pub estimates: Vec<Estimate>,
    pub cells: Vec<CellSummary>,
    pub rates: Vec<RateRow>,
    pub burn_in: usize,
    /// Mean of `D_N` over runs divided by its stationary surrogate, per `N`.
    pub dn_ratio: Vec<(usize, f64)>,
}

struct RunOutput {
    estimates: Vec<Estimate>,
    denominators: Vec<f64>,
}

pub fn run_mc(cfg: &McConfig) -> Result<McReport> {
    cfg.validate()?;
    let lambda = cfg.model.lambda_true.unwrap();
    let n_max = *cfg.n_list.last().unwrap();
    let model = cfg.model.truncated(n_max)?;
    let grid = TimeGrid::new(model.horizon, cfg.n_steps)?;
    let sim = Simulator::new(&model, grid, cfg.sim)?;

    let outputs: Vec<RunOutput> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| -> Result<RunOutput> {
            let traj = sim.run(cfg.seed, r)?;
            let stats = compute_stats(&traj, &model)?;
            let mut estimates = Vec::new();
            let mut denominators = Vec::new();
            for &n in &cfg.n_list {
                let s = stats.prefix(n);
                denominators.push(s.denominator());
                for &e in &cfg.estimators {
                    let (value, case) = match e {
                        EstimatorKind::Pathwise => match pathwise_lse(&s) {
                            Ok(res) => (Some(res.value), Some(res.case)),
                            Err(Error::NoConvergence { .. }) => (None, None),
                            Err(err) => return Err(err),
                        },
                        EstimatorKind::Theoretical => (Some(theoretical_lse(&s, lambda)?), None),
                    };
                    estimates.push(Estimate {
                        run: r,
                        n,
                        estimator: e,
                        value,
                        case,
                    });
                }
            }
            Ok(RunOutput {
                estimates,
                denominators,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let estimates: Vec<Estimate> = outputs.iter().flat_map(|o| o.estimates.iter().copied()).collect();
    let mut cells = Vec::new();
    for &n in &cfg.n_list {
        for &e in &cfg.estimators {
            let subset: Vec<&Estimate> = estimates.iter().filter(|x| x.n == n && x.estimator == e).collect();
            cells.push(summarize(n, e, lambda, &subset));
        }
    }

    let hurst = model.hurst;
    let unit_var = unit_fou_stationary_variance(hurst)?;
    let dn_ratio = cfg
        .n_list
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let mean = outputs.iter().map(|o| o.denominators[i]).sum::<f64>() / cfg.runs as f64;
            let surrogate: f64 = (0..n)
                .map(|k| {
                    let mu = model.mu(k, lambda);
                    model.alpha[k].powi(2) * mu.powf(-2.0 * hurst)
                })
                .sum::<f64>()
                * model.horizon
                * unit_var;
            (n, mean / surrogate)
        })
        .collect();

    let theory = model.growth.as_ref().and_then(|g| theoretical_rate(g, hurst).ok());
    let mut report = McReport {
        lambda_true: lambda,
        hurst,
        nonzero_initial: model.has_nonzero_initial(),
        n_list: cfg.n_list.clone(),
        estimators: cfg.estimators.clone(),
        estimates,
        cells,
        rates: Vec::new(),
        burn_in: cfg.burn_in,
        dn_ratio,
    };
    report.rates = cfg
        .estimators
        .iter()
        .map(|&e| RateRow {
            estimator: e,
            slope: rmse_slope(&report, e).ok(),
            theory,
        })
        .collect();
    Ok(report)
}

fn summarize(n: usize, estimator: EstimatorKind, lambda: f64, subset: &[&Estimate]) -> CellSummary {
    let failures = subset.iter().filter(|x| x.failed()).count();
    let mut values: Vec<f64> = subset.iter().filter_map(|x| x.value).collect();
    values.sort_by(f64::total_cmp);
    let count = values.len();
    let (bias, rmse) = if count == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let c = count as f64;
        let bias = values.iter().map(|v| v - lambda).sum::<f64>() / c;
        let mse = values.iter().map(|v| (v - lambda).powi(2)).sum::<f64>() / c;
        (bias, mse.sqrt())
    };
    let quantiles = QUANTILE_LEVELS.map(|p| quantile_sorted(&values, p));
    CellSummary {
        n,
        estimator,
        count,
        bias,
        rmse,
        quantiles,
        failures,
    }
}

/// Linearly interpolated sample quantile (Hyndman–Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Least-squares slope of `log y` on `log x` and its standard error.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientPoints(format!(
            "{} usable points, at least 3 required",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let stderr = (ssr / (n - 2.0) / sxx).sqrt();
    Ok((slope, stderr))
}

/// Slope of log RMSE against log N over `N ≥ burn_in`.
pub fn rmse_slope(report: &McReport, estimator: EstimatorKind) -> Result<(f64, f64)> {
    let (x, y): (Vec<f64>, Vec<f64>) = report
        .cells
        .iter()
        .filter(|c| c.estimator == estimator && c.n >= report.burn_in)
        .map(|c| (c.n as f64, c.rmse))
        .unzip();
    loglog_slope(&x, &y)
}

/// Per-run `|λ − λ̂_N| / |λ − λ̃_N|` at the largest `N`.
pub fn error_ratio_2h(report: &McReport) -> Result<RatioSummary> {
    if !report.estimators.contains(&EstimatorKind::Pathwise) || !report.estimators.contains(&EstimatorKind::Theoretical)
    {
        return Err(Error::invalid(
            "estimators",
            "both estimators are required for the ratio",
        ));
    }
    let n = *report.n_list.last().unwrap();
    let at = |kind| -> Vec<Option<f64>> {
        report
            .estimates
            .iter()
            .filter(|e| e.n == n && e.estimator == kind)
            .map(|e| e.value)
            .collect()
    };
    let (path, theo) = (at(EstimatorKind::Pathwise), at(EstimatorKind::Theoretical));
    let lambda = report.lambda_true;
    let mut ratios = Vec::new();
    let mut excluded = 0;
    for (p, t) in path.iter().zip(&theo) {
        match (p, t) {
            (Some(p), Some(t)) if *p != lambda && *t != lambda => {
                ratios.push((lambda - t).abs() / (lambda - p).abs());
            }
            _ => excluded += 1,
        }
    }
    if ratios.is_empty() {
        return Err(Error::InsufficientPoints("no run with both errors nonzero".into()));
    }
    Ok(RatioSummary {
        mean: ratios.iter().sum::<f64>() / ratios.len() as f64,
        median: median(&ratios),
        used: ratios.len(),
        excluded,
    })
}

/// Standardized order statistics against normal quantiles at `(i − ½)/n`,
/// with a pointwise 95% envelope from the beta law of uniform order
/// statistics.
pub fn qq_normal(sample: &[f64]) -> Result<Vec<QqPoint>> {
    let n = sample.len();
    if n < 20 {
        return Err(Error::InsufficientPoints(format!("{n} values, at least 20 required")));
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let var = sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::DegenerateSample(format!("sample variance is {var}")));
    }
    let sd = var.sqrt();
    let mut z: Vec<f64> = sample.iter().map(|v| (v - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    z.into_iter()
        .enumerate()
        .map(|(i, sample_q)| {
            let k = (i + 1) as f64;
            let beta = Beta::new(k, nf - k + 1.0).map_err(|e| Error::DegenerateSample(e.to_string()))?;
            Ok(QqPoint {
                normal_q: normal.inverse_cdf((k - 0.5) / nf),
                sample_q,
                lo: normal.inverse_cdf(beta.inverse_cdf(0.025)),
                hi: normal.inverse_cdf(beta.inverse_cdf(0.975)),
            })
        })
        .collect()
}

/// Values of one estimator at one `N`, failed solves dropped.
pub fn values_at(report: &McReport, n: usize, estimator: EstimatorKind) -> Vec<f64> {
    report
        .estimates
        .iter()
        .filter(|e| e.n == n && e.estimator == estimator)
        .filter_map(|e| e.value)
        .collect()
}

pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "nan".into()
    }
}

pub const OUTPUT_FILES: [&str; 4] = ["estimates.csv", "summary.csv", "rate.csv", "qq.csv"];

/// Write the four CSV tables into `dir`. The Q-Q table uses the pathwise
/// estimator (or the first configured one) at the largest `N`; it is left
/// with a header only when the sample is too small or constant.
pub fn write_report(report: &McReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join("estimates.csv"))?;
    writeln!(f, "run,N,estimator,value,case")?;
    for e in &report.estimates {
        writeln!(
            f,
            "{},{},{},{},{}",
            e.run,
            e.n,
            e.estimator,
            fmt_num(e.value.unwrap_or(f64::NAN)),
            e.case_str()
        )?;
    }

    let mut f = fs::File::create(dir.join("summary.csv"))?;
    writeln!(f, "N,estimator,bias,rmse,q05,q25,q50,q75,q95,failures")?;
    for c in &report.cells {
        let q: Vec<String> = c.quantiles.iter().map(|&v| fmt_num(v)).collect();
        writeln!(
            f,
            "{},{},{},{},{},{}",
            c.n,
            c.estimator,
            fmt_num(c.bias),
            fmt_num(c.rmse),
            q.join(","),
            c.failures
        )?;
    }

    let mut f = fs::File::create(dir.join("rate.csv"))?;
    writeln!(f, "estimator,slope,stderr,theoretical_rho,log_factor")?;
    for r in &report.rates {
        let (slope, se) = r.slope.unwrap_or((f64::NAN, f64::NAN));
        writeln!(
            f,
            "{},{},{},{},{}",
            r.estimator,
            fmt_num(slope),
            fmt_num(se),
            fmt_num(r.theory.map_or(f64::NAN, |t| t.rho)),
            r.theory.is_some_and(|t| t.log_factor)
        )?;
    }

    let mut f = fs::File::create(dir.join("qq.csv"))?;
    writeln!(f, "normal_q,sample_q,lo,hi")?;
    let kind = if report.estimators.contains(&EstimatorKind::Pathwise) {
        EstimatorKind::Pathwise
    } else {
        report.estimators[0]
    };
    let sample = values_at(report, *report.n_list.last().unwrap(), kind);
    if let Ok(points) = qq_normal(&sample) {
        for p in points {
            writeln!(
                f,
                "{},{},{},{}",
                fmt_num(p.normal_q),
                fmt_num(p.sample_q),
                fmt_num(p.lo),
                fmt_num(p.hi)
            )?;
        }
    }
    Ok(())
}
