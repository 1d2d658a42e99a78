//! Diagonal models: eigenvalue sequences, presets and growth-condition checks.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::special::check_hurst;

/// Regime boundary of the variance rates.
pub const CRITICAL_HURST: f64 = 0.75;

/// Declared power growth `α_k ~ k^{2 m1 / d}`, `β_k ~ k^{2 m2 / d}`.
///
/// `m2 = None` means `β ≡ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrowthSpec {
    pub m1: u32,
    pub m2: Option<u32>,
    pub d: u32,
}

impl GrowthSpec {
    pub fn new(m1: u32, m2: Option<u32>, d: u32) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d", "spatial dimension must be positive"));
        }
        Ok(Self { m1, m2, d })
    }

    pub fn big_m1(&self) -> f64 {
        2.0 * self.m1 as f64 / self.d as f64
    }

    pub fn big_m2(&self) -> Option<f64> {
        self.m2.map(|m2| 2.0 * m2 as f64 / self.d as f64)
    }

    fn beta_dominates(&self) -> bool {
        matches!(self.m2, Some(m2) if self.m1 < m2)
    }
}

/// Eigenfunction labels needed to rebuild a field from its modes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Basis {
    /// `√2 sin(kπξ)` on (0, 1).
    Sine1d(Vec<usize>),
    /// `2 sin(k1πξ1) sin(k2πξ2)` on (0, 1)².
    Sine2d(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub hurst: f64,
    pub horizon: f64,
    pub lambda_true: Option<f64>,
    pub initial: Vec<f64>,
    pub growth: Option<GrowthSpec>,
    pub basis: Option<Basis>,
}

fn check_positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn pad_initial(initial: &[f64], n: usize) -> Result<Vec<f64>> {
    if initial.len() > n {
        return Err(Error::invalid(
            "initial",
            format!("{} values given for {n} modes", initial.len()),
        ));
    }
    if let Some(v) = initial.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid("initial", format!("non-finite value {v}")));
    }
    let mut out = initial.to_vec();
    out.resize(n, 0.0);
    Ok(out)
}

impl SpectralModel {
    /// Model from user-supplied sequences. `initial` may be shorter than the
    /// number of modes; missing entries are zero.
    pub fn raw(
        alpha: Vec<f64>,
        beta: Vec<f64>,
        hurst: f64,
        horizon: f64,
        lambda_true: Option<f64>,
        initial: &[f64],
    ) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::invalid("alpha", "at least one mode is required"));
        }
        if alpha.len() != beta.len() {
            return Err(Error::invalid(
                "beta",
                format!("length {} differs from alpha length {}", beta.len(), alpha.len()),
            ));
        }
        for (k, (&a, &b)) in alpha.iter().zip(&beta).enumerate() {
            if !(a >= 0.0) || !a.is_finite() {
                return Err(Error::invalid("alpha", format!("entry {k} is {a}")));
            }
            if !(b >= 0.0) || !b.is_finite() {
                return Err(Error::invalid("beta", format!("entry {k} is {b}")));
            }
            if a == 0.0 && b == 0.0 {
                return Err(Error::invalid("alpha", format!("mode {k} has alpha = beta = 0")));
            }
        }
        check_hurst(hurst).map_err(|_| Error::invalid("hurst", format!("must lie in (0, 1), got {hurst}")))?;
        check_positive("horizon", horizon)?;
        if let Some(l) = lambda_true {
            check_positive("lambda1", l)?;
        }
        let initial = pad_initial(initial, alpha.len())?;
        Ok(Self {
            alpha,
            beta,
            hurst,
            horizon,
            lambda_true,
            initial,
            growth: None,
            basis: None,
        })
    }

    /// Stochastic heat equation on (0, 1) with Dirichlet boundary:
    /// `α_k = (kπ)²`, `β_k = λ2`.
    pub fn heat1d(n: usize, lambda1: f64, lambda2: f64, hurst: f64, horizon: f64, initial: &[f64]) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n_modes", "must be at least 1"));
        }
        check_lambda2(lambda2)?;
        let alpha = (1..=n).map(|k| (k as f64 * PI).powi(2)).collect();
        let beta = vec![lambda2; n];
        let mut m = Self::raw(alpha, beta, hurst, horizon, Some(lambda1), initial)?;
        m.growth = Some(GrowthSpec::new(1, constant_growth(lambda2), 1)?);
        m.basis = Some(Basis::Sine1d((1..=n).collect()));
        Ok(m)
    }

    /// Heat equation on the unit square with `K²` modes sorted by `α`, ties
    /// broken by `(k1, k2)`.
    pub fn heat2d(k_max: usize, lambda1: f64, lambda2: f64, hurst: f64, horizon: f64, initial: &[f64]) -> Result<Self> {
        if k_max == 0 {
            return Err(Error::invalid("k_max", "must be at least 1"));
        }
        check_lambda2(lambda2)?;
        let mut labels: Vec<(usize, usize)> = (1..=k_max).flat_map(|a| (1..=k_max).map(move |b| (a, b))).collect();
        labels.sort_by_key(|&(a, b)| (a * a + b * b, a, b));
        let alpha = labels.iter().map(|&(a, b)| (a * a + b * b) as f64 * PI * PI).collect();
        let beta = vec![lambda2; labels.len()];
        let mut m = Self::raw(alpha, beta, hurst, horizon, Some(lambda1), initial)?;
        m.growth = Some(GrowthSpec::new(1, constant_growth(lambda2), 2)?);
        m.basis = Some(Basis::Sine2d(labels));
        Ok(m)
    }

    /// The `n` lowest modes of the unbounded 2D lattice: the per-axis range
    /// grows until no mode outside it can undercut the `n`-th eigenvalue.
    pub fn heat2d_lowest(
        n: usize,
        lambda1: f64,
        lambda2: f64,
        hurst: f64,
        horizon: f64,
        initial: &[f64],
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n_modes", "must be at least 1"));
        }
        let mut k_max = (n as f64).sqrt().ceil() as usize;
        loop {
            let m = Self::heat2d(k_max, lambda1, lambda2, hurst, horizon, &[])?;
            let outside = ((k_max + 1) * (k_max + 1) + 1) as f64 * PI * PI;
            if m.alpha[n - 1] < outside {
                let mut m = m.truncated(n)?;
                m.set_initial(initial)?;
                return Ok(m);
            }
            k_max += 1;
        }
    }

    pub fn n_modes(&self) -> usize {
        self.alpha.len()
    }

    /// Replace the initial values; missing entries are zero.
    pub fn set_initial(&mut self, initial: &[f64]) -> Result<()> {
        self.initial = pad_initial(initial, self.n_modes())?;
        Ok(())
    }

    /// `μ_k(λ) = λ α_k + β_k`.
    pub fn mu(&self, k: usize, lambda: f64) -> f64 {
        lambda * self.alpha[k] + self.beta[k]
    }

    pub fn drifts(&self) -> Result<Vec<f64>> {
        let lambda = self
            .lambda_true
            .ok_or_else(|| Error::invalid("lambda1", "true drift is required for simulation"))?;
        Ok((0..self.n_modes()).map(|k| self.mu(k, lambda)).collect())
    }

    /// The first `n` modes.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_modes() {
            return Err(Error::invalid(
                "n_modes",
                format!("prefix {n} out of range 1..={}", self.n_modes()),
            ));
        }
        let basis = self.basis.as_ref().map(|b| match b {
            Basis::Sine1d(v) => Basis::Sine1d(v[..n].to_vec()),
            Basis::Sine2d(v) => Basis::Sine2d(v[..n].to_vec()),
        });
        Ok(Self {
            alpha: self.alpha[..n].to_vec(),
            beta: self.beta[..n].to_vec(),
            initial: self.initial[..n].to_vec(),
            basis,
            ..self.clone()
        })
    }

    pub fn has_nonzero_initial(&self) -> bool {
        self.initial.iter().any(|&v| v != 0.0)
    }
}

/// Growth marker of a constant reaction term.
fn constant_growth(lambda2: f64) -> Option<u32> {
    (lambda2 > 0.0).then_some(0)
}

fn check_lambda2(lambda2: f64) -> Result<()> {
    if lambda2 >= 0.0 && lambda2.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(
            "lambda2",
            format!("must be non-negative, got {lambda2}"),
        ))
    }
}

/// `lim β_k / α_k` under the declared growth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CLimit {
    Zero,
    Positive,
    Infinite,
}

impl fmt::Display for CLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CLimit::Zero => "0",
            CLimit::Positive => "positive",
            CLimit::Infinite => "inf",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub existence_ok: bool,
    pub gamma: Option<f64>,
    pub theoretical_lse_consistent: bool,
    pub clause: &'static str,
    pub pathwise_extra_ok: bool,
    pub c_limit: CLimit,
    pub notes: String,
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "existence_ok = {}", self.existence_ok)?;
        match self.gamma {
            Some(g) => writeln!(f, "gamma = {g}")?,
            None => writeln!(f, "gamma = none")?,
        }
        writeln!(f, "theoretical_lse_consistent = {}", self.theoretical_lse_consistent)?;
        writeln!(f, "clause = {}", self.clause)?;
        writeln!(f, "pathwise_extra_ok = {}", self.pathwise_extra_ok)?;
        writeln!(f, "c_limit = {}", self.c_limit)?;
        write!(f, "notes = {}", self.notes)
    }
}

/// Whether `Σ (1 + μ_k)^{-γ}` converges for some `γ`, with the witness
/// `γ = d / max(m1, m2)`.
pub fn check_existence(g: &GrowthSpec) -> (bool, Option<f64>) {
    let top = g.m1.max(g.m2.unwrap_or(0));
    if top == 0 {
        (false, None)
    } else {
        (true, Some(g.d as f64 / top as f64))
    }
}

pub fn c_limit(g: &GrowthSpec) -> CLimit {
    match g.m2 {
        None => CLimit::Zero,
        Some(m2) if g.m1 > m2 => CLimit::Zero,
        Some(m2) if g.m1 == m2 => CLimit::Positive,
        Some(_) => CLimit::Infinite,
    }
}

pub fn check_consistency(g: &GrowthSpec, hurst: f64) -> Result<ConditionReport> {
    check_hurst(hurst)?;
    let (existence_ok, gamma) = check_existence(g);
    let m1 = g.m1 as f64;
    let d = g.d as f64;
    let (clause_ok, clause) = match g.m2 {
        None => (true, "beta_zero"),
        Some(m2) if g.m1 >= m2 => (true, "m1_ge_m2"),
        Some(m2) => {
            let m2 = m2 as f64;
            if hurst < CRITICAL_HURST {
                (m1 > -d / 4.0 + m2 / 2.0, "m1_lt_m2_h_below_3_4")
            } else {
                (m1 > -d / 4.0 + m2 * (2.0 * hurst - 1.0), "m1_lt_m2_h_at_or_above_3_4")
            }
        }
    };
    let theoretical = existence_ok && clause_ok;
    let big_m1 = g.big_m1();
    let top = big_m1.max(g.big_m2().unwrap_or(0.0));
    let divergent = 2.0 * (big_m1 - hurst * top) >= -1.0;
    let mut notes = Vec::new();
    if !existence_ok {
        notes.push("mu_k bounded: existence condition fails");
    }
    if g.m2.is_some() && !g.beta_dominates() {
        notes.push("rates use the canonical power-growth exponents");
    }
    if theoretical && !divergent {
        notes.push("sum alpha_k^2 / mu_k^(2H) converges");
    }
    Ok(ConditionReport {
        existence_ok,
        gamma,
        theoretical_lse_consistent: theoretical,
        clause,
        pathwise_extra_ok: theoretical && divergent,
        c_limit: c_limit(g),
        notes: if notes.is_empty() {
            "none".into()
        } else {
            notes.join("; ")
        },
    })
}

/// RMSE ~ `N^ρ`, times `√log N` when `log_factor` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSpec {
    pub rho: f64,
    pub log_factor: bool,
    pub hurst_boundary: f64,
}

pub fn theoretical_rate(g: &GrowthSpec, hurst: f64) -> Result<RateSpec> {
    let report = check_consistency(g, hurst)?;
    if !report.theoretical_lse_consistent {
        return Err(Error::Domain(format!(
            "growth (m1={}, m2={:?}, d={}) with H={hurst} fails the consistency conditions",
            g.m1, g.m2, g.d
        )));
    }
    let big_m1 = g.big_m1();
    let above = hurst > CRITICAL_HURST;
    let rho = match g.big_m2() {
        Some(big_m2) if g.beta_dominates() => {
            if above {
                -(2.0 * (big_m1 + big_m2 * (1.0 - 2.0 * hurst)) + 1.0) / 2.0
            } else {
                -(2.0 * big_m1 - big_m2 + 1.0) / 2.0
            }
        }
        _ => {
            if above {
                -(4.0 * big_m1 * (1.0 - hurst) + 1.0) / 2.0
            } else {
                -(big_m1 + 1.0) / 2.0
            }
        }
    };
    Ok(RateSpec {
        rho,
        log_factor: hurst == CRITICAL_HURST,
        hurst_boundary: CRITICAL_HURST,
    })
}
