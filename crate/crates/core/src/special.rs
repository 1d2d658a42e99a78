//! Lower incomplete gamma function and the Stratonovich-to-Skorokhod
//! compensation `Δ(μ)` for a fractional Ornstein-Uhlenbeck mode.
//!
//! `Δ(μ) = ½T^{2H}(1 − γ(1, μT)) − (H − ½) μ^{−2H} γ(2H+1, μT) + T H μ^{1−2H} γ(2H, μT)`
//!
//! For small `x = μT` the three terms nearly cancel against their common
//! limit `½T^{2H}`, so `Δ`, `Δ′` and `Δ″` are evaluated there from the
//! entire power series in `x`:
//!
//! `Δ = T^{2H} [½ + H(2H−1) Σ_{m≥1} (−x)^m / (m! (2H+m−1)(2H+m))]`
//!
//! and its term-wise derivatives. Above [`SERIES_SWITCH`] the closed forms in
//! terms of `γ(2H, x)` and `γ(2H+1, x)` are used.

use crate::error::{Error, Result};
use statrs::function::gamma::gamma;

const MAX_ITER: usize = 1000;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Crossover in `x = μT` between the power series and the incomplete-gamma
/// closed forms.
pub const SERIES_SWITCH: f64 = 2.0;

/// `γ(h, x) = ∫_0^x e^{−s} s^{h−1} ds`.
pub fn lower_incomplete_gamma(h: f64, x: f64) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("incomplete gamma needs h > 0, got {h}")));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("incomplete gamma needs x >= 0, got {x}")));
    }
    Ok(lower_gamma_unchecked(h, x))
}

pub(crate) fn lower_gamma_unchecked(h: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return gamma(h);
    }
    if x < h + 1.0 {
        gamma_series(h, x)
    } else {
        (gamma(h) - upper_gamma_cf(h, x)).max(0.0)
    }
}

/// Series `x^h e^{−x} Σ x^n / (h (h+1) … (h+n))`.
fn gamma_series(h: f64, x: f64) -> f64 {
    let mut ap = h;
    let mut term = 1.0 / h;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (h * x.ln() - x).exp()
}

/// Modified Lentz evaluation of the continued fraction for `Γ(h, x)`.
fn upper_gamma_cf(h: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - h;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut frac = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - h);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        frac *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (h * x.ln() - x).exp() * frac
}

/// Arguments of the compensation function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaParams {
    pub mu: f64,
    pub hurst: f64,
    pub horizon: f64,
}

impl DeltaParams {
    pub fn new(mu: f64, hurst: f64, horizon: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::Domain(format!("mu must be positive and finite, got {mu}")));
        }
        check_hurst(hurst)?;
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { mu, hurst, horizon })
    }
}

pub(crate) fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.0 && hurst < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("Hurst index must lie in (0,1), got {hurst}")))
    }
}

/// Right limit `Δ(0+) = ½T^{2H}`.
pub fn delta_at_zero(hurst: f64, horizon: f64) -> f64 {
    0.5 * horizon.powf(2.0 * hurst)
}

pub fn compensation_delta(p: &DeltaParams) -> f64 {
    delta_unchecked(p.mu, p.hurst, p.horizon)
}

pub fn delta_prime(p: &DeltaParams) -> f64 {
    delta_prime_unchecked(p.mu, p.hurst, p.horizon)
}

pub fn delta_second(p: &DeltaParams) -> f64 {
    delta_second_unchecked(p.mu, p.hurst, p.horizon)
}

/// `H Γ(2H)`, the variance of the stationary unit-drift fOU process.
pub fn unit_fou_stationary_variance(hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    Ok(hurst * gamma(2.0 * hurst))
}

/// `Σ_{m ≥ max(order,1)} (−1)^m x^{m−order} / (m−order)! · 1/((2H+m−1)(2H+m))`,
/// the `order`-th derivative in `x` of the bracketed series of `Δ`.
fn delta_series(x: f64, hurst: f64, order: u32) -> f64 {
    let two_h = 2.0 * hurst;
    let first = order.max(1);
    let weight = |m: u32| 1.0 / ((two_h + m as f64 - 1.0) * (two_h + m as f64));
    // power term (−1)^m x^{m−order}/(m−order)!
    let mut pow_term = if first.is_multiple_of(2) { 1.0 } else { -1.0 };
    for j in 1..=(first - order) {
        pow_term *= x / j as f64;
    }
    let mut sum = 0.0;
    let mut m = first;
    loop {
        let term = pow_term * weight(m);
        sum += term;
        if (m as f64) > x && term.abs() <= EPS * sum.abs() {
            break;
        }
        if m > MAX_ITER as u32 {
            break;
        }
        m += 1;
        pow_term *= -x / (m - order) as f64;
    }
    sum
}

pub(crate) fn delta_unchecked(mu: f64, hurst: f64, horizon: f64) -> f64 {
    if hurst == 0.5 {
        return 0.5 * horizon;
    }
    if mu <= 0.0 {
        return delta_at_zero(hurst, horizon);
    }
    let x = mu * horizon;
    let two_h = 2.0 * hurst;
    if x <= SERIES_SWITCH {
        horizon.powf(two_h) * (0.5 + hurst * (two_h - 1.0) * delta_series(x, hurst, 0))
    } else {
        0.5 * horizon.powf(two_h) * (-x).exp() - (hurst - 0.5) * mu.powf(-two_h) * lower_gamma_unchecked(two_h + 1.0, x)
            + horizon * hurst * mu.powf(1.0 - two_h) * lower_gamma_unchecked(two_h, x)
    }
}

/// `Δ′(μ) = H(1−2H) μ^{−2H−1} ∫_0^{μT} e^{−s} s^{2H−1} (μT − s) ds`; finite at `μ = 0`.
pub(crate) fn delta_prime_unchecked(mu: f64, hurst: f64, horizon: f64) -> f64 {
    if hurst == 0.5 {
        return 0.0;
    }
    let two_h = 2.0 * hurst;
    let x = mu.max(0.0) * horizon;
    if x <= SERIES_SWITCH {
        horizon.powf(two_h + 1.0) * hurst * (two_h - 1.0) * delta_series(x, hurst, 1)
    } else {
        let j1 = x * lower_gamma_unchecked(two_h, x) - lower_gamma_unchecked(two_h + 1.0, x);
        hurst * (1.0 - two_h) * mu.powf(-two_h - 1.0) * j1
    }
}

/// `Δ″(μ) = H(2H−1) μ^{−2H−2} ∫_0^{μT} e^{−s} s^{2H−1} (2HμT − (2H+1)s) ds`.
pub(crate) fn delta_second_unchecked(mu: f64, hurst: f64, horizon: f64) -> f64 {
    if hurst == 0.5 {
        return 0.0;
    }
    let two_h = 2.0 * hurst;
    let x = mu.max(0.0) * horizon;
    if x <= SERIES_SWITCH {
        horizon.powf(two_h + 2.0) * hurst * (two_h - 1.0) * delta_series(x, hurst, 2)
    } else {
        let j2 = two_h * x * lower_gamma_unchecked(two_h, x) - (two_h + 1.0) * lower_gamma_unchecked(two_h + 1.0, x);
        hurst * (two_h - 1.0) * mu.powf(-two_h - 2.0) * j2
    }
}
