//! Least-squares drift estimation from Fourier-mode observations.
//!
//! The pathwise estimator is a fixed point of `R_N`, a map built from
//! endpoint squares, the quadratic functionals `∫ x_k²` and the
//! compensation `Δ`. `R_N` is constant for `H = ½`, decreasing and convex
//! for `H > ½`, and increasing and concave for `H < ½`, which fixes the
//! solver strategy in each regime.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::SpectralModel;
use crate::simulate::{trapezoid, ModeTrajectorySet};
use crate::special::{
    check_hurst, compensation_delta, delta_at_zero, delta_prime_unchecked, delta_unchecked, DeltaParams,
};

pub const MAX_ITERATIONS: usize = 200;
const RESIDUAL_TOL: f64 = 1e-10;
const BRACKET_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub x0sq: Vec<f64>,
    pub xtsq: Vec<f64>,
    pub qvar: Vec<f64>,
    pub hurst: f64,
    pub horizon: f64,
}

impl SufficientStats {
    pub fn new(
        alpha: Vec<f64>,
        beta: Vec<f64>,
        x0sq: Vec<f64>,
        xtsq: Vec<f64>,
        qvar: Vec<f64>,
        hurst: f64,
        horizon: f64,
    ) -> Result<Self> {
        let n = alpha.len();
        if n == 0 {
            return Err(Error::invalid("alpha", "at least one mode is required"));
        }
        for (name, v) in [("beta", &beta), ("x0sq", &x0sq), ("xtsq", &xtsq), ("qvar", &qvar)] {
            if v.len() != n {
                return Err(Error::invalid(name, format!("length {} differs from {n}", v.len())));
            }
        }
        for (name, v) in [
            ("alpha", &alpha),
            ("beta", &beta),
            ("x0sq", &x0sq),
            ("xtsq", &xtsq),
            ("qvar", &qvar),
        ] {
            if let Some(x) = v.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
                return Err(Error::invalid(
                    name,
                    format!("entries must be finite and non-negative, got {x}"),
                ));
            }
        }
        check_hurst(hurst)?;
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid("horizon", format!("must be positive, got {horizon}")));
        }
        Ok(Self {
            alpha,
            beta,
            x0sq,
            xtsq,
            qvar,
            hurst,
            horizon,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.alpha.len()
    }

    /// The first `n` modes.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            alpha: self.alpha[..n].to_vec(),
            beta: self.beta[..n].to_vec(),
            x0sq: self.x0sq[..n].to_vec(),
            xtsq: self.xtsq[..n].to_vec(),
            qvar: self.qvar[..n].to_vec(),
            ..*self
        }
    }

    /// `Σ α_k² ∫ x_k²`.
    pub fn denominator(&self) -> f64 {
        self.alpha.iter().zip(&self.qvar).map(|(a, q)| a * a * q).sum()
    }

    pub fn nonzero_initial(&self) -> bool {
        self.x0sq.iter().any(|&v| v > 0.0)
    }
}

/// Sufficient statistics of the first `traj.n_modes()` modes of `model`.
pub fn compute_stats(traj: &ModeTrajectorySet, model: &SpectralModel) -> Result<SufficientStats> {
    let n = traj.n_modes();
    if n == 0 || n > model.n_modes() {
        return Err(Error::invalid(
            "n_modes",
            format!("{n} trajectories for a model with {} modes", model.n_modes()),
        ));
    }
    let h = traj.grid.step();
    let mut x0sq = Vec::with_capacity(n);
    let mut xtsq = Vec::with_capacity(n);
    let mut qvar = Vec::with_capacity(n);
    for (k, row) in traj.values.iter().enumerate() {
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { mode: k, index: i });
        }
        if row.len() < 2 {
            return Err(Error::InsufficientPoints(format!(
                "mode {} has {} samples",
                k + 1,
                row.len()
            )));
        }
        x0sq.push(row[0] * row[0]);
        xtsq.push(row[row.len() - 1] * row[row.len() - 1]);
        qvar.push(match &traj.integrated_sq {
            Some(q) => q[k],
            None => trapezoid(&row.iter().map(|x| x * x).collect::<Vec<_>>(), h),
        });
    }
    SufficientStats::new(
        model.alpha[..n].to_vec(),
        model.beta[..n].to_vec(),
        x0sq,
        xtsq,
        qvar,
        model.hurst,
        model.horizon,
    )
}

fn denominator_checked(s: &SufficientStats) -> Result<f64> {
    let d = s.denominator();
    if d > 0.0 && d.is_finite() {
        Ok(d)
    } else {
        Err(Error::DegenerateDenominator(d))
    }
}

fn delta_or_limit(mu: f64, s: &SufficientStats) -> f64 {
    if mu > 0.0 {
        delta_unchecked(mu, s.hurst, s.horizon)
    } else {
        delta_at_zero(s.hurst, s.horizon)
    }
}

/// `R_N(Λ)`; at `Λ = 0` modes without reaction use the limit `Δ(0+)`.
pub fn r_function(s: &SufficientStats, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("Lambda must be non-negative, got {lambda}")));
    }
    let d = denominator_checked(s)?;
    Ok(r_unchecked(s, lambda, d))
}

fn r_unchecked(s: &SufficientStats, lambda: f64, d: f64) -> f64 {
    let mut num = 0.0;
    for k in 0..s.n_modes() {
        let a = s.alpha[k];
        if a == 0.0 {
            continue;
        }
        let mu = a * lambda + s.beta[k];
        num += a * (0.5 * (s.xtsq[k] - s.x0sq[k]) - delta_or_limit(mu, s)) + a * s.beta[k] * s.qvar[k];
    }
    -num / d
}

/// `R_N′(Λ)`. `Λ = 0` is accepted as the right limit.
pub fn r_prime(s: &SufficientStats, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("Lambda must be non-negative, got {lambda}")));
    }
    let d = denominator_checked(s)?;
    Ok(r_prime_unchecked(s, lambda, d))
}

fn r_prime_unchecked(s: &SufficientStats, lambda: f64, d: f64) -> f64 {
    let mut num = 0.0;
    for k in 0..s.n_modes() {
        let a = s.alpha[k];
        if a == 0.0 {
            continue;
        }
        num += a * a * delta_prime_unchecked(a * lambda + s.beta[k], s.hurst, s.horizon);
    }
    num / d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseTag {
    Unique,
    None,
    TwoRootsGreater,
    ConstantMap,
}

impl CaseTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            CaseTag::Unique => "unique",
            CaseTag::None => "none",
            CaseTag::TwoRootsGreater => "two_roots_greater",
            CaseTag::ConstantMap => "constant_map",
        }
    }
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateResult {
    pub value: f64,
    pub case: CaseTag,
    pub iterations: usize,
    pub residual: f64,
    pub r_at_zero: f64,
}

impl fmt::Display for EstimateResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "value = {:.17e}", self.value)?;
        writeln!(f, "case_tag = {}", self.case)?;
        writeln!(f, "iterations = {}", self.iterations)?;
        writeln!(f, "residual = {:.17e}", self.residual)?;
        write!(f, "r_at_zero = {:.17e}", self.r_at_zero)
    }
}

fn converged(g: f64, x: f64) -> bool {
    g.abs() <= RESIDUAL_TOL * x.max(1.0)
}

struct Solver<'a> {
    s: &'a SufficientStats,
    d: f64,
    iterations: usize,
}

impl Solver<'_> {
    fn g(&self, x: f64) -> f64 {
        r_unchecked(self.s, x, self.d) - x
    }

    fn rp(&self, x: f64) -> f64 {
        r_prime_unchecked(self.s, x, self.d)
    }

    fn tick(&mut self, last: f64, residual: f64, lo: f64, hi: f64) -> Result<()> {
        self.iterations += 1;
        if self.iterations > MAX_ITERATIONS {
            return Err(Error::NoConvergence {
                iterations: MAX_ITERATIONS,
                last,
                residual,
                lo,
                hi,
            });
        }
        Ok(())
    }

    /// Double `hi` until `g(hi) < 0`.
    fn expand_negative(&mut self, mut hi: f64) -> Result<f64> {
        hi = hi.max(1.0);
        loop {
            let g = self.g(hi);
            if g < 0.0 {
                return Ok(hi);
            }
            self.tick(hi, g, 0.0, hi)?;
            hi *= 2.0;
        }
    }

    /// Root of the decreasing-through-zero `g` on `[lo, hi]`, with
    /// `g(lo) > 0 > g(hi)`, by Newton steps kept inside the bracket.
    fn newton(&mut self, mut lo: f64, mut hi: f64, start: f64) -> Result<f64> {
        let mut x = start.clamp(lo, hi);
        loop {
            let g = self.g(x);
            if converged(g, x) {
                return Ok(x);
            }
            if g > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            if hi - lo <= BRACKET_TOL * hi.max(1.0) {
                return Ok(x);
            }
            self.tick(x, g, lo, hi)?;
            let slope = self.rp(x) - 1.0;
            let step = x - g / slope;
            x = if slope < 0.0 && step > lo && step < hi {
                step
            } else {
                0.5 * (lo + hi)
            };
        }
    }

    /// `Λ*` with `R′(Λ*) = 1`, given `R′(0+) > 1` and `R′` decreasing.
    fn unit_slope(&mut self) -> Result<f64> {
        let mut lo = 0.0;
        let mut hi = 1.0;
        while self.rp(hi) > 1.0 {
            self.tick(hi, self.rp(hi) - 1.0, lo, hi)?;
            lo = hi;
            hi *= 2.0;
        }
        while hi - lo > BRACKET_TOL * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            let v = self.rp(mid) - 1.0;
            if v == 0.0 {
                return Ok(mid);
            }
            if v > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            self.tick(mid, v, lo, hi)?;
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Greater non-negative solution of `R_N(Λ) = Λ`, or `0` with case `none`.
pub fn pathwise_lse(s: &SufficientStats) -> Result<EstimateResult> {
    let d = denominator_checked(s)?;
    let mut solver = Solver { s, d, iterations: 0 };
    let r0 = r_unchecked(s, 0.0, d);
    let none = |iterations| EstimateResult {
        value: 0.0,
        case: CaseTag::None,
        iterations,
        residual: r0.abs(),
        r_at_zero: r0,
    };
    let finish = |value: f64, case, solver: &Solver| EstimateResult {
        value,
        case,
        iterations: solver.iterations,
        residual: solver.g(value).abs(),
        r_at_zero: r0,
    };

    if s.hurst == 0.5 {
        return Ok(if r0 > 0.0 {
            finish(r0, CaseTag::Unique, &solver)
        } else {
            none(0)
        });
    }
    if solver.rp(0.0) == 0.0 && solver.rp(1.0) == 0.0 {
        return Ok(if r0 > 0.0 {
            finish(r0, CaseTag::ConstantMap, &solver)
        } else {
            none(0)
        });
    }

    if s.hurst > 0.5 {
        if r0 <= 0.0 {
            return Ok(none(0));
        }
        // R decreasing, so R(r0) ≤ r0 and the root lies in [0, r0].
        let x = solver.newton(0.0, r0, r0)?;
        return Ok(finish(x, CaseTag::Unique, &solver));
    }

    if r0 > 0.0 {
        let hi = solver.expand_negative(r0)?;
        let x = solver.newton(0.0, hi, r0)?;
        return Ok(finish(x, CaseTag::Unique, &solver));
    }
    if solver.rp(0.0) <= 1.0 {
        return Ok(none(solver.iterations));
    }
    let star = solver.unit_slope()?;
    let g_star = solver.g(star);
    if converged(g_star, star) {
        return Ok(finish(star, CaseTag::Unique, &solver));
    }
    if g_star < 0.0 {
        return Ok(none(solver.iterations));
    }
    let hi = solver.expand_negative(2.0 * star)?;
    let x = solver.newton(star, hi, hi)?;
    Ok(finish(x, CaseTag::TwoRootsGreater, &solver))
}

/// `R_N(λ)` at the true drift.
pub fn theoretical_lse(s: &SufficientStats, lambda_true: f64) -> Result<f64> {
    if !(lambda_true > 0.0) {
        return Err(Error::Domain(format!(
            "lambda_true must be positive, got {lambda_true}"
        )));
    }
    r_function(s, lambda_true)
}

/// `∫_0^T x δx = (x(T)² − x(0)²)/2 − Δ(μ)`.
pub fn skorokhod_integral_pathwise(x0sq: f64, xtsq: f64, mu: f64, hurst: f64, horizon: f64) -> Result<f64> {
    let p = DeltaParams::new(mu, hurst, horizon)?;
    Ok(0.5 * (xtsq - x0sq) - compensation_delta(&p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::TimeGrid;
    use crate::rng::StreamKey;
    use proptest::prelude::*;
    use rand::Rng;

    fn one_mode(hurst: f64, x0sq: f64, xtsq: f64, qvar: f64) -> SufficientStats {
        SufficientStats::new(vec![1.0], vec![0.0], vec![x0sq], vec![xtsq], vec![qvar], hurst, 1.0).unwrap()
    }

    /// Random stats with heat-like eigenvalues.
    pub(crate) fn random_stats<R: Rng>(rng: &mut R, hurst: f64) -> SufficientStats {
        let n = rng.random_range(1..12);
        let scale = rng.random_range(0.2..3.0);
        let alpha: Vec<f64> = (1..=n).map(|k| scale * (k * k) as f64).collect();
        let beta: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.5) {
                    0.0
                } else {
                    rng.random_range(0.0..2.0)
                }
            })
            .collect();
        let x0sq = (0..n)
            .map(|_| {
                if rng.random_bool(0.7) {
                    0.0
                } else {
                    rng.random_range(0.0..4.0)
                }
            })
            .collect();
        let xtsq = (0..n).map(|_| rng.random_range(0.0..1.5)).collect();
        let qvar = alpha
            .iter()
            .map(|a: &f64| rng.random_range(0.05..2.0) * a.powf(-2.0 * hurst))
            .collect();
        SufficientStats::new(alpha, beta, x0sq, xtsq, qvar, hurst, rng.random_range(0.5..2.0)).unwrap()
    }

    #[test]
    fn stats_of_simple_paths() {
        let m = SpectralModel::raw(vec![1.0, 2.0], vec![0.0, 0.0], 0.5, 1.0, Some(1.0), &[]).unwrap();
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let line: Vec<f64> = g.times();
        let traj = ModeTrajectorySet::from_values(g, vec![vec![2.0; 1001], line]).unwrap();
        let s = compute_stats(&traj, &m).unwrap();
        assert!((s.qvar[0] - 4.0).abs() < 1e-12);
        assert!((s.qvar[1] - 1.0 / 3.0).abs() < 1e-5);
        assert_eq!(s.xtsq[1], 1.0);
        assert_eq!(s.x0sq[0], 4.0);
    }

    #[test]
    fn wiener_hand_example() {
        let s = one_mode(0.5, 0.0, 1.0, 1.0);
        for l in [0.0, 0.3, 7.0] {
            assert!(r_function(&s, l).unwrap().abs() < 1e-15);
        }
        assert!((theoretical_lse(&s, 1.0).unwrap()).abs() < 1e-15);
        assert_eq!(r_prime(&s, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn constant_map_cases() {
        // R ≡ (Δ − xT²/2)/qvar = (0.5 − xT²/2)/qvar at H = ½.
        let s = one_mode(0.5, 0.0, 0.3, 1.0);
        let r = pathwise_lse(&s).unwrap();
        assert_eq!(r.case, CaseTag::Unique);
        assert!((r.value - 0.35).abs() < 1e-15);
        let s = one_mode(0.5, 0.0, 1.4, 1.0);
        let r = pathwise_lse(&s).unwrap();
        assert_eq!((r.case, r.value), (CaseTag::None, 0.0));
        assert!((r.r_at_zero + 0.2).abs() < 1e-15);
    }

    #[test]
    fn degenerate_denominator() {
        let s = one_mode(0.7, 0.0, 1.0, 0.0);
        assert!(matches!(r_function(&s, 1.0), Err(Error::DegenerateDenominator(_))));
        assert!(matches!(pathwise_lse(&s), Err(Error::DegenerateDenominator(_))));
    }

    #[test]
    fn two_root_branch() {
        let s = one_mode(0.2, 0.0, 1.2, 0.01);
        assert!(r_function(&s, 0.0).unwrap() < 0.0);
        let r = pathwise_lse(&s).unwrap();
        assert_eq!(r.case, CaseTag::TwoRootsGreater);
        assert!(r.residual <= 1e-10 * r.value.max(1.0));
        assert!(r_prime(&s, r.value).unwrap() < 1.0);
        // the smaller root lies below the returned one
        assert!(r_function(&s, 0.5 * r.value).unwrap() > 0.5 * r.value);
    }

    #[test]
    fn no_root_for_rough_negative_map() {
        let s = one_mode(0.2, 0.0, 1.2, 5.0);
        let r = pathwise_lse(&s).unwrap();
        assert_eq!((r.case, r.value), (CaseTag::None, 0.0));
    }

    #[test]
    fn skorokhod_endpoint_identity() {
        let v = skorokhod_integral_pathwise(0.0, 1.0, 3.0, 0.5, 1.0).unwrap();
        assert!(v.abs() < 1e-12);
        let d = compensation_delta(&DeltaParams::new(2.0, 0.3, 1.0).unwrap());
        assert_eq!(skorokhod_integral_pathwise(0.0, 0.0, 2.0, 0.3, 1.0).unwrap(), -d);
        let mut rng = StreamKey::new(1, 0, 0).rng();
        let path: Vec<f64> = (0..500).map(|_| rng.random_range(-3.0..3.0)).collect();
        let sym: f64 = path.windows(2).map(|w| 0.5 * (w[0] + w[1]) * (w[1] - w[0])).sum();
        let ends = 0.5 * (path[499].powi(2) - path[0].powi(2));
        assert!((sym - ends).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn r_monotone(seed in any::<u64>(), h in prop::sample::select(vec![0.2, 0.5, 0.8]),
                      l1 in 0.01f64..10.0, l2 in 0.01f64..10.0) {
            let s = random_stats(&mut StreamKey::new(seed, 0, 0).rng(), h);
            let (lo, hi) = if l1 < l2 { (l1, l2) } else { (l2, l1) };
            prop_assume!(hi - lo > 1e-6);
            let (a, b) = (r_function(&s, lo).unwrap(), r_function(&s, hi).unwrap());
            if h < 0.5 { prop_assert!(a < b); }
            if h > 0.5 { prop_assert!(a > b); }
            if h == 0.5 { prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0)); }
        }

        #[test]
        fn r_prime_sign_and_difference(seed in any::<u64>(), h in prop::sample::select(vec![0.2, 0.8]),
                                       l in 0.1f64..10.0) {
            let s = random_stats(&mut StreamKey::new(seed, 0, 0).rng(), h);
            let d = r_prime(&s, l).unwrap();
            prop_assert_eq!(d > 0.0, h < 0.5);
            let e = 1e-4 * l;
            let fd = (r_function(&s, l + e).unwrap() - r_function(&s, l - e).unwrap()) / (2.0 * e);
            prop_assert!((fd - d).abs() <= 1e-5 * d.abs(), "{} vs {}", fd, d);
        }

        #[test]
        fn solver_contract(seed in any::<u64>(), h in prop::sample::select(vec![0.2, 0.5, 0.8])) {
            let s = random_stats(&mut StreamKey::new(seed, 0, 0).rng(), h);
            let r = pathwise_lse(&s).unwrap();
            if r.case != CaseTag::None {
                let g = (r_function(&s, r.value).unwrap() - r.value).abs();
                prop_assert!(g <= 1e-10 * r.value.max(1.0));
            } else {
                prop_assert_eq!(r.value, 0.0);
            }
            if h >= 0.5 {
                prop_assert_eq!(r.case == CaseTag::Unique, r.r_at_zero > 0.0);
            }
            if h == 0.5 {
                let t = theoretical_lse(&s, 1.0).unwrap();
                prop_assert_eq!(r.value, t.max(0.0));
            }
        }
    }
}
