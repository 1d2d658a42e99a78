#![allow(dead_code)]

use pathlse::estimator::SufficientStats;
use rand::Rng;

/// Adaptive Simpson on [a, b].
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Lower incomplete gamma by quadrature. For h < 1 the substitution u = s^h
/// removes the endpoint singularity.
pub fn gamma_oracle(h: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    // magnitude-relative tolerance: γ(h, x) ~ x^h / h for small x
    let tol = 1e-15 * (x.powf(h) / h).min(1.0);
    if h < 1.0 {
        let f = |u: f64| (-u.powf(1.0 / h)).exp();
        let upper = x.powf(h);
        // split so the panels stay on the region where the integrand lives
        let cut = upper.min(40f64.powf(h));
        let mut total = simpson(&f, 0.0, cut, tol);
        if upper > cut {
            total += simpson(&f, cut, upper, tol);
        }
        total / h
    } else {
        let f = |s: f64| (-s).exp() * s.powf(h - 1.0);
        let mut total = 0.0;
        let mut a = 0.0;
        while a < x && a < 100.0 {
            let b = (a + 4.0).min(x);
            total += simpson(&f, a, b, tol);
            a = b;
        }
        total
    }
}

/// Three-term compensation with the quadrature incomplete gamma.
pub fn delta_oracle(mu: f64, hurst: f64, horizon: f64) -> f64 {
    let x = mu * horizon;
    0.5 * horizon.powf(2.0 * hurst) * (-x).exp()
        - mu.powf(-2.0 * hurst) * gamma_oracle(2.0 * hurst + 1.0, x) * (hurst - 0.5)
        + horizon * hurst * mu.powf(1.0 - 2.0 * hurst) * gamma_oracle(2.0 * hurst, x)
}

/// Second derivative of an analytic `f` at `x`: five-point stencils at steps
/// `s` and `s/2`, Richardson-combined. A wide step keeps the signal above
/// rounding noise where `f` is nearly flat.
pub fn second_difference<F: Fn(f64) -> f64>(f: F, x: f64, s: f64) -> f64 {
    let five =
        |s: f64| (-f(x + 2.0 * s) + 16.0 * f(x + s) - 30.0 * f(x) + 16.0 * f(x - s) - f(x - 2.0 * s)) / (12.0 * s * s);
    (16.0 * five(s / 2.0) - five(s)) / 15.0
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Synthetic sufficient statistics with heat-like scaling, β sometimes zero and
/// initial values sometimes zero.
pub fn synthetic_stats<R: Rng>(rng: &mut R, hurst: f64) -> SufficientStats {
    let n = rng.random_range(1..16);
    let scale = rng.random_range(0.2..3.0);
    let alpha: Vec<f64> = (1..=n).map(|k| scale * (k * k) as f64).collect();
    let beta: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                0.0
            } else {
                rng.random_range(0.0..3.0)
            }
        })
        .collect();
    let x0sq: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_bool(0.6) {
                0.0
            } else {
                rng.random_range(0.0..5.0)
            }
        })
        .collect();
    let xtsq: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
    let qvar: Vec<f64> = alpha
        .iter()
        .map(|a| rng.random_range(0.02..3.0) * a.powf(-2.0 * hurst))
        .collect();
    let horizon = rng.random_range(0.5..2.0);
    SufficientStats::new(alpha, beta, x0sq, xtsq, qvar, hurst, horizon).unwrap()
}
