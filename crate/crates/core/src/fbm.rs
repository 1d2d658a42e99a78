//! Exact fractional Brownian motion on a uniform grid.
//!
//! Paths are built from fractional Gaussian noise (the increment process),
//! which is stationary on a uniform grid and therefore admits a circulant
//! embedding of size `2n`. If the embedding has eigenvalues more negative
//! than [`CLIP_THRESHOLD`] relative to the largest, the sampler falls back to
//! a dense Cholesky factor of the increment covariance.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::special::check_hurst;

pub const CLIP_THRESHOLD: f64 = 1e-12;

/// Uniform grid `t_i = i T / n_steps`, `i = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid("horizon", format!("must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::invalid("n_steps", "must be at least 1"));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.horizon
        } else {
            i as f64 * self.step()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.time(i)).collect()
    }

    /// The same horizon with every step split into `factor` sub-steps.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.horizon, self.n_steps * factor.max(1))
    }
}

/// Sampled fBm trajectories, one row per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPathSet {
    pub grid: TimeGrid,
    pub hurst: f64,
    pub paths: Vec<Vec<f64>>,
}

impl FbmPathSet {
    pub fn n_modes(&self) -> usize {
        self.paths.len()
    }
}

/// `½(t^{2H} + s^{2H} − |t−s|^{2H})`.
pub fn fbm_covariance(s: f64, t: f64, hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    if !(s >= 0.0) || !(t >= 0.0) {
        return Err(Error::Domain(format!("times must be non-negative, got ({s}, {t})")));
    }
    let two_h = 2.0 * hurst;
    Ok(0.5 * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h)))
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
fn fgn_autocov(k: usize, two_h: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).powf(two_h))
}

enum Method {
    Circulant {
        /// `sqrt(λ_j / M)` for `j = 0..=n`.
        scale: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    Dense {
        lower: DMatrix<f64>,
    },
}

/// Work buffers for repeated sampling.
#[derive(Debug, Default)]
pub struct Scratch {
    buf: Vec<Complex<f64>>,
    fft: Vec<Complex<f64>>,
}

impl Scratch {
    fn prepare(&mut self, len: usize, fft_len: usize) -> &mut [Complex<f64>] {
        self.buf.resize(len, Complex::new(0.0, 0.0));
        self.fft.resize(fft_len, Complex::new(0.0, 0.0));
        &mut self.buf
    }
}

/// `out[0] = 0`, `out[i + 1] = out[i] + inc_i`.
fn cumulate(increments: impl Iterator<Item = f64>, out: &mut [f64]) {
    out[0] = 0.0;
    let mut acc = 0.0;
    for (slot, inc) in out[1..].iter_mut().zip(increments) {
        acc += inc;
        *slot = acc;
    }
}

/// Reusable generator for fBm paths on one grid.
pub struct FbmSampler {
    grid: TimeGrid,
    hurst: f64,
    method: Method,
}

impl std::fmt::Debug for FbmSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FbmSampler")
            .field("grid", &self.grid)
            .field("hurst", &self.hurst)
            .field("dense", &self.is_dense())
            .finish()
    }
}

impl FbmSampler {
    pub fn new(grid: TimeGrid, hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        match Self::circulant(grid, hurst)? {
            Some(method) => Ok(Self { grid, hurst, method }),
            None => Self::dense(grid, hurst),
        }
    }

    /// Dense Cholesky synthesis regardless of the embedding.
    pub fn dense(grid: TimeGrid, hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        let n = grid.n_steps();
        let two_h = 2.0 * hurst;
        let var = grid.step().powf(two_h);
        let cov = DMatrix::from_fn(n, n, |i, j| var * fgn_autocov(i.abs_diff(j), two_h));
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Synthesis("increment covariance is not positive definite".into()))?;
        Ok(Self {
            grid,
            hurst,
            method: Method::Dense { lower: chol.l() },
        })
    }

    fn circulant(grid: TimeGrid, hurst: f64) -> Result<Option<Method>> {
        let n = grid.n_steps();
        let m = 2 * n;
        let two_h = 2.0 * hurst;
        let var = grid.step().powf(two_h);
        let mut row: Vec<Complex<f64>> = (0..m)
            .map(|j| {
                let lag = if j <= n { j } else { m - j };
                Complex::new(var * fgn_autocov(lag, two_h), 0.0)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(m);
        fft.process(&mut row);
        let max = row.iter().map(|c| c.re).fold(f64::MIN, f64::max);
        let min = row.iter().map(|c| c.re).fold(f64::MAX, f64::min);
        if !(max > 0.0) {
            return Err(Error::Synthesis(
                "circulant embedding has no positive eigenvalue".into(),
            ));
        }
        if min < -CLIP_THRESHOLD * max {
            return Ok(None);
        }
        let scale = row[..=n].iter().map(|c| (c.re.max(0.0) / m as f64).sqrt()).collect();
        Ok(Some(Method::Circulant { scale, fft }))
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.method, Method::Dense { .. })
    }

    /// Fill `out` (length `n_steps + 1`) with one path, `out[0] = 0`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        self.sample_with(rng, out, &mut Scratch::default());
    }

    /// As [`FbmSampler::sample_into`], reusing `scratch` between calls.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64], scratch: &mut Scratch) {
        let n = self.grid.n_steps();
        assert_eq!(out.len(), n + 1, "output length must be n_steps + 1");
        match &self.method {
            Method::Circulant { scale, fft } => {
                let m = 2 * n;
                let buf = scratch.prepare(m, fft.get_inplace_scratch_len());
                buf[0] = Complex::new(scale[0] * rng.sample::<f64, _>(StandardNormal), 0.0);
                buf[n] = Complex::new(scale[n] * rng.sample::<f64, _>(StandardNormal), 0.0);
                let half = std::f64::consts::FRAC_1_SQRT_2;
                for j in 1..n {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    let w = Complex::new(a, b) * (scale[j] * half);
                    buf[j] = w;
                    buf[m - j] = w.conj();
                }
                fft.process_with_scratch(&mut scratch.buf, &mut scratch.fft);
                cumulate(scratch.buf[..n].iter().map(|c| c.re), out);
            }
            Method::Dense { lower } => self.dense_path(lower, rng, out),
        }
    }

    /// Two independent paths from one transform: the real and imaginary
    /// parts of a fully complex circulant draw.
    pub fn sample_pair_with<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        first: &mut [f64],
        second: &mut [f64],
        scratch: &mut Scratch,
    ) {
        let n = self.grid.n_steps();
        assert_eq!(first.len(), n + 1, "output length must be n_steps + 1");
        assert_eq!(second.len(), n + 1, "output length must be n_steps + 1");
        match &self.method {
            Method::Circulant { scale, fft } => {
                let m = 2 * n;
                let buf = scratch.prepare(m, fft.get_inplace_scratch_len());
                for (j, w) in buf.iter_mut().enumerate() {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    *w = Complex::new(a, b) * scale[j.min(m - j)];
                }
                fft.process_with_scratch(&mut scratch.buf, &mut scratch.fft);
                cumulate(scratch.buf[..n].iter().map(|c| c.re), first);
                cumulate(scratch.buf[..n].iter().map(|c| c.im), second);
            }
            Method::Dense { lower } => {
                self.dense_path(lower, rng, first);
                self.dense_path(lower, rng, second);
            }
        }
    }

    fn dense_path<R: Rng + ?Sized>(&self, lower: &DMatrix<f64>, rng: &mut R, out: &mut [f64]) {
        let n = self.grid.n_steps();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let increments = (0..n).map(|i| {
            let row = lower.row(i);
            (0..=i).map(|j| row[j] * z[j]).sum::<f64>()
        });
        cumulate(increments, out);
    }

    pub fn sample(&self, key: StreamKey) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n_points()];
        self.sample_into(&mut key.rng(), &mut out);
        out
    }
}

/// Independent fBm paths for modes `0..n_modes`, mode `k` drawn from the
/// substream `(seed, run 0, k)`.
pub fn sample_fbm_paths(grid: TimeGrid, hurst: f64, n_modes: usize, seed: u64) -> Result<FbmPathSet> {
    let sampler = FbmSampler::new(grid, hurst)?;
    let paths = (0..n_modes)
        .map(|k| sampler.sample(StreamKey::new(seed, 0, k)))
        .collect();
    Ok(FbmPathSet { grid, hurst, paths })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_examples() {
        assert!((fbm_covariance(1.0, 1.0, 0.3).unwrap() - 1.0).abs() < 1e-15);
        assert!((fbm_covariance(1.0, 2.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        // ½(1 + 3^1.5 − 2^1.5), evaluated by hand to 1.6838622...
        let v = fbm_covariance(1.0, 3.0, 0.75).unwrap();
        assert!((v - 1.683862).abs() < 1e-6, "{v}");
        assert_eq!(
            fbm_covariance(0.4, 0.9, 0.7).unwrap(),
            fbm_covariance(0.9, 0.4, 0.7).unwrap()
        );
    }

    #[test]
    fn covariance_domain() {
        assert!(fbm_covariance(1.0, 1.0, 0.0).is_err());
        assert!(fbm_covariance(1.0, 1.0, 1.0).is_err());
        assert!(fbm_covariance(-1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn grid_endpoints() {
        let g = TimeGrid::new(2.0, 7).unwrap();
        let t = g.times();
        assert_eq!(t.len(), 8);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[7], 2.0);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(0.0, 3).is_err());
    }

    #[test]
    fn paths_start_at_zero_and_are_deterministic() {
        let g = TimeGrid::new(1.0, 64).unwrap();
        for &h in &[0.1, 0.5, 0.95] {
            let a = sample_fbm_paths(g, h, 3, 11).unwrap();
            let b = sample_fbm_paths(g, h, 3, 11).unwrap();
            assert_eq!(a, b);
            assert!(a.paths.iter().all(|p| p[0] == 0.0));
            assert_ne!(a.paths[0], a.paths[1]);
        }
    }

    #[test]
    fn circulant_is_used_for_typical_hurst() {
        let g = TimeGrid::new(1.0, 256).unwrap();
        for &h in &[0.05, 0.2, 0.5, 0.8, 0.99] {
            assert!(!FbmSampler::new(g, h).unwrap().is_dense(), "H={h}");
        }
    }

    /// Covariance of `(B(s), B(t))` over many paths, with a standard error
    /// from the empirical second moment of the products.
    fn empirical_cov(sampler: &FbmSampler, n_paths: usize, i: usize, j: usize) -> (f64, f64) {
        let mut rng = StreamKey::new(99, 0, 0).rng();
        let mut path = vec![0.0; sampler.grid().n_points()];
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n_paths {
            sampler.sample_into(&mut rng, &mut path);
            let p = path[i] * path[j];
            s1 += p;
            s2 += p * p;
        }
        let n = n_paths as f64;
        let mean = s1 / n;
        let se = ((s2 / n - mean * mean) / n).sqrt();
        (mean, se)
    }

    #[test]
    fn wiener_variance_at_horizon() {
        let g = TimeGrid::new(1.0, 512).unwrap();
        let sampler = FbmSampler::new(g, 0.5).unwrap();
        let (v, se) = empirical_cov(&sampler, 20_000, 512, 512);
        assert!((v - 1.0).abs() < 4.0 * se, "{v} ± {se}");
    }

    #[test]
    fn smooth_covariance_at_half_and_one() {
        let g = TimeGrid::new(1.0, 256).unwrap();
        let sampler = FbmSampler::new(g, 0.8).unwrap();
        let (c, se) = empirical_cov(&sampler, 20_000, 128, 256);
        let want = fbm_covariance(0.5, 1.0, 0.8).unwrap();
        assert!((c - want).abs() < 4.0 * se, "{c} vs {want} ± {se}");
    }

    #[test]
    fn dense_fallback_matches_kernel() {
        let g = TimeGrid::new(1.0, 32).unwrap();
        let sampler = FbmSampler::dense(g, 0.3).unwrap();
        assert!(sampler.is_dense());
        let (c, se) = empirical_cov(&sampler, 20_000, 10, 32);
        let want = fbm_covariance(g.time(10), 1.0, 0.3).unwrap();
        assert!((c - want).abs() < 4.0 * se, "{c} vs {want} ± {se}");
    }

    #[test]
    fn paired_paths_are_independent_fbm() {
        let h = 0.3;
        let g = TimeGrid::new(1.0, 64).unwrap();
        let sampler = FbmSampler::new(g, h).unwrap();
        let mut rng = StreamKey::new(17, 0, 0).rng();
        let mut scratch = Scratch::default();
        let (mut a, mut b) = (vec![0.0; 65], vec![0.0; 65]);
        let n_paths = 20_000;
        let (i, j) = (20, 64);
        let want = fbm_covariance(g.time(i), g.time(j), h).unwrap();
        let mut sums = [[0.0f64; 2]; 3];
        for _ in 0..n_paths {
            sampler.sample_pair_with(&mut rng, &mut a, &mut b, &mut scratch);
            assert_eq!((a[0], b[0]), (0.0, 0.0));
            for (acc, p) in sums.iter_mut().zip([a[i] * a[j], b[i] * b[j], a[j] * b[j]]) {
                acc[0] += p;
                acc[1] += p * p;
            }
        }
        let n = n_paths as f64;
        for (k, acc) in sums.iter().enumerate() {
            let mean = acc[0] / n;
            let se = ((acc[1] / n - mean * mean) / n).sqrt();
            let target = if k < 2 { want } else { 0.0 };
            assert!((mean - target).abs() < 4.0 * se, "{k}: {mean} vs {target} ± {se}");
        }
    }

    #[test]
    fn increments_are_stationary() {
        let h = 0.25;
        let g = TimeGrid::new(1.0, 128).unwrap();
        let sampler = FbmSampler::new(g, h).unwrap();
        let lag = 4;
        let want = (lag as f64 * g.step()).powf(2.0 * h);
        let mut rng = StreamKey::new(5, 0, 0).rng();
        let mut path = vec![0.0; g.n_points()];
        let starts = [0usize, 40, 124];
        let mut acc = [[0.0f64; 2]; 3];
        let n_paths = 20_000;
        for _ in 0..n_paths {
            sampler.sample_into(&mut rng, &mut path);
            for (a, &s) in acc.iter_mut().zip(&starts) {
                let d = path[s + lag] - path[s];
                a[0] += d * d;
                a[1] += d.powi(4);
            }
        }
        for a in acc {
            let n = n_paths as f64;
            let v = a[0] / n;
            let se = ((a[1] / n - v * v) / n).sqrt();
            assert!((v - want).abs() < 4.0 * se, "{v} vs {want}");
        }
    }
}
