//! Fourier-mode trajectories driven by exact fBm.
//!
//! Each mode solves `dx = -μ x dt + dB` through
//! `x(t) = e^{-μt} x(0) + B(t) - μ I(t)`, `I(t) = ∫_0^t e^{-μ(t-s)} B(s) ds`,
//! with `I` advanced by the product trapezoid rule: `B` is interpolated
//! linearly on each step and integrated exactly against the exponential
//! kernel, so all weights stay bounded and a constant `B` is reproduced
//! exactly. The interpolation misses the roughness of `B` inside a step,
//! which matters once `μ h` is not small, so stiff modes are integrated on a
//! refined copy of the output grid and then subsampled. The quadratic
//! functional `∫ x² dt` is accumulated on that fine grid.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::fbm::{FbmPathSet, FbmSampler, Scratch, TimeGrid};
use crate::model::{Basis, SpectralModel};
use crate::rng::StreamKey;

/// Largest refinement factor per output step.
pub const MAX_SUBSTEPS: usize = 1 << 12;

/// Modes sharing a refinement factor are drawn two per transform, from the
/// substream of the lower mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Job {
    Single(usize),
    Pair(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Upper bound on `μ_k` times the internal step. `None` integrates on
    /// the output grid directly.
    pub max_mu_dt: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { max_mu_dt: Some(0.02) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeTrajectorySet {
    pub grid: TimeGrid,
    pub drifts: Vec<f64>,
    pub initial: Vec<f64>,
    /// Row `k` holds `x_k(t_i)`.
    pub values: Vec<Vec<f64>>,
    /// `∫_0^T x_k² dt` from the internal grid, when one was used.
    pub integrated_sq: Option<Vec<f64>>,
}

impl ModeTrajectorySet {
    pub fn n_modes(&self) -> usize {
        self.values.len()
    }

    /// Trajectories observed without drift metadata, e.g. read from a file.
    pub fn from_values(grid: TimeGrid, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Schema("no mode columns".into()));
        }
        for (k, row) in values.iter().enumerate() {
            if row.len() != grid.n_points() {
                return Err(Error::Schema(format!(
                    "mode {} has {} samples, expected {}",
                    k + 1,
                    row.len(),
                    grid.n_points()
                )));
            }
            if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { mode: k, index: i });
            }
        }
        let initial = values.iter().map(|r| r[0]).collect();
        Ok(Self {
            grid,
            drifts: Vec::new(),
            initial,
            values,
            integrated_sq: None,
        })
    }

    /// The first `n` modes.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            grid: self.grid,
            drifts: self.drifts.iter().take(n).copied().collect(),
            initial: self.initial[..n].to_vec(),
            values: self.values[..n].to_vec(),
            integrated_sq: self.integrated_sq.as_ref().map(|q| q[..n].to_vec()),
        }
    }
}

/// Precomputed per-mode refinement and fBm samplers, reusable across runs.
#[derive(Debug)]
pub struct Simulator {
    model: SpectralModel,
    grid: TimeGrid,
    drifts: Vec<f64>,
    substeps: Vec<usize>,
    jobs: Vec<Job>,
    samplers: BTreeMap<usize, FbmSampler>,
}

fn substeps_for(mu: f64, h: f64, max_mu_dt: Option<f64>) -> usize {
    match max_mu_dt {
        None => 1,
        Some(target) => {
            let need = (mu * h / target).ceil().max(1.0);
            if need >= MAX_SUBSTEPS as f64 {
                return MAX_SUBSTEPS;
            }
            // smallest 2^a or 3·2^a not below `need`
            let need = need as usize;
            let pow = need.next_power_of_two();
            if pow.is_multiple_of(4) && 3 * pow / 4 >= need {
                3 * pow / 4
            } else {
                pow
            }
        }
    }
}

impl Simulator {
    pub fn new(model: &SpectralModel, grid: TimeGrid, opts: SimOptions) -> Result<Self> {
        if grid.n_steps() < 2 {
            return Err(Error::invalid("n_steps", "must be at least 2"));
        }
        if (grid.horizon() - model.horizon).abs() > 1e-12 * model.horizon {
            return Err(Error::invalid(
                "horizon",
                format!(
                    "grid horizon {} differs from model horizon {}",
                    grid.horizon(),
                    model.horizon
                ),
            ));
        }
        if let Some(t) = opts.max_mu_dt {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::invalid("max_mu_dt", format!("must be positive, got {t}")));
            }
        }
        let drifts = model.drifts()?;
        if let Some(k) = drifts.iter().position(|&m| !(m > 0.0)) {
            return Err(Error::Domain(format!("drift of mode {} is {}", k + 1, drifts[k])));
        }
        let substeps: Vec<usize> = drifts
            .iter()
            .map(|&mu| substeps_for(mu, grid.step(), opts.max_mu_dt))
            .collect();
        let mut samplers = BTreeMap::new();
        for &s in &substeps {
            if let std::collections::btree_map::Entry::Vacant(e) = samplers.entry(s) {
                e.insert(FbmSampler::new(grid.refined(s)?, model.hurst)?);
            }
        }
        let mut jobs = Vec::new();
        let mut k = 0;
        while k < substeps.len() {
            if k + 1 < substeps.len() && substeps[k] == substeps[k + 1] {
                jobs.push(Job::Pair(k, k + 1));
                k += 2;
            } else {
                jobs.push(Job::Single(k));
                k += 1;
            }
        }
        Ok(Self {
            model: model.clone(),
            grid,
            drifts,
            substeps,
            jobs,
            samplers,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn model(&self) -> &SpectralModel {
        &self.model
    }

    pub fn substeps(&self) -> &[usize] {
        &self.substeps
    }

    /// Trajectories for run `run`. Each transform draws from the substream
    /// `(seed, run, k)` of its lowest mode `k`.
    pub fn run(&self, seed: u64, run: usize) -> Result<ModeTrajectorySet> {
        self.run_inner(seed, run, false).map(|(t, _)| t)
    }

    /// As [`Simulator::run`], also returning the driving fBm on the output grid.
    pub fn run_with_noise(&self, seed: u64, run: usize) -> Result<(ModeTrajectorySet, FbmPathSet)> {
        let (t, paths) = self.run_inner(seed, run, true)?;
        let noise = FbmPathSet {
            grid: self.grid,
            hurst: self.model.hurst,
            paths,
        };
        Ok((t, noise))
    }

    fn run_inner(&self, seed: u64, run: usize, keep_noise: bool) -> Result<(ModeTrajectorySet, Vec<Vec<f64>>)> {
        let n_modes = self.drifts.len();
        let mut values = vec![Vec::new(); n_modes];
        let mut qvar = vec![0.0; n_modes];
        let mut noise = vec![Vec::new(); if keep_noise { n_modes } else { 0 }];
        let mut scratch = Scratch::default();
        let (mut first, mut second) = (Vec::new(), Vec::new());
        for job in &self.jobs {
            let (k, partner) = match *job {
                Job::Single(k) => (k, None),
                Job::Pair(k, j) => (k, Some(j)),
            };
            let s = self.substeps[k];
            let sampler = &self.samplers[&s];
            let len = self.grid.n_steps() * s + 1;
            first.resize(len, 0.0);
            let mut rng = StreamKey::new(seed, run, k).rng();
            match partner {
                None => sampler.sample_with(&mut rng, &mut first, &mut scratch),
                Some(_) => {
                    second.resize(len, 0.0);
                    sampler.sample_pair_with(&mut rng, &mut first, &mut second, &mut scratch);
                }
            }
            for (mode, path) in std::iter::once((k, &first)).chain(partner.map(|j| (j, &second))) {
                let (row, q) = self.integrate(mode, path)?;
                values[mode] = row;
                qvar[mode] = q;
                if keep_noise {
                    noise[mode] = path.iter().step_by(s).copied().collect();
                }
            }
        }
        let traj = ModeTrajectorySet {
            grid: self.grid,
            drifts: self.drifts.clone(),
            initial: self.model.initial.clone(),
            values,
            integrated_sq: Some(qvar),
        };
        Ok((traj, noise))
    }

    /// Output-grid samples of mode `k` and `∫ x_k²` driven by the fine path.
    fn integrate(&self, k: usize, fine: &[f64]) -> Result<(Vec<f64>, f64)> {
        let n = self.grid.n_steps();
        let s = self.substeps[k];
        let mu = self.drifts[k];
        let x0 = self.model.initial[k];
        let hf = self.grid.horizon() / (n * s) as f64;
        let (decay, w_prev, w_next) = product_weights(mu, hf);
        let mut row = Vec::with_capacity(n + 1);
        row.push(x0);
        let mut integral = 0.0;
        let mut free = x0;
        let mut sq = 0.5 * x0 * x0;
        let mut x = x0;
        for j in 1..=n * s {
            integral = decay * integral + w_prev * fine[j - 1] + w_next * fine[j];
            free *= decay;
            x = free + fine[j] - mu * integral;
            sq += x * x;
            if j % s == 0 {
                if !x.is_finite() {
                    return Err(Error::NonFinite { mode: k, index: j / s });
                }
                row.push(x);
            }
        }
        sq -= 0.5 * x * x;
        Ok((row, sq * hf))
    }
}

/// `(e^{-μh}, w0, w1)` with `w0 B(t) + w1 B(t+h) = ∫_0^h e^{-μ(h-u)} B_lin(t+u) du`
/// for the linear interpolant `B_lin`.
pub(crate) fn product_weights(mu: f64, h: f64) -> (f64, f64, f64) {
    let z = mu * h;
    let decay = (-z).exp();
    if z < 1e-4 {
        let w_next = h * (0.5 - z / 6.0 + z * z / 24.0);
        let w_prev = h * (0.5 - z / 3.0 + z * z / 8.0);
        return (decay, w_prev, w_next);
    }
    let phi = -(-z).exp_m1() / z;
    (decay, h * (phi - decay) / z, h * (1.0 - phi) / z)
}

/// One run of the model on `grid` with default options.
pub fn simulate_modes(model: &SpectralModel, grid: TimeGrid, seed: u64) -> Result<ModeTrajectorySet> {
    Simulator::new(model, grid, SimOptions::default())?.run(seed, 0)
}

/// Composite trapezoid of `f` on a uniform grid.
pub(crate) fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, mid @ .., last] => step * (0.5 * (first + last) + mid.iter().sum::<f64>()),
    }
}

/// `max_i |x(t_i) - x(0) + μ ∫_0^{t_i} x ds - B(t_i)|` per mode, with the
/// integral taken by the trapezoid rule on the output grid.
pub fn residual_check(traj: &ModeTrajectorySet, noise: &FbmPathSet, drifts: &[f64]) -> Result<Vec<f64>> {
    if traj.grid != noise.grid {
        return Err(Error::invalid("grid", "trajectories and noise use different grids"));
    }
    if traj.n_modes() != noise.n_modes() || drifts.len() != traj.n_modes() {
        return Err(Error::invalid(
            "n_modes",
            "trajectories, noise and drifts disagree in length",
        ));
    }
    let h = traj.grid.step();
    Ok(traj
        .values
        .iter()
        .zip(&noise.paths)
        .zip(drifts)
        .map(|((x, b), &mu)| {
            let mut integral = 0.0;
            let mut worst: f64 = 0.0;
            for i in 1..x.len() {
                integral += 0.5 * h * (x[i - 1] + x[i]);
                worst = worst.max((x[i] - x[0] + mu * integral - b[i]).abs());
            }
            worst
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub time_index: usize,
    pub time: f64,
    /// Spatial coordinates, one entry per point (length 1 or 2).
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

/// `u(t, ξ) = Σ_k x_k(t) e_k(ξ)` with the L²-orthonormal sine basis. In 2D
/// the field is evaluated on `xi_grid × xi_grid`.
pub fn reconstruct_field(
    traj: &ModeTrajectorySet,
    basis: Option<&Basis>,
    xi_grid: &[f64],
    time_indices: &[usize],
) -> Result<Vec<FieldSnapshot>> {
    let basis = basis.ok_or_else(|| Error::invalid("basis", "model has no eigenfunction labels"))?;
    let n_labels = match basis {
        Basis::Sine1d(v) => v.len(),
        Basis::Sine2d(v) => v.len(),
    };
    if n_labels < traj.n_modes() {
        return Err(Error::invalid("basis", "fewer labels than modes"));
    }
    let sine = |k: usize, xi: f64| SQRT_2 * (k as f64 * std::f64::consts::PI * xi).sin();
    let points: Vec<Vec<f64>> = match basis {
        Basis::Sine1d(_) => xi_grid.iter().map(|&a| vec![a]).collect(),
        Basis::Sine2d(_) => xi_grid
            .iter()
            .flat_map(|&a| xi_grid.iter().map(move |&b| vec![a, b]))
            .collect(),
    };
    // Eigenfunction values, one row per mode.
    let phi: Vec<Vec<f64>> = (0..traj.n_modes())
        .map(|k| {
            points
                .iter()
                .map(|p| match basis {
                    Basis::Sine1d(v) => sine(v[k], p[0]),
                    Basis::Sine2d(v) => sine(v[k].0, p[0]) * sine(v[k].1, p[1]),
                })
                .collect()
        })
        .collect();
    time_indices
        .iter()
        .map(|&i| {
            if i > traj.grid.n_steps() {
                return Err(Error::invalid(
                    "time_index",
                    format!("{i} exceeds {}", traj.grid.n_steps()),
                ));
            }
            let mut values = vec![0.0; points.len()];
            for (row, e) in traj.values.iter().zip(&phi) {
                let c = row[i];
                for (v, &ek) in values.iter_mut().zip(e) {
                    *v += c * ek;
                }
            }
            Ok(FieldSnapshot {
                time_index: i,
                time: traj.grid.time(i),
                points: points.clone(),
                values,
            })
        })
        .collect()
}
