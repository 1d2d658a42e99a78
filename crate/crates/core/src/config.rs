//! Flat TOML run configuration shared by all subcommands.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{GrowthSpec, SpectralModel};
use crate::montecarlo::{EstimatorKind, McConfig, DEFAULT_BURN_IN};
use crate::simulate::SimOptions;

pub const DEFAULT_N_STEPS: usize = 2048;
pub const DEFAULT_RUNS: usize = 100;
pub const DEFAULT_MAX_MU_DT: f64 = 0.02;

/// Every key is optional in the file; required ones are checked when a
/// subcommand needs them.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// heat1d | heat2d | raw
    pub preset: Option<String>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub hurst: Option<f64>,
    pub horizon: Option<f64>,
    /// Modes kept (heat1d, heat2d after sorting).
    pub n_modes: Option<usize>,
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub initial: Option<Vec<f64>>,
    pub n_steps: Option<usize>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    pub estimators: Option<Vec<String>>,
    /// Internal-step bound `μ h`; 0 disables refinement.
    pub max_mu_dt: Option<f64>,
    pub burn_in: Option<usize>,
    pub growth_m1: Option<u32>,
    pub growth_m2: Option<u32>,
    pub growth_d: Option<u32>,
    pub trajectory: Option<PathBuf>,
    pub field_times: Option<Vec<usize>>,
    pub field_points: Option<usize>,
    pub export_noise: Option<bool>,
}

fn required<T: Copy>(v: Option<T>, field: &str) -> Result<T> {
    v.ok_or_else(|| Error::invalid(field, "is required"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Schema(e.message().replace('\n', " ")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn preset(&self) -> &str {
        self.preset.as_deref().unwrap_or("heat1d")
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(1.0)
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps.unwrap_or(DEFAULT_N_STEPS)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn sim_options(&self) -> Result<SimOptions> {
        match self.max_mu_dt.unwrap_or(DEFAULT_MAX_MU_DT) {
            0.0 => Ok(SimOptions { max_mu_dt: None }),
            v if v > 0.0 && v.is_finite() => Ok(SimOptions { max_mu_dt: Some(v) }),
            v => Err(Error::invalid("max_mu_dt", format!("must be non-negative, got {v}"))),
        }
    }

    fn default_modes(&self) -> usize {
        self.n_modes
            .or_else(|| self.n_list.as_ref().and_then(|l| l.last().copied()))
            .unwrap_or(10)
    }

    /// Model with `n_modes` modes (or the configured count).
    pub fn model_with(&self, n_modes: Option<usize>) -> Result<SpectralModel> {
        let hurst = required(self.hurst, "hurst")?;
        let horizon = self.horizon();
        let initial = self.initial.clone().unwrap_or_default();
        let n = n_modes.unwrap_or_else(|| self.default_modes());
        let lambda1 = self.lambda1.unwrap_or(1.0);
        let lambda2 = self.lambda2.unwrap_or(0.0);
        let mut model = match self.preset() {
            "heat1d" => SpectralModel::heat1d(n, lambda1, lambda2, hurst, horizon, &initial)?,
            "heat2d" => SpectralModel::heat2d_lowest(n, lambda1, lambda2, hurst, horizon, &initial)?,
            "raw" => {
                let alpha = self
                    .alpha
                    .clone()
                    .ok_or_else(|| Error::invalid("alpha", "is required for preset raw"))?;
                let beta = self.beta.clone().unwrap_or_else(|| vec![0.0; alpha.len()]);
                let full = SpectralModel::raw(alpha, beta, hurst, horizon, self.lambda1, &[])?;
                let n = n_modes.or(self.n_modes).unwrap_or(full.n_modes());
                let mut m = full.truncated(n)?;
                m.set_initial(&initial)?;
                m
            }
            other => return Err(Error::invalid("preset", format!("unknown preset '{other}'"))),
        };
        if let Some(g) = self.growth()? {
            model.growth = Some(g);
        }
        Ok(model)
    }

    pub fn model(&self) -> Result<SpectralModel> {
        self.model_with(None)
    }

    /// Growth exponents given explicitly in the file, if any.
    pub fn growth(&self) -> Result<Option<GrowthSpec>> {
        match (self.growth_m1, self.growth_d) {
            (Some(m1), Some(d)) => Ok(Some(GrowthSpec::new(m1, self.growth_m2, d)?)),
            (None, None) if self.growth_m2.is_none() => Ok(None),
            _ => Err(Error::invalid(
                "growth_m1",
                "growth_m1 and growth_d must be given together",
            )),
        }
    }

    pub fn mc_config(&self) -> Result<McConfig> {
        let n_list = self.n_list.clone().unwrap_or_else(|| vec![self.default_modes()]);
        let n_max = n_list.iter().copied().max().unwrap_or(1).max(self.n_modes.unwrap_or(0));
        let estimators = match &self.estimators {
            None => vec![EstimatorKind::Pathwise, EstimatorKind::Theoretical],
            Some(list) => list.iter().map(|s| EstimatorKind::parse(s)).collect::<Result<_>>()?,
        };
        Ok(McConfig {
            model: self.model_with(Some(n_max))?,
            n_list,
            runs: self.runs.unwrap_or(DEFAULT_RUNS),
            n_steps: self.n_steps(),
            seed: self.seed(),
            estimators,
            sim: self.sim_options()?,
            burn_in: self.burn_in.unwrap_or(DEFAULT_BURN_IN),
        })
    }
}
