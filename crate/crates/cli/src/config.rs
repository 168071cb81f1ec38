//! Run configuration files: one `key = value` per line, `#` comments.
//!
//! ```text
//! # sampler
//! epsilon = 0.001
//! leapfrogs = 100
//! # priors of c_g
//! alpha_cg = 5
//! beta_cg = 0.5
//! ```

use std::path::Path;

use softabs::evidence::EvidenceConfig;
use softabs::model::{HyperPriors, Preset, PresetOptions};
use softabs::sampler::ChainConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub chain: ChainConfig,
    pub preset: PresetOptions,
    /// `[alpha_cg, beta_cg, alpha_sg, beta_sg, alpha_cl, beta_cl]`; unset
    /// entries fall back to the model family's defaults.
    pub prior_overrides: [Option<f64>; 6],
    pub evidence: EvidenceConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            chain: ChainConfig::default(),
            preset: PresetOptions::default(),
            prior_overrides: [None; 6],
            evidence: EvidenceConfig::default(),
        }
    }
}

const PRIOR_KEYS: [&str; 6] = ["alpha_cg", "beta_cg", "alpha_sg", "beta_sg", "alpha_cl", "beta_cl"];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))?;
        let mut cfg = Self::default();
        for (key, value) in &table {
            let real = || -> Result<f64, CliError> {
                match value {
                    toml::Value::Float(v) => Ok(*v),
                    toml::Value::Integer(v) => Ok(*v as f64),
                    _ => Err(CliError::Usage(format!("config key '{key}' needs a number"))),
                }
            };
            let count = || -> Result<usize, CliError> {
                match value {
                    toml::Value::Integer(v) if *v >= 0 => Ok(*v as usize),
                    _ => Err(CliError::Usage(format!("config key '{key}' needs a non-negative integer"))),
                }
            };
            match key.as_str() {
                "epsilon" => cfg.chain.step_size = real()?,
                "leapfrogs" => cfg.chain.leapfrogs = count()?,
                "moves" => cfg.chain.moves = count()?,
                "burnin" => cfg.chain.burnin = count()?,
                "kappa" => cfg.chain.kappa = real()?,
                "zeta" => cfg.chain.zeta = real()?,
                "seed" => cfg.chain.seed = count()? as u64,
                "Sigma" => cfg.preset.intercept_variance = real()?,
                "delta" => cfg.preset.delta = real()?,
                "L" => cfg.preset.half_width = real()?,
                "M" => cfg.preset.features = count()?,
                "chains" => cfg.evidence.chains = count()?,
                "moves_per_rung" => cfg.evidence.moves_per_rung = count()?,
                "spread_moves" => cfg.evidence.spread_moves = count()?,
                "warmup_block" => cfg.evidence.warmup_block = count()?,
                "warmup_max" => cfg.evidence.warmup_max = count()?,
                k => match PRIOR_KEYS.iter().position(|p| *p == k) {
                    Some(i) => cfg.prior_overrides[i] = Some(real()?),
                    None => return Err(CliError::Usage(format!("unknown config key '{k}'"))),
                },
            }
        }
        Ok(cfg)
    }

    pub fn priors_for(&self, preset: Preset) -> HyperPriors {
        self.override_priors(preset.default_priors())
    }

    /// `base` with the configured prior constants written over it.
    pub fn override_priors(&self, mut p: HyperPriors) -> HyperPriors {
        let slots = [
            &mut p.amplitude.shape,
            &mut p.amplitude.scale,
            &mut p.bandwidth.shape,
            &mut p.bandwidth.scale,
            &mut p.linear_amplitude.shape,
            &mut p.linear_amplitude.scale,
        ];
        for (slot, v) in slots.into_iter().zip(self.prior_overrides) {
            if let Some(v) = v {
                *slot = v;
            }
        }
        p
    }

    pub fn preset_options(&self, priors: HyperPriors) -> PresetOptions {
        PresetOptions {
            priors: Some(priors),
            ..self.preset
        }
    }

    pub fn evidence_config(&self) -> EvidenceConfig {
        EvidenceConfig {
            chain: self.chain,
            ..self.evidence
        }
    }
}
