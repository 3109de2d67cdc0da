//! Run configuration: a TOML file with four flat sections
//! `[truth]`, `[prior]`, `[chain]`, `[study]`. Every key has a default;
//! the README carries the reference table.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eb::KnConstants;
use crate::error::{Error, Result};
use crate::inference::{ChainConfig, LikelihoodMode, ProposalScales};
use crate::model::{HyperParams, PriorConfig};
use crate::simulate::TruthSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthSection {
    /// Built-in truth family: t1, t2 or t3.
    pub family: String,
    /// Covariate/response dimensions; 0 means "use the family's".
    pub d_x: usize,
    pub d_y: usize,
    /// Sample size for `simulate`.
    pub n: usize,
}

impl Default for TruthSection {
    fn default() -> Self {
        TruthSection {
            family: "t1".into(),
            d_x: 0,
            d_y: 0,
            n: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub alpha_shape: f64,
    pub c0: f64,
    /// Stick truncation level; 0 selects the smallest N with expected
    /// leftover mass below 1e-4.
    pub truncation: usize,
    pub kn_c_l: f64,
    pub kn_b_hi_pow: f64,
    pub kn_t2_hi_pow: f64,
    pub kn_lo_pow: f64,
    /// Fixed gamma override; empty lambda means "estimate from data".
    pub beta_scale: f64,
    pub lambda: Vec<f64>,
    pub tau2: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        PriorSection {
            alpha_shape: 3.0,
            c0: 1.0,
            truncation: 0,
            kn_c_l: 10.0,
            kn_b_hi_pow: 1.0,
            kn_t2_hi_pow: 2.0,
            kn_lo_pow: 1.0,
            beta_scale: 0.0,
            lambda: Vec::new(),
            tau2: 0.0,
        }
    }
}

impl PriorSection {
    pub fn kn_constants(&self) -> KnConstants {
        KnConstants {
            c_l: self.kn_c_l,
            b_hi_pow: self.kn_b_hi_pow,
            t2_hi_pow: self.kn_t2_hi_pow,
            lo_pow: self.kn_lo_pow,
        }
    }

    pub fn truncation_for(&self) -> usize {
        if self.truncation == 0 {
            PriorConfig::default_truncation(self.c0)
        } else {
            self.truncation
        }
    }

    /// Fixed gamma when the user pinned all three components.
    pub fn fixed_gamma(&self) -> Option<Result<HyperParams>> {
        if self.lambda.is_empty() {
            None
        } else {
            Some(HyperParams::new(self.beta_scale, self.lambda.clone(), self.tau2))
        }
    }

    pub fn build_prior(&self, d_x: usize, d_y: usize, gamma: HyperParams) -> Result<PriorConfig> {
        PriorConfig::new(self.alpha_shape, self.c0, d_x, d_y, self.truncation_for(), gamma)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub mode: String,
    pub log_sigma_step: f64,
    pub mu_x_step: f64,
    pub stick_logit_step: f64,
    pub adapt_burnin: bool,
    pub seed: u64,
}

impl Default for ChainSection {
    fn default() -> Self {
        ChainSection {
            iterations: 5_000,
            burn_in: 1_500,
            thin: 10,
            mode: "conditional_likelihood".into(),
            log_sigma_step: 0.3,
            mu_x_step: 0.15,
            stick_logit_step: 0.8,
            adapt_burnin: true,
            seed: 0,
        }
    }
}

impl ChainSection {
    pub fn chain_config(&self) -> Result<ChainConfig> {
        let cfg = ChainConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            mode: LikelihoodMode::parse(&self.mode)?,
            proposal_scales: ProposalScales {
                log_sigma_step: self.log_sigma_step,
                mu_x_step: self.mu_x_step,
                stick_logit_step: self.stick_logit_step,
            },
            adapt_burnin: self.adapt_burnin,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub workers: usize,
    /// Monte Carlo design nodes for the q-integration.
    pub x_eval_nodes: usize,
    pub y_grid_points: usize,
    pub tolerance: f64,
    /// Smoothness level assumed when reporting the theoretical exponent.
    pub beta_assumed: f64,
    /// Per-fit wall clock budget; 0 disables the guard.
    pub timeout_secs: u64,
    /// Second arm of the dimension-reduction study.
    pub embedded_truth: String,
    /// x-grid size for the density table written by `fit`.
    pub fit_x_grid: usize,
    pub seed: u64,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            n_grid: vec![200, 500, 1000, 2000],
            replicates: 5,
            workers: 2,
            x_eval_nodes: 100,
            y_grid_points: 241,
            tolerance: 1e-3,
            beta_assumed: 2.0,
            timeout_secs: 900,
            embedded_truth: "t3".into(),
            fit_x_grid: 21,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub truth: TruthSection,
    pub prior: PriorSection,
    pub chain: ChainSection,
    pub study: StudySection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("bad config: {e}")))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Canonical TOML of the fully resolved configuration.
    pub fn resolved_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the resolved configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.resolved_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Apply a CLI seed override to both the chain and study sections.
    pub fn override_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.chain.seed = s;
            self.study.seed = s;
        }
    }

    pub fn truth_spec(&self) -> Result<TruthSpec> {
        let truth = TruthSpec::by_name(&self.truth.family)?;
        if self.truth.d_x != 0 && self.truth.d_x != truth.d_x {
            return Err(Error::config(format!(
                "truth {} has d_x = {}, config declares {}",
                truth.name(),
                truth.d_x,
                self.truth.d_x
            )));
        }
        if self.truth.d_y != 0 && self.truth.d_y != truth.d_y {
            return Err(Error::config(format!(
                "truth {} has d_y = {}, config declares {}",
                truth.name(),
                truth.d_y,
                self.truth.d_y
            )));
        }
        Ok(truth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::default();
        assert!(cfg.chain.chain_config().is_ok());
        assert_eq!(cfg.prior.truncation_for(), 15);
        assert!(cfg.truth_spec().is_ok());
    }

    #[test]
    fn parse_partial_toml() {
        let cfg = RunConfig::from_toml(
            "[truth]\nfamily = \"t3\"\n\n[chain]\niterations = 6000\nburn_in = 1000\n",
        )
        .unwrap();
        assert_eq!(cfg.truth.family, "t3");
        assert_eq!(cfg.chain.iterations, 6000);
        assert_eq!(cfg.chain.thin, 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[chain]\nitertions = 10\n").is_err());
        assert!(RunConfig::from_toml("[nonsense]\nx = 1\n").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        let mut c = RunConfig::default();
        c.chain.seed = 99;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let mut cfg = RunConfig::default();
        cfg.truth.family = "t1".into();
        cfg.truth.d_x = 3;
        assert!(cfg.truth_spec().is_err());
    }
}
