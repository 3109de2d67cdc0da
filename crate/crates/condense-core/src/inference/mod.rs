//! Posterior sampling for the plug-in posterior and the posterior-mean
//! conditional density estimate.
//!
//! Two likelihood modes share one sweep skeleton
//! (allocations -> mu_y -> mu_x -> sticks -> sigma):
//!
//! - `ConditionalLikelihood` targets the conditional model exactly; the
//!   design density is unmodeled, so stick, atom and bandwidth updates are
//!   Metropolis steps whose ratios carry the weight-normalizer product
//!   `prod_i g(x_i)`.
//! - `JointFit` targets the d-dimensional joint mixture, which makes
//!   sticks and covariate atoms conjugate; the conditional density is
//!   recovered by normalization.

mod sampler;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::YGrid;
use crate::model::{predictor_weights, sample_prior_state, HyperParams, MixtureState, PriorConfig};
use crate::rng::RngStream;
use crate::util::effective_sample_size;

pub use sampler::{mu_y_full_conditional, sample_allocations, stick_full_conditional, update_mu_y};
use sampler::GibbsSampler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodMode {
    ConditionalLikelihood,
    JointFit,
}

impl LikelihoodMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "conditional" | "conditional_likelihood" => Ok(LikelihoodMode::ConditionalLikelihood),
            "joint" | "joint_fit" => Ok(LikelihoodMode::JointFit),
            other => Err(Error::config(format!(
                "unknown likelihood mode '{other}' (expected conditional_likelihood or joint_fit)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            LikelihoodMode::ConditionalLikelihood => "conditional_likelihood",
            LikelihoodMode::JointFit => "joint_fit",
        }
    }
}

/// Random-walk step sizes for the Metropolis blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalScales {
    pub log_sigma_step: f64,
    pub mu_x_step: f64,
    pub stick_logit_step: f64,
}

impl Default for ProposalScales {
    fn default() -> Self {
        ProposalScales {
            log_sigma_step: 0.3,
            mu_x_step: 0.15,
            stick_logit_step: 0.8,
        }
    }
}

impl ProposalScales {
    pub fn validate(&self) -> Result<()> {
        if self.log_sigma_step <= 0.0 || self.mu_x_step <= 0.0 || self.stick_logit_step <= 0.0 {
            return Err(Error::domain("proposal scales must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub mode: LikelihoodMode,
    pub proposal_scales: ProposalScales,
    pub adapt_burnin: bool,
    pub seed: u64,
}

impl ChainConfig {
    /// Reference preset: 20k sweeps, 4k burn-in, thin 10.
    pub fn reference(mode: LikelihoodMode, seed: u64) -> Self {
        ChainConfig {
            iterations: 20_000,
            burn_in: 4_000,
            thin: 10,
            mode,
            proposal_scales: ProposalScales::default(),
            adapt_burnin: true,
            seed,
        }
    }

    /// Lighter preset used for study rows.
    pub fn study(mode: LikelihoodMode, seed: u64) -> Self {
        ChainConfig {
            iterations: 5_000,
            burn_in: 1_500,
            thin: 10,
            mode,
            proposal_scales: ProposalScales::default(),
            adapt_burnin: true,
            seed,
        }
    }

    /// Long thin chain for prior-reproduction checks with no data.
    pub fn prior_reproduction(mode: LikelihoodMode, seed: u64) -> Self {
        ChainConfig {
            iterations: 52_000,
            burn_in: 2_000,
            thin: 25,
            mode,
            proposal_scales: ProposalScales::default(),
            adapt_burnin: true,
            seed,
        }
    }

    pub fn retained(&self) -> u64 {
        (self.iterations - self.burn_in) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        self.proposal_scales.validate()?;
        if self.thin == 0 {
            return Err(Error::config("thin must be positive"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::config(format!(
                "burn_in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.retained() < 100 {
            return Err(Error::config(format!(
                "configuration retains only {} draws; at least 100 are required",
                self.retained()
            )));
        }
        Ok(())
    }
}

/// Post-adaptation acceptance rates per Metropolis block. Conjugate
/// blocks (joint mode) report 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub sigma: f64,
    pub mu_x: f64,
    pub sticks: f64,
    pub coord_scale: f64,
}

/// Thinned chain output with sampler diagnostics.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub draws: Vec<MixtureState>,
    /// Sweep index at which each draw was retained.
    pub iterations: Vec<u64>,
    pub log_posterior: Vec<f64>,
    pub acceptance_rates: BlockAcceptance,
    pub ess_sigma: f64,
    pub mode: LikelihoodMode,
    pub gamma_used: HyperParams,
    /// Frozen proposal scales after adaptation (for checkpoint/resume).
    pub final_scales: ProposalScales,
    /// RNG stream position after the last sweep (for checkpoint/resume).
    pub final_word_pos: u128,
    pub completed_iterations: u64,
}

impl PosteriorDraws {
    pub fn sigma_trace(&self) -> Vec<f64> {
        self.draws.iter().map(|s| s.sigma).collect()
    }

    pub fn max_sigma(&self) -> f64 {
        self.draws.iter().map(|s| s.sigma).fold(0.0, f64::max)
    }
}

/// Checkpoint from which a chain can be continued bit-identically.
/// Only checkpoints taken at or after the end of burn-in can be resumed;
/// adaptation state is not captured.
#[derive(Debug, Clone)]
pub struct ChainCheckpoint {
    pub completed: u64,
    pub word_pos: u128,
    pub scales: ProposalScales,
    pub state: MixtureState,
    pub draws: Vec<MixtureState>,
    pub iterations: Vec<u64>,
    pub log_posterior: Vec<f64>,
}

/// One full Gibbs sweep over a copy of `state`; blocks and their full
/// conditionals are described on [`GibbsSampler`] in the sampler module.
pub fn gibbs_sweep(
    state: &MixtureState,
    data: &Dataset,
    prior: &PriorConfig,
    config: &ChainConfig,
    rng: &mut RngStream,
) -> Result<MixtureState> {
    let mut sampler = GibbsSampler::new(
        data,
        prior,
        config.mode,
        config.proposal_scales,
        state.clone(),
    )?;
    sampler.sweep(rng)?;
    Ok(sampler.into_state())
}

struct ChainRun<'a> {
    data: &'a Dataset,
    prior: &'a PriorConfig,
    config: &'a ChainConfig,
    deadline: Option<Instant>,
}

impl<'a> ChainRun<'a> {
    fn execute(&self, resume: Option<&ChainCheckpoint>) -> Result<PosteriorDraws> {
        let config = self.config;
        config.validate()?;
        self.prior.validate()?;
        if self.data.len() > 0
            && (self.data.d_x() != self.prior.d_x || self.data.d_y() != self.prior.d_y)
        {
            return Err(Error::config(format!(
                "data dims ({}, {}) do not match prior dims ({}, {})",
                self.data.d_x(),
                self.data.d_y(),
                self.prior.d_x,
                self.prior.d_y
            )));
        }

        let mut rng = RngStream::new(config.seed, 0);
        let (start_iter, init_state, scales) = match resume {
            None => {
                let mut state = sample_prior_state(self.prior, &mut rng)?;
                anchor_state_at_data(&mut state, self.data, self.prior, &mut rng);
                (0u64, state, config.proposal_scales)
            }
            Some(cp) => {
                if cp.completed < config.burn_in {
                    return Err(Error::config(
                        "cannot resume a chain interrupted during burn-in; rerun from scratch",
                    ));
                }
                if cp.completed >= config.iterations {
                    return Err(Error::config("checkpoint already covers the requested run"));
                }
                rng.set_word_pos(cp.word_pos);
                (cp.completed, cp.state.clone(), cp.scales)
            }
        };

        let mut sampler = GibbsSampler::new(self.data, self.prior, config.mode, scales, init_state)?;
        let mut draws = resume.map(|c| c.draws.clone()).unwrap_or_default();
        let mut kept_iters = resume.map(|c| c.iterations.clone()).unwrap_or_default();
        let mut log_post = resume.map(|c| c.log_posterior.clone()).unwrap_or_default();

        const ADAPT_WINDOW: u64 = 64;
        for it in start_iter + 1..=config.iterations {
            sampler.sweep(&mut rng)?;

            if config.adapt_burnin && it <= config.burn_in {
                if it % ADAPT_WINDOW == 0 {
                    sampler.adapt_scales();
                }
                if it == config.burn_in {
                    sampler.reset_counters();
                }
            } else if !config.adapt_burnin && it == config.burn_in {
                sampler.reset_counters();
            }

            if it > config.burn_in && (it - config.burn_in) % config.thin == 0 {
                let state = sampler.state().clone();
                state.validate()?;
                log_post.push(sampler.log_posterior()?);
                draws.push(state);
                kept_iters.push(it);
            }

            if it % 128 == 0 {
                if let Some(deadline) = self.deadline {
                    if Instant::now() > deadline {
                        return Err(Error::Timeout(format!(
                            "chain exceeded its budget at sweep {it} of {}",
                            config.iterations
                        )));
                    }
                }
            }
        }

        if draws.is_empty() {
            return Err(Error::config("chain retained no draws"));
        }
        let sigma_trace: Vec<f64> = draws.iter().map(|s| s.sigma).collect();
        Ok(PosteriorDraws {
            ess_sigma: effective_sample_size(&sigma_trace),
            iterations: kept_iters,
            log_posterior: log_post,
            acceptance_rates: sampler.acceptance_rates(),
            mode: config.mode,
            gamma_used: self.prior.gamma.clone(),
            final_scales: sampler.scales(),
            final_word_pos: rng.word_pos(),
            completed_iterations: config.iterations,
            draws,
        })
    }
}

/// Move a fresh prior draw next to the data: atoms are placed on randomly
/// chosen records and the bandwidth starts at its prior mean. With no data
/// the prior draw is kept, so zero-data chains still target the prior
/// exactly.
fn anchor_state_at_data(
    state: &mut MixtureState,
    data: &Dataset,
    prior: &PriorConfig,
    rng: &mut RngStream,
) {
    let n = data.len();
    if n == 0 {
        return;
    }
    for j in 0..state.n_components() {
        let i = (rng.uniform() * n as f64) as usize % n;
        let x = data.x_row(i);
        let y = data.y_row(i);
        for k in 0..state.d_x {
            state.mu_x[j * state.d_x + k] = x[k].clamp(0.0, 1.0);
        }
        for k in 0..state.d_y {
            state.mu_y[j * state.d_y + k] = y[k];
        }
    }
    // Start wide: with near-flat covariate kernels the early sweeps pull
    // atoms toward shared coordinates, and the bandwidth then anneals down
    // with covariate directions de-aligning only where the likelihood
    // demands it. Narrow starts freeze allocations into local clusters.
    state.sigma = prior.prior_mean_sigma().max(1.0);
}

/// Run a chain from a fresh prior draw: burn-in discarded, thinned draws
/// retained, proposal scales adapted toward 20-40% acceptance during
/// burn-in and then frozen. Fully deterministic given `config.seed`.
pub fn run_chain(data: &Dataset, prior: &PriorConfig, config: &ChainConfig) -> Result<PosteriorDraws> {
    ChainRun {
        data,
        prior,
        config,
        deadline: None,
    }
    .execute(None)
}

/// As [`run_chain`] but aborts with a timeout error past `deadline`.
pub fn run_chain_with_deadline(
    data: &Dataset,
    prior: &PriorConfig,
    config: &ChainConfig,
    deadline: Option<Instant>,
) -> Result<PosteriorDraws> {
    ChainRun {
        data,
        prior,
        config,
        deadline,
    }
    .execute(None)
}

/// Continue an interrupted chain to `config.iterations`. The checkpoint's
/// completed sweep count, RNG position, frozen scales and last state must
/// come from a run with the same data, prior and config.
pub fn resume_chain(
    data: &Dataset,
    prior: &PriorConfig,
    config: &ChainConfig,
    checkpoint: &ChainCheckpoint,
) -> Result<PosteriorDraws> {
    ChainRun {
        data,
        prior,
        config,
        deadline: None,
    }
    .execute(Some(checkpoint))
}

/// Table of posterior-mean conditional density values over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub x_nodes: Vec<Vec<f64>>,
    pub y_grid: YGrid,
    /// Row-major: `values[ix * y_grid.len + iy]`.
    pub values: Vec<f64>,
}

impl DensityTable {
    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[ix * self.y_grid.len + iy]
    }

    /// Riemann mass of one x-slice.
    pub fn slice_mass(&self, ix: usize) -> f64 {
        let row = &self.values[ix * self.y_grid.len..(ix + 1) * self.y_grid.len];
        row.iter().sum::<f64>() * self.y_grid.step
    }

    /// Evaluate the table as a conditional density function by nearest
    /// x-node and linear interpolation in y (for metric adapters).
    pub fn interpolate(&self, ix: usize, y: f64) -> f64 {
        let t = (y - self.y_grid.start) / self.y_grid.step;
        if t <= 0.0 {
            return self.value(ix, 0);
        }
        let k = t.floor() as usize;
        if k + 1 >= self.y_grid.len {
            return self.value(ix, self.y_grid.len - 1);
        }
        let frac = t - k as f64;
        self.value(ix, k) * (1.0 - frac) + self.value(ix, k + 1) * frac
    }
}

/// Average the conditional density of each draw over grid nodes:
/// `f_hat(y|x) = mean_d sum_j w_j^{(d)}(x) phi_{sigma_d}(y - mu_j^{y,(d)})`.
pub fn posterior_mean_density(
    draws: &[MixtureState],
    x_nodes: &[Vec<f64>],
    y_grid: &YGrid,
) -> Result<DensityTable> {
    if draws.is_empty() {
        return Err(Error::domain("posterior_mean_density needs at least one draw"));
    }
    if x_nodes.is_empty() {
        return Err(Error::domain("posterior_mean_density needs at least one x node"));
    }
    for d in draws {
        if d.d_y != 1 {
            return Err(Error::domain("density tables are implemented for d_y = 1"));
        }
    }
    let ylen = y_grid.len;
    let ys: Vec<f64> = y_grid.points().collect();
    let mut values = vec![0.0f64; x_nodes.len() * ylen];
    let scale = 1.0 / draws.len() as f64;
    let mut kernel = Vec::new();
    for state in draws {
        let n = state.n_components();
        // y-kernels depend on (component, y) only.
        kernel.clear();
        kernel.resize(n * ylen, 0.0);
        for j in 0..n {
            let mu = state.mu_y_row(j)[0];
            for (iy, &y) in ys.iter().enumerate() {
                kernel[j * ylen + iy] =
                    crate::dist::log_normal_kernel((y - mu) * (y - mu), state.sigma, 1).exp();
            }
        }
        for (ix, x) in x_nodes.iter().enumerate() {
            let pw = predictor_weights(state, x)?;
            let row = &mut values[ix * ylen..(ix + 1) * ylen];
            for (j, &w) in pw.weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let krow = &kernel[j * ylen..(j + 1) * ylen];
                for (v, &k) in row.iter_mut().zip(krow) {
                    *v += scale * w * k;
                }
            }
        }
    }
    Ok(DensityTable {
        x_nodes: x_nodes.to_vec(),
        y_grid: y_grid.clone(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::stick_break;

    fn toy_state(mu_y: f64, sigma: f64) -> MixtureState {
        MixtureState {
            sticks: vec![0.5, 1.0],
            weights: stick_break(&[0.5, 1.0]).unwrap(),
            mu_x: vec![0.2, 0.8],
            mu_y: vec![mu_y, -mu_y],
            sigma,
            d_x: 1,
            d_y: 1,
        }
    }

    #[test]
    fn config_validation_catches_tiny_runs() {
        let mut cfg = ChainConfig::study(LikelihoodMode::ConditionalLikelihood, 1);
        cfg.iterations = 150;
        cfg.burn_in = 100;
        cfg.thin = 10;
        assert!(cfg.validate().is_err());
        let ok = ChainConfig::study(LikelihoodMode::ConditionalLikelihood, 1);
        assert!(ok.validate().is_ok());
        assert!(ok.retained() >= 100);
    }

    #[test]
    fn density_table_single_draw_matches_state() {
        let state = toy_state(0.7, 0.4);
        let y_grid = YGrid::spanning(-3.0, 3.0, 61).unwrap();
        let xs = vec![vec![0.1], vec![0.6]];
        let table = posterior_mean_density(&[state.clone()], &xs, &y_grid).unwrap();
        for (ix, x) in xs.iter().enumerate() {
            for (iy, y) in y_grid.points().enumerate() {
                let direct = crate::model::conditional_density(&state, x, &[y]).unwrap();
                let got = table.value(ix, iy);
                assert!((got - direct).abs() <= 1e-12 * direct.max(1e-12), "{got} vs {direct}");
            }
        }
    }

    #[test]
    fn density_table_is_linear_in_draws() {
        let a = toy_state(0.7, 0.4);
        let b = toy_state(-0.2, 0.3);
        let y_grid = YGrid::spanning(-3.0, 3.0, 31).unwrap();
        let xs = vec![vec![0.4]];
        let ta = posterior_mean_density(&[a.clone()], &xs, &y_grid).unwrap();
        let tb = posterior_mean_density(&[b.clone()], &xs, &y_grid).unwrap();
        let tab = posterior_mean_density(&[a.clone(), b.clone()], &xs, &y_grid).unwrap();
        for iy in 0..y_grid.len {
            let expect = 0.5 * (ta.value(0, iy) + tb.value(0, iy));
            assert!((tab.value(0, iy) - expect).abs() < 1e-15);
        }
        // Two identical draws average to the single-draw table exactly.
        let taa = posterior_mean_density(&[a.clone(), a], &xs, &y_grid).unwrap();
        for iy in 0..y_grid.len {
            assert!((taa.value(0, iy) - ta.value(0, iy)).abs() < 1e-15);
        }
    }

    #[test]
    fn density_table_rejects_empty_inputs() {
        let y_grid = YGrid::spanning(-1.0, 1.0, 11).unwrap();
        assert!(posterior_mean_density(&[], &[vec![0.0]], &y_grid).is_err());
        assert!(posterior_mean_density(&[toy_state(0.0, 1.0)], &[], &y_grid).is_err());
    }
}
