//! Sampler correctness: prior reproduction with no data, determinism,
//! checkpoint/resume, recovery on well-specified data, and diagnostics.

use condense_core::data::Dataset;
use condense_core::dist::{beta_1_c0_cdf, inverse_gamma_cdf, ks_critical, ks_statistic, normal_cdf};
use condense_core::inference::{
    resume_chain, run_chain, ChainCheckpoint, ChainConfig, LikelihoodMode,
};
use condense_core::model::{sample_data_from_state, stick_break, HyperParams, MixtureState, PriorConfig};
use condense_core::rng::RngStream;
use condense_core::util::mean;

fn zero_data_prior() -> PriorConfig {
    PriorConfig::new(
        3.0,
        1.0,
        1,
        1,
        8,
        HyperParams::new(1.0, vec![0.5], 1.5).unwrap(),
    )
    .unwrap()
}

/// With no data the posterior is the prior; chain marginals of sigma, V1
/// and mu_1^y must match their priors by KS at level 0.01.
fn prior_reproduction(mode: LikelihoodMode, seed: u64) {
    let prior = zero_data_prior();
    let data = Dataset::new(1, 1);
    let config = ChainConfig::prior_reproduction(mode, seed);
    let draws = run_chain(&data, &prior, &config).unwrap();
    assert_eq!(draws.draws.len(), 2000);

    let mut sigmas: Vec<f64> = draws.draws.iter().map(|s| s.sigma).collect();
    sigmas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let d_sigma = ks_statistic(&sigmas, |x| inverse_gamma_cdf(x, 3.0, 1.0)).unwrap();
    let crit = ks_critical(sigmas.len(), 0.01);
    assert!(d_sigma < crit, "{mode:?} sigma KS {d_sigma} >= {crit}");

    let mut v1: Vec<f64> = draws.draws.iter().map(|s| s.sticks[0]).collect();
    v1.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let d_v1 = ks_statistic(&v1, |v| beta_1_c0_cdf(v, 1.0)).unwrap();
    assert!(d_v1 < crit, "{mode:?} V1 KS {d_v1} >= {crit}");

    let mut muy: Vec<f64> = draws.draws.iter().map(|s| s.mu_y[0]).collect();
    muy.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let d_muy = ks_statistic(&muy, |x| normal_cdf(x, 0.5, 1.5f64.sqrt())).unwrap();
    assert!(d_muy < crit, "{mode:?} mu_y KS {d_muy} >= {crit}");

    assert!(draws.log_posterior.iter().all(|lp| lp.is_finite()));
    for s in &draws.draws {
        s.validate().unwrap();
    }
}

#[test]
fn zero_data_chain_reproduces_prior_conditional() {
    prior_reproduction(LikelihoodMode::ConditionalLikelihood, 101);
}

#[test]
fn zero_data_chain_reproduces_prior_joint() {
    prior_reproduction(LikelihoodMode::JointFit, 102);
}

fn two_atom_truth() -> MixtureState {
    MixtureState {
        sticks: vec![0.5, 1.0],
        weights: stick_break(&[0.5, 1.0]).unwrap(),
        mu_x: vec![0.25, 0.75],
        mu_y: vec![-2.0, 2.0],
        sigma: 0.5,
        d_x: 1,
        d_y: 1,
    }
}

fn fitted_prior(data: &Dataset) -> PriorConfig {
    let gamma = condense_core::eb::estimate_hyperparams(data, 3.0).unwrap();
    let kn = condense_core::eb::default_kn_box(data.len(), 1).unwrap();
    let clamped = condense_core::eb::clamp_to_kn(&gamma, &kn).unwrap().clamped_gamma;
    PriorConfig::new(3.0, 1.0, 1, 1, 15, clamped).unwrap()
}

/// Data generated by a two-atom version of the model: the posterior mean
/// of sigma should land within 50% of the generating bandwidth.
#[test]
fn well_specified_sigma_recovery() {
    let truth = two_atom_truth();
    for seed in [1u64, 2, 3, 4, 5] {
        let mut rng = RngStream::new(900 + seed, 0);
        let data = sample_data_from_state(&truth, 500, &mut rng).unwrap();
        let prior = fitted_prior(&data);
        let config = ChainConfig::study(LikelihoodMode::ConditionalLikelihood, seed);
        let draws = run_chain(&data, &prior, &config).unwrap();
        let post_mean = mean(&draws.sigma_trace());
        assert!(
            (0.25..=0.75).contains(&post_mean),
            "seed {seed}: posterior mean sigma {post_mean}"
        );
    }
}

#[test]
fn chains_are_deterministic_given_seed() {
    let truth = two_atom_truth();
    let mut rng = RngStream::new(77, 0);
    let data = sample_data_from_state(&truth, 120, &mut rng).unwrap();
    let prior = fitted_prior(&data);
    let mut config = ChainConfig::study(LikelihoodMode::ConditionalLikelihood, 4242);
    config.iterations = 1600;
    config.burn_in = 400;
    config.thin = 10;
    let a = run_chain(&data, &prior, &config).unwrap();
    let b = run_chain(&data, &prior, &config).unwrap();
    assert_eq!(a.draws, b.draws);
    assert_eq!(a.final_word_pos, b.final_word_pos);
    assert_eq!(a.log_posterior, b.log_posterior);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let truth = two_atom_truth();
    let mut rng = RngStream::new(78, 0);
    let data = sample_data_from_state(&truth, 100, &mut rng).unwrap();
    let prior = fitted_prior(&data);

    let mut full = ChainConfig::study(LikelihoodMode::ConditionalLikelihood, 555);
    full.iterations = 2400;
    full.burn_in = 400;
    full.thin = 10;
    let complete = run_chain(&data, &prior, &full).unwrap();

    // Interrupt two thirds of the way through.
    let mut partial = full;
    partial.iterations = 1600;
    let first = run_chain(&data, &prior, &partial).unwrap();
    let checkpoint = ChainCheckpoint {
        completed: first.completed_iterations,
        word_pos: first.final_word_pos,
        scales: first.final_scales,
        state: first.draws.last().unwrap().clone(),
        draws: first.draws.clone(),
        iterations: first.iterations.clone(),
        log_posterior: first.log_posterior.clone(),
    };
    let resumed = resume_chain(&data, &prior, &full, &checkpoint).unwrap();
    assert_eq!(resumed.draws, complete.draws);
    assert_eq!(resumed.iterations, complete.iterations);
    assert_eq!(resumed.final_word_pos, complete.final_word_pos);
}

#[test]
fn resume_requires_post_burnin_checkpoint() {
    let truth = two_atom_truth();
    let mut rng = RngStream::new(79, 0);
    let data = sample_data_from_state(&truth, 60, &mut rng).unwrap();
    let prior = fitted_prior(&data);
    let config = ChainConfig::study(LikelihoodMode::ConditionalLikelihood, 1);
    let checkpoint = ChainCheckpoint {
        completed: 100, // below burn_in
        word_pos: 0,
        scales: Default::default(),
        state: two_atom_truth(),
        draws: vec![],
        iterations: vec![],
        log_posterior: vec![],
    };
    assert!(resume_chain(&data, &prior, &config, &checkpoint).is_err());
}

#[test]
fn acceptance_rates_strictly_inside_unit_interval() {
    let truth = two_atom_truth();
    let mut rng = RngStream::new(80, 0);
    let data = sample_data_from_state(&truth, 200, &mut rng).unwrap();
    let prior = fitted_prior(&data);
    let config = ChainConfig::study(LikelihoodMode::ConditionalLikelihood, 31);
    let draws = run_chain(&data, &prior, &config).unwrap();
    let rates = draws.acceptance_rates;
    for (name, r) in [("sigma", rates.sigma), ("mu_x", rates.mu_x), ("sticks", rates.sticks)] {
        assert!(r > 0.0 && r < 1.0, "{name} acceptance {r}");
    }
    // ESS should be well defined and positive.
    assert!(draws.ess_sigma > 10.0, "ess {}", draws.ess_sigma);
}

/// The reference preset on a T1 dataset of 500 records keeps the sigma
/// trace mixing well enough for ESS >= 100.
#[test]
fn reference_preset_sigma_ess() {
    let truth = condense_core::simulate::TruthSpec::t1();
    let mut rng = RngStream::new(81, 0);
    let data = condense_core::simulate::generate_dataset(&truth, 500, &mut rng).unwrap();
    let prior = fitted_prior(&data);
    let config = ChainConfig::reference(LikelihoodMode::ConditionalLikelihood, 7);
    let draws = run_chain(&data, &prior, &config).unwrap();
    assert_eq!(draws.draws.len(), 1600);
    assert!(draws.ess_sigma >= 100.0, "ess_sigma {}", draws.ess_sigma);
    assert!(draws.log_posterior.iter().all(|lp| lp.is_finite()));
}
