//! Mixture state space and closed-form evaluations: stick-breaking,
//! predictor-dependent weights, conditional and joint densities, prior
//! sampling, and the hyperparameter change-of-measure map.

use crate::data::Dataset;
use crate::dist::{self, log_normal_kernel, sq_dist};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::util::logsumexp;
use serde::{Deserialize, Serialize};

/// The EB-selectable hyperparameter vector `gamma = (beta, lambda, tau^2)`:
/// the IG scale for the bandwidth prior and the location/scale of the
/// response base measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub beta_scale: f64,
    pub lambda: Vec<f64>,
    pub tau2: f64,
}

impl HyperParams {
    pub fn new(beta_scale: f64, lambda: Vec<f64>, tau2: f64) -> Result<Self> {
        let hp = HyperParams {
            beta_scale,
            lambda,
            tau2,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_scale > 0.0) || !self.beta_scale.is_finite() {
            return Err(Error::domain(format!(
                "beta_scale must be positive, got {}",
                self.beta_scale
            )));
        }
        if !(self.tau2 > 0.0) || !self.tau2.is_finite() {
            return Err(Error::domain(format!("tau2 must be positive, got {}", self.tau2)));
        }
        if self.lambda.is_empty() || self.lambda.iter().any(|l| !l.is_finite()) {
            return Err(Error::domain("lambda must be a non-empty finite vector"));
        }
        Ok(())
    }

    pub fn d_y(&self) -> usize {
        self.lambda.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau2.sqrt()
    }
}

/// Fixed prior pieces plus the selectable `gamma`.
///
/// The covariate base measure is uniform on the unit cube and the response
/// base measure is a standard Gaussian shifted by `lambda` and scaled by
/// `tau`; both are fixed by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub alpha_shape: f64,
    pub c0: f64,
    pub d_x: usize,
    pub d_y: usize,
    pub truncation: usize,
    pub gamma: HyperParams,
}

impl PriorConfig {
    pub fn new(
        alpha_shape: f64,
        c0: f64,
        d_x: usize,
        d_y: usize,
        truncation: usize,
        gamma: HyperParams,
    ) -> Result<Self> {
        let prior = PriorConfig {
            alpha_shape,
            c0,
            d_x,
            d_y,
            truncation,
            gamma,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_shape > 1.0) {
            return Err(Error::domain(format!(
                "alpha_shape must exceed 1 so the prior mean bandwidth exists, got {}",
                self.alpha_shape
            )));
        }
        if !(self.c0 > 0.0) {
            return Err(Error::domain(format!("c0 must be positive, got {}", self.c0)));
        }
        if self.truncation < 2 {
            return Err(Error::domain(format!(
                "truncation must be at least 2, got {}",
                self.truncation
            )));
        }
        if self.d_x == 0 || self.d_y == 0 {
            return Err(Error::domain("d_x and d_y must be positive"));
        }
        if self.gamma.d_y() != self.d_y {
            return Err(Error::domain(format!(
                "lambda has {} components but d_y = {}",
                self.gamma.d_y(),
                self.d_y
            )));
        }
        self.gamma.validate()
    }

    /// Smallest truncation level whose expected leftover stick mass
    /// `(c0/(1+c0))^{N-1}` falls below 1e-4.
    pub fn default_truncation(c0: f64) -> usize {
        let ratio = c0 / (1.0 + c0);
        let mut n = 2usize;
        while ratio.powi(n as i32 - 1) >= 1e-4 && n < 512 {
            n += 1;
        }
        n
    }

    /// Prior mean of the bandwidth, `beta / (alpha - 1)`.
    pub fn prior_mean_sigma(&self) -> f64 {
        self.gamma.beta_scale / (self.alpha_shape - 1.0)
    }
}

/// Box `K_n` of admissible hyperparameter values; `beta` and `tau^2`
/// intervals in the positive half-line, one common interval for every
/// `lambda` component. Intervals are half-open `[lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnBox {
    pub b_lo: f64,
    pub b_hi: f64,
    pub l_lo: f64,
    pub l_hi: f64,
    pub t2_lo: f64,
    pub t2_hi: f64,
}

impl KnBox {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_lo > 0.0 && self.b_lo < self.b_hi) {
            return Err(Error::domain("KnBox: need 0 < b_lo < b_hi"));
        }
        if !(self.l_lo < self.l_hi) {
            return Err(Error::domain("KnBox: need l_lo < l_hi"));
        }
        if !(self.t2_lo > 0.0 && self.t2_lo < self.t2_hi) {
            return Err(Error::domain("KnBox: need 0 < t2_lo < t2_hi"));
        }
        Ok(())
    }
}

/// One draw of `theta = (F, sigma)`: truncated sticks, their weights,
/// atom locations in covariate and response space, and the bandwidth.
///
/// Atom coordinates are stored flat and row-major (`n_components x d`).
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureState {
    pub sticks: Vec<f64>,
    pub weights: Vec<f64>,
    pub mu_x: Vec<f64>,
    pub mu_y: Vec<f64>,
    pub sigma: f64,
    pub d_x: usize,
    pub d_y: usize,
}

impl MixtureState {
    pub fn n_components(&self) -> usize {
        self.sticks.len()
    }

    pub fn mu_x_row(&self, j: usize) -> &[f64] {
        &self.mu_x[j * self.d_x..(j + 1) * self.d_x]
    }

    pub fn mu_y_row(&self, j: usize) -> &[f64] {
        &self.mu_y[j * self.d_y..(j + 1) * self.d_y]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_components();
        if n == 0 {
            return Err(Error::domain("state has no components"));
        }
        if self.weights.len() != n {
            return Err(Error::domain("weights length differs from sticks length"));
        }
        if self.mu_x.len() != n * self.d_x || self.mu_y.len() != n * self.d_y {
            return Err(Error::domain("atom storage does not match component count"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.mu_x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::domain("mu_x atoms must lie in the unit cube"));
        }
        if self.mu_y.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("mu_y atoms must be finite"));
        }
        let recomputed = stick_break(&self.sticks)?;
        for (w, r) in self.weights.iter().zip(&recomputed) {
            if (w - r).abs() > 1e-12 {
                return Err(Error::domain(
                    "weights are not the stick-breaking transform of sticks",
                ));
            }
        }
        Ok(())
    }
}

/// Stick-breaking transform `p_j = V_j prod_{h<j} (1 - V_h)`.
///
/// The final stick must equal 1 so the weights sum to exactly 1.
pub fn stick_break(sticks: &[f64]) -> Result<Vec<f64>> {
    if sticks.is_empty() {
        return Err(Error::domain("stick_break on empty input"));
    }
    for (j, &v) in sticks.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(format!(
                "stick {j} = {v} outside [0, 1]"
            )));
        }
    }
    let last = *sticks.last().unwrap();
    if last != 1.0 {
        return Err(Error::domain(format!(
            "final stick must equal 1 (truncation), got {last}"
        )));
    }
    let mut weights = Vec::with_capacity(sticks.len());
    let mut remaining = 1.0f64;
    for &v in sticks {
        weights.push(v * remaining);
        remaining *= 1.0 - v;
    }
    Ok(weights)
}

/// Predictor-dependent weights at a covariate point, with the mixture
/// normalizer `g(x) = sum_q p_q phi_sigma(x - mu_q^x)` exposed in log form.
#[derive(Debug, Clone)]
pub struct PredictorWeights {
    pub weights: Vec<f64>,
    pub log_normalizer: f64,
}

impl PredictorWeights {
    pub fn normalizer(&self) -> f64 {
        self.log_normalizer.exp()
    }
}

/// Weights `w_j propto p_j phi_sigma(x - mu_j^x)`, computed in log space
/// so distant covariate points cannot underflow the whole vector.
pub fn predictor_weights(state: &MixtureState, x: &[f64]) -> Result<PredictorWeights> {
    if x.len() != state.d_x {
        return Err(Error::domain(format!(
            "x has {} components, state expects {}",
            x.len(),
            state.d_x
        )));
    }
    let n = state.n_components();
    let mut logs = Vec::with_capacity(n);
    for j in 0..n {
        let lp = if state.weights[j] > 0.0 {
            state.weights[j].ln()
                + log_normal_kernel(sq_dist(x, state.mu_x_row(j)), state.sigma, state.d_x)
        } else {
            f64::NEG_INFINITY
        };
        logs.push(lp);
    }
    // Normalize on the max-shifted scale; dividing exp(l - log_g) directly
    // loses precision when the shared magnitude is large.
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::domain("all mixture components have zero weight"));
    }
    let shifted: Vec<f64> = logs.iter().map(|&l| (l - m).exp()).collect();
    let total: f64 = shifted.iter().sum();
    let weights = shifted.iter().map(|&e| e / total).collect();
    Ok(PredictorWeights {
        weights,
        log_normalizer: m + total.ln(),
    })
}

/// Conditional mixture density `f(y|x) = sum_j p_{j,sigma}(x) phi_sigma(y - mu_j^y)`.
pub fn conditional_density(state: &MixtureState, x: &[f64], y: &[f64]) -> Result<f64> {
    let pw = predictor_weights(state, x)?;
    if y.len() != state.d_y {
        return Err(Error::domain(format!(
            "y has {} components, state expects {}",
            y.len(),
            state.d_y
        )));
    }
    let mut terms = Vec::with_capacity(state.n_components());
    for (j, &w) in pw.weights.iter().enumerate() {
        if w > 0.0 {
            terms.push(
                w.ln() + log_normal_kernel(sq_dist(y, state.mu_y_row(j)), state.sigma, state.d_y),
            );
        }
    }
    Ok(logsumexp(&terms).exp())
}

/// Joint mixture density `f(y|x) g(x) = sum_j p_j phi_sigma(x - mu_j^x) phi_sigma(y - mu_j^y)`.
pub fn joint_density(state: &MixtureState, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != state.d_x || y.len() != state.d_y {
        return Err(Error::domain("point dimensions do not match state"));
    }
    let mut terms = Vec::with_capacity(state.n_components());
    for j in 0..state.n_components() {
        let p = state.weights[j];
        if p > 0.0 {
            terms.push(
                p.ln()
                    + log_normal_kernel(sq_dist(x, state.mu_x_row(j)), state.sigma, state.d_x)
                    + log_normal_kernel(sq_dist(y, state.mu_y_row(j)), state.sigma, state.d_y),
            );
        }
    }
    Ok(logsumexp(&terms).exp())
}

/// Draw a state from the truncated prior: `V_j ~ Beta(1, c0)` with the
/// final stick pinned at 1, `mu_x ~ uniform cube`, `mu_y = lambda + tau*zeta`
/// with standard Gaussian `zeta`, and `sigma ~ IG(alpha, beta)`.
pub fn sample_prior_state(prior: &PriorConfig, rng: &mut RngStream) -> Result<MixtureState> {
    prior.validate()?;
    let n = prior.truncation;
    let mut sticks = Vec::with_capacity(n);
    for _ in 0..n - 1 {
        sticks.push(dist::sample_stick(prior.c0, rng)?);
    }
    sticks.push(1.0);
    let weights = stick_break(&sticks)?;

    let mut mu_x = Vec::with_capacity(n * prior.d_x);
    for _ in 0..n * prior.d_x {
        mu_x.push(rng.uniform());
    }

    let tau = prior.gamma.tau();
    let mut mu_y = Vec::with_capacity(n * prior.d_y);
    for _ in 0..n {
        for k in 0..prior.d_y {
            mu_y.push(prior.gamma.lambda[k] + tau * dist::sample_std_normal(rng));
        }
    }

    let sigma = dist::sample_inverse_gamma(prior.alpha_shape, prior.gamma.beta_scale, rng)?;

    Ok(MixtureState {
        sticks,
        weights,
        mu_x,
        mu_y,
        sigma,
        d_x: prior.d_x,
        d_y: prior.d_y,
    })
}

/// Change-of-measure map `psi_{gamma', gamma}` transporting a draw from the
/// prior under `gamma_src` to one distributed per `gamma_dst`: the bandwidth
/// is rescaled by `beta_dst/beta_src` and the centered response atoms are
/// shifted/scaled into the destination base measure. Sticks, weights and
/// covariate atoms are untouched.
pub fn psi_transform(
    state: &MixtureState,
    gamma_src: &HyperParams,
    gamma_dst: &HyperParams,
) -> Result<MixtureState> {
    gamma_src.validate()?;
    gamma_dst.validate()?;
    if gamma_src.d_y() != state.d_y || gamma_dst.d_y() != state.d_y {
        return Err(Error::domain("hyperparameter dimension does not match state"));
    }
    let pi_r = gamma_dst.beta_scale / gamma_src.beta_scale;
    let rho_s = (gamma_dst.tau2 / gamma_src.tau2).sqrt();
    let mut out = state.clone();
    out.sigma = pi_r * state.sigma;
    for j in 0..state.n_components() {
        for k in 0..state.d_y {
            let zeta = state.mu_y[j * state.d_y + k] - gamma_src.lambda[k];
            out.mu_y[j * state.d_y + k] = gamma_dst.lambda[k] + rho_s * zeta;
        }
    }
    Ok(out)
}

/// Simulate `n` records from a fixed state: `x ~ uniform cube`, a component
/// is drawn from the predictor weights at `x`, then `y` from that
/// component's Gaussian kernel. Used for well-specified sampler checks.
pub fn sample_data_from_state(
    state: &MixtureState,
    n: usize,
    rng: &mut RngStream,
) -> Result<Dataset> {
    state.validate()?;
    let mut data = Dataset::new(state.d_x, state.d_y);
    let mut x = vec![0.0; state.d_x];
    for _ in 0..n {
        for v in x.iter_mut() {
            *v = rng.uniform();
        }
        let pw = predictor_weights(state, &x)?;
        let mut u = rng.uniform();
        let mut j = 0usize;
        for (idx, &w) in pw.weights.iter().enumerate() {
            j = idx;
            if u < w {
                break;
            }
            u -= w;
        }
        let mu = state.mu_y_row(j);
        let y: Vec<f64> = mu
            .iter()
            .map(|&m| m + state.sigma * dist::sample_std_normal(rng))
            .collect();
        data.push(&x, &y)?;
    }
    Ok(data)
}
