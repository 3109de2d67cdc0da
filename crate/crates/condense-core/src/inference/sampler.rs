//! Metropolis-within-Gibbs sweep over (allocations, mu_y, mu_x, sticks,
//! sigma).
//!
//! The conditional-likelihood mode keeps the design density unmodeled, so
//! every block that moves the covariate kernels must carry the normalizer
//! product `prod_i g(x_i)` with `g(x) = sum_q p_q phi_sigma(x - mu_q^x)` in
//! its acceptance ratio. To make that affordable the sampler caches, per
//! record i: the squared covariate distances to every atom, the row
//! minimum, the rescaled kernel values `esc_ij = exp(-(sq_ij - min_i) /
//! (2 sigma^2))` (so the largest entry is exactly 1 and rows cannot
//! underflow), and `srow_i = sum_j p_j esc_ij`. Then
//! `log g_i = cx(sigma) - min_i/(2 sigma^2) + log srow_i`.
//!
//! Terms whose scaled exponent falls below `exp(-45)` relative to the row
//! maximum are dropped from proposal ratios; the discarded mass is below
//! double rounding of the retained sum.

use rand_distr::{Beta as BetaDist, Distribution};
use statrs::function::gamma::ln_gamma;

use crate::data::Dataset;
use crate::dist::{log_normal_kernel, normal_quantile, sample_std_normal, sq_dist, LN_2PI};
use crate::error::{Error, Result};
use crate::model::{stick_break, HyperParams, MixtureState, PriorConfig};
use crate::rng::RngStream;
use crate::util::logsumexp;

use super::{BlockAcceptance, LikelihoodMode, ProposalScales};

/// Relative log-magnitude below which normalizer contributions are dropped.
const NEGLIGIBLE_EXPONENT: f64 = 45.0;

#[derive(Debug, Default, Clone, Copy)]
struct Counter {
    window_acc: u64,
    window_prop: u64,
    total_acc: u64,
    total_prop: u64,
}

impl Counter {
    fn record(&mut self, accepted: bool) {
        self.window_prop += 1;
        self.total_prop += 1;
        if accepted {
            self.window_acc += 1;
            self.total_acc += 1;
        }
    }

    fn window_rate(&self) -> Option<f64> {
        (self.window_prop > 0).then(|| self.window_acc as f64 / self.window_prop as f64)
    }

    fn reset_window(&mut self) {
        self.window_acc = 0;
        self.window_prop = 0;
    }

    fn reset_total(&mut self) {
        self.total_acc = 0;
        self.total_prop = 0;
    }

    fn total_rate(&self) -> f64 {
        if self.total_prop == 0 {
            1.0
        } else {
            self.total_acc as f64 / self.total_prop as f64
        }
    }
}

pub(super) struct GibbsSampler<'a> {
    data: &'a Dataset,
    prior: &'a PriorConfig,
    mode: LikelihoodMode,
    scales: ProposalScales,
    state: MixtureState,
    n: usize,
    ncomp: usize,
    track_normalizer: bool,
    // Covariate kernel caches.
    sqx: Vec<f64>,
    row_min: Vec<f64>,
    esc: Vec<f64>,
    srow: Vec<f64>,
    // Allocation state.
    allocations: Vec<usize>,
    counts: Vec<usize>,
    ysum: Vec<f64>,
    xsum: Vec<f64>,
    // Counters.
    c_sigma: Counter,
    c_mu_x: Counter,
    c_sticks: Counter,
    c_coord: Counter,
    coord_step: f64,
}

impl<'a> GibbsSampler<'a> {
    pub(super) fn new(
        data: &'a Dataset,
        prior: &'a PriorConfig,
        mode: LikelihoodMode,
        scales: ProposalScales,
        state: MixtureState,
    ) -> Result<Self> {
        state.validate()?;
        scales.validate()?;
        let n = data.len();
        if n > 0 && (data.d_x() != state.d_x || data.d_y() != state.d_y) {
            return Err(Error::config("data dimensions do not match the state"));
        }
        let ncomp = state.n_components();
        let track_normalizer = mode == LikelihoodMode::ConditionalLikelihood;
        let mut sampler = GibbsSampler {
            data,
            prior,
            mode,
            scales,
            state,
            n,
            ncomp,
            track_normalizer,
            sqx: vec![0.0; n * ncomp],
            row_min: vec![0.0; n],
            esc: vec![0.0; n * ncomp],
            srow: vec![0.0; n],
            allocations: vec![0; n],
            counts: vec![0; ncomp],
            ysum: vec![0.0; ncomp * data.d_y().max(1)],
            xsum: vec![0.0; ncomp * data.d_x().max(1)],
            c_sigma: Counter::default(),
            c_mu_x: Counter::default(),
            c_sticks: Counter::default(),
            c_coord: Counter::default(),
            coord_step: 0.3,
        };
        sampler.rebuild_sq_cache();
        sampler.rebuild_normalizer_cache();
        Ok(sampler)
    }

    pub(super) fn state(&self) -> &MixtureState {
        &self.state
    }

    pub(super) fn into_state(self) -> MixtureState {
        self.state
    }

    pub(super) fn scales(&self) -> ProposalScales {
        self.scales
    }

    pub(super) fn acceptance_rates(&self) -> BlockAcceptance {
        BlockAcceptance {
            sigma: self.c_sigma.total_rate(),
            mu_x: self.c_mu_x.total_rate(),
            sticks: self.c_sticks.total_rate(),
            coord_scale: self.c_coord.total_rate(),
        }
    }

    pub(super) fn reset_counters(&mut self) {
        self.c_sigma.reset_total();
        self.c_mu_x.reset_total();
        self.c_sticks.reset_total();
        self.c_coord.reset_total();
    }

    /// Nudge proposal scales toward a 20-40% acceptance window.
    pub(super) fn adapt_scales(&mut self) {
        fn tune(scale: &mut f64, rate: Option<f64>, lo: f64, hi: f64) {
            if let Some(r) = rate {
                if r < 0.20 {
                    *scale *= 0.7;
                } else if r > 0.40 {
                    *scale *= 1.4;
                }
                *scale = scale.clamp(lo, hi);
            }
        }
        tune(
            &mut self.scales.log_sigma_step,
            self.c_sigma.window_rate(),
            1e-3,
            5.0,
        );
        tune(&mut self.scales.mu_x_step, self.c_mu_x.window_rate(), 1e-3, 2.0);
        tune(
            &mut self.scales.stick_logit_step,
            self.c_sticks.window_rate(),
            1e-2,
            10.0,
        );
        tune(&mut self.coord_step, self.c_coord.window_rate(), 1e-3, 2.0);
        self.c_sigma.reset_window();
        self.c_mu_x.reset_window();
        self.c_sticks.reset_window();
        self.c_coord.reset_window();
    }

    fn inv2s2(&self) -> f64 {
        1.0 / (2.0 * self.state.sigma * self.state.sigma)
    }

    fn rebuild_sq_cache(&mut self) {
        for i in 0..self.n {
            let x = self.data.x_row(i);
            for j in 0..self.ncomp {
                self.sqx[i * self.ncomp + j] = sq_dist(x, self.state.mu_x_row(j));
            }
        }
    }

    fn rebuild_normalizer_cache(&mut self) {
        if !self.track_normalizer {
            return;
        }
        let inv = self.inv2s2();
        for i in 0..self.n {
            let row = &self.sqx[i * self.ncomp..(i + 1) * self.ncomp];
            let m = row.iter().copied().fold(f64::INFINITY, f64::min);
            self.row_min[i] = m;
            let mut s = 0.0;
            for j in 0..self.ncomp {
                let e = (-(row[j] - m) * inv).exp();
                self.esc[i * self.ncomp + j] = e;
                s += self.state.weights[j] * e;
            }
            self.srow[i] = s;
        }
    }

    /// Install a new covariate atom for component `j`, refreshing caches.
    fn set_mu_x_col(&mut self, j: usize, mu: &[f64], sq_col: &[f64]) {
        let d_x = self.state.d_x;
        self.state.mu_x[j * d_x..(j + 1) * d_x].copy_from_slice(mu);
        let inv = self.inv2s2();
        for i in 0..self.n {
            self.sqx[i * self.ncomp + j] = sq_col[i];
            if !self.track_normalizer {
                continue;
            }
            let row = &self.sqx[i * self.ncomp..(i + 1) * self.ncomp];
            let m = row.iter().copied().fold(f64::INFINITY, f64::min);
            if m != self.row_min[i] {
                self.row_min[i] = m;
                let mut s = 0.0;
                for q in 0..self.ncomp {
                    let e = (-(row[q] - m) * inv).exp();
                    self.esc[i * self.ncomp + q] = e;
                    s += self.state.weights[q] * e;
                }
                self.srow[i] = s;
            } else {
                self.esc[i * self.ncomp + j] = (-(sq_col[i] - m) * inv).exp();
                let mut s = 0.0;
                for q in 0..self.ncomp {
                    s += self.state.weights[q] * self.esc[i * self.ncomp + q];
                }
                self.srow[i] = s;
            }
        }
    }

    /// One full sweep. The coordinate-contraction move runs first on the
    /// collapsed (allocation-marginalized) posterior; the allocation draw
    /// immediately after restores the augmented state exactly. The
    /// remaining blocks are allocations, conjugate response atoms,
    /// covariate atoms, sticks, bandwidth.
    pub(super) fn sweep(&mut self, rng: &mut RngStream) -> Result<()> {
        if self.track_normalizer {
            self.coord_scale_block(rng);
        }
        if self.n > 0 {
            self.alloc_block(rng);
        }
        self.mu_y_block(rng);
        self.mu_x_block(rng);
        self.stick_block(rng)?;
        self.sigma_block(rng);
        Ok(())
    }

    /// Global scaling move on one covariate coordinate: every atom's k-th
    /// coordinate contracts toward (or expands away from) the atom mean by
    /// a common log-normal factor. Lets the sampler align atoms along
    /// covariate directions the response does not depend on, where the
    /// kernel factors then cancel from the predictor weights. The ratio
    /// uses the marginal mixture likelihood (allocations are redrawn right
    /// after), so the move is not throttled by the current labels. The map
    /// preserves the atom mean, so the reverse move regenerates the same
    /// center and the Jacobian is rho^{n_components - 1} (the mean
    /// direction is fixed).
    fn coord_scale_block(&mut self, rng: &mut RngStream) {
        let d_x = self.state.d_x;
        let inv = self.inv2s2();
        let lnp: Vec<f64> = self
            .state
            .weights
            .iter()
            .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
            .collect();
        // Response kernels up to constants shared by both sides.
        let mut phiy = vec![0.0f64; self.n * self.ncomp];
        for i in 0..self.n {
            let y = self.data.y_row(i);
            for j in 0..self.ncomp {
                phiy[i * self.ncomp + j] = -sq_dist(y, self.state.mu_y_row(j)) * inv;
            }
        }
        let weights = self.state.weights.clone();
        let mut cur: Vec<f64> = (0..self.n)
            .map(|i| {
                marginal_part(
                    &self.sqx[i * self.ncomp..(i + 1) * self.ncomp],
                    &phiy[i * self.ncomp..(i + 1) * self.ncomp],
                    &lnp,
                    &weights,
                    inv,
                )
            })
            .collect();

        let mut new_coord = vec![0.0; self.ncomp];
        let mut sq_row = vec![0.0; self.ncomp];
        let mut proposed = vec![0.0; self.n];
        for k in 0..d_x {
            let mbar = (0..self.ncomp)
                .map(|j| self.state.mu_x[j * d_x + k])
                .sum::<f64>()
                / self.ncomp as f64;
            let rho = (self.coord_step * sample_std_normal(rng)).exp();
            let mut inside = true;
            for (j, c) in new_coord.iter_mut().enumerate() {
                *c = mbar + rho * (self.state.mu_x[j * d_x + k] - mbar);
                if !(0.0..=1.0).contains(c) {
                    inside = false;
                }
            }
            if !inside {
                self.c_coord.record(false);
                continue;
            }
            let mut delta = (self.ncomp as f64 - 1.0) * rho.ln();
            for i in 0..self.n {
                let xk = self.data.x_row(i)[k];
                for j in 0..self.ncomp {
                    let old_c = self.state.mu_x[j * d_x + k];
                    sq_row[j] = (self.sqx[i * self.ncomp + j]
                        - (xk - old_c) * (xk - old_c)
                        + (xk - new_coord[j]) * (xk - new_coord[j]))
                    .max(0.0);
                }
                let p = marginal_part(
                    &sq_row,
                    &phiy[i * self.ncomp..(i + 1) * self.ncomp],
                    &lnp,
                    &weights,
                    inv,
                );
                proposed[i] = p;
                delta += p - cur[i];
            }
            let accept = delta >= 0.0 || rng.uniform_open().ln() < delta;
            self.c_coord.record(accept);
            if accept {
                for j in 0..self.ncomp {
                    self.state.mu_x[j * d_x + k] = new_coord[j];
                }
                // Recompute distances exactly so incremental rounding
                // cannot accumulate across accepted moves.
                self.rebuild_sq_cache();
                self.rebuild_normalizer_cache();
                cur.copy_from_slice(&proposed);
            }
        }
    }

    /// Latent component indicators from their exact categorical full
    /// conditional; identical in both modes since the normalizer g(x_i)
    /// is constant across components.
    fn alloc_block(&mut self, rng: &mut RngStream) {
        let inv = self.inv2s2();
        let d_y = self.state.d_y;
        let d_x = self.state.d_x;
        self.counts.fill(0);
        self.ysum.fill(0.0);
        self.xsum.fill(0.0);
        let lnp: Vec<f64> = self
            .state
            .weights
            .iter()
            .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
            .collect();
        let mut logits = vec![0.0f64; self.ncomp];
        for i in 0..self.n {
            let y = self.data.y_row(i);
            let mut best = 0usize;
            let mut best_v = f64::NEG_INFINITY;
            for j in 0..self.ncomp {
                let sqy = sq_dist(y, self.state.mu_y_row(j));
                let v = lnp[j] - (self.sqx[i * self.ncomp + j] + sqy) * inv;
                logits[j] = v;
                if v > best_v {
                    best_v = v;
                    best = j;
                }
            }
            let mut total = 0.0;
            for l in logits.iter_mut() {
                *l = (*l - best_v).exp();
                total += *l;
            }
            let mut u = rng.uniform() * total;
            let mut sel = best;
            for (j, &w) in logits.iter().enumerate() {
                if u < w {
                    sel = j;
                    break;
                }
                u -= w;
            }
            self.allocations[i] = sel;
            self.counts[sel] += 1;
            for k in 0..d_y {
                self.ysum[sel * d_y + k] += y[k];
            }
            let x = self.data.x_row(i);
            for k in 0..d_x {
                self.xsum[sel * d_x + k] += x[k];
            }
        }
    }

    /// Gaussian conjugate update for every response atom.
    fn mu_y_block(&mut self, rng: &mut RngStream) {
        let d_y = self.state.d_y;
        for j in 0..self.ncomp {
            let (mean, var) = mu_y_full_conditional(
                self.state.sigma,
                &self.prior.gamma,
                self.counts[j],
                &self.ysum[j * d_y..(j + 1) * d_y],
            );
            let sd = var.sqrt();
            for k in 0..d_y {
                self.state.mu_y[j * d_y + k] = mean[k] + sd * sample_std_normal(rng);
            }
        }
    }

    fn mu_x_block(&mut self, rng: &mut RngStream) {
        match self.mode {
            LikelihoodMode::JointFit => self.mu_x_block_joint(rng),
            LikelihoodMode::ConditionalLikelihood => self.mu_x_block_conditional(rng),
        }
    }

    /// Truncated-Gaussian full conditional on the unit cube (joint mode).
    fn mu_x_block_joint(&mut self, rng: &mut RngStream) {
        let d_x = self.state.d_x;
        let mut mu = vec![0.0; d_x];
        let mut sq_col = vec![0.0; self.n];
        for j in 0..self.ncomp {
            let nj = self.counts[j];
            if nj == 0 {
                for v in mu.iter_mut() {
                    *v = rng.uniform();
                }
            } else {
                let sd = self.state.sigma / (nj as f64).sqrt();
                for (k, v) in mu.iter_mut().enumerate() {
                    let mean = self.xsum[j * d_x + k] / nj as f64;
                    *v = sample_truncated_normal(mean, sd, 0.0, 1.0, rng);
                }
            }
            for (i, sq) in sq_col.iter_mut().enumerate() {
                *sq = sq_dist(self.data.x_row(i), &mu);
            }
            self.set_mu_x_col(j, &mu, &sq_col);
        }
    }

    /// Reflected random-walk Metropolis on each covariate atom, with the
    /// exact normalizer product in the ratio (conditional mode).
    fn mu_x_block_conditional(&mut self, rng: &mut RngStream) {
        let d_x = self.state.d_x;
        let inv = self.inv2s2();
        let skip = NEGLIGIBLE_EXPONENT / inv;
        let mut mu = vec![0.0; d_x];
        let mut sq_col = vec![0.0; self.n];
        for j in 0..self.ncomp {
            let cur = self.state.mu_x_row(j);
            for (k, v) in mu.iter_mut().enumerate() {
                *v = reflect_unit(cur[k] + self.scales.mu_x_step * sample_std_normal(rng));
            }
            for (i, sq) in sq_col.iter_mut().enumerate() {
                *sq = sq_dist(self.data.x_row(i), &mu);
            }
            let p_j = self.state.weights[j];
            let lnp_j = if p_j > 0.0 { p_j.ln() } else { f64::NEG_INFINITY };
            let mut delta = 0.0;
            for i in 0..self.n {
                let old = self.sqx[i * self.ncomp + j];
                let new = sq_col[i];
                if self.allocations[i] == j {
                    delta += (old - new) * inv;
                }
                if p_j == 0.0 {
                    continue;
                }
                // Skip rows where this atom is negligible before and after.
                if old.min(new) - self.row_min[i] > skip && self.allocations[i] != j {
                    continue;
                }
                let rest = (self.srow[i] - p_j * self.esc[i * self.ncomp + j]).max(0.0);
                let t_rest = if rest > 0.0 {
                    rest.ln() - self.row_min[i] * inv
                } else {
                    f64::NEG_INFINITY
                };
                let t_new = lnp_j - new * inv;
                let ln_g_new = logsumexp(&[t_rest, t_new]);
                let ln_g_old = self.srow[i].ln() - self.row_min[i] * inv;
                delta += ln_g_old - ln_g_new;
            }
            let accept = delta >= 0.0 || rng.uniform_open().ln() < delta;
            self.c_mu_x.record(accept);
            if accept {
                self.set_mu_x_col(j, &mu, &sq_col);
            }
        }
    }

    fn stick_block(&mut self, rng: &mut RngStream) -> Result<()> {
        match self.mode {
            LikelihoodMode::JointFit => self.stick_block_joint(rng),
            LikelihoodMode::ConditionalLikelihood => self.stick_block_conditional(rng),
        }
    }

    /// Conjugate Beta update for the sticks (joint mode).
    fn stick_block_joint(&mut self, rng: &mut RngStream) -> Result<()> {
        for j in 0..self.ncomp - 1 {
            let (a, b) = stick_full_conditional(&self.counts, j, self.prior.c0);
            let beta = BetaDist::new(a, b)
                .map_err(|e| Error::domain(format!("stick full conditional: {e}")))?;
            self.state.sticks[j] = clamp_stick(beta.sample(rng));
        }
        self.state.weights = stick_break(&self.state.sticks)?;
        Ok(())
    }

    /// Logit-scale Metropolis per stick with the normalizer product in the
    /// ratio (conditional mode).
    fn stick_block_conditional(&mut self, rng: &mut RngStream) -> Result<()> {
        let c0 = self.prior.c0;
        let mut prefix = vec![0.0f64; self.n];
        let mut new_srow = vec![0.0f64; self.n];
        let mut suffix_counts = vec![0usize; self.ncomp + 1];
        for j in (0..self.ncomp).rev() {
            suffix_counts[j] = suffix_counts[j + 1] + self.counts[j];
        }
        for j in 0..self.ncomp - 1 {
            let v = self.state.sticks[j];
            let logit = (v / (1.0 - v)).ln();
            let v_new = clamp_stick(sigmoid(logit + self.scales.stick_logit_step * sample_std_normal(rng)));

            let mut sticks_new = self.state.sticks.clone();
            sticks_new[j] = v_new;
            let weights_new = stick_break(&sticks_new)?;

            let n_j = self.counts[j] as f64;
            let t_j = suffix_counts[j + 1] as f64;
            let mut delta = n_j * (v_new.ln() - v.ln())
                + (c0 - 1.0 + t_j) * ((1.0 - v_new).ln() - (1.0 - v).ln())
                // Jacobian of the logit transform.
                + (v_new.ln() + (1.0 - v_new).ln()) - (v.ln() + (1.0 - v).ln());

            for i in 0..self.n {
                let row = &self.esc[i * self.ncomp..(i + 1) * self.ncomp];
                let mut s_old = prefix[i];
                let mut s_new = prefix[i];
                for q in j..self.ncomp {
                    s_old += self.state.weights[q] * row[q];
                    s_new += weights_new[q] * row[q];
                }
                new_srow[i] = s_new;
                delta += s_old.ln() - s_new.ln();
            }

            let accept = delta >= 0.0 || rng.uniform_open().ln() < delta;
            self.c_sticks.record(accept);
            if accept {
                self.state.sticks = sticks_new;
                self.state.weights = weights_new;
                self.srow.copy_from_slice(&new_srow);
            }
            for i in 0..self.n {
                prefix[i] += self.state.weights[j] * self.esc[i * self.ncomp + j];
            }
        }
        Ok(())
    }

    /// Log-scale random-walk Metropolis on the bandwidth (both modes).
    fn sigma_block(&mut self, rng: &mut RngStream) {
        let sigma = self.state.sigma;
        let lsig_new = sigma.ln() + self.scales.log_sigma_step * sample_std_normal(rng);
        let sigma_new = lsig_new.exp();
        if !(1e-8..=1e8).contains(&sigma_new) {
            self.c_sigma.record(false);
            return;
        }
        let dlns = lsig_new - sigma.ln();
        let alpha = self.prior.alpha_shape;
        let beta = self.prior.gamma.beta_scale;
        // IG prior on sigma plus the log-scale Jacobian.
        let mut delta =
            -(alpha + 1.0) * dlns - beta * (1.0 / sigma_new - 1.0 / sigma) + dlns;

        let inv_old = self.inv2s2();
        let inv_new = 1.0 / (2.0 * sigma_new * sigma_new);
        let mut new_esc = Vec::new();
        let mut new_srow = Vec::new();
        if self.n > 0 {
            let d = (self.state.d_x + self.state.d_y) as f64;
            let mut ss = 0.0;
            for i in 0..self.n {
                let j = self.allocations[i];
                ss += self.sqx[i * self.ncomp + j]
                    + sq_dist(self.data.y_row(i), self.state.mu_y_row(j));
            }
            delta += -(self.n as f64) * d * dlns - ss * (inv_new - inv_old);

            if self.track_normalizer {
                new_esc = vec![0.0f64; self.n * self.ncomp];
                new_srow = vec![0.0f64; self.n];
                let d_x = self.state.d_x as f64;
                for i in 0..self.n {
                    let row = &self.sqx[i * self.ncomp..(i + 1) * self.ncomp];
                    let m = self.row_min[i];
                    let mut s = 0.0;
                    for q in 0..self.ncomp {
                        let e = (-(row[q] - m) * inv_new).exp();
                        new_esc[i * self.ncomp + q] = e;
                        s += self.state.weights[q] * e;
                    }
                    new_srow[i] = s;
                    let ln_g_old = -d_x * sigma.ln() - m * inv_old + self.srow[i].ln();
                    let ln_g_new = -d_x * lsig_new - m * inv_new + s.ln();
                    delta += ln_g_old - ln_g_new;
                }
            }
        }

        let accept = delta >= 0.0 || rng.uniform_open().ln() < delta;
        self.c_sigma.record(accept);
        if accept {
            self.state.sigma = sigma_new;
            if self.track_normalizer && self.n > 0 {
                self.esc = new_esc;
                self.srow = new_srow;
            }
        }
    }

    /// Log posterior density of the current state (marginal over
    /// allocations), up to additive constants. Finite whenever the state is
    /// valid and the data have positive density.
    pub(super) fn log_posterior(&self) -> Result<f64> {
        let state = &self.state;
        let mut lp = 0.0;
        // Likelihood.
        let lnp: Vec<f64> = state
            .weights
            .iter()
            .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
            .collect();
        let inv = self.inv2s2();
        let cx = -(state.d_x as f64) * (0.5 * LN_2PI + state.sigma.ln());
        let cy = -(state.d_y as f64) * (0.5 * LN_2PI + state.sigma.ln());
        let mut terms = vec![0.0f64; self.ncomp];
        for i in 0..self.n {
            let y = self.data.y_row(i);
            for j in 0..self.ncomp {
                let sqy = sq_dist(y, state.mu_y_row(j));
                terms[j] = lnp[j] - (self.sqx[i * self.ncomp + j] + sqy) * inv;
            }
            let ln_joint = logsumexp(&terms) + cx + cy;
            match self.mode {
                LikelihoodMode::JointFit => lp += ln_joint,
                LikelihoodMode::ConditionalLikelihood => {
                    let ln_g = if self.track_normalizer {
                        cx - self.row_min[i] * inv + self.srow[i].ln()
                    } else {
                        0.0
                    };
                    lp += ln_joint - ln_g;
                }
            }
        }
        // Priors: sticks, response atoms, bandwidth (covariate atoms are
        // uniform on the cube).
        let c0 = self.prior.c0;
        for j in 0..self.ncomp - 1 {
            lp += c0.ln() + (c0 - 1.0) * (1.0 - state.sticks[j]).ln();
        }
        let tau = self.prior.gamma.tau();
        for j in 0..self.ncomp {
            lp += log_normal_kernel(
                sq_dist(state.mu_y_row(j), &self.prior.gamma.lambda),
                tau,
                state.d_y,
            );
        }
        let alpha = self.prior.alpha_shape;
        let beta = self.prior.gamma.beta_scale;
        lp += alpha * beta.ln() - ln_gamma(alpha) - (alpha + 1.0) * state.sigma.ln()
            - beta / state.sigma;
        if !lp.is_finite() {
            return Err(Error::domain(format!("non-finite log posterior: {lp}")));
        }
        Ok(lp)
    }
}

/// Marginal log-likelihood contribution of one record up to constants:
/// `lse_j(lnp_j + phiy_j - sq_j*inv) - ln g` with
/// `ln g = ln sum_j p_j exp(-sq_j*inv)` on the row-min scale.
fn marginal_part(sq_row: &[f64], phiy_row: &[f64], lnp: &[f64], weights: &[f64], inv: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut min_sq = f64::INFINITY;
    for j in 0..sq_row.len() {
        let v = lnp[j] + phiy_row[j] - sq_row[j] * inv;
        if v > best {
            best = v;
        }
        if sq_row[j] < min_sq {
            min_sq = sq_row[j];
        }
    }
    let mut num = 0.0;
    let mut g = 0.0;
    for j in 0..sq_row.len() {
        num += (lnp[j] + phiy_row[j] - sq_row[j] * inv - best).exp();
        if weights[j] > 0.0 {
            g += weights[j] * (-(sq_row[j] - min_sq) * inv).exp();
        }
    }
    (best + num.ln()) - (-min_sq * inv + g.ln())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn clamp_stick(v: f64) -> f64 {
    v.clamp(1e-12, 1.0 - 1e-12)
}

/// Fold a real number into [0, 1] by reflection at the boundaries.
fn reflect_unit(v: f64) -> f64 {
    let t = v.rem_euclid(2.0);
    if t > 1.0 {
        2.0 - t
    } else {
        t
    }
}

/// Inverse-CDF draw from N(mean, sd^2) truncated to [lo, hi].
fn sample_truncated_normal(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut RngStream) -> f64 {
    let a = crate::dist::normal_cdf(lo, mean, sd);
    let b = crate::dist::normal_cdf(hi, mean, sd);
    if b - a < 1e-14 {
        // All truncated mass sits at one boundary.
        return mean.clamp(lo, hi);
    }
    let u = a + rng.uniform() * (b - a);
    normal_quantile(u.clamp(1e-16, 1.0 - 1e-16), mean, sd).clamp(lo, hi)
}

/// Gaussian full conditional of a response atom with `n_j` allocated
/// observations summing to `sum_y`: precision `1/tau^2 + n_j/sigma^2`,
/// mean `(lambda/tau^2 + sum_y/sigma^2) / precision`, componentwise.
pub fn mu_y_full_conditional(
    sigma: f64,
    gamma: &HyperParams,
    n_j: usize,
    sum_y: &[f64],
) -> (Vec<f64>, f64) {
    let prec = 1.0 / gamma.tau2 + n_j as f64 / (sigma * sigma);
    let var = 1.0 / prec;
    let mean = gamma
        .lambda
        .iter()
        .zip(sum_y)
        .map(|(&l, &s)| (l / gamma.tau2 + s / (sigma * sigma)) * var)
        .collect();
    (mean, var)
}

/// Draw every response atom from its exact Gaussian full conditional.
pub fn update_mu_y(
    state: &mut MixtureState,
    allocations: &[usize],
    data: &Dataset,
    gamma: &HyperParams,
    rng: &mut RngStream,
) -> Result<()> {
    if allocations.len() != data.len() {
        return Err(Error::domain(
            "allocation vector length does not match the dataset",
        ));
    }
    if gamma.d_y() != state.d_y {
        return Err(Error::domain("gamma dimension does not match the state"));
    }
    let d_y = state.d_y;
    let ncomp = state.n_components();
    let mut counts = vec![0usize; ncomp];
    let mut sums = vec![0.0f64; ncomp * d_y];
    for (i, &j) in allocations.iter().enumerate() {
        if j >= ncomp {
            return Err(Error::domain(format!("allocation {j} out of range")));
        }
        counts[j] += 1;
        for k in 0..d_y {
            sums[j * d_y + k] += data.y_row(i)[k];
        }
    }
    for j in 0..ncomp {
        let (mean, var) =
            mu_y_full_conditional(state.sigma, gamma, counts[j], &sums[j * d_y..(j + 1) * d_y]);
        let sd = var.sqrt();
        for k in 0..d_y {
            state.mu_y[j * d_y + k] = mean[k] + sd * sample_std_normal(rng);
        }
    }
    Ok(())
}

/// Conjugate Beta parameters of stick `j` given allocation counts:
/// `Beta(1 + n_j, c0 + sum_{l > j} n_l)`.
pub fn stick_full_conditional(counts: &[usize], j: usize, c0: f64) -> (f64, f64) {
    let tail: usize = counts[j + 1..].iter().sum();
    (1.0 + counts[j] as f64, c0 + tail as f64)
}

/// Latent component indicators drawn from the exact categorical full
/// conditional `P(s_i = j) propto p_j phi_sigma(x_i - mu_j^x)
/// phi_sigma(y_i - mu_j^y)`, computed in log space.
pub fn sample_allocations(
    state: &MixtureState,
    data: &Dataset,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    state.validate()?;
    if data.is_empty() {
        return Err(Error::domain("sample_allocations needs at least one record"));
    }
    if data.d_x() != state.d_x || data.d_y() != state.d_y {
        return Err(Error::domain("data dimensions do not match the state"));
    }
    let ncomp = state.n_components();
    let mut out = Vec::with_capacity(data.len());
    let mut logits = vec![0.0f64; ncomp];
    for i in 0..data.len() {
        let x = data.x_row(i);
        let y = data.y_row(i);
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for j in 0..ncomp {
            let v = if state.weights[j] > 0.0 {
                state.weights[j].ln()
                    + log_normal_kernel(sq_dist(x, state.mu_x_row(j)), state.sigma, state.d_x)
                    + log_normal_kernel(sq_dist(y, state.mu_y_row(j)), state.sigma, state.d_y)
            } else {
                f64::NEG_INFINITY
            };
            logits[j] = v;
            if v > best_v {
                best_v = v;
                best = j;
            }
        }
        let mut total = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - best_v).exp();
            total += *l;
        }
        let mut u = rng.uniform() * total;
        let mut sel = best;
        for (j, &w) in logits.iter().enumerate() {
            if u < w {
                sel = j;
                break;
            }
            u -= w;
        }
        out.push(sel);
    }
    Ok(out)
}
