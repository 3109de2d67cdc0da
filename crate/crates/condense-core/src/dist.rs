//! Scalar distributions used by the model: isotropic Gaussian kernels,
//! the inverse-gamma bandwidth prior (two constructions), stick Betas,
//! and a Kolmogorov-Smirnov statistic for distributional identity tests.

use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use statrs::function::erf::{erf, erf_inv};
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const LN_2PI: f64 = 1.8378770664093453;

/// Log of the isotropic Gaussian kernel `phi_sigma(z - mean)` given the
/// squared distance and dimension.
#[inline]
pub fn log_normal_kernel(sq_dist: f64, sigma: f64, dim: usize) -> f64 {
    -0.5 * dim as f64 * (LN_2PI + 2.0 * sigma.ln()) - sq_dist / (2.0 * sigma * sigma)
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Isotropic multivariate normal density `phi_sigma(z - mean)` with
/// covariance `sigma^2 I`.
pub fn normal_pdf(z: &[f64], mean: &[f64], sigma: f64) -> Result<f64> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::domain(format!("sigma must be positive, got {sigma}")));
    }
    if z.len() != mean.len() {
        return Err(Error::domain(format!(
            "dimension mismatch: z has {} components, mean has {}",
            z.len(),
            mean.len()
        )));
    }
    if z.is_empty() {
        return Err(Error::domain("normal_pdf on zero-dimensional input"));
    }
    Ok(log_normal_kernel(sq_dist(z, mean), sigma, z.len()).exp())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * (1.0 + erf((x - mean) / (sd * std::f64::consts::SQRT_2)))
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64, mean: f64, sd: f64) -> f64 {
    mean + sd * std::f64::consts::SQRT_2 * erf_inv(2.0 * p - 1.0)
}

pub fn sample_std_normal(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}

/// Gamma(shape, rate) variate. Backed by a rejection sampler valid for
/// every shape > 0.
pub fn sample_gamma(shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    if shape <= 0.0 || rate <= 0.0 {
        return Err(Error::domain(format!(
            "gamma parameters must be positive, got shape={shape}, rate={rate}"
        )));
    }
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::domain(format!("gamma sampler: {e}")))?;
    Ok(g.sample(rng))
}

/// Draw `sigma ~ IG(alpha, beta)`, i.e. `1/sigma ~ Gamma(alpha, rate beta)`.
///
/// The inverse gamma is parameterized on `sigma` itself, so the density is
/// `beta^alpha / Gamma(alpha) * sigma^{-alpha-1} exp(-beta/sigma)`.
pub fn sample_inverse_gamma(alpha: f64, beta: f64, rng: &mut RngStream) -> Result<f64> {
    if alpha <= 0.0 || beta <= 0.0 {
        return Err(Error::domain(format!(
            "inverse gamma parameters must be positive, got alpha={alpha}, beta={beta}"
        )));
    }
    let g = sample_gamma(alpha, beta, rng)?;
    Ok(1.0 / g)
}

/// IG(alpha, beta) variate built as `beta / (E_1 + ... + E_alpha)` from
/// unit-mean exponential summands; requires integer shape.
pub fn ig_from_exponentials(alpha: u32, beta: f64, rng: &mut RngStream) -> Result<f64> {
    if alpha == 0 {
        return Err(Error::domain("ig_from_exponentials needs alpha >= 1"));
    }
    if beta <= 0.0 {
        return Err(Error::domain(format!("beta must be positive, got {beta}")));
    }
    let mut sum = 0.0;
    for _ in 0..alpha {
        let e: f64 = Exp1.sample(rng);
        sum += e;
    }
    Ok(beta / sum)
}

/// CDF of IG(alpha, beta) on sigma: upper regularized gamma at `beta/x`.
pub fn inverse_gamma_cdf(x: f64, alpha: f64, beta: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_ur(alpha, beta / x)
}

/// CDF of Gamma(shape, rate).
pub fn gamma_cdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_lr(shape, rate * x)
}

/// Stick proportion `V ~ Beta(1, c0)` via the closed-form inverse CDF.
pub fn sample_stick(c0: f64, rng: &mut RngStream) -> Result<f64> {
    if c0 <= 0.0 {
        return Err(Error::domain(format!("c0 must be positive, got {c0}")));
    }
    let u = rng.uniform();
    // CDF is 1 - (1-v)^c0.
    Ok(1.0 - (1.0 - u).powf(1.0 / c0))
}

pub fn beta_1_c0_cdf(v: f64, c0: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else if v >= 1.0 {
        1.0
    } else {
        1.0 - (1.0 - v).powf(c0)
    }
}

/// One-sample Kolmogorov-Smirnov statistic: the sup-norm distance between
/// the empirical CDF of `samples` (which must be sorted ascending) and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::domain("ks_statistic on empty sample"));
    }
    if samples.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::domain("ks_statistic requires sorted samples"));
    }
    let m = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        let upper = ((i + 1) as f64 / m - f).abs();
        let lower = (f - i as f64 / m).abs();
        d = d.max(upper).max(lower);
    }
    Ok(d)
}

/// Two-sample KS statistic; both inputs must be sorted ascending.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("ks_two_sample on empty sample"));
    }
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    Ok(d)
}

/// Asymptotic Kolmogorov quantile `K` such that a KS test at significance
/// `alpha` rejects when `D > K / sqrt(m)`.
pub fn kolmogorov_quantile(alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt()
}

/// One-sample KS critical value at significance `alpha` for `m` draws.
pub fn ks_critical(m: usize, alpha: f64) -> f64 {
    kolmogorov_quantile(alpha) / (m as f64).sqrt()
}

/// Two-sample KS critical value at significance `alpha`.
pub fn ks_two_sample_critical(n: usize, m: usize, alpha: f64) -> f64 {
    kolmogorov_quantile(alpha) * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn normal_pdf_closed_forms() {
        // (2*pi)^{-1/2} at the standard normal mode.
        let p0 = normal_pdf(&[0.0], &[0.0], 1.0).unwrap();
        assert!((p0 - 0.3989422804014327).abs() < 1e-12);
        let p1 = normal_pdf(&[1.0], &[0.0], 1.0).unwrap();
        assert!((p1 - 0.24197072451914337).abs() < 1e-12);
    }

    #[test]
    fn normal_pdf_peak_any_dimension() {
        for k in 1..=4usize {
            let z = vec![0.7; k];
            let sigma = 0.35;
            let p = normal_pdf(&z, &z, sigma).unwrap();
            let expected = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-(k as f64) / 2.0);
            assert!((p - expected).abs() < 1e-12 * expected);
        }
    }

    #[test]
    fn normal_pdf_rejects_bad_sigma() {
        assert!(normal_pdf(&[0.0], &[0.0], 0.0).is_err());
        assert!(normal_pdf(&[0.0], &[0.0], -1.0).is_err());
        assert!(normal_pdf(&[0.0], &[0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn inverse_gamma_mean_matches_theory() {
        // IG(3, 2) has mean beta/(alpha-1) = 1.
        let mut rng = RngStream::new(11, 0);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += sample_inverse_gamma(3.0, 2.0, &mut rng).unwrap();
        }
        let mean = sum / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "IG(3,2) mean {mean}");
    }

    #[test]
    fn inverse_gamma_reciprocal_is_gamma() {
        let mut rng = RngStream::new(12, 0);
        let recips = sorted(
            (0..100_000)
                .map(|_| 1.0 / sample_inverse_gamma(3.0, 2.0, &mut rng).unwrap())
                .collect(),
        );
        let d = ks_statistic(&recips, |x| gamma_cdf(x, 3.0, 2.0)).unwrap();
        assert!(d < ks_critical(recips.len(), 0.01), "KS {d}");
    }

    #[test]
    fn inverse_gamma_scale_family() {
        // sigma ~ IG(2, b) scaled by c is IG(2, c*b).
        let mut rng = RngStream::new(13, 0);
        let c = 1.7;
        let b = 0.8;
        let scaled = sorted(
            (0..100_000)
                .map(|_| c * sample_inverse_gamma(2.0, b, &mut rng).unwrap())
                .collect(),
        );
        let direct = sorted(
            (0..100_000)
                .map(|_| sample_inverse_gamma(2.0, c * b, &mut rng).unwrap())
                .collect(),
        );
        let d = ks_two_sample(&scaled, &direct).unwrap();
        assert!(
            d < ks_two_sample_critical(scaled.len(), direct.len(), 0.01),
            "KS {d}"
        );
    }

    #[test]
    fn ig_from_exponentials_matches_ig_cdf() {
        let mut rng = RngStream::new(14, 0);
        let draws = sorted(
            (0..100_000)
                .map(|_| ig_from_exponentials(1, 1.0, &mut rng).unwrap())
                .collect(),
        );
        let d = ks_statistic(&draws, |x| inverse_gamma_cdf(x, 1.0, 1.0)).unwrap();
        assert!(d < ks_critical(draws.len(), 0.01), "KS {d}");
    }

    #[test]
    fn ig_from_exponentials_mean() {
        let mut rng = RngStream::new(15, 0);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += ig_from_exponentials(3, 2.0, &mut rng).unwrap();
        }
        let mean = sum / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "gamma-sum IG(3,2) mean {mean}");
    }

    #[test]
    fn ig_constructions_agree_two_sample() {
        for alpha in [1u32, 2, 5] {
            let mut rng = RngStream::new(16 + alpha as u64, 0);
            let a = sorted(
                (0..100_000)
                    .map(|_| ig_from_exponentials(alpha, 3.0, &mut rng).unwrap())
                    .collect(),
            );
            let b = sorted(
                (0..100_000)
                    .map(|_| sample_inverse_gamma(alpha as f64, 3.0, &mut rng).unwrap())
                    .collect(),
            );
            let d = ks_two_sample(&a, &b).unwrap();
            assert!(
                d < ks_two_sample_critical(a.len(), b.len(), 0.01),
                "alpha={alpha} KS {d}"
            );
        }
    }

    #[test]
    fn ig_from_exponentials_rejects_zero_shape() {
        let mut rng = RngStream::new(19, 0);
        assert!(ig_from_exponentials(0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn ks_single_sample_at_median() {
        let d = ks_statistic(&[0.0], |x| normal_cdf(x, 0.0, 1.0)).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ks_total_separation() {
        // All samples below the support of Uniform(0,1).
        let samples = [-3.0, -2.0, -1.0];
        let d = ks_statistic(&samples, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ks_self_test_below_quantile() {
        let mut rng = RngStream::new(20, 0);
        let m = 100_000usize;
        let samples = sorted((0..m).map(|_| rng.uniform()).collect());
        let d = ks_statistic(&samples, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(d < 1.63 / (m as f64).sqrt(), "self KS {d}");
    }

    #[test]
    fn ks_rejects_empty_and_unsorted() {
        assert!(ks_statistic(&[], |x| x).is_err());
        assert!(ks_statistic(&[1.0, 0.0], |x| x).is_err());
    }

    #[test]
    fn kolmogorov_quantile_level_001() {
        assert!((kolmogorov_quantile(0.01) - 1.6276236307187293).abs() < 1e-9);
    }

    #[test]
    fn stick_beta_mean() {
        let c0 = 2.5;
        let mut rng = RngStream::new(21, 0);
        let n = 100_000usize;
        let draws: Vec<f64> = (0..n).map(|_| sample_stick(c0, &mut rng).unwrap()).collect();
        let m = crate::util::mean(&draws);
        let expect = 1.0 / (1.0 + c0);
        // Var Beta(1,c0) = c0 / ((1+c0)^2 (2+c0)).
        let se = (c0 / ((1.0 + c0).powi(2) * (2.0 + c0)) / n as f64).sqrt();
        assert!((m - expect).abs() < 3.0 * se, "stick mean {m} vs {expect}");
    }

    #[test]
    fn stick_draws_match_beta_cdf() {
        let c0 = 1.0;
        let mut rng = RngStream::new(22, 0);
        let draws = sorted(
            (0..100_000)
                .map(|_| sample_stick(c0, &mut rng).unwrap())
                .collect(),
        );
        let d = ks_statistic(&draws, |v| beta_1_c0_cdf(v, c0)).unwrap();
        assert!(d < ks_critical(draws.len(), 0.01), "KS {d}");
    }
}
