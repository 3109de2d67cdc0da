//! Small numeric helpers shared across modules.

/// log(sum(exp(x))) with max-shift stabilization. Returns -inf on empty
/// input or all -inf entries.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (n-1) sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    assert!(n >= 2, "variance needs at least two observations");
    let m = mean(xs);
    xs.iter().map(|&x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Median by sorting a copy; the average of the two middle order
/// statistics for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ordinary least squares fit of `y ~ a + b x`.
///
/// Returns `(slope, intercept, slope_standard_error)`. The standard error
/// is NaN with fewer than three points.
pub fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|&v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let se = if x.len() >= 3 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(&a, &b)| (b - intercept - slope * a).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    (slope, intercept, se)
}

/// Effective sample size of a scalar trace via Geyer's initial monotone
/// positive sequence estimator, capped at the trace length.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(xs);
    let c0: f64 = xs.iter().map(|&x| (x - m).powi(2)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return n as f64;
    }
    let autocov = |lag: usize| -> f64 {
        (0..n - lag)
            .map(|i| (xs[i] - m) * (xs[i + lag] - m))
            .sum::<f64>()
            / n as f64
    };
    let mut tau = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0usize;
    loop {
        if lag + 1 >= n {
            break;
        }
        let pair = (autocov(lag) + autocov(lag + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    // tau counts lag 0 twice through the first pair sum.
    let act = (tau - 1.0).max(1.0);
    (n as f64 / act).min(n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn logsumexp_matches_naive_in_safe_range() {
        let xs: [f64; 4] = [0.3, -1.2, 2.0, 0.0];
        let naive: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((logsumexp(&xs) - naive).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_survives_large_magnitudes() {
        let xs = [-1000.0, -1000.5];
        let v = logsumexp(&xs);
        assert!(v.is_finite());
        assert!((v - (-1000.0 + (1.0f64 + (-0.5f64).exp()).ln())).abs() < 1e-12);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn ols_recovers_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 - 0.7 * v).collect();
        let (slope, intercept, se) = ols_slope(&x, &y);
        assert!((slope + 0.7).abs() < 1e-12);
        assert!((intercept - 2.5).abs() < 1e-12);
        assert!(se.abs() < 1e-10);
    }

    #[test]
    fn ess_near_n_for_iid_draws() {
        let mut rng = RngStream::new(5, 0);
        let xs: Vec<f64> = (0..4000).map(|_| rng.uniform()).collect();
        let ess = effective_sample_size(&xs);
        assert!(ess > 2000.0, "iid ESS too low: {ess}");
    }

    #[test]
    fn ess_small_for_strongly_correlated_chain() {
        let mut rng = RngStream::new(6, 0);
        let mut x = 0.0;
        let xs: Vec<f64> = (0..4000)
            .map(|_| {
                x = 0.99 * x + 0.1 * (rng.uniform() - 0.5);
                x
            })
            .collect();
        let ess = effective_sample_size(&xs);
        assert!(ess < 500.0, "AR(0.99) ESS suspiciously high: {ess}");
    }
}
