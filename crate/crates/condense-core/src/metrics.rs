//! q-integrated discrepancy functionals between conditional densities:
//! L1, Hellinger, Kullback-Leibler and the second log-ratio moment V2.
//!
//! The x-integration is a weighted sum over design nodes (Monte Carlo
//! draws from q, or a grid with q evaluated into the weights); the
//! y-integration is a Riemann sum over a uniform bounded grid. KL and V2
//! return `f64::INFINITY` as the sentinel when the second density vanishes
//! somewhere the first is positive.

use crate::error::{Error, Result};

/// Floor applied to positive densities before taking logs.
const LOG_CLIP: f64 = 1e-300;

/// Uniform y-grid `start + k*step`, `k = 0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct YGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl YGrid {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        if !(step > 0.0) || len < 2 {
            return Err(Error::domain("y grid needs positive spacing and >= 2 nodes"));
        }
        Ok(YGrid { start, step, len })
    }

    /// Evenly spaced grid covering `[lo, hi]` with `len` nodes.
    pub fn spanning(lo: f64, hi: f64, len: usize) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::domain("y grid range must have hi > lo"));
        }
        YGrid::new(lo, (hi - lo) / (len - 1) as f64, len)
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |k| self.start + k as f64 * self.step)
    }

    pub fn end(&self) -> f64 {
        self.start + (self.len - 1) as f64 * self.step
    }

    /// Grid with the same range and half the spacing.
    pub fn refined(&self) -> YGrid {
        YGrid {
            start: self.start,
            step: self.step / 2.0,
            len: self.len * 2 - 1,
        }
    }
}

/// Quadrature rule approximating `integral(. q(x) dx) dy`.
#[derive(Debug, Clone)]
pub struct QuadratureSpec {
    pub x_nodes: Vec<Vec<f64>>,
    pub x_weights: Vec<f64>,
    pub y_grid: YGrid,
    pub tolerance: f64,
}

impl QuadratureSpec {
    pub fn new(
        x_nodes: Vec<Vec<f64>>,
        x_weights: Vec<f64>,
        y_grid: YGrid,
        tolerance: f64,
    ) -> Result<Self> {
        if x_nodes.is_empty() || x_nodes.len() != x_weights.len() {
            return Err(Error::domain("x nodes and weights must be non-empty and aligned"));
        }
        if x_weights.iter().any(|&w| w < 0.0) {
            return Err(Error::domain("x weights must be non-negative"));
        }
        let total: f64 = x_weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::domain(format!(
                "x weights must sum to 1, got {total}"
            )));
        }
        if !(tolerance > 0.0) {
            return Err(Error::domain("tolerance must be positive"));
        }
        Ok(QuadratureSpec {
            x_nodes,
            x_weights,
            y_grid,
            tolerance,
        })
    }

    /// Equal-weight design nodes (the Monte Carlo estimator of the
    /// q-integral when nodes are draws from q).
    pub fn mc_design(x_nodes: Vec<Vec<f64>>, y_grid: YGrid, tolerance: f64) -> Result<Self> {
        let m = x_nodes.len();
        if m == 0 {
            return Err(Error::domain("need at least one design node"));
        }
        let w = vec![1.0 / m as f64; m];
        QuadratureSpec::new(x_nodes, w, y_grid, tolerance)
    }

    /// Uniform grid on [0,1] for one-dimensional covariates under the
    /// uniform design density.
    pub fn uniform_grid_1d(m: usize, y_grid: YGrid, tolerance: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("need at least one x node"));
        }
        let nodes = (0..m)
            .map(|k| vec![(k as f64 + 0.5) / m as f64])
            .collect();
        QuadratureSpec::mc_design(nodes, y_grid, tolerance)
    }

    pub fn refined(&self) -> QuadratureSpec {
        QuadratureSpec {
            x_nodes: self.x_nodes.clone(),
            x_weights: self.x_weights.clone(),
            y_grid: self.y_grid.refined(),
            tolerance: self.tolerance,
        }
    }
}

fn check_mass<F>(f: &F, quad: &QuadratureSpec, label: &str) -> Result<()>
where
    F: Fn(&[f64], f64) -> f64 + ?Sized,
{
    let h = quad.y_grid.step;
    for x in &quad.x_nodes {
        let mass: f64 = quad.y_grid.points().map(|y| f(x, y) * h).sum();
        if mass < 1.0 - 10.0 * quad.tolerance {
            return Err(Error::TruncatedSupport(format!(
                "{label} integrates to {mass:.6} on the y grid at x = {x:?}; widen the grid"
            )));
        }
    }
    Ok(())
}

/// q-integrated L1 distance `integral ||f2 - f1||_{1,x} q(x) dx`.
pub fn l1_q<F1, F2>(f1: &F1, f2: &F2, quad: &QuadratureSpec) -> Result<f64>
where
    F1: Fn(&[f64], f64) -> f64 + ?Sized,
    F2: Fn(&[f64], f64) -> f64 + ?Sized,
{
    check_mass(f1, quad, "f1")?;
    check_mass(f2, quad, "f2")?;
    let h = quad.y_grid.step;
    let mut total = 0.0;
    for (x, &w) in quad.x_nodes.iter().zip(&quad.x_weights) {
        let inner: f64 = quad.y_grid.points().map(|y| (f1(x, y) - f2(x, y)).abs() * h).sum();
        total += w * inner;
    }
    Ok(total)
}

/// q-integrated Hellinger distance: the square root of
/// `integral ||sqrt(f2) - sqrt(f1)||^2_{2,x} q(x) dx`.
pub fn hellinger_q<F1, F2>(f1: &F1, f2: &F2, quad: &QuadratureSpec) -> Result<f64>
where
    F1: Fn(&[f64], f64) -> f64 + ?Sized,
    F2: Fn(&[f64], f64) -> f64 + ?Sized,
{
    check_mass(f1, quad, "f1")?;
    check_mass(f2, quad, "f2")?;
    let h = quad.y_grid.step;
    let mut total = 0.0;
    for (x, &w) in quad.x_nodes.iter().zip(&quad.x_weights) {
        let inner: f64 = quad
            .y_grid
            .points()
            .map(|y| {
                let d = f1(x, y).max(0.0).sqrt() - f2(x, y).max(0.0).sqrt();
                d * d * h
            })
            .sum();
        total += w * inner;
    }
    Ok(total.max(0.0).sqrt())
}

fn log_ratio_moment<F0, F>(
    f0: &F0,
    f: &F,
    quad: &QuadratureSpec,
    power: i32,
) -> Result<f64>
where
    F0: Fn(&[f64], f64) -> f64 + ?Sized,
    F: Fn(&[f64], f64) -> f64 + ?Sized,
{
    check_mass(f0, quad, "f0")?;
    let h = quad.y_grid.step;
    let mut total = 0.0;
    for (x, &w) in quad.x_nodes.iter().zip(&quad.x_weights) {
        let mut inner = 0.0;
        for y in quad.y_grid.points() {
            let p0 = f0(x, y);
            if p0 <= 0.0 {
                continue;
            }
            let p = f(x, y);
            if p <= 0.0 {
                return Ok(f64::INFINITY);
            }
            let lr = (p0.max(LOG_CLIP)).ln() - (p.max(LOG_CLIP)).ln();
            inner += p0 * lr.abs().powi(power) * lr.signum().powi(power) * h;
        }
        total += w * inner;
    }
    Ok(total.max(0.0))
}

/// q-integrated Kullback-Leibler divergence of `f` from `f0`; negative
/// round-off is clipped to 0 and support violations return infinity.
pub fn kl_q<F0, F>(f0: &F0, f: &F, quad: &QuadratureSpec) -> Result<f64>
where
    F0: Fn(&[f64], f64) -> f64 + ?Sized,
    F: Fn(&[f64], f64) -> f64 + ?Sized,
{
    log_ratio_moment(f0, f, quad, 1)
}

/// q-integrated second moment of the log ratio `log(f0/f)` under `f0`.
pub fn v2_q<F0, F>(f0: &F0, f: &F, quad: &QuadratureSpec) -> Result<f64>
where
    F0: Fn(&[f64], f64) -> f64 + ?Sized,
    F: Fn(&[f64], f64) -> f64 + ?Sized,
{
    log_ratio_moment(f0, f, quad, 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::normal_pdf;

    fn std_quad() -> QuadratureSpec {
        let y = YGrid::spanning(-9.0, 10.0, 1901).unwrap();
        QuadratureSpec::uniform_grid_1d(4, y, 1e-3).unwrap()
    }

    fn gauss(mean: f64) -> impl Fn(&[f64], f64) -> f64 {
        move |_x: &[f64], y: f64| normal_pdf(&[y], &[mean], 1.0).unwrap()
    }

    #[test]
    fn identical_arguments_give_zero() {
        let f = gauss(0.0);
        let quad = std_quad();
        assert_eq!(l1_q(&f, &f, &quad).unwrap(), 0.0);
        assert_eq!(hellinger_q(&f, &f, &quad).unwrap(), 0.0);
        assert_eq!(kl_q(&f, &f, &quad).unwrap(), 0.0);
        assert_eq!(v2_q(&f, &f, &quad).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_closed_forms() {
        let f0 = gauss(0.0);
        let f1 = gauss(1.0);
        let quad = std_quad();
        // L1 = 2 (2 Phi(1/2) - 1).
        let l1 = l1_q(&f0, &f1, &quad).unwrap();
        assert!((l1 - 0.7658498316884095).abs() < 1e-3, "l1 {l1}");
        // h^2 = 2 (1 - exp(-1/8)).
        let hel = hellinger_q(&f0, &f1, &quad).unwrap();
        assert!((hel - 0.48477371842921546).abs() < 1e-3, "hellinger {hel}");
        let kl = kl_q(&f0, &f1, &quad).unwrap();
        assert!((kl - 0.5).abs() < 1e-3, "kl {kl}");
        let v2 = v2_q(&f0, &f1, &quad).unwrap();
        assert!((v2 - 1.25).abs() < 2e-3, "v2 {v2}");
    }

    #[test]
    fn disjoint_supports_saturate_l1() {
        // Two disjoint unit boxes inside the grid range.
        let f1 = |_x: &[f64], y: f64| if (0.0..1.0).contains(&y) { 1.0 } else { 0.0 };
        let f2 = |_x: &[f64], y: f64| if (3.0..4.0).contains(&y) { 1.0 } else { 0.0 };
        let y = YGrid::spanning(-1.0, 5.0, 6001).unwrap();
        let quad = QuadratureSpec::uniform_grid_1d(2, y, 1e-2).unwrap();
        let l1 = l1_q(&f1, &f2, &quad).unwrap();
        assert!((l1 - 2.0).abs() < 1e-2, "l1 {l1}");
    }

    #[test]
    fn vanishing_support_hits_sentinel() {
        let f0 = gauss(0.0);
        let f = |_x: &[f64], y: f64| {
            if y > -1.0 {
                normal_pdf(&[y], &[0.0], 1.0).unwrap() / 0.8413447460685429
            } else {
                0.0
            }
        };
        let quad = std_quad();
        assert!(kl_q(&f0, &f, &quad).unwrap().is_infinite());
        assert!(v2_q(&f0, &f, &quad).unwrap().is_infinite());
    }

    #[test]
    fn truncated_grid_is_reported() {
        let f = gauss(0.0);
        let y = YGrid::spanning(-0.5, 0.5, 101).unwrap();
        let quad = QuadratureSpec::uniform_grid_1d(2, y, 1e-3).unwrap();
        match l1_q(&f, &f, &quad) {
            Err(Error::TruncatedSupport(_)) => {}
            other => panic!("expected truncated-support error, got {other:?}"),
        }
    }

    #[test]
    fn symmetry_of_l1_and_hellinger() {
        let f0 = gauss(0.0);
        let f1 = gauss(0.7);
        let quad = std_quad();
        let a = l1_q(&f0, &f1, &quad).unwrap();
        let b = l1_q(&f1, &f0, &quad).unwrap();
        assert_eq!(a, b);
        let ha = hellinger_q(&f0, &f1, &quad).unwrap();
        let hb = hellinger_q(&f1, &f0, &quad).unwrap();
        assert_eq!(ha, hb);
    }

    #[test]
    fn grid_refinement_is_stable() {
        let f0 = gauss(0.0);
        let f1 = gauss(1.0);
        let quad = std_quad();
        let fine = quad.refined();
        for (coarse_v, fine_v) in [
            (l1_q(&f0, &f1, &quad).unwrap(), l1_q(&f0, &f1, &fine).unwrap()),
            (
                hellinger_q(&f0, &f1, &quad).unwrap(),
                hellinger_q(&f0, &f1, &fine).unwrap(),
            ),
            (kl_q(&f0, &f1, &quad).unwrap(), kl_q(&f0, &f1, &fine).unwrap()),
            (v2_q(&f0, &f1, &quad).unwrap(), v2_q(&f0, &f1, &fine).unwrap()),
        ] {
            assert!((coarse_v - fine_v).abs() < quad.tolerance);
        }
    }
}
