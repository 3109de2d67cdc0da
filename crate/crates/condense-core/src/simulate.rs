//! Synthetic truth library, dataset generation, and a numerical checker
//! for the local Hölder envelope condition.
//!
//! Built-in truths are smooth Gaussian-based families on the unit cube
//! with uniform design density; each declares the constants of its
//! exponential tail bound so the bound can be verified numerically.

use std::fmt;
use std::sync::Arc;

use crate::data::Dataset;
use crate::dist::{log_normal_kernel, sample_std_normal};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Tail envelope `f0(y|x) <= scale * exp(-b0 ||y||^tau)` for large `||y||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    pub b0: f64,
    pub tau: f64,
    pub scale: f64,
}

/// A user-supplied truth: conditional density plus a sampler.
#[derive(Clone)]
pub struct CustomTruth {
    pub name: String,
    pub density: Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>,
    pub sampler: Arc<dyn Fn(&[f64], &mut RngStream) -> Vec<f64> + Send + Sync>,
}

impl fmt::Debug for CustomTruth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomTruth").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone)]
pub enum TruthFamily {
    /// `y | x ~ N(sin(2 pi x1), noise^2)` on d_x = 1.
    T1SineGaussian { noise: f64 },
    /// Two-component location mixture whose shape skews with x1:
    /// `0.5 N(-1 + x1, s1^2) + 0.5 N(1 - x1, s2^2)`.
    T2XMix { s1: f64, s2: f64 },
    /// T1's conditional law embedded in d_x = 3; x2 and x3 are ignored.
    T3Irrelevant { noise: f64 },
    Custom(CustomTruth),
}

/// A known ground-truth conditional density and uniform-cube design.
#[derive(Debug, Clone)]
pub struct TruthSpec {
    pub family: TruthFamily,
    pub d_x: usize,
    pub d_y: usize,
    /// Number of leading covariates the density actually depends on.
    pub relevant_dims: usize,
    pub tail: TailBound,
}

impl TruthSpec {
    pub fn t1() -> Self {
        TruthSpec {
            family: TruthFamily::T1SineGaussian { noise: 0.3 },
            d_x: 1,
            d_y: 1,
            relevant_dims: 1,
            tail: TailBound {
                b0: 2.0,
                tau: 2.0,
                scale: 50.0,
            },
        }
    }

    pub fn t2() -> Self {
        TruthSpec {
            family: TruthFamily::T2XMix { s1: 0.25, s2: 0.5 },
            d_x: 1,
            d_y: 1,
            relevant_dims: 1,
            tail: TailBound {
                b0: 1.0,
                tau: 2.0,
                scale: 10.0,
            },
        }
    }

    pub fn t3() -> Self {
        TruthSpec {
            family: TruthFamily::T3Irrelevant { noise: 0.3 },
            d_x: 3,
            d_y: 1,
            relevant_dims: 1,
            tail: TailBound {
                b0: 2.0,
                tau: 2.0,
                scale: 50.0,
            },
        }
    }

    pub fn custom(custom: CustomTruth, d_x: usize, d_y: usize, relevant_dims: usize) -> Self {
        TruthSpec {
            family: TruthFamily::Custom(custom),
            d_x,
            d_y,
            relevant_dims,
            tail: TailBound {
                b0: 1.0,
                tau: 1.0,
                scale: 100.0,
            },
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "t1" | "T1" | "t1_sine_gaussian" => Ok(TruthSpec::t1()),
            "t2" | "T2" | "t2_xmix" => Ok(TruthSpec::t2()),
            "t3" | "T3" | "t3_irrelevant" => Ok(TruthSpec::t3()),
            other => Err(Error::config(format!(
                "unknown truth family '{other}' (expected t1, t2 or t3)"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        match &self.family {
            TruthFamily::T1SineGaussian { .. } => "t1_sine_gaussian",
            TruthFamily::T2XMix { .. } => "t2_xmix",
            TruthFamily::T3Irrelevant { .. } => "t3_irrelevant",
            TruthFamily::Custom(c) => &c.name,
        }
    }
}

fn check_cube(x: &[f64], d_x: usize) -> Result<()> {
    if x.len() != d_x {
        return Err(Error::domain(format!(
            "x has {} components, truth expects {d_x}",
            x.len()
        )));
    }
    if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::domain(format!("x = {x:?} outside the unit cube")));
    }
    Ok(())
}

/// Evaluate the truth's conditional density `f0(y|x)`.
pub fn truth_density(truth: &TruthSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    check_cube(x, truth.d_x)?;
    if y.len() != truth.d_y {
        return Err(Error::domain(format!(
            "y has {} components, truth expects {}",
            y.len(),
            truth.d_y
        )));
    }
    match &truth.family {
        TruthFamily::T1SineGaussian { noise } | TruthFamily::T3Irrelevant { noise } => {
            let mean = (2.0 * std::f64::consts::PI * x[0]).sin();
            Ok(log_normal_kernel((y[0] - mean).powi(2), *noise, 1).exp())
        }
        TruthFamily::T2XMix { s1, s2 } => {
            let m1 = -1.0 + x[0];
            let m2 = 1.0 - x[0];
            let p1 = log_normal_kernel((y[0] - m1).powi(2), *s1, 1).exp();
            let p2 = log_normal_kernel((y[0] - m2).powi(2), *s2, 1).exp();
            Ok(0.5 * p1 + 0.5 * p2)
        }
        TruthFamily::Custom(c) => Ok((c.density)(x, y)),
    }
}

fn sample_y(truth: &TruthSpec, x: &[f64], rng: &mut RngStream) -> Vec<f64> {
    match &truth.family {
        TruthFamily::T1SineGaussian { noise } | TruthFamily::T3Irrelevant { noise } => {
            let mean = (2.0 * std::f64::consts::PI * x[0]).sin();
            vec![mean + noise * sample_std_normal(rng)]
        }
        TruthFamily::T2XMix { s1, s2 } => {
            let (m, s) = if rng.uniform() < 0.5 {
                (-1.0 + x[0], *s1)
            } else {
                (1.0 - x[0], *s2)
            };
            vec![m + s * sample_std_normal(rng)]
        }
        TruthFamily::Custom(c) => (c.sampler)(x, rng),
    }
}

/// Draw `n` i.i.d. records: `x ~ uniform cube`, `y ~ f0(.|x)`.
pub fn generate_dataset(truth: &TruthSpec, n: usize, rng: &mut RngStream) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::domain("generate_dataset needs n >= 1"));
    }
    let mut data = Dataset::new(truth.d_x, truth.d_y);
    let mut x = vec![0.0; truth.d_x];
    for _ in 0..n {
        for v in x.iter_mut() {
            *v = rng.uniform();
        }
        let y = sample_y(truth, &x, rng);
        data.push(&x, &y)?;
    }
    Ok(data)
}

/// Numerically verify the declared tail bound on `||y|| in [3, 8]` over a
/// small grid of covariate points.
pub fn check_tail_bound(truth: &TruthSpec) -> Result<bool> {
    if truth.d_y != 1 {
        return Err(Error::domain("tail check implemented for d_y = 1"));
    }
    let xs = 9usize;
    for ix in 0..xs {
        let x = vec![(ix as f64 + 0.5) / xs as f64; truth.d_x];
        for k in 0..=100 {
            let r = 3.0 + 5.0 * k as f64 / 100.0;
            for y in [r, -r] {
                let f = truth_density(truth, &x, &[y])?;
                let bound = truth.tail.scale * (-truth.tail.b0 * r.powf(truth.tail.tau)).exp();
                if f > bound {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Central-difference step for the Hölder checker.
const FD_STEP: f64 = 1e-4;

/// Report of the envelope check: the largest observed ratio
/// `|D^k f(z+dz) - D^k f(z)| / (L(z) e^{tau ||dz||^2} ||dz||^{beta - <beta>})`.
#[derive(Debug, Clone)]
pub struct HolderReport {
    pub max_ratio: f64,
    pub pass: bool,
    pub inconclusive: bool,
    /// Probes whose finite-difference signal drowned in rounding noise.
    pub noisy_probes: usize,
    pub probes: usize,
}

/// Largest non-negative integer strictly smaller than beta.
pub fn holder_floor(beta: f64) -> usize {
    if beta <= 0.0 {
        return 0;
    }
    let c = beta.ceil();
    if (c - beta).abs() < f64::EPSILON * beta.abs() || c == beta {
        (beta as usize).saturating_sub(1).max(0)
    } else {
        beta.floor() as usize
    }
}

fn stencil(order: usize) -> &'static [(i32, f64)] {
    match order {
        0 => &[(0, 1.0)],
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        _ => panic!("stencil order {order} not supported"),
    }
}

/// Mixed partial derivative `D^k f` by nested central differences, along
/// with the maximum |f| magnitude seen (for the noise estimate).
fn mixed_partial(f: &dyn Fn(&[f64]) -> f64, z: &[f64], k: &[usize], h: f64) -> (f64, f64) {
    match k.iter().position(|&ki| ki > 0) {
        None => {
            let v = f(z);
            (v, v.abs())
        }
        Some(dim) => {
            let order = k[dim];
            let mut rest = k.to_vec();
            rest[dim] = 0;
            let mut acc = 0.0;
            let mut scale = 0.0f64;
            let mut zz = z.to_vec();
            for &(off, coef) in stencil(order) {
                zz[dim] = z[dim] + off as f64 * h;
                let (v, s) = mixed_partial(f, &zz, &rest, h);
                acc += coef * v;
                scale = scale.max(s);
            }
            (acc / h.powi(order as i32), scale)
        }
    }
}

fn multi_indices(dim: usize, total: usize) -> Vec<Vec<usize>> {
    if dim == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in multi_indices(dim - 1, total - first) {
            let mut k = vec![first];
            k.append(&mut rest);
            out.push(k);
        }
    }
    out
}

/// Check the local Hölder envelope on sampled probe pairs `(z, dz)`:
/// every mixed partial of order `<beta>` must satisfy
/// `|D^k f(z+dz) - D^k f(z)| <= L(z) e^{tau ||dz||^2} ||dz||^{beta - <beta>}`.
///
/// The check passes when the maximum ratio stays below `1 + 1e-2`. Probes
/// whose finite-difference estimate is dominated by rounding noise are
/// skipped and counted; when most probes are noisy the report is flagged
/// inconclusive.
pub fn holder_check(
    f: &dyn Fn(&[f64]) -> f64,
    envelope: &dyn Fn(&[f64]) -> f64,
    beta: f64,
    tau_env: f64,
    probes: &[(Vec<f64>, Vec<f64>)],
) -> Result<HolderReport> {
    if !(beta > 0.0) {
        return Err(Error::domain(format!("beta must be positive, got {beta}")));
    }
    if tau_env < 0.0 {
        return Err(Error::domain("tau_env must be non-negative"));
    }
    if probes.is_empty() {
        return Err(Error::domain("holder_check needs at least one probe"));
    }
    let floor = holder_floor(beta);
    if floor > 3 {
        return Err(Error::domain(format!(
            "derivative order {floor} exceeds the supported maximum of 3"
        )));
    }
    let frac = beta - floor as f64;
    let dim = probes[0].0.len();
    let indices = multi_indices(dim, floor);

    let mut max_ratio: f64 = 0.0;
    let mut noisy = 0usize;
    for (z, dz) in probes {
        if z.len() != dim || dz.len() != dim {
            return Err(Error::domain("probe dimensions are inconsistent"));
        }
        let norm = dz.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(1e-3..=1.0).contains(&norm) {
            return Err(Error::domain(format!(
                "probe displacement norm {norm} outside [1e-3, 1]"
            )));
        }
        let z_shift: Vec<f64> = z.iter().zip(dz).map(|(a, b)| a + b).collect();
        let denom = envelope(z) * (tau_env * norm * norm).exp() * norm.powf(frac);
        let mut probe_noisy = true;
        for k in &indices {
            let (d0, s0) = mixed_partial(f, z, k, FD_STEP);
            let (d1, s1) = mixed_partial(f, &z_shift, k, FD_STEP);
            let diff = (d1 - d0).abs();
            // Rounding noise of a nested central difference of order m is
            // roughly eps * |f| * (sum |coef| / h)^m.
            let noise =
                2.0 * f64::EPSILON * s0.max(s1) * (4.0f64 / FD_STEP).powi(floor as i32) + 1e-307;
            if diff > 20.0 * noise {
                probe_noisy = false;
                if denom > 0.0 {
                    max_ratio = max_ratio.max(diff / denom);
                }
            }
        }
        if probe_noisy {
            noisy += 1;
        }
    }
    let inconclusive = noisy * 2 > probes.len();
    Ok(HolderReport {
        max_ratio,
        pass: !inconclusive && max_ratio <= 1.0 + 1e-2,
        inconclusive,
        noisy_probes: noisy,
        probes: probes.len(),
    })
}
