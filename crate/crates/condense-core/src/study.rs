//! End-to-end pipelines: fit-from-data, the consistency-trend study and
//! the dimension-reduction study.
//!
//! A study row simulates a dataset, runs the full fit pipeline
//! (hyperparameter estimation, clamping, chain, posterior-mean density)
//! and scores the estimate against the known truth with the q-integrated
//! L1 and Hellinger distances. Rows execute concurrently on disjoint RNG
//! streams; row seeds are mixed from (study seed, truth, n, replicate) so
//! any row can be reproduced in isolation.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::RunConfig;
use crate::data::Dataset;
use crate::eb::{clamp_to_kn, estimate_hyperparams, kn_box_with, EBReport};
use crate::error::{Error, Result};
use crate::inference::{
    posterior_mean_density, run_chain_with_deadline, ChainConfig, DensityTable, PosteriorDraws,
};
use crate::metrics::{hellinger_q, l1_q, QuadratureSpec, YGrid};
use crate::model::HyperParams;
use crate::rng::{mix_seed, RngStream};
use crate::simulate::{generate_dataset, truth_density, TruthSpec};
use crate::util::{median, ols_slope};

/// Stream ids carved out of each row seed.
const STREAM_DATA: u64 = 1;
const STREAM_XGRID: u64 = 2;
const STREAM_XEVAL: u64 = 3;

/// Everything produced by one fit.
#[derive(Debug)]
pub struct FitOutput {
    pub table: DensityTable,
    pub draws: PosteriorDraws,
    pub eb: EBReport,
    pub chain_config: ChainConfig,
}

/// Resolve gamma for a dataset: the config's fixed override when all
/// components are pinned, otherwise the moment estimators, clamped into
/// the K_n box either way.
pub fn select_gamma(data: &Dataset, cfg: &RunConfig) -> Result<EBReport> {
    let raw: HyperParams = match cfg.prior.fixed_gamma() {
        Some(g) => g?,
        None => estimate_hyperparams(data, cfg.prior.alpha_shape)?,
    };
    let kn = kn_box_with(data.len(), data.d_y(), &cfg.prior.kn_constants())?;
    clamp_to_kn(&raw, &kn)
}

/// Grid on which a fitted density is tabulated: the response range padded
/// by six times the largest posterior bandwidth.
pub fn fit_y_grid(data: &Dataset, draws: &PosteriorDraws, points: usize) -> Result<YGrid> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..data.len() {
        let y = data.y_row(i)[0];
        lo = lo.min(y);
        hi = hi.max(y);
    }
    let pad = 6.0 * draws.max_sigma();
    YGrid::spanning(lo - pad, hi + pad, points.max(2))
}

fn fit_x_nodes(d_x: usize, cfg: &RunConfig, seed: u64) -> Vec<Vec<f64>> {
    if d_x == 1 {
        let m = cfg.study.fit_x_grid.max(1);
        (0..m).map(|k| vec![(k as f64 + 0.5) / m as f64]).collect()
    } else {
        let mut rng = RngStream::new(seed, STREAM_XGRID);
        (0..cfg.study.fit_x_grid.max(1))
            .map(|_| (0..d_x).map(|_| rng.uniform()).collect())
            .collect()
    }
}

/// Full pipeline: estimate and clamp gamma, run the chain, tabulate the
/// posterior-mean conditional density.
pub fn fit_dataset(data: &Dataset, cfg: &RunConfig) -> Result<FitOutput> {
    fit_dataset_on_nodes(data, cfg, None, None)
}

/// As [`fit_dataset`] with explicit evaluation nodes and a deadline
/// (used by study rows).
pub fn fit_dataset_on_nodes(
    data: &Dataset,
    cfg: &RunConfig,
    x_nodes: Option<&[Vec<f64>]>,
    deadline: Option<Instant>,
) -> Result<FitOutput> {
    if data.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "fit needs at least 2 records, got {}",
            data.len()
        )));
    }
    if data.d_y() != 1 {
        return Err(Error::config("density tables are implemented for d_y = 1"));
    }
    let eb = select_gamma(data, cfg)?;
    let prior = cfg
        .prior
        .build_prior(data.d_x(), data.d_y(), eb.clamped_gamma.clone())?;
    let chain_config = cfg.chain.chain_config()?;
    let draws = run_chain_with_deadline(data, &prior, &chain_config, deadline)?;
    let y_grid = fit_y_grid(data, &draws, cfg.study.y_grid_points)?;
    let owned_nodes;
    let nodes: &[Vec<f64>] = match x_nodes {
        Some(nodes) => nodes,
        None => {
            owned_nodes = fit_x_nodes(data.d_x(), cfg, chain_config.seed);
            &owned_nodes
        }
    };
    let table = posterior_mean_density(&draws.draws, nodes, &y_grid)?;
    Ok(FitOutput {
        table,
        draws,
        eb,
        chain_config,
    })
}

/// View a density table as a conditional density function over its own
/// x nodes (exact node lookup, linear interpolation in y).
pub fn table_density_fn(table: &DensityTable) -> impl Fn(&[f64], f64) -> f64 + '_ {
    move |x: &[f64], y: f64| {
        let ix = table
            .x_nodes
            .iter()
            .position(|node| node.as_slice() == x)
            .expect("query point is not a table node");
        table.interpolate(ix, y)
    }
}

/// One (n, replicate) cell of a study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyRow {
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub mode: String,
    pub l1_error: f64,
    pub hellinger: f64,
    pub wall_time_s: f64,
    pub status: String,
}

impl StudyRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Outcome of a consistency-trend study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyResult {
    pub truth: String,
    pub rows: Vec<StudyRow>,
    /// Log-log OLS slope of median L1 error on n.
    pub slope: f64,
    pub slope_ci: [f64; 2],
    /// `-beta / (2 beta + d0)` with `d0 = relevant covariates + d_y`.
    pub theoretical_exponent: f64,
    pub median_l1_by_n: Vec<(usize, f64)>,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

/// Paired outcome of the dimension-reduction study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimredResult {
    pub base: StudyResult,
    pub embedded: StudyResult,
    /// Median-error ratio embedded/base at each shared n.
    pub ratio_by_n: Vec<(usize, f64)>,
}

fn truth_tag(truth: &TruthSpec) -> u64 {
    truth
        .name()
        .bytes()
        .fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64))
}

fn eval_nodes(truth: &TruthSpec, cfg: &RunConfig) -> Vec<Vec<f64>> {
    let mut rng = RngStream::new(cfg.study.seed, STREAM_XEVAL);
    (0..cfg.study.x_eval_nodes.max(1))
        .map(|_| (0..truth.d_x).map(|_| rng.uniform()).collect())
        .collect()
}

fn run_row(
    truth: &TruthSpec,
    n: usize,
    replicate: usize,
    cfg: &RunConfig,
    nodes: &[Vec<f64>],
) -> StudyRow {
    let row_seed = mix_seed(&[cfg.study.seed, truth_tag(truth), n as u64, replicate as u64]);
    let start = Instant::now();
    let deadline = (cfg.study.timeout_secs > 0)
        .then(|| start + Duration::from_secs(cfg.study.timeout_secs));
    let mode = cfg.chain.mode.clone();

    let outcome = (|| -> Result<(f64, f64)> {
        let mut data_rng = RngStream::new(row_seed, STREAM_DATA);
        let data = generate_dataset(truth, n, &mut data_rng)?;
        let mut row_cfg = cfg.clone();
        row_cfg.chain.seed = row_seed;
        let fit = fit_dataset_on_nodes(&data, &row_cfg, Some(nodes), deadline)?;
        let quad = QuadratureSpec::mc_design(
            nodes.to_vec(),
            fit.table.y_grid.clone(),
            cfg.study.tolerance,
        )?;
        let f_hat = table_density_fn(&fit.table);
        let f_true = |x: &[f64], y: f64| truth_density(truth, x, &[y]).unwrap_or(0.0);
        let l1 = l1_q(&f_hat, &f_true, &quad)?;
        let hel = hellinger_q(&f_hat, &f_true, &quad)?;
        Ok((l1, hel))
    })();

    let wall = start.elapsed().as_secs_f64();
    match outcome {
        Ok((l1, hel)) => StudyRow {
            n,
            replicate,
            seed: row_seed,
            mode,
            l1_error: l1,
            hellinger: hel,
            wall_time_s: wall,
            status: "ok".into(),
        },
        Err(e) => StudyRow {
            n,
            replicate,
            seed: row_seed,
            mode,
            l1_error: f64::NAN,
            hellinger: f64::NAN,
            wall_time_s: wall,
            status: format!("failed: {e}"),
        },
    }
}

fn median_errors_by_n(rows: &[StudyRow], n_grid: &[usize]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for &n in n_grid {
        let errs: Vec<f64> = rows
            .iter()
            .filter(|r| r.n == n && r.ok())
            .map(|r| r.l1_error)
            .collect();
        if !errs.is_empty() {
            out.push((n, median(&errs)));
        }
    }
    out
}

fn fit_slope(medians: &[(usize, f64)]) -> Result<(f64, [f64; 2])> {
    if medians.len() < 3 {
        return Err(Error::config(format!(
            "slope needs medians at >= 3 distinct n values, have {}",
            medians.len()
        )));
    }
    let lx: Vec<f64> = medians.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ly: Vec<f64> = medians.iter().map(|(_, e)| e.ln()).collect();
    let (slope, _, se) = ols_slope(&lx, &ly);
    let df = (medians.len() - 2) as f64;
    let t = StudentsT::new(0.0, 1.0, df)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(f64::NAN);
    let half = if se.is_finite() { t * se } else { f64::NAN };
    Ok((slope, [slope - half, slope + half]))
}

fn study_on_truth(truth: &TruthSpec, cfg: &RunConfig) -> Result<StudyResult> {
    let distinct: std::collections::BTreeSet<usize> = cfg.study.n_grid.iter().copied().collect();
    if distinct.len() < 3 {
        return Err(Error::config(format!(
            "study n_grid needs >= 3 distinct sample sizes, got {:?}",
            cfg.study.n_grid
        )));
    }
    if cfg.study.replicates == 0 {
        return Err(Error::config("study needs at least one replicate"));
    }
    if cfg.study.n_grid.iter().any(|&n| n < 2) {
        return Err(Error::config("every study n must be at least 2"));
    }

    let nodes = eval_nodes(truth, cfg);
    let cells: Vec<(usize, usize)> = cfg
        .study
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.study.replicates).map(move |r| (n, r)))
        .collect();

    let workers = cfg.study.workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    let mut rows: Vec<StudyRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(n, r)| run_row(truth, n, r, cfg, &nodes))
            .collect()
    });
    rows.sort_by_key(|r| (r.n, r.replicate));

    let failed = rows.iter().filter(|r| !r.ok()).count();
    if failed * 5 > rows.len() {
        return Err(Error::StudyFailureRate {
            failed,
            total: rows.len(),
        });
    }

    let medians = median_errors_by_n(&rows, &distinct.iter().copied().collect::<Vec<_>>());
    let (slope, slope_ci) = fit_slope(&medians)?;
    let d0 = (truth.relevant_dims + truth.d_y) as f64;
    let beta = cfg.study.beta_assumed;
    Ok(StudyResult {
        truth: truth.name().to_string(),
        rows,
        slope,
        slope_ci,
        theoretical_exponent: -beta / (2.0 * beta + d0),
        median_l1_by_n: medians,
        config_hash: cfg.hash(),
        seed: cfg.study.seed,
        version: crate::io::LIBRARY_VERSION.to_string(),
    })
}

/// Consistency-trend study on the configured truth: simulate, fit and
/// score every (n, replicate) cell, then regress log median error on
/// log n.
pub fn rate_study(cfg: &RunConfig) -> Result<StudyResult> {
    let truth = cfg.truth_spec()?;
    study_on_truth(&truth, cfg)
}

/// Paired study: the configured base truth against the embedded truth
/// with irrelevant covariates, reporting per-n error ratios and both
/// slopes.
pub fn dimred_study(cfg: &RunConfig) -> Result<DimredResult> {
    let base = cfg.truth_spec()?;
    let embedded = TruthSpec::by_name(&cfg.study.embedded_truth)?;
    let base_result = study_on_truth(&base, cfg)?;
    let embedded_result = study_on_truth(&embedded, cfg)?;
    let mut ratio_by_n = Vec::new();
    for &(n, base_med) in &base_result.median_l1_by_n {
        if let Some(&(_, emb_med)) = embedded_result
            .median_l1_by_n
            .iter()
            .find(|(m, _)| *m == n)
        {
            ratio_by_n.push((n, emb_med / base_med));
        }
    }
    Ok(DimredResult {
        base: base_result,
        embedded: embedded_result,
        ratio_by_n,
    })
}

/// result.csv rows for a study.
pub fn study_rows_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from("n,replicate,seed,mode,l1_error,hellinger,wall_time_s,status\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.n, r.replicate, r.seed, r.mode, r.l1_error, r.hellinger, r.wall_time_s, r.status
        ));
    }
    out
}
