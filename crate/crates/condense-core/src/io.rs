//! File formats: line-delimited draw records, fit/study manifests, and
//! density tables as CSV.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eb::EBReport;
use crate::error::{Error, Result};
use crate::inference::{
    BlockAcceptance, ChainCheckpoint, ChainConfig, DensityTable, PosteriorDraws, ProposalScales,
};
use crate::metrics::YGrid;
use crate::model::MixtureState;

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One chain draw as stored in `draws.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrawRecord {
    pub iteration: u64,
    pub sticks: Vec<f64>,
    pub weights: Vec<f64>,
    pub mu_x: Vec<Vec<f64>>,
    pub mu_y: Vec<Vec<f64>>,
    pub sigma: f64,
}

impl DrawRecord {
    pub fn from_state(state: &MixtureState, iteration: u64) -> Self {
        DrawRecord {
            iteration,
            sticks: state.sticks.clone(),
            weights: state.weights.clone(),
            mu_x: (0..state.n_components())
                .map(|j| state.mu_x_row(j).to_vec())
                .collect(),
            mu_y: (0..state.n_components())
                .map(|j| state.mu_y_row(j).to_vec())
                .collect(),
            sigma: state.sigma,
        }
    }

    pub fn into_state(self) -> Result<MixtureState> {
        let d_x = self.mu_x.first().map(|r| r.len()).unwrap_or(0);
        let d_y = self.mu_y.first().map(|r| r.len()).unwrap_or(0);
        if d_x == 0 || d_y == 0 {
            return Err(Error::domain("draw record has empty atom rows"));
        }
        let state = MixtureState {
            sticks: self.sticks,
            weights: self.weights,
            mu_x: self.mu_x.into_iter().flatten().collect(),
            mu_y: self.mu_y.into_iter().flatten().collect(),
            sigma: self.sigma,
            d_x,
            d_y,
        };
        state.validate()?;
        Ok(state)
    }
}

pub fn write_draws_jsonl(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for (state, &it) in draws.draws.iter().zip(&draws.iterations) {
        let record = DrawRecord::from_state(state, it);
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_draws_jsonl(path: &Path) -> Result<Vec<(u64, MixtureState)>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DrawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            msg: format!("bad draw record: {e}"),
        })?;
        let it = record.iteration;
        out.push((it, record.into_state()?));
    }
    Ok(out)
}

/// Diagnostics block embedded in the fit manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub acceptance_rates: BlockAcceptance,
    pub ess_sigma: f64,
    pub retained: usize,
    pub completed_iterations: u64,
    pub final_scales: ProposalScales,
    /// ChaCha word position after the last sweep, decimal-encoded.
    pub rng_word_pos: String,
}

impl ChainDiagnostics {
    pub fn from_draws(draws: &PosteriorDraws) -> Self {
        ChainDiagnostics {
            acceptance_rates: draws.acceptance_rates,
            ess_sigma: draws.ess_sigma,
            retained: draws.draws.len(),
            completed_iterations: draws.completed_iterations,
            final_scales: draws.final_scales,
            rng_word_pos: draws.final_word_pos.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataInfo {
    pub n: usize,
    pub d_x: usize,
    pub d_y: usize,
}

/// Manifest written next to fit outputs; carries full provenance and the
/// checkpoint needed to resume the chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitManifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub data: DataInfo,
    pub chain: ChainConfig,
    pub eb: EBReport,
    pub diagnostics: ChainDiagnostics,
}

impl FitManifest {
    /// Rebuild a resumable checkpoint from this manifest plus the draws
    /// file. Fails when the manifest predates burn-in completion.
    pub fn checkpoint(&self, draws_path: &Path) -> Result<ChainCheckpoint> {
        let stored = read_draws_jsonl(draws_path)?;
        let (last_iter, last_state) = stored
            .last()
            .cloned()
            .ok_or_else(|| Error::config("draws file is empty; nothing to resume"))?;
        if last_iter != self.diagnostics.completed_iterations {
            return Err(Error::config(
                "manifest and draws file disagree on the last completed sweep",
            ));
        }
        let word_pos: u128 = self
            .diagnostics
            .rng_word_pos
            .parse()
            .map_err(|_| Error::config("bad rng_word_pos in manifest"))?;
        Ok(ChainCheckpoint {
            completed: last_iter,
            word_pos,
            scales: self.diagnostics.final_scales,
            state: last_state,
            iterations: stored.iter().map(|(i, _)| *i).collect(),
            log_posterior: Vec::new(),
            draws: stored.into_iter().map(|(_, s)| s).collect(),
        })
    }
}

/// Truth manifest written by `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthManifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub family: String,
    pub d_x: usize,
    pub d_y: usize,
    pub relevant_dims: usize,
    pub n: usize,
}

pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Write a density table as CSV with header `x1,..,xD,y,f`.
pub fn write_density_csv(path: &Path, table: &DensityTable) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let d_x = table.x_nodes.first().map(|n| n.len()).unwrap_or(0);
    let mut header: Vec<String> = (1..=d_x).map(|k| format!("x{k}")).collect();
    header.push("y".into());
    header.push("f".into());
    writeln!(w, "{}", header.join(","))?;
    for (ix, x) in table.x_nodes.iter().enumerate() {
        for (iy, y) in table.y_grid.points().enumerate() {
            let mut row: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
            row.push(format!("{y}"));
            row.push(format!("{}", table.value(ix, iy)));
            writeln!(w, "{}", row.join(","))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a density table back from CSV. The y-grid must be uniform and
/// shared across x nodes.
pub fn read_density_csv(path: &Path) -> Result<DensityTable> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l?,
        None => {
            return Err(Error::Parse {
                line: 1,
                msg: "empty density file".into(),
            })
        }
    };
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 3 || *cols.last().unwrap() != "f" || cols[cols.len() - 2] != "y" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header x1..xD,y,f, got '{}'", header.trim()),
        });
    }
    let d_x = cols.len() - 2;

    let mut x_nodes: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut first_block_ys: Vec<f64> = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .trim()
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: idx + 1,
                msg: format!("bad number: {e}"),
            })?;
        if fields.len() != d_x + 2 {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected {} fields, found {}", d_x + 2, fields.len()),
            });
        }
        let x = fields[..d_x].to_vec();
        let y = fields[d_x];
        let f = fields[d_x + 1];
        if x_nodes.is_empty() || *x_nodes.last().unwrap() != x {
            x_nodes.push(x);
        }
        if x_nodes.len() == 1 {
            first_block_ys.push(y);
        }
        ys.push(y);
        values.push(f);
    }
    if x_nodes.is_empty() || first_block_ys.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            msg: "density file has no usable rows".into(),
        });
    }
    let step = first_block_ys[1] - first_block_ys[0];
    for w in first_block_ys.windows(2) {
        if ((w[1] - w[0]) - step).abs() > 1e-9 * step.abs().max(1.0) {
            return Err(Error::Parse {
                line: 1,
                msg: "y grid is not uniform".into(),
            });
        }
    }
    let y_grid = YGrid::new(first_block_ys[0], step, first_block_ys.len())?;
    if values.len() != x_nodes.len() * y_grid.len {
        return Err(Error::Parse {
            line: 1,
            msg: "x blocks have inconsistent y grids".into(),
        });
    }
    Ok(DensityTable {
        x_nodes,
        y_grid,
        values,
    })
}
