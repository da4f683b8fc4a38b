use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::config::{bias_id, ExperimentConfig};
use super::experiment::{cell_seed, persist_cell, require_methods, run_cell};
use super::report::{aggregate, render_plots, report_csv, CellRecord, PlotMetric, ReportRow};
use crate::error::{Error, Result};

pub const REPORT_FILE: &str = "report.csv";
pub const CONFIG_FILE: &str = "config.resolved.toml";

/// Coordinates of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub bias_index: usize,
    pub perc_index: usize,
    pub seed: u64,
    pub bias: Vec<f64>,
    pub perc: f64,
}

impl GridCell {
    pub fn dir_name(&self) -> String {
        format!("b{}_p{}_s{}", self.bias_index, self.perc_index, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct CellFailure {
    pub cell: GridCell,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub records: Vec<CellRecord>,
    pub failures: Vec<CellFailure>,
    pub rows: Vec<ReportRow>,
    /// The CSV report, empty when every cell failed.
    pub csv: String,
    pub config_hash: String,
}

/// Cells in bias, perc, seed order.
pub fn grid_cells(cfg: &ExperimentConfig) -> Vec<GridCell> {
    let g = &cfg.grid;
    let mut cells = Vec::new();
    for (bi, bias) in g.biases.iter().enumerate() {
        for (pi, &perc) in g.percs.iter().enumerate() {
            for &seed in &g.seeds {
                cells.push(GridCell {
                    bias_index: bi,
                    perc_index: pi,
                    seed,
                    bias: bias.clone(),
                    perc,
                });
            }
        }
    }
    cells
}

/// Runs every cell on a pool of `parallelism` workers and aggregates the
/// results over seeds. A failing cell is recorded and the rest continue.
/// When `out_dir` is given, per-cell checkpoints and metric series, the
/// CSV report, plots and the resolved configuration are written there.
pub fn run_grid(
    cfg: &ExperimentConfig,
    parallelism: usize,
    out_dir: Option<&Path>,
) -> Result<GridOutcome> {
    cfg.validate()?;
    require_methods(&cfg.grid.methods)?;
    if parallelism == 0 {
        return Err(Error::invalid("parallelism must be at least 1"));
    }
    let hash = cfg.hash();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir.join("cells"))?;
        fs::write(dir.join(CONFIG_FILE), cfg.resolved_toml())?;
    }
    let cells = grid_cells(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    let results: Vec<Result<Vec<CellRecord>>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| execute(cfg, &hash, cell, out_dir))
            .collect()
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (cell, result) in cells.into_iter().zip(results) {
        match result {
            Ok(r) => records.extend(r),
            Err(e) => {
                if let Some(dir) = out_dir {
                    let cell_dir = dir.join("cells").join(cell.dir_name());
                    fs::create_dir_all(&cell_dir)?;
                    fs::write(cell_dir.join("error.txt"), format!("{e}\n"))?;
                }
                failures.push(CellFailure {
                    cell,
                    error: e.to_string(),
                });
            }
        }
    }
    // group rows by bias, perc and method in grid order
    let order = |r: &CellRecord| {
        let g = &cfg.grid;
        let b = g
            .biases
            .iter()
            .position(|v| bias_id(v) == r.bias_id)
            .unwrap_or(usize::MAX);
        let p = g
            .percs
            .iter()
            .position(|&v| v.to_bits() == r.perc.to_bits())
            .unwrap_or(usize::MAX);
        (b, p, r.method)
    };
    records.sort_by_key(order);
    let rows = aggregate(&records, false)?;
    let csv = if rows.is_empty() {
        String::new()
    } else {
        report_csv(&rows)?
    };
    if let (Some(dir), false) = (out_dir, rows.is_empty()) {
        write_reports(dir, &csv)?;
    }
    Ok(GridOutcome {
        records,
        failures,
        rows,
        csv,
        config_hash: hash,
    })
}

fn execute(
    cfg: &ExperimentConfig,
    hash: &str,
    cell: &GridCell,
    out_dir: Option<&Path>,
) -> Result<Vec<CellRecord>> {
    let seed = cell_seed(cfg.seed, cell.bias_index, cell.perc_index, cell.seed);
    let results = run_cell(cfg, hash, &cell.bias, cell.perc, seed, &cfg.grid.methods)?;
    if let Some(dir) = out_dir {
        persist_cell(
            &dir.join("cells").join(cell.dir_name()),
            &results,
            seed,
            hash,
        )?;
    }
    Ok(results
        .into_iter()
        .filter(|r| cfg.grid.methods.contains(&r.method))
        .map(|r| CellRecord {
            method: r.method,
            perc: cell.perc,
            bias_id: bias_id(&cell.bias),
            seed: cell.seed,
            fd: r.report.fd,
            frechet_sq: r.report.frechet_sq,
            runtime_s: r.runtime_s,
            config_hash: hash.to_string(),
        })
        .collect())
}

/// Writes `report.csv` and the two plot families derived from it.
pub fn write_reports(dir: &Path, csv: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(REPORT_FILE), csv)?;
    for metric in [PlotMetric::Fd, PlotMetric::Frechet] {
        let plots = render_plots(csv, metric)?;
        let many = plots.len() > 1;
        for (i, (_, svg)) in plots.iter().enumerate() {
            let name = if many {
                format!("{}_b{i}.svg", metric.file_stem())
            } else {
                format!("{}.svg", metric.file_stem())
            };
            fs::write(dir.join(name), svg)?;
        }
    }
    Ok(())
}
