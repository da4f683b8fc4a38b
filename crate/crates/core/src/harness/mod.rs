//! Experiment orchestration: configuration, grid execution, checkpoints
//! and reports.

pub mod checkpoint;
pub mod config;
pub mod experiment;
pub mod grid;
pub mod report;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint,
};
pub use config::{bias_id, AdaptPlan, ClassifierChoice, ExperimentConfig, GridMethod};
pub use experiment::{build_pair, cell_seed, run_cell, EvalContext, MethodResult};
pub use grid::{grid_cells, run_grid, write_reports, CellFailure, GridCell, GridOutcome};
pub use report::{
    aggregate, numeric_columns, parse_report_csv, render_plots, report_csv, CellRecord, PlotMetric,
    ReportRow, CSV_HEADER,
};
