use std::fs;

use fairgan::harness::{
    grid_cells, numeric_columns, parse_report_csv, render_plots, run_grid, ExperimentConfig,
    GridMethod, PlotMetric, CSV_HEADER,
};

fn tiny() -> ExperimentConfig {
    ExperimentConfig::from_toml(
        r#"
        [data]
        base_per_class = 900
        size_bias = 400
        [train]
        pretrain_epochs = 3
        adapt_epochs = 2
        adapt_min_steps = 0
        [eval]
        n_samples = 256
        reference_per_class = 100
        eval_every = 1
        [grid]
        percs = [0.25, 0.1]
        seeds = [0, 1]
        "#,
    )
    .unwrap()
}

#[test]
fn one_cell_one_seed_gives_one_row_and_one_checkpoint() {
    let mut cfg = tiny();
    cfg.grid.percs = vec![0.25];
    cfg.grid.seeds = vec![3];
    cfg.grid.methods = vec![GridMethod::FairTlPp];
    let dir = tempfile::tempdir().unwrap();
    let out = run_grid(&cfg, 1, Some(dir.path())).unwrap();
    assert!(out.failures.is_empty());
    assert_eq!(out.rows.len(), 1);
    assert_eq!(out.rows[0].fd_std, None);
    let cell = dir
        .path()
        .join("cells")
        .join(grid_cells(&cfg)[0].dir_name());
    let ckpts: Vec<_> = fs::read_dir(&cell)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "ckpt"))
        .collect();
    assert_eq!(ckpts.len(), 1);
    let series = fs::read_to_string(cell.join("fairtlpp_metrics.csv")).unwrap();
    assert_eq!(series.lines().count(), 1 + 3);
    assert!(dir.path().join("report.csv").exists());
    assert!(dir.path().join("fd_vs_perc.svg").exists());
    assert!(dir.path().join("frechet_vs_perc.svg").exists());
    let resolved = fs::read_to_string(dir.path().join("config.resolved.toml")).unwrap();
    assert_eq!(
        ExperimentConfig::from_toml(&resolved).unwrap().hash(),
        out.config_hash
    );
}

#[test]
fn parallel_and_serial_grids_agree() {
    let cfg = tiny();
    let a = run_grid(&cfg, 1, None).unwrap();
    let b = run_grid(&cfg, 3, None).unwrap();
    assert_eq!(a.rows.len(), 2 * 3);
    assert!(a.rows.iter().all(|r| r.seeds == 2 && r.fd_std.is_some()));
    assert_eq!(numeric_columns(&a.csv), numeric_columns(&b.csv));
    assert!(a.csv.starts_with(CSV_HEADER));
}

#[test]
fn failing_cells_are_recorded_and_the_rest_continue() {
    let mut cfg = tiny();
    cfg.data.base_per_class = 600;
    cfg.grid.percs = vec![0.25, 1.0];
    cfg.grid.seeds = vec![0];
    let dir = tempfile::tempdir().unwrap();
    let out = run_grid(&cfg, 2, Some(dir.path())).unwrap();
    assert_eq!(out.failures.len(), 1);
    assert_eq!(out.failures[0].cell.perc, 1.0);
    assert_eq!(out.rows.len(), 3);
    let failed = dir
        .path()
        .join("cells")
        .join(out.failures[0].cell.dir_name())
        .join("error.txt");
    assert!(fs::read_to_string(failed).unwrap().contains("deficient"));

    // the surviving cell is unaffected by its failing neighbour
    cfg.grid.percs = vec![0.25];
    let alone = run_grid(&cfg, 1, None).unwrap();
    assert_eq!(numeric_columns(&alone.csv), numeric_columns(&out.csv));
}

#[test]
fn plots_regenerate_identically_from_the_report() {
    let mut cfg = tiny();
    cfg.grid.seeds = vec![0];
    let dir = tempfile::tempdir().unwrap();
    run_grid(&cfg, 1, Some(dir.path())).unwrap();
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(parse_report_csv(&csv).unwrap().len(), 6);
    let svg = fs::read_to_string(dir.path().join("fd_vs_perc.svg")).unwrap();
    assert_eq!(render_plots(&csv, PlotMetric::Fd).unwrap()[0].1, svg);
}
