//! Seed-aggregated report rows, the CSV report and SVG plots drawn from it.

use std::fmt::Write as _;

use super::config::GridMethod;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "method,perc,bias_id,seeds,fd_mean,fd_std,frechet_mean,frechet_std,runtime_s";

/// Outcome of one method in one (bias, perc, seed) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub method: GridMethod,
    pub perc: f64,
    pub bias_id: String,
    pub seed: u64,
    pub fd: f64,
    pub frechet_sq: f64,
    pub runtime_s: f64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: GridMethod,
    pub perc: f64,
    pub bias_id: String,
    pub seeds: usize,
    pub fd_mean: f64,
    /// Sample standard deviation; absent for a single seed.
    pub fd_std: Option<f64>,
    pub frechet_mean: f64,
    pub frechet_std: Option<f64>,
    /// Mean wall-clock seconds per seed.
    pub runtime_s: f64,
}

fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

/// Aggregates records over seeds, one row per (bias, perc, method) in order
/// of first appearance. Records carrying different config hashes are
/// refused unless `force` is set.
pub fn aggregate(records: &[CellRecord], force: bool) -> Result<Vec<ReportRow>> {
    if let Some(first) = records.first() {
        if !force {
            if let Some(r) = records.iter().find(|r| r.config_hash != first.config_hash) {
                return Err(Error::invalid(format!(
                    "records mix config hashes {} and {}",
                    first.config_hash, r.config_hash
                )));
            }
        }
    }
    let mut keys: Vec<(&str, u64, GridMethod)> = Vec::new();
    for r in records {
        let key = (r.bias_id.as_str(), r.perc.to_bits(), r.method);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut rows = Vec::with_capacity(keys.len());
    for (bias_id, perc_bits, method) in keys {
        let group: Vec<&CellRecord> = records
            .iter()
            .filter(|r| r.bias_id == bias_id && r.perc.to_bits() == perc_bits && r.method == method)
            .collect();
        let fd: Vec<f64> = group.iter().map(|r| r.fd).collect();
        let fr: Vec<f64> = group.iter().map(|r| r.frechet_sq).collect();
        let rt: Vec<f64> = group.iter().map(|r| r.runtime_s).collect();
        let (fd_mean, fd_std) = mean_std(&fd);
        let (frechet_mean, frechet_std) = mean_std(&fr);
        rows.push(ReportRow {
            method,
            perc: f64::from_bits(perc_bits),
            bias_id: bias_id.to_string(),
            seeds: group.len(),
            fd_mean,
            fd_std,
            frechet_mean,
            frechet_std,
            runtime_s: mean_std(&rt).0,
        });
    }
    Ok(rows)
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_real(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

/// The CSV report. Reals carry 17 significant digits; a missing standard
/// deviation is an empty field.
pub fn report_csv(rows: &[ReportRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::invalid("no report rows"));
    }
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.method.name(),
            real(r.perc),
            r.bias_id,
            r.seeds,
            real(r.fd_mean),
            opt_real(r.fd_std),
            real(r.frechet_mean),
            opt_real(r.frechet_std),
            real(r.runtime_s)
        );
    }
    Ok(s)
}

fn parse_real(field: &str, line: usize) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::invalid(format!("line {line}: '{field}' is not a number")))
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::invalid(
            "report does not start with the expected header",
        ));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let n = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::invalid(format!(
                "line {n}: expected 9 fields, found {}",
                f.len()
            )));
        }
        let opt = |s: &str| {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_real(s, n).map(Some)
            }
        };
        rows.push(ReportRow {
            method: GridMethod::parse(f[0])?,
            perc: parse_real(f[1], n)?,
            bias_id: f[2].to_string(),
            seeds: f[3]
                .parse()
                .map_err(|_| Error::invalid(format!("line {n}: bad seed count")))?,
            fd_mean: parse_real(f[4], n)?,
            fd_std: opt(f[5])?,
            frechet_mean: parse_real(f[6], n)?,
            frechet_std: opt(f[7])?,
            runtime_s: parse_real(f[8], n)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::invalid("report has no rows"));
    }
    Ok(rows)
}

/// Columns of a report line: everything except `runtime_s`.
pub fn numeric_columns(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotMetric {
    Fd,
    Frechet,
}

impl PlotMetric {
    pub fn file_stem(self) -> &'static str {
        match self {
            PlotMetric::Fd => "fd_vs_perc",
            PlotMetric::Frechet => "frechet_vs_perc",
        }
    }

    fn label(self) -> &'static str {
        match self {
            PlotMetric::Fd => "Fairness Discrepancy",
            PlotMetric::Frechet => "Squared Fréchet distance",
        }
    }

    fn values(self, r: &ReportRow) -> (f64, f64) {
        match self {
            PlotMetric::Fd => (r.fd_mean, r.fd_std.unwrap_or(0.0)),
            PlotMetric::Frechet => (r.frechet_mean, r.frechet_std.unwrap_or(0.0)),
        }
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

fn colour(method: GridMethod) -> &'static str {
    match method {
        GridMethod::Pretrained => "#7f7f7f",
        GridMethod::FairTl => "#1f77b4",
        GridMethod::FairTlPp => "#d62728",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// One SVG per bias id, each with a line per method over perc (log axis)
/// and ±1 standard deviation bars. Output depends only on `csv`.
pub fn render_plots(csv: &str, metric: PlotMetric) -> Result<Vec<(String, String)>> {
    let rows = parse_report_csv(csv)?;
    let mut bias_ids: Vec<&str> = Vec::new();
    for r in &rows {
        if !bias_ids.contains(&r.bias_id.as_str()) {
            bias_ids.push(&r.bias_id);
        }
    }
    Ok(bias_ids
        .iter()
        .map(|&b| {
            let subset: Vec<&ReportRow> = rows.iter().filter(|r| r.bias_id == b).collect();
            (b.to_string(), render_one(&subset, b, metric))
        })
        .collect())
}

fn render_one(rows: &[&ReportRow], bias_id: &str, metric: PlotMetric) -> String {
    let mut percs: Vec<f64> = rows.iter().map(|r| r.perc).collect();
    percs.sort_by(f64::total_cmp);
    percs.dedup();
    let (lo, hi) = (percs[0].ln(), percs[percs.len() - 1].ln());
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x_of = |p: f64| {
        if hi > lo {
            LEFT + (p.ln() - lo) / (hi - lo) * plot_w
        } else {
            LEFT + plot_w / 2.0
        }
    };
    let y_max = rows
        .iter()
        .map(|r| {
            let (m, s) = metric.values(r);
            m + s
        })
        .fold(0.0f64, f64::max);
    let y_max = if y_max > 0.0 && y_max.is_finite() {
        y_max * 1.1
    } else {
        1.0
    };
    let y_of = |v: f64| TOP + plot_h - v / y_max * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{} vs perc (bias {})</text>"#,
        LEFT + plot_w / 2.0,
        metric.label(),
        escape(bias_id)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT:.1},{TOP:.1} V{:.1} H{:.1}" fill="none" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w
    );
    for i in 0..=5 {
        let v = y_max * i as f64 / 5.0;
        let y = y_of(v);
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{LEFT:.1}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"##,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0
        );
    }
    for &p in &percs {
        let x = x_of(p);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{p}</text>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 20.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">perc (log scale)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );

    let mut methods: Vec<GridMethod> = rows.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    for (i, &m) in methods.iter().enumerate() {
        let mut pts: Vec<(f64, f64, f64)> = rows
            .iter()
            .filter(|r| r.method == m)
            .map(|r| {
                let (v, sd) = metric.values(r);
                (r.perc, v, sd)
            })
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let c = colour(m);
        let path: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(j, &(p, v, _))| {
                format!(
                    "{}{:.1},{:.1}",
                    if j == 0 { 'M' } else { 'L' },
                    x_of(p),
                    y_of(v)
                )
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<path d="{}" fill="none" stroke="{c}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for &(p, v, sd) in &pts {
            let x = x_of(p);
            if sd > 0.0 {
                let _ = writeln!(
                    s,
                    r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="{c}"/>"#,
                    y_of(v - sd),
                    y_of(v + sd)
                );
            }
            let _ = writeln!(
                s,
                r#"<circle cx="{x:.1}" cy="{:.1}" r="3.5" fill="{c}"/>"#,
                y_of(v)
            );
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{c}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            m.name()
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(method: GridMethod, perc: f64, seed: u64, fd: f64) -> CellRecord {
        CellRecord {
            method,
            perc,
            bias_id: "0.9/0.1".into(),
            seed,
            fd,
            frechet_sq: 2.0 * fd,
            runtime_s: 1.5,
            config_hash: "h".into(),
        }
    }

    #[test]
    fn single_seed_has_no_std() {
        let rows = aggregate(&[record(GridMethod::FairTl, 0.1, 0, 0.3)], false).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].fd_std, None);
        let csv = report_csv(&rows).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().next(), Some(CSV_HEADER));
        assert!(csv.contains(",,"));
    }

    #[test]
    fn two_seeds_aggregate_with_std() {
        let rows = aggregate(
            &[
                record(GridMethod::FairTl, 0.1, 0, 0.2),
                record(GridMethod::FairTl, 0.1, 1, 0.4),
            ],
            false,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].seeds, 2);
        assert!((rows[0].fd_mean - 0.3).abs() < 1e-15);
        assert!((rows[0].fd_std.unwrap() - 0.02f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mismatched_hashes_refused_unless_forced() {
        let a = record(GridMethod::FairTl, 0.1, 0, 0.2);
        let mut b = record(GridMethod::FairTl, 0.1, 1, 0.4);
        b.config_hash = "other".into();
        assert!(aggregate(&[a.clone(), b.clone()], false).is_err());
        assert_eq!(aggregate(&[a, b], true).unwrap().len(), 1);
    }

    #[test]
    fn csv_round_trips_exactly() {
        let recs: Vec<CellRecord> = [0.25, 0.025]
            .iter()
            .flat_map(|&p| {
                [GridMethod::Pretrained, GridMethod::FairTlPp]
                    .into_iter()
                    .flat_map(move |m| {
                        (0..3).map(move |s| record(m, p, s, 0.1 + s as f64 / 7.0 + p))
                    })
            })
            .collect();
        let rows = aggregate(&recs, false).unwrap();
        assert_eq!(rows.len(), 4);
        let csv = report_csv(&rows).unwrap();
        assert_eq!(parse_report_csv(&csv).unwrap(), rows);
        let field = csv.lines().nth(1).unwrap().split(',').nth(4).unwrap();
        let mantissa = field.split('e').next().unwrap();
        assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
    }

    #[test]
    fn empty_rows_rejected() {
        assert!(report_csv(&[]).is_err());
        assert!(parse_report_csv(CSV_HEADER).is_err());
    }

    #[test]
    fn plots_are_pure_functions_of_the_csv() {
        let recs: Vec<CellRecord> = [0.25, 0.1, 0.025]
            .iter()
            .flat_map(|&p| {
                (0..2).map(move |s| record(GridMethod::FairTl, p, s, p + s as f64 * 0.01))
            })
            .collect();
        let csv = report_csv(&aggregate(&recs, false).unwrap()).unwrap();
        for metric in [PlotMetric::Fd, PlotMetric::Frechet] {
            let a = render_plots(&csv, metric).unwrap();
            let b = render_plots(&csv, metric).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), 1);
            assert!(a[0].1.starts_with("<svg") && a[0].1.trim_end().ends_with("</svg>"));
        }
    }

    #[test]
    fn numeric_columns_drop_runtime() {
        let cols = numeric_columns("a,b,c\n1,2,3\n");
        assert_eq!(cols, vec!["a,b", "1,2"]);
    }
}
