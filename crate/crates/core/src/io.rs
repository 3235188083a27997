//! Configuration parsing and result emission.
//!
//! A configuration is a flat YAML mapping whose keys are the fields of
//! [`ScenarioConfig`]; missing keys keep their defaults. Results are written as
//! `summary.json`, a long-format `timeseries.csv` and SVG charts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::ArrayView2;
use plotters::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::domain::{validate_config, ConfigError, ScenarioConfig};
use crate::harness::{AggregateMetrics, GapTable, WindowSweep};

/// Header of `timeseries.csv`.
pub const TIMESERIES_HEADER: [&str; 6] = ["run", "method", "t", "p", "metric", "value"];
/// Per-step metrics in `timeseries.csv`, in emission order.
pub const METRICS: [&str; 4] = ["loss", "outflow", "queue", "cost"];

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("config line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config: {0}")]
    Other(String),
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

/// Parses and validates a configuration document. An empty document (or one
/// holding only comments) yields the defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ParseError> {
    let value: serde_yaml::Value = serde_yaml::from_str(text).map_err(syntax_error)?;
    let config = if value.is_null() {
        ScenarioConfig::default()
    } else {
        serde_yaml::from_str::<ScenarioConfig>(text).map_err(syntax_error)?
    };
    Ok(validate_config(config)?)
}

fn syntax_error(e: serde_yaml::Error) -> ParseError {
    match e.location() {
        Some(loc) => ParseError::Syntax {
            line: loc.line(),
            column: loc.column(),
            message: e.to_string(),
        },
        None => ParseError::Other(e.to_string()),
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ParseError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ParseError::Other(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Encode { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EmitError + '_ {
    move |source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn encode_err(path: &Path, e: impl std::fmt::Display) -> EmitError {
    EmitError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub mean_cost: f64,
    pub std_cost: f64,
    pub standard_error: f64,
    /// Percent above `batch_hindsight`; absent when undefined.
    pub gap_percent: Option<f64>,
    pub invariant_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub seed: u64,
    pub num_runs: usize,
    pub methods: Vec<MethodSummary>,
    pub gaps: Option<GapTable>,
    pub sweep: Option<WindowSweep>,
    pub config: ScenarioConfig,
}

impl Summary {
    pub fn new(metrics: &AggregateMetrics, sweep: Option<&WindowSweep>) -> Self {
        let methods = metrics
            .methods
            .iter()
            .map(|m| MethodSummary {
                method: m.method.clone(),
                mean_cost: m.mean_cost,
                std_cost: m.std_cost,
                standard_error: m.standard_error(),
                gap_percent: metrics.gaps.as_ref().and_then(|g| g.percent(&m.method)),
                invariant_violations: m.invariants.violations,
            })
            .collect();
        Summary {
            seed: metrics.config.base_seed,
            num_runs: metrics.num_runs(),
            methods,
            gaps: metrics.gaps.clone(),
            sweep: sweep.cloned(),
            config: metrics.config.clone(),
        }
    }
}

/// Paths written by [`emit_outputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutputBundle {
    pub summary: PathBuf,
    pub timeseries: PathBuf,
    pub charts: Vec<PathBuf>,
    pub records: usize,
}

/// Writes summary, long-format series and charts into `dir`, creating it if needed.
pub fn emit_outputs(
    metrics: &AggregateMetrics,
    sweep: Option<&WindowSweep>,
    dir: &Path,
) -> Result<OutputBundle, EmitError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let summary = dir.join("summary.json");
    let mut json = serde_json::to_string_pretty(&Summary::new(metrics, sweep))
        .map_err(|e| encode_err(&summary, e))?;
    json.push('\n');
    fs::write(&summary, json).map_err(io_err(&summary))?;

    let timeseries = dir.join("timeseries.csv");
    let records = write_timeseries(metrics, &timeseries)?;

    let charts = write_charts(metrics, sweep, dir)?;
    Ok(OutputBundle {
        summary,
        timeseries,
        charts,
        records,
    })
}

fn write_timeseries(metrics: &AggregateMetrics, path: &Path) -> Result<usize, EmitError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let csv_err = |e: csv::Error| encode_err(path, e);
    w.write_record(TIMESERIES_HEADER).map_err(csv_err)?;
    let mut records = 0;
    for run in 0..metrics.num_runs() {
        for m in &metrics.methods {
            let s = &m.series[run];
            let series = [&s.loss, &s.outflow, &s.queue, &s.cost];
            for t in 0..s.loss.nrows() {
                for p in 0..s.loss.ncols() {
                    for (name, a) in METRICS.iter().zip(series) {
                        w.write_record([
                            s.run.to_string(),
                            m.method.clone(),
                            (t + 1).to_string(),
                            (p + 1).to_string(),
                            name.to_string(),
                            a[[t, p]].to_string(),
                        ])
                        .map_err(csv_err)?;
                        records += 1;
                    }
                }
            }
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(records)
}

/// One parsed row of `timeseries.csv`.
#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
pub struct TimeseriesRecord {
    pub run: u64,
    pub method: String,
    pub t: usize,
    pub p: usize,
    pub metric: String,
    pub value: f64,
}

pub fn read_timeseries(path: &Path) -> Result<Vec<TimeseriesRecord>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

/// Mean over runs of the summed `cost` records, per method.
pub fn mean_costs_from_records(records: &[TimeseriesRecord]) -> BTreeMap<String, f64> {
    let mut per_run: BTreeMap<(String, u64), f64> = BTreeMap::new();
    for r in records.iter().filter(|r| r.metric == "cost") {
        *per_run.entry((r.method.clone(), r.run)).or_default() += r.value;
    }
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for ((method, _), cost) in per_run {
        let e = sums.entry(method).or_default();
        e.0 += cost;
        e.1 += 1;
    }
    sums.into_iter().map(|(m, (s, n))| (m, s / n as f64)).collect()
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

fn color(i: usize) -> RGBColor {
    PALETTE[i % PALETTE.len()]
}

type Series = (String, Vec<(f64, f64)>);

fn columns(a: ArrayView2<'_, f64>) -> Vec<Series> {
    (0..a.ncols())
        .map(|p| {
            let pts = a.column(p).iter().enumerate().map(|(t, v)| ((t + 1) as f64, *v)).collect();
            (format!("p{}", p + 1), pts)
        })
        .collect()
}

fn span(series: &[Series]) -> (f64, f64, f64) {
    let xs = series.iter().flat_map(|s| s.1.iter());
    let (mut xmax, mut ymax) = (1.0f64, 0.0f64);
    for &(x, y) in xs {
        xmax = xmax.max(x);
        ymax = ymax.max(y);
    }
    let xmin = series
        .iter()
        .flat_map(|s| s.1.iter().map(|p| p.0))
        .fold(f64::INFINITY, f64::min)
        .min(xmax);
    (xmin.min(1.0), xmax, if ymax > 0.0 { ymax * 1.05 } else { 1.0 })
}

fn draw_panel<DB: DrawingBackend>(
    area: &DrawingArea<DB, plotters::coord::Shift>,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    markers: bool,
) -> Result<(), String> {
    let (x0, x1, y1) = span(series);
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(55)
        .build_cartesian_2d(x0..x1, 0.0..y1)
        .map_err(|e| e.to_string())?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .draw()
        .map_err(|e| e.to_string())?;
    for (i, (name, pts)) in series.iter().enumerate() {
        let c = color(i);
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), c.stroke_width(2)))
            .map_err(|e| e.to_string())?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], c.stroke_width(2)));
        if markers {
            chart
                .draw_series(pts.iter().map(|&p| Circle::new(p, 4, c.filled())))
                .map_err(|e| e.to_string())?;
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| e.to_string())?;
    Ok(())
}

fn single_chart(path: &Path, title: &str, x: &str, y: &str, series: &[Series], markers: bool) -> Result<(), EmitError> {
    let root = SVGBackend::new(path, (900, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| encode_err(path, e))?;
    draw_panel(&root, title, x, y, series, markers).map_err(|e| encode_err(path, e))?;
    root.present().map_err(|e| encode_err(path, e))
}

fn write_charts(
    metrics: &AggregateMetrics,
    sweep: Option<&WindowSweep>,
    dir: &Path,
) -> Result<Vec<PathBuf>, EmitError> {
    let mut written = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(&Path) -> Result<(), EmitError>| {
        let path = dir.join(name);
        f(&path).map(|_| written.push(path))
    };

    emit("flows_single_run.svg", &|p| {
        single_chart(p, "Incoming flow, run 0", "t", "packets per step", &columns(metrics.sample_inflow.view()), false)
    })?;
    emit("flows_mean.svg", &|p| {
        single_chart(p, "Incoming flow, mean over runs", "t", "packets per step", &columns(metrics.mean_inflow.view()), false)
    })?;

    let focus = metrics
        .methods
        .iter()
        .find(|m| m.method.starts_with("mpc("))
        .or(metrics.methods.first());
    if let Some(m) = focus {
        let title = format!("Aggregate outflow, {}", m.method);
        emit("outflows.svg", &|p| single_chart(p, &title, "t", "packets per step", &columns(m.mean_outflow.view()), false))?;
    }

    emit("losses.svg", &|path| {
        let np = metrics.config.num_priorities;
        let root = SVGBackend::new(path, (900, 300 * np as u32)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| encode_err(path, e))?;
        for (p, panel) in root.split_evenly((np, 1)).iter().enumerate() {
            let series: Vec<Series> = metrics
                .methods
                .iter()
                .map(|m| (m.method.clone(), columns(m.mean_loss.view()).swap_remove(p).1))
                .collect();
            draw_panel(panel, &format!("Lost packets, priority {}", p + 1), "t", "packets", &series, false)
                .map_err(|e| encode_err(path, e))?;
        }
        root.present().map_err(|e| encode_err(path, e))
    })?;

    let cumulative: Vec<Series> = metrics
        .methods
        .iter()
        .map(|m| {
            let pts = m.mean_cumulative_cost.iter().enumerate().map(|(t, v)| ((t + 1) as f64, *v)).collect();
            (m.method.clone(), pts)
        })
        .collect();
    emit("cumulative_cost.svg", &|p| single_chart(p, "Cumulative loss cost", "t", "cost", &cumulative, false))?;

    if let Some(s) = sweep {
        let pts = s.rows.iter().map(|r| (r.window as f64, r.mean_cost)).collect();
        let series = vec![("mean cost".to_string(), pts)];
        emit("window_sweep.svg", &|p| single_chart(p, "Mean cumulative cost by window", "W", "cost", &series, true))?;
    }
    Ok(written)
}

/// Expected number of long-format records for a set of metrics.
pub fn expected_records(metrics: &AggregateMetrics) -> usize {
    let c = &metrics.config;
    metrics.num_runs() * metrics.methods.len() * c.horizon * c.num_priorities * METRICS.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ViolationKind;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), ScenarioConfig::default());
        assert_eq!(parse_config("# nothing here\n").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn single_override() {
        let c = parse_config("horizon: 50\n").unwrap();
        assert_eq!(c.horizon, 50);
        assert_eq!(c, ScenarioConfig { horizon: 50, ..Default::default() });
    }

    #[test]
    fn dimension_mismatch_is_forwarded() {
        match parse_config("loss_costs: [10, 4]\n") {
            Err(ParseError::Invalid(e)) => assert!(e.has(ViolationKind::InvalidDimension, "loss_costs")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn diagnostics_carry_line_and_key() {
        let err = parse_config("horizon: 50\nwindw: 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ParseError::Syntax { line: 2, .. }), "{msg}");
        assert!(msg.contains("windw"), "{msg}");

        let err = parse_config("horizon: 50\nwindow: many\n").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { line: 2, .. }), "{err}");
        assert!(parse_config("[1, 2").is_err());
    }
}
