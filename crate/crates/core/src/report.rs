//! Rendering of score breakdowns and temperature curves.
//!
//! Text output rounds to two decimals; JSON and CSV keep full precision so
//! they can be parsed back to the exact values. All output is a pure
//! function of its input.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dataset::{load_dataset, read_prediction_log, DatasetError, DatasetFormat, PredictionLogError};
use crate::metrics::{score_breakdown_with, Cell, MetricsError, ScoreBreakdown};
use crate::sweep::{curve_data, CurveRow, SweepError, SweepResult};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Log(#[from] PredictionLogError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakdownFormat {
    Text,
    Json,
    Csv,
}

impl std::str::FromStr for BreakdownFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(BreakdownFormat::Text),
            "json" => Ok(BreakdownFormat::Json),
            "csv" => Ok(BreakdownFormat::Csv),
            other => Err(format!("unknown format {other:?} (text, json, csv)")),
        }
    }
}

fn two_decimals(value: Option<f64>) -> String {
    value.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"))
}

pub fn render_breakdown(breakdown: &ScoreBreakdown, format: BreakdownFormat) -> String {
    match format {
        BreakdownFormat::Text => breakdown_text(breakdown),
        BreakdownFormat::Json => serde_json::to_string_pretty(breakdown).expect("breakdown serializes") + "\n",
        BreakdownFormat::Csv => breakdown_csv(breakdown),
    }
}

fn breakdown_text(b: &ScoreBreakdown) -> String {
    let mut out = format!("{:<14}{:>9}{:>9}{:>10}\n", "cell", "correct", "total", "accuracy");
    for cell in Cell::SCORED {
        let acc = b.accuracy(cell).expect("scored cell has counts");
        let _ = writeln!(out, "{:<14}{:>9}{:>9}{:>10}", cell.name(), acc.correct, acc.total, two_decimals(acc.value()));
    }
    let _ = writeln!(out, "{:<14}{:>9}{:>9}{:>10}", "overall", "-", "-", two_decimals(b.overall));
    let cells: Vec<&str> = b.overall_cells.iter().map(|c| c.name()).collect();
    let _ = writeln!(out, "overall = mean of defined cells among: {}", cells.join(", "));
    out
}

fn breakdown_csv(b: &ScoreBreakdown) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["cell", "correct", "total", "value"]).expect("in-memory write");
    let full = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for cell in Cell::SCORED {
        let acc = b.accuracy(cell).expect("scored cell has counts");
        w.write_record([cell.name().to_string(), acc.correct.to_string(), acc.total.to_string(), full(acc.value())])
            .expect("in-memory write");
    }
    w.write_record(["overall".to_string(), String::new(), String::new(), full(b.overall)])
        .expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Header `temperature,mean,stddev`, one row per temperature, shortest
/// round-trip float formatting.
pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("in-memory write");
    }
    if rows.is_empty() {
        w.write_record(["temperature", "mean", "stddev"]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn parse_curve_csv(text: &str) -> Result<Vec<CurveRow>, ReportError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["temperature", "mean", "stddev"] {
        return Err(ReportError::Csv(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "expected header temperature,mean,stddev",
        ))));
    }
    Ok(reader.deserialize().collect::<Result<_, _>>()?)
}

/// Series drawn in the chart: overall plus the three instance cells.
pub const CHART_CELLS: [Cell; 4] = [Cell::Overall, Cell::InstOr, Cell::InstSr, Cell::InstCr];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

/// Self-contained SVG line chart of mean accuracy against temperature, one
/// polyline per series, y fixed to [0, 1].
pub fn curves_svg(series: &[(Cell, Vec<CurveRow>)]) -> String {
    let temps: Vec<f64> = series.iter().flat_map(|(_, rows)| rows.iter().map(|r| r.temperature)).collect();
    let (mut x_min, mut x_max) = temps
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(*t), hi.max(*t)));
    if !x_min.is_finite() {
        (x_min, x_max) = (0.0, 1.0);
    }
    if x_max == x_min {
        (x_min, x_max) = (x_min - 0.1, x_max + 0.1);
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |t: f64| LEFT + (t - x_min) / (x_max - x_min) * plot_w;
    let sy = |v: f64| TOP + (1.0 - v.clamp(0.0, 1.0)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="800" height="500" viewBox="0 0 800 500" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="800" height="500" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="16">Accuracy across temperatures</text>"#,
        LEFT + plot_w / 2.0
    );

    // Axes.
    let (x0, x1, y0, y1) = (LEFT, LEFT + plot_w, TOP + plot_h, TOP);
    let _ = writeln!(svg, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="black"/>"#);
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let y = sy(v);
        let _ = writeln!(svg, r##"<line x1="{:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#dddddd"/>"##, x0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"#, x0 - 6.0, y + 4.0);
    }
    let mut ticks = temps.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for t in ticks {
        let x = sx(t);
        let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{t:.2}</text>"#, y0 + 20.0);
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Temperature</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">Accuracy</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for (k, (cell, rows)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = rows.iter().map(|r| format!("{:.2},{:.2}", sx(r.temperature), sy(r.mean))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline data-series="{cell}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = x1 + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, series_label(*cell));
    }
    svg.push_str("</svg>\n");
    svg
}

fn series_label(cell: Cell) -> &'static str {
    match cell {
        Cell::Overall => "Overall",
        Cell::InstOr => "OR",
        Cell::InstSr => "SR",
        Cell::InstCr => "CR",
        Cell::GroupPair => "OR & SR",
        Cell::GroupTriple => "OR & SR & CR",
    }
}

/// Writes `{cell}.csv` for every cell defined at all temperatures and, when
/// `svg` is set, `curves.svg` with the [`CHART_CELLS`] series. Returns the
/// written paths.
pub fn render_curves(result: &SweepResult, out_dir: impl AsRef<Path>, svg: bool) -> Result<Vec<PathBuf>, ReportError> {
    if !result.is_complete() {
        return Err(SweepError::IncompleteSweep(format!(
            "{} of {} cells finished",
            result.cell_count(),
            result.plan.cell_count()
        ))
        .into());
    }
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let write = |name: String, text: &str| -> Result<PathBuf, ReportError> {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    };

    let mut written = Vec::new();
    let mut series = Vec::new();
    for cell in Cell::ALL {
        // A cell with no instances (say, no CR variants) has no curve.
        let Ok(rows) = curve_data(result, cell) else { continue };
        written.push(write(format!("{cell}.csv"), &curve_csv(&rows))?);
        if CHART_CELLS.contains(&cell) {
            series.push((cell, rows));
        }
    }
    if svg {
        series.sort_by_key(|(cell, _)| CHART_CELLS.iter().position(|c| c == cell));
        written.push(write("curves.svg".into(), &curves_svg(&series))?);
    }
    Ok(written)
}

/// Scores a stored prediction log against a dataset file.
pub fn rescore_from_log(prediction_log: impl AsRef<Path>, dataset: impl AsRef<Path>) -> Result<ScoreBreakdown, ReportError> {
    rescore_from_log_with(prediction_log, dataset, &Cell::SCORED)
}

pub fn rescore_from_log_with(
    prediction_log: impl AsRef<Path>,
    dataset: impl AsRef<Path>,
    overall_cells: &[Cell],
) -> Result<ScoreBreakdown, ReportError> {
    let instances = load_dataset(dataset, DatasetFormat::Json)?;
    let records = read_prediction_log(prediction_log)?;
    Ok(score_breakdown_with(&records, &instances, overall_cells)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Accuracy;

    fn breakdown(c: u64, t: u64) -> ScoreBreakdown {
        let a = Accuracy::new(c, t);
        ScoreBreakdown {
            inst_or: a,
            inst_sr: a,
            inst_cr: Accuracy::new(0, 0),
            group_pair: a,
            group_triple: a,
            overall: a.value(),
            overall_cells: Cell::SCORED.to_vec(),
        }
    }

    #[test]
    fn text_table() {
        let text = render_breakdown(&breakdown(3, 3), BreakdownFormat::Text);
        assert!(text.contains("inst_or               3        3      1.00"));
        assert!(text.contains("inst_cr               0        0       n/a"));
        assert!(text.contains("overall               -        -      1.00"));
    }

    #[test]
    fn json_round_trip() {
        let b = breakdown(1, 3);
        let back: ScoreBreakdown = serde_json::from_str(&render_breakdown(&b, BreakdownFormat::Json)).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn csv_keeps_full_precision() {
        let csv = render_breakdown(&breakdown(1, 3), BreakdownFormat::Csv);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("cell,correct,total,value"));
        assert_eq!(lines.next(), Some("inst_or,1,3,0.3333333333333333"));
        assert!(csv.contains("inst_cr,0,0,\n"));
    }

    #[test]
    fn curve_csv_round_trip() {
        let rows = vec![
            CurveRow { temperature: 0.0, mean: 1.0 / 3.0, stddev: 0.0 },
            CurveRow { temperature: 0.2, mean: 0.1 + 0.2, stddev: 2f64.sqrt() / 7.0 },
        ];
        let text = curve_csv(&rows);
        assert!(text.starts_with("temperature,mean,stddev\n"));
        assert_eq!(parse_curve_csv(&text).unwrap(), rows);
        assert_eq!(parse_curve_csv(&curve_csv(&[])).unwrap(), vec![]);
    }

    #[test]
    fn flat_series_is_horizontal() {
        let rows: Vec<CurveRow> = (0..7)
            .map(|i| CurveRow { temperature: i as f64 * 0.2, mean: 0.5, stddev: 0.0 })
            .collect();
        let svg = curves_svg(&[(Cell::Overall, rows)]);
        let points = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        let ys: Vec<&str> = points.split(' ').map(|p| p.split(',').nth(1).unwrap()).collect();
        assert_eq!(ys.len(), 7);
        assert!(ys.iter().all(|y| *y == ys[0]));
        assert!(svg.contains(r#"viewBox="0 0 800 500""#));
        assert!(svg.contains(">1.20<"));
        assert_eq!(svg, curves_svg(&[(Cell::Overall, (0..7).map(|i| CurveRow { temperature: i as f64 * 0.2, mean: 0.5, stddev: 0.0 }).collect())]));
    }
}
