//! CSV ingestion and report files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::data::{Dataset, TestPoint};
use super::ExperimentReport;
use crate::calibration::{CalibrationRecord, CalibrationSet};
use crate::error::{Result, WbcpError};
use crate::synthetic::SyntheticDataset;

/// Every column the reader understands. `id` is required, plus either
/// `score` or both `y_true` and `y_hat`; `x` and `y` come together.
pub const CSV_COLUMNS: [&str; 8] = [
    "id",
    "x",
    "y",
    "score",
    "y_true",
    "y_hat",
    "split",
    "noise_amplitude",
];

pub const SUMMARY_COLUMNS: [&str; 5] = [
    "method",
    "coverage",
    "mean_width",
    "mean_neff",
    "mean_sigma_post",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Split {
    Calibration,
    Test,
}

struct Columns {
    idx: [Option<usize>; 8],
}

impl Columns {
    fn get(&self, name: &str) -> Option<usize> {
        let pos = CSV_COLUMNS
            .iter()
            .position(|c| *c == name)
            .expect("known column");
        self.idx[pos]
    }
}

fn schema(path: &Path, line: u64, message: impl Into<String>) -> WbcpError {
    WbcpError::SchemaError {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_header(path: &Path, header: &csv::StringRecord) -> Result<Columns> {
    let mut idx = [None; 8];
    for (i, name) in header.iter().enumerate() {
        let name = name.trim();
        let pos = CSV_COLUMNS
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| schema(path, 1, format!("unknown column `{name}`")))?;
        if idx[pos].replace(i).is_some() {
            return Err(schema(path, 1, format!("duplicate column `{name}`")));
        }
    }
    let cols = Columns { idx };
    if cols.get("id").is_none() {
        return Err(schema(path, 1, "missing column `id`"));
    }
    if cols.get("x").is_some() != cols.get("y").is_some() {
        return Err(schema(path, 1, "columns `x` and `y` must appear together"));
    }
    if cols.get("y_true").is_some() != cols.get("y_hat").is_some() {
        return Err(schema(
            path,
            1,
            "columns `y_true` and `y_hat` must appear together",
        ));
    }
    if cols.get("score").is_none() && cols.get("y_true").is_none() {
        return Err(schema(
            path,
            1,
            "need a `score` column or `y_true` and `y_hat` columns",
        ));
    }
    Ok(cols)
}

fn number(path: &Path, line: u64, column: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| {
        schema(
            path,
            line,
            format!("column `{column}`: `{raw}` is not a number"),
        )
    })?;
    if !v.is_finite() {
        return Err(WbcpError::NonFiniteValue {
            path: path.to_path_buf(),
            line,
            column: column.to_string(),
        });
    }
    Ok(v)
}

/// Reads a calibration/test file. Rows without a `split` column, or with
/// `split = cal`, are calibration records; `split = test` rows are test
/// points. Scores come from the `score` column when present, otherwise from
/// `|y_true - y_hat|`.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| WbcpError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| schema(path, 1, e.to_string()))?
        .clone();
    let cols = parse_header(path, &header)?;

    let mut records = Vec::new();
    let mut cal_amps = Vec::new();
    let mut test = Vec::new();
    let mut amps_complete = cols.get("noise_amplitude").is_some();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            schema(path, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |name: &str| cols.get(name).map(|i| row.get(i).unwrap_or(""));
        let num = |name: &str| -> Result<Option<f64>> {
            field(name)
                .map(|raw| number(path, line, name, raw))
                .transpose()
        };
        let raw_id = field("id").expect("id column");
        let id: u64 = raw_id.trim().parse().map_err(|_| {
            schema(
                path,
                line,
                format!("column `id`: `{raw_id}` is not a nonnegative integer"),
            )
        })?;
        let location = match (num("x")?, num("y")?) {
            (Some(x), Some(y)) => Some([x, y]),
            _ => None,
        };
        let y_true = num("y_true")?;
        let y_hat = num("y_hat")?;
        let score = match (num("score")?, y_true, y_hat) {
            (Some(s), _, _) => s,
            (None, Some(t), Some(h)) => (t - h).abs(),
            _ => unreachable!("header validated"),
        };
        if score < 0.0 {
            return Err(schema(path, line, format!("negative score {score}")));
        }
        let amplitude = num("noise_amplitude")?;
        let split = match field("split").map(str::trim) {
            None | Some("cal") => Split::Calibration,
            Some("test") => Split::Test,
            Some(other) => {
                return Err(schema(
                    path,
                    line,
                    format!("column `split`: expected `cal` or `test`, got `{other}`"),
                ))
            }
        };
        match split {
            Split::Calibration => {
                records.push(CalibrationRecord {
                    id,
                    score,
                    location,
                });
                match amplitude {
                    Some(a) => cal_amps.push(a),
                    None => amps_complete = false,
                }
            }
            Split::Test => test.push(TestPoint {
                id,
                location,
                score,
                y_true,
                y_hat,
                noise_amplitude: amplitude,
            }),
        }
    }
    if records.is_empty() {
        return Err(schema(path, 1, "no calibration rows"));
    }
    let calibration = CalibrationSet::new(records).map_err(|e| match e {
        WbcpError::InvalidInput(msg) => schema(path, 0, msg),
        other => other,
    })?;
    Ok(Dataset {
        calibration,
        test,
        calibration_amplitudes: amps_complete.then_some(cal_amps),
    })
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| WbcpError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(path)?))
}

fn csv_err(path: &Path, e: csv::Error) -> WbcpError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => WbcpError::io(path, io),
        other => WbcpError::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// Writes the dataset in generation order with every column of the schema.
pub fn write_synthetic_csv(data: &SyntheticDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(CSV_COLUMNS).map_err(|e| csv_err(path, e))?;
    for i in 0..data.len() {
        let [x, y] = data.locations[i];
        let split = if data.is_calibration[i] {
            "cal"
        } else {
            "test"
        };
        w.write_record([
            i.to_string(),
            fmt(x),
            fmt(y),
            fmt(data.scores[i]),
            fmt(data.truth[i]),
            fmt(data.predictions[i]),
            split.to_string(),
            fmt(data.amplitudes[i]),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| WbcpError::io(path, e))
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub summary_csv: PathBuf,
    pub summary_json: PathBuf,
    pub points: Vec<PathBuf>,
    pub samples: Option<PathBuf>,
}

/// Writes `summary.csv`, `summary.json`, one `points_<method>.csv` per
/// method, and `samples.csv` when posterior draws were kept.
pub fn emit_report(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<ReportFiles> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| WbcpError::io(dir, e))?;

    let summary_csv = dir.join("summary.csv");
    let mut w = csv_writer(&summary_csv)?;
    w.write_record(SUMMARY_COLUMNS)
        .map_err(|e| csv_err(&summary_csv, e))?;
    for row in report.summary() {
        w.write_record([
            row.method.clone(),
            fmt(row.coverage),
            fmt(row.mean_width),
            fmt_opt(row.mean_neff),
            fmt_opt(row.mean_sigma_post),
        ])
        .map_err(|e| csv_err(&summary_csv, e))?;
    }
    w.flush().map_err(|e| WbcpError::io(&summary_csv, e))?;

    let summary_json = dir.join("summary.json");
    let json = serde_json::json!({
        "config": report.config,
        "calibration_size": report.calibration_size,
        "test_size": report.test_size,
        "rows": report.summary(),
        "sigma_noise_correlation": report.sigma_noise,
    });
    let mut f = create(&summary_json)?;
    serde_json::to_writer_pretty(&mut f, &json)
        .map_err(|e| WbcpError::io(&summary_json, e.into()))?;
    writeln!(f).map_err(|e| WbcpError::io(&summary_json, e))?;

    let levels = &report.config.hpd_levels;
    let mut points = Vec::new();
    for run in &report.runs {
        let path = dir.join(format!("points_{}.csv", run.variant.name()));
        let mut w = csv_writer(&path)?;
        let mut header: Vec<String> = [
            "id",
            "x",
            "y",
            "lower",
            "upper",
            "width",
            "covered",
            "neff",
            "sigma_post",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(levels.iter().map(|b| format!("hpd_{b}")));
        w.write_record(&header).map_err(|e| csv_err(&path, e))?;
        for p in &run.points {
            let (x, y) = p.location.map_or((None, None), |[x, y]| (Some(x), Some(y)));
            let mut rec = vec![
                p.id.to_string(),
                fmt_opt(x),
                fmt_opt(y),
                fmt(p.interval.lo),
                fmt(p.interval.hi),
                fmt(p.half_width),
                u8::from(p.covered).to_string(),
                fmt_opt(p.neff),
                fmt_opt(p.sigma_post),
            ];
            if p.hpd.is_empty() {
                rec.extend(levels.iter().map(|_| String::new()));
            } else {
                rec.extend(p.hpd.iter().map(|(_, t)| fmt(*t)));
            }
            w.write_record(&rec).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| WbcpError::io(&path, e))?;
        points.push(path);
    }

    let kept: Vec<_> = report
        .runs
        .iter()
        .flat_map(|r| {
            r.points
                .iter()
                .filter_map(move |p| p.samples.as_ref().map(|s| (r, p.id, s)))
        })
        .collect();
    let samples = if kept.is_empty() {
        None
    } else {
        let path = dir.join("samples.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["method", "id", "draw", "lambda"])
            .map_err(|e| csv_err(&path, e))?;
        for (run, id, draws) in kept {
            for (m, v) in draws.iter().enumerate() {
                w.write_record([
                    run.variant.name().to_string(),
                    id.to_string(),
                    m.to_string(),
                    fmt(*v),
                ])
                .map_err(|e| csv_err(&path, e))?;
            }
        }
        w.flush().map_err(|e| WbcpError::io(&path, e))?;
        Some(path)
    };

    Ok(ReportFiles {
        summary_csv,
        summary_json,
        points,
        samples,
    })
}
