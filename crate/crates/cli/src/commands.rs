use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;
use wbcp::experiments::{
    emit_report, estimate_at, ingest_csv, run_experiment, write_synthetic_csv, Dataset,
    ExperimentConfig, MethodVariant,
};
use wbcp::posterior::DEFAULT_HPD_LEVELS;
use wbcp::synthetic::{generate_dataset, SyntheticConfig};
use wbcp::validation::{run_suite, CheckName, OracleConfig};
use wbcp::{prediction_interval, Point};

use crate::{CliError, Common};

#[derive(Debug, Clone, Args)]
pub struct SyntheticArgs {
    /// Number of synthetic locations.
    #[arg(long, default_value_t = 3000)]
    pub n: usize,
    /// Length scale of the latent Gaussian random field.
    #[arg(long, default_value_t = 2.0)]
    pub ell: f64,
    /// Share of locations placed in the dense region.
    #[arg(long, default_value_t = 0.7)]
    pub dense_fraction: f64,
    /// Share of points used for calibration.
    #[arg(long, default_value_t = 0.5)]
    pub split_fraction: f64,
    /// Drop the noise term (scores become zero).
    #[arg(long)]
    pub zero_noise: bool,
}

impl SyntheticArgs {
    fn config(&self, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            n: self.n,
            ell: self.ell,
            dense_fraction: self.dense_fraction,
            split_fraction: self.split_fraction,
            seed,
            zero_noise: self.zero_noise,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MethodArgs {
    /// Miscoverage level.
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// HPD level of the Bayesian methods.
    #[arg(long, default_value_t = 0.9)]
    pub beta: f64,
    /// Monte Carlo draws per posterior.
    #[arg(long, default_value_t = 1000)]
    pub mc: usize,
    /// Fixed kernel bandwidth.
    #[arg(long, default_value_t = 1.0)]
    pub bandwidth: f64,
    /// Adaptive bandwidth scale.
    #[arg(long, default_value_t = 1.0)]
    pub h0: f64,
    /// Neighbors used by the adaptive bandwidth.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// HPD levels reported per point (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_HPD_LEVELS.to_vec())]
    pub hpd_levels: Vec<f64>,
}

impl MethodArgs {
    fn config(&self, seed: u64, sample_ids: Vec<u64>) -> ExperimentConfig {
        ExperimentConfig {
            alpha: self.alpha,
            beta: self.beta,
            mc_samples: self.mc,
            bandwidth: self.bandwidth,
            h0: self.h0,
            k_neighbors: self.k,
            seed,
            hpd_levels: self.hpd_levels.clone(),
            sample_ids,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub common: Common,
    /// Input CSV; without it a synthetic dataset is generated.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Methods to run (comma separated, or `all`).
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub variants: Vec<String>,
    /// Test-point ids whose posterior draws go to samples.csv.
    #[arg(long, value_delimiter = ',')]
    pub sample_ids: Vec<u64>,
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    /// Calibration CSV; without it the synthetic calibration split is used.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Query location `x,y`.
    #[arg(long, value_name = "X,Y", conflicts_with = "point_file")]
    pub point: Option<String>,
    /// CSV of query points with columns x, y and optional id, y_hat.
    #[arg(long, value_name = "PATH")]
    pub point_file: Option<PathBuf>,
    /// Method used for the threshold.
    #[arg(long = "method", default_value = "GeoBCP")]
    pub method_name: String,
    /// Include the posterior draws in the output.
    #[arg(long)]
    pub emit_samples: bool,
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Run only these checks (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
}

fn out_dir(common: &Common) -> Result<PathBuf, CliError> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{}: no such file", path.display())))
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

fn load_dataset(
    input: Option<&Path>,
    synthetic: &SyntheticArgs,
    seed: u64,
) -> Result<Dataset, CliError> {
    match input {
        Some(path) => Ok(ingest_csv(path)?),
        None => Ok(generate_dataset(&synthetic.config(seed))?.to_dataset()?),
    }
}

pub fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    let cfg = args.synthetic.config(args.common.seed);
    cfg.validate()?;
    let dir = out_dir(&args.common)?;
    let data = generate_dataset(&cfg)?;
    write_synthetic_csv(&data, dir.join("synthetic.csv"))?;
    let meta = json!({
        "seed": cfg.seed,
        "n": cfg.n,
        "ell": cfg.ell,
        "dense_fraction": cfg.dense_fraction,
        "split_fraction": cfg.split_fraction,
        "zero_noise": cfg.zero_noise,
        "calibration_size": cfg.calibration_count(),
        "morans_i": data.morans_i,
    });
    write_json(&dir.join("meta.json"), &meta)?;
    println!(
        "wrote {} rows to {}",
        data.len(),
        dir.join("synthetic.csv").display()
    );
    Ok(())
}

fn parse_variants(
    names: &[String],
    cfg: &ExperimentConfig,
) -> Result<Vec<MethodVariant>, CliError> {
    if names.iter().any(|n| n.eq_ignore_ascii_case("all")) {
        return Ok(MethodVariant::all(cfg));
    }
    names
        .iter()
        .map(|n| {
            MethodVariant::from_name(n, cfg).ok_or_else(|| {
                CliError::Input(format!(
                    "unknown method `{n}` (expected one of {} or all)",
                    MethodVariant::NAMES.join(", ")
                ))
            })
        })
        .collect()
}

pub fn experiment(args: &ExperimentArgs) -> Result<(), CliError> {
    let cfg = args
        .method
        .config(args.common.seed, args.sample_ids.clone());
    cfg.validate()?;
    let variants = parse_variants(&args.variants, &cfg)?;
    if let Some(p) = &args.input {
        require_file(p)?;
    } else {
        args.synthetic.config(cfg.seed).validate()?;
    }
    let dir = out_dir(&args.common)?;
    let data = load_dataset(args.input.as_deref(), &args.synthetic, cfg.seed)?;
    let report = run_experiment(&data, &variants, &cfg)?;
    emit_report(&report, &dir)?;
    println!(
        "{:<12} {:>9} {:>11} {:>10} {:>10}",
        "method", "coverage", "mean_width", "mean_neff", "sigma_post"
    );
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    for row in report.summary() {
        println!(
            "{:<12} {:>9.4} {:>11.4} {:>10} {:>10}",
            row.method,
            row.coverage,
            row.mean_width,
            opt(row.mean_neff),
            opt(row.mean_sigma_post)
        );
    }
    for s in &report.sigma_noise {
        println!(
            "{}: pearson r(sigma_post, noise amplitude) = {:.4}",
            s.method, s.pearson_r
        );
    }
    Ok(())
}

struct Query {
    id: u64,
    at: Point,
    y_hat: f64,
}

fn parse_point(text: &str) -> Result<Point, CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || CliError::Input(format!("--point expects `x,y`, got `{text}`"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let x: f64 = parts[0].parse().map_err(|_| bad())?;
    let y: f64 = parts[1].parse().map_err(|_| bad())?;
    if !(x.is_finite() && y.is_finite()) {
        return Err(bad());
    }
    Ok([x, y])
}

fn read_points(path: &Path) -> Result<Vec<Query>, CliError> {
    let err = |line: u64, m: String| CliError::Input(format!("{}:{line}: {m}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| err(1, e.to_string()))?;
    let headers = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    if let Some(h) = headers
        .iter()
        .find(|h| !["id", "x", "y", "y_hat"].contains(&h.trim()))
    {
        return Err(err(1, format!("unknown column `{h}`")));
    }
    let (Some(xc), Some(yc)) = (col("x"), col("y")) else {
        return Err(err(1, "columns x and y are required".into()));
    };
    let (idc, yhc) = (col("id"), col("y_hat"));
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| err(i as u64 + 2, e.to_string()))?;
        let line = rec.position().map_or(i as u64 + 2, |p| p.line());
        let num = |c: usize, name: &str| -> Result<f64, CliError> {
            let v: f64 = rec[c]
                .trim()
                .parse()
                .map_err(|_| err(line, format!("bad `{name}` value `{}`", &rec[c])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(line, format!("non-finite value in column `{name}`")))
            }
        };
        let id = match idc {
            Some(c) => rec[c]
                .trim()
                .parse()
                .map_err(|_| err(line, format!("bad id `{}`", &rec[c])))?,
            None => i as u64,
        };
        out.push(Query {
            id,
            at: [num(xc, "x")?, num(yc, "y")?],
            y_hat: yhc.map(|c| num(c, "y_hat")).transpose()?.unwrap_or(0.0),
        });
    }
    if out.is_empty() {
        return Err(err(1, "no query points".into()));
    }
    Ok(out)
}

pub fn predict(args: &PredictArgs) -> Result<(), CliError> {
    let cfg = args.method.config(args.common.seed, Vec::new());
    cfg.validate()?;
    let variant = MethodVariant::from_name(&args.method_name, &cfg)
        .ok_or_else(|| CliError::Input(format!("unknown method `{}`", args.method_name)))?;
    let queries = match (&args.point, &args.point_file) {
        (Some(p), None) => vec![Query {
            id: 0,
            at: parse_point(p)?,
            y_hat: 0.0,
        }],
        (None, Some(path)) => {
            require_file(path)?;
            read_points(path)?
        }
        _ => {
            return Err(CliError::Input(
                "give exactly one of --point or --point-file".into(),
            ))
        }
    };
    if let Some(p) = &args.input {
        require_file(p)?;
    }
    let dir = args
        .common
        .out
        .as_ref()
        .map(|_| out_dir(&args.common))
        .transpose()?;
    let data = load_dataset(args.input.as_deref(), &args.synthetic, cfg.seed)?;
    let points = queries
        .iter()
        .map(|q| -> Result<serde_json::Value, CliError> {
            let est = estimate_at(&variant, &data.calibration, Some(q.at), q.id, &cfg)?;
            let interval = prediction_interval(q.y_hat, est.half_width);
            let post = est.posterior.as_ref();
            let hpd: Vec<_> = post
                .map(|p| p.hpd_levels(&cfg.hpd_levels))
                .unwrap_or_default()
                .into_iter()
                .map(|(beta, lambda)| json!({"beta": beta, "lambda": lambda}))
                .collect();
            let mut v = json!({
                "id": q.id,
                "x": q.at[0],
                "y": q.at[1],
                "y_hat": q.y_hat,
                "threshold": est.half_width,
                "interval": {"lower": interval.lo, "upper": interval.hi},
                "neff": est.neff,
                "wcp_threshold": est.wcp_threshold,
                "sigma_post": post.map(|p| p.sigma_post),
                "lambda_hpd": hpd,
            });
            if args.emit_samples {
                v["samples"] = json!(post.map(|p| &p.samples));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let out = json!({
        "method": variant,
        "alpha": cfg.alpha,
        "seed": cfg.seed,
        "mc_samples": cfg.mc_samples,
        "calibration_size": data.calibration.len(),
        "points": points,
    });
    match dir {
        Some(dir) => write_json(&dir.join("prediction.json"), &out)?,
        None => println!(
            "{}",
            serde_json::to_string_pretty(&out).map_err(|e| CliError::Internal(e.to_string()))?
        ),
    }
    Ok(())
}

pub fn validate(args: &ValidateArgs) -> Result<(), CliError> {
    let only = args
        .only
        .iter()
        .map(|s| CheckName::parse(s))
        .collect::<Result<Vec<_>, _>>()?;
    let dir = out_dir(&args.common)?;
    let cfg = OracleConfig {
        seed: args.common.seed,
        ..OracleConfig::default()
    };
    let report = run_suite(&cfg, &only)?;
    let value = serde_json::to_value(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    write_json(&dir.join("validation.json"), &value)?;
    for c in &report.checks {
        println!(
            "{:<14} {}  statistic {:.6}  threshold {}",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.statistic,
            c.threshold
        );
        for f in &c.flags {
            println!("{:<14} note: {f}", "");
        }
    }
    if report.pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed)
    }
}
