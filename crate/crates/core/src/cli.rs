//! Command-line front end: `train`, `ensemble`, `forecast`, `evaluate`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
use crate::config::{ConfigError, TrainConfig};
use crate::data::{format_timestamp, load_csv, parse_timestamp, DataError, LoadSeries};
use crate::evaluation::{metrics, pi_coverage, Combine, Coverage, EvalError, MetricReport};
use crate::forecast::{forecast_ensemble, ForecastError};
use crate::training::{ensemble_train, train, TrainError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "es-adrnn", version, about = "Day-ahead hourly load forecasting with prediction intervals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model and write a checkpoint.
    Train {
        #[command(flatten)]
        common: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train several models with consecutive seeds.
    Ensemble {
        #[command(flatten)]
        common: TrainArgs,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        members: Option<usize>,
    },
    /// Forecast one series with one or more checkpoints (pooled).
    Forecast {
        #[arg(long, num_args = 1.., required = true)]
        ckpt: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        series: String,
        /// First forecast day (YYYY-MM-DD, UTC).
        #[arg(long)]
        from: NaiveDate,
        #[arg(long)]
        days: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        combine: Option<Combine>,
    },
    /// Score a forecast file against actuals and the weekly naive forecast.
    Evaluate {
        #[arg(long)]
        forecast: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    updates_per_epoch: Option<usize>,
    /// Leave this many final days of every series out of training.
    #[arg(long, default_value_t = 0)]
    holdout_days: usize,
    /// Extra `key=value` settings, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Train(TrainError::NonFinite { .. }) => EXIT_NUMERIC,
            CliError::Config(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Train { common, out } => cmd_train(&common, &out),
        Command::Ensemble {
            common,
            out_dir,
            members,
        } => cmd_ensemble(&common, &out_dir, members),
        Command::Forecast {
            ckpt,
            data,
            series,
            from,
            days,
            out,
            combine,
        } => cmd_forecast(&ckpt, &data, &series, from, days, &out, combine),
        Command::Evaluate { forecast, data, out } => cmd_evaluate(&forecast, &data, &out),
    }
}

/// Defaults, then the config file, then `--set`, then dedicated flags.
fn build_config(args: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => TrainConfig::from_file(p)?,
        None => TrainConfig::default(),
    };
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: 0, text: kv.clone() })?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(u) = args.updates_per_epoch {
        cfg.updates_per_epoch = u;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn training_data(args: &TrainArgs) -> Result<Vec<LoadSeries>, CliError> {
    let series = load_csv(&args.data)?;
    let cut = args.holdout_days * 24;
    Ok(series
        .into_iter()
        .map(|s| {
            let keep = s.len().saturating_sub(cut);
            s.truncated(keep)
        })
        .collect())
}

fn cmd_train(args: &TrainArgs, out: &Path) -> Result<(), CliError> {
    let cfg = build_config(args)?;
    let data = training_data(args)?;
    info!("training on {} series, seed {}", data.len(), cfg.seed);
    let outcome = train(&data, &cfg)?;
    let cp = Checkpoint {
        seed: cfg.seed,
        config: cfg,
        params: outcome.params,
        loss_trace: outcome.loss_trace,
    };
    save_checkpoint(&cp, out)?;
    println!(
        "wrote {} (final loss {:.6})",
        out.display(),
        cp.loss_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_ensemble(args: &TrainArgs, out_dir: &Path, members: Option<usize>) -> Result<(), CliError> {
    let cfg = build_config(args)?;
    let members = members.unwrap_or(cfg.ensemble_members);
    if members == 0 {
        return Err(ConfigError::Invalid("--members must be positive".into()).into());
    }
    let data = training_data(args)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let outcomes = ensemble_train(&data, &cfg, members)?;
    for (i, o) in outcomes.into_iter().enumerate() {
        let mut c = cfg.clone();
        c.seed = cfg.seed.wrapping_add(i as u64);
        let path = out_dir.join(format!("member_{i}.ckpt"));
        save_checkpoint(
            &Checkpoint {
                seed: c.seed,
                config: c,
                params: o.params,
                loss_trace: o.loss_trace,
            },
            &path,
        )?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_forecast(
    ckpts: &[PathBuf],
    data: &Path,
    series_id: &str,
    from: NaiveDate,
    days: usize,
    out: &Path,
    combine: Option<Combine>,
) -> Result<(), CliError> {
    let cps = ckpts.iter().map(|p| load_checkpoint(p)).collect::<Result<Vec<_>, _>>()?;
    let cfg = cps[0].config.clone();
    let all = load_csv(data)?;
    let series = all
        .into_iter()
        .find(|s| s.id == series_id)
        .ok_or_else(|| CliError::Input(format!("series `{series_id}` not in {}", data.display())))?;
    let from_ts = Utc.from_utc_datetime(&from.and_hms_opt(0, 0, 0).expect("midnight"));
    let hour = series
        .hour_of(from_ts)
        .ok_or_else(|| CliError::Input(format!("{from} precedes the data of series `{series_id}`")))?;
    let models: Vec<_> = cps.into_iter().map(|c| c.params).collect();
    let how = combine.unwrap_or(cfg.ensemble_combine);
    let bundles = forecast_ensemble(&models, &cfg, &series, hour / 24, days, how)?;

    let mut w = csv::Writer::from_path(out).map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?;
    w.write_record(FORECAST_HEADER)?;
    for b in &bundles {
        for h in 0..b.point.len() {
            let idx = b.out_start + h;
            let actual = series.values.get(idx).map(f64::to_string).unwrap_or_default();
            w.write_record([
                format_timestamp(series.timestamp(idx)),
                series.id.clone(),
                b.point[h].to_string(),
                b.lower[h].to_string(),
                b.upper[h].to_string(),
                actual,
            ])?;
        }
    }
    w.flush().map_err(io_err(out))?;
    println!("wrote {} rows to {}", bundles.len() * 24, out.display());
    Ok(())
}

pub const FORECAST_HEADER: [&str; 6] = ["timestamp", "series_id", "point", "lower", "upper", "actual"];

/// One row of a forecast file.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub timestamp: DateTime<Utc>,
    pub series_id: String,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub actual: Option<f64>,
}

pub fn read_forecast_csv(path: &Path) -> Result<Vec<ForecastRow>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataError::Parse {
            line: 0,
            reason: format!("{}: {e}", path.display()),
        })?;
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != FORECAST_HEADER {
        return Err(DataError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |reason: String| DataError::Parse { line, reason };
        let num = |i: usize| -> Result<f64, DataError> {
            rec[i].parse::<f64>().map_err(|_| err(format!("bad number {:?}", &rec[i])))
        };
        rows.push(ForecastRow {
            timestamp: parse_timestamp(&rec[0]).ok_or_else(|| err(format!("bad timestamp {:?}", &rec[0])))?,
            series_id: rec[1].to_string(),
            point: num(2)?,
            lower: num(3)?,
            upper: num(4)?,
            actual: if rec[5].is_empty() { None } else { Some(num(5)?) },
        });
    }
    Ok(rows)
}

/// Scores of one group of forecast rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub scope: String,
    pub rows: usize,
    pub model: MetricReport,
    pub naive: MetricReport,
    pub coverage: Coverage,
}

fn summarize(scope: String, actual: &[f64], point: &[f64], naive: &[f64], lo: &[f64], up: &[f64]) -> Result<EvalSummary, EvalError> {
    Ok(EvalSummary {
        scope,
        rows: actual.len(),
        model: metrics(actual, point)?,
        naive: metrics(actual, naive)?,
        coverage: pi_coverage(actual, lo, up)?,
    })
}

/// Per-series summaries followed by one over all rows.
pub fn evaluate_rows(rows: &[ForecastRow], data: &[LoadSeries]) -> Result<Vec<EvalSummary>, CliError> {
    let by_id: HashMap<&str, &LoadSeries> = data.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut groups: Vec<(String, [Vec<f64>; 5])> = Vec::new();
    for r in rows {
        let s = by_id
            .get(r.series_id.as_str())
            .ok_or_else(|| CliError::Input(format!("series `{}` not in data", r.series_id)))?;
        let lookup = |ts: DateTime<Utc>| s.hour_of(ts).and_then(|h| s.values.get(h).copied());
        let actual = lookup(r.timestamp).ok_or_else(|| {
            CliError::Input(format!("no actual load for {} at {}", r.series_id, format_timestamp(r.timestamp)))
        })?;
        if let Some(a) = r.actual {
            if (a - actual).abs() > 1e-9 * actual.abs().max(1.0) {
                warn!("{} {}: forecast file says actual {a}, data says {actual}", r.series_id, r.timestamp);
            }
        }
        let naive = lookup(r.timestamp - chrono::Duration::hours(168)).ok_or_else(|| {
            CliError::Input(format!("no load a week before {} for {}", format_timestamp(r.timestamp), r.series_id))
        })?;
        let pos = match groups.iter().position(|g| g.0 == r.series_id) {
            Some(p) => p,
            None => {
                groups.push((r.series_id.clone(), Default::default()));
                groups.len() - 1
            }
        };
        let g = &mut groups[pos].1;
        for (v, x) in g.iter_mut().zip([actual, r.point, naive, r.lower, r.upper]) {
            v.push(x);
        }
    }
    if groups.is_empty() {
        return Err(EvalError::Empty.into());
    }
    let mut out = Vec::new();
    let mut pooled: [Vec<f64>; 5] = Default::default();
    for (id, g) in &groups {
        out.push(summarize(id.clone(), &g[0], &g[1], &g[2], &g[3], &g[4])?);
        for (p, v) in pooled.iter_mut().zip(g) {
            p.extend_from_slice(v);
        }
    }
    out.push(summarize("ALL".into(), &pooled[0], &pooled[1], &pooled[2], &pooled[3], &pooled[4])?);
    Ok(out)
}

/// Delimited report: one line per scope and forecaster.
pub fn report_csv(summaries: &[EvalSummary]) -> String {
    let mut s = format!(
        "scope,forecaster,rows,{},inside,below,above\n",
        MetricReport::COLUMNS.join(",")
    );
    for e in summaries {
        for (name, m) in [("model", &e.model), ("naive", &e.naive)] {
            let vals: Vec<String> = m.values().iter().map(f64::to_string).collect();
            let cov = if name == "model" {
                format!("{},{},{}", e.coverage.inside, e.coverage.below, e.coverage.above)
            } else {
                ",,".into()
            };
            s.push_str(&format!("{},{name},{},{},{cov}\n", e.scope, e.rows, vals.join(",")));
        }
    }
    s
}

pub fn report_table(summaries: &[EvalSummary]) -> String {
    let mut s = format!(
        "{:<10} {:<6} {:>6} {:>8} {:>8} {:>8} {:>10} {:>8} {:>8} {:>7} {:>6} {:>6}\n",
        "scope", "model", "rows", "MAPE", "MdAPE", "IqrAPE", "RMSE", "MPE", "StdPE", "inside", "below", "above"
    );
    for e in summaries {
        for (name, m) in [("model", &e.model), ("naive", &e.naive)] {
            s.push_str(&format!(
                "{:<10} {:<6} {:>6} {:>8.3} {:>8.3} {:>8.3} {:>10.2} {:>8.3} {:>8.3}",
                e.scope, name, e.rows, m.mape, m.mdape, m.iqrape, m.rmse, m.mpe, m.stdpe
            ));
            if name == "model" {
                s.push_str(&format!(
                    " {:>7.2} {:>6.2} {:>6.2}",
                    e.coverage.inside, e.coverage.below, e.coverage.above
                ));
            }
            s.push('\n');
        }
    }
    s
}

fn cmd_evaluate(forecast: &Path, data: &Path, out: &Path) -> Result<(), CliError> {
    let rows = read_forecast_csv(forecast)?;
    let series = load_csv(data)?;
    let summaries = evaluate_rows(&rows, &series)?;
    fs::write(out, report_csv(&summaries)).map_err(io_err(out))?;
    print!("{}", report_table(&summaries));
    Ok(())
}
