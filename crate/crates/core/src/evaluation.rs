//! Forecast-quality metrics, interval coverage, the weekly naive baseline,
//! ensemble combination and a synthetic load generator.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use chrono::{NaiveDate, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::data::LoadSeries;
use crate::forecast::ForecastBundle;
use crate::preprocessing::OUTPUT_HOURS;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{what}: lengths differ ({left} vs {right})")]
    Length { what: &'static str, left: usize, right: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("actual load at position {0} is not positive")]
    NonPositiveActual(usize),
    #[error("interval bounds cross at position {index}: lower {lower} > upper {upper}")]
    CrossedBounds { index: usize, lower: f64, upper: f64 },
    #[error("day {day} has no history a week earlier")]
    NoHistory { day: usize },
    #[error("ensemble members are not aligned: {0}")]
    Misaligned(String),
    #[error("synthetic series need at least 28 days, got {0}")]
    TooFewDays(usize),
}

/// How ensemble members are pooled, per hour and per bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Combine {
    #[default]
    Mean,
    Median,
}

impl fmt::Display for Combine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Combine::Mean => "mean",
            Combine::Median => "median",
        })
    }
}

impl FromStr for Combine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "mean" => Ok(Combine::Mean),
            "median" => Ok(Combine::Median),
            other => Err(format!("expected `mean` or `median`, got `{other}`")),
        }
    }
}

/// Percentage-error metrics. `PE = 100 (z - zhat) / z`, so overprediction
/// gives negative MPE.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricReport {
    pub mape: f64,
    pub mdape: f64,
    pub iqrape: f64,
    /// In the units of the loads (MW).
    pub rmse: f64,
    pub mpe: f64,
    pub stdpe: f64,
}

impl MetricReport {
    pub const COLUMNS: [&'static str; 6] = ["mape", "mdape", "iqrape", "rmse", "mpe", "stdpe"];

    pub fn values(&self) -> [f64; 6] {
        [self.mape, self.mdape, self.iqrape, self.rmse, self.mpe, self.stdpe]
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn metrics(actual: &[f64], forecast: &[f64]) -> Result<MetricReport, EvalError> {
    if actual.len() != forecast.len() {
        return Err(EvalError::Length {
            what: "actual vs forecast",
            left: actual.len(),
            right: forecast.len(),
        });
    }
    if actual.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(i) = actual.iter().position(|z| !(*z > 0.0)) {
        return Err(EvalError::NonPositiveActual(i));
    }
    let n = actual.len() as f64;
    let pe: Vec<f64> = actual.iter().zip(forecast).map(|(z, f)| 100.0 * (z - f) / z).collect();
    let mut ape: Vec<f64> = pe.iter().map(|e| e.abs()).collect();
    ape.sort_by(f64::total_cmp);
    let mpe = pe.iter().sum::<f64>() / n;
    let var = pe.iter().map(|e| (e - mpe).powi(2)).sum::<f64>() / n;
    let mse = actual.iter().zip(forecast).map(|(z, f)| (z - f).powi(2)).sum::<f64>() / n;
    Ok(MetricReport {
        mape: ape.iter().sum::<f64>() / n,
        mdape: quantile_sorted(&ape, 0.5),
        iqrape: quantile_sorted(&ape, 0.75) - quantile_sorted(&ape, 0.25),
        rmse: mse.sqrt(),
        mpe,
        stdpe: var.sqrt(),
    })
}

/// Percentages of actuals inside, below and above their intervals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Coverage {
    pub inside: f64,
    pub below: f64,
    pub above: f64,
}

/// Bounds are inclusive.
pub fn pi_coverage(actual: &[f64], lower: &[f64], upper: &[f64]) -> Result<Coverage, EvalError> {
    for (what, other) in [("actual vs lower", lower), ("actual vs upper", upper)] {
        if other.len() != actual.len() {
            return Err(EvalError::Length {
                what,
                left: actual.len(),
                right: other.len(),
            });
        }
    }
    if actual.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut below, mut above) = (0usize, 0usize);
    for (i, ((z, lo), up)) in actual.iter().zip(lower).zip(upper).enumerate() {
        if lo > up {
            return Err(EvalError::CrossedBounds {
                index: i,
                lower: *lo,
                upper: *up,
            });
        }
        if z < lo {
            below += 1;
        } else if z > up {
            above += 1;
        }
    }
    let n = actual.len() as f64;
    let below = 100.0 * below as f64 / n;
    let above = 100.0 * above as f64 / n;
    Ok(Coverage {
        inside: 100.0 - below - above,
        below,
        above,
    })
}

/// The 24 loads of day `day - 7` (days counted from the series start).
pub fn naive_forecast(series: &LoadSeries, day: usize) -> Result<Vec<f64>, EvalError> {
    let src = day.checked_sub(7).ok_or(EvalError::NoHistory { day })?;
    series
        .values
        .get(src * OUTPUT_HOURS..(src + 1) * OUTPUT_HOURS)
        .map(<[f64]>::to_vec)
        .ok_or(EvalError::NoHistory { day })
}

fn pool(values: &mut [f64], how: Combine) -> f64 {
    match how {
        Combine::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Combine::Median => {
            values.sort_by(f64::total_cmp);
            quantile_sorted(values, 0.5)
        }
    }
}

/// Pools aligned member forecasts of one day hour by hour.
pub fn ensemble_combine(bundles: &[ForecastBundle], how: Combine) -> Result<ForecastBundle, EvalError> {
    let first = bundles.first().ok_or(EvalError::Empty)?;
    for b in bundles {
        if b.date != first.date || b.point.len() != first.point.len() {
            return Err(EvalError::Misaligned(format!(
                "{} ({} h) vs {} ({} h)",
                first.date,
                first.point.len(),
                b.date,
                b.point.len()
            )));
        }
    }
    let hourly = |get: fn(&ForecastBundle) -> &Vec<f64>| -> Vec<f64> {
        (0..first.point.len())
            .map(|h| pool(&mut bundles.iter().map(|b| get(b)[h]).collect::<Vec<_>>(), how))
            .collect()
    };
    let scalar = |get: fn(&ForecastBundle) -> f64| pool(&mut bundles.iter().map(get).collect::<Vec<_>>(), how);
    Ok(ForecastBundle {
        date: first.date,
        out_start: first.out_start,
        point: hourly(|b| &b.point),
        lower: hourly(|b| &b.lower),
        upper: hourly(|b| &b.upper),
        dalpha: scalar(|b| b.dalpha),
        dbeta: scalar(|b| b.dbeta),
        alpha: scalar(|b| b.alpha),
        beta: scalar(|b| b.beta),
    })
}

/// Combines whole runs (one bundle per day each) day by day.
pub fn ensemble_combine_runs(runs: &[Vec<ForecastBundle>], how: Combine) -> Result<Vec<ForecastBundle>, EvalError> {
    let first = runs.first().ok_or(EvalError::Empty)?;
    if let Some(r) = runs.iter().find(|r| r.len() != first.len()) {
        return Err(EvalError::Misaligned(format!("{} days vs {} days", first.len(), r.len())));
    }
    (0..first.len())
        .map(|d| ensemble_combine(&runs.iter().map(|r| r[d].clone()).collect::<Vec<_>>(), how))
        .collect()
}

/// First day of every synthetic series (a Monday).
pub fn synth_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, 1, 4).expect("valid date")
}

/// Shape of the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub noise_sd: f64,
    pub yearly_amplitude: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            noise_sd: 0.02,
            yearly_amplitude: 0.1,
        }
    }
}

/// `base * yearly * weekly * daily * (1 + noise)` with smooth profiles
/// whose phases and amplitudes vary slightly with `seed`.
pub fn synth_generate(seed: u64, days: usize, base: f64) -> Result<LoadSeries, EvalError> {
    synth_generate_with(seed, days, base, SynthOptions::default())
}

pub fn synth_generate_with(seed: u64, days: usize, base: f64, opts: SynthOptions) -> Result<LoadSeries, EvalError> {
    if days < 28 {
        return Err(EvalError::TooFewDays(days));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let year_phase = rng.random_range(0.0..2.0 * PI);
    let daily_amp = rng.random_range(0.10..0.16);
    let evening = rng.random_range(0.03..0.06);
    let weekend = rng.random_range(0.08..0.14);
    let noise = Normal::new(0.0, opts.noise_sd).expect("finite noise level");

    let hours = days * OUTPUT_HOURS;
    let mut values = Vec::with_capacity(hours);
    for tau in 0..hours {
        let t = tau as f64;
        let yearly = 1.0 + opts.yearly_amplitude * (2.0 * PI * t / (365.25 * 24.0) + year_phase).cos();
        // hour of week 0 is Monday 00:00; the dip is centred on Sunday 00:00
        let week_pos = 2.0 * PI * (t - 144.0) / 168.0;
        let weekly = 1.0 - weekend * (0.5 + 0.5 * week_pos.cos()).powi(3);
        let day_pos = 2.0 * PI * (t % 24.0) / 24.0;
        let daily = 1.0 - daily_amp * (day_pos - 0.6).cos() + evening * (2.0 * day_pos - 1.2).sin();
        let eps: f64 = if opts.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        values.push(base * yearly * weekly * daily * (1.0 + eps).max(0.05));
    }
    Ok(LoadSeries {
        id: format!("SYN{seed}"),
        start: Utc.from_utc_datetime(&synth_start().and_hms_opt(0, 0, 0).expect("midnight")),
        values,
    })
}
