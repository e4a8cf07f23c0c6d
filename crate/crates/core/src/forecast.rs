//! Rolling day-ahead forecasts with a trained model.
//!
//! The walk starts `warmup_test_weeks` before the first forecast day so the
//! recurrent state and the smoothing settle on real data. Inside the data
//! each day is forecast from actuals up to its midnight; past the end of the
//! data the smoothing is fed the model's own point forecasts.

use chrono::NaiveDate;
use thiserror::Error;

use crate::autodiff::Tape;
use crate::config::TrainConfig;
use crate::data::LoadSeries;
use crate::evaluation::{ensemble_combine_runs, Combine, EvalError};
use crate::model::ModelParams;
use crate::network::{NetworkError, DALPHA_INDEX, DBETA_INDEX, LOWER_OFFSET, POINT_OFFSET, UPPER_OFFSET};
use crate::preprocessing::{postprocess, INPUT_HOURS, OUTPUT_HOURS};
use crate::training::{SeriesWalk, WalkError};

/// Minimum number of unscored days before the first forecast.
pub const MIN_WARMUP_DAYS: usize = 7;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("forecasting from day {day} needs {needed} days of history, series {series} has {available}")]
    NotEnoughHistory {
        series: String,
        day: usize,
        needed: usize,
        available: usize,
    },
    #[error("forecast start day {day} lies past the end of series {series} ({days} days)")]
    PastEnd { series: String, day: usize, days: usize },
    #[error("no models given")]
    NoModels,
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Forecast for one day, in MW, with `lower <= point <= upper` at every hour.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastBundle {
    pub date: NaiveDate,
    /// First forecast hour as an offset into the series.
    pub out_start: usize,
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Coefficient corrections emitted on this day.
    pub dalpha: f64,
    pub dbeta: f64,
    /// Coefficients used while this day's hours are smoothed.
    pub alpha: f64,
    pub beta: f64,
}

/// Sorts each hour's (lower, point, upper) triple so the quantiles never cross.
pub fn repair_crossing(point: &mut [f64], lower: &mut [f64], upper: &mut [f64]) {
    for h in 0..point.len() {
        let mut t = [lower[h], point[h], upper[h]];
        t.sort_by(f64::total_cmp);
        [lower[h], point[h], upper[h]] = t;
    }
}

/// Number of warm-up days actually used when forecasting from `day`.
pub fn warmup_days(cfg: &TrainConfig, day: usize) -> usize {
    let available = (day * OUTPUT_HOURS).saturating_sub(INPUT_HOURS) / OUTPUT_HOURS;
    cfg.warmup_test_steps().min(available)
}

/// Forecasts `days` consecutive days starting at day index `first_day`
/// (days counted from the series start).
pub fn forecast_series(
    params: &ModelParams,
    cfg: &TrainConfig,
    series: &LoadSeries,
    first_day: usize,
    days: usize,
) -> Result<Vec<ForecastBundle>, ForecastError> {
    let series_days = series.len() / OUTPUT_HOURS;
    if first_day > series_days {
        return Err(ForecastError::PastEnd {
            series: series.id.clone(),
            day: first_day,
            days: series_days,
        });
    }
    let warm = warmup_days(cfg, first_day);
    if warm < MIN_WARMUP_DAYS {
        return Err(ForecastError::NotEnoughHistory {
            series: series.id.clone(),
            day: first_day,
            needed: INPUT_HOURS / OUTPUT_HOURS + MIN_WARMUP_DAYS,
            available: first_day,
        });
    }
    let start = first_day * OUTPUT_HOURS - INPUT_HOURS - warm * OUTPUT_HOURS;

    let mut tape = Tape::with_capacity(1 << 16);
    let vars = params.register(&mut tape)?;
    let mut walk = SeriesWalk::begin(&mut tape, &vars, &series.values, series.start.date_naive(), start, warm)?;
    let mut out = Vec::with_capacity(days);
    for k in 0..warm + days {
        let day = walk.step(&mut tape)?;
        let from = day.out_start;
        let have_actuals = from + OUTPUT_HOURS <= series.len();
        if k < warm {
            if k + 1 < warm + days {
                walk.advance(&mut tape, None)?;
            }
            continue;
        }
        let net = tape.value(day.net_out);
        let shat = tape.value(day.shat_out);
        let head = |offset: usize| -> Vec<f64> {
            (0..OUTPUT_HOURS)
                .map(|h| postprocess(net[offset + h], day.zbar, shat[h]))
                .collect()
        };
        let (mut point, mut lower, mut upper) = (head(POINT_OFFSET), head(LOWER_OFFSET), head(UPPER_OFFSET));
        repair_crossing(&mut point, &mut lower, &mut upper);
        let bundle = ForecastBundle {
            date: day.date,
            out_start: from,
            dalpha: net[DALPHA_INDEX],
            dbeta: net[DBETA_INDEX],
            alpha: tape.scalar(day.alpha),
            beta: tape.scalar(day.beta),
            point,
            lower,
            upper,
        };
        if k + 1 < warm + days {
            if have_actuals {
                walk.advance(&mut tape, None)?;
            } else {
                walk.advance(&mut tape, Some(&bundle.point))?;
            }
        }
        out.push(bundle);
    }
    Ok(out)
}

/// Forecasts with every model and pools them day by day.
pub fn forecast_ensemble(
    models: &[ModelParams],
    cfg: &TrainConfig,
    series: &LoadSeries,
    first_day: usize,
    days: usize,
    how: Combine,
) -> Result<Vec<ForecastBundle>, ForecastError> {
    if models.is_empty() {
        return Err(ForecastError::NoModels);
    }
    let runs = models
        .iter()
        .map(|m| forecast_series(m, cfg, series, first_day, days))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ensemble_combine_runs(&runs, how)?)
}
