//! Day-by-day walk of the hybrid model over one series.
//!
//! A walk starting at hour `start` first runs the smoothing over
//! `start..start + 168`. Step `k` then reads the input window
//! `start + 24k .. start + 24k + 168`, produces the network output for the
//! following 24 hours and sets the coefficients used while those hours are
//! consumed by [`SeriesWalk::advance`].

use chrono::{Duration, NaiveDate};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::holt_winters::{EsError, EsState, SEASON};
use crate::model::ModelVars;
use crate::network::{forward_step, NetState, NetworkError, DALPHA_INDEX, DBETA_INDEX};
use crate::preprocessing::{calendar_onehots, PreprocessError, INPUT_HOURS, OUTPUT_HOURS};

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("walk needs {needed} hours from hour {start}, series has {available}")]
    TooShort {
        start: usize,
        needed: usize,
        available: usize,
    },
    #[error("walk must start at a midnight hour, got {0}")]
    Misaligned(usize),
    #[error(transparent)]
    Es(#[from] EsError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Hours of history used to initialize the smoothing for a walk with
/// `warmup_steps` unscored steps: every whole week before the first scored
/// output window, at least two.
pub fn init_prefix_hours(warmup_steps: usize) -> usize {
    let weeks = (INPUT_HOURS + OUTPUT_HOURS * warmup_steps) / SEASON;
    weeks.max(2) * SEASON
}

/// Hours a walk of `steps` daily steps touches, the last output window included.
pub fn walk_hours(steps: usize) -> usize {
    INPUT_HOURS + OUTPUT_HOURS * steps
}

/// What the network produced on one daily step.
#[derive(Debug, Clone)]
pub struct DailyStep {
    /// First hour of the forecast window, as an offset into the series.
    pub out_start: usize,
    pub date: NaiveDate,
    /// Mean load of the input window.
    pub zbar: f64,
    /// Seasonal factors for the 24 forecast hours (length-24 vector).
    pub shat_out: Var,
    /// Raw 74-wide head output.
    pub net_out: Var,
    /// Coefficients in force for the forecast window (scalars).
    pub alpha: Var,
    pub beta: Var,
}

pub struct SeriesWalk<'a> {
    loads: &'a [f64],
    first_day: NaiveDate,
    vars: ModelVars,
    es: EsState,
    net: NetState,
}

impl<'a> SeriesWalk<'a> {
    /// `loads[0]` falls at midnight of `first_day`. Hours
    /// `start .. start + init_prefix_hours(warmup_steps)` initialize the
    /// smoothing, and the first 168 hours are consumed immediately.
    pub fn begin(
        tape: &mut Tape,
        vars: &ModelVars,
        loads: &'a [f64],
        first_day: NaiveDate,
        start: usize,
        warmup_steps: usize,
    ) -> Result<Self, WalkError> {
        if start % OUTPUT_HOURS != 0 {
            return Err(WalkError::Misaligned(start));
        }
        let prefix = init_prefix_hours(warmup_steps);
        let needed = prefix.max(INPUT_HOURS);
        if start + needed > loads.len() {
            return Err(WalkError::TooShort {
                start,
                needed,
                available: loads.len(),
            });
        }
        let mut es = EsState::init(tape, &loads[start..start + prefix], start, vars.alpha_logit, vars.beta_logit)?;
        es.update_many(tape, &loads[start..start + INPUT_HOURS])?;
        let net = NetState::new(tape, &vars.net.config)?;
        Ok(SeriesWalk {
            loads,
            first_day,
            vars: *vars,
            es,
            net,
        })
    }

    /// First hour not yet consumed by the smoothing.
    pub fn next_hour(&self) -> usize {
        self.es.next_hour()
    }

    pub fn es(&self) -> &EsState {
        &self.es
    }

    /// Runs the network for the next 24 hours and installs its coefficient
    /// corrections. The window loads must already have been consumed.
    pub fn step(&mut self, tape: &mut Tape) -> Result<DailyStep, WalkError> {
        let out_start = self.es.next_hour();
        let window = self.es.recent_loads(INPUT_HOURS)?;
        let zbar = window.iter().sum::<f64>() / INPUT_HOURS as f64;

        let log_ratio = tape.constant_vec(window.iter().map(|z| (z / zbar).ln()).collect());
        let applied = self.es.applied_seasonal(INPUT_HOURS)?;
        let applied = tape.concat(&applied)?;
        let log_applied = tape.ln(applied);
        let x_in = tape.sub(log_ratio, log_applied)?;

        let shat = self.es.seasonal_forecast(out_start, OUTPUT_HOURS)?;
        let shat_out = tape.concat(&shat)?;
        let outlook = tape.add_scalar(shat_out, -1.0);

        let date = self.first_day + Duration::days((out_start / OUTPUT_HOURS) as i64);
        let level = tape.constant_scalar(zbar.log10());
        let calendar = tape.constant_vec(calendar_onehots(date).to_vec());
        let raw = tape.concat(&[x_in, outlook, level, calendar])?;

        let net_out = forward_step(tape, raw, &self.vars.net, &mut self.net)?;
        let dalpha = tape.slice(net_out, DALPHA_INDEX, 1)?;
        let dbeta = tape.slice(net_out, DBETA_INDEX, 1)?;
        self.es.update_coeffs(tape, dalpha, dbeta)?;
        Ok(DailyStep {
            out_start,
            date,
            zbar,
            shat_out,
            net_out,
            alpha: self.es.alpha(),
            beta: self.es.beta(),
        })
    }

    /// Consumes the next 24 hours. `loads` overrides the series values (used
    /// when forecasting past the end of the data).
    pub fn advance(&mut self, tape: &mut Tape, loads: Option<&[f64]>) -> Result<(), WalkError> {
        let from = self.es.next_hour();
        let values = match loads {
            Some(v) => v,
            None => self.loads.get(from..from + OUTPUT_HOURS).ok_or(WalkError::TooShort {
                start: from,
                needed: OUTPUT_HOURS,
                available: self.loads.len(),
            })?,
        };
        self.es.update_many(tape, values)?;
        Ok(())
    }
}
