//! Multiplicative Holt-Winters with a single weekly seasonality, recorded on
//! the autodiff tape so that gradients reach the smoothing-coefficient
//! logits and the network's per-step corrections.
//!
//! Each hourly update:
//!
//! ```text
//! level    <- alpha * z / s_cur + (1 - alpha) * level
//! s_{+168} <- beta * z / level + (1 - beta) * s_cur
//! ```
//!
//! The seasonal update reads the freshly updated level. The new seasonal
//! factor overwrites the ring slot of the current hour, which is the slot
//! that hour `+168` maps to.

use std::collections::VecDeque;

use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Var};

/// Weekly period in hours.
pub const SEASON: usize = 168;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EsError {
    #[error("initialization prefix has {0} values, need at least {min}", min = 2 * SEASON)]
    PrefixTooShort(usize),
    #[error("load at offset {index} is {value}; exponential smoothing needs strictly positive finite values")]
    NonPositive { index: usize, value: f64 },
    #[error("seasonal factors for hours {from}..{to} are out of reach (last processed hour {cursor:?})")]
    OutOfReach {
        from: usize,
        to: usize,
        cursor: Option<usize>,
    },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Per-series smoothing state. Hour indices are absolute positions in the
/// series; the ring slot for hour `h` is `h % 168`.
#[derive(Debug, Clone)]
pub struct EsState {
    level: Var,
    seasonal: Vec<Var>,
    alpha_logit: Var,
    beta_logit: Var,
    alpha: Var,
    beta: Var,
    one_minus_alpha: Var,
    one_minus_beta: Var,
    next_hour: usize,
    processed: usize,
    /// Seasonal factors applied to the most recent (up to 168) processed hours.
    applied: VecDeque<Var>,
    /// Loads of the same hours.
    consumed: VecDeque<f64>,
}

fn check_positive(values: &[f64], offset: usize) -> Result<(), EsError> {
    match values
        .iter()
        .position(|v| !(v.is_finite() && *v > 0.0))
    {
        Some(i) => Err(EsError::NonPositive {
            index: offset + i,
            value: values[i],
        }),
        None => Ok(()),
    }
}

/// Level and phase-ordered seasonal factors estimated from whole weeks of
/// `prefix`: the level is the first week's mean, each factor is the mean
/// over weeks of (value / week mean), renormalized to average exactly 1.
pub fn initial_components(prefix: &[f64]) -> Result<(f64, Vec<f64>), EsError> {
    if prefix.len() < 2 * SEASON {
        return Err(EsError::PrefixTooShort(prefix.len()));
    }
    check_positive(prefix, 0)?;
    let level = prefix[..SEASON].iter().sum::<f64>() / SEASON as f64;
    let weeks = prefix.len() / SEASON;
    let mut factors = vec![0.0; SEASON];
    for week in prefix.chunks_exact(SEASON).take(weeks) {
        let mean = week.iter().sum::<f64>() / SEASON as f64;
        for (f, z) in factors.iter_mut().zip(week) {
            *f += z / mean;
        }
    }
    let mean_factor = factors.iter().sum::<f64>() / SEASON as f64;
    for f in &mut factors {
        *f /= mean_factor;
    }
    Ok((level, factors))
}

impl EsState {
    /// Initializes the state for a walk whose first hour is `start_hour`,
    /// using `prefix = series[start_hour..]` (at least two weeks). Nothing is
    /// processed yet: the next update consumes `start_hour`.
    pub fn init(
        tape: &mut Tape,
        prefix: &[f64],
        start_hour: usize,
        alpha_logit: Var,
        beta_logit: Var,
    ) -> Result<Self, EsError> {
        let (level, factors) = initial_components(prefix)?;
        let level = tape.constant_scalar(level);
        let mut seasonal = vec![level; SEASON];
        for (phase, f) in factors.into_iter().enumerate() {
            seasonal[(start_hour + phase) % SEASON] = tape.constant_scalar(f);
        }
        let alpha = tape.sigmoid(alpha_logit);
        let beta = tape.sigmoid(beta_logit);
        let one_minus_alpha = tape.one_minus(alpha);
        let one_minus_beta = tape.one_minus(beta);
        Ok(EsState {
            level,
            seasonal,
            alpha_logit,
            beta_logit,
            alpha,
            beta,
            one_minus_alpha,
            one_minus_beta,
            next_hour: start_hour,
            processed: 0,
            applied: VecDeque::with_capacity(SEASON),
            consumed: VecDeque::with_capacity(SEASON),
        })
    }

    /// `alpha = sigmoid(alpha_logit + dalpha)`, same for beta. The corrections
    /// stay in force until the next call.
    pub fn update_coeffs(&mut self, tape: &mut Tape, dalpha: Var, dbeta: Var) -> Result<(), EsError> {
        let a = tape.add(self.alpha_logit, dalpha)?;
        let b = tape.add(self.beta_logit, dbeta)?;
        self.alpha = tape.sigmoid(a);
        self.beta = tape.sigmoid(b);
        self.one_minus_alpha = tape.one_minus(self.alpha);
        self.one_minus_beta = tape.one_minus(self.beta);
        Ok(())
    }

    /// Consumes the load of the next hour.
    pub fn update_hourly(&mut self, tape: &mut Tape, z: f64) -> Result<(), EsError> {
        if !(z.is_finite() && z > 0.0) {
            return Err(EsError::NonPositive {
                index: self.next_hour,
                value: z,
            });
        }
        let slot = self.next_hour % SEASON;
        let s_cur = self.seasonal[slot];

        let inv_s = tape.recip(s_cur);
        let ratio = tape.scale(inv_s, z);
        let new_part = tape.mul(self.alpha, ratio)?;
        let old_part = tape.mul(self.one_minus_alpha, self.level)?;
        let level = tape.add(new_part, old_part)?;

        let inv_l = tape.recip(level);
        let ratio = tape.scale(inv_l, z);
        let new_part = tape.mul(self.beta, ratio)?;
        let old_part = tape.mul(self.one_minus_beta, s_cur)?;
        let s_next = tape.add(new_part, old_part)?;

        self.level = level;
        self.seasonal[slot] = s_next;
        if self.applied.len() == SEASON {
            self.applied.pop_front();
        }
        self.applied.push_back(s_cur);
        if self.consumed.len() == SEASON {
            self.consumed.pop_front();
        }
        self.consumed.push_back(z);
        self.next_hour += 1;
        self.processed += 1;
        Ok(())
    }

    pub fn update_many(&mut self, tape: &mut Tape, loads: &[f64]) -> Result<(), EsError> {
        loads.iter().try_for_each(|&z| self.update_hourly(tape, z))
    }

    /// Seasonal factors predicted for hours `from_hour .. from_hour + horizon`.
    /// Only hours not yet processed and at most 168 hours past the last
    /// processed one are in the buffer.
    pub fn seasonal_forecast(&self, from_hour: usize, horizon: usize) -> Result<Vec<Var>, EsError> {
        let reach_end = self.next_hour + SEASON;
        if from_hour < self.next_hour || from_hour + horizon > reach_end {
            return Err(EsError::OutOfReach {
                from: from_hour,
                to: from_hour + horizon,
                cursor: self.hour_cursor(),
            });
        }
        Ok((from_hour..from_hour + horizon)
            .map(|h| self.seasonal[h % SEASON])
            .collect())
    }

    /// Seasonal factors that were applied to the last `n` processed hours,
    /// oldest first.
    pub fn applied_seasonal(&self, n: usize) -> Result<Vec<Var>, EsError> {
        if n > self.applied.len() {
            return Err(EsError::OutOfReach {
                from: self.next_hour.saturating_sub(n),
                to: self.next_hour,
                cursor: self.hour_cursor(),
            });
        }
        Ok(self.applied.iter().skip(self.applied.len() - n).copied().collect())
    }

    /// Loads of the last `n` processed hours, oldest first.
    pub fn recent_loads(&self, n: usize) -> Result<Vec<f64>, EsError> {
        if n > self.consumed.len() {
            return Err(EsError::OutOfReach {
                from: self.next_hour.saturating_sub(n),
                to: self.next_hour,
                cursor: self.hour_cursor(),
            });
        }
        Ok(self.consumed.iter().skip(self.consumed.len() - n).copied().collect())
    }

    pub fn level(&self) -> Var {
        self.level
    }

    pub fn alpha(&self) -> Var {
        self.alpha
    }

    pub fn beta(&self) -> Var {
        self.beta
    }

    /// Ring buffer slot for `hour`.
    pub fn slot(&self, hour: usize) -> Var {
        self.seasonal[hour % SEASON]
    }

    pub fn seasonal_len(&self) -> usize {
        self.seasonal.len()
    }

    /// Absolute index of the last processed hour.
    pub fn hour_cursor(&self) -> Option<usize> {
        self.next_hour.checked_sub(1).filter(|_| self.processed > 0)
    }

    pub fn next_hour(&self) -> usize {
        self.next_hour
    }
}
