//! Pattern windows, squashing/deseasonalization, input assembly and the
//! inverse transform back to megawatts.

use std::ops::RangeInclusive;

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

/// Hours in an input window.
pub const INPUT_HOURS: usize = 168;
/// Hours in an output window.
pub const OUTPUT_HOURS: usize = 24;
pub const DOW_SLOTS: usize = 7;
pub const DOM_SLOTS: usize = 31;
pub const WOY_SLOTS: usize = 52;
pub const CALENDAR_SLOTS: usize = DOW_SLOTS + DOM_SLOTS + WOY_SLOTS;
/// Window, seasonal outlook and level: the part of the input that is not calendar.
pub const SERIES_INPUT_LEN: usize = INPUT_HOURS + OUTPUT_HOURS + 1;
pub const RAW_INPUT_LEN: usize = SERIES_INPUT_LEN + CALENDAR_SLOTS;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PreprocessError {
    #[error("step index must be >= 1, got {0}")]
    InvalidStep(usize),
    #[error("window for step {step} ends at hour {end} but the series has {len} hours")]
    PastEnd { step: usize, end: usize, len: usize },
    #[error("{name} must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} has length {got}, expected {expected}")]
    Length {
        name: &'static str,
        got: usize,
        expected: usize,
    },
}

/// Input and output hour windows of recursive step `t`, 1-based and
/// inclusive. Consecutive steps shift both by one day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternWindows {
    pub input: RangeInclusive<usize>,
    pub output: RangeInclusive<usize>,
}

pub fn make_windows(t: usize, series_len: usize) -> Result<PatternWindows, PreprocessError> {
    if t == 0 {
        return Err(PreprocessError::InvalidStep(t));
    }
    let first = OUTPUT_HOURS * (t - 1) + 1;
    let input = first..=first + INPUT_HOURS - 1;
    let output = first + INPUT_HOURS..=first + INPUT_HOURS + OUTPUT_HOURS - 1;
    if *output.end() > series_len {
        return Err(PreprocessError::PastEnd {
            step: t,
            end: *output.end(),
            len: series_len,
        });
    }
    Ok(PatternWindows { input, output })
}

fn positive(name: &'static str, value: f64) -> Result<f64, PreprocessError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(PreprocessError::NonPositive { name, value })
    }
}

/// `ln(z / (zbar * shat))`.
pub fn squash(z: f64, zbar: f64, shat: f64) -> Result<f64, PreprocessError> {
    Ok((positive("load", z)? / (positive("window mean", zbar)? * positive("seasonal factor", shat)?)).ln())
}

/// `exp(xhat) * zbar * shat`, the inverse of [`squash`].
pub fn postprocess(xhat: f64, zbar: f64, shat: f64) -> f64 {
    debug_assert!(zbar > 0.0 && shat > 0.0);
    xhat.exp() * zbar * shat
}

/// Calendar position of a forecasted day, stored as the hot index of each
/// one-hot block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CalendarFeatures {
    /// 0 = Monday.
    pub dow: usize,
    /// Day of month minus one.
    pub dom: usize,
    /// ISO week minus one; week 53 shares the last slot with week 52.
    pub woy: usize,
}

impl CalendarFeatures {
    pub fn dow_onehot(&self) -> [f64; DOW_SLOTS] {
        onehot(self.dow)
    }

    pub fn dom_onehot(&self) -> [f64; DOM_SLOTS] {
        onehot(self.dom)
    }

    pub fn woy_onehot(&self) -> [f64; WOY_SLOTS] {
        onehot(self.woy)
    }

    /// The three one-hot blocks back to back (90 values).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![0.0; CALENDAR_SLOTS];
        for i in self.hot_indices() {
            v[i] = 1.0;
        }
        v
    }

    /// Hot positions within the concatenated 90-slot vector.
    pub fn hot_indices(&self) -> [usize; 3] {
        [self.dow, DOW_SLOTS + self.dom, DOW_SLOTS + DOM_SLOTS + self.woy]
    }

    /// Recovers the features from a concatenated one-hot vector.
    pub fn from_slots(slots: &[f64]) -> Option<Self> {
        if slots.len() != CALENDAR_SLOTS {
            return None;
        }
        let hot = |s: &[f64]| {
            let mut idx = s.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i);
            match (idx.next(), idx.next()) {
                (Some(i), None) => Some(i),
                _ => None,
            }
        };
        Some(CalendarFeatures {
            dow: hot(&slots[..DOW_SLOTS])?,
            dom: hot(&slots[DOW_SLOTS..DOW_SLOTS + DOM_SLOTS])?,
            woy: hot(&slots[DOW_SLOTS + DOM_SLOTS..])?,
        })
    }
}

fn onehot<const N: usize>(i: usize) -> [f64; N] {
    let mut v = [0.0; N];
    v[i] = 1.0;
    v
}

pub fn calendar_onehots(date: NaiveDate) -> CalendarFeatures {
    CalendarFeatures {
        dow: date.weekday().num_days_from_monday() as usize,
        dom: date.day0() as usize,
        woy: (date.iso_week().week0() as usize).min(WOY_SLOTS - 1),
    }
}

/// `[x_in, shat_out - 1, log10(zbar), dow, dom, woy]`, 283 values.
pub fn assemble_input(
    x_in: &[f64],
    shat_out: &[f64],
    zbar: f64,
    cal: &CalendarFeatures,
) -> Result<Vec<f64>, PreprocessError> {
    let check = |name, got: usize, expected| {
        if got == expected {
            Ok(())
        } else {
            Err(PreprocessError::Length { name, got, expected })
        }
    };
    check("input window", x_in.len(), INPUT_HOURS)?;
    check("seasonal outlook", shat_out.len(), OUTPUT_HOURS)?;
    let zbar = positive("window mean", zbar)?;
    let mut out = Vec::with_capacity(RAW_INPUT_LEN);
    out.extend_from_slice(x_in);
    out.extend(shat_out.iter().map(|s| s - 1.0));
    out.push(zbar.log10());
    out.extend(cal.to_vec());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn windows_follow_daily_shift() {
        let w = make_windows(1, 10_000).unwrap();
        assert_eq!(w.input, 1..=168);
        assert_eq!(w.output, 169..=192);
        let w = make_windows(2, 10_000).unwrap();
        assert_eq!(w.input, 25..=192);
        assert_eq!(w.output, 193..=216);
        let w = make_windows(3, 10_000).unwrap();
        assert_eq!(w.input, 49..=216);
        assert_eq!(w.output, 217..=240);
        assert!(make_windows(0, 10_000).is_err());
        assert!(matches!(make_windows(2, 215), Err(PreprocessError::PastEnd { .. })));
        assert!(make_windows(2, 216).is_ok());
    }

    #[test]
    fn squash_values() {
        assert_eq!(squash(500.0, 500.0, 1.0).unwrap(), 0.0);
        assert!((squash(std::f64::consts::E * 40.0, 40.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(squash(0.0, 1.0, 1.0).is_err());
        assert!(squash(1.0, -1.0, 1.0).is_err());
        assert!(squash(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn postprocess_values() {
        assert_eq!(postprocess(0.0, 250.0, 1.2), 250.0 * 1.2);
        // 100 * 1.1 * e, evaluated independently
        assert!((postprocess(1.0, 100.0, 1.1) - 299.011_001_130_495).abs() < 1e-9);
    }

    #[test]
    fn assemble_layout() {
        let cal = calendar_onehots(NaiveDate::from_ymd_opt(2018, 1, 1).unwrap());
        let v = assemble_input(&[0.3; 168], &[1.0; 24], 1000.0, &cal).unwrap();
        assert_eq!(v.len(), 283);
        assert!(v[168..192].iter().all(|&x| x == 0.0));
        assert!((v[192] - 3.0).abs() < 1e-15);
        assert_eq!(v[193..].iter().filter(|&&x| x == 1.0).count(), 3);
        assert_eq!(v[193], 1.0);
        assert!(assemble_input(&[0.0; 167], &[1.0; 24], 1.0, &cal).is_err());
        assert!(assemble_input(&[0.0; 168], &[1.0; 23], 1.0, &cal).is_err());
    }

    #[test]
    fn calendar_examples() {
        let c = calendar_onehots(NaiveDate::from_ymd_opt(2018, 1, 1).unwrap());
        assert_eq!((c.dow, c.dom, c.woy), (0, 0, 0));
        let d = NaiveDate::from_ymd_opt(2018, 12, 31).unwrap();
        assert_eq!(iso_week_oracle(d), 1);
        let c = calendar_onehots(d);
        assert_eq!(c.woy, 0);
        assert_eq!(c.dom, 30);
        // 2020-12-31 is in ISO week 53, folded into the last slot
        let c = calendar_onehots(NaiveDate::from_ymd_opt(2020, 12, 31).unwrap());
        assert_eq!(c.woy, 51);
        assert_eq!(CalendarFeatures::from_slots(&c.to_vec()), Some(c));
    }

    /// ISO-8601 week via the Thursday rule: a week belongs to the year that
    /// contains its Thursday, and is numbered by that Thursday's ordinal day.
    fn iso_week_oracle(d: NaiveDate) -> usize {
        let offset = 3 - d.weekday().num_days_from_monday() as i64;
        let thursday = d + chrono::Duration::days(offset);
        thursday.ordinal0() as usize / 7 + 1
    }

    proptest! {
        #[test]
        fn woy_matches_iso_oracle(days in 0i64..40_000) {
            let d = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap() + chrono::Duration::days(days);
            prop_assert_eq!(calendar_onehots(d).woy, (iso_week_oracle(d) - 1).min(51));
        }

        #[test]
        fn squash_round_trip(z in 1e-3f64..1e6, zbar in 1e-3f64..1e6, shat in 0.05f64..20.0) {
            let back = postprocess(squash(z, zbar, shat).unwrap(), zbar, shat);
            prop_assert!(((back - z) / z).abs() < 1e-12);
        }

        #[test]
        fn squash_monotone(a in 1.0f64..1e5, b in 1.0f64..1e5, zbar in 1.0f64..1e4, shat in 0.2f64..5.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(lo < hi);
            prop_assert!(squash(lo, zbar, shat).unwrap() < squash(hi, zbar, shat).unwrap());
        }

        #[test]
        fn windows_are_adjacent(t in 1usize..2000) {
            let w = make_windows(t, usize::MAX / 2).unwrap();
            prop_assert_eq!(w.input.end() + 1, *w.output.start());
            prop_assert_eq!(w.input.clone().count(), 168);
            prop_assert_eq!(w.output.clone().count(), 24);
        }

        #[test]
        fn calendar_has_three_hot_slots(days in 0i64..40_000) {
            let d = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap() + chrono::Duration::days(days);
            let v = calendar_onehots(d).to_vec();
            prop_assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 3);
            prop_assert_eq!(v.iter().sum::<f64>(), 3.0);
        }

        #[test]
        fn assemble_is_pure(x in proptest::collection::vec(-2.0f64..2.0, 168), zbar in 1.0f64..1e5) {
            let cal = calendar_onehots(NaiveDate::from_ymd_opt(2017, 6, 15).unwrap());
            let a = assemble_input(&x, &[1.1; 24], zbar, &cal).unwrap();
            let b = assemble_input(&x, &[1.1; 24], zbar, &cal).unwrap();
            prop_assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
}
