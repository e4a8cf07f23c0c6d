//! Composite pinball loss on level-normalized loads.

use crate::autodiff::{pinball_value, AutodiffError, Tape, Var};
use crate::network::{LOWER_OFFSET, POINT_OFFSET, UPPER_OFFSET};
use crate::preprocessing::OUTPUT_HOURS;

/// Quantile orders of the three forecast heads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantiles {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `(z - zhat) q` when `z >= zhat`, else `(z - zhat)(q - 1)`.
pub fn pinball(z: f64, zhat: f64, q: f64) -> f64 {
    pinball_value(z, zhat, q)
}

/// Loss of one daily step, averaged over the 24 hours:
/// `rho(z', zhat'_point) + gamma * (rho(z', zhat'_lower) + rho(z', zhat'_upper))`
/// with `z' = z / zbar` and `zhat' = exp(xhat) * shat` for each head.
pub fn step_loss(
    tape: &mut Tape,
    z_out: &[f64],
    zbar: f64,
    shat_out: Var,
    net_out: Var,
    q: &Quantiles,
    gamma: f64,
) -> Result<Var, AutodiffError> {
    let target: Vec<f64> = z_out.iter().map(|z| z / zbar).collect();
    let head = |tape: &mut Tape, offset: usize, order: f64| -> Result<Var, AutodiffError> {
        let x = tape.slice(net_out, offset, OUTPUT_HOURS)?;
        let e = tape.exp(x);
        let pred = tape.mul(e, shat_out)?;
        let rho = tape.pinball(pred, &target, order)?;
        Ok(tape.mean(rho))
    };
    let point = head(tape, POINT_OFFSET, q.point)?;
    let lower = head(tape, LOWER_OFFSET, q.lower)?;
    let upper = head(tape, UPPER_OFFSET, q.upper)?;
    let band = tape.add(lower, upper)?;
    let band = tape.scale(band, gamma);
    tape.add(point, band)
}

/// Plain-float version of [`step_loss`].
pub fn step_loss_value(z_out: &[f64], zbar: f64, shat_out: &[f64], net_out: &[f64], q: &Quantiles, gamma: f64) -> f64 {
    let head = |offset: usize, order: f64| {
        (0..OUTPUT_HOURS)
            .map(|h| pinball(z_out[h] / zbar, net_out[offset + h].exp() * shat_out[h], order))
            .sum::<f64>()
            / OUTPUT_HOURS as f64
    };
    head(POINT_OFFSET, q.point) + gamma * (head(LOWER_OFFSET, q.lower) + head(UPPER_OFFSET, q.upper))
}
