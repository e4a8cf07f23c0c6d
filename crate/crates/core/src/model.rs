//! All learnable quantities of one model: the shared network plus the two
//! smoothing-coefficient logits.

use rand::Rng;

use crate::autodiff::{Gradients, Shape, Tape, Var};
use crate::network::{NetConfig, NetParams, NetVars, NetworkError};

pub const ALPHA_LOGIT: &str = "es.alpha_logit";
pub const BETA_LOGIT: &str = "es.beta_logit";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub net: NetParams,
    pub alpha_logit: Vec<f64>,
    pub beta_logit: Vec<f64>,
}

/// [`ModelParams`] recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct ModelVars {
    pub net: NetVars,
    pub alpha_logit: Var,
    pub beta_logit: Var,
}

impl ModelVars {
    pub fn leaves(&self) -> Vec<Var> {
        let mut out = self.net.leaves();
        out.push(self.alpha_logit);
        out.push(self.beta_logit);
        out
    }

    /// Gradient arrays in [`ModelParams::arrays`] order.
    pub fn gradients(&self, grads: &Gradients) -> Vec<Vec<f64>> {
        self.leaves().into_iter().map(|v| grads.get(v).into_owned()).collect()
    }
}

impl ModelParams {
    pub fn random<R: Rng + ?Sized>(
        config: NetConfig,
        alpha_logit: f64,
        beta_logit: f64,
        rng: &mut R,
    ) -> Result<Self, NetworkError> {
        Ok(ModelParams {
            net: NetParams::random(config, rng)?,
            alpha_logit: vec![alpha_logit],
            beta_logit: vec![beta_logit],
        })
    }

    /// Network weights all zero, so every correction is zero and the
    /// smoothing runs with fixed coefficients.
    pub fn zeros(config: NetConfig, alpha_logit: f64, beta_logit: f64) -> Result<Self, NetworkError> {
        Ok(ModelParams {
            net: NetParams::zeros(config)?,
            alpha_logit: vec![alpha_logit],
            beta_logit: vec![beta_logit],
        })
    }

    pub fn arrays(&self) -> Vec<(String, Shape, &[f64])> {
        let mut out = self.net.arrays();
        out.push((ALPHA_LOGIT.into(), Shape::scalar(), &self.alpha_logit));
        out.push((BETA_LOGIT.into(), Shape::scalar(), &self.beta_logit));
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = self.net.arrays_mut();
        out.push(&mut self.alpha_logit);
        out.push(&mut self.beta_logit);
        out
    }

    pub fn register(&self, tape: &mut Tape) -> Result<ModelVars, NetworkError> {
        let net = self.net.register(tape)?;
        let alpha_logit = tape.leaf(self.alpha_logit.clone(), Shape::scalar())?;
        let beta_logit = tape.leaf(self.beta_logit.clone(), Shape::scalar())?;
        Ok(ModelVars {
            net,
            alpha_logit,
            beta_logit,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.arrays().iter().map(|a| a.2.len()).sum()
    }

    /// FNV-1a over the bit patterns of every parameter, in array order.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, _, data) in self.arrays() {
            for v in data {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}
