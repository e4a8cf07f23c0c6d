//! Dilated recurrent cell and its attentive two-cell variant.
//!
//! A dilated cell mixes the recent and the `d`-steps-delayed cell states:
//!
//! ```text
//! f, u, o = sigmoid(W x + V h[t-1] + U h[t-d] + b)    (one block each)
//! c~      = tanh(W x + V h[t-1] + U h[t-d] + b)       (fourth block)
//! c[t]    = u * (f * c[t-1] + (1 - f) * c[t-d]) + (1 - u) * c~
//! h'      = o * c[t]  ->  split into (emitted output, next controlling state)
//! ```
//!
//! The attentive cell runs a first dilated cell whose emitted output `m`
//! has the width of the input; `exp(m)` then reweights the input of a second
//! dilated cell.

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Shape, Tape, Var};
use crate::matrix::Matrix;

/// Gate blocks are stacked in this order along the rows of `W`, `V`, `U`, `b`.
pub const GATES: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CellError {
    #[error("cell output ({output}) plus controlling state ({state}) exceed the cell state size {hidden}")]
    Split {
        output: usize,
        state: usize,
        hidden: usize,
    },
    #[error("dilation must be at least 2, got {0}")]
    Dilation(usize),
    #[error("attention width {attention} does not match input length {input}")]
    AttentionWidth { attention: usize, input: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub input_size: usize,
    /// Cell state length.
    pub hidden_size: usize,
    /// Length of the emitted part of `h'`.
    pub output_size: usize,
    /// Length of the controlling state fed back into the gates.
    pub state_size: usize,
    pub w: Matrix,
    pub v: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
}

impl CellParams {
    pub fn zeros(
        input_size: usize,
        hidden_size: usize,
        output_size: usize,
        state_size: usize,
    ) -> Result<Self, CellError> {
        if output_size + state_size > hidden_size {
            return Err(CellError::Split {
                output: output_size,
                state: state_size,
                hidden: hidden_size,
            });
        }
        let rows = GATES * hidden_size;
        Ok(CellParams {
            input_size,
            hidden_size,
            output_size,
            state_size,
            w: Matrix::zeros(rows, input_size),
            v: Matrix::zeros(rows, state_size),
            u: Matrix::zeros(rows, state_size),
            b: vec![0.0; rows],
        })
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn random<R: Rng + ?Sized>(
        input_size: usize,
        hidden_size: usize,
        output_size: usize,
        state_size: usize,
        rng: &mut R,
    ) -> Result<Self, CellError> {
        let mut p = Self::zeros(input_size, hidden_size, output_size, state_size)?;
        let rows = GATES * hidden_size;
        p.w = Matrix::uniform(rows, input_size, input_size, rng);
        p.v = Matrix::uniform(rows, state_size, state_size, rng);
        p.u = Matrix::uniform(rows, state_size, state_size, rng);
        Ok(p)
    }

    pub fn arrays(&self) -> [(&'static str, Shape, &[f64]); 4] {
        [
            ("w", self.w.shape(), &self.w.data),
            ("v", self.v.shape(), &self.v.data),
            ("u", self.u.shape(), &self.u.data),
            ("b", Shape::vector(self.b.len()), &self.b),
        ]
    }

    pub fn arrays_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w.data, &mut self.v.data, &mut self.u.data, &mut self.b]
    }

    pub fn register(&self, tape: &mut Tape) -> Result<CellVars, CellError> {
        Ok(CellVars {
            w: self.w.to_leaf(tape)?,
            v: self.v.to_leaf(tape)?,
            u: self.u.to_leaf(tape)?,
            b: tape.leaf(self.b.clone(), Shape::vector(self.b.len()))?,
            hidden_size: self.hidden_size,
            output_size: self.output_size,
            state_size: self.state_size,
        })
    }
}

/// Cell parameters recorded as leaves of one tape.
#[derive(Debug, Clone, Copy)]
pub struct CellVars {
    pub w: Var,
    pub v: Var,
    pub u: Var,
    pub b: Var,
    pub hidden_size: usize,
    pub output_size: usize,
    pub state_size: usize,
}

impl CellVars {
    pub fn leaves(&self) -> [Var; 4] {
        [self.w, self.v, self.u, self.b]
    }
}

/// History of `(c, h)` pairs deep enough to read the delayed state. Reads
/// beyond the recorded history return zeros.
#[derive(Debug, Clone)]
pub struct DilatedState {
    dilation: usize,
    history: VecDeque<(Var, Var)>,
    zero_c: Var,
    zero_h: Var,
}

impl DilatedState {
    pub fn new(tape: &mut Tape, dilation: usize, hidden_size: usize, state_size: usize) -> Result<Self, CellError> {
        if dilation < 2 {
            return Err(CellError::Dilation(dilation));
        }
        Ok(DilatedState {
            dilation,
            history: VecDeque::with_capacity(dilation),
            zero_c: tape.constant_vec(vec![0.0; hidden_size]),
            zero_h: tape.constant_vec(vec![0.0; state_size]),
        })
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    /// `(c, h)` stored `delay` steps ago (1 = previous step).
    pub fn delayed(&self, delay: usize) -> (Var, Var) {
        assert!(delay >= 1 && delay <= self.dilation);
        if delay > self.history.len() {
            (self.zero_c, self.zero_h)
        } else {
            self.history[self.history.len() - delay]
        }
    }

    fn push(&mut self, c: Var, h: Var) {
        if self.history.len() == self.dilation {
            self.history.pop_front();
        }
        self.history.push_back((c, h));
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CellOutput {
    pub out: Var,
    pub h: Var,
    pub c: Var,
}

/// One step of a dilated cell; advances `state`.
pub fn drnn_step(
    tape: &mut Tape,
    x: Var,
    state: &mut DilatedState,
    p: &CellVars,
) -> Result<CellOutput, CellError> {
    let n = p.hidden_size;
    let (c_prev, h_prev) = state.delayed(1);
    let (c_del, h_del) = state.delayed(state.dilation());

    let wx = tape.matvec(p.w, x)?;
    let vh = tape.matvec(p.v, h_prev)?;
    let uh = tape.matvec(p.u, h_del)?;
    let pre = tape.add(wx, vh)?;
    let pre = tape.add(pre, uh)?;
    let pre = tape.add(pre, p.b)?;

    let gates_pre = tape.slice(pre, 0, 3 * n)?;
    let gates = tape.sigmoid(gates_pre);
    let fuse = tape.slice(gates, 0, n)?;
    let update = tape.slice(gates, n, n)?;
    let output = tape.slice(gates, 2 * n, n)?;
    let cand_pre = tape.slice(pre, 3 * n, n)?;
    let cand = tape.tanh(cand_pre);

    // f*c1 + (1-f)*cd and u*mix + (1-u)*cand, written literally so both
    // combinations stay convex under rounding.
    let keep_recent = tape.mul(fuse, c_prev)?;
    let not_fuse = tape.one_minus(fuse);
    let keep_delayed = tape.mul(not_fuse, c_del)?;
    let mix = tape.add(keep_recent, keep_delayed)?;
    let old = tape.mul(update, mix)?;
    let not_update = tape.one_minus(update);
    let new = tape.mul(not_update, cand)?;
    let c = tape.add(old, new)?;

    let h_full = tape.mul(output, c)?;
    let out = tape.slice(h_full, 0, p.output_size)?;
    let h = tape.slice(h_full, p.output_size, p.state_size)?;
    state.push(c, h);
    Ok(CellOutput { out, h, c })
}

/// States of the two cells of an attentive cell.
#[derive(Debug, Clone)]
pub struct AttentiveState {
    pub attention: DilatedState,
    pub main: DilatedState,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentiveOutput {
    pub y: Var,
    /// Attention vector before exponentiation.
    pub m: Var,
    /// Reweighted input fed to the second cell.
    pub weighted_input: Var,
}

/// One step of the attentive cell: `m` from the first cell, then the second
/// cell on `exp(m) * x`.
pub fn adrnn_step(
    tape: &mut Tape,
    x: Var,
    state: &mut AttentiveState,
    attention: &CellVars,
    main: &CellVars,
) -> Result<AttentiveOutput, CellError> {
    let input = tape.value(x).len();
    if attention.output_size != input {
        return Err(CellError::AttentionWidth {
            attention: attention.output_size,
            input,
        });
    }
    let first = drnn_step(tape, x, &mut state.attention, attention)?;
    let weights = tape.exp(first.out);
    let weighted_input = tape.mul(weights, x)?;
    let second = drnn_step(tape, weighted_input, &mut state.main, main)?;
    Ok(AttentiveOutput {
        y: second.out,
        m: first.out,
        weighted_input,
    })
}
