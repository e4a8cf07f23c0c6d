//! Three-block dilated stack with a calendar embedding and a linear head.
//!
//! Block 1 is an attentive cell with dilation 2, blocks 2 and 3 are plain
//! dilated cells with dilations 4 and 7. With shortcuts enabled, block 3
//! reads `y2 + y1` and the head reads `y3 + y2`.

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Shape, Tape, Var};
use crate::cells::{adrnn_step, drnn_step, AttentiveState, CellError, CellParams, CellVars, DilatedState};
use crate::matrix::Matrix;
use crate::preprocessing::{CalendarFeatures, CALENDAR_SLOTS, OUTPUT_HOURS, RAW_INPUT_LEN, SERIES_INPUT_LEN};

pub const BLOCK1_DILATION: usize = 2;
pub const BLOCK2_DILATION: usize = 4;
pub const BLOCK3_DILATION: usize = 7;

/// Head output: point, lower and upper patterns, then the two corrections.
pub const OUTPUT_LEN: usize = 3 * OUTPUT_HOURS + 2;
pub const POINT_OFFSET: usize = 0;
pub const LOWER_OFFSET: usize = OUTPUT_HOURS;
pub const UPPER_OFFSET: usize = 2 * OUTPUT_HOURS;
pub const DALPHA_INDEX: usize = 3 * OUTPUT_HOURS;
pub const DBETA_INDEX: usize = 3 * OUTPUT_HOURS + 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("raw input has {0} values, expected {RAW_INPUT_LEN}")]
    InputWidth(usize),
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    /// Cell state length of the non-attention cells.
    pub state_size: usize,
    /// Controlling state length, shared by all cells.
    pub control_size: usize,
    /// Width of every block output.
    pub output_size: usize,
    pub embedding_dim: usize,
    pub shortcuts: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            state_size: 100,
            control_size: 40,
            output_size: 40,
            embedding_dim: 10,
            shortcuts: true,
        }
    }
}

impl NetConfig {
    /// Width of the vector entering block 1.
    pub fn input_size(&self) -> usize {
        SERIES_INPUT_LEN + self.embedding_dim
    }

    /// The attention cell emits one weight per input plus its controlling
    /// state, so its cell state is that wide.
    pub fn attention_state_size(&self) -> usize {
        self.input_size() + self.control_size
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.output_size + self.control_size > self.state_size {
            return Err(NetworkError::Config(format!(
                "output size {} plus control size {} exceed state size {}",
                self.output_size, self.control_size, self.state_size
            )));
        }
        if self.output_size == 0 || self.embedding_dim == 0 {
            return Err(NetworkError::Config("output size and embedding dim must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub config: NetConfig,
    /// `embedding_dim x 90`.
    pub embedding: Matrix,
    pub attention: CellParams,
    pub block1: CellParams,
    pub block2: CellParams,
    pub block3: CellParams,
    /// `74 x output_size`.
    pub head_w: Matrix,
    pub head_b: Vec<f64>,
}

impl NetParams {
    pub fn zeros(config: NetConfig) -> Result<Self, NetworkError> {
        config.validate()?;
        let NetConfig {
            state_size,
            control_size,
            output_size,
            embedding_dim,
            ..
        } = config;
        let input = config.input_size();
        Ok(NetParams {
            config,
            embedding: Matrix::zeros(embedding_dim, CALENDAR_SLOTS),
            attention: CellParams::zeros(input, config.attention_state_size(), input, control_size)?,
            block1: CellParams::zeros(input, state_size, output_size, control_size)?,
            block2: CellParams::zeros(output_size, state_size, output_size, control_size)?,
            block3: CellParams::zeros(output_size, state_size, output_size, control_size)?,
            head_w: Matrix::zeros(OUTPUT_LEN, output_size),
            head_b: vec![0.0; OUTPUT_LEN],
        })
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn random<R: Rng + ?Sized>(config: NetConfig, rng: &mut R) -> Result<Self, NetworkError> {
        let mut p = Self::zeros(config)?;
        p.embedding = Matrix::uniform(p.embedding.rows, p.embedding.cols, CALENDAR_SLOTS, rng);
        for cell in [&mut p.attention, &mut p.block1, &mut p.block2, &mut p.block3] {
            *cell = CellParams::random(cell.input_size, cell.hidden_size, cell.output_size, cell.state_size, rng)?;
        }
        p.head_w = Matrix::uniform(OUTPUT_LEN, config.output_size, config.output_size, rng);
        Ok(p)
    }

    fn cells(&self) -> [(&'static str, &CellParams); 4] {
        [
            ("attention", &self.attention),
            ("block1", &self.block1),
            ("block2", &self.block2),
            ("block3", &self.block3),
        ]
    }

    /// Named parameter arrays in a fixed order shared by [`Self::arrays_mut`]
    /// and [`NetVars::leaves`].
    pub fn arrays(&self) -> Vec<(String, Shape, &[f64])> {
        let mut out = vec![("embedding".to_string(), self.embedding.shape(), &self.embedding.data[..])];
        for (prefix, cell) in self.cells() {
            for (name, shape, data) in cell.arrays() {
                out.push((format!("{prefix}.{name}"), shape, data));
            }
        }
        out.push(("head.w".into(), self.head_w.shape(), &self.head_w.data));
        out.push(("head.b".into(), Shape::vector(OUTPUT_LEN), &self.head_b));
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = vec![&mut self.embedding.data];
        for cell in [&mut self.attention, &mut self.block1, &mut self.block2, &mut self.block3] {
            out.extend(cell.arrays_mut());
        }
        out.push(&mut self.head_w.data);
        out.push(&mut self.head_b);
        out
    }

    pub fn register(&self, tape: &mut Tape) -> Result<NetVars, NetworkError> {
        Ok(NetVars {
            config: self.config,
            embedding: self.embedding.to_leaf(tape)?,
            attention: self.attention.register(tape)?,
            block1: self.block1.register(tape)?,
            block2: self.block2.register(tape)?,
            block3: self.block3.register(tape)?,
            head_w: self.head_w.to_leaf(tape)?,
            head_b: tape.leaf(self.head_b.clone(), Shape::vector(OUTPUT_LEN))?,
        })
    }
}

/// Network parameters recorded as leaves of one tape.
#[derive(Debug, Clone, Copy)]
pub struct NetVars {
    pub config: NetConfig,
    pub embedding: Var,
    pub attention: CellVars,
    pub block1: CellVars,
    pub block2: CellVars,
    pub block3: CellVars,
    pub head_w: Var,
    pub head_b: Var,
}

impl NetVars {
    pub fn leaves(&self) -> Vec<Var> {
        let mut out = vec![self.embedding];
        for cell in [&self.attention, &self.block1, &self.block2, &self.block3] {
            out.extend(cell.leaves());
        }
        out.push(self.head_w);
        out.push(self.head_b);
        out
    }
}

/// Recurrent state of the four cells; created fresh (all zeros) at the start
/// of every walk.
#[derive(Debug, Clone)]
pub struct NetState {
    pub block1: AttentiveState,
    pub block2: DilatedState,
    pub block3: DilatedState,
}

impl NetState {
    pub fn new(tape: &mut Tape, config: &NetConfig) -> Result<Self, NetworkError> {
        let s = config.state_size;
        let h = config.control_size;
        Ok(NetState {
            block1: AttentiveState {
                attention: DilatedState::new(tape, BLOCK1_DILATION, config.attention_state_size(), h)?,
                main: DilatedState::new(tape, BLOCK1_DILATION, s, h)?,
            },
            block2: DilatedState::new(tape, BLOCK2_DILATION, s, h)?,
            block3: DilatedState::new(tape, BLOCK3_DILATION, s, h)?,
        })
    }
}

/// Linear embedding of the concatenated calendar one-hots; no bias and no
/// nonlinearity.
pub fn embed_calendar(tape: &mut Tape, cal: &CalendarFeatures, embedding: Var) -> Result<Var, NetworkError> {
    let slots = tape.constant_vec(cal.to_vec());
    Ok(tape.matvec(embedding, slots)?)
}

/// Intermediate values of one forward step, kept for inspection.
#[derive(Debug, Clone, Copy)]
pub struct ForwardTrace {
    pub output: Var,
    pub attention: Var,
    pub block_outputs: [Var; 3],
}

/// One daily step of the stack on a 283-wide raw input
/// `[window(168), seasonal outlook - 1 (24), log10 level (1), calendar one-hots (90)]`.
pub fn forward_step(tape: &mut Tape, raw: Var, vars: &NetVars, state: &mut NetState) -> Result<Var, NetworkError> {
    Ok(forward_step_traced(tape, raw, vars, state)?.output)
}

pub fn forward_step_traced(
    tape: &mut Tape,
    raw: Var,
    vars: &NetVars,
    state: &mut NetState,
) -> Result<ForwardTrace, NetworkError> {
    let width = tape.value(raw).len();
    if width != RAW_INPUT_LEN {
        return Err(NetworkError::InputWidth(width));
    }
    let series = tape.slice(raw, 0, SERIES_INPUT_LEN)?;
    let calendar = tape.slice(raw, SERIES_INPUT_LEN, CALENDAR_SLOTS)?;
    let embedded = tape.matvec(vars.embedding, calendar)?;
    let x = tape.concat(&[series, embedded])?;

    let b1 = adrnn_step(tape, x, &mut state.block1, &vars.attention, &vars.block1)?;
    let y1 = b1.y;
    let y2 = drnn_step(tape, y1, &mut state.block2, &vars.block2)?.out;
    let in3 = if vars.config.shortcuts { tape.add(y2, y1)? } else { y2 };
    let y3 = drnn_step(tape, in3, &mut state.block3, &vars.block3)?.out;
    let head_in = if vars.config.shortcuts { tape.add(y3, y2)? } else { y3 };
    let out = tape.matvec(vars.head_w, head_in)?;
    let output = tape.add(out, vars.head_b)?;
    Ok(ForwardTrace {
        output,
        attention: b1.m,
        block_outputs: [y1, y2, y3],
    })
}
