//! Global training over a pool of series: random batches of walks, a
//! composite pinball loss and Adam.

pub mod adam;
pub mod loss;
pub mod walk;

use std::thread;

use chrono::NaiveDate;
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::config::{ConfigError, TrainConfig};
use crate::data::LoadSeries;
use crate::model::{ModelParams, ModelVars};
use crate::network::NetworkError;

pub use adam::Adam;
pub use loss::{step_loss, step_loss_value, Quantiles};
pub use walk::{init_prefix_hours, walk_hours, DailyStep, SeriesWalk, WalkError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no series is long enough for a training walk of {needed} hours")]
    NoUsableSeries { needed: usize },
    #[error("non-finite loss or gradient at epoch {epoch}, update {update}")]
    NonFinite { epoch: usize, update: usize },
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("ensemble member {0} panicked")]
    MemberPanicked(usize),
}

/// Progress report passed to a training observer after every update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateInfo {
    pub epoch: usize,
    /// 0-based index over the whole run.
    pub update: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Batch loss of every update.
    pub loss_trace: Vec<f64>,
}

impl TrainConfig {
    pub fn quantiles(&self) -> Quantiles {
        Quantiles {
            point: self.q_star,
            lower: self.q_low,
            upper: self.q_up,
        }
    }

    pub fn warmup_train_steps(&self) -> usize {
        self.warmup_train_weeks * 7
    }

    pub fn warmup_test_steps(&self) -> usize {
        self.warmup_test_weeks * 7
    }
}

/// Mean step loss of the `steps` scored days of a walk that first runs
/// `warmup` unscored days from hour `start`.
#[allow(clippy::too_many_arguments)]
pub fn walk_loss(
    tape: &mut Tape,
    vars: &ModelVars,
    loads: &[f64],
    first_day: NaiveDate,
    start: usize,
    warmup: usize,
    steps: usize,
    quantiles: &Quantiles,
    gamma: f64,
) -> Result<Var, WalkError> {
    let needed = walk_hours(warmup + steps);
    if start + needed > loads.len() {
        return Err(WalkError::TooShort {
            start,
            needed,
            available: loads.len(),
        });
    }
    let mut walk = SeriesWalk::begin(tape, vars, loads, first_day, start, warmup)?;
    let mut losses = Vec::with_capacity(steps);
    for k in 0..warmup + steps {
        let day = walk.step(tape)?;
        if k >= warmup {
            let z = &loads[day.out_start..day.out_start + 24];
            losses.push(step_loss(tape, z, day.zbar, day.shat_out, day.net_out, quantiles, gamma)?);
        }
        if k + 1 < warmup + steps {
            walk.advance(tape, None)?;
        }
    }
    let all = tape.concat(&losses)?;
    Ok(tape.mean(all))
}

/// Loss and parameter gradients of one walk.
pub fn walk_gradients(
    params: &ModelParams,
    series: &LoadSeries,
    start: usize,
    cfg: &TrainConfig,
) -> Result<(f64, Vec<Vec<f64>>), TrainError> {
    let mut tape = Tape::with_capacity(1 << 16);
    let vars = params.register(&mut tape)?;
    let loss = walk_loss(
        &mut tape,
        &vars,
        &series.values,
        series.start.date_naive(),
        start,
        cfg.warmup_train_steps(),
        cfg.steps_per_batch,
        &cfg.quantiles(),
        cfg.gamma,
    )?;
    let grads = tape.backward(loss)?;
    Ok((tape.scalar(loss), vars.gradients(&grads)))
}

fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
}

pub fn train(series: &[LoadSeries], cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_with_observer(series, cfg, None, |_| {})
}

/// Trains from `init` (or fresh random parameters drawn from `cfg.seed`).
/// Each update draws `batch_size` series uniformly with replacement and a
/// uniformly random starting day in each.
pub fn train_with_observer<F: FnMut(&UpdateInfo)>(
    series: &[LoadSeries],
    cfg: &TrainConfig,
    init: Option<ModelParams>,
    mut observer: F,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = match init {
        Some(p) => p,
        None => ModelParams::random(cfg.net, cfg.alpha_logit_init, cfg.beta_logit_init, &mut rng)?,
    };
    let needed = walk_hours(cfg.warmup_train_steps() + cfg.steps_per_batch);
    let usable: Vec<&LoadSeries> = series
        .iter()
        .filter(|s| {
            let ok = s.len() >= needed;
            if !ok {
                warn!("series {} has {} hours, a training walk needs {needed}; skipped", s.id, s.len());
            }
            ok
        })
        .collect();
    if usable.is_empty() {
        return Err(TrainError::NoUsableSeries { needed });
    }

    let mut adam = Adam::new(params.arrays().iter().map(|a| a.2.len()));
    let mut trace = Vec::with_capacity(cfg.epochs * cfg.updates_per_epoch);
    for epoch in 1..=cfg.epochs {
        let batch_size = cfg.batch_size.at(epoch);
        let lr = cfg.learning_rate.at(epoch);
        for _ in 0..cfg.updates_per_epoch {
            let update = trace.len();
            let mut total = 0.0;
            let mut grads: Option<Vec<Vec<f64>>> = None;
            for _ in 0..batch_size {
                let s = usable[rng.random_range(0..usable.len())];
                let last_day = (s.len() - needed) / 24;
                let start = 24 * rng.random_range(0..=last_day);
                let (l, g) = walk_gradients(&params, s, start, cfg)?;
                total += l;
                match grads.as_mut() {
                    None => grads = Some(g),
                    Some(acc) => acc.iter_mut().flatten().zip(g.iter().flatten()).for_each(|(a, b)| *a += b),
                }
            }
            let mut grads = grads.expect("batch size is positive");
            let scale = 1.0 / batch_size as f64;
            grads.iter_mut().flatten().for_each(|g| *g *= scale);
            let loss = total * scale;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFinite { epoch, update });
            }
            if let Some(max) = cfg.grad_clip {
                clip_global_norm(&mut grads, max);
            }
            adam.update(&mut params.arrays_mut(), &grads, lr);
            trace.push(loss);
            let info = UpdateInfo {
                epoch,
                update,
                learning_rate: lr,
                batch_size,
                loss,
            };
            observer(&info);
            if (update + 1) % 50 == 0 {
                let recent = &trace[trace.len() - 50..];
                info!(
                    "epoch {epoch} update {} mean loss {:.5}",
                    update + 1,
                    recent.iter().sum::<f64>() / 50.0
                );
            }
        }
    }
    Ok(TrainOutcome {
        params,
        loss_trace: trace,
    })
}

/// Independently trained members with seeds `cfg.seed + i`, run on separate
/// threads.
pub fn ensemble_train(series: &[LoadSeries], cfg: &TrainConfig, members: usize) -> Result<Vec<TrainOutcome>, TrainError> {
    let configs: Vec<TrainConfig> = (0..members)
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(i as u64);
            c
        })
        .collect();
    thread::scope(|scope| {
        let handles: Vec<_> = configs.iter().map(|c| scope.spawn(move || train(series, c))).collect();
        handles
            .into_iter()
            .enumerate()
            .map(|(i, h)| h.join().map_err(|_| TrainError::MemberPanicked(i))?)
            .collect()
    })
}
