//! Hybrid exponential smoothing and attentive dilated recurrent network for
//! day-ahead hourly load forecasting with prediction intervals.
//!
//! The model keeps a multiplicative Holt-Winters level and weekly seasonal
//! profile per series, normalizes input windows with them, and lets a stack
//! of dilated recurrent cells predict the next day's normalized profile at
//! three quantiles together with corrections to the smoothing coefficients.
//! Everything, smoothing recursions included, is trained end to end with a
//! small reverse-mode autodiff tape.

pub mod autodiff;
pub mod cells;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod evaluation;
pub mod forecast;
pub mod holt_winters;
pub mod matrix;
pub mod model;
pub mod network;
pub mod preprocessing;
pub mod training;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::TrainConfig;
pub use data::{load_csv, LoadSeries};
pub use forecast::{forecast_ensemble, forecast_series, ForecastBundle};
pub use model::ModelParams;
pub use training::{ensemble_train, train, TrainOutcome};
