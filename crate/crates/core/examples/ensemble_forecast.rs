//! Trains a small ensemble on synthetic data and compares members with the
//! pooled forecast.
//!
//! cargo run --release --example ensemble_forecast -- [members] [updates]

use es_adrnn::evaluation::{ensemble_combine_runs, metrics, synth_generate, Combine};
use es_adrnn::{ensemble_train, forecast_series, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let members = args.first().copied().unwrap_or(3);
    let series: Vec<_> = (0..3).map(|i| synth_generate(i, 200, 800.0 + 300.0 * i as f64)).collect::<Result<_, _>>()?;
    let train_set: Vec<_> = series.iter().map(|s| s.truncated(180 * 24)).collect();
    let mut cfg = TrainConfig::default();
    cfg.epochs = 1;
    cfg.updates_per_epoch = args.get(1).copied().unwrap_or(60);

    let outcomes = ensemble_train(&train_set, &cfg, members)?;
    let mut runs = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        let run = forecast_series(&o.params, &cfg, &series[0], 180, 20)?;
        let actual: Vec<f64> = series[0].values[180 * 24..200 * 24].to_vec();
        let point: Vec<f64> = run.iter().flat_map(|b| b.point.clone()).collect();
        println!("member {i} (seed {}): MAPE {:.3}", cfg.seed + i as u64, metrics(&actual, &point)?.mape);
        runs.push(run);
    }
    for how in [Combine::Mean, Combine::Median] {
        let pooled = ensemble_combine_runs(&runs, how)?;
        let point: Vec<f64> = pooled.iter().flat_map(|b| b.point.clone()).collect();
        println!("{how} ensemble: MAPE {:.3}", metrics(&series[0].values[180 * 24..200 * 24], &point)?.mape);
    }
    Ok(())
}
