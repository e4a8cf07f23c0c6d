//! Trains a model on synthetic series and reports held-out accuracy against
//! the weekly naive baseline.
//!
//! cargo run --release --example train_synthetic -- [updates_per_epoch] [epochs]

use std::time::Instant;

use es_adrnn::evaluation::{metrics, naive_forecast, pi_coverage, synth_generate};
use es_adrnn::{forecast_series, train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let series: Vec<_> = (0..4)
        .map(|i| synth_generate(100 + i, 730, 1000.0 + 700.0 * i as f64))
        .collect::<Result<_, _>>()?;
    let holdout = 60;
    let train_days = 730 - holdout;
    let train_set: Vec<_> = series.iter().map(|s| s.truncated(train_days * 24)).collect();

    let mut cfg = TrainConfig::default();
    cfg.updates_per_epoch = args.first().copied().unwrap_or(200);
    cfg.epochs = args.get(1).copied().unwrap_or(3);
    cfg.batch_size = "1-3:2".parse()?;
    cfg.learning_rate = "1:3e-3,2:1e-3,3:3e-4".parse()?;

    let t0 = Instant::now();
    let out = train(&train_set, &cfg)?;
    let n = out.loss_trace.len();
    let head = out.loss_trace[..n.min(20)].iter().sum::<f64>() / n.min(20) as f64;
    let tail = out.loss_trace[n - n.min(20)..].iter().sum::<f64>() / n.min(20) as f64;
    println!("trained {n} updates in {:.1?}; loss {head:.4} -> {tail:.4}", t0.elapsed());

    let (mut actual, mut model, mut naive, mut lo, mut up) = (vec![], vec![], vec![], vec![], vec![]);
    for s in &series {
        for b in forecast_series(&out.params, &cfg, s, train_days, holdout)? {
            let day = b.out_start / 24;
            actual.extend_from_slice(&s.values[b.out_start..b.out_start + 24]);
            naive.extend(naive_forecast(s, day)?);
            model.extend(b.point);
            lo.extend(b.lower);
            up.extend(b.upper);
        }
    }
    let m = metrics(&actual, &model)?;
    let nv = metrics(&actual, &naive)?;
    let cov = pi_coverage(&actual, &lo, &up)?;
    println!("model MAPE {:.3}  naive MAPE {:.3}  ratio {:.3}", m.mape, nv.mape, m.mape / nv.mape);
    println!("coverage inside {:.1}% below {:.1}% above {:.1}%", cov.inside, cov.below, cov.above);
    Ok(())
}
