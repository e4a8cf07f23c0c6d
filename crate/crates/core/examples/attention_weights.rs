//! Runs the untrained network over a few days and prints how the attention
//! cell rescales the input window.

use es_adrnn::autodiff::Tape;
use es_adrnn::evaluation::synth_generate;
use es_adrnn::network::{forward_step_traced, NetConfig, NetParams, NetState};
use es_adrnn::preprocessing::{assemble_input, calendar_onehots, squash, INPUT_HOURS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = NetConfig::default();
    let params = NetParams::random(config, &mut ChaCha8Rng::seed_from_u64(3))?;
    let series = synth_generate(3, 40, 1000.0)?;
    let mut tape = Tape::new();
    let vars = params.register(&mut tape)?;
    let mut state = NetState::new(&mut tape, &config)?;
    for day in 7..12 {
        let window = &series.values[(day - 7) * 24..day * 24];
        let zbar = window.iter().sum::<f64>() / INPUT_HOURS as f64;
        let x_in: Vec<f64> = window.iter().map(|z| squash(*z, zbar, 1.0)).collect::<Result<_, _>>()?;
        let raw = assemble_input(&x_in, &[1.0; 24], zbar, &calendar_onehots(series.date_of_hour(day * 24)))?;
        let raw = tape.constant_vec(raw);
        let trace = forward_step_traced(&mut tape, raw, &vars, &mut state)?;
        let w: Vec<f64> = tape.value(trace.attention)[..INPUT_HOURS].iter().map(|m| m.exp()).collect();
        let (lo, hi) = w.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        println!("{}: window weights in [{lo:.3}, {hi:.3}], point head hour 0 {:+.4}", series.date_of_hour(day * 24), tape.value(trace.output)[0]);
    }
    Ok(())
}
