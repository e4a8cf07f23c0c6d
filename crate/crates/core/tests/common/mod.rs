#![allow(dead_code)]

use es_adrnn::data::LoadSeries;
use es_adrnn::evaluation::synth_generate;
use es_adrnn::network::NetConfig;

pub fn tiny_net() -> NetConfig {
    NetConfig {
        state_size: 8,
        control_size: 4,
        output_size: 4,
        embedding_dim: 3,
        shortcuts: true,
    }
}

pub fn synth_pool(n: u64, days: usize) -> Vec<LoadSeries> {
    (0..n).map(|i| synth_generate(60 + i, days, 900.0 + 500.0 * i as f64).unwrap()).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Fixed-coefficient multiplicative Holt-Winters written out in plain loops.
/// Returns, for each forecast day, the window mean and the 24 seasonal
/// factors predicted for that day.
pub fn reference_hw(
    z: &[f64],
    start: usize,
    prefix: usize,
    first_out: usize,
    days: usize,
    alpha: f64,
    beta: f64,
) -> Vec<(f64, Vec<f64>)> {
    let mut level = z[start..start + 168].iter().sum::<f64>() / 168.0;
    let mut phase = vec![0.0f64; 168];
    for w in 0..prefix / 168 {
        let chunk = &z[start + 168 * w..start + 168 * (w + 1)];
        let m = chunk.iter().sum::<f64>() / 168.0;
        for p in 0..168 {
            phase[p] += chunk[p] / m;
        }
    }
    let norm = phase.iter().sum::<f64>() / 168.0;
    let mut season: Vec<f64> = phase.iter().map(|f| f / norm).collect();
    let mut out = Vec::new();
    for t in start..first_out + 24 * days {
        if t >= first_out && (t - first_out) % 24 == 0 {
            let zbar = z[t - 168..t].iter().sum::<f64>() / 168.0;
            out.push((zbar, (0..24).map(|j| season[(t + j - start) % 168]).collect()));
        }
        let p = (t - start) % 168;
        let s = season[p];
        let new_level = alpha * z[t] / s + (1.0 - alpha) * level;
        season[p] = beta * z[t] / new_level + (1.0 - beta) * s;
        level = new_level;
    }
    out
}
