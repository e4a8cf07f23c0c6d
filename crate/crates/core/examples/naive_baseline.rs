//! Metrics of the weekly naive forecast on synthetic series, with and
//! without noise, and interval coverage of a fixed +-3% band around it.

use es_adrnn::evaluation::{metrics, naive_forecast, pi_coverage, synth_generate_with, SynthOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for noise_sd in [0.0, 0.02] {
        let opts = SynthOptions {
            noise_sd,
            ..SynthOptions::default()
        };
        let s = synth_generate_with(3, 365, 1000.0, opts)?;
        let (mut actual, mut naive) = (Vec::new(), Vec::new());
        for day in 7..365 {
            actual.extend_from_slice(&s.values[day * 24..day * 24 + 24]);
            naive.extend(naive_forecast(&s, day)?);
        }
        let m = metrics(&actual, &naive)?;
        let lower: Vec<f64> = naive.iter().map(|v| v * 0.97).collect();
        let upper: Vec<f64> = naive.iter().map(|v| v * 1.03).collect();
        let c = pi_coverage(&actual, &lower, &upper)?;
        println!(
            "noise {noise_sd}: MAPE {:.3} MdAPE {:.3} IqrAPE {:.3} RMSE {:.1} MPE {:.3} StdPE {:.3}; +-3% band covers {:.1}%",
            m.mape, m.mdape, m.iqrape, m.rmse, m.mpe, m.stdpe, c.inside
        );
    }
    Ok(())
}
