//! Finite-difference check of the tape on a small composite function and on
//! the full model's smoothing logits.

use es_adrnn::autodiff::{grad_check, Shape, Tape};
use es_adrnn::evaluation::synth_generate;
use es_adrnn::model::ModelParams;
use es_adrnn::network::NetConfig;
use es_adrnn::training::{walk_loss, Quantiles};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // mean(tanh(x) * exp(x) + ln(sigmoid(x)))
    let x = [0.3, -1.2, 2.0, 0.05];
    let err = grad_check(
        |t, x| {
            let a = t.tanh(x);
            let b = t.exp(x);
            let ab = t.mul(a, b)?;
            let s = t.sigmoid(x);
            let l = t.ln(s);
            let y = t.add(ab, l)?;
            Ok(t.mean(y))
        },
        &x,
        Shape::vector(4),
        1e-6,
    )?;
    println!("composite function: max relative error {err:.2e}");

    let net = NetConfig {
        state_size: 8,
        control_size: 4,
        output_size: 4,
        embedding_dim: 3,
        shortcuts: true,
    };
    let series = synth_generate(1, 28, 1000.0)?;
    let q = Quantiles {
        point: 0.485,
        lower: 0.035,
        upper: 0.96,
    };
    let mut params = ModelParams::random(net, -1.0, -2.0, &mut ChaCha8Rng::seed_from_u64(1))?;
    let loss = |p: &ModelParams| -> Result<(f64, f64), Box<dyn std::error::Error>> {
        let mut tape = Tape::new();
        let vars = p.register(&mut tape)?;
        let l = walk_loss(&mut tape, &vars, &series.values, series.start.date_naive(), 0, 7, 3, &q, 0.3)?;
        let g = tape.backward(l)?;
        Ok((tape.scalar(l), g.get(vars.alpha_logit)[0]))
    };
    let (_, analytic) = loss(&params)?;
    let h = 1e-5;
    params.alpha_logit[0] += h;
    let up = loss(&params)?.0;
    params.alpha_logit[0] -= 2.0 * h;
    let down = loss(&params)?.0;
    let numeric = (up - down) / (2.0 * h);
    println!("d loss / d alpha logit: analytic {analytic:.8e}, numeric {numeric:.8e}");
    Ok(())
}
