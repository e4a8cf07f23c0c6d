//! Fixed-coefficient multiplicative Holt-Winters on a synthetic series:
//! initialize from two weeks, smooth a third, print the next day's factors.

use es_adrnn::autodiff::Tape;
use es_adrnn::evaluation::synth_generate;
use es_adrnn::holt_winters::EsState;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let series = synth_generate(7, 28, 1500.0)?;
    let mut tape = Tape::new();
    let a = tape.constant_scalar(-2.0);
    let b = tape.constant_scalar(-1.0);
    let mut es = EsState::init(&mut tape, &series.values[..336], 0, a, b)?;
    es.update_many(&mut tape, &series.values[..504])?;
    println!(
        "after 3 weeks: level {:.1} MW, alpha {:.4}, beta {:.4}",
        tape.scalar(es.level()),
        tape.scalar(es.alpha()),
        tape.scalar(es.beta())
    );
    let next = es.seasonal_forecast(504, 24)?;
    let window_mean = series.values[336..504].iter().sum::<f64>() / 168.0;
    println!("hour  factor  forecast  actual");
    for (h, s) in next.iter().enumerate() {
        let f = tape.scalar(*s);
        println!("{h:>4}  {f:6.4}  {:8.1}  {:6.1}", window_mean * f, series.values[504 + h]);
    }
    Ok(())
}
