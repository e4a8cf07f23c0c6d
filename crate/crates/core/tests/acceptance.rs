//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Criteria 6 to 10 share one synthetic training setup.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use es_adrnn::autodiff::Tape;
use es_adrnn::cells::{adrnn_step, drnn_step, AttentiveState, CellParams, DilatedState};
use es_adrnn::checkpoint::Checkpoint;
use es_adrnn::config::TrainConfig;
use es_adrnn::data::LoadSeries;
use es_adrnn::evaluation::{ensemble_combine_runs, metrics, naive_forecast, pi_coverage, synth_generate, Combine, MetricReport};
use es_adrnn::forecast::{forecast_series, ForecastBundle};
use es_adrnn::model::ModelParams;
use es_adrnn::network::NetConfig;
use es_adrnn::preprocessing::{postprocess, squash};
use es_adrnn::training::{ensemble_train, init_prefix_hours, train, walk_loss, Quantiles};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome, String> {
    Ok(Outcome { pass, detail })
}

type Check = Result<Outcome, String>;

fn mini_net() -> NetConfig {
    NetConfig {
        state_size: 8,
        control_size: 4,
        output_size: 4,
        embedding_dim: 3,
        shortcuts: true,
    }
}

// ---------------------------------------------------------------- 1

fn mini_loss(params: &ModelParams, series: &[LoadSeries], q: &Quantiles) -> (f64, Vec<Vec<f64>>) {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape).unwrap();
    let mut parts = Vec::new();
    for s in series {
        parts.push(walk_loss(&mut tape, &vars, &s.values, s.start.date_naive(), 0, 7, 3, q, 0.3).unwrap());
    }
    let all = tape.concat(&parts).unwrap();
    let loss = tape.mean(all);
    let grads = tape.backward(loss).unwrap();
    (tape.scalar(loss), vars.gradients(&grads))
}

fn criterion_gradient() -> Check {
    let series: Vec<LoadSeries> = (0..2).map(|i| synth_generate(20 + i, 28, 800.0 + 400.0 * i as f64).unwrap()).collect();
    let q = Quantiles {
        point: 0.485,
        lower: 0.035,
        upper: 0.96,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut params = ModelParams::random(mini_net(), -1.5, -2.0, &mut rng).map_err(|e| e.to_string())?;
    // nonzero biases so every parameter array carries gradient
    for (i, a) in params.arrays_mut().into_iter().enumerate() {
        if a.len() > 1 && i % 4 == 3 {
            a.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        }
    }
    let (_, grads) = mini_loss(&params, &series, &q);
    let names: Vec<String> = params.arrays().iter().map(|a| a.0.clone()).collect();

    let h = 1e-5;
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    for (k, g) in grads.iter().enumerate() {
        let mut idx: Vec<usize> = (0..g.len()).collect();
        idx.sort_by(|a, b| g[*b].abs().total_cmp(&g[*a].abs()));
        let mut pick: Vec<usize> = idx.iter().take(6).copied().collect();
        for _ in 0..6 {
            pick.push(rng.random_range(0..g.len()));
        }
        pick.sort_unstable();
        pick.dedup();
        for i in pick {
            let orig = params.arrays_mut()[k][i];
            params.arrays_mut()[k][i] = orig + h;
            let up = mini_loss(&params, &series, &q).0;
            params.arrays_mut()[k][i] = orig - h;
            let down = mini_loss(&params, &series, &q).0;
            params.arrays_mut()[k][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = g[i];
            // floor well above the ~1e-12 roundoff of the differences
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            let rel = (analytic - numeric).abs() / denom;
            checked += 1;
            if !(rel <= worst.0) {
                worst = (rel, format!("{}[{i}] analytic {analytic:.6e} numeric {numeric:.6e}", names[k]));
            }
        }
    }
    outcome(
        worst.0 < 1e-4,
        format!("max relative error {:.2e} over {checked} coordinates (worst {})", worst.0, worst.1),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_quantile() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sample: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..10.0)).collect();
    let mut sorted = sample.clone();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[999]);
    let steps = 20_000;
    let step = (hi - lo) / steps as f64;
    let mut details = Vec::new();
    let mut pass = true;
    for q in [0.035, 0.485, 0.96] {
        let mut best = (f64::INFINITY, lo);
        for k in 0..=steps {
            let c = lo + step * k as f64;
            let l = sample.iter().map(|&z| es_adrnn::training::loss::pinball(z, c, q)).sum::<f64>() / 1000.0;
            if l < best.0 {
                best = (l, c);
            }
        }
        // empirical quantile: any point between the order statistics around n*q
        let nq = q * 1000.0;
        let k = nq.ceil() as usize;
        let (a, b) = if (nq - nq.round()).abs() < 1e-9 {
            (sorted[k - 1], sorted[k])
        } else {
            (sorted[k - 1], sorted[k - 1])
        };
        let dist = if best.1 < a { a - best.1 } else if best.1 > b { best.1 - b } else { 0.0 };
        pass &= dist <= step;
        details.push(format!("q={q}: argmin {:.4} vs [{a:.4}, {b:.4}]", best.1));
    }
    outcome(pass, format!("{} (grid step {step:.1e})", details.join("; ")))
}

// ---------------------------------------------------------------- 3

/// Straight-line fixed-coefficient Holt-Winters with the window-mean scaling
/// used by the pipeline when the network is silent.
fn reference_hw(z: &[f64], start: usize, prefix: usize, first_out: usize, days: usize, alpha: f64, beta: f64) -> Vec<f64> {
    let week = &z[start..start + 168];
    let mut level = week.iter().sum::<f64>() / 168.0;
    let weeks = prefix / 168;
    let mut phase = [0.0f64; 168];
    for w in 0..weeks {
        let chunk = &z[start + 168 * w..start + 168 * (w + 1)];
        let m = chunk.iter().sum::<f64>() / 168.0;
        for p in 0..168 {
            phase[p] += chunk[p] / m;
        }
    }
    let norm = phase.iter().sum::<f64>() / 168.0;
    // seasonal[t] for absolute hour t, stored by hour of week relative to start
    let mut season: Vec<f64> = phase.iter().map(|f| f / norm).collect();
    let mut forecasts = Vec::new();
    let mut t = start;
    while t < first_out + 24 * days {
        if t >= first_out && (t - first_out) % 24 == 0 {
            let zbar = z[t - 168..t].iter().sum::<f64>() / 168.0;
            for j in 0..24 {
                forecasts.push(zbar * season[(t + j - start) % 168]);
            }
        }
        let p = (t - start) % 168;
        let s = season[p];
        let new_level = alpha * z[t] / s + (1.0 - alpha) * level;
        season[p] = beta * z[t] / new_level + (1.0 - beta) * s;
        level = new_level;
        t += 1;
    }
    forecasts
}

fn criterion_es_degeneracy() -> Check {
    let s = synth_generate(31, 500, 1200.0).unwrap();
    let mut cfg = TrainConfig::default();
    cfg.net = mini_net();
    let (ia, ib) = (-1.2, -2.3);
    let params = ModelParams::zeros(cfg.net, ia, ib).map_err(|e| e.to_string())?;
    let first_day = 400;
    let days = 50;
    let bundles = forecast_series(&params, &cfg, &s, first_day, days).map_err(|e| e.to_string())?;
    let warm = cfg.warmup_test_steps();
    let start = first_day * 24 - 168 - 24 * warm;
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let reference = reference_hw(&s.values, start, init_prefix_hours(warm), first_day * 24, days, sig(ia), sig(ib));
    let mut worst = 0.0f64;
    for (d, b) in bundles.iter().enumerate() {
        for h in 0..24 {
            let r = reference[24 * d + h];
            for v in [b.point[h], b.lower[h], b.upper[h]] {
                worst = worst.max((v - r).abs() / r.abs());
            }
        }
    }
    outcome(
        worst <= 1e-10 && reference.len() == 24 * days,
        format!("max relative deviation {worst:.2e} over {days} days"),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_attention_degeneracy() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (input, hidden, out, state) = (12, 9, 5, 3);
    let attention = CellParams::zeros(input, input + state, input, state).map_err(|e| e.to_string())?;
    let main = CellParams::random(input, hidden, out, state, &mut rng).map_err(|e| e.to_string())?;
    let mut tape = Tape::new();
    let av = attention.register(&mut tape).map_err(|e| e.to_string())?;
    let mv = main.register(&mut tape).map_err(|e| e.to_string())?;
    let mut att_state = AttentiveState {
        attention: DilatedState::new(&mut tape, 2, input + state, state).map_err(|e| e.to_string())?,
        main: DilatedState::new(&mut tape, 2, hidden, state).map_err(|e| e.to_string())?,
    };
    let mut plain_state = DilatedState::new(&mut tape, 2, hidden, state).map_err(|e| e.to_string())?;
    let mut identical = 0;
    for _ in 0..100 {
        let x = tape.constant_vec((0..input).map(|_| rng.random_range(-3.0..3.0)).collect());
        let a = adrnn_step(&mut tape, x, &mut att_state, &av, &mv).map_err(|e| e.to_string())?;
        let p = drnn_step(&mut tape, x, &mut plain_state, &mv).map_err(|e| e.to_string())?;
        let same = tape.value(a.y).iter().zip(tape.value(p.out)).all(|(u, v)| u.to_bits() == v.to_bits());
        identical += same as usize;
    }
    outcome(identical == 100, format!("{identical}/100 steps bitwise identical"))
}

// ---------------------------------------------------------------- 5

fn criterion_round_trips() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let z = 10f64.powf(rng.random_range(0.0..5.0));
        let zbar = z * rng.random_range(0.5..2.0);
        let shat = rng.random_range(0.5..1.5);
        let back = postprocess(squash(z, zbar, shat).map_err(|e| e.to_string())?, zbar, shat);
        worst = worst.max((back - z).abs() / z);
    }
    let mut cfg = TrainConfig::default();
    cfg.net = mini_net();
    let params = ModelParams::random(cfg.net, -3.5, -3.5, &mut rng).map_err(|e| e.to_string())?;
    let cp = Checkpoint {
        config: cfg,
        seed: 55,
        params,
        loss_trace: vec![0.3, 0.2],
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("rt.ckpt");
    es_adrnn::save_checkpoint(&cp, &path).map_err(|e| e.to_string())?;
    let back = es_adrnn::load_checkpoint(&path).map_err(|e| e.to_string())?;
    let bitwise = back.params.fingerprint() == cp.params.fingerprint() && back == cp && back.to_bytes() == cp.to_bytes();
    outcome(
        worst <= 1e-12 && bitwise,
        format!("squash/postprocess max relative error {worst:.2e} on 1e5 triples; checkpoint bitwise {bitwise}"),
    )
}

// ---------------------------------------------------------------- 6 to 10

const HOLDOUT_DAYS: usize = 60;
const SERIES_DAYS: usize = 730;

struct Shared {
    series: Vec<LoadSeries>,
    cfg: TrainConfig,
    member_runs: Vec<Vec<Vec<ForecastBundle>>>,
    member_mapes: Vec<f64>,
    rerun_report: MetricReport,
    first_report: MetricReport,
    naive: MetricReport,
    training_time: Duration,
}

fn synthetic_setup() -> (Vec<LoadSeries>, TrainConfig) {
    let series = (0..4)
        .map(|i| synth_generate(100 + i, SERIES_DAYS, 1000.0 + 700.0 * i as f64).unwrap())
        .collect();
    let mut cfg = TrainConfig::default();
    cfg.epochs = 3;
    cfg.updates_per_epoch = 200;
    cfg.batch_size = "1-3:2".parse().unwrap();
    cfg.learning_rate = "1:3e-3,2:1e-3,3:3e-4".parse().unwrap();
    cfg.seed = 2024;
    (series, cfg)
}

fn forecast_all(params: &ModelParams, cfg: &TrainConfig, series: &[LoadSeries]) -> Result<Vec<Vec<ForecastBundle>>, String> {
    series
        .iter()
        .map(|s| forecast_series(params, cfg, s, SERIES_DAYS - HOLDOUT_DAYS, HOLDOUT_DAYS).map_err(|e| e.to_string()))
        .collect()
}

/// (actual, point, lower, upper) flattened over series and days.
fn flatten(series: &[LoadSeries], runs: &[Vec<ForecastBundle>]) -> [Vec<f64>; 4] {
    let mut out: [Vec<f64>; 4] = Default::default();
    for (s, run) in series.iter().zip(runs) {
        for b in run {
            out[0].extend_from_slice(&s.values[b.out_start..b.out_start + 24]);
            out[1].extend_from_slice(&b.point);
            out[2].extend_from_slice(&b.lower);
            out[3].extend_from_slice(&b.upper);
        }
    }
    out
}

fn report(series: &[LoadSeries], runs: &[Vec<ForecastBundle>]) -> Result<MetricReport, String> {
    let f = flatten(series, runs);
    metrics(&f[0], &f[1]).map_err(|e| e.to_string())
}

fn shared_run() -> Result<Shared, String> {
    let (series, cfg) = synthetic_setup();
    let train_set: Vec<LoadSeries> = series.iter().map(|s| s.truncated((SERIES_DAYS - HOLDOUT_DAYS) * 24)).collect();
    let t0 = Instant::now();
    let members = ensemble_train(&train_set, &cfg, 3).map_err(|e| e.to_string())?;
    let training_time = t0.elapsed() / 3;
    let rerun = train(&train_set, &cfg).map_err(|e| e.to_string())?;

    let member_runs = members
        .iter()
        .map(|m| forecast_all(&m.params, &cfg, &series))
        .collect::<Result<Vec<_>, _>>()?;
    let member_mapes = member_runs
        .iter()
        .map(|r| report(&series, r).map(|m| m.mape))
        .collect::<Result<Vec<_>, _>>()?;
    let first_report = report(&series, &member_runs[0])?;
    let rerun_report = report(&series, &forecast_all(&rerun.params, &cfg, &series)?)?;

    let mut actual = Vec::new();
    let mut naive = Vec::new();
    for s in &series {
        for d in SERIES_DAYS - HOLDOUT_DAYS..SERIES_DAYS {
            actual.extend_from_slice(&s.values[d * 24..d * 24 + 24]);
            naive.extend(naive_forecast(s, d).map_err(|e| e.to_string())?);
        }
    }
    let naive = metrics(&actual, &naive).map_err(|e| e.to_string())?;
    Ok(Shared {
        series,
        cfg,
        member_runs,
        member_mapes,
        rerun_report,
        first_report,
        naive,
        training_time,
    })
}

fn criterion_learning(s: &Shared) -> Check {
    let ratio = s.first_report.mape / s.naive.mape;
    outcome(
        ratio < 0.8,
        format!(
            "model MAPE {:.3} vs naive {:.3} (ratio {ratio:.3}, need < 0.8); one training run {:.1?}",
            s.first_report.mape, s.naive.mape, s.training_time
        ),
    )
}

fn criterion_intervals(s: &Shared) -> Check {
    let f = flatten(&s.series, &s.member_runs[0]);
    let c = pi_coverage(&f[0], &f[2], &f[3]).map_err(|e| e.to_string())?;
    outcome(
        (80.0..=98.0).contains(&c.inside) && c.below < 15.0 && c.above < 15.0,
        format!("inside {:.2}%, below {:.2}%, above {:.2}%", c.inside, c.below, c.above),
    )
}

fn criterion_ensemble(s: &Shared) -> Check {
    let combined: Vec<Vec<ForecastBundle>> = (0..s.series.len())
        .map(|i| {
            let runs: Vec<Vec<ForecastBundle>> = s.member_runs.iter().map(|m| m[i].clone()).collect();
            ensemble_combine_runs(&runs, Combine::Mean).map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    let ens = report(&s.series, &combined)?.mape;
    let mut sorted = s.member_mapes.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    outcome(
        ens <= median,
        format!(
            "ensemble MAPE {ens:.4} vs member MAPEs [{}] (median {median:.4})",
            s.member_mapes.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn criterion_determinism(s: &Shared) -> Check {
    let same = s.first_report.values().iter().zip(s.rerun_report.values()).all(|(a, b)| a.to_bits() == b.to_bits());
    outcome(
        same,
        format!("seed {} twice: MAPE {} and {}", s.cfg.seed, s.first_report.mape, s.rerun_report.mape),
    )
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

fn criterion_coefficients(s: &Shared) -> Check {
    let days: Vec<&ForecastBundle> = s.member_runs[0].iter().flatten().collect();
    let alpha: Vec<f64> = days.iter().map(|b| b.alpha).collect();
    let beta: Vec<f64> = days.iter().map(|b| b.beta).collect();
    let inside = alpha.iter().chain(&beta).all(|c| *c > 0.0 && *c < 1.0);
    let (va, vb) = (variance(&alpha), variance(&beta));
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        format!("[{lo:.4}, {hi:.4}]")
    };
    outcome(
        inside && va > 0.0 && vb > 0.0,
        format!(
            "{} days: alpha in {} var {va:.2e}, beta in {} var {vb:.2e}",
            alpha.len(),
            range(&alpha),
            range(&beta)
        ),
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let line = |n: usize, name: &str, limit: Duration, check: &dyn Fn() -> Check| -> bool {
        let t0 = Instant::now();
        let result = check();
        let took = t0.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = took <= limit;
        let pass = pass && in_time;
        let timing = if in_time {
            format!("{took:.1?}")
        } else {
            format!("{took:.1?}, over the {limit:?} limit")
        };
        println!("criterion {n:>2} {}: {name}: {detail} [{timing}]", if pass { "PASS" } else { "FAIL" });
        pass
    };
    let mut tally = |pass: bool| failed += (!pass) as usize;

    tally(line(1, "gradient integrity", Duration::from_secs(60), &criterion_gradient));
    tally(line(2, "quantile oracle", Duration::from_secs(10), &criterion_quantile));
    tally(line(3, "ES degeneracy", Duration::from_secs(10), &criterion_es_degeneracy));
    tally(line(4, "attention degeneracy", Duration::from_secs(10), &criterion_attention_degeneracy));
    tally(line(5, "round trips", Duration::from_secs(30), &criterion_round_trips));

    let t0 = Instant::now();
    let shared = shared_run();
    println!("(criteria 6-10 setup: 3 ensemble members plus a rerun, {:.1?})", t0.elapsed());
    match shared {
        Ok(s) => {
            let limit = Duration::from_secs(30 * 60);
            tally(line(6, "learning signal", limit, &|| criterion_learning(&s)));
            tally(line(7, "PI behaviour", limit, &|| criterion_intervals(&s)));
            tally(line(8, "ensemble effect", limit, &|| criterion_ensemble(&s)));
            tally(line(9, "determinism", limit, &|| criterion_determinism(&s)));
            tally(line(10, "smoothing coefficient dynamics", limit, &|| criterion_coefficients(&s)));
        }
        Err(e) => {
            for (n, name) in [
                (6, "learning signal"),
                (7, "PI behaviour"),
                (8, "ensemble effect"),
                (9, "determinism"),
                (10, "smoothing coefficient dynamics"),
            ] {
                println!("criterion {n:>2} FAIL: {name}: setup error: {e}");
                tally(false);
            }
        }
    }
    if failed == 0 {
        println!("acceptance: all 10 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
