mod common;

use common::{reference_hw, sigmoid, synth_pool, tiny_net};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use es_adrnn::autodiff::Tape;
use es_adrnn::config::{Schedule, TrainConfig};
use es_adrnn::data::LoadSeries;
use es_adrnn::model::ModelParams;
use es_adrnn::training::loss::pinball;
use es_adrnn::training::{init_prefix_hours, train, train_with_observer, walk_gradients, walk_loss, Quantiles};

const Q: Quantiles = Quantiles {
    point: 0.485,
    lower: 0.035,
    upper: 0.96,
};

fn loss_of(params: &ModelParams, s: &LoadSeries, start: usize, warmup: usize, steps: usize) -> f64 {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape).unwrap();
    let l = walk_loss(&mut tape, &vars, &s.values, s.start.date_naive(), start, warmup, steps, &Q, 0.3).unwrap();
    tape.scalar(l)
}

#[test]
fn silent_network_loss_matches_scalar_pipeline() {
    let s = &synth_pool(1, 120)[0];
    let (ia, ib) = (-2.0, -1.0);
    let params = ModelParams::zeros(tiny_net(), ia, ib).unwrap();
    let (start, warmup, steps) = (24 * 9, 21, 12);
    let got = loss_of(&params, s, start, warmup, steps);

    let first_out = start + 168 + 24 * warmup;
    let days = reference_hw(&s.values, start, init_prefix_hours(warmup), first_out, steps, sigmoid(ia), sigmoid(ib));
    let mut total = 0.0;
    for (d, (zbar, shat)) in days.iter().enumerate() {
        let mut day = 0.0;
        for h in 0..24 {
            let z = s.values[first_out + 24 * d + h] / zbar;
            day += pinball(z, shat[h], Q.point) + 0.3 * (pinball(z, shat[h], Q.lower) + pinball(z, shat[h], Q.upper));
        }
        total += day / 24.0;
    }
    let expected = total / steps as f64;
    assert!((got - expected).abs() <= 1e-12 * expected, "{got} vs {expected}");
}

#[test]
fn warmup_days_add_no_loss_terms() {
    let s = &synth_pool(1, 120)[0];
    let params = ModelParams::zeros(tiny_net(), -2.0, -1.0).unwrap();
    // shifting the split between warm-up and scored days changes which days
    // are averaged, not how each scored day is computed
    let a = loss_of(&params, s, 0, 14, 4);
    let b = loss_of(&params, s, 0, 16, 2);
    let c = loss_of(&params, s, 0, 14, 2);
    assert!(((4.0 * a - 2.0 * c) / 2.0 - b).abs() < 1e-12, "{a} {b} {c}");
}

#[test]
fn smoothing_logit_gradient_matches_differences() {
    let pool = synth_pool(2, 40);
    let mut params = ModelParams::random(tiny_net(), -1.0, -1.5, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let mut cfg = TrainConfig::default();
    cfg.net = tiny_net();
    cfg.warmup_train_weeks = 1;
    cfg.steps_per_batch = 3;
    let total = |p: &ModelParams| -> (f64, f64, f64) {
        let mut l = 0.0;
        let (mut ga, mut gb) = (0.0, 0.0);
        for s in &pool {
            let (v, g) = walk_gradients(p, s, 48, &cfg).unwrap();
            l += v / 2.0;
            ga += g[g.len() - 2][0] / 2.0;
            gb += g[g.len() - 1][0] / 2.0;
        }
        (l, ga, gb)
    };
    let (_, ga, gb) = total(&params);
    assert!(ga != 0.0 && gb != 0.0);
    let h = 1e-5;
    for (which, analytic) in [(0usize, ga), (1, gb)] {
        let orig = if which == 0 { params.alpha_logit[0] } else { params.beta_logit[0] };
        let set = |p: &mut ModelParams, v: f64| if which == 0 { p.alpha_logit[0] = v } else { p.beta_logit[0] = v };
        set(&mut params, orig + h);
        let up = total(&params).0;
        set(&mut params, orig - h);
        let down = total(&params).0;
        set(&mut params, orig);
        let numeric = (up - down) / (2.0 * h);
        assert!((numeric - analytic).abs() <= 1e-4 * analytic.abs(), "{which}: {analytic} vs {numeric}");
    }
}

#[test]
fn short_training_lowers_loss_on_fixed_walks() {
    let pool = synth_pool(2, 120);
    let mut cfg = TrainConfig::default();
    cfg.epochs = 1;
    cfg.updates_per_epoch = 20;
    cfg.seed = 3;
    let out = train(&pool, &cfg).unwrap();
    let init = ModelParams::random(cfg.net, cfg.alpha_logit_init, cfg.beta_logit_init, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let probe = |p: &ModelParams| -> f64 {
        pool.iter()
            .flat_map(|s| [0, 24 * 20, 24 * 40].map(|st| walk_gradients(p, s, st, &cfg).unwrap().0))
            .sum()
    };
    let (before, after) = (probe(&init), probe(&out.params));
    assert!(after < before, "{before} -> {after}");
}

#[test]
fn learning_rate_schedule_is_followed() {
    let pool = synth_pool(1, 60);
    let mut cfg = TrainConfig::default();
    cfg.net = tiny_net();
    cfg.epochs = 3;
    cfg.updates_per_epoch = 2;
    cfg.steps_per_batch = 2;
    cfg.warmup_train_weeks = 1;
    cfg.learning_rate = "1:0.01,2-3:0.002".parse().unwrap();
    cfg.batch_size = Schedule::new(vec![(1, 1, 1), (2, 3, 3)]);
    let mut seen = Vec::new();
    train_with_observer(&pool, &cfg, None, |u| seen.push((u.epoch, u.learning_rate, u.batch_size))).unwrap();
    assert_eq!(
        seen,
        [(1, 0.01, 1), (1, 0.01, 1), (2, 0.002, 3), (2, 0.002, 3), (3, 0.002, 3), (3, 0.002, 3)]
    );
}

#[test]
fn same_seed_same_checkpoint_bytes() {
    let pool = synth_pool(2, 60);
    let mut cfg = TrainConfig::default();
    cfg.net = tiny_net();
    cfg.epochs = 1;
    cfg.updates_per_epoch = 3;
    cfg.warmup_train_weeks = 1;
    cfg.steps_per_batch = 5;
    let bytes = |o: es_adrnn::TrainOutcome| {
        es_adrnn::Checkpoint {
            config: cfg.clone(),
            seed: cfg.seed,
            params: o.params,
            loss_trace: o.loss_trace,
        }
        .to_bytes()
    };
    assert_eq!(bytes(train(&pool, &cfg).unwrap()), bytes(train(&pool, &cfg).unwrap()));
}

#[test]
fn nonfinite_loss_aborts_with_location() {
    let pool = synth_pool(1, 60);
    let mut cfg = TrainConfig::default();
    cfg.net = tiny_net();
    cfg.epochs = 1;
    cfg.updates_per_epoch = 2;
    cfg.warmup_train_weeks = 1;
    cfg.steps_per_batch = 2;
    let mut bad = ModelParams::zeros(cfg.net, -3.5, -3.5).unwrap();
    bad.net.head_b[0] = f64::NAN;
    let err = train_with_observer(&pool, &cfg, Some(bad), |_| {}).unwrap_err();
    assert!(matches!(err, es_adrnn::training::TrainError::NonFinite { epoch: 1, update: 0 }), "{err}");
}
