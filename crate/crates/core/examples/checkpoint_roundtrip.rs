//! Saves a freshly initialized model and reads it back.

use es_adrnn::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use es_adrnn::{ModelParams, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = TrainConfig::default();
    let params = ModelParams::random(config.net, config.alpha_logit_init, config.beta_logit_init, &mut ChaCha8Rng::seed_from_u64(0))?;
    let cp = Checkpoint {
        seed: config.seed,
        config,
        params,
        loss_trace: Vec::new(),
    };
    let path = std::env::temp_dir().join(format!("es-adrnn-example-{}.ckpt", std::process::id()));
    save_checkpoint(&cp, &path)?;
    let back = load_checkpoint(&path)?;
    println!(
        "{} parameters in {} arrays, {} bytes; identical after reload: {}",
        back.params.num_parameters(),
        back.params.arrays().len(),
        std::fs::metadata(&path)?.len(),
        back == cp
    );
    std::fs::remove_file(&path)?;
    Ok(())
}
