//! Train a tiny denoiser, save it, reload it and enhance a segment.

use emgbench::nn::{enhance, load_params, save_params, train, windows, Bottleneck, ModelConfig, TrainOptions};
use emgbench::metrics::snr;
use emgbench::synthesis::dataset::{synthesize, DatasetSpec};

fn main() -> emgbench::Result<()> {
    let data = synthesize(&DatasetSpec::train_default(8, 1))?;
    let pairs: Vec<(&[f64], &[f64])> = data
        .iter()
        .map(|r| (r.segment.clean.samples(), r.segment.noisy.samples()))
        .collect();
    let cfg = ModelConfig::tiny(64, Bottleneck::Rm);
    let examples = windows(&pairs, cfg.input_len, Some(4));
    let opts = TrainOptions { max_epochs: 40, ..TrainOptions::default() };
    let out = train(&cfg, &examples, None, &opts)?;
    for h in out.history.iter().step_by(5) {
        println!("epoch {:>3} lr {:.0e} loss {:.4e}", h.epoch, h.lr, h.loss);
    }

    let dir = std::env::temp_dir().join("emgbench-train-example");
    std::fs::create_dir_all(&dir).map_err(|e| emgbench::Error::Format { path: dir.clone(), msg: e.to_string() })?;
    let path = dir.join("tiny.bin");
    save_params(&path, &out.params, &cfg)?;
    let params = load_params(&path, &cfg)?;
    let seg = &data[0].segment;
    let enhanced = enhance(&params, &cfg, &seg.noisy)?;
    println!("segment 0: {:.2} dB -> {:.2} dB", snr(&seg.clean, &seg.noisy)?, snr(&seg.clean, &enhanced)?);
    Ok(())
}
