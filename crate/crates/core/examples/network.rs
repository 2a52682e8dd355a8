//! Shapes through the U-Net/transformer denoiser in each bottleneck mode.

use emgbench::nn::{forward, Bottleneck, ModelConfig, ModelParams, Pass, Tensor};

fn main() -> emgbench::Result<()> {
    for mode in [Bottleneck::Rm, Bottleneck::Dm, Bottleneck::Identity] {
        let cfg = ModelConfig::tiny(64, mode);
        let params = ModelParams::init(&cfg)?;
        let x = Tensor::from_vec(&[2, 1, 64], (0..128).map(|i| (i as f64 * 0.3).sin()).collect());
        let (y, cache) = forward(&params, &cfg, &x, Pass::Eval)?;
        println!(
            "{mode:?}: {} trainable values, latent {:?} ({} values), output {:?}",
            params.trainable_count(),
            cfg.latent_shape(),
            cache.latent(0).len(),
            y.shape
        );
    }
    let paper = ModelConfig::paper(2000, Bottleneck::Rm);
    println!("paper widths at d=2000: latent {:?}", paper.latent_shape());
    Ok(())
}
