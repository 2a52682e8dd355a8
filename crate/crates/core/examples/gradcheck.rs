//! Finite-difference check of the network gradients.

use emgbench::nn::{gradcheck, Bottleneck, GradcheckOptions, ModelConfig};

fn main() -> emgbench::Result<()> {
    let opts = GradcheckOptions { max_per_tensor: Some(4), ..GradcheckOptions::default() };
    for mode in [Bottleneck::Rm, Bottleneck::Dm, Bottleneck::Identity] {
        let cfg = ModelConfig { base_width: 2, heads: 2, ff_dim: 64, ..ModelConfig::tiny(32, mode) };
        let r = gradcheck(&cfg, &opts)?;
        println!("{:<8} {} entries, max rel error {:.2e}, passed {}", r.bottleneck, r.checked, r.max_rel_error, r.passed);
    }
    Ok(())
}
