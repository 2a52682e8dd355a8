//! Decomposition-based denoising with the per-contaminant mode rules.

use emgbench::decomposition::{DecompositionParams, Method};
use emgbench::metrics::snr;
use emgbench::mode_rules::decomposition_denoise_logged;
use emgbench::signal::DEFAULT_FS;
use emgbench::synthesis::{gen_clean, mix, Activation, ContaminantLabel, Split};

fn main() -> emgbench::Result<()> {
    let clean = gen_clean(2, DEFAULT_FS, 2.0, &Activation::default())?;
    let labels = [ContaminantLabel::Bw, ContaminantLabel::Pli, ContaminantLabel::Wgn];
    let seg = mix(&clean, &labels, -6.0, 9, Split::Test)?;
    for method in [Method::Emd, Method::Ceemdan, Method::Vmd] {
        let out = decomposition_denoise_logged(&seg.noisy, &labels, &DecompositionParams::default_for(method), 4)?;
        println!("{method}: SNR_out {:.2} dB", snr(&clean, &out.enhanced)?);
        for d in &out.log.decisions {
            println!("  mode {:>2} {:<4} {:<22} {:?}", d.mode_index, d.label.as_str(), d.rule, d.action);
        }
    }
    Ok(())
}
