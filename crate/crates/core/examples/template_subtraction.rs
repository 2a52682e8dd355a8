//! Detect ECG bursts and subtract their template.

use emgbench::metrics::snr;
use emgbench::signal::DEFAULT_FS;
use emgbench::synthesis::{gen_clean, mix, Activation, ContaminantLabel, Split};
use emgbench::template::ts_iir_denoise_regions;

fn main() -> emgbench::Result<()> {
    let clean = gen_clean(5, DEFAULT_FS, 2.0, &Activation::default())?;
    let seg = mix(&clean, &[ContaminantLabel::Ecg], -6.0, 21, Split::Test)?;
    let (enhanced, regions) = ts_iir_denoise_regions(&seg.noisy, &[ContaminantLabel::Ecg])?;
    for r in &regions {
        println!("ECG region {r:?}");
    }
    println!(
        "SNR {:.2} dB -> {:.2} dB",
        snr(&clean, &seg.noisy)?,
        snr(&clean, &enhanced)?
    );
    Ok(())
}
