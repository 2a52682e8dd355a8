//! Mix contaminants into a clean surrogate at a target SNR and check the result.

use emgbench::synthesis::{gen_clean, mix, Activation, ContaminantLabel, Split};
use emgbench::signal::DEFAULT_FS;

fn main() -> emgbench::Result<()> {
    let clean = gen_clean(1, DEFAULT_FS, 2.0, &Activation::default())?;
    let labels = [ContaminantLabel::Bw, ContaminantLabel::Pli, ContaminantLabel::Ecg];
    for snr in [2.0, -6.0, -14.0] {
        let seg = mix(&clean, &labels, snr, 7, Split::Test)?;
        let energies: Vec<String> = seg
            .components
            .iter()
            .map(|(l, c)| format!("{l}={:.4}", c.samples().iter().map(|v| v * v).sum::<f64>()))
            .collect();
        println!("target {snr:>6.1} dB  measured {:>9.5} dB  [{}]", seg.measured_snr(), energies.join(" "));
    }
    Ok(())
}
