//! EMD, CEEMDAN and VMD of a two-tone signal.

use emgbench::decomposition::{decompose, DecompositionParams, Method, VmdParams};
use emgbench::signal::{fmax, SampleBuffer, DEFAULT_FS};
use std::f64::consts::PI;

fn main() -> emgbench::Result<()> {
    let fs = DEFAULT_FS;
    let x: Vec<f64> = (0..2000)
        .map(|i| {
            let t = i as f64 / fs;
            (2.0 * PI * 50.0 * t).sin() + 0.5 * (2.0 * PI * 200.0 * t).sin()
        })
        .collect();
    let buf = SampleBuffer::new(x, fs)?;
    for params in [
        DecompositionParams::default_for(Method::Emd),
        DecompositionParams::default_for(Method::Ceemdan),
        DecompositionParams::Vmd(VmdParams { k_modes: 2, ..VmdParams::default() }),
    ] {
        let set = decompose(&buf, &params, 1)?;
        let peaks: Vec<String> = set.imfs.iter().map(|m| format!("{:.1}", fmax(m))).collect();
        let err = set
            .reconstruct()
            .samples()
            .iter()
            .zip(buf.samples())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        println!("{}: {} modes, fmax [{}] Hz, max reconstruction error {err:.2e}", set.method, set.len(), peaks.join(", "));
        if let Some(c) = &set.center_freqs {
            println!("  centre frequencies {c:.2?}");
        }
    }
    Ok(())
}
