//! Butterworth and notch responses, and the per-contaminant IIR denoiser.

use emgbench::iir::{design_notch, iir_denoise, table_filter, IirRecipe};
use emgbench::metrics::snr;
use emgbench::signal::DEFAULT_FS;
use emgbench::synthesis::{gen_clean, mix, Activation, ContaminantLabel, Split};

fn main() -> emgbench::Result<()> {
    let fs = DEFAULT_FS;
    for label in ContaminantLabel::ALL {
        let f = table_filter(label, fs, &IirRecipe::default())?;
        println!("{label}: {:?}", f.description);
        if let emgbench::iir::FilterDesc::Butterworth { band, .. } = f.description {
            for fc in band.cutoffs() {
                println!("  {:.3} dB at {fc} Hz", f.gain_db(fc));
            }
        }
    }
    let notch = design_notch(60.0, 5.0, fs)?;
    println!("notch 60/5: {:.1} dB at 60 Hz, gain {:.4} at 200 Hz", notch.gain_db(60.0), notch.gain(200.0));

    let clean = gen_clean(3, fs, 2.0, &Activation::default())?;
    let seg = mix(&clean, &[ContaminantLabel::Pli], -6.0, 11, Split::Test)?;
    let enhanced = iir_denoise(&seg.noisy, &[ContaminantLabel::Pli])?;
    println!("PLI at -6 dB -> {:.2} dB after IIR", snr(&clean, &enhanced)?);
    Ok(())
}
