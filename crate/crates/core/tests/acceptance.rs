//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints its PASS/FAIL line; exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use emgbench::decomposition::{ceemdan, emd, vmd_with_state, CeemdanParams, DecompositionParams, Method, VmdParams};
use emgbench::iir::{apply_zero_phase, design_butterworth, design_notch, iir_denoise, Band, BiquadCascade};
use emgbench::metrics::{arv_vector, evaluate, mf_vector, prd, rmse, ReportKeys};
use emgbench::mode_rules::decomposition_denoise;
use emgbench::nn::{
    forward, gradcheck, train, windows, Bottleneck, GradcheckOptions, LrSchedule, ModelConfig, ModelParams, Pass,
    Tensor, TrainOptions,
};
use emgbench::signal::{SampleBuffer, DEFAULT_FS};
use emgbench::synthesis::dataset::{combinations, synthesize, DatasetSpec, SetPlan};
use emgbench::synthesis::{gen_clean, mix, Activation, ContaminantLabel, Split};
use emgbench::template::ts_iir_denoise;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn buf(v: Vec<f64>) -> SampleBuffer {
    SampleBuffer::new(v, DEFAULT_FS).unwrap()
}

fn tone(f: f64, amp: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| amp * (2.0 * PI * f * i as f64 / DEFAULT_FS).sin()).collect()
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn energy(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn c1_noisy_prd() -> Outcome {
    let t = Instant::now();
    let spec = DatasetSpec::test_default(200, 2024);
    let recs = synthesize(&spec).map_err(err)?;
    let prds: Vec<f64> = recs
        .iter()
        .map(|r| prd(&r.segment.clean, &r.segment.noisy))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let mean = prds.iter().sum::<f64>() / prds.len() as f64;
    let secs = t.elapsed().as_secs_f64();
    check(
        (mean - 244.45).abs() <= 0.5 && secs < 10.0,
        format!("{} segments, mean PRD {mean:.4}% (target 244.45 ± 0.5), {secs:.2} s (< 10 s)", prds.len()),
    )
}

fn c2_mixing_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let sets: Vec<Vec<ContaminantLabel>> = [1, 3, 5].iter().flat_map(|&k| combinations(k)).collect();
    let (mut worst_snr, mut worst_energy) = (0.0f64, 0.0f64);
    for i in 0..1000u64 {
        let snr: f64 = rng.gen_range(-20.0..10.0);
        let set = &sets[rng.gen_range(0..sets.len())];
        let clean = gen_clean(rng.gen(), DEFAULT_FS, 2.0, &Activation::default()).map_err(err)?;
        let seg = mix(&clean, set, snr, 1000 + i, Split::Test).map_err(err)?;
        let noise: Vec<f64> = seg.noisy.samples().iter().zip(clean.samples()).map(|(y, x)| y - x).collect();
        let measured = 10.0 * (energy(clean.samples()) / energy(&noise)).log10();
        worst_snr = worst_snr.max((measured - snr).abs());
        if seg.components.len() > 1 {
            let e: Vec<f64> = seg.components.iter().map(|(_, c)| energy(c.samples())).collect();
            let m = e.iter().sum::<f64>() / e.len() as f64;
            worst_energy = worst_energy.max(e.iter().map(|v| (v - m).abs() / m).fold(0.0, f64::max));
        }
    }
    check(
        worst_snr <= 0.01 && worst_energy <= 1e-9,
        format!("1000 mixtures: max |SNR error| {worst_snr:.2e} dB (≤ 0.01), max component energy spread {worst_energy:.2e} (≤ 1e-9)"),
    )
}

/// `|H(e^{jw})|` from the section coefficients.
fn magnitude(c: &BiquadCascade, f: f64) -> f64 {
    let w = 2.0 * PI * f / c.fs;
    c.sections
        .iter()
        .map(|s| {
            let num = (s.b0 + s.b1 * w.cos() + s.b2 * (2.0 * w).cos(), -s.b1 * w.sin() - s.b2 * (2.0 * w).sin());
            let den = (1.0 + s.a1 * w.cos() + s.a2 * (2.0 * w).cos(), -s.a1 * w.sin() - s.a2 * (2.0 * w).sin());
            num.0.hypot(num.1) / den.0.hypot(den.1)
        })
        .product()
}

fn c3_filter_responses() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    // The 20-500 Hz band-pass is designed at 2 kHz, where its upper edge is below Nyquist.
    let filters = [
        ("BW hp 10", Band::Highpass { cutoff: 10.0 }, DEFAULT_FS),
        ("MOA hp 40", Band::Highpass { cutoff: 40.0 }, DEFAULT_FS),
        ("MOA hp 20", Band::Highpass { cutoff: 20.0 }, DEFAULT_FS),
        ("ECG hp 40", Band::Highpass { cutoff: 40.0 }, DEFAULT_FS),
        ("WGN bp 20-500", Band::Bandpass { low: 20.0, high: 500.0 }, 2000.0),
    ];
    for (name, band, fs) in filters {
        let f = design_butterworth(4, band, fs).map_err(err)?;
        for fc in band.cutoffs() {
            let db = 20.0 * magnitude(&f, fc).log10();
            ok &= (db + 3.01).abs() <= 0.1;
            lines.push(format!("{name} {db:.3} dB@{fc}"));
        }
    }
    let notch = design_notch(60.0, 5.0, DEFAULT_FS).map_err(err)?;
    let n = 4000;
    let interior = 1000..3000;
    let through = |f: f64| -> Result<f64, String> {
        let x = buf(tone(f, 1.0, n));
        let y = apply_zero_phase(&notch, &x).map_err(err)?;
        Ok(rms(&y.samples()[interior.clone()]) / rms(&x.samples()[interior.clone()]))
    };
    let att = -20.0 * through(60.0)?.log10();
    let keep = through(200.0)?;
    ok &= att >= 30.0 && (keep - 1.0).abs() <= 0.05;
    lines.push(format!("notch 60/5: {att:.1} dB at 60 Hz, 200 Hz gain {keep:.4}"));
    check(ok, lines.join("; "))
}

fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let parts: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| (rng.gen_range(0.5..300.0), rng.gen_range(0.1..2.0), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    (0..n)
        .map(|i| {
            let t = i as f64 / DEFAULT_FS;
            parts.iter().map(|(f, a, p)| a * (2.0 * PI * f * t + p).sin()).sum::<f64>() + rng.gen_range(-0.5..0.5)
        })
        .collect()
}

fn c4_completeness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_emd = 0.0f64;
    for _ in 0..100 {
        let x = buf(random_signal(&mut rng, 1000));
        let set = emd(&x, 10).map_err(err)?;
        let r = set.reconstruct();
        let e = r.samples().iter().zip(x.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_emd = worst_emd.max(e / x.max_abs());
    }
    let p = CeemdanParams::default();
    let mut worst_ceemdan = 0.0f64;
    for _ in 0..20 {
        let x = buf(random_signal(&mut rng, 1000));
        let set = ceemdan(&x, p, rng.gen()).map_err(err)?;
        let r = set.reconstruct();
        let e = r.samples().iter().zip(x.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_ceemdan = worst_ceemdan.max(e / (10.0 * p.noise_scale * x.std()));
    }
    check(
        worst_emd <= 1e-8 && worst_ceemdan <= 1.0,
        format!(
            "EMD max relative error {worst_emd:.2e} over 100 inputs (≤ 1e-8); CEEMDAN error / (10·noise_scale·std) {worst_ceemdan:.2e} over 20 inputs (≤ 1)"
        ),
    )
}

fn c5_vmd_two_tone() -> Outcome {
    let x: Vec<f64> = tone(50.0, 1.0, 2000).iter().zip(tone(200.0, 0.5, 2000)).map(|(a, b)| a + b).collect();
    let params = VmdParams {
        k_modes: 2,
        tol: 1e-3,
        max_iterations: 500,
        ..VmdParams::default()
    };
    let (set, state) = vmd_with_state(&buf(x), params, 0).map_err(err)?;
    let mut c = set.center_freqs.clone().unwrap_or_default();
    c.sort_by(f64::total_cmp);
    let ok = c.len() == 2 && (c[0] - 50.0).abs() <= 2.0 && (c[1] - 200.0).abs() <= 2.0 && state.iteration < 500;
    check(ok, format!("centres {c:.3?} Hz, converged after {} iterations (change {:.1e})", state.iteration, state.change))
}

fn single_set(label: ContaminantLabel, seed: u64) -> DatasetSpec {
    DatasetSpec {
        snrs_db: vec![-6.0],
        sets: SetPlan::Fixed { sets: vec![vec![label]] },
        ..DatasetSpec::test_default(100, seed)
    }
}

fn mean_improvement(
    label: ContaminantLabel,
    seed: u64,
    denoise: impl Fn(&SampleBuffer, &[ContaminantLabel], usize) -> emgbench::Result<SampleBuffer> + Sync,
) -> Result<f64, String> {
    use rayon::prelude::*;
    let recs = synthesize(&single_set(label, seed)).map_err(err)?;
    let imps: Vec<f64> = recs
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let s = &r.segment;
            let enh = denoise(&s.noisy, s.labels(), i)?;
            let keys = ReportKeys {
                id: r.id.clone(),
                method: String::new(),
                contaminants: String::new(),
                snr_level: -6.0,
            };
            Ok(evaluate(&s.clean, &s.noisy, &enh, keys)?.snr_imp.unwrap_or(f64::INFINITY))
        })
        .collect::<emgbench::Result<_>>()
        .map_err(err)?;
    Ok(imps.iter().sum::<f64>() / imps.len() as f64)
}

fn c6_classical_sanity() -> Outcome {
    let t = Instant::now();
    let iir = mean_improvement(ContaminantLabel::Pli, 61, |x, l, _| iir_denoise(x, l))?;
    let t_iir = t.elapsed();
    let params = DecompositionParams::default_for(Method::Ceemdan);
    let t1 = Instant::now();
    let cee = mean_improvement(ContaminantLabel::Bw, 62, |x, l, i| decomposition_denoise(x, l, &params, i as u64))?;
    let t_cee = t1.elapsed();
    let t2 = Instant::now();
    let ts = mean_improvement(ContaminantLabel::Ecg, 63, |x, l, _| ts_iir_denoise(x, l))?;
    let t_ts = t2.elapsed();
    let limit = Duration::from_secs(120);
    let ok = iir > 8.0 && cee > 5.0 && ts > 0.0 && t_iir.max(t_cee).max(t_ts) < limit;
    check(
        ok,
        format!(
            "100 segments each at -6 dB: IIR/PLI {iir:.2} dB (> 8) in {:.1} s, CEEMDAN/BW {cee:.2} dB (> 5) in {:.1} s, TS+IIR/ECG {ts:.2} dB (> 0) in {:.1} s",
            t_iir.as_secs_f64(),
            t_cee.as_secs_f64(),
            t_ts.as_secs_f64()
        ),
    )
}

fn c7_shape_contract() -> Outcome {
    let d = 32;
    let cfg = ModelConfig::paper(d, Bottleneck::Rm);
    let params = ModelParams::init(&cfg).map_err(err)?;
    let x = Tensor::from_vec(&[1, 1, d], tone(90.0, 1.0, d));
    let (y, cache) = forward(&params, &cfg, &x, Pass::Eval).map_err(err)?;
    let paper_ok = cfg.latent_shape() == (d / 16, 1024) && cache.latent(0).len() == (d / 16) * 1024 && y.shape == [1, 1, d];
    let full = ModelConfig::paper(2000, Bottleneck::Rm).latent_shape();
    let mut tiny_ok = true;
    for base in [2, 4, 8] {
        let t = ModelConfig { base_width: base, ..ModelConfig::tiny(64, Bottleneck::Dm) };
        let p = ModelParams::init(&t).map_err(err)?;
        let (_, c) = forward(&p, &t, &Tensor::zeros(&[1, 1, 64]), Pass::Eval).map_err(err)?;
        tiny_ok &= t.latent_shape() == (4, base * 16) && c.latent(0).len() == 4 * base * 16;
    }
    check(
        paper_ok && full == (125, 1024) && tiny_ok,
        format!(
            "paper widths: latent {:?} at d={d} (forward ran), {full:?} at d=2000; tiny widths base·16 for base 2/4/8: {tiny_ok}",
            cfg.latent_shape()
        ),
    )
}

fn c8_gradcheck() -> Outcome {
    let t = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for mode in [Bottleneck::Rm, Bottleneck::Dm, Bottleneck::Identity] {
        let cfg = ModelConfig {
            base_width: 2,
            heads: 2,
            ff_dim: 64,
            ..ModelConfig::tiny(32, mode)
        };
        let r = gradcheck(&cfg, &GradcheckOptions::default()).map_err(err)?;
        ok &= r.passed && r.max_rel_error <= 1e-4;
        lines.push(format!("{} {} entries max {:.2e}", r.bottleneck, r.checked, r.max_rel_error));
    }
    let secs = t.elapsed().as_secs_f64();
    check(ok && secs < 300.0, format!("{} (≤ 1e-4); {secs:.1} s (< 300 s)", lines.join(", ")))
}

fn c9_rm_degeneracy() -> Outcome {
    let rm = ModelConfig::tiny(64, Bottleneck::Rm);
    let unet = ModelConfig { bottleneck: Bottleneck::Identity, ..rm.clone() };
    let x = Tensor::from_vec(&[2, 1, 64], (0..128).map(|i| (i as f64 * 0.37).sin() + 0.1 * (i as f64).cos()).collect());

    let mut p = ModelParams::init(&rm).map_err(err)?;
    p.transformer.ln2.gamma.data.iter_mut().for_each(|v| *v = 0.0);
    p.transformer.ln2.beta.data.iter_mut().for_each(|v| *v = 20.0);
    let (a, cache) = forward(&p, &rm, &x, Pass::Eval).map_err(err)?;
    let (b, _) = forward(&p, &unet, &x, Pass::Eval).map_err(err)?;
    let forced = (0..2).all(|i| cache.transformer_out(i).is_some_and(|t| t.iter().all(|&v| v == 20.0)));
    let diff = a.data.iter().zip(&b.data).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);

    p.transformer.ln2.beta.data.iter_mut().for_each(|v| *v = 0.0);
    let (_, cache) = forward(&p, &rm, &x, Pass::Eval).map_err(err)?;
    let half = (0..2).all(|i| cache.bottleneck(i).iter().zip(cache.latent(i)).all(|(o, z)| *o == 0.5 * z));
    check(
        forced && diff <= 1e-6 && half,
        format!("pre-sigmoid +20: max |RM - U-Net| {diff:.2e} (≤ 1e-6); pre-sigmoid 0: bottleneck == 0.5·z exactly: {half}"),
    )
}

fn c10_overfit_and_stop() -> Outcome {
    let t = Instant::now();
    let recs = synthesize(&DatasetSpec::train_default(8, 11)).map_err(err)?;
    let pairs: Vec<(&[f64], &[f64])> = recs
        .iter()
        .map(|r| (r.segment.clean.samples(), r.segment.noisy.samples()))
        .collect();
    let ex = windows(&pairs, 64, Some(1));
    let cfg = ModelConfig::tiny(64, Bottleneck::Rm);
    let opts = TrainOptions {
        max_epochs: 500,
        patience: 500,
        batch_size: 8,
        ..TrainOptions::default()
    };
    let out = train(&cfg, &ex, None, &opts).map_err(err)?;
    let first = out.history[0].train_loss;
    let last = out.history.last().unwrap().train_loss;
    let ratio = last / first;

    let frozen = TrainOptions {
        max_epochs: 500,
        patience: 15,
        batch_size: 8,
        schedule: LrSchedule::constant(0.0),
        seed: 3,
    };
    let flat = ModelConfig { dropout: 0.0, ..cfg };
    let stop = train(&flat, &ex, None, &frozen).map_err(err)?;
    let fired = stop.stopped_early && stop.history.last().map(|h| h.epoch) == Some(stop.best_epoch + 15);
    check(
        ex.len() == 8 && ratio <= 0.1 && fired,
        format!(
            "{} windows, {} epochs: L1 {first:.4e} -> {last:.4e} (ratio {ratio:.3} ≤ 0.1); plateau stopped at epoch {} = best {} + 15: {fired}; {:.1} s",
            ex.len(),
            out.history.len(),
            stop.history.last().map_or(0, |h| h.epoch),
            stop.best_epoch,
            t.elapsed().as_secs_f64()
        ),
    )
}

fn c11_metric_oracles() -> Outcome {
    let recs = synthesize(&DatasetSpec::test_default(50, 5)).map_err(err)?;
    let mut ok = true;
    let mut worst_cross = 0.0f64;
    for r in &recs {
        let s = &r.segment;
        let keys = || ReportKeys {
            id: r.id.clone(),
            method: "identity".into(),
            contaminants: String::new(),
            snr_level: s.spec.snr_db,
        };
        // The identity denoiser returns its input unchanged.
        let passthrough = evaluate(&s.clean, &s.noisy, &s.noisy, keys()).map_err(err)?;
        ok &= passthrough.snr_imp == Some(0.0);
        let exact = evaluate(&s.clean, &s.noisy, &s.clean, keys()).map_err(err)?;
        ok &= exact.rmse == 0.0 && exact.prd == 0.0;
        let e = rmse(&s.clean, &s.noisy).map_err(err)?;
        let p = prd(&s.clean, &s.noisy).map_err(err)?;
        worst_cross = worst_cross.max((p - 100.0 * e / rms(s.clean.samples())).abs() / p);
    }
    let tone100 = buf(tone(100.0, 1.0, 2000));
    let mf = mf_vector(&tone100, &tone100, 200).map_err(err)?;
    let mf_err = mf.values.iter().map(|v| (v - 100.0).abs()).fold(0.0, f64::max);
    let sine = buf(tone(10.0, 1.0, 2000));
    let arv = arv_vector(&sine, 200).map_err(err)?;
    let arv_err = arv.values.iter().map(|v| (v - 2.0 / PI).abs()).fold(0.0, f64::max);
    check(
        ok && worst_cross <= 1e-9 && mf_err <= 1.0 && arv_err <= 0.01,
        format!(
            "identity on 50 segments: SNR_imp 0, RMSE 0, PRD 0: {ok}; PRD/RMSE identity error {worst_cross:.1e} (≤ 1e-9); MF 100 Hz tone max error {mf_err:.3} Hz (≤ 1); ARV unit sine max error {arv_err:.4} (≤ 0.01)"
        ),
    )
}

fn c12_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let config = dir.path().join("run.json");
    let body = serde_json::json!({
        "dataset": { "source": "synthesize", "count": 12, "snrs_db": [2.0, -6.0, -14.0], "seed": 9 },
        "methods": [
            { "method": "iir" }, { "method": "ts-iir" }, { "method": "emd" },
            { "method": "ceemdan" }, { "method": "vmd" }
        ],
        "output_dir": "unused",
        "seed": 21
    });
    fs::write(&config, serde_json::to_vec_pretty(&body).map_err(err)?).map_err(err)?;
    let mut outputs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "1"), ("c", "4"), ("d", "4")] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_emgbench"))
            .args(["run", "--json", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env("EMGBENCH_THREADS", threads)
            .output()
            .map_err(err)?;
        if !status.status.success() {
            return Err(format!("run {name} failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        let csv = fs::read(out.join("metrics.csv")).map_err(err)?;
        let json = fs::read(out.join("aggregate.json")).map_err(err)?;
        outputs.push((csv, json));
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    check(
        same,
        format!("4 runs (2 serial, 2 with 4 threads), {} CSV bytes: byte-identical CSV and JSON: {same}", outputs[0].0.len()),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("noisy PRD constant", c1_noisy_prd),
        ("SNR mixing contract", c2_mixing_contract),
        ("filter responses", c3_filter_responses),
        ("EMD/CEEMDAN completeness", c4_completeness),
        ("VMD two-tone", c5_vmd_two_tone),
        ("classical denoiser sanity", c6_classical_sanity),
        ("NN shape contract", c7_shape_contract),
        ("gradient check", c8_gradcheck),
        ("RM degeneracy", c9_rm_degeneracy),
        ("tiny overfit and early stopping", c10_overfit_and_stop),
        ("metric oracles", c11_metric_oracles),
        ("run determinism", c12_determinism),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS  {n:>2}. {name} ({secs:.1} s): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {n:>2}. {name} ({secs:.1} s): {d}");
            }
        }
    }
    println!("acceptance: {} failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
