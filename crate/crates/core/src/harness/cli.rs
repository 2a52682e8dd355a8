//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use super::{cross_check, run, train_tiny, DatasetSource, Denoiser, ExperimentConfig, MethodSpec, TrainConfig};
use crate::decomposition::{decompose, CeemdanParams, DecompositionParams, Method, VmdParams};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, ReportKeys};
use crate::mode_rules::decomposition_denoise_logged;
use crate::nn::{gradcheck, Bottleneck, GradcheckOptions, ModelConfig, TrainOptions};
use crate::signal::io::{read_signal, write_signal};
use crate::signal::{fmax, SampleBuffer};
use crate::synthesis::dataset::{synthesize, write_dataset, DatasetSpec, SetPlan};
use crate::synthesis::{parse_set, set_name, ContaminantLabel, Split};
use crate::template::ts_iir_denoise_regions;

pub const THREADS_ENV: &str = "EMGBENCH_THREADS";

#[derive(Debug, Parser)]
#[command(name = "emgbench", version, about = "Synthetic sEMG denoising workbench")]
pub struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// Seed for every random stream (default 0; `run` keeps the config's seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a contaminated dataset with a manifest.
    Synth(SynthArgs),
    /// Split one signal into modes.
    Decompose(DecomposeArgs),
    /// Remove contaminants from one signal.
    Denoise(DenoiseArgs),
    /// Score an enhanced signal, or cross-check a run directory.
    Eval(EvalArgs),
    /// Train a small network and save its weights.
    TrainTiny(TrainArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
    /// Run a full experiment from a JSON config.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// SNR levels in dB, cycled over segments.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [2.0, -2.0, -6.0, -10.0, -14.0])]
    pub snr: Vec<f64>,
    /// Contaminant sets such as `bw+pli`; balanced 1/3/5-type mixtures when omitted.
    #[arg(long, value_delimiter = ',')]
    pub sets: Vec<String>,
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,
    /// Use the training-side contaminant recordings.
    #[arg(long)]
    pub train_split: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DecompMethod {
    Emd,
    Ceemdan,
    Vmd,
}

impl From<DecompMethod> for Method {
    fn from(m: DecompMethod) -> Self {
        match m {
            DecompMethod::Emd => Method::Emd,
            DecompMethod::Ceemdan => Method::Ceemdan,
            DecompMethod::Vmd => Method::Vmd,
        }
    }
}

#[derive(Debug, Args)]
pub struct DecompArgs {
    /// Maximum number of IMFs (EMD, CEEMDAN).
    #[arg(long)]
    pub max_imfs: Option<usize>,
    /// Number of modes (VMD).
    #[arg(long)]
    pub k: Option<usize>,
    /// Bandwidth penalty (VMD).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Ensemble size (CEEMDAN).
    #[arg(long)]
    pub trials: Option<usize>,
}

impl DecompArgs {
    fn params(&self, method: Method) -> DecompositionParams {
        match DecompositionParams::default_for(method) {
            DecompositionParams::Emd { max_imfs } => DecompositionParams::Emd {
                max_imfs: self.max_imfs.unwrap_or(max_imfs),
            },
            DecompositionParams::Ceemdan(p) => DecompositionParams::Ceemdan(CeemdanParams {
                max_imfs: self.max_imfs.unwrap_or(p.max_imfs),
                trials: self.trials.unwrap_or(p.trials),
                ..p
            }),
            DecompositionParams::Vmd(p) => DecompositionParams::Vmd(VmdParams {
                k_modes: self.k.unwrap_or(p.k_modes),
                alpha: self.alpha.unwrap_or(p.alpha),
                ..p
            }),
        }
    }
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// `.f32` (with sidecar) or `.csv` signal.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "ceemdan")]
    pub method: DecompMethod,
    /// Directory for `mode01.f32`, ..., `residue.f32`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub decomp: DecompArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DenoiseMethod {
    Iir,
    TsIir,
    Emd,
    Ceemdan,
    Vmd,
    Trustemg,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Contaminants present, e.g. `bw+pli+ecg`.
    #[arg(long)]
    pub labels: Option<String>,
    #[arg(long, value_enum)]
    pub method: DenoiseMethod,
    /// Output stem; writes `<stem>.f32` and `<stem>.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Weights file for `trustemg`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Expected bottleneck of the weights (`rm`, `dm`, `identity`).
    #[arg(long)]
    pub mode: Option<Bottleneck>,
    /// Write detected ECG regions (ts-iir) as JSON.
    #[arg(long)]
    pub dump_regions: Option<PathBuf>,
    /// Write the per-mode rule decisions (emd, ceemdan, vmd) as JSON.
    #[arg(long)]
    pub dump_decisions: Option<PathBuf>,
    #[command(flatten)]
    pub decomp: DecompArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "check")]
    pub clean: Option<PathBuf>,
    #[arg(long, required_unless_present = "check")]
    pub noisy: Option<PathBuf>,
    #[arg(long, required_unless_present = "check")]
    pub enhanced: Option<PathBuf>,
    #[arg(long, default_value = "input")]
    pub id: String,
    #[arg(long, default_value = "unknown")]
    pub method: String,
    /// Recompute a run directory's aggregate from its CSV and compare.
    #[arg(long, conflicts_with_all = ["clean", "noisy", "enhanced"])]
    pub check: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON training config; the flags below are ignored when given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest; a dataset is synthesized when omitted.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Segments to synthesize when no manifest is given.
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    #[arg(long, default_value = "rm")]
    pub bottleneck: Bottleneck,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 15)]
    pub patience: usize,
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    #[arg(long)]
    pub windows_per_recording: Option<usize>,
    #[arg(long, default_value = "weights.bin")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Bottlenecks to check; all three when omitted.
    #[arg(long, value_delimiter = ',')]
    pub bottleneck: Vec<Bottleneck>,
    #[arg(long, default_value_t = 32)]
    pub d: usize,
    #[arg(long, default_value_t = 2)]
    pub base: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 64)]
    pub ff: usize,
    /// Check at most this many entries per tensor.
    #[arg(long)]
    pub max_per_tensor: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses arguments, runs the command and reports errors on stderr.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if cli.json {
                println!("{}", json!({ "error": e.to_string() }));
            }
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidConfig(vec![format!("{THREADS_ENV} must be positive")]));
        }
        // Fails only if the pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = Output { json: cli.json };
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Synth(a) => synth_cmd(a, seed, &out),
        Command::Decompose(a) => decompose_cmd(a, seed, &out),
        Command::Denoise(a) => denoise_cmd(a, seed, &out),
        Command::Eval(a) => eval_cmd(a, &out),
        Command::TrainTiny(a) => train_cmd(a, seed, &out),
        Command::Gradcheck(a) => gradcheck_cmd(a, seed, &out),
        Command::Run(a) => run_cmd(a, cli, &out),
    }
}

struct Output {
    json: bool,
}

impl Output {
    fn emit<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) -> Result<()> {
        let body = if self.json { serde_json::to_string_pretty(value)? } else { text() };
        // A closed pipe (e.g. `| head`) is not an error.
        let _ = writeln!(std::io::stdout().lock(), "{body}");
        Ok(())
    }
}

fn synth_cmd(a: &SynthArgs, seed: u64, out: &Output) -> Result<()> {
    let sets = if a.sets.is_empty() {
        SetPlan::Balanced
    } else {
        SetPlan::Fixed {
            sets: a.sets.iter().map(|s| parse_set(s)).collect::<Result<_>>()?,
        }
    };
    let spec = DatasetSpec {
        count: a.count,
        duration_s: a.duration,
        snrs_db: a.snr.clone(),
        sets,
        split: if a.train_split { Split::Train } else { Split::Test },
        seed,
        ..DatasetSpec::test_default(a.count, seed)
    };
    let records = synthesize(&spec)?;
    let manifest = write_dataset(&a.out, Some(&spec), &records)?;
    let path = a.out.join("manifest.json");
    out.emit(&json!({ "manifest": path, "segments": manifest.segments.len() }), || {
        format!("wrote {} segments to {}", manifest.segments.len(), path.display())
    })
}

#[derive(Serialize)]
struct ModeInfo {
    index: usize,
    fmax_hz: f64,
    std: f64,
    center_hz: Option<f64>,
    path: Option<PathBuf>,
}

fn decompose_cmd(a: &DecomposeArgs, seed: u64, out: &Output) -> Result<()> {
    let buf = read_signal(&a.input)?;
    let params = a.decomp.params(a.method.into());
    let set = decompose(&buf, &params, seed)?;
    let mut modes = Vec::new();
    for (i, m) in set.imfs.iter().chain(std::iter::once(&set.residue)).enumerate() {
        let residue = i == set.imfs.len();
        let path = match &a.out {
            Some(dir) => {
                let stem = if residue { "residue".to_string() } else { format!("mode{:02}", i + 1) };
                Some(write_signal(&dir.join(stem), m)?)
            }
            None => None,
        };
        modes.push(ModeInfo {
            index: i + 1,
            fmax_hz: fmax(m),
            std: m.std(),
            center_hz: set.center_freqs.as_ref().and_then(|c| c.get(i).copied()),
            path,
        });
    }
    let value = json!({ "method": set.method, "params": params, "modes": modes.len() - 1, "entries": modes });
    out.emit(&value, || {
        let mut s = format!("{}: {} modes + residue", set.method, set.imfs.len());
        for m in &modes {
            s += &format!("\n  {:>2}  fmax {:8.2} Hz  std {:.4e}", m.index, m.fmax_hz, m.std);
        }
        s
    })
}

fn labels_arg(labels: &Option<String>, method: DenoiseMethod) -> Result<Vec<ContaminantLabel>> {
    match labels {
        Some(s) => parse_set(s),
        None if method == DenoiseMethod::Trustemg => Ok(Vec::new()),
        None => Err(Error::BadLabelSet("--labels is required for this method".into())),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn denoise_cmd(a: &DenoiseArgs, seed: u64, out: &Output) -> Result<()> {
    let noisy = read_signal(&a.input)?;
    let labels = labels_arg(&a.labels, a.method)?;
    let enhanced = match a.method {
        DenoiseMethod::TsIir => {
            let (enh, regions) = ts_iir_denoise_regions(&noisy, &labels)?;
            if let Some(p) = &a.dump_regions {
                write_json(p, &regions)?;
            }
            enh
        }
        DenoiseMethod::Emd | DenoiseMethod::Ceemdan | DenoiseMethod::Vmd => {
            let method = match a.method {
                DenoiseMethod::Emd => Method::Emd,
                DenoiseMethod::Ceemdan => Method::Ceemdan,
                _ => Method::Vmd,
            };
            let outcome = decomposition_denoise_logged(&noisy, &labels, &a.decomp.params(method), seed)?;
            if let Some(p) = &a.dump_decisions {
                write_json(p, &outcome.log)?;
            }
            outcome.enhanced
        }
        DenoiseMethod::Iir => Denoiser::Iir.denoise(&noisy, &labels, seed)?,
        DenoiseMethod::Trustemg => {
            let weights = a
                .weights
                .clone()
                .ok_or_else(|| Error::InvalidConfig(vec!["--weights is required for trustemg".into()]))?;
            let mode = match a.mode {
                Some(m) => m,
                None => crate::nn::read_params(&weights)?.0.bottleneck,
            };
            Denoiser::prepare(&MethodSpec::Trustemg { mode, weights })?.denoise(&noisy, &labels, seed)?
        }
    };
    let path = write_signal(&a.out, &enhanced)?;
    out.emit(
        &json!({ "output": path, "samples": enhanced.len(), "labels": set_name(&labels) }),
        || format!("wrote {}", path.display()),
    )
}

fn eval_cmd(a: &EvalArgs, out: &Output) -> Result<()> {
    if let Some(dir) = &a.check {
        let check = cross_check(dir)?;
        out.emit(&check, || {
            format!(
                "{} rows, {} groups: {}",
                check.rows,
                check.groups,
                if check.passed() { "aggregate matches".to_string() } else { check.mismatches.join("; ") }
            )
        })?;
        if !check.passed() {
            return Err(Error::Format {
                path: dir.clone(),
                msg: "aggregate does not match the per-segment CSV".into(),
            });
        }
        return Ok(());
    }
    let load = |p: &Option<PathBuf>| -> Result<SampleBuffer> { read_signal(p.as_deref().expect("required by clap")) };
    let (clean, noisy, enhanced) = (load(&a.clean)?, load(&a.noisy)?, load(&a.enhanced)?);
    let report = evaluate(
        &clean,
        &noisy,
        &enhanced,
        ReportKeys {
            id: a.id.clone(),
            method: a.method.clone(),
            contaminants: String::new(),
            snr_level: f64::NAN,
        },
    )?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
    out.emit(&report, || {
        format!(
            "snr_in {:.3} dB  snr_out {} dB  snr_imp {} dB\nrmse {:.4e}  prd {:.2}%  rmse_arv {:.4e}  rmse_mf {}",
            report.snr_in,
            fmt(report.snr_out),
            fmt(report.snr_imp),
            report.rmse,
            report.prd,
            report.rmse_arv,
            fmt(report.rmse_mf)
        )
    })
}

fn train_cmd(a: &TrainArgs, seed: u64, out: &Output) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_slice::<TrainConfig>(&bytes).map_err(|e| Error::Format {
                path: p.clone(),
                msg: e.to_string(),
            })?
        }
        None => TrainConfig {
            dataset: match &a.manifest {
                Some(path) => DatasetSource::Manifest { path: path.clone() },
                None => DatasetSource::Synthesize(DatasetSpec::train_default(a.count, seed)),
            },
            model: ModelConfig {
                seed,
                ..ModelConfig::tiny(a.d, a.bottleneck)
            },
            train: TrainOptions {
                max_epochs: a.epochs,
                patience: a.patience,
                batch_size: a.batch,
                seed,
                ..TrainOptions::default()
            },
            windows_per_recording: a.windows_per_recording,
            weights: a.out.clone(),
        },
    };
    let summary = train_tiny(&cfg)?;
    out.emit(&summary, || {
        let first = summary.history.first().map_or(f64::NAN, |h| h.loss);
        format!(
            "{} windows, {} epochs{}; loss {:.4e} -> best {:.4e} at epoch {}; saved {}",
            summary.examples,
            summary.epochs,
            if summary.stopped_early { " (early stop)" } else { "" },
            first,
            summary.best_loss,
            summary.best_epoch,
            summary.weights.display()
        )
    })
}

fn gradcheck_cmd(a: &GradcheckArgs, seed: u64, out: &Output) -> Result<()> {
    let modes = if a.bottleneck.is_empty() {
        vec![Bottleneck::Rm, Bottleneck::Dm, Bottleneck::Identity]
    } else {
        a.bottleneck.clone()
    };
    let opts = GradcheckOptions {
        max_per_tensor: a.max_per_tensor,
        seed,
        ..GradcheckOptions::default()
    };
    let mut reports = Vec::new();
    for mode in modes {
        let cfg = ModelConfig {
            base_width: a.base,
            heads: a.heads,
            ff_dim: a.ff,
            seed,
            ..ModelConfig::tiny(a.d, mode)
        };
        reports.push(gradcheck(&cfg, &opts)?);
    }
    out.emit(&reports, || {
        reports
            .iter()
            .map(|r| {
                format!(
                    "{:<8} {} checked, {} kinks, max rel error {:.3e} ({})  {}",
                    r.bottleneck,
                    r.checked,
                    r.kinks,
                    r.max_rel_error,
                    r.worst,
                    if r.passed { "PASS" } else { "FAIL" }
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    })?;
    if reports.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(vec!["gradient check failed".into()]))
    }
}

fn run_cmd(a: &RunArgs, cli: &Cli, out: &Output) -> Result<()> {
    let mut cfg = ExperimentConfig::from_json_file(&a.config)?;
    if let Some(o) = &a.out {
        cfg.output_dir = o.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let summary = run(&cfg)?;
    let value = json!({
        "segments": summary.segments,
        "reports": summary.reports.len(),
        "csv": summary.csv,
        "aggregate": summary.aggregate_json,
        "groups": summary.aggregate,
    });
    out.emit(&value, || {
        let mut s = format!(
            "{} segments, {} reports\n  {}\n  {}",
            summary.segments,
            summary.reports.len(),
            summary.csv.display(),
            summary.aggregate_json.display()
        );
        for r in summary.aggregate.iter().filter(|r| r.contaminants == "all" && r.snr_level.is_none()) {
            let imp = r.snr_imp.map_or("n/a".into(), |st| format!("{:.2} ± {:.2}", st.mean, st.std));
            let prd = r.prd.map_or("n/a".into(), |st| format!("{:.2} ± {:.2}", st.mean, st.std));
            s += &format!("\n  {:<16} SNR_imp {imp} dB  PRD {prd} %", r.method);
        }
        s
    })
}
