//! Experiment orchestration: load or synthesize a dataset, run every method
//! over every segment, and write enhanced signals, a per-segment CSV and an
//! aggregate JSON.
//!
//! A config is a single JSON document:
//!
//! ```json
//! {
//!   "dataset": { "source": "synthesize", "count": 20, "snrs_db": [-6.0], "seed": 1 },
//!   "methods": [ { "method": "iir" }, { "method": "ceemdan" },
//!                { "method": "trustemg", "mode": "rm", "weights": "w.bin" } ],
//!   "output_dir": "out",
//!   "threads": 4,
//!   "seed": 7
//! }
//! ```

pub mod cli;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::{CeemdanParams, DecompositionParams, Method, VmdParams};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, evaluate, AggregateRow, MetricReport, ReportKeys};
use crate::mode_rules::decomposition_denoise;
use crate::nn::{self, Bottleneck, ModelConfig, ModelParams};
use crate::signal::io::write_signal;
use crate::signal::SampleBuffer;
use crate::synthesis::dataset::{load_segments, synthesize, DatasetSpec};
use crate::synthesis::{set_name, ContaminantLabel};
use crate::{iir, seed, template};

pub const CSV_NAME: &str = "metrics.csv";
pub const AGGREGATE_NAME: &str = "aggregate.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum MethodSpec {
    Iir,
    TsIir,
    Emd {
        #[serde(default)]
        max_imfs: Option<usize>,
    },
    Ceemdan {
        #[serde(default)]
        params: Option<CeemdanParams>,
    },
    Vmd {
        #[serde(default)]
        params: Option<VmdParams>,
    },
    Trustemg { mode: Bottleneck, weights: PathBuf },
}

impl MethodSpec {
    /// Name used for output directories and report rows.
    pub fn name(&self) -> String {
        match self {
            MethodSpec::Iir => "iir".into(),
            MethodSpec::TsIir => "ts-iir".into(),
            MethodSpec::Emd { .. } => "emd".into(),
            MethodSpec::Ceemdan { .. } => "ceemdan".into(),
            MethodSpec::Vmd { .. } => "vmd".into(),
            MethodSpec::Trustemg { mode, .. } => format!("trustemg-{}", format!("{mode:?}").to_lowercase()),
        }
    }

    fn decomposition(&self) -> Option<DecompositionParams> {
        match self {
            MethodSpec::Emd { max_imfs } => Some(match max_imfs {
                Some(n) => DecompositionParams::Emd { max_imfs: *n },
                None => DecompositionParams::default_for(Method::Emd),
            }),
            MethodSpec::Ceemdan { params } => Some(DecompositionParams::Ceemdan(params.unwrap_or_default())),
            MethodSpec::Vmd { params } => Some(DecompositionParams::Vmd(params.unwrap_or_default())),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DatasetSource {
    Synthesize(DatasetSpec),
    Manifest { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub methods: Vec<MethodSpec>,
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses the rayon default.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }
}

/// Every problem with `config`, empty when it is runnable.
pub fn validate(config: &ExperimentConfig) -> Vec<String> {
    let mut out = Vec::new();
    match &config.dataset {
        DatasetSource::Synthesize(spec) => out.extend(spec.validate()),
        DatasetSource::Manifest { path } => {
            if !path.is_file() {
                out.push(format!("manifest {} does not exist", path.display()));
            }
        }
    }
    if config.methods.is_empty() {
        out.push("methods list is empty".into());
    }
    let mut seen = HashSet::new();
    for m in &config.methods {
        if !seen.insert(m.name()) {
            out.push(format!("method {} is listed twice", m.name()));
        }
        if let MethodSpec::Trustemg { weights, .. } = m {
            if !weights.is_file() {
                out.push(format!("weights file {} does not exist", weights.display()));
            }
        }
        if let Some(DecompositionParams::Emd { max_imfs: 0 }) = m.decomposition() {
            out.push("emd max_imfs must be positive".into());
        }
    }
    if config.threads == Some(0) {
        out.push("threads must be positive".into());
    }
    if config.output_dir.as_os_str().is_empty() {
        out.push("output_dir is empty".into());
    }
    out
}

/// One segment ready for denoising.
#[derive(Debug, Clone)]
pub struct Segment {
    pub id: String,
    pub snr_db: f64,
    pub labels: Vec<ContaminantLabel>,
    pub clean: SampleBuffer,
    pub noisy: SampleBuffer,
}

pub fn load_dataset(source: &DatasetSource) -> Result<Vec<Segment>> {
    match source {
        DatasetSource::Synthesize(spec) => Ok(synthesize(spec)?
            .into_iter()
            .map(|r| Segment {
                id: r.id,
                snr_db: r.segment.spec.snr_db,
                labels: r.segment.spec.components,
                clean: r.segment.clean,
                noisy: r.segment.noisy,
            })
            .collect()),
        DatasetSource::Manifest { path } => Ok(load_segments(path)?
            .into_iter()
            .map(|s| Segment {
                id: s.entry.id,
                snr_db: s.entry.snr_db,
                labels: s.entry.labels,
                clean: s.clean,
                noisy: s.noisy,
            })
            .collect()),
    }
}

/// A method with its weights loaded.
pub enum Denoiser {
    Iir,
    TsIir,
    Decomposition(DecompositionParams),
    Network { config: ModelConfig, params: Box<ModelParams> },
}

impl Denoiser {
    pub fn prepare(spec: &MethodSpec) -> Result<Self> {
        if let Some(p) = spec.decomposition() {
            return Ok(Denoiser::Decomposition(p));
        }
        match spec {
            MethodSpec::Iir => Ok(Denoiser::Iir),
            MethodSpec::TsIir => Ok(Denoiser::TsIir),
            MethodSpec::Trustemg { mode, weights } => {
                let (config, params) = nn::read_params(weights)?;
                if config.bottleneck != *mode {
                    return Err(Error::ShapeMismatch(format!(
                        "{} holds a {:?} model, config asks for {mode:?}",
                        weights.display(),
                        config.bottleneck
                    )));
                }
                Ok(Denoiser::Network { config, params: Box::new(params) })
            }
            _ => unreachable!("decomposition methods handled above"),
        }
    }

    /// `seed` drives stochastic decompositions only.
    pub fn denoise(&self, noisy: &SampleBuffer, labels: &[ContaminantLabel], seed: u64) -> Result<SampleBuffer> {
        match self {
            Denoiser::Iir => iir::iir_denoise(noisy, labels),
            Denoiser::TsIir => template::ts_iir_denoise(noisy, labels),
            Denoiser::Decomposition(p) => decomposition_denoise(noisy, labels, p, seed),
            Denoiser::Network { config, params } => nn::enhance(params, config, noisy),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub segments: usize,
    pub reports: Vec<MetricReport>,
    pub aggregate: Vec<AggregateRow>,
    pub csv: PathBuf,
    pub aggregate_json: PathBuf,
}

fn build_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::InvalidConfig(vec![format!("thread pool: {e}")]))
}

fn write_reports(dir: &Path, reports: &[MetricReport]) -> Result<(PathBuf, PathBuf)> {
    let csv_path = dir.join(CSV_NAME);
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_error(&csv_path, e))?;
    for r in reports {
        w.serialize(r).map_err(|e| csv_error(&csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let json_path = dir.join(AGGREGATE_NAME);
    let mut body = serde_json::to_vec_pretty(&aggregate(reports))?;
    body.push(b'\n');
    fs::write(&json_path, body).map_err(|e| Error::io(&json_path, e))?;
    Ok((csv_path, json_path))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

/// Runs every method over every segment. On failure the reports finished
/// before the failing segment are still written.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary> {
    let problems = validate(config);
    if !problems.is_empty() {
        return Err(Error::InvalidConfig(problems));
    }
    let pool = build_pool(config.threads)?;
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let denoisers = config.methods.iter().map(Denoiser::prepare).collect::<Result<Vec<_>>>()?;
    let segments = pool.install(|| load_dataset(&config.dataset))?;

    let mut reports = Vec::new();
    let mut failure = None;
    'methods: for (spec, denoiser) in config.methods.iter().zip(&denoisers) {
        let name = spec.name();
        let dir = out.join("enhanced").join(&name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let results: Vec<Result<(SampleBuffer, MetricReport)>> = pool.install(|| {
            segments
                .par_iter()
                .enumerate()
                .map(|(i, s)| {
                    let enhanced = denoiser.denoise(&s.noisy, &s.labels, seed::derive(config.seed, "decompose", i as u64))?;
                    let keys = ReportKeys {
                        id: s.id.clone(),
                        method: name.clone(),
                        contaminants: set_name(&s.labels),
                        snr_level: s.snr_db,
                    };
                    let report = evaluate(&s.clean, &s.noisy, &enhanced, keys)?;
                    Ok((enhanced, report))
                })
                .collect()
        });
        for (s, r) in segments.iter().zip(results) {
            match r.and_then(|(enh, rep)| write_signal(&dir.join(&s.id), &enh).map(|_| rep)) {
                Ok(rep) => reports.push(rep),
                Err(e) => {
                    failure = Some(Error::Format {
                        path: dir.join(&s.id),
                        msg: format!("{name}: {e}"),
                    });
                    break 'methods;
                }
            }
        }
    }
    let (csv, aggregate_json) = write_reports(out, &reports)?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(RunSummary {
        segments: segments.len(),
        aggregate: aggregate(&reports),
        reports,
        csv,
        aggregate_json,
    })
}

/// Tiny-network training job, loadable from JSON like [`ExperimentConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dataset: DatasetSource,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: nn::TrainOptions,
    #[serde(default)]
    pub windows_per_recording: Option<usize>,
    pub weights: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub examples: usize,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub stopped_early: bool,
    pub weights: PathBuf,
    pub history: Vec<nn::train::EpochRecord>,
}

/// Windows the dataset, trains, and saves the best parameters.
pub fn train_tiny(cfg: &TrainConfig) -> Result<TrainSummary> {
    cfg.model.validate()?;
    let segments = load_dataset(&cfg.dataset)?;
    let pairs: Vec<(&[f64], &[f64])> = segments.iter().map(|s| (s.clean.samples(), s.noisy.samples())).collect();
    let examples = nn::windows(&pairs, cfg.model.input_len, cfg.windows_per_recording);
    let outcome = nn::train(&cfg.model, &examples, None, &cfg.train)?;
    if let Some(dir) = cfg.weights.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    nn::save_params(&cfg.weights, &outcome.params, &cfg.model)?;
    Ok(TrainSummary {
        examples: examples.len(),
        epochs: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        best_loss: outcome.history.get(outcome.best_epoch).map_or(f64::NAN, |h| h.loss),
        stopped_early: outcome.stopped_early,
        weights: cfg.weights.clone(),
        history: outcome.history,
    })
}

pub fn read_reports_csv(path: &Path) -> Result<Vec<MetricReport>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

/// Outcome of [`cross_check`].
#[derive(Debug, Clone, Serialize)]
pub struct CrossCheck {
    pub rows: usize,
    pub groups: usize,
    pub mismatches: Vec<String>,
}

impl CrossCheck {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Recomputes the aggregate from `metrics.csv` in `dir` and compares it with
/// `aggregate.json`.
pub fn cross_check(dir: &Path) -> Result<CrossCheck> {
    let reports = read_reports_csv(&dir.join(CSV_NAME))?;
    let json_path = dir.join(AGGREGATE_NAME);
    let bytes = fs::read(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let stored: Vec<AggregateRow> = serde_json::from_slice(&bytes).map_err(|e| Error::Format {
        path: json_path.clone(),
        msg: e.to_string(),
    })?;
    let fresh = aggregate(&reports);
    let mut mismatches = Vec::new();
    if fresh.len() != stored.len() {
        mismatches.push(format!("{} groups recomputed, {} stored", fresh.len(), stored.len()));
    }
    for (a, b) in fresh.iter().zip(&stored) {
        if a != b {
            mismatches.push(format!("{} / {} / {:?}", a.method, a.contaminants, a.snr_level));
        }
    }
    Ok(CrossCheck {
        rows: reports.len(),
        groups: stored.len(),
        mismatches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::dataset::SetPlan;

    fn config(dir: &Path, methods: Vec<MethodSpec>) -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetSource::Synthesize(DatasetSpec::test_default(10, 4)),
            methods,
            output_dir: dir.to_path_buf(),
            threads: Some(2),
            seed: 11,
        }
    }

    #[test]
    fn iir_run_writes_one_file_and_row_per_segment() {
        let dir = tempfile::tempdir().unwrap();
        let s = run(&config(dir.path(), vec![MethodSpec::Iir])).unwrap();
        let files = fs::read_dir(dir.path().join("enhanced/iir"))
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "f32"))
            .count();
        assert_eq!(files, 10);
        assert_eq!(read_reports_csv(&s.csv).unwrap().len(), 10);
        assert!(s.aggregate_json.is_file());
        let c = cross_check(dir.path()).unwrap();
        assert!(c.passed(), "{:?}", c.mismatches);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let methods = vec![MethodSpec::Iir, MethodSpec::Emd { max_imfs: Some(6) }];
        run(&config(a.path(), methods.clone())).unwrap();
        run(&ExperimentConfig { threads: Some(1), ..config(b.path(), methods) }).unwrap();
        for f in [CSV_NAME, AGGREGATE_NAME] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn missing_weights_rejected_before_work() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let cfg = config(
            &out,
            vec![MethodSpec::Trustemg {
                mode: Bottleneck::Rm,
                weights: dir.path().join("nope.bin"),
            }],
        );
        assert_eq!(validate(&cfg).len(), 1);
        assert!(matches!(run(&cfg), Err(Error::InvalidConfig(_))));
        assert!(!out.exists());
    }

    #[test]
    fn diagnostics_are_collected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(validate(&config(dir.path(), vec![MethodSpec::Iir])).is_empty());
        assert_eq!(validate(&config(dir.path(), vec![])), vec!["methods list is empty".to_string()]);

        let mut spec = DatasetSpec::test_default(10, 4);
        spec.snrs_db = vec![2.0, f64::NAN];
        let cfg = ExperimentConfig {
            dataset: DatasetSource::Synthesize(spec),
            threads: Some(0),
            ..config(dir.path(), vec![MethodSpec::Iir, MethodSpec::Iir])
        };
        let d = validate(&cfg);
        assert_eq!(d.len(), 3, "{d:?}");
        assert!(d.iter().any(|m| m.contains("NaN")));
    }

    #[test]
    fn failure_flushes_partial_results() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = DatasetSpec::test_default(4, 2);
        spec.sets = SetPlan::Fixed {
            sets: vec![vec![ContaminantLabel::Pli]],
        };
        // The second method is invalid, so only the IIR rows survive.
        let cfg = ExperimentConfig {
            dataset: DatasetSource::Synthesize(spec),
            ..config(dir.path(), vec![MethodSpec::Iir, MethodSpec::Vmd {
                params: Some(VmdParams { k_modes: 0, ..VmdParams::default() }),
            }])
        };
        assert!(run(&cfg).is_err());
        assert_eq!(read_reports_csv(&dir.path().join(CSV_NAME)).unwrap().len(), 4);
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = ExperimentConfig {
            dataset: DatasetSource::Manifest { path: "data/manifest.json".into() },
            methods: vec![
                MethodSpec::TsIir,
                MethodSpec::Ceemdan { params: None },
                MethodSpec::Trustemg { mode: Bottleneck::Dm, weights: "w.bin".into() },
            ],
            output_dir: "out".into(),
            threads: None,
            seed: 3,
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
        let minimal: ExperimentConfig = serde_json::from_str(
            r#"{"dataset":{"source":"synthesize","count":3,"snrs_db":[-6],"seed":1},
                "methods":[{"method":"ts-iir"},{"method":"emd"}],"output_dir":"o"}"#,
        )
        .unwrap();
        assert_eq!(minimal.methods[1], MethodSpec::Emd { max_imfs: None });
    }

    fn report_strategy() -> impl proptest::strategy::Strategy<Value = MetricReport> {
        use proptest::prelude::*;
        (
            0usize..3,
            0usize..4,
            proptest::sample::select(vec![2.0, -6.0, -14.0]),
            -20.0f64..40.0,
            proptest::option::of(-10.0f64..60.0),
            (1e-6f64..2.0, 0.0f64..500.0, 0.0f64..1.0, proptest::option::of(0.0f64..200.0)),
        )
            .prop_map(|(m, c, snr, snr_in, out, (rmse, prd, arv, mf))| MetricReport {
                id: format!("seg{m}{c}"),
                method: ["iir", "emd", "vmd"][m].into(),
                contaminants: ["bw", "pli", "bw+ecg+wgn", "bw+pli+ecg+moa+wgn"][c].into(),
                snr_level: snr,
                snr_in,
                snr_out: out,
                snr_imp: out.map(|o| o - snr_in),
                rmse,
                prd,
                rmse_arv: arv,
                rmse_mf: mf,
            })
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

        #[test]
        fn aggregate_matches_recomputation_from_csv(
            reports in proptest::collection::vec(report_strategy(), 1..40)
        ) {
            let dir = tempfile::tempdir().unwrap();
            write_reports(dir.path(), &reports).unwrap();
            proptest::prop_assert_eq!(read_reports_csv(&dir.path().join(CSV_NAME)).unwrap(), reports.clone());
            let check = cross_check(dir.path()).unwrap();
            proptest::prop_assert!(check.passed(), "{:?}", check.mismatches);

            // Independent mean and sample std of PRD per method.
            for row in aggregate(&reports).iter().filter(|r| r.contaminants == "all" && r.snr_level.is_none()) {
                let v: Vec<f64> = reports.iter().filter(|r| r.method == row.method).map(|r| r.prd).collect();
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = if v.len() > 1 { v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
                let st = row.prd.unwrap();
                proptest::prop_assert!((st.mean - mean).abs() <= 1e-9 * mean.abs().max(1.0));
                proptest::prop_assert!((st.std - var.sqrt()).abs() <= 1e-9 * mean.abs().max(1.0));
            }
        }
    }
}
