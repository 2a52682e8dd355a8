//! A full experiment: synthesize, run three methods, cross-check the report.

use emgbench::harness::{cross_check, run, DatasetSource, ExperimentConfig, MethodSpec};
use emgbench::synthesis::dataset::DatasetSpec;

fn main() -> emgbench::Result<()> {
    let out = std::env::temp_dir().join("emgbench-experiment");
    let config = ExperimentConfig {
        dataset: DatasetSource::Synthesize(DatasetSpec::test_default(30, 2)),
        methods: vec![MethodSpec::Iir, MethodSpec::TsIir, MethodSpec::Ceemdan { params: None }],
        output_dir: out.clone(),
        threads: None,
        seed: 1,
    };
    println!("{}", serde_json::to_string_pretty(&config)?);
    let summary = run(&config)?;
    for row in summary.aggregate.iter().filter(|r| r.snr_level.is_none() && r.contaminants == "all") {
        let imp = row.snr_imp.unwrap();
        println!("{:<8} SNR_imp {:.2} ± {:.2} dB over {} segments", row.method, imp.mean, imp.std, row.count);
    }
    let check = cross_check(&out)?;
    println!("cross-check: {} rows, {} groups, passed {}", check.rows, check.groups, check.passed());
    Ok(())
}
