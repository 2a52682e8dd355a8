//! Segment metrics and their aggregation.

use emgbench::iir::iir_denoise;
use emgbench::metrics::{aggregate, evaluate, ReportKeys};
use emgbench::synthesis::dataset::{synthesize, DatasetSpec};
use emgbench::synthesis::set_name;

fn main() -> emgbench::Result<()> {
    let records = synthesize(&DatasetSpec::test_default(20, 3))?;
    let mut reports = Vec::new();
    for r in &records {
        let seg = &r.segment;
        let enhanced = iir_denoise(&seg.noisy, seg.labels())?;
        let keys = ReportKeys {
            id: r.id.clone(),
            method: "iir".into(),
            contaminants: set_name(seg.labels()),
            snr_level: seg.spec.snr_db,
        };
        reports.push(evaluate(&seg.clean, &seg.noisy, &enhanced, keys)?);
    }
    for row in aggregate(&reports).iter().filter(|r| r.contaminants == "all") {
        let imp = row.snr_imp.unwrap();
        let prd = row.prd.unwrap();
        println!(
            "{:>6} n={:<3} SNR_imp {:6.2} ± {:5.2} dB  PRD {:6.2} ± {:5.2} %",
            row.snr_level.map_or("all".into(), |s| format!("{s}")),
            row.count,
            imp.mean,
            imp.std,
            prd.mean,
            prd.std
        );
    }
    Ok(())
}
