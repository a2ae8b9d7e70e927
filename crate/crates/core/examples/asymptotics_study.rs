//! Monte Carlo study of the fitted families' spread as the sample grows:
//! the chart covariance should shrink like 1/n and the error should fall.

use nested_spheres::inference::run_asymptotics_study;
use nested_spheres::simulate::{DesignId, SimDesign};
use nested_spheres::{FitConfig, Seed};

fn main() -> nested_spheres::Result<()> {
    let design = SimDesign::new(DesignId::PlantedChain, 0, Seed::new(8));
    let cfg = FitConfig::new(design.chain.mode);
    let report = run_asymptotics_study(&design, &cfg, &[50, 200, 800], 60, Seed::new(9))?;
    for row in &report.rows {
        println!(
            "n {:>4}: {} fits, {} failures, trace {:.3e}, median errors {:.4?}",
            row.n, row.replicates, row.failures, row.covariance_trace, row.median_error
        );
    }
    for r in &report.trace_ratios {
        println!("trace(4n)/trace(n) at n = {}: {:.3}", r.n, r.ratio);
    }
    Ok(())
}
