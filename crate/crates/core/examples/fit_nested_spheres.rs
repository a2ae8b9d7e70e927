//! Fits principal nested spheres and principal nested great spheres to a
//! planted chain on S⁴ and reports the per-level error.

use nested_spheres::descriptors::ziezold_distance;
use nested_spheres::simulate::{generate, DesignId, SimDesign};
use nested_spheres::{fit_bnfd, FitConfig, Seed};

fn main() -> nested_spheres::Result<()> {
    let design = SimDesign::new(DesignId::PlantedChain, 300, Seed::new(11));
    let sample = generate(&design)?;
    let truth = &sample.truth[0].family;
    let report = fit_bnfd(&sample.x, &FitConfig::new(design.chain.mode))?;

    println!("mode {}, data on S^{}", truth.mode(), truth.ambient_dim());
    for (i, (fit, planted)) in report.family.levels().iter().zip(truth.levels()).enumerate() {
        println!(
            "{}-sphere: residual {:.4}, Ziezold error {:.4}",
            fit.dim(),
            report.residuals_per_level[i],
            ziezold_distance(fit, planted)?
        );
    }
    Ok(())
}
