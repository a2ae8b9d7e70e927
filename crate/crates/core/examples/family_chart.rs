//! Local coordinates of nested families around a base family, and the
//! inverse map back to families.

use nested_spheres::descriptors::BnfdChart;
use nested_spheres::simulate::{generate, DesignId, SimDesign};
use nested_spheres::{fit_bnfd, FitConfig, Seed};

fn main() -> nested_spheres::Result<()> {
    let design = SimDesign::new(DesignId::PlantedChain, 200, Seed::new(5));
    let sample = generate(&design)?;
    let base = &sample.truth[0].family;
    let chart = BnfdChart::new(base)?;
    println!("chart dimension {}", chart.dim());

    let fitted = fit_bnfd(&sample.x, &FitConfig::new(design.chain.mode))?.family;
    let c = chart.coords(&fitted)?;
    println!("terminal coordinates {:.4?}", c.theta.as_slice());
    println!("step coordinates     {:.4?}", c.xi.as_slice());

    let back = chart.inverse(&c)?;
    let err = back.levels().iter().zip(fitted.levels()).map(|(a, b)| (a.z() - b.z()).amax()).fold(0.0, f64::max);
    println!("round trip error {err:.1e}");
    Ok(())
}
