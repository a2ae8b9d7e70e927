//! Geodesic distances, von Mises–Fisher draws and orthonormal complements.

use nalgebra::DMatrix;
use nested_spheres::sphere::{geodesic_dist, orthonormal_complement, sample_vmf};
use nested_spheres::{Seed, UnitVector};

fn main() -> nested_spheres::Result<()> {
    let north = UnitVector::from_slice(&[0.0, 0.0, 1.0])?;
    let east = UnitVector::from_slice(&[1.0, 0.0, 0.0])?;
    println!("d(north, east) = {:.6}", geodesic_dist(&north, &east)?);

    for kappa in [0.0, 10.0, 200.0] {
        let pts = sample_vmf(&north, kappa, 2000, Seed::new(1))?;
        let mean_dist = pts.iter().map(|p| geodesic_dist(p, &north)).sum::<nested_spheres::Result<f64>>()?
            / pts.len() as f64;
        println!("kappa {kappa:>5}: mean distance to the mode {mean_dist:.4}");
    }

    let v = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, 1.0]);
    let w = orthonormal_complement(&v)?;
    println!("complement of e4 in R^4:{w:.3}");
    Ok(())
}
