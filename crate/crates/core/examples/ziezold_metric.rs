//! Optimal positioning of subsphere representatives and the Ziezold distance
//! between classes.

use nalgebra::DVector;
use nested_spheres::descriptors::{optimal_position, ziezold_distance};
use nested_spheres::sphere::random_orthogonal;
use nested_spheres::{Seed, Subsphere};

fn main() -> nested_spheres::Result<()> {
    let mut rng = Seed::new(3).rng();
    let q = random_orthogonal(4, &mut rng);
    let v = q.columns(0, 2).into_owned();
    let p = Subsphere::new(v.clone(), DVector::from_vec(vec![0.3, -0.2]), false)?;

    // the same class written with rotated normals
    let r = random_orthogonal(2, &mut rng);
    let rotated = p.right_act(&r);
    println!("representatives differ by {:.3}", (p.z() - rotated.z()).norm());
    println!("Ziezold distance between them {:.1e}", ziezold_distance(&p, &rotated)?);

    let back = optimal_position(&rotated.z(), &p.z())?;
    println!("recovered rotation error {:.1e}", (&back - r.transpose()).amax());

    let tilted = Subsphere::new(q.columns(1, 2).into_owned(), DVector::from_vec(vec![0.3, -0.2]), false)?;
    println!("distance to a different 1-sphere {:.4}", ziezold_distance(&p, &tilted)?);
    Ok(())
}
