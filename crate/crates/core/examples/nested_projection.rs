//! Builds a nested family of small spheres on S³ and projects a point down
//! the family, comparing the step-by-step route with direct projection.

use nalgebra::DVector;
use nested_spheres::descriptors::{nested_project, project_to_subsphere};
use nested_spheres::{Mode, NestedFamily, RelativeStep, UnitVector};

fn main() -> nested_spheres::Result<()> {
    let steps = [
        RelativeStep { normal: DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]), offset: 0.3 },
        RelativeStep { normal: DVector::from_vec(vec![0.0, 0.6, 0.8]), offset: -0.2 },
        RelativeStep { normal: DVector::from_vec(vec![1.0, 0.0]), offset: 1.0 },
    ];
    let family = NestedFamily::from_steps(3, Mode::Pns, &steps)?;
    let q = UnitVector::normalize(DVector::from_vec(vec![0.4, -0.3, 0.5, 0.7]))?;

    for (i, level) in family.levels().iter().enumerate() {
        let nested = nested_project(&q, &family, i)?;
        let direct = if level.is_point() { level.point().unwrap() } else { project_to_subsphere(&q, level)? };
        let gap = (nested.coords() - direct.coords()).amax();
        println!("{}-sphere: {:.6?}  (gap to direct projection {gap:.1e})", level.dim(), nested.as_slice());
    }
    println!("nested mean {:.6?}", family.nested_mean().unwrap().as_slice());
    Ok(())
}
