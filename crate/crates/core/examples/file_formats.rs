//! Writes a sample as CSV, reads it back, and stores a fitted family as JSON.

use nested_spheres::io::{read_points, to_json_string, write_points, FamilyRecord};
use nested_spheres::simulate::{generate, DesignId, SimDesign};
use nested_spheres::{fit_bnfd, FitConfig, Mode, Seed};

fn main() -> nested_spheres::Result<()> {
    let sample = generate(&SimDesign::new(DesignId::III, 20, Seed::new(4)))?;
    let mut csv = Vec::new();
    write_points(&mut csv, &sample.x)?;
    let text = String::from_utf8_lossy(&csv);
    println!("{}", text.lines().take(3).collect::<Vec<_>>().join("\n"));

    let back = read_points(csv.as_slice())?;
    let fit = fit_bnfd(&back, &FitConfig::new(Mode::Pns))?;
    let record = FamilyRecord::from(&fit.family);
    print!("{}", to_json_string(&record)?);
    let restored = record.to_family()?;
    println!("restored {} levels", restored.len());
    Ok(())
}
