//! Synthetic time-course study: filament counts for two groups observed every
//! four hours, with a planted change between 20h and 24h.
//!
//! Run with `cargo run --release --example time_course_pipeline`.

use nested_spheres::pipeline::{run_pipeline, synthetic_counts, FixtureParams, PipelineSpec};
use nested_spheres::{Seed, TestLevel, TestSpec};

fn main() -> nested_spheres::Result<()> {
    let records = synthetic_counts(&FixtureParams::default())?;
    let spec = PipelineSpec {
        test: TestSpec::new(TestLevel::MEAN, Seed::new(7)).with_replicates(200, 1000),
        ..Default::default()
    };
    let report = run_pipeline(&records, &spec)?;
    print!("{}", report.table());
    Ok(())
}
