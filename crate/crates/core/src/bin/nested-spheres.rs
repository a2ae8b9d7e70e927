use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use nested_spheres::io::{read_points_file, to_json_string, write_points_file, FamilyRecord};
use nested_spheres::pipeline::{read_counts, run_pipeline, synthetic_counts, write_counts, FixtureParams, PipelineSpec};
use nested_spheres::simulate::{generate, DesignId, SimDesign};
use nested_spheres::{fit_bnfd, two_sample_test, Error, FitConfig, FitReport, Mode, Result, Seed, TestLevel, TestReport, TestSpec};

/// Nested descriptors on spheres: fitting, two-sample tests and simulation.
///
/// Set NESTED_SPHERES_THREADS to cap the number of worker threads.
#[derive(Parser)]
#[command(name = "nested-spheres", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a simulated two-group sample (designs I, II, III or chain).
    Simulate {
        #[arg(long)]
        design: DesignId,
        /// Points per group.
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory; receives x.csv, y.csv and truth.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the synthetic filament-count fixture as a counts CSV.
    Fixture {
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a backward nested family to a points CSV.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "pns")]
        mode: Mode,
        /// Number of backward steps; defaults to all the way to the nested mean.
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bootstrap two-sample test between two points CSVs.
    Test {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long, default_value = "pns")]
        mode: Mode,
        /// mean, circle, joint or <j>d.
        #[arg(long, default_value = "mean")]
        level: TestLevel,
        /// Null replicates.
        #[arg(long, default_value_t = 1000)]
        boot: usize,
        /// Covariance replicates per group.
        #[arg(long, default_value_t = 200)]
        boot_cov: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Successive-time and cross-group tests on a counts CSV.
    Pipeline {
        #[arg(long)]
        counts: PathBuf,
        /// JSON pipeline settings; omitted fields take their defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the aligned text table here.
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    design: &'a SimDesign,
    truth: Vec<TruthRecord>,
}

#[derive(Serialize)]
struct TruthRecord {
    label: String,
    family: FamilyRecord,
}

#[derive(Serialize)]
struct FitOutput<'a> {
    config: &'a FitConfig,
    input: String,
    n: usize,
    family: FamilyRecord,
    report: &'a FitReport,
}

#[derive(Serialize)]
struct TestOutput<'a> {
    x: String,
    y: String,
    fit: &'a FitConfig,
    spec: &'a TestSpec,
    report: &'a TestReport,
}

fn write_json<T: Serialize>(path: &PathBuf, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { design, n, seed, out } => {
            let d = SimDesign::new(design, n, Seed::new(seed));
            let s = generate(&d)?;
            fs::create_dir_all(&out)?;
            write_points_file(&out.join("x.csv"), &s.x)?;
            write_points_file(&out.join("y.csv"), &s.y)?;
            let truth = s
                .truth
                .iter()
                .map(|t| TruthRecord { label: t.label.clone(), family: FamilyRecord::from(&t.family) })
                .collect();
            write_json(&out.join("truth.json"), &SimulateOutput { design: &d, truth })
        }
        Command::Fixture { n, seed, out } => {
            let p = FixtureParams { cells_per_slot: n, seed: Seed::new(seed), ..Default::default() };
            write_counts(fs::File::create(out)?, &synthetic_counts(&p)?)
        }
        Command::Fit { input, mode, depth, seed, out } => {
            let pts = read_points_file(&input)?;
            let cfg = FitConfig { depth, ..FitConfig::new(mode).with_seed(Seed::new(seed)) };
            let report = fit_bnfd(&pts, &cfg)?;
            let family = FamilyRecord::from(&report.family);
            write_json(
                &out,
                &FitOutput { config: &cfg, input: input.display().to_string(), n: pts.len(), family, report: &report },
            )
        }
        Command::Test { x, y, mode, level, boot, boot_cov, alpha, seed, out } => {
            let xs = read_points_file(&x)?;
            let ys = read_points_file(&y)?;
            let cfg = FitConfig::new(mode);
            let spec = TestSpec { alpha, ..TestSpec::new(level, Seed::new(seed)).with_replicates(boot_cov, boot) };
            let report = two_sample_test(&xs, &ys, &cfg, &spec)?;
            println!(
                "level {}  T2 = {:.4}  p = {:.4}  {}",
                report.level,
                report.t2,
                report.p_value,
                if report.rejected { "reject" } else { "accept" }
            );
            write_json(
                &out,
                &TestOutput {
                    x: x.display().to_string(),
                    y: y.display().to_string(),
                    fit: &cfg,
                    spec: &spec,
                    report: &report,
                },
            )
        }
        Command::Pipeline { counts, spec, seed, out, table } => {
            let records = read_counts(fs::File::open(&counts)?)?;
            let mut p: PipelineSpec = match spec {
                Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
                None => PipelineSpec::default(),
            };
            p.test.seed = Seed::new(seed);
            let report = run_pipeline(&records, &p)?;
            let text = report.table();
            print!("{text}");
            if let Some(path) = table {
                fs::write(path, &text)?;
            }
            write_json(&out, &report)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(v) = std::env::var("NESTED_SPHERES_THREADS") {
        let threads = match v.parse::<usize>() {
            Ok(t) if t > 0 => t,
            _ => {
                eprintln!("error: NESTED_SPHERES_THREADS must be a positive integer, got '{v}'");
                return ExitCode::from(2);
            }
        };
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
