//! Filament-count ingestion and the time-course testing pipeline.
//!
//! Each cell record carries the pixel count `M` of all detected filaments and
//! the counts `m1`, `m2` of the largest and the smaller orientation fields.
//! It maps to the first octant of `S²` through the square-root shares
//! `(√(m1/M), √(m2/M), √(1 − (m1+m2)/M))`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{Read, Write};

use nalgebra::{Rotation3, Unit, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{fit_bnfd, FitConfig};
use crate::inference::{two_sample_tests, TestLevel, TestReport, TestSpec};
use crate::sphere::{Seed, UnitVector};

/// One cell: identifier, observation time, experimental group and counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub id: String,
    pub time_h: u32,
    pub group: String,
    #[serde(rename = "M")]
    pub total: u64,
    pub m1: u64,
    pub m2: u64,
}

/// Square-root share vector of a record.
pub fn ingest_counts(r: &CountRecord) -> Result<UnitVector> {
    if r.total == 0 {
        return Err(Error::InvalidCounts(format!("cell '{}' has M = 0", r.id)));
    }
    if r.m1.checked_add(r.m2).is_none_or(|s| s > r.total) {
        return Err(Error::InvalidCounts(format!(
            "cell '{}': m1 + m2 = {} + {} exceeds M = {}",
            r.id, r.m1, r.m2, r.total
        )));
    }
    let m = r.total as f64;
    let a = r.m1 as f64 / m;
    let b = r.m2 as f64 / m;
    let c = (r.total - r.m1 - r.m2) as f64 / m;
    UnitVector::from_slice(&[a.sqrt(), b.sqrt(), c.sqrt()])
}

/// Reads a counts CSV with header `id,time_h,group,M,m1,m2`.
///
/// Rows violating the count constraints and repeated `(group, time_h, id)`
/// keys are rejected with their line number.
pub fn read_counts<R: Read>(reader: R) -> Result<Vec<CountRecord>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = r.headers()?.clone();
    let expected = ["id", "time_h", "group", "M", "m1", "m2"];
    if headers.iter().ne(expected) {
        return Err(Error::Validation {
            line: 1,
            message: format!("header must be {}, found {}", expected.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut seen: HashMap<(String, u32, String), usize> = HashMap::new();
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let rec: CountRecord =
            row.deserialize(Some(&headers)).map_err(|e| Error::Validation { line, message: e.to_string() })?;
        ingest_counts(&rec).map_err(|e| Error::Validation { line, message: e.to_string() })?;
        let key = (rec.group.clone(), rec.time_h, rec.id.clone());
        if let Some(first) = seen.insert(key, line) {
            return Err(Error::Validation {
                line,
                message: format!(
                    "duplicate cell (group {}, time {}h, id {}); first seen on line {first}",
                    rec.group, rec.time_h, rec.id
                ),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_counts<W: Write>(writer: W, records: &[CountRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Pipeline settings, read from the `--spec` JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSpec {
    pub fit: FitConfig,
    /// Replicate counts, level, significance and seed of every test.
    pub test: TestSpec,
    /// Levels tested for every pair; empty means `test.level` only.
    pub levels: Vec<TestLevel>,
    /// Relabels groups at ingestion, e.g. to pool two stiffness classes.
    pub pool: BTreeMap<String, String>,
    pub min_cell_size: usize,
    pub cross_group: bool,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        PipelineSpec {
            fit: FitConfig::new(crate::descriptors::Mode::Pngs),
            test: TestSpec::default(),
            levels: vec![TestLevel::MEAN, TestLevel::CIRCLE],
            pool: BTreeMap::new(),
            min_cell_size: 10,
            cross_group: true,
        }
    }
}

impl PipelineSpec {
    fn effective_levels(&self) -> Vec<TestLevel> {
        if self.levels.is_empty() {
            vec![self.test.level]
        } else {
            let mut l = self.levels.clone();
            l.sort();
            l.dedup();
            l
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// Same group, consecutive observation times.
    Successive,
    /// Same time, two groups.
    CrossGroup,
}

/// Fit summary of one `(group, time)` cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub group: String,
    pub time_h: u32,
    pub n: usize,
    pub nested_mean: Option<Vec<f64>>,
    pub residuals_per_level: Vec<f64>,
    pub error: Option<String>,
}

/// One test of the grid. Exactly one of `report` and `error` is set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairTest {
    pub comparison: Comparison,
    pub group_a: String,
    pub time_a: u32,
    pub group_b: String,
    pub time_b: u32,
    pub level: TestLevel,
    pub report: Option<TestReport>,
    pub error: Option<String>,
}

impl PairTest {
    pub fn p_value(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.p_value)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub config: PipelineSpec,
    pub records: usize,
    pub groups: Vec<String>,
    pub times: Vec<u32>,
    pub cells: Vec<CellSummary>,
    pub tests: Vec<PairTest>,
}

fn tag_of(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Runs the successive-time tests within each group and, if enabled, the
/// cross-group tests at each time.
///
/// Every pair draws its seeds from `spec.test.seed` and the pair's labels, so
/// adding cells to the grid does not change other pairs' results. A failed
/// test is kept in the report with its error message.
pub fn run_pipeline(records: &[CountRecord], spec: &PipelineSpec) -> Result<PipelineReport> {
    spec.test.validate()?;
    let levels = spec.effective_levels();
    let mut grid: BTreeMap<(String, u32), Vec<UnitVector>> = BTreeMap::new();
    for r in records {
        let group = spec.pool.get(&r.group).unwrap_or(&r.group).clone();
        grid.entry((group, r.time_h)).or_default().push(ingest_counts(r)?);
    }
    if grid.is_empty() {
        return Err(Error::InvalidParameter("no records".into()));
    }
    for ((g, t), pts) in &grid {
        if pts.len() < spec.min_cell_size {
            return Err(Error::InvalidParameter(format!(
                "cell ({g}, {t}h) has {} records, need at least {}",
                pts.len(),
                spec.min_cell_size
            )));
        }
    }
    let groups: Vec<String> = grid.keys().map(|(g, _)| g.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let times: Vec<u32> = grid.keys().map(|(_, t)| *t).collect::<BTreeSet<_>>().into_iter().collect();

    let cells = grid
        .iter()
        .map(|((g, t), pts)| match fit_bnfd(pts, &spec.fit) {
            Ok(fit) => CellSummary {
                group: g.clone(),
                time_h: *t,
                n: pts.len(),
                nested_mean: fit.family.nested_mean().map(|p| p.as_slice().to_vec()),
                residuals_per_level: fit.residuals_per_level,
                error: None,
            },
            Err(e) => CellSummary {
                group: g.clone(),
                time_h: *t,
                n: pts.len(),
                nested_mean: None,
                residuals_per_level: Vec::new(),
                error: Some(e.to_string()),
            },
        })
        .collect();

    let mut pairs: Vec<(Comparison, (String, u32), (String, u32))> = Vec::new();
    for g in &groups {
        let ts: Vec<u32> = grid.keys().filter(|(h, _)| h == g).map(|(_, t)| *t).collect();
        for w in ts.windows(2) {
            pairs.push((Comparison::Successive, (g.clone(), w[0]), (g.clone(), w[1])));
        }
    }
    if spec.cross_group {
        for &t in &times {
            let gs: Vec<&String> = groups.iter().filter(|g| grid.contains_key(&((*g).clone(), t))).collect();
            for (i, a) in gs.iter().enumerate() {
                for b in &gs[i + 1..] {
                    pairs.push((Comparison::CrossGroup, ((*a).clone(), t), ((*b).clone(), t)));
                }
            }
        }
    }

    let mut tests = Vec::new();
    for (comparison, a, b) in pairs {
        let key = format!("{}|{}|{}|{}", a.0, a.1, b.0, b.1);
        let test_spec = TestSpec { seed: spec.test.seed.child(tag_of(&key)), ..spec.test.clone() };
        let results = two_sample_tests(&grid[&a], &grid[&b], &spec.fit, &test_spec, &levels);
        let per_level: Vec<Result<TestReport>> = match results {
            Ok(r) => r,
            Err(e) => levels.iter().map(|_| Err(Error::InvalidParameter(e.to_string()))).collect(),
        };
        for (level, res) in levels.iter().zip(per_level) {
            let (report, error) = match res {
                Ok(r) => (Some(r), None),
                Err(e) => {
                    log::warn!("test {key} at level {level} skipped: {e}");
                    (None, Some(e.to_string()))
                }
            };
            tests.push(PairTest {
                comparison,
                group_a: a.0.clone(),
                time_a: a.1,
                group_b: b.0.clone(),
                time_b: b.1,
                level: *level,
                report,
                error,
            });
        }
    }
    Ok(PipelineReport { config: spec.clone(), records: records.len(), groups, times, cells, tests })
}

impl PipelineReport {
    /// Aligned plain-text table of all tests.
    pub fn table(&self) -> String {
        let header = ["comparison", "group", "times", "level", "n", "m", "T2", "p", "reject"];
        let rows: Vec<[String; 9]> = self
            .tests
            .iter()
            .map(|t| {
                let (group, times) = match t.comparison {
                    Comparison::Successive => (t.group_a.clone(), format!("{}h-{}h", t.time_a, t.time_b)),
                    Comparison::CrossGroup => (format!("{} vs {}", t.group_a, t.group_b), format!("{}h", t.time_a)),
                };
                let kind = match t.comparison {
                    Comparison::Successive => "successive",
                    Comparison::CrossGroup => "cross-group",
                };
                let stats = match &t.report {
                    Some(r) => [
                        r.n.to_string(),
                        r.m.to_string(),
                        format!("{:.3}", r.t2),
                        format!("{:.4}", r.p_value),
                        if r.rejected { "yes" } else { "no" }.to_string(),
                    ],
                    None => {
                        let msg = t.error.clone().unwrap_or_default();
                        ["-".into(), "-".into(), "-".into(), "-".into(), format!("failed: {msg}")]
                    }
                };
                let [n, m, t2, p, rej] = stats;
                [kind.to_string(), group, times, t.level.to_string(), n, m, t2, p, rej]
            })
            .collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let mut push_row = |cells: &[String]| {
            let line: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        };
        push_row(&header.map(String::from));
        for r in &rows {
            push_row(r);
        }
        out
    }
}

/// Parameters of the synthetic count fixture.
///
/// The fixture is synthetic: two groups observed at the given times, cells
/// concentrated along a short arc in the first octant, and a rigid rotation of
/// every group's distribution from `change_time_h` on. Cells are placed on a
/// jittered lattice rather than drawn independently, so cells from one
/// population have nearly equal empirical distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureParams {
    pub groups: Vec<String>,
    pub times_h: Vec<u32>,
    pub cells_per_slot: usize,
    pub change_time_h: u32,
    /// Rotation angle in radians applied at and after `change_time_h`.
    pub change_angle: f64,
    /// Offset in radians between consecutive groups' centres.
    pub group_offset: f64,
    pub arc_half_width: f64,
    pub band_half_width: f64,
    pub seed: Seed,
}

impl Default for FixtureParams {
    fn default() -> Self {
        FixtureParams {
            groups: vec!["soft".into(), "stiff".into()],
            times_h: vec![4, 8, 12, 16, 20, 24],
            cells_per_slot: 300,
            change_time_h: 24,
            change_angle: 0.05,
            group_offset: 0.05,
            arc_half_width: 0.35,
            band_half_width: 0.08,
            seed: Seed::new(2024),
        }
    }
}

/// Randomly shifted rank-1 lattice in `[0, 1)²`: each coordinate has exactly
/// one point per stratum of width `1/n`, and the pairing spreads the points
/// evenly over the square.
fn lattice<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<(f64, f64)> {
    let mut k = ((n as f64) * 0.618_033_988_75).round().max(1.0) as usize;
    while gcd(k, n) != 1 {
        k += 1;
    }
    let (sa, sb) = (rng.random_range(0..n), rng.random_range(0..n));
    (0..n)
        .map(|i| {
            let a = ((i + sa) % n) as f64 + rng.random::<f64>();
            let b = ((i * k + sb) % n) as f64 + rng.random::<f64>();
            (a / n as f64, b / n as f64)
        })
        .collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn synthetic_counts(p: &FixtureParams) -> Result<Vec<CountRecord>> {
    if p.groups.is_empty() || p.times_h.is_empty() || p.cells_per_slot == 0 {
        return Err(Error::InvalidParameter("the fixture needs groups, times and cells".into()));
    }
    if !(p.arc_half_width > 0.0 && p.band_half_width >= 0.0 && p.arc_half_width + p.band_half_width < 0.5) {
        return Err(Error::InvalidParameter("fixture spread must stay inside the first octant".into()));
    }
    let centre = Vector3::new(1.0, 1.0, 1.0).normalize();
    let along = Vector3::new(1.0, -1.0, 0.0).normalize();
    let across = centre.cross(&along);
    // oblique axis, so the change moves both the mean and the fitted circle
    let axis = Unit::new_normalize(along + across * 0.5);
    let change = Rotation3::from_axis_angle(&axis, p.change_angle);

    let mut out = Vec::new();
    for (gi, g) in p.groups.iter().enumerate() {
        let shift = Rotation3::from_axis_angle(&Unit::new_normalize(along), p.group_offset * gi as f64);
        for &t in &p.times_h {
            let seed = p.seed.child(tag_of(&format!("{g}|{t}")));
            let mut rng = seed.rng();
            for (i, (a, b)) in lattice(p.cells_per_slot, &mut rng).into_iter().enumerate() {
                let s = p.arc_half_width * (2.0 * a - 1.0);
                let c = p.band_half_width * (2.0 * b - 1.0);
                let mut x = (centre * s.cos() + along * s.sin()) * c.cos() + across * c.sin();
                x = shift * x;
                if t >= p.change_time_h {
                    x = change * x;
                }
                let total: u64 = rng.random_range(4000..=20000);
                let m1 = ((x[0] * x[0]) * total as f64).round() as u64;
                let m2 = (((x[1] * x[1]) * total as f64).round() as u64).min(total - m1);
                out.push(CountRecord { id: format!("{g}-{t}h-{i:04}"), time_h: t, group: g.clone(), total, m1, m2 });
            }
        }
    }
    Ok(out)
}

/// Coordinates of the records as points, in input order.
pub fn ingest_all(records: &[CountRecord]) -> Result<Vec<UnitVector>> {
    records.iter().map(ingest_counts).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(total: u64, m1: u64, m2: u64) -> CountRecord {
        CountRecord { id: "c".into(), time_h: 4, group: "g".into(), total, m1, m2 }
    }

    #[test]
    fn share_map_examples() {
        let p = ingest_counts(&rec(100, 100, 0)).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 0.0, 0.0]);
        let p = ingest_counts(&rec(100, 49, 16)).unwrap();
        let want = [0.7, 0.4, 0.35f64.sqrt()];
        for (a, b) in p.as_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(ingest_counts(&rec(100, 60, 50)), Err(Error::InvalidCounts(_))));
        assert!(matches!(ingest_counts(&rec(0, 0, 0)), Err(Error::InvalidCounts(_))));
    }

    #[test]
    fn counts_csv_round_trip_and_validation() {
        let recs = vec![rec(100, 49, 16), CountRecord { id: "d".into(), ..rec(50, 1, 2) }];
        let mut buf = Vec::new();
        write_counts(&mut buf, &recs).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("id,time_h,group,M,m1,m2\n"));
        assert_eq!(read_counts(buf.as_slice()).unwrap(), recs);

        let dup = "id,time_h,group,M,m1,m2\na,4,g,10,1,1\nb,4,g,10,1,1\na,4,g,10,2,2\n";
        match read_counts(dup.as_bytes()) {
            Err(Error::Validation { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("line 2"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = "id,time_h,group,M,m1,m2\na,4,g,10,8,8\n";
        assert!(matches!(read_counts(bad.as_bytes()), Err(Error::Validation { line: 2, .. })));
        let header = "id,time,group,M,m1,m2\n";
        assert!(read_counts(header.as_bytes()).is_err());
    }

    #[test]
    fn fixture_stays_in_first_octant() {
        let p = FixtureParams { cells_per_slot: 40, ..Default::default() };
        let recs = synthetic_counts(&p).unwrap();
        assert_eq!(recs.len(), 40 * p.groups.len() * p.times_h.len());
        for x in ingest_all(&recs).unwrap() {
            assert!(x.as_slice().iter().all(|&c| c >= 0.0));
        }
        assert_eq!(synthetic_counts(&p).unwrap(), recs);
    }

    #[test]
    fn minimal_grid_has_one_test() {
        let p = FixtureParams { groups: vec!["g".into()], times_h: vec![4, 8], cells_per_slot: 30, ..Default::default() };
        let recs = synthetic_counts(&p).unwrap();
        let spec = PipelineSpec {
            levels: vec![TestLevel::MEAN],
            test: TestSpec::new(TestLevel::MEAN, Seed::new(1)).with_replicates(20, 20),
            ..Default::default()
        };
        let rep = run_pipeline(&recs, &spec).unwrap();
        assert_eq!(rep.tests.len(), 1);
        assert_eq!(rep.cells.len(), 2);
        assert!(rep.table().lines().count() == 2);
    }

    #[test]
    fn pooling_merges_groups() {
        let p = FixtureParams { groups: vec!["a".into(), "b".into()], times_h: vec![4], cells_per_slot: 12, ..Default::default() };
        let recs = synthetic_counts(&p).unwrap();
        let spec = PipelineSpec {
            pool: [("a".to_string(), "ab".to_string()), ("b".to_string(), "ab".to_string())].into(),
            test: TestSpec::new(TestLevel::MEAN, Seed::new(1)).with_replicates(20, 20),
            ..Default::default()
        };
        let rep = run_pipeline(&recs, &spec).unwrap();
        assert_eq!(rep.groups, vec!["ab".to_string()]);
        assert_eq!(rep.cells[0].n, 24);
        assert!(rep.tests.is_empty());
    }

    #[test]
    fn small_cells_are_rejected() {
        let p = FixtureParams { groups: vec!["g".into()], times_h: vec![4, 8], cells_per_slot: 5, ..Default::default() };
        let recs = synthetic_counts(&p).unwrap();
        let err = run_pipeline(&recs, &PipelineSpec::default()).unwrap_err();
        assert!(err.is_validation());
    }
}
