//! File formats: points as CSV, fitted families and reports as JSON with
//! sorted keys.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::descriptors::{Mode, NestedFamily, Subsphere};
use crate::error::{Error, Result};
use crate::sphere::UnitVector;

/// Writes points as CSV with header `x1,…,x{m+1}`.
///
/// Values use the shortest representation that parses back to the same
/// `f64`; reading renormalizes, so a round trip agrees to rounding.
pub fn write_points<W: Write>(writer: W, points: &[UnitVector]) -> Result<()> {
    let Some(first) = points.first() else {
        return Err(Error::InvalidParameter("no points to write".into()));
    };
    let d = first.ambient_dim();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record((1..=d).map(|i| format!("x{i}")))?;
    for p in points {
        if p.ambient_dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: p.ambient_dim() });
        }
        w.write_record(p.as_slice().iter().map(|x| format!("{x:?}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a points CSV. Rows within `1e-6` of unit norm are renormalized;
/// other rows are rejected with their line number.
pub fn read_points<R: Read>(reader: R) -> Result<Vec<UnitVector>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = r.headers()?.clone();
    let d = headers.len();
    if d < 2 {
        return Err(Error::Validation { line: 1, message: "need at least two columns x1,x2".into() });
    }
    for (i, h) in headers.iter().enumerate() {
        if h != format!("x{}", i + 1) {
            return Err(Error::Validation {
                line: 1,
                message: format!("column {} should be named x{}, found '{h}'", i + 1, i + 1),
            });
        }
    }
    let mut points = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let coords = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Validation { line, message: format!("'{f}' is not a number") })
            })
            .collect::<Result<Vec<f64>>>()?;
        let p = UnitVector::from_slice(&coords).map_err(|e| Error::Validation { line, message: e.to_string() })?;
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::Validation { line: 1, message: "the file holds no points".into() });
    }
    Ok(points)
}

pub fn write_points_file(path: &Path, points: &[UnitVector]) -> Result<()> {
    write_points(BufWriter::new(File::create(path)?), points)
}

pub fn read_points_file(path: &Path) -> Result<Vec<UnitVector>> {
    read_points(BufReader::new(File::open(path)?))
}

/// Pretty JSON with object keys in sorted order and a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    // serde_json's default map is ordered, so a round trip through Value sorts keys
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

/// Serialized form of a subsphere representative: the columns of `v` as
/// `normals` and the offsets `α`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsphereRecord {
    pub dim: usize,
    pub great: bool,
    pub normals: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
}

impl From<&Subsphere> for SubsphereRecord {
    fn from(s: &Subsphere) -> Self {
        SubsphereRecord {
            dim: s.dim(),
            great: s.is_great(),
            normals: s.v().column_iter().map(|c| c.iter().copied().collect()).collect(),
            offsets: s.alpha().iter().copied().collect(),
        }
    }
}

impl SubsphereRecord {
    pub fn to_subsphere(&self) -> Result<Subsphere> {
        let rows = self.normals.first().map_or(0, Vec::len);
        if self.normals.iter().any(|c| c.len() != rows) {
            return Err(Error::InvalidParameter("normals have different lengths".into()));
        }
        let v = DMatrix::from_fn(rows, self.normals.len(), |i, j| self.normals[j][i]);
        let s = Subsphere::new(v, DVector::from_vec(self.offsets.clone()), self.great)?;
        if s.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: s.dim() });
        }
        Ok(s)
    }
}

/// Serialized form of a nested family, outermost level first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyRecord {
    pub mode: Mode,
    pub sphere_dim: usize,
    pub levels: Vec<SubsphereRecord>,
    pub nested_mean: Option<Vec<f64>>,
}

impl From<&NestedFamily> for FamilyRecord {
    fn from(f: &NestedFamily) -> Self {
        FamilyRecord {
            mode: f.mode(),
            sphere_dim: f.ambient_dim(),
            levels: f.levels().iter().map(SubsphereRecord::from).collect(),
            nested_mean: f.nested_mean().map(|p| p.as_slice().to_vec()),
        }
    }
}

impl FamilyRecord {
    pub fn to_family(&self) -> Result<NestedFamily> {
        let levels = self.levels.iter().map(SubsphereRecord::to_subsphere).collect::<Result<Vec<_>>>()?;
        let f = NestedFamily::from_levels(self.mode, &levels)?;
        if f.ambient_dim() != self.sphere_dim {
            return Err(Error::DimensionMismatch { expected: self.sphere_dim, found: f.ambient_dim() });
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::{fit_bnfd, FitConfig};
    use crate::sphere::{sample_vmf, Seed};
    use proptest::prelude::*;

    #[test]
    fn points_round_trip() {
        let mu = UnitVector::from_slice(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        let pts = sample_vmf(&mu, 5.0, 50, Seed::new(3)).unwrap();
        let mut buf = Vec::new();
        write_points(&mut buf, &pts).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x1,x2,x3,x4\n"));
        let back = read_points(buf.as_slice()).unwrap();
        assert_eq!(back.len(), pts.len());
        for (a, b) in pts.iter().zip(&back) {
            assert!((a.coords() - b.coords()).amax() < 1e-15);
        }
    }

    #[test]
    fn bad_rows_report_their_line() {
        let text = "x1,x2,x3\n1,0,0\n0.5,0.5,0.5\n";
        match read_points(text.as_bytes()) {
            Err(Error::Validation { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "x1,x2,x3\n1,0,zero\n";
        assert!(matches!(read_points(text.as_bytes()), Err(Error::Validation { line: 2, .. })));
        assert!(read_points("a,b\n1,0\n".as_bytes()).is_err());
        assert!(read_points("x1,x2\n".as_bytes()).is_err());
    }

    #[test]
    fn json_keys_are_sorted() {
        #[derive(Serialize)]
        struct Unsorted {
            zeta: u8,
            alpha: u8,
        }
        let s = to_json_string(&Unsorted { zeta: 1, alpha: 2 }).unwrap();
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
        assert!(s.ends_with('\n'));
    }

    #[test]
    fn family_record_round_trip() {
        let mu = UnitVector::normalize(DVector::from_vec(vec![0.3, 0.1, 0.2, 0.9])).unwrap();
        let pts = sample_vmf(&mu, 20.0, 80, Seed::new(9)).unwrap();
        for mode in [Mode::Pns, Mode::Pngs] {
            let fam = fit_bnfd(&pts, &FitConfig::new(mode)).unwrap().family;
            let rec = FamilyRecord::from(&fam);
            let json = to_json_string(&rec).unwrap();
            let back: FamilyRecord = serde_json::from_str(&json).unwrap();
            assert_eq!(back, rec);
            let fam2 = back.to_family().unwrap();
            for (a, b) in fam.levels().iter().zip(fam2.levels()) {
                assert!((a.z() - b.z()).amax() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn csv_round_trip_within_tolerance(seed in any::<u64>(), d in 2usize..7, n in 1usize..20) {
            let mut rng = Seed::new(seed).rng();
            let pts: Vec<UnitVector> = (0..n)
                .map(|_| UnitVector::normalize(crate::sphere::uniform_direction(d, &mut rng)).unwrap())
                .collect();
            let mut buf = Vec::new();
            write_points(&mut buf, &pts).unwrap();
            let back = read_points(buf.as_slice()).unwrap();
            for (a, b) in pts.iter().zip(&back) {
                prop_assert!((a.coords() - b.coords()).amax() <= 1e-12);
            }
        }
    }
}
