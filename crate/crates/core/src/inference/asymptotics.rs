use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::covariance_of;
use crate::descriptors::{ziezold_distance, BnfdChart};
use crate::error::{Error, Result};
use crate::fitting::{fit_bnfd, FitConfig};
use crate::simulate::{chain_points, planted_chain_family, DesignId, SimDesign};
use crate::sphere::Seed;

/// Replicate summary at one sample size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyRow {
    pub n: usize,
    pub replicates: usize,
    pub failures: usize,
    /// Median Ziezold error against the planted family, per level.
    pub median_error: Vec<f64>,
    /// Covariance of the joint chart coordinates across replicates.
    pub covariance: Vec<Vec<f64>>,
    pub covariance_trace: f64,
}

/// `trace(cov at 4n) / trace(cov at n)`; close to `1/4` under `√n` scaling.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRatio {
    pub n: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub trace_ratios: Vec<TraceRatio>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Repeatedly samples the planted-chain design at each `n`, fits, and
/// records the error against the planted family and the spread of the fitted
/// families in a joint chart at the planted family.
///
/// The planted family is fixed by `design.seed`; samples come from `seed`.
pub fn run_asymptotics_study(
    design: &SimDesign,
    cfg: &FitConfig,
    n_values: &[usize],
    reps: usize,
    seed: Seed,
) -> Result<StudyReport> {
    if design.id != DesignId::PlantedChain {
        return Err(Error::InvalidParameter("the study needs the planted-chain design".into()));
    }
    // sample sizes come from `n_values`
    SimDesign { n_per_group: 1, ..design.clone() }.validate()?;
    if cfg.mode != design.chain.mode {
        return Err(Error::InvalidParameter(format!(
            "fit mode {} differs from the planted mode {}",
            cfg.mode, design.chain.mode
        )));
    }
    if reps == 0 {
        return Ok(StudyReport::default());
    }
    let truth = planted_chain_family(&design.chain, design.seed)?;
    let chart = BnfdChart::new(&truth)?;

    let mut rows = Vec::with_capacity(n_values.len());
    for &n in n_values {
        if n == 0 {
            return Err(Error::InvalidParameter("sample sizes must be positive".into()));
        }
        let d = SimDesign { n_per_group: n, ..design.clone() };
        let outcomes: Vec<Result<(Vec<f64>, DVector<f64>)>> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let pts = chain_points(&d, &truth, seed.child(n as u64).child(r as u64))?;
                let family = fit_bnfd(&pts, cfg)?.family;
                if family.len() != truth.len() {
                    return Err(Error::InvalidParameter("fit depth differs from the planted family".into()));
                }
                let errors = family
                    .levels()
                    .iter()
                    .zip(truth.levels())
                    .map(|(a, b)| ziezold_distance(a, b))
                    .collect::<Result<Vec<f64>>>()?;
                Ok((errors, chart.coords(&family)?.to_vector()))
            })
            .collect();
        let ok: Vec<(Vec<f64>, DVector<f64>)> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
        let failures = reps - ok.len();
        let median_error = (0..truth.len())
            .map(|l| median(&mut ok.iter().map(|(e, _)| e[l]).collect::<Vec<_>>()))
            .collect();
        let coords: Vec<DVector<f64>> = ok.into_iter().map(|(_, c)| c).collect();
        let (covariance, covariance_trace) = match covariance_of(&coords) {
            Ok(c) => (c.row_iter().map(|r| r.iter().copied().collect()).collect(), c.trace()),
            Err(_) => (Vec::new(), f64::NAN),
        };
        rows.push(StudyRow { n, replicates: coords.len(), failures, median_error, covariance, covariance_trace });
    }
    let trace_ratios = rows
        .iter()
        .filter_map(|r| {
            let q = rows.iter().find(|s| s.n == 4 * r.n)?;
            Some(TraceRatio { n: r.n, ratio: q.covariance_trace / r.covariance_trace })
        })
        .collect();
    Ok(StudyReport { rows, trace_ratios })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::Mode;

    #[test]
    fn zero_replicates_give_empty_report() {
        let d = SimDesign::new(DesignId::PlantedChain, 10, Seed::new(1));
        let rep = run_asymptotics_study(&d, &FitConfig::new(d.chain.mode), &[50, 200], 0, Seed::new(2)).unwrap();
        assert!(rep.rows.is_empty() && rep.trace_ratios.is_empty());
    }

    #[test]
    fn other_designs_are_rejected() {
        let d = SimDesign::new(DesignId::I, 10, Seed::new(1));
        assert!(run_asymptotics_study(&d, &FitConfig::new(Mode::Pns), &[50], 3, Seed::new(2)).is_err());
    }

    #[test]
    fn small_study_has_expected_shape() {
        let d = SimDesign::new(DesignId::PlantedChain, 10, Seed::new(4));
        let rep = run_asymptotics_study(&d, &FitConfig::new(d.chain.mode), &[40, 160], 8, Seed::new(5)).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert_eq!(rep.trace_ratios.len(), 1);
        for row in &rep.rows {
            assert_eq!(row.replicates + row.failures, 8);
            assert_eq!(row.median_error.len(), d.chain.dim);
            assert!(row.covariance_trace > 0.0);
        }
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
