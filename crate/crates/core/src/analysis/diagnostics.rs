//! Finite-size diagnostics: threshold crossing times and factorization gaps.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;
use crate::monitored_quantum::{DensityRecord, TrajectoryRecord};

/// Default threshold for the breakdown of the semiclassical description.
pub const EHRENFEST_THRESHOLD: f64 = -0.9;

fn check_grid(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len()
        || a.iter()
            .zip(b)
            .any(|(x, y)| (x - y).abs() > 1e-9 * (1.0 + x.abs()))
    {
        return Err(Error::GridMismatch(format!(
            "{} vs {} samples",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// First time the candidate leaves the side of `threshold` it starts on,
/// by linear interpolation, counted only if the reference has not crossed by
/// then. `None` if no such crossing occurs.
pub fn crossing_time(
    t: &[f64],
    reference: &[f64],
    candidate: &[f64],
    threshold: f64,
) -> Result<Option<f64>> {
    for y in [reference, candidate] {
        if y.len() != t.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples on a grid of {}",
                y.len(),
                t.len()
            )));
        }
    }
    let first = |y: &[f64]| -> Option<(usize, f64)> {
        let side = (y.first()? - threshold).signum();
        (1..y.len())
            .find(|&k| (y[k] - threshold) * side <= 0.0)
            .map(|k| {
                let (y0, y1) = (y[k - 1], y[k]);
                let f = if y1 == y0 {
                    1.0
                } else {
                    (threshold - y0) / (y1 - y0)
                };
                (k, t[k - 1] + f * (t[k] - t[k - 1]))
            })
    };
    Ok(match (first(candidate), first(reference)) {
        (None, _) => None,
        (Some((_, tc)), None) => Some(tc),
        (Some((_, tc)), Some((_, tr))) => (tc < tr).then_some(tc),
    })
}

/// Fit-free gaps between `<m_z^2>` and `<m_z>^2` at three levels.
#[derive(Debug, Clone, Default)]
pub struct FactorizationGap {
    pub t: Vec<f64>,
    /// `per_trajectory[i][k]`: gap of trajectory `i` at time `k`.
    pub per_trajectory: Vec<Vec<f64>>,
    /// Trajectory average of the per-trajectory gap.
    pub trajectory_averaged: Vec<f64>,
    /// `mean(<m_z^2>) - mean(<m_z>)^2`: the gap of the averaged state.
    pub ensemble: Vec<f64>,
}

impl FactorizationGap {
    /// `max_t` of each trajectory's gap.
    pub fn max_per_trajectory(&self) -> Vec<f64> {
        self.per_trajectory
            .iter()
            .map(|g| g.iter().cloned().fold(0.0, f64::max))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,trajectory_averaged_gap,ensemble_gap")?;
        for k in 0..self.t.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e}",
                self.t[k], self.trajectory_averaged[k], self.ensemble[k]
            )?;
        }
        Ok(())
    }
}

pub fn trajectory_gap(record: &TrajectoryRecord) -> Vec<f64> {
    record
        .mz2
        .iter()
        .zip(&record.mz)
        .map(|(q, m)| q - m * m)
        .collect()
}

pub fn factorization_gap(records: &[TrajectoryRecord]) -> Result<FactorizationGap> {
    let first = records
        .first()
        .ok_or(Error::GridMismatch("empty ensemble".into()))?;
    for r in records {
        check_grid(&first.t, &r.t)?;
    }
    let m = records.len() as f64;
    let per_trajectory: Vec<Vec<f64>> = records.iter().map(trajectory_gap).collect();
    let n = first.t.len();
    let column =
        |f: &dyn Fn(usize) -> f64| pairwise_sum(&(0..records.len()).map(f).collect::<Vec<_>>()) / m;
    let mut trajectory_averaged = Vec::with_capacity(n);
    let mut ensemble = Vec::with_capacity(n);
    for k in 0..n {
        trajectory_averaged.push(column(&|i| per_trajectory[i][k]));
        let mean = column(&|i| records[i].mz[k]);
        let mean2 = column(&|i| records[i].mz2[k]);
        ensemble.push(mean2 - mean * mean);
    }
    Ok(FactorizationGap {
        t: first.t.clone(),
        per_trajectory,
        trajectory_averaged,
        ensemble,
    })
}

/// `<m_z^2>_rho - <m_z>_rho^2` along a density-matrix run.
pub fn density_gap(record: &DensityRecord) -> Vec<f64> {
    record
        .mz2()
        .iter()
        .zip(&record.mz)
        .map(|(q, m)| q - m * m)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitored_quantum::{lindblad_evolve, LindbladOptions, ModelSpec};
    use crate::spin_algebra::{
        coherent_state, connected_correlator, Axis, CoherentAngles, DensityMatrix,
    };

    #[test]
    fn crossing_interpolates() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let reference = [-1.0; 4];
        let cand = [-1.0, -0.95, -0.85, -0.5];
        let tc = crossing_time(&t, &reference, &cand, -0.9).unwrap().unwrap();
        assert!((tc - 1.5).abs() < 1e-12);
    }

    #[test]
    fn identical_series_never_separate() {
        let t = [0.0, 1.0, 2.0];
        let y = [-1.0, -0.95, -0.92];
        assert_eq!(crossing_time(&t, &y, &y, -0.9).unwrap(), None);
        let z = [-1.0, -0.5, 0.0];
        assert_eq!(crossing_time(&t, &z, &z, -0.9).unwrap(), None);
        assert!(crossing_time(&t, &y, &[0.0; 2], -0.9).is_err());
    }

    #[test]
    fn initial_gap_is_half_the_correlator() {
        let n = 20;
        let model = ModelSpec::new(n, 0.3, 0.25).unwrap();
        let angles = CoherentAngles::from_mz_phi(-0.4, 0.7).unwrap();
        let psi = coherent_state(model.ops(), angles);
        let rho = DensityMatrix::from_pure(&psi);
        let rec = lindblad_evolve(&model, &rho, &[0.0, 0.1], &LindbladOptions::new(1e-3)).unwrap();
        let gap = density_gap(&rec)[0];
        let c = connected_correlator(model.ops(), &psi, Axis::Z, Axis::Z).unwrap();
        assert!((gap - 0.5 * c).abs() < 1e-13);
        assert!((gap - (1.0 - 0.16) / n as f64).abs() < 1e-13);
    }
}
