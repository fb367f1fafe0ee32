//! Reductions over trajectory ensembles.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;
use crate::monitored_quantum::{sse_trajectory, ModelSpec, SseOptions, TrajectoryRecord};
use crate::noise::NoiseStream;
use crate::semiclassical::{
    simulate_trajectory, Absorption, PhasePoint, SemiclassicalTrajectory, SimulationOptions,
};
use crate::spin_algebra::PureState;

use super::stats::{binomial_se, jackknife_mean_se, variance};

/// Uniform bins on `[-1, 1]`.
pub const HISTOGRAM_BINS: usize = 201;

/// Default soft threshold `1 - |m_z| < eps` for counting a run as absorbed.
pub const DEFAULT_EPSILON: f64 = 1e-4;

pub fn bin_index(x: f64, bins: usize) -> usize {
    let k = ((x + 1.0) * 0.5 * bins as f64).floor();
    (k.max(0.0) as usize).min(bins - 1)
}

/// Normalized histogram (masses sum to one) of `values` on `[-1, 1]`.
pub fn histogram(values: &[f64], bins: usize) -> Vec<f64> {
    let mut counts = vec![0u64; bins];
    for &v in values {
        counts[bin_index(v, bins)] += 1;
    }
    let n = values.len() as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AbsorptionCounts {
    pub plus: usize,
    pub minus: usize,
    pub unabsorbed: usize,
}

impl AbsorptionCounts {
    pub fn total(&self) -> usize {
        self.plus + self.minus + self.unabsorbed
    }

    pub fn unabsorbed_fraction(&self) -> f64 {
        self.unabsorbed as f64 / self.total() as f64
    }

    pub fn add(&mut self, a: Absorption) {
        match a {
            Absorption::Plus => self.plus += 1,
            Absorption::Minus => self.minus += 1,
            Absorption::None => self.unabsorbed += 1,
        }
    }
}

/// Two-level absorption rule: exact clamp, or `1 - |m_z| < eps` at the end.
pub fn settle(flag: Absorption, final_mz: f64, eps: f64) -> Absorption {
    if flag.is_absorbed() {
        flag
    } else if 1.0 - final_mz.abs() < eps {
        if final_mz > 0.0 {
            Absorption::Plus
        } else {
            Absorption::Minus
        }
    } else {
        Absorption::None
    }
}

/// Moments of one observable across the ensemble, per recorded time.
#[derive(Debug, Clone, Default)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Jackknife standard error of the mean.
    pub se: Vec<f64>,
}

impl Moments {
    fn from_columns(columns: &[Vec<f64>]) -> Self {
        let mut m = Moments::default();
        for col in columns {
            m.mean.push(pairwise_sum(col) / col.len() as f64);
            m.variance
                .push(if col.len() > 1 { variance(col) } else { 0.0 });
            m.se.push(if col.len() > 1 {
                jackknife_mean_se(col)
            } else {
                0.0
            });
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleSummary {
    pub t: Vec<f64>,
    pub mz: Moments,
    pub mx: Option<Moments>,
    pub my: Option<Moments>,
    /// `histograms[i][b]` is the mass of bin `b` at time `t[i]`.
    pub histograms: Vec<Vec<f64>>,
    pub counts: AbsorptionCounts,
    pub trajectories: usize,
    pub epsilon: f64,
}

impl EnsembleSummary {
    pub fn final_mz_mean(&self) -> f64 {
        *self.mz.mean.last().expect("nonempty grid")
    }

    pub fn final_mz_se(&self) -> f64 {
        *self.mz.se.last().expect("nonempty grid")
    }

    /// CSV with columns `t,bin_left,bin_right,mass`.
    pub fn write_histogram_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,bin_left,bin_right,mass")?;
        for (t, hist) in self.t.iter().zip(&self.histograms) {
            let bins = hist.len();
            for (b, mass) in hist.iter().enumerate() {
                let left = -1.0 + 2.0 * b as f64 / bins as f64;
                let right = -1.0 + 2.0 * (b + 1) as f64 / bins as f64;
                writeln!(w, "{t:.16e},{left:.16e},{right:.16e},{mass:.16e}")?;
            }
        }
        Ok(())
    }

    /// CSV with columns `t,mean_mz,var_mz,se_mz`.
    pub fn write_moments_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "# trajectories={} absorbed_plus={} absorbed_minus={} unabsorbed={} epsilon={:e}",
            self.trajectories,
            self.counts.plus,
            self.counts.minus,
            self.counts.unabsorbed,
            self.epsilon
        )?;
        writeln!(w, "t,mean_mz,var_mz,se_mz")?;
        for i in 0..self.t.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.t[i], self.mz.mean[i], self.mz.variance[i], self.mz.se[i]
            )?;
        }
        Ok(())
    }
}

fn transpose(rows: &[&[f64]], len: usize) -> Vec<Vec<f64>> {
    (0..len)
        .map(|i| rows.iter().map(|r| r[i]).collect())
        .collect()
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() <= b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= 1e-9 * y.abs().max(1.0))
}

/// Summary of finite-`N` trajectories sharing one record grid.
pub fn summarize_quantum(records: &[TrajectoryRecord], eps: f64) -> Result<EnsembleSummary> {
    summarize_quantum_binned(records, eps, HISTOGRAM_BINS)
}

pub fn summarize_quantum_binned(
    records: &[TrajectoryRecord],
    eps: f64,
    bins: usize,
) -> Result<EnsembleSummary> {
    if bins == 0 {
        return Err(crate::error::invalid(
            "histogram_bins",
            "must be at least 1",
        ));
    }
    let first = records
        .first()
        .ok_or(Error::GridMismatch("empty ensemble".into()))?;
    let n = first.t.len();
    if records
        .iter()
        .any(|r| r.t.len() != n || !same_grid(&r.t, &first.t))
    {
        return Err(Error::GridMismatch(
            "trajectory records use different time grids".into(),
        ));
    }
    let col = |f: fn(&TrajectoryRecord) -> &[f64]| {
        let rows: Vec<&[f64]> = records.iter().map(f).collect();
        transpose(&rows, n)
    };
    let mz = col(|r| &r.mz);
    let mx = col(|r| &r.mx);
    let my = col(|r| &r.my);
    let mut counts = AbsorptionCounts::default();
    for r in records {
        counts.add(settle(Absorption::None, *r.mz.last().unwrap(), eps));
    }
    Ok(EnsembleSummary {
        t: first.t.clone(),
        histograms: mz.iter().map(|c| histogram(c, bins)).collect(),
        mz: Moments::from_columns(&mz),
        mx: Some(Moments::from_columns(&mx)),
        my: Some(Moments::from_columns(&my)),
        counts,
        trajectories: records.len(),
        epsilon: eps,
    })
}

/// Summary of semiclassical runs. Runs stopped early by absorption are
/// extended at their barrier value to the longest grid.
pub fn summarize_semiclassical(
    runs: &[SemiclassicalTrajectory],
    eps: f64,
) -> Result<EnsembleSummary> {
    summarize_semiclassical_binned(runs, eps, HISTOGRAM_BINS)
}

pub fn summarize_semiclassical_binned(
    runs: &[SemiclassicalTrajectory],
    eps: f64,
    bins: usize,
) -> Result<EnsembleSummary> {
    if bins == 0 {
        return Err(crate::error::invalid(
            "histogram_bins",
            "must be at least 1",
        ));
    }
    let longest = runs
        .iter()
        .max_by_key(|r| r.t.len())
        .ok_or(Error::GridMismatch("empty ensemble".into()))?;
    let grid = &longest.t;
    let n = grid.len();
    let mut padded: Vec<Vec<f64>> = Vec::with_capacity(runs.len());
    let mut counts = AbsorptionCounts::default();
    for r in runs {
        if !same_grid(&r.t, grid) || (r.t.len() < n && !r.absorbed.is_absorbed()) {
            return Err(Error::GridMismatch(format!(
                "trajectory {} does not share the ensemble grid",
                r.trajectory_index
            )));
        }
        let mut v = r.mz.clone();
        v.resize(n, r.final_mz());
        padded.push(v);
        counts.add(settle(r.absorbed, r.final_mz(), eps));
    }
    let rows: Vec<&[f64]> = padded.iter().map(|v| v.as_slice()).collect();
    let mz = transpose(&rows, n);
    Ok(EnsembleSummary {
        t: grid.clone(),
        histograms: mz.iter().map(|c| histogram(c, bins)).collect(),
        mz: Moments::from_columns(&mz),
        mx: None,
        my: None,
        counts,
        trajectories: runs.len(),
        epsilon: eps,
    })
}

/// `m` SSE trajectories on streams `(base_seed, 0..m)`, returned in index order.
/// Runs on the current rayon pool.
pub fn run_sse_ensemble(
    model: &ModelSpec,
    initial: &PureState,
    options: &SseOptions,
    m: usize,
    base_seed: u64,
) -> Result<Vec<TrajectoryRecord>> {
    (0..m as u64)
        .into_par_iter()
        .map(|i| sse_trajectory(model, initial, options, &mut NoiseStream::new(base_seed, i)))
        .collect()
}

/// Semiclassical counterpart of [`run_sse_ensemble`]; trajectory `i` sees the
/// same increments as SSE trajectory `i` for equal `base_seed` and `dt`.
pub fn run_semiclassical_ensemble(
    initial: PhasePoint,
    h: f64,
    gamma: f64,
    options: &SimulationOptions,
    m: usize,
    base_seed: u64,
) -> Result<Vec<SemiclassicalTrajectory>> {
    (0..m as u64)
        .into_par_iter()
        .map(|i| simulate_trajectory(initial, h, gamma, options, NoiseStream::new(base_seed, i)))
        .collect()
}

/// Absorption probability at `m_z = +1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PPlus {
    /// Fraction absorbed at `+1` among absorbed runs.
    pub estimate: f64,
    /// Binomial standard error of `estimate`.
    pub se: f64,
    /// `(1 + mean m_z(t_final)) / 2`.
    pub mean_based: f64,
    pub mean_based_se: f64,
    pub unabsorbed_fraction: f64,
}

/// Largest unabsorbed fraction for which `p_plus` is reported.
pub const MAX_UNABSORBED: f64 = 0.05;

pub fn p_plus_from_counts(
    counts: AbsorptionCounts,
    final_mean: f64,
    final_se: f64,
) -> Result<PPlus> {
    let frac = counts.unabsorbed_fraction();
    if !(frac < MAX_UNABSORBED) {
        return Err(Error::Inconclusive {
            unabsorbed_fraction: frac,
            limit: MAX_UNABSORBED,
        });
    }
    let absorbed = counts.plus + counts.minus;
    let estimate = counts.plus as f64 / absorbed as f64;
    Ok(PPlus {
        estimate,
        se: binomial_se(estimate, absorbed),
        mean_based: 0.5 * (1.0 + final_mean),
        mean_based_se: 0.5 * final_se,
        unabsorbed_fraction: frac,
    })
}

pub fn p_plus(summary: &EnsembleSummary) -> Result<PPlus> {
    p_plus_from_counts(
        summary.counts,
        summary.final_mz_mean(),
        summary.final_mz_se(),
    )
}
