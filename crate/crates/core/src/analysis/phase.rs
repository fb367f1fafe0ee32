//! Absorption probability `p_plus` and the measurement-induced phase diagram.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::pairwise_sum;
use crate::noise::{derive_seed, NoiseStream};
use crate::semiclassical::{Absorption, PhasePoint, Walker};

use super::ensemble::{p_plus_from_counts, settle, AbsorptionCounts, PPlus, DEFAULT_EPSILON};
use super::stats::{binomial_se, jackknife_mean_se};

/// Critical measurement rate `2 sqrt(h (1 - h))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaCritical {
    pub value: f64,
    /// `false` outside `0 <= h <= 1`, where `value` is 0 and no transition exists.
    pub has_transition: bool,
}

pub fn gamma_critical(h: f64) -> GammaCritical {
    if (0.0..=1.0).contains(&h) {
        GammaCritical {
            value: 2.0 * (h * (1.0 - h)).sqrt(),
            has_transition: true,
        }
    } else {
        GammaCritical {
            value: 0.0,
            has_transition: false,
        }
    }
}

/// Which stochastic equation drives the walkers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    #[default]
    Full,
    /// Noise-only equation of the strong-monitoring limit.
    LargeGamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryOptions {
    pub dt: f64,
    /// `None` selects `max(50, 20 / gamma)`.
    pub t_final: Option<f64>,
    /// Maximum number of times the horizon is doubled while at least
    /// `target_unabsorbed` of the runs are still unabsorbed.
    pub max_doublings: u32,
    pub target_unabsorbed: f64,
    pub epsilon: f64,
    pub dynamics: Dynamics,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: None,
            max_doublings: 3,
            target_unabsorbed: 0.01,
            epsilon: DEFAULT_EPSILON,
            dynamics: Dynamics::Full,
        }
    }
}

pub fn default_t_final(gamma: f64) -> f64 {
    if gamma > 0.0 {
        (20.0 / gamma).max(50.0)
    } else {
        50.0
    }
}

/// End states of an ensemble run until (nearly) all walkers are absorbed.
#[derive(Debug, Clone)]
pub struct StationaryEnsemble {
    pub final_mz: Vec<f64>,
    pub status: Vec<Absorption>,
    pub counts: AbsorptionCounts,
    pub t_final: f64,
    pub doublings: u32,
    pub base_seed: u64,
}

impl StationaryEnsemble {
    pub fn trajectories(&self) -> usize {
        self.final_mz.len()
    }

    pub fn p_plus(&self) -> Result<PPlus> {
        let mean = pairwise_sum(&self.final_mz) / self.final_mz.len() as f64;
        p_plus_from_counts(self.counts, mean, jackknife_mean_se(&self.final_mz))
    }

    /// `n_plus / M`; unabsorbed runs count against `p_plus`.
    pub fn p_plus_lower(&self) -> (f64, f64) {
        let m = self.trajectories();
        let p = self.counts.plus as f64 / m as f64;
        (p, binomial_se(p, m))
    }
}

fn steps(t: f64, dt: f64) -> usize {
    (t / dt - 1e-9).ceil().max(0.0) as usize
}

fn advance_all(walkers: &mut [Walker], n: usize, h: f64, gamma: f64, opts: &StationaryOptions) {
    walkers.par_iter_mut().for_each(|w| match opts.dynamics {
        Dynamics::Full => w.advance(n, h, gamma, opts.dt),
        Dynamics::LargeGamma => w.advance_large_gamma(n, gamma, opts.dt),
    });
}

/// Runs `m` walkers from `initial` until the unabsorbed fraction drops below
/// the target or the doubling budget is spent. Walker `i` uses stream
/// `(base_seed, i)` and results are stored by index.
pub fn run_stationary_ensemble(
    initial: PhasePoint,
    h: f64,
    gamma: f64,
    m: usize,
    base_seed: u64,
    opts: &StationaryOptions,
) -> Result<StationaryEnsemble> {
    if m == 0 {
        return Err(invalid("M", "at least one trajectory is required"));
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(invalid("gamma", format!("{gamma} must be finite and >= 0")));
    }
    if !(opts.dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    let t_final = opts.t_final.unwrap_or_else(|| default_t_final(gamma));
    let mut walkers: Vec<Walker> = (0..m as u64)
        .map(|i| Walker::new(initial, NoiseStream::new(base_seed, i)))
        .collect();
    advance_all(&mut walkers, steps(t_final, opts.dt), h, gamma, opts);
    let mut horizon = t_final;
    let mut doublings = 0;
    let unabsorbed = |ws: &[Walker]| {
        ws.iter()
            .filter(|w| !w.settled(opts.epsilon).is_absorbed())
            .count()
    };
    while doublings < opts.max_doublings
        && unabsorbed(&walkers) as f64 >= opts.target_unabsorbed * m as f64
    {
        // continue the same paths over another `horizon`
        advance_all(&mut walkers, steps(horizon, opts.dt), h, gamma, opts);
        horizon *= 2.0;
        doublings += 1;
    }
    let mut counts = AbsorptionCounts::default();
    let mut status = Vec::with_capacity(m);
    for w in &walkers {
        let s = settle(w.absorbed, w.mz, opts.epsilon);
        counts.add(s);
        status.push(s);
    }
    Ok(StationaryEnsemble {
        final_mz: walkers.iter().map(|w| w.mz).collect(),
        status,
        counts,
        t_final: horizon,
        doublings,
        base_seed,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub trajectories: usize,
    pub base_seed: u64,
    pub initial_mz: f64,
    pub initial_phi: f64,
    pub stationary: StationaryOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            trajectories: 2000,
            base_seed: 0,
            initial_mz: 0.0,
            initial_phi: 0.0,
            stationary: StationaryOptions::default(),
        }
    }
}

fn null_as_nan<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PhaseCell {
    pub h: f64,
    pub gamma: f64,
    pub seed_offset: u64,
    pub seed: u64,
    /// NaN (JSON `null`) when no run was absorbed.
    #[serde(deserialize_with = "null_as_nan")]
    pub p_plus: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub p_plus_err: f64,
    pub unabsorbed_frac: f64,
    pub absorbed_plus: usize,
    pub absorbed_minus: usize,
    pub trajectories: usize,
    pub t_final: f64,
    /// Unabsorbed fraction at or above the reporting limit.
    pub inconclusive: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub h: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Row-major over `h`, then `gamma`.
    pub cells: Vec<PhaseCell>,
    pub config: SweepConfig,
}

impl PhaseDiagram {
    pub fn cell(&self, ih: usize, ig: usize) -> &PhaseCell {
        &self.cells[ih * self.gamma.len() + ig]
    }

    pub fn p_plus_matrix(&self) -> Vec<Vec<f64>> {
        self.cells
            .chunks(self.gamma.len())
            .map(|r| r.iter().map(|c| c.p_plus).collect())
            .collect()
    }

    /// CSV with columns `h,gamma,p_plus,p_plus_err,unabsorbed_frac,M`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "h,gamma,p_plus,p_plus_err,unabsorbed_frac,M")?;
        for c in &self.cells {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                c.h, c.gamma, c.p_plus, c.p_plus_err, c.unabsorbed_frac, c.trajectories
            )?;
        }
        Ok(())
    }
}

/// One `(h, gamma)` cell; `seed_offset` selects the cell's derived seed.
pub fn phase_cell(h: f64, gamma: f64, seed_offset: u64, config: &SweepConfig) -> Result<PhaseCell> {
    let initial = PhasePoint::new(config.initial_mz, config.initial_phi)?;
    let seed = derive_seed(config.base_seed, seed_offset);
    let ens = run_stationary_ensemble(
        initial,
        h,
        gamma,
        config.trajectories,
        seed,
        &config.stationary,
    )?;
    let (p, err, inconclusive) = match ens.p_plus() {
        Ok(pp) => (pp.estimate, pp.se, false),
        Err(Error::Inconclusive { .. }) => {
            let absorbed = ens.counts.plus + ens.counts.minus;
            if absorbed == 0 {
                (f64::NAN, f64::NAN, true)
            } else {
                let p = ens.counts.plus as f64 / absorbed as f64;
                (p, binomial_se(p, absorbed), true)
            }
        }
        Err(e) => return Err(e),
    };
    Ok(PhaseCell {
        h,
        gamma,
        seed_offset,
        seed,
        p_plus: p,
        p_plus_err: err,
        unabsorbed_frac: ens.counts.unabsorbed_fraction(),
        absorbed_plus: ens.counts.plus,
        absorbed_minus: ens.counts.minus,
        trajectories: ens.trajectories(),
        t_final: ens.t_final,
        inconclusive,
    })
}

/// `p_plus` on the grid product. Cell `(ih, ig)` uses seed offset `ih * len(gamma) + ig`.
pub fn phase_diagram_sweep(
    h_grid: &[f64],
    gamma_grid: &[f64],
    config: &SweepConfig,
) -> Result<PhaseDiagram> {
    if h_grid.is_empty() || gamma_grid.is_empty() {
        return Err(invalid("grid", "h and gamma grids must be nonempty"));
    }
    let mut cells = Vec::with_capacity(h_grid.len() * gamma_grid.len());
    for (ih, &h) in h_grid.iter().enumerate() {
        for (ig, &g) in gamma_grid.iter().enumerate() {
            cells.push(phase_cell(
                h,
                g,
                (ih * gamma_grid.len() + ig) as u64,
                config,
            )?);
        }
    }
    Ok(PhaseDiagram {
        h: h_grid.to_vec(),
        gamma: gamma_grid.to_vec(),
        cells,
        config: config.clone(),
    })
}

/// One-sided 95% normal quantile.
const Z95: f64 = 1.645;
/// `p_plus` level that marks the attractive-barrier phase.
pub const DETECTION_LEVEL: f64 = 0.05;

/// Empirical critical rate from a threshold scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalEstimate {
    pub h: f64,
    /// First scanned `gamma` whose `p_plus` exceeds the detection level with 95% confidence.
    pub gamma_c: Option<f64>,
    /// Ratio between neighbouring scan points.
    pub resolution: f64,
    pub scan: Vec<f64>,
    /// Cells evaluated by the search, in evaluation order.
    pub evaluated: Vec<PhaseCell>,
}

pub fn detected(cell: &PhaseCell) -> bool {
    // inconclusive cells are judged on n_plus / M
    let (p, se) = if cell.inconclusive || !cell.p_plus.is_finite() {
        let p = cell.absorbed_plus as f64 / cell.trajectories as f64;
        (p, binomial_se(p, cell.trajectories))
    } else {
        (cell.p_plus, cell.p_plus_err)
    };
    p - Z95 * se > DETECTION_LEVEL
}

/// Log grid from `lo` to `hi` with `points_per_octave` points per doubling.
pub fn log_scan(lo: f64, hi: f64, points_per_octave: u32) -> Vec<f64> {
    let n = ((hi / lo).log2() * points_per_octave as f64).round() as i32;
    (0..=n)
        .map(|k| lo * 2f64.powf(k as f64 / points_per_octave as f64))
        .collect()
}

/// Threshold detector on a log scan spanning a factor of two on either side
/// of `center`. See [`extract_gamma_critical_range`].
pub fn extract_gamma_critical(
    h: f64,
    center: f64,
    points_per_octave: u32,
    config: &SweepConfig,
    seed_base: u64,
) -> Result<CriticalEstimate> {
    if !(center > 0.0) {
        return Err(invalid("center", "scan centre must be positive"));
    }
    extract_gamma_critical_range(
        h,
        0.5 * center,
        2.0 * center,
        points_per_octave,
        config,
        seed_base,
    )
}

/// Threshold detector on the log grid `lo * 2^(k / points_per_octave)` up to
/// `hi` at fixed `h`. The first detecting point is located by bisection,
/// which assumes `p_plus` grows with `gamma`; the estimate is that grid point.
pub fn extract_gamma_critical_range(
    h: f64,
    lo: f64,
    hi: f64,
    points_per_octave: u32,
    config: &SweepConfig,
    seed_base: u64,
) -> Result<CriticalEstimate> {
    if !(lo > 0.0 && hi > lo) {
        return Err(invalid(
            "gamma range",
            format!("need 0 < lo < hi, got [{lo}, {hi}]"),
        ));
    }
    if points_per_octave == 0 {
        return Err(invalid("points_per_octave", "must be at least 1"));
    }
    let scan = log_scan(lo, hi, points_per_octave);
    let mut evaluated = Vec::new();
    let eval = |k: usize, evaluated: &mut Vec<PhaseCell>| -> Result<bool> {
        let cell = phase_cell(h, scan[k], seed_base + k as u64, config)?;
        let d = detected(&cell);
        evaluated.push(cell);
        Ok(d)
    };
    let last = scan.len() - 1;
    let gamma_c = if !eval(last, &mut evaluated)? {
        None
    } else if eval(0, &mut evaluated)? {
        Some(scan[0])
    } else {
        // invariant: scan[lo] not detected, scan[hi] detected
        let (mut lo, mut hi) = (0, last);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if eval(mid, &mut evaluated)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(scan[hi])
    };
    Ok(CriticalEstimate {
        h,
        gamma_c,
        resolution: 2f64.powf(1.0 / points_per_octave as f64),
        scan,
        evaluated,
    })
}
