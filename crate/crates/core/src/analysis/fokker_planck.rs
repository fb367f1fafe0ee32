//! Exact solution of the strong-monitoring limit.
//!
//! With `m_z = tanh(s)` and `tau = gamma t` the noise-only equation becomes
//! `ds = tanh(s) dtau + dxi`, whose density from a point start is a weighted
//! pair of Gaussians drifting apart at unit speed.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Result};
use crate::linalg::pairwise_sum;
use crate::noise::NoiseStream;
use crate::semiclassical::large_gamma_step;

use super::stats::{jackknife_mean_se, ks_one_sample, KsResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FokkerPlanckSolution {
    pub s0: f64,
    pub tau: f64,
}

impl FokkerPlanckSolution {
    pub fn new(mz0: f64, tau: f64) -> Result<Self> {
        if !(mz0.abs() < 1.0) {
            return Err(invalid(
                "mz0",
                format!("{mz0} must lie strictly inside (-1, 1)"),
            ));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid("tau", "must be positive"));
        }
        Ok(Self {
            s0: mz0.atanh(),
            tau,
        })
    }

    /// Weights `e^{-+s0} / (2 cosh s0)` of the left and right movers.
    fn weights(&self) -> (f64, f64) {
        let left = 1.0 / (1.0 + (2.0 * self.s0).exp());
        (left, 1.0 - left)
    }

    pub fn density(&self, s: f64) -> f64 {
        let (wl, wr) = self.weights();
        let tau = self.tau;
        let norm = (2.0 * std::f64::consts::PI * tau).sqrt();
        let g = |c: f64| (-(s - c).powi(2) / (2.0 * tau)).exp() / norm;
        wl * g(self.s0 - tau) + wr * g(self.s0 + tau)
    }

    pub fn cdf(&self, s: f64) -> f64 {
        let (wl, wr) = self.weights();
        let sd = self.tau.sqrt();
        let n = Normal::new(0.0, 1.0).expect("unit normal");
        wl * n.cdf((s - self.s0 + self.tau) / sd) + wr * n.cdf((s - self.s0 - self.tau) / sd)
    }

    /// Same distribution expressed in `m_z`.
    pub fn cdf_mz(&self, mz: f64) -> f64 {
        if mz <= -1.0 {
            0.0
        } else if mz >= 1.0 {
            1.0
        } else {
            self.cdf(mz.atanh())
        }
    }
}

pub fn fokker_planck_density(sol: &FokkerPlanckSolution, s: f64) -> f64 {
    sol.density(s)
}

/// Asymptotic weight of the `+1` barrier, `(1 + mz0) / 2`.
pub fn fokker_planck_p_plus(mz0: f64) -> Result<f64> {
    if !(mz0.abs() < 1.0) {
        return Err(invalid(
            "mz0",
            format!("{mz0} must lie strictly inside (-1, 1)"),
        ));
    }
    Ok(0.5 * (1.0 + mz0))
}

/// `m_z` samples of a noise-only ensemble at the requested times.
#[derive(Debug, Clone)]
pub struct LargeGammaSnapshots {
    pub gamma: f64,
    pub mz0: f64,
    pub t: Vec<f64>,
    /// `samples[k][i]`: trajectory `i` at time `t[k]`.
    pub samples: Vec<Vec<f64>>,
}

impl LargeGammaSnapshots {
    pub fn mean(&self, k: usize) -> f64 {
        pairwise_sum(&self.samples[k]) / self.samples[k].len() as f64
    }

    pub fn mean_se(&self, k: usize) -> f64 {
        jackknife_mean_se(&self.samples[k])
    }

    /// KS comparison of snapshot `k` against the exact distribution.
    pub fn ks_against_exact(&self, k: usize) -> Result<KsResult> {
        let sol = FokkerPlanckSolution::new(self.mz0, self.gamma * self.t[k])?;
        ks_one_sample(&self.samples[k], |mz| sol.cdf_mz(mz))
    }
}

/// Runs `m` walkers of the noise-only equation and records `m_z` at each
/// `tau / gamma` for `tau` in `taus` (ascending). Each time must be a whole
/// number of steps.
pub fn large_gamma_snapshots(
    mz0: f64,
    gamma: f64,
    taus: &[f64],
    m: usize,
    dt: f64,
    base_seed: u64,
) -> Result<LargeGammaSnapshots> {
    if !(gamma > 0.0) {
        return Err(invalid("gamma", "must be positive"));
    }
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    if m == 0 {
        return Err(invalid("M", "at least one trajectory is required"));
    }
    let mut marks = Vec::with_capacity(taus.len());
    for w in taus.windows(2) {
        if !(w[1] > w[0]) {
            return Err(invalid("tau", "sample times must increase"));
        }
    }
    for &tau in taus {
        let n = tau / gamma / dt;
        if !(tau >= 0.0) || (n - n.round()).abs() > 1e-6 {
            return Err(invalid(
                "tau",
                format!("tau / gamma = {} is not a multiple of dt", tau / gamma),
            ));
        }
        marks.push(n.round() as usize);
    }
    let per_walker: Vec<Vec<f64>> = (0..m as u64)
        .into_par_iter()
        .map(|i| {
            let mut noise = NoiseStream::new(base_seed, i);
            let mut mz = mz0;
            let mut done = 0;
            let mut out = Vec::with_capacity(marks.len());
            for &mark in &marks {
                while done < mark {
                    let dxi = noise.increment(dt);
                    mz = large_gamma_step(mz, gamma, dt, dxi).0;
                    done += 1;
                }
                out.push(mz);
            }
            out
        })
        .collect();
    let samples = (0..marks.len())
        .map(|k| per_walker.iter().map(|w| w[k]).collect())
        .collect();
    Ok(LargeGammaSnapshots {
        gamma,
        mz0,
        t: taus.iter().map(|tau| tau / gamma).collect(),
        samples,
    })
}
