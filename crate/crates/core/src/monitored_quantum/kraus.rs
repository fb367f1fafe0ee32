//! Discrete weak measurement through a two-level ancilla.
//!
//! Each interval `delta_t` the system couples to a fresh ancilla that is then
//! read out with outcome `a = +1` or `a = -1`. The induced operators are
//! `L_a = (1 - i dt H - a sqrt(gamma dt) X - gamma dt X^2 / 2) / sqrt(2)` with
//! `gamma = lambda^2 dt`.

use num_complex::Complex64;

use super::sse::{step_grid, TrajectoryRecord};
use super::{pure_observables, ModelSpec};
use crate::error::{invalid, Error, Result};
use crate::linalg::{CMatrix, CVector, SparseMatrix};
use crate::noise::OutcomeStream;
use crate::spin_algebra::PureState;

#[derive(Debug, Clone)]
pub struct KrausPair {
    pub plus: CMatrix,
    pub minus: CMatrix,
    /// Effective measurement rate `lambda^2 delta_t`.
    pub gamma: f64,
    pub delta_t: f64,
}

impl KrausPair {
    /// `L_+^dagger L_+ + L_-^dagger L_- - I`.
    pub fn completeness_residual(&self) -> CMatrix {
        let d = self.plus.nrows();
        self.plus.adjoint() * &self.plus + self.minus.adjoint() * &self.minus
            - CMatrix::identity(d, d)
    }
}

pub fn kraus_pair(model: &ModelSpec, lambda: f64, delta_t: f64) -> Result<KrausPair> {
    if !(delta_t > 0.0) || !delta_t.is_finite() {
        return Err(invalid("delta_t", "must be positive"));
    }
    if !lambda.is_finite() {
        return Err(invalid("lambda", "must be finite"));
    }
    let gamma = lambda * lambda * delta_t;
    let d = model.dim();
    let x = model.monitored();
    let base = CMatrix::identity(d, d)
        - model.hamiltonian() * Complex64::new(0.0, delta_t)
        - (x * x) * Complex64::new(0.5 * gamma * delta_t, 0.0);
    let kick = x * Complex64::new((gamma * delta_t).sqrt(), 0.0);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    Ok(KrausPair {
        plus: (&base - &kick) * Complex64::new(r, 0.0),
        minus: (&base + &kick) * Complex64::new(r, 0.0),
        gamma,
        delta_t,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct DiscreteOptions {
    pub delta_t: f64,
    pub n_steps: usize,
    /// Observables are recorded every `record_stride` steps.
    pub record_stride: usize,
}

impl DiscreteOptions {
    pub fn new(delta_t: f64, n_steps: usize) -> Self {
        Self {
            delta_t,
            n_steps,
            record_stride: 1,
        }
    }

    /// Steps covering `t_final` with records every `dt_record`.
    pub fn for_duration(t_final: f64, delta_t: f64, dt_record: f64) -> Result<Self> {
        let (n_steps, record_stride) = step_grid(t_final, delta_t, dt_record)?;
        Ok(Self {
            delta_t,
            n_steps,
            record_stride,
        })
    }
}

/// Observables of a discrete run plus the integrated readout.
#[derive(Debug, Clone)]
pub struct DiscreteRecord {
    pub trajectory: TrajectoryRecord,
    /// `Y_t = sqrt(dt) * sum(a)` on the record grid.
    pub y: Vec<f64>,
    pub n_plus: u64,
    pub n_minus: u64,
}

/// Samples outcomes with the Born probabilities `||L_a psi||^2` and applies
/// the selected operator. The effective rate is the model's `gamma`.
pub fn discrete_monitoring_run(
    model: &ModelSpec,
    initial: &PureState,
    options: &DiscreteOptions,
    outcomes: &mut OutcomeStream,
    trajectory_index: u64,
) -> Result<DiscreteRecord> {
    if initial.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: initial.dim(),
        });
    }
    if options.record_stride == 0 {
        return Err(invalid("record_stride", "must be at least 1"));
    }
    let dt = options.delta_t;
    let lambda = (model.gamma() / dt).sqrt();
    let pair = kraus_pair(model, lambda, dt)?;
    let lp = SparseMatrix::from_dense(&pair.plus);
    let lm = SparseMatrix::from_dense(&pair.minus);

    let d = model.dim();
    let mut psi = initial.amplitudes().as_slice().to_vec();
    let mut plus = vec![Complex64::new(0.0, 0.0); d];
    let mut minus = plus.clone();
    let mut scratch = plus.clone();

    let n_rec = options.n_steps / options.record_stride + 1;
    let mut rec = TrajectoryRecord::with_capacity(trajectory_index, n_rec);
    let mut y_series = Vec::with_capacity(n_rec);
    let obs = pure_observables(model, &psi, &mut scratch);
    rec.push(0.0, obs, 0.0);
    y_series.push(0.0);

    let sqrt_dt = dt.sqrt();
    let mut y = 0.0;
    let (mut n_plus, mut n_minus) = (0u64, 0u64);
    for step in 1..=options.n_steps {
        lp.mul_vec_into(&psi, &mut plus);
        lm.mul_vec_into(&psi, &mut minus);
        let wp: f64 = plus.iter().map(|z| z.norm_sqr()).sum();
        let wm: f64 = minus.iter().map(|z| z.norm_sqr()).sum();
        let total = wp + wm;
        let t = step as f64 * dt;
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::IntegrationFailure {
                t,
                reason: "outcome weights vanished".into(),
            });
        }
        let (chosen, w, a) = if outcomes.uniform() < wp / total {
            n_plus += 1;
            (&plus, wp, 1.0)
        } else {
            n_minus += 1;
            (&minus, wm, -1.0)
        };
        let inv = 1.0 / w.sqrt();
        for (p, c) in psi.iter_mut().zip(chosen.iter()) {
            *p = c * inv;
        }
        y += sqrt_dt * a;
        if step % options.record_stride == 0 {
            let obs = pure_observables(model, &psi, &mut scratch);
            rec.push(t, obs, total - 1.0);
            y_series.push(y);
        }
    }
    rec.final_state = Some(PureState::from_normalized(CVector::from_vec(psi)));
    Ok(DiscreteRecord {
        trajectory: rec,
        y: y_series,
        n_plus,
        n_minus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::spin_algebra::{coherent_state, expectation, CoherentAngles};

    #[test]
    fn decoupled_ancilla() {
        let model = ModelSpec::new(4, 0.3, 0.0).unwrap();
        let pair = kraus_pair(&model, 0.0, 1e-2).unwrap();
        let d = model.dim();
        let want = (CMatrix::identity(d, d) - model.hamiltonian() * Complex64::new(0.0, 1e-2))
            * Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        assert!(max_abs(&(&pair.plus - &want)) < 1e-15);
        assert!(max_abs(&(&pair.minus - &want)) < 1e-15);
    }

    #[test]
    fn outcome_probabilities_to_leading_order() {
        let model = ModelSpec::new(6, 0.4, 0.0).unwrap();
        let psi = coherent_state(model.ops(), CoherentAngles::new(0.9, 0.3).unwrap());
        let x_mean = expectation(&psi, model.monitored()).unwrap();
        let dt = 1e-4;
        let lambda = 30.0;
        let pair = kraus_pair(&model, lambda, dt).unwrap();
        let g = pair.gamma;
        assert!((g - lambda * lambda * dt).abs() < 1e-15);
        let v = psi.amplitudes();
        for (l, a) in [(&pair.plus, 1.0), (&pair.minus, -1.0)] {
            let p = (l * v).norm_squared();
            let want = 0.5 - a * (g * dt).sqrt() * x_mean;
            // corrections are O(dt^{3/2})
            assert!((p - want).abs() < 1e-5, "{p} vs {want}");
        }
    }

    #[test]
    fn completeness_residual_shrinks() {
        let model = ModelSpec::new(4, 0.5, 0.0).unwrap();
        let lambda_of = |dt: f64| (2.0f64 / dt).sqrt();
        let r: Vec<f64> = [1e-2, 1e-3]
            .iter()
            .map(|&dt| {
                max_abs(
                    &kraus_pair(&model, lambda_of(dt), dt)
                        .unwrap()
                        .completeness_residual(),
                )
            })
            .collect();
        assert!(r[1] < r[0] / 10.0);
    }

    #[test]
    fn eigenstate_with_no_hamiltonian_is_kept() {
        // N = 1, h = 0: H is a multiple of the identity
        let model = ModelSpec::new(1, 0.0, 1.0).unwrap();
        let psi = PureState::basis(2, 0);
        let mut stream = OutcomeStream::new(1, 0);
        let rec = discrete_monitoring_run(
            &model,
            &psi,
            &DiscreteOptions::new(1e-3, 20_000),
            &mut stream,
            0,
        )
        .unwrap();
        let fin = rec.trajectory.final_state.as_ref().unwrap();
        assert!((fin.amplitudes()[0].norm() - 1.0).abs() < 1e-12);
        // <X> = 1/2 biases outcomes towards -1
        assert!(rec.n_minus > rec.n_plus);
        assert!(rec.trajectory.mz.iter().all(|m| (m - 1.0).abs() < 1e-12));
    }

    #[test]
    fn readout_drift_tracks_monitored_mean() {
        // dY has mean -2 sqrt(gamma) <X> dt; frozen by X eigenstate at H ~ I
        let model = ModelSpec::new(1, 0.0, 4.0).unwrap();
        let psi = PureState::basis(2, 0);
        let dt = 1e-3;
        let n = 20_000;
        let mut stream = OutcomeStream::new(7, 0);
        let rec =
            discrete_monitoring_run(&model, &psi, &DiscreteOptions::new(dt, n), &mut stream, 0)
                .unwrap();
        let t = n as f64 * dt;
        let mean_rate = rec.y.last().unwrap() / t;
        let want = -2.0 * 4.0f64.sqrt() * 0.5;
        // Y_T has standard deviation sqrt(T)
        assert!(
            (mean_rate - want).abs() < 4.0 / t.sqrt(),
            "{mean_rate} vs {want}"
        );
    }

    #[test]
    fn same_seed_same_run() {
        let model = ModelSpec::new(4, 0.3, 0.5).unwrap();
        let psi = coherent_state(model.ops(), CoherentAngles::new(1.2, 0.0).unwrap());
        let opts = DiscreteOptions {
            record_stride: 10,
            ..DiscreteOptions::new(1e-3, 500)
        };
        let a =
            discrete_monitoring_run(&model, &psi, &opts, &mut OutcomeStream::new(3, 2), 2).unwrap();
        let b =
            discrete_monitoring_run(&model, &psi, &opts, &mut OutcomeStream::new(3, 2), 2).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.trajectory.mz, b.trajectory.mz);
        assert_eq!(a.trajectory.t.len(), 51);
    }
}
