//! Homodyne stochastic Schrödinger equation.
//!
//! One step maps `psi -> psi + (-i H psi) dt + gamma v dt + sqrt(gamma) u dxi`
//! with `u = (X - <X>) psi` and `v = -(X - <X>)^2 psi / 2`, then renormalizes.
//! The stochastic part is always Euler–Maruyama. The unitary part is either
//! the literal explicit-Euler factor `1 - i H dt` or its fourth-order Taylor
//! extension (the default), which keeps `<H>` conserved at `gamma = 0`.

use std::io::{self, Write};

use num_complex::Complex64;

use super::{pure_observables, ModelSpec};
use crate::error::{invalid, Error, Result};
use crate::linalg::{CVector, ZERO};
use crate::noise::{NoiseStream, GAUSSIAN_STREAM_ALGORITHM};
use crate::spin_algebra::PureState;

/// How the `-i H dt` part of a step is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnitaryScheme {
    /// `psi + (-i H dt) psi`
    ExplicitEuler,
    /// `sum_{k<=4} (-i H dt)^k / k! psi`
    #[default]
    Taylor4,
}

/// Result of a single step.
#[derive(Debug, Clone)]
pub struct SseStep {
    pub state: PureState,
    /// `|psi'| - 1` before renormalization.
    pub norm_drift: f64,
}

/// Reusable work buffers for repeated steps.
pub(crate) struct SseStepper<'a> {
    model: &'a ModelSpec,
    scheme: UnitaryScheme,
    out: Vec<Complex64>,
    term: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl<'a> SseStepper<'a> {
    pub(crate) fn new(model: &'a ModelSpec, scheme: UnitaryScheme) -> Self {
        let d = model.dim();
        Self {
            model,
            scheme,
            out: vec![ZERO; d],
            term: vec![ZERO; d],
            tmp: vec![ZERO; d],
        }
    }

    /// Advances `psi` in place and returns the pre-renormalization norm drift.
    pub(crate) fn step(&mut self, psi: &mut [Complex64], dt: f64, dxi: f64, t: f64) -> Result<f64> {
        let model = self.model;
        let xs = model.x_diag();
        let gamma = model.gamma();
        let ex: f64 = psi.iter().zip(xs).map(|(a, x)| a.norm_sqr() * x).sum();

        let h = model.hamiltonian_sparse();
        self.out.copy_from_slice(psi);
        self.term.copy_from_slice(psi);
        let orders = match self.scheme {
            UnitaryScheme::ExplicitEuler => 1,
            UnitaryScheme::Taylor4 => 4,
        };
        for k in 1..=orders {
            h.mul_vec_into(&self.term, &mut self.tmp);
            let c = Complex64::new(0.0, -dt / k as f64);
            for ((t_k, tmp), o) in self.term.iter_mut().zip(&self.tmp).zip(self.out.iter_mut()) {
                *t_k = c * tmp;
                *o += *t_k;
            }
        }

        let noise = gamma.sqrt() * dxi;
        for ((o, a), x) in self.out.iter_mut().zip(psi.iter()).zip(xs) {
            let dx = x - ex;
            *o += a * (noise * dx - 0.5 * gamma * dt * dx * dx);
        }

        let norm = self.out.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::IntegrationFailure {
                t,
                reason: format!("state norm became {norm}; reduce dt (dt = {dt})"),
            });
        }
        let inv = 1.0 / norm;
        for (p, o) in psi.iter_mut().zip(&self.out) {
            *p = o * inv;
        }
        Ok(norm - 1.0)
    }
}

/// One step with the default unitary scheme.
pub fn sse_step(state: &PureState, model: &ModelSpec, dt: f64, dxi: f64) -> Result<SseStep> {
    sse_step_with_scheme(state, model, dt, dxi, UnitaryScheme::default())
}

pub fn sse_step_with_scheme(
    state: &PureState,
    model: &ModelSpec,
    dt: f64,
    dxi: f64,
    scheme: UnitaryScheme,
) -> Result<SseStep> {
    if state.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: state.dim(),
        });
    }
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    let mut psi: Vec<Complex64> = state.amplitudes().iter().cloned().collect();
    let drift = SseStepper::new(model, scheme).step(&mut psi, dt, dxi, 0.0)?;
    Ok(SseStep {
        state: PureState::from_normalized(CVector::from_vec(psi)),
        norm_drift: drift,
    })
}

/// Integration settings for [`sse_trajectory`].
#[derive(Debug, Clone, Copy)]
pub struct SseOptions {
    pub t_final: f64,
    pub dt: f64,
    pub dt_record: f64,
    pub scheme: UnitaryScheme,
    pub keep_final_state: bool,
}

impl SseOptions {
    pub fn new(t_final: f64, dt: f64, dt_record: f64) -> Self {
        Self {
            t_final,
            dt,
            dt_record,
            scheme: UnitaryScheme::default(),
            keep_final_state: false,
        }
    }
}

/// Splits `[0, t_final]` into `dt` steps recorded every `stride` steps.
pub(crate) fn step_grid(t_final: f64, dt: f64, dt_record: f64) -> Result<(usize, usize)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid("dt", "must be positive and finite"));
    }
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(invalid("t_final", "must be positive and finite"));
    }
    if dt > dt_record * (1.0 + 1e-12) {
        return Err(invalid("dt", "must not exceed dt_record"));
    }
    let stride = (dt_record / dt).round() as usize;
    if ((stride as f64) * dt - dt_record).abs() > 1e-9 * dt_record {
        return Err(invalid("dt_record", "must be an integer multiple of dt"));
    }
    let n_steps = (t_final / dt).round() as usize;
    if ((n_steps as f64) * dt - t_final).abs() > 1e-9 * t_final {
        return Err(invalid("t_final", "must be an integer multiple of dt"));
    }
    Ok((n_steps, stride))
}

/// Per-trajectory observables on a uniform record grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub trajectory_index: u64,
    pub t: Vec<f64>,
    pub mx: Vec<f64>,
    pub my: Vec<f64>,
    pub mz: Vec<f64>,
    pub mz2: Vec<f64>,
    /// Largest `|norm drift|` over the steps that ended at each record time.
    pub norm_drift: Vec<f64>,
    pub final_state: Option<PureState>,
}

impl TrajectoryRecord {
    pub(crate) fn with_capacity(index: u64, n: usize) -> Self {
        Self {
            trajectory_index: index,
            t: Vec::with_capacity(n),
            mx: Vec::with_capacity(n),
            my: Vec::with_capacity(n),
            mz: Vec::with_capacity(n),
            mz2: Vec::with_capacity(n),
            norm_drift: Vec::with_capacity(n),
            final_state: None,
        }
    }

    pub(crate) fn push(&mut self, t: f64, obs: [f64; 4], drift: f64) {
        self.t.push(t);
        self.mx.push(obs[0]);
        self.my.push(obs[1]);
        self.mz.push(obs[2]);
        self.mz2.push(obs[3]);
        self.norm_drift.push(drift);
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.norm_drift.iter().cloned().fold(0.0, f64::max)
    }

    /// CSV with columns `t,mx,my,mz,mz2,norm_drift`; `#` header lines first.
    pub fn write_csv<W: Write>(&self, mut w: W, base_seed: u64) -> io::Result<()> {
        writeln!(w, "# gaussian_stream={GAUSSIAN_STREAM_ALGORITHM}")?;
        writeln!(
            w,
            "# base_seed={base_seed} trajectory_index={}",
            self.trajectory_index
        )?;
        writeln!(w, "t,mx,my,mz,mz2,norm_drift")?;
        for i in 0..self.t.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.t[i], self.mx[i], self.my[i], self.mz[i], self.mz2[i], self.norm_drift[i]
            )?;
        }
        Ok(())
    }
}

/// Integrates one SSE trajectory, consuming one increment per step from `noise`.
pub fn sse_trajectory(
    model: &ModelSpec,
    initial: &PureState,
    options: &SseOptions,
    noise: &mut NoiseStream,
) -> Result<TrajectoryRecord> {
    if initial.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: initial.dim(),
        });
    }
    let dt = options.dt;
    let (n_steps, stride) = step_grid(options.t_final, dt, options.dt_record)?;
    let mut psi: Vec<Complex64> = initial.amplitudes().iter().cloned().collect();
    let mut scratch = vec![ZERO; model.dim()];
    let mut stepper = SseStepper::new(model, options.scheme);
    let mut rec = TrajectoryRecord::with_capacity(noise.trajectory_index(), n_steps / stride + 1);
    rec.push(0.0, pure_observables(model, &psi, &mut scratch), 0.0);

    let mut worst = 0.0f64;
    for step in 1..=n_steps {
        let t = step as f64 * dt;
        let dxi = noise.increment(dt);
        let drift = stepper.step(&mut psi, dt, dxi, t)?;
        worst = worst.max(drift.abs());
        if step % stride == 0 {
            let obs = pure_observables(model, &psi, &mut scratch);
            if obs.iter().take(3).any(|m| m.abs() > 1.0 + 1e-6) {
                return Err(Error::IntegrationFailure {
                    t,
                    reason: "magnetization left the unit ball; reduce dt".into(),
                });
            }
            rec.push(t, obs, worst);
            worst = 0.0;
        }
    }
    if options.keep_final_state {
        rec.final_state = Some(PureState::from_normalized(CVector::from_vec(psi)));
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CMatrix, I, ONE};
    use crate::spin_algebra::{coherent_state, expectation, Axis, CoherentAngles};
    use std::f64::consts::PI;

    fn x_polarized(model: &ModelSpec) -> PureState {
        coherent_state(model.ops(), CoherentAngles::new(PI / 2.0, 0.0).unwrap())
    }

    #[test]
    fn unmonitored_euler_step_is_one_minus_i_h_dt() {
        let model = ModelSpec::new(4, 0.3, 0.0).unwrap();
        let psi = x_polarized(&model);
        let dt = 1e-2;
        let step =
            sse_step_with_scheme(&psi, &model, dt, 0.37, UnitaryScheme::ExplicitEuler).unwrap();
        let d = model.dim();
        let u = CMatrix::identity(d, d) - model.hamiltonian() * (I * dt);
        let raw = u * psi.amplitudes();
        let want = raw.unscale(raw.norm());
        assert!((step.state.amplitudes() - want).norm() < 1e-14);
    }

    #[test]
    fn eigenstate_of_x_is_fixed_without_hamiltonian() {
        // H = -Sx^2/S - 2h Sz cannot vanish, so emulate H = 0 through a model whose
        // Hamiltonian acts trivially: N = 1 has Sx^2 = 1/4 (a pure phase) and h = 0.
        let model = ModelSpec::new(1, 0.0, 0.7).unwrap();
        let psi = PureState::basis(2, 0);
        let out = sse_step(&psi, &model, 1e-3, 0.05).unwrap();
        let overlap = psi.amplitudes().dotc(out.state.amplitudes()).norm();
        assert!((overlap - 1.0).abs() < 1e-14);
        assert!(out.norm_drift.abs() < 1e-14);
    }

    #[test]
    fn one_step_matches_hand_evaluated_rhs() {
        // N = 2, h = 0.5, gamma = 0.1, dt = 1e-3, fixed dxi. The right-hand side is
        // assembled entry by entry for the 3-vector, independent of the stepper code.
        let (h, gamma, dt, dxi) = (0.5, 0.1, 1e-3, 0.021);
        let model = ModelSpec::new(2, h, gamma).unwrap();
        let psi = coherent_state(model.ops(), CoherentAngles::new(1.0, 0.4).unwrap());
        let a: Vec<Complex64> = psi.amplitudes().iter().cloned().collect();
        // S = 1: Sx^2 in basis (1, 0, -1) = [[1/2, 0, 1/2], [0, 1, 0], [1/2, 0, 1/2]]
        // H = -Sx^2 - 2h Sz
        let hmat = [
            [-0.5 - 2.0 * h, 0.0, -0.5],
            [0.0, -1.0, 0.0],
            [-0.5, 0.0, -0.5 + 2.0 * h],
        ];
        let x = [1.0, 0.0, -1.0];
        let ex: f64 = (0..3).map(|k| a[k].norm_sqr() * x[k]).sum();
        let mut next = [ZERO; 3];
        for k in 0..3 {
            let hpsi: Complex64 = (0..3).map(|j| a[j] * hmat[k][j]).sum();
            let dx = x[k] - ex;
            next[k] = a[k] - I * hpsi * dt - 0.5 * gamma * dt * dx * dx * a[k]
                + gamma.sqrt() * dxi * dx * a[k];
        }
        let norm: f64 = next.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let got = sse_step(&psi, &model, dt, dxi).unwrap();
        for k in 0..3 {
            let want = next[k] / norm;
            assert!((got.state.amplitudes()[k] - want).norm() < 5.0 * dt * dt);
        }
        let euler =
            sse_step_with_scheme(&psi, &model, dt, dxi, UnitaryScheme::ExplicitEuler).unwrap();
        for k in 0..3 {
            assert!((euler.state.amplitudes()[k] - next[k] / norm).norm() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = ModelSpec::new(3, 0.1, 0.1).unwrap();
        let psi = PureState::basis(3, 0);
        assert!(matches!(
            sse_step(&psi, &model, 1e-3, 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
        let psi = PureState::basis(4, 0);
        assert!(sse_step(&psi, &model, 0.0, 0.0).is_err());
    }

    #[test]
    fn huge_step_is_reported_not_clamped() {
        let model = ModelSpec::new(8, 0.3, 1.0).unwrap();
        let psi = x_polarized(&model);
        let err = sse_step(&psi, &model, 1e300, 1e300).unwrap_err();
        assert!(matches!(err, Error::IntegrationFailure { .. }));
    }

    #[test]
    fn unitary_limit_conserves_energy() {
        let model = ModelSpec::new(8, 0.3, 0.0).unwrap();
        let psi = x_polarized(&model);
        let opts = SseOptions {
            keep_final_state: true,
            ..SseOptions::new(10.0, 1e-4, 1e-2)
        };
        let mut noise = NoiseStream::new(1, 0);
        let rec = sse_trajectory(&model, &psi, &opts, &mut noise).unwrap();
        let e0 = expectation(&psi, model.hamiltonian()).unwrap();
        let e1 = expectation(rec.final_state.as_ref().unwrap(), model.hamiltonian()).unwrap();
        assert!(((e1 - e0) / e0).abs() < 1e-6, "{e0} -> {e1}");
        assert_eq!(rec.t.len(), 1001);
        assert!((rec.t[1000] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn casimir_constant_along_trajectory() {
        let model = ModelSpec::new(6, 0.4, 0.5).unwrap();
        let psi = x_polarized(&model);
        let opts = SseOptions {
            keep_final_state: true,
            ..SseOptions::new(2.0, 1e-3, 1e-1)
        };
        let rec = sse_trajectory(&model, &psi, &opts, &mut NoiseStream::new(4, 2)).unwrap();
        let cas = model.ops().casimir();
        let v = expectation(rec.final_state.as_ref().unwrap(), &cas).unwrap();
        assert!((v - 12.0).abs() < 1e-8);
        for i in 0..rec.t.len() {
            let m2 = rec.mx[i].powi(2) + rec.my[i].powi(2) + rec.mz[i].powi(2);
            assert!(m2 <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn mean_norm_drift_scales_as_dt_squared() {
        // antithetic pair dxi = +-sqrt(dt) reproduces E[dxi] = 0, E[dxi^2] = dt exactly
        let model = ModelSpec::new(8, 0.5, 0.1).unwrap();
        let psi = coherent_state(model.ops(), CoherentAngles::new(1.2, 0.3).unwrap());
        let dts = [2e-3, 1e-3, 5e-4, 2.5e-4];
        let drifts: Vec<f64> = dts
            .iter()
            .map(|&dt| {
                let up = sse_step(&psi, &model, dt, dt.sqrt()).unwrap().norm_drift;
                let dn = sse_step(&psi, &model, dt, -dt.sqrt()).unwrap().norm_drift;
                (0.5 * (up + dn)).abs()
            })
            .collect();
        let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
        let ys: Vec<f64> = drifts.iter().map(|d| d.ln()).collect();
        let slope = crate::analysis::stats::linear_fit(&xs, &ys).slope;
        assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
    }

    #[test]
    fn increments_follow_observable_sde() {
        // d<m_a> = i<[H, m_a]> dt - (gamma/2)<[X,[X,m_a]]> dt + sqrt(gamma) S dxi <m_z, m_a>_c
        let model = ModelSpec::new(10, 0.3, 0.4).unwrap();
        let ops = model.ops();
        let s = model.spin();
        let psi = coherent_state(ops, CoherentAngles::new(1.1, 0.6).unwrap());
        let x = model.monitored();
        let hm = model.hamiltonian();
        let residual = |dt: f64| -> f64 {
            let dxi = 0.8 * dt.sqrt();
            let next = sse_step(&psi, &model, dt, dxi).unwrap().state;
            let mut worst = 0.0f64;
            for axis in Axis::ALL {
                let m = ops.m(axis);
                let comm_h = hm * m - m * hm;
                let xm = x * m - m * x;
                let xxm = x * &xm - &xm * x;
                let drift_h = (expectation_c(&psi, &comm_h) * I).re;
                let drift_d = -0.5 * model.gamma() * expectation(&psi, &xxm).unwrap();
                let corr =
                    crate::spin_algebra::connected_correlator(ops, &psi, Axis::Z, axis).unwrap();
                let predicted = (drift_h + drift_d) * dt + model.gamma().sqrt() * s * dxi * corr;
                let actual = expectation(&next, m).unwrap() - expectation(&psi, m).unwrap();
                worst = worst.max((actual - predicted).abs());
            }
            worst
        };
        let (r1, r2) = (residual(1e-3), residual(1e-4));
        // residual is O(dt): shrinks ~10x when dt shrinks 10x
        assert!(r2 < r1 / 5.0, "{r1} {r2}");
        assert!(r1 < 1e-3 * 50.0);
    }

    fn expectation_c(psi: &PureState, op: &CMatrix) -> Complex64 {
        let a = psi.amplitudes();
        a.dotc(&(op * a)) * ONE
    }

    #[test]
    fn csv_layout() {
        let model = ModelSpec::new(2, 0.3, 0.1).unwrap();
        let psi = x_polarized(&model);
        let rec = sse_trajectory(
            &model,
            &psi,
            &SseOptions::new(0.1, 1e-3, 5e-2),
            &mut NoiseStream::new(8, 3),
        )
        .unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf, 8).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# gaussian_stream="));
        assert!(lines[1].contains("base_seed=8"));
        assert_eq!(lines[2], "t,mx,my,mz,mz2,norm_drift");
        assert_eq!(lines.len(), 3 + 3);
    }

    #[test]
    fn grid_validation() {
        assert!(step_grid(1.0, 1e-3, 1e-2).is_ok());
        assert!(step_grid(1.0, 3e-3, 1e-2).is_err());
        assert!(step_grid(1.0, 2e-2, 1e-2).is_err());
        assert!(step_grid(-1.0, 1e-3, 1e-2).is_err());
    }
}
