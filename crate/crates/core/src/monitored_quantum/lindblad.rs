//! Lindblad master equation `d rho/dt = -i[H, rho] - (gamma/2)[X, [X, rho]]`.
//!
//! With `X = S_z` diagonal, the double commutator is elementwise:
//! `[X,[X,rho]]_mn = (x_m - x_n)^2 rho_mn`. The commutator with `H` is applied
//! through the banded sparse copy of `H`, using `rho H = (H rho)^dagger`.

use std::io::{self, Write};

use num_complex::Complex64;

use super::ModelSpec;
use crate::error::{invalid, Error, Result};
use crate::linalg::{commutator, trace_product, CMatrix, I};
use crate::spin_algebra::{expectation_density, Axis, DensityMatrix};

/// Time stepper for the master equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LindbladScheme {
    /// Classical fixed-step RK4 on the full right-hand side.
    #[default]
    Rk4,
    /// RK4 in the interaction picture of the dephasing term (Lawson's scheme).
    /// Dephasing factors `exp(-(gamma/2)(x_m - x_n)^2 t)` are applied exactly,
    /// which lifts the `dt ~ 1/(gamma S^2)` stability bound for large `S`.
    IntegratingFactorRk4,
}

#[derive(Debug, Clone, Copy)]
pub struct LindbladOptions {
    pub dt: f64,
    pub scheme: LindbladScheme,
    /// Keep the full density matrix at every grid time.
    pub keep_states: bool,
}

impl LindbladOptions {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            scheme: LindbladScheme::default(),
            keep_states: false,
        }
    }
}

/// Observable summary of a Lindblad run on the caller's time grid.
#[derive(Debug, Clone)]
pub struct DensityRecord {
    pub t: Vec<f64>,
    pub mx: Vec<f64>,
    pub my: Vec<f64>,
    pub mz: Vec<f64>,
    /// `tr(rho (m_a m_b + m_b m_a) / 2)`, indexed `[a][b]` in x, y, z order.
    pub second_moments: Vec<[[f64; 3]; 3]>,
    pub purity: Vec<f64>,
    /// Largest per-step trace correction applied since the previous grid time.
    pub trace_err: Vec<f64>,
    pub states: Option<Vec<DensityMatrix>>,
}

impl DensityRecord {
    pub fn mz2(&self) -> Vec<f64> {
        self.second_moments.iter().map(|m| m[2][2]).collect()
    }

    pub fn max_trace_drift(&self) -> f64 {
        self.trace_err.iter().cloned().fold(0.0, f64::max)
    }

    /// CSV with columns `t,mx,my,mz,purity,trace_err`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "# lindblad max_trace_drift={:.16e}",
            self.max_trace_drift()
        )?;
        writeln!(w, "t,mx,my,mz,purity,trace_err")?;
        for i in 0..self.t.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.t[i], self.mx[i], self.my[i], self.mz[i], self.purity[i], self.trace_err[i]
            )?;
        }
        Ok(())
    }
}

struct Observables {
    m: [CMatrix; 3],
    sym: [[CMatrix; 3]; 3],
}

impl Observables {
    fn new(model: &ModelSpec) -> Self {
        let ops = model.ops();
        let m = Axis::ALL.map(|a| ops.m(a).clone());
        let half = Complex64::new(0.5, 0.0);
        let sym = std::array::from_fn(|a| {
            std::array::from_fn(|b| (&m[a] * &m[b] + &m[b] * &m[a]) * half)
        });
        Self { m, sym }
    }

    fn push(&self, rec: &mut DensityRecord, t: f64, rho: &CMatrix, drift: f64) {
        let tr = |op: &CMatrix| trace_product(rho, op).re;
        rec.t.push(t);
        rec.mx.push(tr(&self.m[0]));
        rec.my.push(tr(&self.m[1]));
        rec.mz.push(tr(&self.m[2]));
        let mut sm = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in a..3 {
                sm[a][b] = tr(&self.sym[a][b]);
                sm[b][a] = sm[a][b];
            }
        }
        rec.second_moments.push(sm);
        rec.purity.push(rho.iter().map(|z| z.norm_sqr()).sum());
        rec.trace_err.push(drift);
    }
}

struct Rhs<'a> {
    model: &'a ModelSpec,
    /// `(gamma/2)(x_m - x_n)^2`
    dephasing: CMatrix,
    work: CMatrix,
}

impl<'a> Rhs<'a> {
    fn new(model: &'a ModelSpec) -> Self {
        let d = model.dim();
        let xs = model.x_diag();
        let g = 0.5 * model.gamma();
        let dephasing = CMatrix::from_fn(d, d, |m, n| {
            Complex64::new(g * (xs[m] - xs[n]).powi(2), 0.0)
        });
        Self {
            model,
            dephasing,
            work: CMatrix::zeros(d, d),
        }
    }

    /// `out = -i [H, rho]`
    fn hamiltonian_part(&mut self, rho: &CMatrix, out: &mut CMatrix) {
        self.model
            .hamiltonian_sparse()
            .mul_mat_into(rho, &mut self.work);
        let d = rho.nrows();
        for c in 0..d {
            for r in 0..d {
                let a = self.work[(r, c)];
                let b = self.work[(c, r)].conj();
                out[(r, c)] = -I * (a - b);
            }
        }
    }

    fn full(&mut self, rho: &CMatrix, out: &mut CMatrix) {
        self.hamiltonian_part(rho, out);
        for ((o, g), r) in out.iter_mut().zip(self.dephasing.iter()).zip(rho.iter()) {
            *o -= g * r;
        }
    }
}

/// `y += a x`
fn axpy(y: &mut CMatrix, a: Complex64, x: &CMatrix) {
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += a * xi;
    }
}

fn check_state(rho: &CMatrix, t: f64, dt: f64) -> Result<f64> {
    let tr = rho.trace();
    let drift = (tr - Complex64::new(1.0, 0.0)).norm();
    let bad_entry = rho
        .iter()
        .any(|z| !z.re.is_finite() || !z.im.is_finite() || z.norm() > 1.0 + 1e-6);
    if bad_entry || !(drift <= 1e-6) {
        return Err(Error::IntegrationFailure {
            t,
            reason: format!(
                "unstable Lindblad step (trace drift {drift:.3e}); reduce dt below {dt}"
            ),
        });
    }
    Ok(drift)
}

/// Integrates the master equation from `rho0` at `t_grid[0]` and records
/// observables at every grid time.
pub fn lindblad_evolve(
    model: &ModelSpec,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    options: &LindbladOptions,
) -> Result<DensityRecord> {
    if rho0.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: rho0.dim(),
        });
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid(
            "t_grid",
            "must be nonempty and strictly increasing",
        ));
    }
    if !(options.dt > 0.0) || !options.dt.is_finite() {
        return Err(invalid("dt", "must be positive"));
    }
    let d = model.dim();
    let obs = Observables::new(model);
    let mut rhs = Rhs::new(model);
    let mut rec = DensityRecord {
        t: Vec::with_capacity(t_grid.len()),
        mx: Vec::new(),
        my: Vec::new(),
        mz: Vec::new(),
        second_moments: Vec::new(),
        purity: Vec::new(),
        trace_err: Vec::new(),
        states: options.keep_states.then(Vec::new),
    };

    let mut rho = rho0.matrix().clone();
    obs.push(&mut rec, t_grid[0], &rho, 0.0);
    if let Some(states) = rec.states.as_mut() {
        states.push(DensityMatrix::from_raw(rho.clone()));
    }

    let mut k1 = CMatrix::zeros(d, d);
    let mut k2 = CMatrix::zeros(d, d);
    let mut k3 = CMatrix::zeros(d, d);
    let mut k4 = CMatrix::zeros(d, d);
    let mut stage = CMatrix::zeros(d, d);

    for w in t_grid.windows(2) {
        let span = w[1] - w[0];
        let n = (span / options.dt - 1e-9).ceil().max(1.0) as usize;
        let h = span / n as f64;
        let mut worst = 0.0f64;
        let (e_half, e_full) = match options.scheme {
            LindbladScheme::Rk4 => (None, None),
            LindbladScheme::IntegratingFactorRk4 => {
                let g = rhs
                    .dephasing
                    .map(|z| Complex64::new((-z.re * h * 0.5).exp(), 0.0));
                let g2 = g.map(|z| z * z);
                (Some(g), Some(g2))
            }
        };
        for j in 0..n {
            let t = w[0] + (j + 1) as f64 * h;
            match (&e_half, &e_full) {
                (Some(eh), Some(ef)) => {
                    // Lawson RK4 with E(s) = exp(-D s) applied elementwise
                    rhs.hamiltonian_part(&rho, &mut k1);
                    stage.copy_from(&rho);
                    axpy(&mut stage, Complex64::new(0.5 * h, 0.0), &k1);
                    stage.component_mul_assign(eh);
                    rhs.hamiltonian_part(&stage, &mut k2);
                    stage.copy_from(&rho);
                    stage.component_mul_assign(eh);
                    axpy(&mut stage, Complex64::new(0.5 * h, 0.0), &k2);
                    rhs.hamiltonian_part(&stage, &mut k3);
                    // stage = E(h) rho + h E(h/2) k3
                    let mut ek3 = k3.component_mul(eh);
                    ek3 *= Complex64::new(h, 0.0);
                    stage.copy_from(&rho);
                    stage.component_mul_assign(ef);
                    stage += &ek3;
                    rhs.hamiltonian_part(&stage, &mut k4);
                    // rho' = E(h) (rho + h/6 k1) + h/6 (2 E(h/2)(k2 + k3) + k4)
                    let c = Complex64::new(h / 6.0, 0.0);
                    axpy(&mut rho, c, &k1);
                    rho.component_mul_assign(ef);
                    k2 += &k3;
                    k2.component_mul_assign(eh);
                    axpy(&mut rho, c * 2.0, &k2);
                    axpy(&mut rho, c, &k4);
                }
                _ => {
                    let half = Complex64::new(0.5 * h, 0.0);
                    rhs.full(&rho, &mut k1);
                    stage.copy_from(&rho);
                    axpy(&mut stage, half, &k1);
                    rhs.full(&stage, &mut k2);
                    stage.copy_from(&rho);
                    axpy(&mut stage, half, &k2);
                    rhs.full(&stage, &mut k3);
                    stage.copy_from(&rho);
                    axpy(&mut stage, Complex64::new(h, 0.0), &k3);
                    rhs.full(&stage, &mut k4);
                    let c = Complex64::new(h / 6.0, 0.0);
                    axpy(&mut rho, c, &k1);
                    axpy(&mut rho, c * 2.0, &k2);
                    axpy(&mut rho, c * 2.0, &k3);
                    axpy(&mut rho, c, &k4);
                }
            }
            let drift = check_state(&rho, t, options.dt)?;
            let tr = rho.trace().re;
            rho.unscale_mut(tr);
            worst = worst.max(drift);
        }
        obs.push(&mut rec, w[1], &rho, worst);
        if let Some(states) = rec.states.as_mut() {
            states.push(DensityMatrix::from_raw(rho.clone()));
        }
    }
    Ok(rec)
}

/// `d<O>/dt = i<[H, O]> - (gamma/2)<[X, [X, O]]>` evaluated on stored states.
pub fn adjoint_lindblad_observable(
    model: &ModelSpec,
    op: &CMatrix,
    record: &DensityRecord,
) -> Result<Vec<f64>> {
    if op.nrows() != model.dim() || op.ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: op.nrows(),
        });
    }
    let states = record
        .states
        .as_ref()
        .ok_or_else(|| invalid("record", "density states were not kept (set keep_states)"))?;
    let hc = commutator(model.hamiltonian(), op) * I;
    let x = model.monitored();
    let xx = commutator(x, &commutator(x, op)) * Complex64::new(-0.5 * model.gamma(), 0.0);
    let gen = hc + xx;
    states
        .iter()
        .map(|rho| expectation_density(rho, &gen))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::spin_algebra::{coherent_state, CoherentAngles};
    use std::f64::consts::PI;

    fn grid(t_end: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
    }

    #[test]
    fn maximally_mixed_is_stationary() {
        let model = ModelSpec::new(6, 0.3, 0.5).unwrap();
        let rho0 = DensityMatrix::maximally_mixed(model.dim());
        let opts = LindbladOptions {
            keep_states: true,
            ..LindbladOptions::new(1e-2)
        };
        let rec = lindblad_evolve(&model, &rho0, &grid(5.0, 5), &opts).unwrap();
        for st in rec.states.unwrap() {
            assert!(max_abs(&(st.matrix() - rho0.matrix())) < 1e-13);
        }
    }

    #[test]
    fn unitary_limit_stays_pure() {
        let model = ModelSpec::new(8, 0.4, 0.0).unwrap();
        let psi = coherent_state(model.ops(), CoherentAngles::new(1.0, 0.2).unwrap());
        let rec = lindblad_evolve(
            &model,
            &DensityMatrix::from_pure(&psi),
            &grid(5.0, 10),
            &LindbladOptions::new(1e-3),
        )
        .unwrap();
        for p in rec.purity {
            assert!((p - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn schemes_agree() {
        let model = ModelSpec::new(8, 0.5, 0.1).unwrap();
        let psi = coherent_state(model.ops(), CoherentAngles::new(PI / 2.0, 0.0).unwrap());
        let rho0 = DensityMatrix::from_pure(&psi);
        let g = grid(4.0, 8);
        let a = lindblad_evolve(&model, &rho0, &g, &LindbladOptions::new(1e-3)).unwrap();
        let b = lindblad_evolve(
            &model,
            &rho0,
            &g,
            &LindbladOptions {
                scheme: LindbladScheme::IntegratingFactorRk4,
                ..LindbladOptions::new(1e-3)
            },
        )
        .unwrap();
        for i in 0..g.len() {
            assert!((a.mz[i] - b.mz[i]).abs() < 1e-9);
            assert!((a.mx[i] - b.mx[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn density_invariants_hold() {
        let model = ModelSpec::new(10, 0.3, 0.5).unwrap();
        let psi = coherent_state(model.ops(), CoherentAngles::new(2.0, -1.0).unwrap());
        let opts = LindbladOptions {
            keep_states: true,
            ..LindbladOptions::new(2e-3)
        };
        let rec = lindblad_evolve(
            &model,
            &DensityMatrix::from_pure(&psi),
            &grid(3.0, 6),
            &opts,
        )
        .unwrap();
        for (st, p) in rec.states.as_ref().unwrap().iter().zip(&rec.purity) {
            assert!((st.trace() - 1.0).abs() < 1e-8);
            assert!(st.min_eigenvalue() >= -1e-8);
            assert!(*p > 0.0 && *p <= 1.0 + 1e-8);
        }
    }

    #[test]
    fn too_large_step_is_detected() {
        let model = ModelSpec::new(16, 0.3, 5.0).unwrap();
        let psi = coherent_state(model.ops(), CoherentAngles::new(PI / 2.0, 0.0).unwrap());
        let err = lindblad_evolve(
            &model,
            &DensityMatrix::from_pure(&psi),
            &[0.0, 20.0],
            &LindbladOptions::new(0.5),
        )
        .unwrap_err();
        match err {
            Error::IntegrationFailure { reason, .. } => assert!(reason.contains("reduce dt")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn adjoint_identity_and_monitored_operator() {
        let model = ModelSpec::new(6, 0.5, 0.3).unwrap();
        let psi = coherent_state(model.ops(), CoherentAngles::new(1.3, 0.1).unwrap());
        let opts = LindbladOptions {
            keep_states: true,
            ..LindbladOptions::new(1e-3)
        };
        let rec = lindblad_evolve(
            &model,
            &DensityMatrix::from_pure(&psi),
            &grid(1.0, 4),
            &opts,
        )
        .unwrap();
        let id = CMatrix::identity(model.dim(), model.dim());
        for v in adjoint_lindblad_observable(&model, &id, &rec).unwrap() {
            assert!(v.abs() < 1e-12);
        }
        // for O = X the dissipator drops out: d<X>/dt = i<[H, X]>
        let x = model.monitored().clone();
        let with = adjoint_lindblad_observable(&model, &x, &rec).unwrap();
        let zero_gamma = model.with_params(0.5, 0.0).unwrap();
        let without = adjoint_lindblad_observable(&zero_gamma, &x, &rec).unwrap();
        for (a, b) in with.iter().zip(&without) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_matches_finite_difference() {
        let model = ModelSpec::new(8, 0.5, 0.1).unwrap();
        let psi = coherent_state(model.ops(), CoherentAngles::new(PI / 2.0, 0.0).unwrap());
        let rho0 = DensityMatrix::from_pure(&psi);
        let opts = LindbladOptions {
            keep_states: true,
            ..LindbladOptions::new(1e-4)
        };
        let mz = model.ops().m(Axis::Z).clone();
        let fd_h = 1e-3;
        for &t in &[0.5, 1.5, 3.0] {
            let rec = lindblad_evolve(&model, &rho0, &[0.0, t - fd_h, t, t + fd_h], &opts).unwrap();
            let fd = (rec.mz[3] - rec.mz[1]) / (2.0 * fd_h);
            let adj = adjoint_lindblad_observable(&model, &mz, &rec).unwrap()[2];
            assert!(
                (fd - adj).abs() <= 1e-4 * adj.abs().max(1e-2),
                "t={t}: {fd} vs {adj}"
            );
        }
    }

    #[test]
    fn csv_layout() {
        let model = ModelSpec::new(2, 0.5, 0.1).unwrap();
        let rec = lindblad_evolve(
            &model,
            &DensityMatrix::maximally_mixed(3),
            &[0.0, 0.1],
            &LindbladOptions::new(0.01),
        )
        .unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1), Some("t,mx,my,mz,purity,trace_err"));
        assert_eq!(text.lines().count(), 4);
    }
}
