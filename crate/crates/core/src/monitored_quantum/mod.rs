//! Exact finite-N dynamics of the monitored LMG model.
//!
//! The Hamiltonian is `H = -S_x^2 / S - 2 h S_z` and the monitored observable
//! is `X = S_z` with measurement rate `gamma`. Three descriptions are provided:
//! the homodyne stochastic Schrödinger equation ([`sse`]), its ensemble average
//! governed by the Lindblad equation ([`lindblad`]) and the discrete two-outcome
//! ancilla model whose continuum limit is the SSE ([`kraus`]).

pub mod kraus;
pub mod lindblad;
pub mod sse;

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::linalg::{CMatrix, SparseMatrix};
use crate::spin_algebra::{Axis, CollectiveSpinOps};

pub use kraus::{discrete_monitoring_run, kraus_pair, DiscreteOptions, DiscreteRecord, KrausPair};
pub use lindblad::{
    adjoint_lindblad_observable, lindblad_evolve, DensityRecord, LindbladOptions, LindbladScheme,
};
pub use sse::{
    sse_step, sse_step_with_scheme, sse_trajectory, SseOptions, SseStep, TrajectoryRecord,
    UnitaryScheme,
};

/// Model parameters together with the operators every solver needs.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    h: f64,
    gamma: f64,
    ops: CollectiveSpinOps,
    hamiltonian: CMatrix,
    h_sparse: SparseMatrix,
    mx_sparse: SparseMatrix,
    my_sparse: SparseMatrix,
    /// Eigenvalues of `X = S_z` in basis order.
    x_diag: Vec<f64>,
}

impl ModelSpec {
    pub fn new(n: usize, h: f64, gamma: f64) -> Result<Self> {
        if !h.is_finite() {
            return Err(invalid("h", "must be finite"));
        }
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(invalid("gamma", format!("{gamma} must be finite and >= 0")));
        }
        let ops = CollectiveSpinOps::new(n)?;
        let s = ops.spin();
        let sx = ops.s(Axis::X);
        let hamiltonian = (sx * sx) * Complex64::new(-1.0 / s, 0.0)
            + ops.s(Axis::Z) * Complex64::new(-2.0 * h, 0.0);
        let x_diag = (0..ops.dim()).map(|k| ops.m_value(k)).collect();
        Ok(Self {
            h,
            gamma,
            h_sparse: SparseMatrix::from_dense(&hamiltonian),
            mx_sparse: SparseMatrix::from_dense(ops.m(Axis::X)),
            my_sparse: SparseMatrix::from_dense(ops.m(Axis::Y)),
            hamiltonian,
            x_diag,
            ops,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn ops(&self) -> &CollectiveSpinOps {
        &self.ops
    }

    pub fn spin(&self) -> f64 {
        self.ops.spin()
    }

    pub fn dim(&self) -> usize {
        self.ops.dim()
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    /// The monitored operator `X = S_z` as a dense matrix.
    pub fn monitored(&self) -> &CMatrix {
        self.ops.s(Axis::Z)
    }

    pub(crate) fn hamiltonian_sparse(&self) -> &SparseMatrix {
        &self.h_sparse
    }

    pub(crate) fn x_diag(&self) -> &[f64] {
        &self.x_diag
    }

    pub(crate) fn m_sparse(&self, axis: Axis) -> Option<&SparseMatrix> {
        match axis {
            Axis::X => Some(&self.mx_sparse),
            Axis::Y => Some(&self.my_sparse),
            Axis::Z => None,
        }
    }

    /// Same operators, different couplings.
    pub fn with_params(&self, h: f64, gamma: f64) -> Result<Self> {
        Self::new(self.ops.particles(), h, gamma)
    }
}

/// Observable snapshot of a pure state: `<m_x>, <m_y>, <m_z>, <m_z^2>`.
pub(crate) fn pure_observables(
    model: &ModelSpec,
    amps: &[Complex64],
    scratch: &mut [Complex64],
) -> [f64; 4] {
    let s = model.spin();
    let mut mz = 0.0;
    let mut mz2 = 0.0;
    for (a, x) in amps.iter().zip(model.x_diag()) {
        let p = a.norm_sqr();
        mz += p * x;
        mz2 += p * x * x;
    }
    let mut out = [0.0, 0.0, mz / s, mz2 / (s * s)];
    for (slot, axis) in [(0, Axis::X), (1, Axis::Y)] {
        let op = model.m_sparse(axis).expect("sparse m_x / m_y");
        op.mul_vec_into(amps, scratch);
        out[slot] = amps
            .iter()
            .zip(scratch.iter())
            .map(|(a, b)| (a.conj() * b).re)
            .sum();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{is_hermitian, max_abs};

    #[test]
    fn hamiltonian_is_hermitian_and_matches_definition() {
        let model = ModelSpec::new(6, 0.4, 0.2).unwrap();
        assert!(is_hermitian(model.hamiltonian(), 1e-14));
        let ops = model.ops();
        let cas = ops.casimir();
        let c = model.hamiltonian() * &cas - &cas * model.hamiltonian();
        assert!(max_abs(&c) < 1e-10);
        // diagonal element on |m=S>: -<S|Sx^2|S>/S - 2hS = -(S/2)/S - 2hS
        let s = 3.0;
        let want = -0.5 - 2.0 * 0.4 * s;
        assert!((model.hamiltonian()[(0, 0)].re - want).abs() < 1e-12);
        assert!(model.hamiltonian_sparse().nnz() <= 3 * model.dim());
    }

    #[test]
    fn rejects_negative_gamma() {
        let err = ModelSpec::new(4, 0.1, -1.0).unwrap_err();
        assert!(err.to_string().contains("gamma"));
    }
}
