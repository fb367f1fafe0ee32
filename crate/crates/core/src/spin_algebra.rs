//! Collective spin operators and spin coherent states in the Dicke basis.
//!
//! The basis is the `S_z` eigenbasis of the maximal sector `S = N/2`, ordered
//! by descending magnetic quantum number: index `k` holds `m = S - k`.
//! All matrix dumps and amplitude vectors follow this ordering.

use std::io::{self, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::linalg::{trace_product, CMatrix, CVector};

/// Cartesian axis of the collective spin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
}

/// Dense `S_x, S_y, S_z` and the reduced magnetizations `m_a = S_a / S`.
#[derive(Debug, Clone)]
pub struct CollectiveSpinOps {
    n: usize,
    spin: f64,
    sx: CMatrix,
    sy: CMatrix,
    sz: CMatrix,
    mx: CMatrix,
    my: CMatrix,
    mz: CMatrix,
}

impl CollectiveSpinOps {
    /// Operators for `N` spin-1/2 particles in the `S = N/2` sector.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("N", "particle count must be at least 1"));
        }
        let spin = n as f64 / 2.0;
        let d = n + 1;
        let m_of = |k: usize| spin - k as f64;
        let cas = spin * (spin + 1.0);

        let mut sx = CMatrix::zeros(d, d);
        let mut sy = CMatrix::zeros(d, d);
        let mut sz = CMatrix::zeros(d, d);
        for k in 0..d {
            sz[(k, k)] = Complex64::new(m_of(k), 0.0);
        }
        // <m|S+|m-1> = sqrt(S(S+1) - m(m-1)); row k has m, row k+1 has m-1.
        for k in 0..d - 1 {
            let (m, mm1) = (m_of(k), m_of(k + 1));
            let c = (cas - m * mm1).max(0.0).sqrt();
            sx[(k, k + 1)] = Complex64::new(0.5 * c, 0.0);
            sx[(k + 1, k)] = Complex64::new(0.5 * c, 0.0);
            // S_y = (S+ - S-) / 2i
            sy[(k, k + 1)] = Complex64::new(0.0, -0.5 * c);
            sy[(k + 1, k)] = Complex64::new(0.0, 0.5 * c);
        }
        let inv = Complex64::new(1.0 / spin, 0.0);
        Ok(Self {
            n,
            spin,
            mx: &sx * inv,
            my: &sy * inv,
            mz: &sz * inv,
            sx,
            sy,
            sz,
        })
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    pub fn spin(&self) -> f64 {
        self.spin
    }

    pub fn dim(&self) -> usize {
        self.n + 1
    }

    /// Magnetic quantum number of basis index `k`.
    pub fn m_value(&self, k: usize) -> f64 {
        self.spin - k as f64
    }

    pub fn s(&self, axis: Axis) -> &CMatrix {
        match axis {
            Axis::X => &self.sx,
            Axis::Y => &self.sy,
            Axis::Z => &self.sz,
        }
    }

    pub fn m(&self, axis: Axis) -> &CMatrix {
        match axis {
            Axis::X => &self.mx,
            Axis::Y => &self.my,
            Axis::Z => &self.mz,
        }
    }

    pub fn casimir(&self) -> CMatrix {
        &self.sx * &self.sx + &self.sy * &self.sy + &self.sz * &self.sz
    }
}

/// Polar angles of a coherent state direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentAngles {
    theta: f64,
    phi: f64,
}

impl CoherentAngles {
    /// `theta` in [0, pi]; `phi` in [-pi, pi).
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=std::f64::consts::PI).contains(&theta) {
            return Err(invalid("theta", format!("{theta} outside [0, pi]")));
        }
        if !(-std::f64::consts::PI..std::f64::consts::PI).contains(&phi) {
            return Err(invalid("phi", format!("{phi} outside [-pi, pi)")));
        }
        Ok(Self { theta, phi })
    }

    /// Direction with `m_z = mz`, azimuth `phi` (wrapped into [-pi, pi)).
    pub fn from_mz_phi(mz: f64, phi: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&mz) {
            return Err(invalid("mz", format!("{mz} outside [-1, 1]")));
        }
        Self::new(mz.acos(), crate::semiclassical::wrap_phase(phi))
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }
}

/// Normalized pure state in the Dicke basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amps: CVector,
}

impl PureState {
    /// Normalizes `amps`; rejects zero or non-finite vectors.
    pub fn from_amplitudes(amps: CVector) -> Result<Self> {
        let norm = amps.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(invalid("amplitudes", "zero or non-finite norm"));
        }
        Ok(Self {
            amps: amps.unscale(norm),
        })
    }

    /// Basis vector with index `k` (`m = S - k`).
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut amps = CVector::zeros(dim);
        amps[k] = Complex64::new(1.0, 0.0);
        Self { amps }
    }

    pub(crate) fn from_normalized(amps: CVector) -> Self {
        Self { amps }
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }
}

/// Hermitian, positive semidefinite, unit-trace matrix in the Dicke basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    rho: CMatrix,
}

impl DensityMatrix {
    pub fn from_pure(psi: &PureState) -> Self {
        let a = psi.amplitudes();
        Self {
            rho: a * a.adjoint(),
        }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            rho: CMatrix::identity(dim, dim) * Complex64::new(1.0 / dim as f64, 0.0),
        }
    }

    /// Validates hermiticity and unit trace (tolerance 1e-8).
    pub fn from_matrix(rho: CMatrix) -> Result<Self> {
        if !crate::linalg::is_hermitian(&rho, 1e-8) {
            return Err(invalid("rho", "matrix is not Hermitian"));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
            return Err(invalid("rho", format!("trace {tr} differs from 1")));
        }
        Ok(Self { rho })
    }

    pub(crate) fn from_raw(rho: CMatrix) -> Self {
        Self { rho }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn purity(&self) -> f64 {
        // tr(rho^2) = sum |rho_mn|^2 for Hermitian rho
        self.rho.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h: DMatrix<Complex64> = (&self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Coherent spin state pointing along `angles`.
///
/// Amplitude on `|m>` is `sqrt(C(2S, S+m)) (e^{i phi} sin(theta/2))^{S-m} cos(theta/2)^{S+m}`,
/// evaluated in log space so that large `N` does not overflow.
pub fn coherent_state(ops: &CollectiveSpinOps, angles: CoherentAngles) -> PureState {
    let d = ops.dim();
    let n = ops.particles();
    let (sh, ch) = (0.5 * angles.theta()).sin_cos();
    // theta/2 lies in [0, pi/2], so both factors are non-negative
    let (ln_s, ln_c) = (sh.ln(), ch.ln());
    // ln C(n, j) accumulated incrementally; j = S + m = n - k
    let mut ln_binom = vec![0.0; n + 1];
    for j in 1..=n {
        ln_binom[j] = ln_binom[j - 1] + ((n - j + 1) as f64).ln() - (j as f64).ln();
    }
    let mut amps = CVector::zeros(d);
    for (k, amp) in amps.iter_mut().enumerate() {
        let down = k as f64; // S - m
        let up = (n - k) as f64; // S + m
        let mut ln_mag = 0.5 * ln_binom[n - k];
        if down > 0.0 {
            if sh == 0.0 {
                continue;
            }
            ln_mag += down * ln_s;
        }
        if up > 0.0 {
            if ch == 0.0 {
                continue;
            }
            ln_mag += up * ln_c;
        }
        *amp = Complex64::from_polar(ln_mag.exp(), down * angles.phi());
    }
    PureState::from_amplitudes(amps).expect("coherent state has unit norm")
}

fn real_part(z: Complex64, scale: f64) -> Result<f64> {
    if z.im.abs() > 1e-10 * scale.max(1.0) {
        return Err(invalid(
            "op",
            format!("expectation has imaginary residue {}", z.im),
        ));
    }
    Ok(z.re)
}

/// `<psi|op|psi>` for a Hermitian `op`.
pub fn expectation(state: &PureState, op: &CMatrix) -> Result<f64> {
    let a = state.amplitudes();
    if op.nrows() != a.len() || op.ncols() != a.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: op.nrows(),
        });
    }
    let z = a.dotc(&(op * a));
    real_part(z, crate::linalg::max_abs(op))
}

/// `tr(rho op)` for a Hermitian `op`.
pub fn expectation_density(rho: &DensityMatrix, op: &CMatrix) -> Result<f64> {
    if op.nrows() != rho.dim() || op.ncols() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: op.nrows(),
        });
    }
    real_part(trace_product(rho.matrix(), op), crate::linalg::max_abs(op))
}

/// `<m_a m_b + m_b m_a> - 2 <m_a><m_b>`.
pub fn connected_correlator(
    ops: &CollectiveSpinOps,
    state: &PureState,
    alpha: Axis,
    beta: Axis,
) -> Result<f64> {
    let (a, b) = (ops.m(alpha), ops.m(beta));
    let sym = a * b + b * a;
    Ok(expectation(state, &sym)? - 2.0 * expectation(state, a)? * expectation(state, b)?)
}

/// Writes a matrix as CSV rows of `re+imi` entries.
pub fn write_operator_csv<W: Write>(mut w: W, op: &CMatrix) -> io::Result<()> {
    writeln!(w, "# dicke basis, m descending")?;
    for r in 0..op.nrows() {
        let row: Vec<String> = (0..op.ncols())
            .map(|c| {
                let z = op[(r, c)];
                format!("{:.16e}{:+.16e}i", z.re, z.im)
            })
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{commutator, is_hermitian, max_abs, I};
    use std::f64::consts::PI;

    const GRID: [usize; 6] = [1, 2, 4, 8, 16, 64];

    #[test]
    fn rejects_zero_particles() {
        assert!(CollectiveSpinOps::new(0).is_err());
    }

    #[test]
    fn spin_one_sz_is_diagonal() {
        let ops = CollectiveSpinOps::new(2).unwrap();
        let expected = [1.0, 0.0, -1.0];
        for r in 0..3 {
            for c in 0..3 {
                let want = if r == c { expected[r] } else { 0.0 };
                assert_eq!(ops.s(Axis::Z)[(r, c)], Complex64::new(want, 0.0));
            }
        }
        let cas = ops.casimir();
        assert!(max_abs(&(cas - CMatrix::identity(3, 3) * Complex64::new(2.0, 0.0))) < 1e-12);
    }

    #[test]
    fn algebra_identities_over_grid() {
        for n in GRID {
            let ops = CollectiveSpinOps::new(n).unwrap();
            let s = ops.spin();
            let d = ops.dim();
            // [Sx, Sy] = i Sz and cyclic
            let pairs = [
                (Axis::X, Axis::Y, Axis::Z),
                (Axis::Y, Axis::Z, Axis::X),
                (Axis::Z, Axis::X, Axis::Y),
            ];
            for (a, b, c) in pairs {
                let lhs = commutator(ops.s(a), ops.s(b));
                let scale = s.max(1.0);
                assert!(max_abs(&(lhs - ops.s(c) * I)) < 1e-12 * scale, "N={n}");
                let red = commutator(ops.m(a), ops.m(b));
                assert!(max_abs(&(red - ops.m(c) * (I / s))) < 1e-12, "N={n}");
            }
            let cas = ops.casimir();
            let target = CMatrix::identity(d, d) * Complex64::new(s * (s + 1.0), 0.0);
            assert!(max_abs(&(cas - target)) < 1e-12 * s * s.max(1.0), "N={n}");
            for axis in Axis::ALL {
                assert!(is_hermitian(ops.s(axis), 0.0));
            }
        }
    }

    #[test]
    fn commutator_residual_n8() {
        let ops = CollectiveSpinOps::new(8).unwrap();
        let r = commutator(ops.s(Axis::X), ops.s(Axis::Y)) - ops.s(Axis::Z) * I;
        assert!(max_abs(&r) < 1e-12);
    }

    #[test]
    fn north_pole_is_first_basis_vector() {
        let ops = CollectiveSpinOps::new(6).unwrap();
        let psi = coherent_state(&ops, CoherentAngles::new(0.0, 0.3).unwrap());
        assert_eq!(psi, PureState::basis(7, 0));
        assert!((expectation(&psi, ops.s(Axis::Z)).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn south_pole_is_last_basis_vector() {
        let ops = CollectiveSpinOps::new(5).unwrap();
        let psi = coherent_state(&ops, CoherentAngles::new(PI, 0.0).unwrap());
        assert!((psi.amplitudes()[5].norm() - 1.0).abs() < 1e-12);
        assert!((expectation(&psi, ops.m(Axis::Z)).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn coherent_x_polarized_n8() {
        let ops = CollectiveSpinOps::new(8).unwrap();
        let psi = coherent_state(&ops, CoherentAngles::new(PI / 2.0, 0.0).unwrap());
        assert!((expectation(&psi, ops.s(Axis::X)).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn coherent_expectations_follow_direction() {
        for n in [1, 3, 8, 31] {
            let ops = CollectiveSpinOps::new(n).unwrap();
            for &(theta, phi) in &[(0.3, -2.0), (1.2, 0.7), (2.9, 3.0), (PI / 2.0, -PI)] {
                let ang = CoherentAngles::new(theta, phi).unwrap();
                let psi = coherent_state(&ops, ang);
                assert!((psi.norm() - 1.0).abs() < 1e-12);
                let nvec = ang.unit_vector();
                for (axis, want) in Axis::ALL.iter().zip(nvec) {
                    let got = expectation(&psi, ops.m(*axis)).unwrap();
                    assert!(
                        (got - want).abs() < 1e-12,
                        "N={n} {axis:?}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn coherent_state_is_top_eigenvector() {
        let ops = CollectiveSpinOps::new(16).unwrap();
        let ang = CoherentAngles::new(1.1, -0.4).unwrap();
        let [nx, ny, nz] = ang.unit_vector();
        let proj = ops.s(Axis::X) * Complex64::new(nx, 0.0)
            + ops.s(Axis::Y) * Complex64::new(ny, 0.0)
            + ops.s(Axis::Z) * Complex64::new(nz, 0.0);
        let psi = coherent_state(&ops, ang);
        let lhs = &proj * psi.amplitudes();
        let rhs = psi.amplitudes() * Complex64::new(ops.spin(), 0.0);
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn maximally_mixed_has_zero_magnetization() {
        let ops = CollectiveSpinOps::new(7).unwrap();
        let rho = DensityMatrix::maximally_mixed(ops.dim());
        assert!(expectation_density(&rho, ops.m(Axis::Z)).unwrap().abs() < 1e-15);
        assert!((rho.trace() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn expectation_rejects_dimension_mismatch() {
        let ops = CollectiveSpinOps::new(4).unwrap();
        let psi = PureState::basis(3, 0);
        assert!(matches!(
            expectation(&psi, ops.s(Axis::Z)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zz_correlator_is_exact_on_coherent_states() {
        for n in [2, 9, 40] {
            let ops = CollectiveSpinOps::new(n).unwrap();
            let s = ops.spin();
            let psi = coherent_state(&ops, CoherentAngles::new(0.8, 1.0).unwrap());
            let mz = expectation(&psi, ops.m(Axis::Z)).unwrap();
            let c = connected_correlator(&ops, &psi, Axis::Z, Axis::Z).unwrap();
            assert!((c - (1.0 - mz * mz) / s).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenstate_has_no_zz_fluctuation() {
        let ops = CollectiveSpinOps::new(10).unwrap();
        let psi = PureState::basis(11, 0);
        assert!(
            connected_correlator(&ops, &psi, Axis::Z, Axis::Z)
                .unwrap()
                .abs()
                < 1e-14
        );
    }

    #[test]
    fn xz_correlator_leading_order() {
        let ops = CollectiveSpinOps::new(200).unwrap();
        let s = ops.spin();
        let psi = coherent_state(&ops, CoherentAngles::new(1.0, 0.5).unwrap());
        let mx = expectation(&psi, ops.m(Axis::X)).unwrap();
        let mz = expectation(&psi, ops.m(Axis::Z)).unwrap();
        let c = connected_correlator(&ops, &psi, Axis::X, Axis::Z).unwrap();
        // residual is O(S^-2)
        assert!((c + mx * mz / s).abs() < 5.0 / (s * s));
    }

    #[test]
    fn operator_csv_has_header_and_rows() {
        let ops = CollectiveSpinOps::new(2).unwrap();
        let mut buf = Vec::new();
        write_operator_csv(&mut buf, ops.s(Axis::X)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# dicke basis, m descending");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1].split(',').count(), 3);
    }

    #[test]
    fn angle_ranges_enforced() {
        assert!(CoherentAngles::new(-0.1, 0.0).is_err());
        assert!(CoherentAngles::new(0.1, PI).is_err());
        assert!(CoherentAngles::new(PI, -PI).is_ok());
    }
}
