//! Unmonitored (`gamma = 0`) mean-field dynamics.
//!
//! The classical energy on the sphere is `H(m_z, phi) = -(1 - m_z^2) cos^2(phi) - 2 h m_z`
//! and the flow is `dm_z/dt = -dH/dphi`, `dphi/dt = dH/dm_z`. For `h < 1` the level
//! `H = -2h` through the pole separates librations (bounded `phi`) from rotations.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{self, Write};

use crate::error::{invalid, Error, Result};
use crate::semiclassical::PhasePoint;

const SEPARATRIX_TOL: f64 = 1e-12;
const ENERGY_DRIFT_LIMIT: f64 = 1e-4;

pub fn energy(mz: f64, phi: f64, h: f64) -> f64 {
    -(1.0 - mz * mz) * phi.cos().powi(2) - 2.0 * h * mz
}

pub fn hamiltonian_energy(p: PhasePoint, h: f64) -> f64 {
    energy(p.mz(), p.phi(), h)
}

/// Lowest classical energy: `-1 - h^2` for `|h| <= 1`, else `-2|h|`.
pub fn min_energy(h: f64) -> f64 {
    if h.abs() <= 1.0 {
        -1.0 - h * h
    } else {
        -2.0 * h.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrbitClass {
    Libration,
    Rotation,
    Separatrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLevel {
    e: f64,
    h: f64,
}

impl EnergyLevel {
    pub fn new(e: f64, h: f64) -> Result<Self> {
        if !(h >= 0.0) || !h.is_finite() {
            return Err(invalid("h", "must be finite and >= 0"));
        }
        let lo = min_energy(h);
        let hi = 2.0 * h;
        if !(e >= lo - SEPARATRIX_TOL && e <= hi + SEPARATRIX_TOL) {
            return Err(invalid(
                "E",
                format!("{e} outside the energy range [{lo}, {hi}] at h = {h}"),
            ));
        }
        Ok(Self { e, h })
    }

    pub fn energy(&self) -> f64 {
        self.e
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Point of the level on the `phi = 0` section, `m_z = h - sqrt(h^2 + 1 + E)`.
    pub fn section_point(&self) -> PhasePoint {
        let disc = (self.h * self.h + 1.0 + self.e).max(0.0);
        let mz = (self.h - disc.sqrt()).clamp(-1.0, 1.0);
        PhasePoint::new(mz, 0.0).expect("clamped section point")
    }
}

pub fn classify_orbit(level: EnergyLevel) -> OrbitClass {
    let (e, h) = (level.e, level.h);
    if h >= 1.0 {
        OrbitClass::Rotation
    } else if (e + 2.0 * h).abs() <= SEPARATRIX_TOL {
        OrbitClass::Separatrix
    } else if e < -2.0 * h {
        OrbitClass::Libration
    } else {
        OrbitClass::Rotation
    }
}

/// Upper branch of the separatrix, `m_z = 2h / cos^2(phi) - 1`, defined for `cos^2(phi) > h`.
pub fn separatrix_mz(phi: f64, h: f64) -> Option<f64> {
    if !(h > 0.0 && h < 1.0) {
        return None;
    }
    let c2 = phi.cos().powi(2);
    (c2 > h).then(|| 2.0 * h / c2 - 1.0)
}

/// `(phi, m_z)` samples of the separatrix on a uniform `phi` grid over `[-pi, pi)`.
pub fn separatrix_curve(h: f64, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| -PI + 2.0 * PI * k as f64 / n as f64)
        .filter_map(|phi| separatrix_mz(phi, h).map(|mz| (phi, mz)))
        .collect()
}

pub fn write_separatrix_csv<W: Write>(mut w: W, points: &[(f64, f64)]) -> io::Result<()> {
    writeln!(w, "phi,mz")?;
    for (phi, mz) in points {
        writeln!(w, "{phi:.16e},{mz:.16e}")?;
    }
    Ok(())
}

#[inline]
fn vector_field(mz: f64, phi: f64, h: f64) -> (f64, f64) {
    let (s, c) = phi.sin_cos();
    (-2.0 * (1.0 - mz * mz) * s * c, 2.0 * (mz * c * c - h))
}

#[inline]
fn rk4_step(mz: f64, phi: f64, h: f64, dt: f64) -> (f64, f64) {
    let (a1, b1) = vector_field(mz, phi, h);
    let (a2, b2) = vector_field(mz + 0.5 * dt * a1, phi + 0.5 * dt * b1, h);
    let (a3, b3) = vector_field(mz + 0.5 * dt * a2, phi + 0.5 * dt * b2, h);
    let (a4, b4) = vector_field(mz + dt * a3, phi + dt * b3, h);
    (
        mz + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
        phi + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
    )
}

fn check_step(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(invalid("dt", "must be positive"))
    }
}

fn drift_error(t: f64, drift: f64, dt: f64) -> Error {
    Error::IntegrationFailure {
        t,
        reason: format!(
            "energy drift {drift:.3e} exceeds {ENERGY_DRIFT_LIMIT:e}; reduce dt below {dt}"
        ),
    }
}

#[derive(Debug, Clone, Default)]
pub struct FlowTrajectory {
    pub t: Vec<f64>,
    pub mz: Vec<f64>,
    pub phi_unwrapped: Vec<f64>,
    pub energy: Vec<f64>,
}

impl FlowTrajectory {
    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.energy[0];
        self.energy
            .iter()
            .map(|e| (e - e0).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,mz,phi_unwrapped,energy")?;
        for i in 0..self.t.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.t[i], self.mz[i], self.phi_unwrapped[i], self.energy[i]
            )?;
        }
        Ok(())
    }
}

/// RK4 integration of Hamilton's equations, sampled every `dt_record`.
pub fn hamiltonian_flow(
    initial: PhasePoint,
    h: f64,
    t_final: f64,
    dt: f64,
    dt_record: f64,
) -> Result<FlowTrajectory> {
    let (n_steps, stride) = crate::monitored_quantum::sse::step_grid(t_final, dt, dt_record)?;
    let (mut mz, mut phi) = (initial.mz(), initial.phi());
    let e0 = energy(mz, phi, h);
    let mut out = FlowTrajectory::default();
    let push = |out: &mut FlowTrajectory, t: f64, mz: f64, phi: f64, e: f64| {
        out.t.push(t);
        out.mz.push(mz);
        out.phi_unwrapped.push(phi);
        out.energy.push(e);
    };
    push(&mut out, 0.0, mz, phi, e0);
    for k in 1..=n_steps {
        (mz, phi) = rk4_step(mz, phi, h, dt);
        let e = energy(mz, phi, h);
        let t = k as f64 * dt;
        let drift = (e - e0).abs();
        if !(drift <= ENERGY_DRIFT_LIMIT) {
            return Err(drift_error(t, drift, dt));
        }
        if k % stride == 0 {
            push(&mut out, t, mz, phi, e);
        }
    }
    Ok(out)
}

/// Root in `[t1, t2]` of the parabola through `(t0, g0), (t1, g1), (t2, g2)`,
/// where `g1` and `g2` bracket zero.
fn quadratic_crossing(t: [f64; 3], g: [f64; 3]) -> f64 {
    let linear = t[1] + (t[2] - t[1]) * g[1] / (g[1] - g[2]);
    let h = t[2] - t[1];
    if (t[1] - t[0] - h).abs() > 1e-12 * h {
        return linear;
    }
    // g(s) = g1 + b s + c s^2 with s = (t - t1) / h
    let b = 0.5 * (g[2] - g[0]);
    let c = 0.5 * (g[2] + g[0]) - g[1];
    if c.abs() < 1e-14 * (g[1].abs() + g[2].abs()) {
        return linear;
    }
    let disc = b * b - 4.0 * c * g[1];
    if disc < 0.0 {
        return linear;
    }
    let sq = disc.sqrt();
    for s in [(-b + sq) / (2.0 * c), (-b - sq) / (2.0 * c)] {
        if (-1e-9..=1.0 + 1e-9).contains(&s) {
            return t[1] + s * h;
        }
    }
    linear
}

/// Integrates from `start` until the unwrapped phase crosses one of `targets`
/// with `dphi/dt` of sign `direction`. Returns the interpolated crossing time
/// and the state at the step after it.
fn first_crossing(
    start: PhasePoint,
    h: f64,
    dt: f64,
    t_max: f64,
    targets: &[f64],
    direction: f64,
) -> Result<(f64, f64, f64)> {
    check_step(dt)?;
    let (mut mz, mut phi) = (start.mz(), start.phi());
    let e0 = energy(mz, phi, h);
    // the start lies on the section; g1 == 0 keeps it from counting
    let mut prev = (0.0, phi);
    let mut prev2 = (-dt, phi);
    let n_max = (t_max / dt).ceil() as u64;
    for k in 1..=n_max {
        (mz, phi) = rk4_step(mz, phi, h, dt);
        let t = k as f64 * dt;
        let drift = (energy(mz, phi, h) - e0).abs();
        if !(drift <= ENERGY_DRIFT_LIMIT) {
            return Err(drift_error(t, drift, dt));
        }
        let rate = vector_field(mz, phi, h).1;
        if rate * direction > 0.0 {
            for &target in targets {
                let (g1, g2) = (prev.1 - target, phi - target);
                if g1 != 0.0 && g1.signum() != g2.signum() {
                    let g0 = prev2.1 - target;
                    let tc = quadratic_crossing([prev2.0, prev.0, t], [g0, g1, g2]);
                    return Ok((tc, mz, phi));
                }
            }
        }
        prev2 = prev;
        prev = (t, phi);
    }
    Err(Error::IntegrationFailure {
        t: t_max,
        reason: "no return to the section within the time limit".into(),
    })
}

/// Period of the orbit on `level`, measured by return to the `phi = 0`
/// section with the starting sign of `dphi/dt`. Rotations return after the
/// phase has advanced by `2 pi`.
pub fn orbit_period(level: EnergyLevel, dt: f64) -> Result<f64> {
    Ok(orbit_return(level, dt)?.period)
}

#[derive(Debug, Clone, Copy)]
pub struct OrbitReturn {
    pub period: f64,
    pub start: PhasePoint,
    /// State one step past the return crossing.
    pub mz_after: f64,
    pub phi_after: f64,
}

pub fn orbit_return(level: EnergyLevel, dt: f64) -> Result<OrbitReturn> {
    if classify_orbit(level) == OrbitClass::Separatrix {
        return Err(invalid("E", "the separatrix has an infinite period"));
    }
    let start = level.section_point();
    if start.mz().abs() >= 1.0 {
        return Err(invalid("E", "level reduces to a pole"));
    }
    let rate = vector_field(start.mz(), 0.0, level.h).1;
    if rate == 0.0 {
        return Err(invalid("E", "level is a fixed point"));
    }
    let direction = rate.signum();
    // librations return to phi = 0, rotations to phi = -+2 pi
    let targets = match classify_orbit(level) {
        OrbitClass::Libration => vec![0.0],
        _ => vec![2.0 * PI * direction],
    };
    let (tc, mz_after, phi_after) = first_crossing(start, level.h, dt, 1e5, &targets, direction)?;
    Ok(OrbitReturn {
        period: tc,
        start,
        mz_after,
        phi_after,
    })
}

/// Time average of `m_x` over one period of the orbit.
pub fn orbit_average_mx(level: EnergyLevel, dt: f64) -> Result<f64> {
    let ret = orbit_return(level, dt)?;
    let n = (ret.period / dt).round().max(1.0) as usize;
    let step = ret.period / n as f64;
    let (mut mz, mut phi) = (ret.start.mz(), ret.start.phi());
    let mx = |mz: f64, phi: f64| (1.0 - mz * mz).max(0.0).sqrt() * phi.cos();
    let mut acc = 0.5 * mx(mz, phi);
    for k in 1..=n {
        (mz, phi) = rk4_step(mz, phi, level.h, step);
        acc += if k == n {
            0.5 * mx(mz, phi)
        } else {
            mx(mz, phi)
        };
    }
    Ok(acc / n as f64)
}

/// Asymptotic time `(-ln delta_z) / (4 sqrt(h (1 - h)))` to leave the
/// neighbourhood of the pole from distance `delta_z`.
pub fn escape_time(delta_z: f64, h: f64) -> Result<f64> {
    if !(delta_z > 0.0 && delta_z < 1.0) {
        return Err(invalid("delta_z", format!("{delta_z} outside (0, 1)")));
    }
    if !(h > 0.0 && h < 1.0) {
        return Err(invalid("h", format!("{h} outside (0, 1)")));
    }
    Ok(-delta_z.ln() / (4.0 * (h * (1.0 - h)).sqrt()))
}

/// Time for the flow started at `(1 - delta_z, pi/2)` to reach `phi = 0`.
pub fn measured_half_period(delta_z: f64, h: f64, dt: f64) -> Result<f64> {
    escape_time(delta_z, h)?;
    let start = PhasePoint::new(1.0 - delta_z, FRAC_PI_2)?;
    let t_max = 100.0 * (1.0 + escape_time(delta_z, h)?);
    Ok(first_crossing(start, h, dt, t_max, &[0.0], -1.0)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_plug_ins() {
        for h in [0.0, 0.3, 1.7] {
            assert_eq!(
                hamiltonian_energy(PhasePoint::new(0.0, 0.0).unwrap(), h),
                -1.0
            );
            for phi in [-2.0, 0.0, 1.0] {
                let e = hamiltonian_energy(PhasePoint::new(1.0, phi).unwrap(), h);
                assert!((e + 2.0 * h).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn minimum_energy_by_grid_search() {
        for h in [0.0, 0.2, 0.7, 1.0, 1.4, 3.0] {
            let mut best = f64::INFINITY;
            for i in 0..=2000 {
                let mz = -1.0 + 2.0 * i as f64 / 2000.0;
                for j in 0..64 {
                    best = best.min(energy(mz, PI * j as f64 / 64.0, h));
                }
            }
            assert!((best - min_energy(h)).abs() < 1e-5, "h={h}: {best}");
        }
        assert!(EnergyLevel::new(-1.2, 0.3).is_err());
    }

    #[test]
    fn classification_examples() {
        assert_eq!(
            classify_orbit(EnergyLevel::new(-1.0, 0.3).unwrap()),
            OrbitClass::Libration
        );
        assert_eq!(
            classify_orbit(EnergyLevel::new(-0.6, 0.3).unwrap()),
            OrbitClass::Separatrix
        );
        assert_eq!(
            classify_orbit(EnergyLevel::new(-0.5, 0.3).unwrap()),
            OrbitClass::Rotation
        );
        for e in [-3.0, -1.0, 0.0, 2.9] {
            assert_eq!(
                classify_orbit(EnergyLevel::new(e, 1.5).unwrap()),
                OrbitClass::Rotation
            );
        }
    }

    #[test]
    fn separatrix_geometry() {
        let h = 0.3;
        assert!((separatrix_mz(0.0, h).unwrap() - (2.0 * h - 1.0)).abs() < 1e-15);
        // cos^2 = 0.25 < h
        assert!(separatrix_mz(PI / 3.0, h).is_none());
        for (phi, mz) in separatrix_curve(h, 400) {
            assert!((energy(mz, phi, h) + 2.0 * h).abs() < 1e-12);
        }
        let mut buf = Vec::new();
        write_separatrix_csv(&mut buf, &separatrix_curve(h, 8)).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("phi,mz\n"));
    }

    #[test]
    fn libration_bounded_rotation_advances() {
        let h = 0.3;
        let lib = EnergyLevel::new(-1.0, h).unwrap();
        let tr = hamiltonian_flow(lib.section_point(), h, 30.0, 1e-3, 0.01).unwrap();
        assert!(tr.phi_unwrapped.iter().all(|p| p.abs() < FRAC_PI_2));
        let rot = EnergyLevel::new(0.0, h).unwrap();
        let period = orbit_period(rot, 1e-3).unwrap();
        let t_end = (period / 1e-4).round() * 1e-4;
        let tr = hamiltonian_flow(rot.section_point(), h, t_end, 1e-4, 1e-4).unwrap();
        let advance = tr.phi_unwrapped.last().unwrap() - tr.phi_unwrapped[0];
        assert!((advance.abs() - 2.0 * PI).abs() < 1e-2, "{advance}");
        assert!(tr.max_energy_drift() < 1e-10);
    }

    #[test]
    fn orbit_closes_after_one_period() {
        for (e, h) in [(-1.0, 0.3), (-0.3, 0.3), (0.5, 1.5)] {
            let lvl = EnergyLevel::new(e, h).unwrap();
            let period = orbit_period(lvl, 1e-4).unwrap();
            let start = lvl.section_point();
            let t_end = (period / 1e-4).round() * 1e-4;
            let tr = hamiltonian_flow(start, h, t_end, 1e-4, t_end).unwrap();
            let n = tr.t.len() - 1;
            let dmz = (tr.mz[n] - start.mz()).abs();
            let dphi = crate::semiclassical::wrap_phase(tr.phi_unwrapped[n] - start.phi()).abs();
            assert!(dmz.max(dphi) < 1e-3, "E={e} h={h}: {dmz} {dphi}");
        }
    }

    #[test]
    fn period_diverges_towards_separatrix() {
        let h = 0.3;
        let periods: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4]
            .iter()
            .map(|d| orbit_period(EnergyLevel::new(-2.0 * h - d, h).unwrap(), 1e-3).unwrap())
            .collect();
        assert!(periods.windows(2).all(|w| w[1] > w[0]), "{periods:?}");
        assert!(orbit_period(EnergyLevel::new(-0.6, h).unwrap(), 1e-3).is_err());
    }

    #[test]
    fn strong_field_period_is_precession() {
        // dphi/dt -> -2h, so phi advances 2 pi in pi/h
        let mut rel = Vec::new();
        for h in [10.0, 20.0, 40.0] {
            let p = orbit_period(EnergyLevel::new(-0.5, h).unwrap(), 1e-5).unwrap();
            rel.push((p - PI / h).abs() * h);
        }
        assert!(rel.windows(2).all(|w| w[1] < w[0]), "{rel:?}");
        assert!(rel[2] < 0.1);
    }

    #[test]
    fn mx_average_libration_vs_rotation() {
        let lib = orbit_average_mx(EnergyLevel::new(-1.0, 0.3).unwrap(), 1e-3).unwrap();
        assert!(lib > 0.3, "{lib}");
        let rot = orbit_average_mx(EnergyLevel::new(0.0, 1.5).unwrap(), 1e-4).unwrap();
        assert!(rot.abs() < 1e-3, "{rot}");
    }

    #[test]
    fn escape_time_formula() {
        assert!((escape_time((-10.0f64).exp(), 0.5).unwrap() - 5.0).abs() < 1e-12);
        let h = 0.3;
        let d = escape_time(1e-5, h).unwrap() - escape_time(1e-4, h).unwrap();
        assert!((d - 10f64.ln() / (4.0 * (h * (1.0 - h)).sqrt())).abs() < 1e-12);
        assert!(escape_time(0.0, h).is_err());
        assert!(escape_time(1e-3, 1.0).is_err());
    }

    #[test]
    fn half_period_grows_like_escape_time() {
        let h = 0.5;
        let a = measured_half_period(1e-4, h, 1e-4).unwrap();
        let b = measured_half_period(1e-5, h, 1e-4).unwrap();
        let want = escape_time(1e-5, h).unwrap() - escape_time(1e-4, h).unwrap();
        assert!(((b - a) - want).abs() < 0.03 * want, "{} vs {want}", b - a);
    }

    #[test]
    fn flow_rejects_too_coarse_steps() {
        let p = PhasePoint::new(0.9, 1.0).unwrap();
        let err = hamiltonian_flow(p, 0.3, 50.0, 0.5, 0.5).unwrap_err();
        assert!(err.to_string().contains("reduce dt"));
    }

    #[test]
    fn flow_csv_header() {
        let tr =
            hamiltonian_flow(PhasePoint::new(0.0, 0.0).unwrap(), 0.3, 0.1, 0.01, 0.05).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("t,mz,phi_unwrapped,energy"));
        assert_eq!(text.lines().count(), 4);
    }
}
