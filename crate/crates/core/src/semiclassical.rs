//! Thermodynamic-limit stochastic dynamics of the magnetization.
//!
//! On the unit sphere the state is `(m_z, phi)` with
//! `m_x = sqrt(1 - m_z^2) cos phi`, `m_y = sqrt(1 - m_z^2) sin phi`, and the Itô SDE
//!
//! ```text
//! dm_z = -2 (1 - m_z^2) sin(phi) cos(phi) dt + sqrt(gamma) (1 - m_z^2) dxi
//! dphi = 2 (-h + m_z cos(phi)^2) dt
//! ```
//!
//! The poles `m_z = +-1` are absorbing. A step that lands on or beyond a pole
//! is clamped there and the trajectory is flagged as absorbed.

use std::f64::consts::PI;
use std::io::{self, Write};

use crate::error::{invalid, Error, Result};
use crate::noise::{NoiseStream, GAUSSIAN_STREAM_ALGORITHM};

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can return exactly 2 pi after rounding
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector {
    pub mx: f64,
    pub my: f64,
    pub mz: f64,
}

impl BlochVector {
    pub fn new(mx: f64, my: f64, mz: f64) -> Self {
        Self { mx, my, mz }
    }

    pub fn norm_sq(&self) -> f64 {
        self.mx * self.mx + self.my * self.my + self.mz * self.mz
    }

    pub fn from_phase_point(p: PhasePoint) -> Self {
        let r = (1.0 - p.mz * p.mz).max(0.0).sqrt();
        Self {
            mx: r * p.phi.cos(),
            my: r * p.phi.sin(),
            mz: p.mz,
        }
    }

    /// Cylindrical coordinates of the direction of `self`.
    pub fn to_phase_point(&self) -> PhasePoint {
        let n = self.norm_sq().sqrt();
        PhasePoint {
            mz: (self.mz / n).clamp(-1.0, 1.0),
            phi: wrap_phase(self.my.atan2(self.mx)),
        }
    }
}

/// Point `(m_z, phi)` with `m_z` in `[-1, 1]` and `phi` in `[-pi, pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    mz: f64,
    phi: f64,
}

impl PhasePoint {
    pub fn new(mz: f64, phi: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&mz) {
            return Err(invalid("mz", format!("{mz} outside [-1, 1]")));
        }
        if !phi.is_finite() {
            return Err(invalid("phi", "must be finite"));
        }
        Ok(Self {
            mz,
            phi: wrap_phase(phi),
        })
    }

    pub fn mz(&self) -> f64 {
        self.mz
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum Absorption {
    #[default]
    None,
    Plus,
    Minus,
}

impl Absorption {
    pub fn is_absorbed(self) -> bool {
        self != Absorption::None
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Absorption::None => "none",
            Absorption::Plus => "plus",
            Absorption::Minus => "minus",
        }
    }

    fn of(mz: f64) -> Self {
        if mz >= 1.0 {
            Absorption::Plus
        } else if mz <= -1.0 {
            Absorption::Minus
        } else {
            Absorption::None
        }
    }
}

/// Result of one Cartesian step.
#[derive(Debug, Clone, Copy)]
pub struct CartesianStep {
    pub m: BlochVector,
    /// Distance moved by the projection back onto the sphere.
    pub projection: f64,
}

fn cartesian_increment(m: &BlochVector, h: f64, gamma: f64, dt: f64, dxi: f64) -> BlochVector {
    let sg = gamma.sqrt();
    BlochVector {
        mx: (2.0 * h * m.my - 0.5 * gamma * m.mx) * dt - sg * dxi * m.mz * m.mx,
        my: (-2.0 * h * m.mx + 2.0 * m.mx * m.mz - 0.5 * gamma * m.my) * dt
            - sg * dxi * m.mz * m.my,
        mz: -2.0 * m.mx * m.my * dt + sg * dxi * (1.0 - m.mz * m.mz),
    }
}

/// Euler–Maruyama step of the Cartesian SDE followed by projection onto the unit sphere.
pub fn sde_step_cartesian(
    m: BlochVector,
    h: f64,
    gamma: f64,
    dt: f64,
    dxi: f64,
) -> Result<CartesianStep> {
    if (m.norm_sq() - 1.0).abs() > 1e-6 {
        return Err(invalid(
            "m",
            format!("|m|^2 = {} is off the unit sphere", m.norm_sq()),
        ));
    }
    let d = cartesian_increment(&m, h, gamma, dt, dxi);
    let raw = BlochVector::new(m.mx + d.mx, m.my + d.my, m.mz + d.mz);
    let n = raw.norm_sq().sqrt();
    if !n.is_finite() || n == 0.0 {
        return Err(Error::IntegrationFailure {
            t: f64::NAN,
            reason: "non-finite Bloch vector".into(),
        });
    }
    let out = BlochVector::new(raw.mx / n, raw.my / n, raw.mz / n);
    let projection =
        ((raw.mx - out.mx).powi(2) + (raw.my - out.my).powi(2) + (raw.mz - out.mz).powi(2)).sqrt();
    Ok(CartesianStep { m: out, projection })
}

/// Itô differential of `|m|^2` over one unprojected Cartesian step,
/// `2 m.dm + |sigma|^2 dt`, where `sigma dxi` is the noise part of `dm`.
/// `m` may be off the sphere.
pub fn modulus_drift_check(m: BlochVector, h: f64, gamma: f64, dt: f64, dxi: f64) -> f64 {
    let d = cartesian_increment(&m, h, gamma, dt, dxi);
    let sigma_sq =
        gamma * (m.mz * m.mz * (m.mx * m.mx + m.my * m.my) + (1.0 - m.mz * m.mz).powi(2));
    2.0 * (m.mx * d.mx + m.my * d.my + m.mz * d.mz) + sigma_sq * dt
}

/// Plain Euler–Maruyama change of `|m|^2`, which differs from the Itô
/// differential by `(dxi^2 - dt)` and higher-order terms.
pub fn modulus_step_change(m: BlochVector, h: f64, gamma: f64, dt: f64, dxi: f64) -> f64 {
    let d = cartesian_increment(&m, h, gamma, dt, dxi);
    BlochVector::new(m.mx + d.mx, m.my + d.my, m.mz + d.mz).norm_sq() - m.norm_sq()
}

/// Itô prediction `[gamma dt (m_z^2 - 1) - 2 m_z sqrt(gamma) dxi] (|m|^2 - 1)`.
pub fn modulus_drift_formula(m: BlochVector, gamma: f64, dt: f64, dxi: f64) -> f64 {
    (gamma * dt * (m.mz * m.mz - 1.0) - 2.0 * m.mz * gamma.sqrt() * dxi) * (m.norm_sq() - 1.0)
}

/// Raw cylindrical step on an unwrapped phase.
#[inline]
fn cylindrical_raw(
    mz: f64,
    phi: f64,
    h: f64,
    sqrt_gamma: f64,
    dt: f64,
    dxi: f64,
) -> (f64, f64, Absorption) {
    let q = 1.0 - mz * mz;
    let (s, c) = phi.sin_cos();
    let mz_new = mz - 2.0 * q * s * c * dt + sqrt_gamma * q * dxi;
    let phi_new = phi + 2.0 * (-h + mz * c * c) * dt;
    let a = Absorption::of(mz_new);
    match a {
        Absorption::Plus => (1.0, phi_new, a),
        Absorption::Minus => (-1.0, phi_new, a),
        Absorption::None => (mz_new, phi_new, a),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CylindricalStep {
    pub point: PhasePoint,
    pub absorbed: Absorption,
}

/// Euler–Maruyama step of the cylindrical SDE with clamp-and-absorb at the poles.
pub fn sde_step_cylindrical(
    p: PhasePoint,
    h: f64,
    gamma: f64,
    dt: f64,
    dxi: f64,
) -> CylindricalStep {
    if p.mz.abs() >= 1.0 {
        return CylindricalStep {
            point: p,
            absorbed: Absorption::of(p.mz),
        };
    }
    let (mz, phi, absorbed) = cylindrical_raw(p.mz, p.phi, h, gamma.sqrt(), dt, dxi);
    CylindricalStep {
        point: PhasePoint {
            mz,
            phi: wrap_phase(phi),
        },
        absorbed,
    }
}

/// Pure-noise dynamics `dm_z = sqrt(gamma) (1 - m_z^2) dxi` of the strong-monitoring limit.
/// `dt` only enters through the variance of `dxi`.
pub fn large_gamma_step(mz: f64, gamma: f64, _dt: f64, dxi: f64) -> (f64, Absorption) {
    if mz.abs() >= 1.0 {
        return (mz.signum(), Absorption::of(mz));
    }
    let next = mz + gamma.sqrt() * (1.0 - mz * mz) * dxi;
    match Absorption::of(next) {
        Absorption::Plus => (1.0, Absorption::Plus),
        Absorption::Minus => (-1.0, Absorption::Minus),
        Absorption::None => (next, Absorption::None),
    }
}

/// A single semiclassical run that can be advanced in chunks.
///
/// Continuing a walker with its own noise stream gives the same path as one
/// long run, which the stationary-state estimators rely on when they extend
/// `t_final`.
#[derive(Debug, Clone)]
pub struct Walker {
    pub mz: f64,
    /// Unwrapped phase.
    pub phi: f64,
    pub t: f64,
    pub absorbed: Absorption,
    pub absorption_time: Option<f64>,
    noise: NoiseStream,
}

impl Walker {
    pub fn new(initial: PhasePoint, noise: NoiseStream) -> Self {
        let absorbed = Absorption::of(initial.mz);
        Self {
            mz: initial.mz,
            phi: initial.phi,
            t: 0.0,
            absorbed,
            absorption_time: absorbed.is_absorbed().then_some(0.0),
            noise,
        }
    }

    pub fn trajectory_index(&self) -> u64 {
        self.noise.trajectory_index()
    }

    /// Takes `n_steps` steps of size `dt`, stopping early on absorption.
    /// The noise stream is consumed only for steps actually taken.
    pub fn advance(&mut self, n_steps: usize, h: f64, gamma: f64, dt: f64) {
        let sg = gamma.sqrt();
        let t0 = self.t;
        for k in 1..=n_steps {
            if self.absorbed.is_absorbed() {
                return;
            }
            let dxi = self.noise.increment(dt);
            let (mz, phi, a) = cylindrical_raw(self.mz, self.phi, h, sg, dt, dxi);
            self.mz = mz;
            self.phi = phi;
            self.t = t0 + k as f64 * dt;
            if a.is_absorbed() {
                self.absorbed = a;
                self.absorption_time = Some(self.t);
            }
        }
    }

    /// Same contract as [`Walker::advance`] for the pure-noise equation; `phi` is untouched.
    pub fn advance_large_gamma(&mut self, n_steps: usize, gamma: f64, dt: f64) {
        let t0 = self.t;
        for k in 1..=n_steps {
            if self.absorbed.is_absorbed() {
                return;
            }
            let dxi = self.noise.increment(dt);
            let (mz, a) = large_gamma_step(self.mz, gamma, dt, dxi);
            self.mz = mz;
            self.t = t0 + k as f64 * dt;
            if a.is_absorbed() {
                self.absorbed = a;
                self.absorption_time = Some(self.t);
            }
        }
    }

    /// Absorption status with the soft threshold `1 - |m_z| < eps` applied.
    pub fn settled(&self, eps: f64) -> Absorption {
        if self.absorbed.is_absorbed() {
            self.absorbed
        } else if 1.0 - self.mz.abs() < eps {
            if self.mz > 0.0 {
                Absorption::Plus
            } else {
                Absorption::Minus
            }
        } else {
            Absorption::None
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimulationOptions {
    pub t_final: f64,
    pub dt: f64,
    pub dt_record: f64,
}

impl SimulationOptions {
    pub fn new(t_final: f64, dt: f64, dt_record: f64) -> Self {
        Self {
            t_final,
            dt,
            dt_record,
        }
    }

    pub(crate) fn grid(&self) -> Result<(usize, usize)> {
        crate::monitored_quantum::sse::step_grid(self.t_final, self.dt, self.dt_record)
    }
}

#[derive(Debug, Clone)]
pub struct SemiclassicalTrajectory {
    pub trajectory_index: u64,
    pub t: Vec<f64>,
    pub mz: Vec<f64>,
    /// Wrapped into `[-pi, pi)`.
    pub phi: Vec<f64>,
    pub phi_unwrapped: Vec<f64>,
    pub absorbed: Absorption,
    pub absorption_time: Option<f64>,
}

impl SemiclassicalTrajectory {
    pub fn final_mz(&self) -> f64 {
        *self.mz.last().expect("trajectory has at least one sample")
    }

    /// CSV with columns `t,mz,phi,absorbed`; `absorbed` is 1 from the absorption time on.
    pub fn write_csv<W: Write>(&self, mut w: W, base_seed: u64) -> io::Result<()> {
        writeln!(w, "# gaussian_stream={GAUSSIAN_STREAM_ALGORITHM}")?;
        writeln!(
            w,
            "# base_seed={base_seed} trajectory_index={} absorbed={}",
            self.trajectory_index,
            self.absorbed.as_str()
        )?;
        writeln!(w, "t,mz,phi,absorbed")?;
        for i in 0..self.t.len() {
            let flag = match self.absorption_time {
                Some(ta) if self.t[i] >= ta => 1,
                _ => 0,
            };
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{}",
                self.t[i], self.mz[i], self.phi[i], flag
            )?;
        }
        Ok(())
    }
}

/// Chained cylindrical steps recorded every `dt_record`. After absorption the
/// state is frozen at the barrier and the remaining grid is filled with it.
pub fn simulate_trajectory(
    initial: PhasePoint,
    h: f64,
    gamma: f64,
    options: &SimulationOptions,
    noise: NoiseStream,
) -> Result<SemiclassicalTrajectory> {
    if !h.is_finite() {
        return Err(invalid("h", "must be finite"));
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(invalid("gamma", format!("{gamma} must be finite and >= 0")));
    }
    let (n_steps, stride) = options.grid()?;
    let mut walker = Walker::new(initial, noise);
    let mut out = SemiclassicalTrajectory {
        trajectory_index: walker.trajectory_index(),
        t: vec![0.0],
        mz: vec![initial.mz],
        phi: vec![initial.phi],
        phi_unwrapped: vec![initial.phi],
        absorbed: walker.absorbed,
        absorption_time: walker.absorption_time,
    };
    let mut done = 0;
    while done < n_steps {
        let chunk = stride.min(n_steps - done);
        walker.advance(chunk, h, gamma, options.dt);
        done += chunk;
        if !walker.mz.is_finite() || !walker.phi.is_finite() {
            return Err(Error::IntegrationFailure {
                t: walker.t,
                reason: "non-finite semiclassical state".into(),
            });
        }
        out.t.push(done as f64 * options.dt);
        out.mz.push(walker.mz);
        out.phi.push(wrap_phase(walker.phi));
        out.phi_unwrapped.push(walker.phi);
    }
    out.absorbed = walker.absorbed;
    out.absorption_time = walker.absorption_time;
    Ok(out)
}
