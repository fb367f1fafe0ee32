//! Flat `key = value` run configuration.
//!
//! A file holds one `key = value` per line; `#` starts a comment. Flag
//! overrides are applied after the file. Every key is listed in [`KEYS`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::analysis::diagnostics::EHRENFEST_THRESHOLD;
use crate::analysis::ensemble::{DEFAULT_EPSILON, HISTOGRAM_BINS};
use crate::monitored_quantum::{LindbladScheme, UnitaryScheme};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config key `{key}`: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

fn err(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// `semiclassical` or a particle number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemSize {
    Semiclassical,
    Particles(usize),
}

impl fmt::Display for SystemSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemSize::Semiclassical => f.write_str("semiclassical"),
            SystemSize::Particles(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridScale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub h: f64,
    pub gamma: f64,
    pub n: SystemSize,
    /// Initial `m_z`; `theta` in a file or flag sets it to `cos(theta)`.
    pub mz: f64,
    pub phi: f64,
    pub dt: f64,
    pub dt_record: f64,
    pub t_final: f64,
    pub sse_scheme: UnitaryScheme,
    pub lindblad_scheme: LindbladScheme,
    pub m: usize,
    pub base_seed: u64,
    /// 0 selects the available parallelism.
    pub workers: usize,
    pub epsilon: f64,
    pub histogram_bins: usize,
    pub ehrenfest_threshold: f64,
    /// `None` selects `max(50, 20 / gamma)`.
    pub stationary_t_final: Option<f64>,
    pub max_doublings: u32,
    pub h_min: f64,
    pub h_max: f64,
    pub h_points: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_points: usize,
    pub gamma_scale: GridScale,
    pub orbits: usize,
    pub taus: Vec<f64>,
    pub out_dir: String,
    pub plot: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            h: 0.3,
            gamma: 0.25,
            n: SystemSize::Particles(16),
            mz: 0.0,
            phi: 0.0,
            dt: 1e-3,
            dt_record: 1e-2,
            t_final: 10.0,
            sse_scheme: UnitaryScheme::default(),
            lindblad_scheme: LindbladScheme::default(),
            m: 200,
            base_seed: 0,
            workers: 0,
            epsilon: DEFAULT_EPSILON,
            histogram_bins: HISTOGRAM_BINS,
            ehrenfest_threshold: EHRENFEST_THRESHOLD,
            stationary_t_final: None,
            max_doublings: 3,
            h_min: 0.02,
            h_max: 0.98,
            h_points: 20,
            gamma_min: 0.05,
            gamma_max: 2.0,
            gamma_points: 20,
            gamma_scale: GridScale::Linear,
            orbits: 8,
            taus: vec![0.5, 1.0, 2.0],
            out_dir: "lmg_out".into(),
            plot: false,
        }
    }
}

/// Recognized keys, in echo order. `theta` is accepted as input only.
pub const KEYS: &[&str] = &[
    "h",
    "gamma",
    "n",
    "mz",
    "phi",
    "dt",
    "dt_record",
    "t_final",
    "sse_scheme",
    "lindblad_scheme",
    "m",
    "base_seed",
    "workers",
    "epsilon",
    "histogram_bins",
    "ehrenfest_threshold",
    "stationary_t_final",
    "max_doublings",
    "h_min",
    "h_max",
    "h_points",
    "gamma_min",
    "gamma_max",
    "gamma_points",
    "gamma_scale",
    "orbits",
    "taus",
    "out_dir",
    "plot",
];

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| err(key, format!("cannot parse `{v}`")))
}

fn float(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = num(key, v)?;
    if !x.is_finite() {
        return Err(err(key, "must be finite"));
    }
    Ok(x)
}

fn float_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "h" => self.h = float(key, v)?,
            "gamma" => self.gamma = float(key, v)?,
            "n" => {
                self.n = if v.eq_ignore_ascii_case("semiclassical") || v.eq_ignore_ascii_case("inf")
                {
                    SystemSize::Semiclassical
                } else {
                    SystemSize::Particles(num(key, v)?)
                }
            }
            "mz" => self.mz = float(key, v)?,
            "theta" => self.mz = float(key, v)?.cos(),
            "phi" => self.phi = float(key, v)?,
            "dt" => self.dt = float(key, v)?,
            "dt_record" => self.dt_record = float(key, v)?,
            "t_final" => self.t_final = float(key, v)?,
            "sse_scheme" => {
                self.sse_scheme = match v {
                    "taylor4" => UnitaryScheme::Taylor4,
                    "euler" => UnitaryScheme::ExplicitEuler,
                    _ => return Err(err(key, "expected `taylor4` or `euler`")),
                }
            }
            "lindblad_scheme" => {
                self.lindblad_scheme = match v {
                    "rk4" => LindbladScheme::Rk4,
                    "integrating_factor" => LindbladScheme::IntegratingFactorRk4,
                    _ => return Err(err(key, "expected `rk4` or `integrating_factor`")),
                }
            }
            "m" => self.m = num(key, v)?,
            "base_seed" => self.base_seed = num(key, v)?,
            "workers" => self.workers = num(key, v)?,
            "epsilon" => self.epsilon = float(key, v)?,
            "histogram_bins" => self.histogram_bins = num(key, v)?,
            "ehrenfest_threshold" => self.ehrenfest_threshold = float(key, v)?,
            "stationary_t_final" => {
                self.stationary_t_final = if v == "auto" {
                    None
                } else {
                    Some(float(key, v)?)
                }
            }
            "max_doublings" => self.max_doublings = num(key, v)?,
            "h_min" => self.h_min = float(key, v)?,
            "h_max" => self.h_max = float(key, v)?,
            "h_points" => self.h_points = num(key, v)?,
            "gamma_min" => self.gamma_min = float(key, v)?,
            "gamma_max" => self.gamma_max = float(key, v)?,
            "gamma_points" => self.gamma_points = num(key, v)?,
            "gamma_scale" => {
                self.gamma_scale = match v {
                    "linear" => GridScale::Linear,
                    "log" => GridScale::Log,
                    _ => return Err(err(key, "expected `linear` or `log`")),
                }
            }
            "orbits" => self.orbits = num(key, v)?,
            "taus" => {
                self.taus = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| float(key, s.trim()))
                    .collect::<Result<_, _>>()?
            }
            "out_dir" => self.out_dir = v.to_string(),
            "plot" => self.plot = num(key, v)?,
            _ => return Err(err(key, "unknown key")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "h" => format!("{:?}", self.h),
            "gamma" => format!("{:?}", self.gamma),
            "n" => self.n.to_string(),
            "mz" => format!("{:?}", self.mz),
            "phi" => format!("{:?}", self.phi),
            "dt" => format!("{:?}", self.dt),
            "dt_record" => format!("{:?}", self.dt_record),
            "t_final" => format!("{:?}", self.t_final),
            "sse_scheme" => match self.sse_scheme {
                UnitaryScheme::Taylor4 => "taylor4".into(),
                UnitaryScheme::ExplicitEuler => "euler".into(),
            },
            "lindblad_scheme" => match self.lindblad_scheme {
                LindbladScheme::Rk4 => "rk4".into(),
                LindbladScheme::IntegratingFactorRk4 => "integrating_factor".into(),
            },
            "m" => self.m.to_string(),
            "base_seed" => self.base_seed.to_string(),
            "workers" => self.workers.to_string(),
            "epsilon" => format!("{:?}", self.epsilon),
            "histogram_bins" => self.histogram_bins.to_string(),
            "ehrenfest_threshold" => format!("{:?}", self.ehrenfest_threshold),
            "stationary_t_final" => self
                .stationary_t_final
                .map_or("auto".into(), |t| format!("{t:?}")),
            "max_doublings" => self.max_doublings.to_string(),
            "h_min" => format!("{:?}", self.h_min),
            "h_max" => format!("{:?}", self.h_max),
            "h_points" => self.h_points.to_string(),
            "gamma_min" => format!("{:?}", self.gamma_min),
            "gamma_max" => format!("{:?}", self.gamma_max),
            "gamma_points" => self.gamma_points.to_string(),
            "gamma_scale" => match self.gamma_scale {
                GridScale::Linear => "linear".into(),
                GridScale::Log => "log".into(),
            },
            "orbits" => self.orbits.to_string(),
            "taus" => float_list(&self.taus),
            "out_dir" => self.out_dir.clone(),
            "plot" => self.plot.to_string(),
            _ => return None,
        })
    }

    /// All keys with their resolved values, in [`KEYS`] order.
    pub fn pairs(&self) -> Vec<(String, String)> {
        KEYS.iter()
            .map(|k| (k.to_string(), self.get(k).expect("listed key")))
            .collect()
    }

    /// Text accepted by [`parse_config_str`].
    pub fn to_file_string(&self) -> String {
        self.pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check =
            |ok: bool, key: &str, reason: &str| if ok { Ok(()) } else { Err(err(key, reason)) };
        check(self.gamma >= 0.0, "gamma", "must be >= 0")?;
        if let SystemSize::Particles(n) = self.n {
            check(n >= 1, "n", "must be at least 1")?;
        }
        check(self.mz.abs() <= 1.0, "mz", "must lie in [-1, 1]")?;
        check(self.dt > 0.0, "dt", "must be positive")?;
        check(
            self.dt < self.dt_record,
            "dt",
            "must be smaller than dt_record",
        )?;
        check(
            self.dt_record <= self.t_final,
            "dt_record",
            "must not exceed t_final",
        )?;
        check(self.m >= 1, "m", "must be at least 1")?;
        check(
            self.epsilon > 0.0 && self.epsilon < 1.0,
            "epsilon",
            "must lie in (0, 1)",
        )?;
        check(
            self.histogram_bins >= 1,
            "histogram_bins",
            "must be at least 1",
        )?;
        check(
            self.ehrenfest_threshold.abs() < 1.0,
            "ehrenfest_threshold",
            "must lie in (-1, 1)",
        )?;
        if let Some(t) = self.stationary_t_final {
            check(t > 0.0, "stationary_t_final", "must be positive or `auto`")?;
        }
        check(self.h_points >= 1, "h_points", "must be at least 1")?;
        check(self.h_min <= self.h_max, "h_min", "must not exceed h_max")?;
        check(self.gamma_points >= 1, "gamma_points", "must be at least 1")?;
        check(self.gamma_min >= 0.0, "gamma_min", "must be >= 0")?;
        check(
            self.gamma_min <= self.gamma_max,
            "gamma_min",
            "must not exceed gamma_max",
        )?;
        if self.gamma_scale == GridScale::Log {
            check(
                self.gamma_min > 0.0,
                "gamma_min",
                "must be positive on a log grid",
            )?;
        }
        check(self.orbits >= 1, "orbits", "must be at least 1")?;
        check(
            self.taus.iter().all(|t| *t > 0.0),
            "taus",
            "must be positive",
        )?;
        check(
            self.taus.windows(2).all(|w| w[1] > w[0]),
            "taus",
            "must increase",
        )?;
        check(!self.out_dir.is_empty(), "out_dir", "must be nonempty")?;
        Ok(())
    }

    pub fn h_grid(&self) -> Vec<f64> {
        linear(self.h_min, self.h_max, self.h_points)
    }

    pub fn gamma_grid(&self) -> Vec<f64> {
        match self.gamma_scale {
            GridScale::Linear => linear(self.gamma_min, self.gamma_max, self.gamma_points),
            GridScale::Log => linear(self.gamma_min.ln(), self.gamma_max.ln(), self.gamma_points)
                .into_iter()
                .map(f64::exp)
                .collect(),
        }
    }
}

fn linear(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

/// Splits `key = value`, `key=value` or `--key=value`.
pub fn split_assignment(s: &str) -> Result<(String, String), ConfigError> {
    let body = s.trim().trim_start_matches("--");
    match body.split_once('=') {
        Some((k, v)) => Ok((k.trim().to_string(), v.trim().to_string())),
        None => Err(err(body, "expected key=value")),
    }
}

/// Parses file text on top of the defaults without validating.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = split_assignment(line)?;
        cfg.set(&k, &v)?;
    }
    Ok(cfg)
}

/// File values (if any), then `overrides` in order, then validation.
pub fn parse_config(
    file: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<RunConfig, ConfigError> {
    let mut cfg = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| err("config", format!("{}: {e}", p.display())))?;
            parse_config_str(&text)?
        }
        None => RunConfig::default(),
    };
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = parse_config_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn negative_gamma_names_the_key() {
        let e = parse_config(None, &[("gamma".into(), "-1".into())]).unwrap_err();
        assert_eq!(e.key, "gamma");
        assert!(e.to_string().contains("gamma"));
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "gamma = 0.1\n# comment\nh=0.4\n").unwrap();
        let cfg = parse_config(Some(&path), &[split_assignment("--gamma=0.25").unwrap()]).unwrap();
        assert_eq!(cfg.gamma, 0.25);
        assert_eq!(cfg.h, 0.4);
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = parse_config_str("gamme = 0.2").unwrap_err();
        assert_eq!(e.key, "gamme");
        assert!(parse_config_str("just text").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("theta", "1.1").unwrap();
        cfg.set("n", "semiclassical").unwrap();
        cfg.set("taus", "0.25, 3").unwrap();
        cfg.set("stationary_t_final", "120").unwrap();
        cfg.set("gamma", "0.1").unwrap();
        let again = parse_config_str(&cfg.to_file_string()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.pairs(), cfg.pairs());
    }

    #[test]
    fn grids() {
        let mut cfg = RunConfig::default();
        cfg.set("gamma_scale", "log").unwrap();
        cfg.set("gamma_min", "0.1").unwrap();
        cfg.set("gamma_max", "10").unwrap();
        cfg.set("gamma_points", "3").unwrap();
        let g = cfg.gamma_grid();
        assert!((g[1] - 1.0).abs() < 1e-12 && (g[2] - 10.0).abs() < 1e-12);
        assert_eq!(cfg.h_grid().len(), 20);
    }
}
