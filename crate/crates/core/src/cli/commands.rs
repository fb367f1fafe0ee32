use std::io::{self, Write};

use serde_json::json;

use crate::analysis::diagnostics::{crossing_time, factorization_gap};
use crate::analysis::ensemble::{
    p_plus, run_semiclassical_ensemble, run_sse_ensemble, summarize_quantum_binned,
    summarize_semiclassical_binned, EnsembleSummary,
};
use crate::analysis::fokker_planck::{fokker_planck_p_plus, large_gamma_snapshots};
use crate::analysis::phase::{
    detected, gamma_critical, phase_diagram_sweep, run_stationary_ensemble, Dynamics,
    StationaryOptions, SweepConfig,
};
use crate::classical_flow::{
    classify_orbit, hamiltonian_flow, min_energy, orbit_average_mx, orbit_period, separatrix_curve,
    write_separatrix_csv, EnergyLevel, OrbitClass,
};
use crate::error::Error;
use crate::monitored_quantum::{
    lindblad_evolve, sse_trajectory, LindbladOptions, ModelSpec, SseOptions,
};
use crate::noise::NoiseStream;
use crate::semiclassical::{simulate_trajectory, PhasePoint, SimulationOptions};
use crate::spin_algebra::{coherent_state, CoherentAngles, DensityMatrix, PureState};

use super::config::{ConfigError, RunConfig, SystemSize};
use super::{CliError, Command, Outcome, Outputs};

type CmdResult = Result<Outcome, CliError>;

pub(super) fn dispatch(cmd: &Command, cfg: &RunConfig, out: &mut Outputs) -> CmdResult {
    match cmd {
        Command::Trajectory(_) => trajectory(cfg, out),
        Command::Ensemble(_) => ensemble(cfg, out),
        Command::Lindblad(_) => lindblad(cfg, out),
        Command::Compare(_) => compare(cfg, out),
        Command::Sweep(_) => sweep(cfg, out),
        Command::Flow(_) => flow(cfg, out),
        Command::Oracle(_) => oracle(cfg, out),
    }
}

fn require_particles(cfg: &RunConfig, what: &str) -> Result<usize, CliError> {
    match cfg.n {
        SystemSize::Particles(n) => Ok(n),
        SystemSize::Semiclassical => Err(ConfigError {
            key: "n".into(),
            reason: format!("{what} needs a particle number"),
        }
        .into()),
    }
}

fn quantum_setup(cfg: &RunConfig, n: usize) -> Result<(ModelSpec, PureState), CliError> {
    let model = ModelSpec::new(n, cfg.h, cfg.gamma)?;
    let angles = CoherentAngles::from_mz_phi(cfg.mz, cfg.phi)?;
    let psi = coherent_state(model.ops(), angles);
    Ok((model, psi))
}

fn sse_options(cfg: &RunConfig) -> SseOptions {
    SseOptions {
        scheme: cfg.sse_scheme,
        ..SseOptions::new(cfg.t_final, cfg.dt, cfg.dt_record)
    }
}

fn start_point(cfg: &RunConfig) -> Result<PhasePoint, CliError> {
    Ok(PhasePoint::new(cfg.mz, cfg.phi)?)
}

fn trajectory(cfg: &RunConfig, out: &mut Outputs) -> CmdResult {
    let mut outcome = Outcome::default();
    match cfg.n {
        SystemSize::Particles(n) => {
            let (model, psi) = quantum_setup(cfg, n)?;
            let rec = sse_trajectory(
                &model,
                &psi,
                &sse_options(cfg),
                &mut NoiseStream::new(cfg.base_seed, 0),
            )?;
            out.write_with("trajectory.csv", |w| rec.write_csv(w, cfg.base_seed))?;
            outcome.diag("max_norm_drift", rec.max_norm_drift());
        }
        SystemSize::Semiclassical => {
            let opts = SimulationOptions::new(cfg.t_final, cfg.dt, cfg.dt_record);
            let tr = simulate_trajectory(
                start_point(cfg)?,
                cfg.h,
                cfg.gamma,
                &opts,
                NoiseStream::new(cfg.base_seed, 0),
            )?;
            out.write_with("trajectory.csv", |w| tr.write_csv(w, cfg.base_seed))?;
            outcome.diag("absorbed", tr.absorbed.as_str());
            outcome.diag("absorption_time", json!(tr.absorption_time));
        }
    }
    Ok(outcome)
}

fn write_summary(out: &mut Outputs, s: &EnsembleSummary) -> io::Result<()> {
    out.write_with("moments.csv", |w| s.write_moments_csv(w))?;
    out.write_with("histogram.csv", |w| s.write_histogram_csv(w))
}

fn ensemble(cfg: &RunConfig, out: &mut Outputs) -> CmdResult {
    let mut outcome = Outcome::default();
    let summary = match cfg.n {
        SystemSize::Particles(n) => {
            let (model, psi) = quantum_setup(cfg, n)?;
            let recs = run_sse_ensemble(&model, &psi, &sse_options(cfg), cfg.m, cfg.base_seed)?;
            let drift = recs.iter().map(|r| r.max_norm_drift()).fold(0.0, f64::max);
            outcome.diag("max_norm_drift", drift);
            summarize_quantum_binned(&recs, cfg.epsilon, cfg.histogram_bins)?
        }
        SystemSize::Semiclassical => {
            let opts = SimulationOptions::new(cfg.t_final, cfg.dt, cfg.dt_record);
            let runs = run_semiclassical_ensemble(
                start_point(cfg)?,
                cfg.h,
                cfg.gamma,
                &opts,
                cfg.m,
                cfg.base_seed,
            )?;
            let s = summarize_semiclassical_binned(&runs, cfg.epsilon, cfg.histogram_bins)?;
            match p_plus(&s) {
                Ok(p) => {
                    outcome.diag("p_plus", p.estimate);
                    outcome.diag("p_plus_err", p.se);
                    outcome.diag("p_plus_mean_based", p.mean_based);
                    outcome.diag("p_plus_mean_based_err", p.mean_based_se);
                }
                Err(Error::Inconclusive { .. }) => outcome.inconclusive = true,
                Err(e) => return Err(e.into()),
            }
            s
        }
    };
    write_summary(out, &summary)?;
    outcome.diag("trajectories", summary.trajectories);
    outcome.diag("absorbed_plus", summary.counts.plus);
    outcome.diag("absorbed_minus", summary.counts.minus);
    outcome.diag("unabsorbed_fraction", summary.counts.unabsorbed_fraction());
    outcome.diag(
        "absorption_rule",
        format!("exact clamp, or 1 - |m_z| < {:e} at t_final", cfg.epsilon),
    );
    Ok(outcome)
}

fn record_grid(cfg: &RunConfig) -> Vec<f64> {
    let n = (cfg.t_final / cfg.dt_record).round() as usize;
    (0..=n).map(|k| k as f64 * cfg.dt_record).collect()
}

fn lindblad(cfg: &RunConfig, out: &mut Outputs) -> CmdResult {
    let n = require_particles(cfg, "lindblad")?;
    let (model, psi) = quantum_setup(cfg, n)?;
    let opts = LindbladOptions {
        scheme: cfg.lindblad_scheme,
        ..LindbladOptions::new(cfg.dt)
    };
    let rec = lindblad_evolve(
        &model,
        &DensityMatrix::from_pure(&psi),
        &record_grid(cfg),
        &opts,
    )?;
    out.write_with("density.csv", |w| rec.write_csv(w))?;
    let mut outcome = Outcome::default();
    outcome.diag("max_trace_drift", rec.max_trace_drift());
    outcome.diag("final_purity", *rec.purity.last().unwrap());
    outcome.diag("final_mz", *rec.mz.last().unwrap());
    Ok(outcome)
}

fn compare(cfg: &RunConfig, out: &mut Outputs) -> CmdResult {
    let n = require_particles(cfg, "compare")?;
    let (model, psi) = quantum_setup(cfg, n)?;
    let recs = run_sse_ensemble(&model, &psi, &sse_options(cfg), cfg.m, cfg.base_seed)?;
    let opts = SimulationOptions::new(cfg.t_final, cfg.dt, cfg.dt_record);
    let runs = run_semiclassical_ensemble(
        start_point(cfg)?,
        cfg.h,
        cfg.gamma,
        &opts,
        cfg.m,
        cfg.base_seed,
    )?;
    let q = summarize_quantum_binned(&recs, cfg.epsilon, cfg.histogram_bins)?;
    let c = summarize_semiclassical_binned(&runs, cfg.epsilon, cfg.histogram_bins)?;
    if q.t.len() != c.t.len() {
        return Err(Error::GridMismatch("finite-N and semiclassical grids differ".into()).into());
    }
    let distance: Vec<f64> = (0..q.t.len())
        .map(|k| {
            let d: Vec<f64> = recs
                .iter()
                .zip(&runs)
                .map(|(r, s)| (r.mz[k] - s.mz[k]).abs())
                .collect();
            crate::linalg::pairwise_sum(&d) / d.len() as f64
        })
        .collect();
    out.write_with("compare_means.csv", |w| {
        writeln!(w, "# base_seed={} matched noise: trajectory i of both ensembles shares stream i", cfg.base_seed)?;
        writeln!(w, "t,finite_mean_mz,finite_se_mz,semiclassical_mean_mz,semiclassical_se_mz,matched_distance")?;
        for k in 0..q.t.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                q.t[k], q.mz.mean[k], q.mz.se[k], c.mz.mean[k], c.mz.se[k], distance[k]
            )?;
        }
        Ok(())
    })?;
    let gap = factorization_gap(&recs)?;
    out.write_with("factorization.csv", |w| gap.write_csv(w))?;
    let mut outcome = Outcome::default();
    let t_star = crossing_time(&q.t, &c.mz.mean, &q.mz.mean, cfg.ehrenfest_threshold)?;
    outcome.diag("crossing_time", json!(t_star));
    outcome.diag(
        "max_matched_distance",
        distance.iter().cloned().fold(0.0, f64::max),
    );
    let per: Vec<f64> = gap.max_per_trajectory();
    outcome.diag(
        "mean_max_trajectory_gap",
        crate::analysis::stats::mean(&per),
    );
    outcome.diag("final_ensemble_gap", *gap.ensemble.last().unwrap());
    outcome.diag(
        "max_norm_drift",
        recs.iter().map(|r| r.max_norm_drift()).fold(0.0, f64::max),
    );
    Ok(outcome)
}

fn stationary_options(cfg: &RunConfig, dynamics: Dynamics) -> StationaryOptions {
    StationaryOptions {
        dt: cfg.dt,
        t_final: cfg.stationary_t_final,
        max_doublings: cfg.max_doublings,
        epsilon: cfg.epsilon,
        dynamics,
        ..Default::default()
    }
}

fn sweep(cfg: &RunConfig, out: &mut Outputs) -> CmdResult {
    let sc = SweepConfig {
        trajectories: cfg.m,
        base_seed: cfg.base_seed,
        initial_mz: cfg.mz,
        initial_phi: cfg.phi,
        stationary: stationary_options(cfg, Dynamics::Full),
    };
    let diagram = phase_diagram_sweep(&cfg.h_grid(), &cfg.gamma_grid(), &sc)?;
    out.write_with("phase_diagram.csv", |w| diagram.write_csv(w))?;
    out.write_with("gamma_critical.csv", |w| {
        // detected: first grid gamma whose p_plus clears the detection level
        writeln!(w, "h,gamma_c_theory,gamma_c_detected")?;
        for (ih, &h) in diagram.h.iter().enumerate() {
            let found = (0..diagram.gamma.len())
                .find(|&ig| detected(diagram.cell(ih, ig)))
                .map_or(f64::NAN, |ig| diagram.gamma[ig]);
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e}",
                h,
                gamma_critical(h).value,
                found
            )?;
        }
        Ok(())
    })?;
    let mut outcome = Outcome::default();
    let flagged = diagram.cells.iter().filter(|c| c.inconclusive).count();
    outcome.diag("inconclusive_cells", flagged);
    outcome.diag("cells", diagram.cells.len());
    outcome.cells = Some(diagram.cells);
    Ok(outcome)
}

fn flow(cfg: &RunConfig, out: &mut Outputs) -> CmdResult {
    let h = cfg.h;
    let mut outcome = Outcome::default();
    if h > 0.0 && h < 1.0 {
        let curve = separatrix_curve(h, 2000);
        out.write_with("separatrix.csv", |w| write_separatrix_csv(w, &curve))?;
    }
    let (lo, hi) = (min_energy(h), 2.0 * h);
    let mut rows = Vec::new();
    for k in 0..cfg.orbits {
        let e = lo + (hi - lo) * (k as f64 + 0.5) / cfg.orbits as f64;
        let level = EnergyLevel::new(e, h)?;
        let class = classify_orbit(level);
        if class == OrbitClass::Separatrix {
            continue;
        }
        let period = orbit_period(level, cfg.dt)?;
        let t_end = (period / cfg.dt_record).ceil().max(1.0) * cfg.dt_record;
        let tr = hamiltonian_flow(level.section_point(), h, t_end, cfg.dt, cfg.dt_record)?;
        let name = format!("orbit_{k:02}.csv");
        out.write_with(&name, |w| tr.write_csv(w))?;
        rows.push((
            k,
            e,
            class,
            period,
            orbit_average_mx(level, cfg.dt)?,
            tr.max_energy_drift(),
        ));
    }
    out.write_with("orbits.csv", |w| {
        writeln!(w, "orbit,energy,class,period,mean_mx,max_energy_drift")?;
        for (k, e, class, p, mx, d) in &rows {
            writeln!(w, "{k},{e:.16e},{class:?},{p:.16e},{mx:.16e},{d:.16e}")?;
        }
        Ok(())
    })?;
    let worst = rows.iter().map(|r| r.5).fold(0.0, f64::max);
    outcome.diag("max_energy_drift", worst);
    outcome.diag("orbits", rows.len());
    Ok(outcome)
}

fn oracle(cfg: &RunConfig, out: &mut Outputs) -> CmdResult {
    let snaps = large_gamma_snapshots(cfg.mz, cfg.gamma, &cfg.taus, cfg.m, cfg.dt, cfg.base_seed)?;
    let mut worst_ks = 0.0f64;
    let mut rows = Vec::new();
    for (k, tau) in cfg.taus.iter().enumerate() {
        let ks = snaps.ks_against_exact(k)?;
        worst_ks = worst_ks.max(ks.statistic);
        rows.push((
            *tau,
            snaps.t[k],
            ks.statistic,
            ks.p_value,
            snaps.mean(k),
            snaps.mean_se(k),
        ));
    }
    out.write_with("oracle.csv", |w| {
        writeln!(
            w,
            "# base_seed={} mz0={:?} gamma={:?}",
            cfg.base_seed, cfg.mz, cfg.gamma
        )?;
        writeln!(w, "tau,t,ks_statistic,ks_p_value,mean_mz,se_mz")?;
        for r in &rows {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.0, r.1, r.2, r.3, r.4, r.5
            )?;
        }
        Ok(())
    })?;
    let mut outcome = Outcome::default();
    outcome.diag("max_ks_statistic", worst_ks);
    outcome.diag("p_plus_exact", fokker_planck_p_plus(cfg.mz)?);
    let ens = run_stationary_ensemble(
        start_point(cfg)?,
        cfg.h,
        cfg.gamma,
        cfg.m,
        cfg.base_seed,
        &stationary_options(cfg, Dynamics::LargeGamma),
    )?;
    outcome.diag("unabsorbed_fraction", ens.counts.unabsorbed_fraction());
    match ens.p_plus() {
        Ok(p) => {
            outcome.diag("p_plus", p.estimate);
            outcome.diag("p_plus_err", p.se);
        }
        Err(Error::Inconclusive { .. }) => outcome.inconclusive = true,
        Err(e) => return Err(e.into()),
    }
    Ok(outcome)
}

/// Matplotlib script that plots every listed CSV, first column on the x axis.
pub(super) fn write_plot_script<W: Write>(w: &mut W, csvs: &[String]) -> io::Result<()> {
    writeln!(w, "import sys")?;
    writeln!(w, "import pandas as pd")?;
    writeln!(w, "import matplotlib.pyplot as plt")?;
    writeln!(w)?;
    writeln!(w, "FILES = {csvs:?}")?;
    writeln!(w)?;
    writeln!(w, "for name in FILES:")?;
    writeln!(w, "    df = pd.read_csv(name, comment='#')")?;
    writeln!(w, "    if name == 'histogram.csv':")?;
    writeln!(w, "        last = df[df.t == df.t.max()]")?;
    writeln!(w, "        plt.figure()")?;
    writeln!(
        w,
        "        plt.step(last.bin_left, last.mass, where='post')"
    )?;
    writeln!(w, "    elif name == 'phase_diagram.csv':")?;
    writeln!(
        w,
        "        grid = df.pivot(index='gamma', columns='h', values='p_plus')"
    )?;
    writeln!(w, "        plt.figure()")?;
    writeln!(
        w,
        "        plt.pcolormesh(grid.columns, grid.index, grid.values, shading='nearest')"
    )?;
    writeln!(w, "        plt.colorbar(label='p_plus')")?;
    writeln!(w, "    else:")?;
    writeln!(w, "        df.plot(x=df.columns[0])")?;
    writeln!(w, "    plt.title(name)")?;
    writeln!(w, "    plt.savefig(name.replace('.csv', '.png'), dpi=120)")?;
    writeln!(w, "if '--show' in sys.argv:")?;
    writeln!(w, "    plt.show()")?;
    Ok(())
}
