//! Averaging quantum trajectories reproduces the master equation.

use std::f64::consts::FRAC_PI_2;

use monitored_lmg::analysis::ensemble::{run_sse_ensemble, summarize_quantum, DEFAULT_EPSILON};
use monitored_lmg::monitored_quantum::{lindblad_evolve, LindbladOptions, ModelSpec, SseOptions};
use monitored_lmg::spin_algebra::{coherent_state, CoherentAngles, DensityMatrix};

fn main() -> monitored_lmg::Result<()> {
    let model = ModelSpec::new(8, 0.5, 0.1)?;
    let psi = coherent_state(model.ops(), CoherentAngles::new(FRAC_PI_2, 0.0)?);

    let records = run_sse_ensemble(&model, &psi, &SseOptions::new(5.0, 1e-3, 0.5), 500, 1)?;
    let summary = summarize_quantum(&records, DEFAULT_EPSILON)?;
    let rho = lindblad_evolve(
        &model,
        &DensityMatrix::from_pure(&psi),
        &summary.t,
        &LindbladOptions::new(1e-3),
    )?;

    println!(
        "{:>5} {:>10} {:>8} {:>10} {:>7} {:>8}",
        "t", "traj mean", "SE", "lindblad", "z", "purity"
    );
    for k in 0..summary.t.len() {
        let (mean, se) = (summary.mz.mean[k], summary.mz.se[k]);
        let z = if se > 0.0 {
            (mean - rho.mz[k]) / se
        } else {
            0.0
        };
        println!(
            "{:5.1} {mean:10.4} {se:8.4} {:10.4} {z:7.2} {:8.4}",
            summary.t[k], rho.mz[k], rho.purity[k]
        );
    }
    Ok(())
}
