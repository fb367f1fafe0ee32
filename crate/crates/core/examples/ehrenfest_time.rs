//! The averaged state leaves the south pole later as the system grows, while
//! the infinite-N dynamics stays there forever.

use std::f64::consts::PI;

use monitored_lmg::analysis::diagnostics::{crossing_time, EHRENFEST_THRESHOLD};
use monitored_lmg::monitored_quantum::{
    lindblad_evolve, LindbladOptions, LindbladScheme, ModelSpec,
};
use monitored_lmg::spin_algebra::{coherent_state, CoherentAngles, DensityMatrix};

fn main() -> monitored_lmg::Result<()> {
    let grid: Vec<f64> = (0..=300).map(|k| k as f64 * 0.05).collect();
    let reference = vec![-1.0; grid.len()];
    for n in [10, 20, 40] {
        let model = ModelSpec::new(n, 0.3, 0.25)?;
        let psi = coherent_state(model.ops(), CoherentAngles::new(PI, 0.0)?);
        let opts = LindbladOptions {
            scheme: LindbladScheme::IntegratingFactorRk4,
            ..LindbladOptions::new(2e-3)
        };
        let rho = lindblad_evolve(&model, &DensityMatrix::from_pure(&psi), &grid, &opts)?;
        let t = crossing_time(&grid, &reference, &rho.mz, EHRENFEST_THRESHOLD)?;
        println!("N = {n:3}  <m_z> crosses {EHRENFEST_THRESHOLD} at t = {t:?}");
    }
    Ok(())
}
