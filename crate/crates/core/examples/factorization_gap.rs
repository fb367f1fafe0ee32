//! How far finite-N trajectories are from a product state, per trajectory and
//! for the averaged state.

use std::f64::consts::FRAC_PI_2;

use monitored_lmg::analysis::diagnostics::factorization_gap;
use monitored_lmg::analysis::ensemble::run_sse_ensemble;
use monitored_lmg::monitored_quantum::{ModelSpec, SseOptions};
use monitored_lmg::spin_algebra::{coherent_state, CoherentAngles};

fn main() -> monitored_lmg::Result<()> {
    let opts = SseOptions::new(10.0, 1e-3, 1.0);
    for n in [8, 32] {
        let model = ModelSpec::new(n, 0.3, 0.2)?;
        let psi = coherent_state(model.ops(), CoherentAngles::new(FRAC_PI_2, 0.0)?);
        let records = run_sse_ensemble(&model, &psi, &opts, 50, 5)?;
        let gap = factorization_gap(&records)?;
        println!("N = {n}");
        for k in (0..gap.t.len()).step_by(2) {
            println!(
                "  t = {:4.1}  trajectory gap {:.4}  ensemble gap {:.4}",
                gap.t[k], gap.trajectory_averaged[k], gap.ensemble[k]
            );
        }
    }
    Ok(())
}
