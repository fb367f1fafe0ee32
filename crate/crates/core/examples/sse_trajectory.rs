//! One quantum trajectory of N = 32 spins started along +x, printed as a table.

use std::f64::consts::FRAC_PI_2;

use monitored_lmg::monitored_quantum::{sse_trajectory, ModelSpec, SseOptions};
use monitored_lmg::noise::NoiseStream;
use monitored_lmg::spin_algebra::{coherent_state, CoherentAngles};

fn main() -> monitored_lmg::Result<()> {
    let model = ModelSpec::new(32, 0.3, 0.2)?;
    let psi = coherent_state(model.ops(), CoherentAngles::new(FRAC_PI_2, 0.0)?);
    let opts = SseOptions::new(20.0, 1e-3, 0.5);
    let rec = sse_trajectory(&model, &psi, &opts, &mut NoiseStream::new(7, 0))?;

    println!("{:>6} {:>9} {:>9} {:>9}", "t", "<m_x>", "<m_y>", "<m_z>");
    for k in (0..rec.t.len()).step_by(4) {
        println!(
            "{:6.2} {:9.4} {:9.4} {:9.4}",
            rec.t[k], rec.mx[k], rec.my[k], rec.mz[k]
        );
    }
    println!(
        "max norm drift per step before renormalization: {:.2e}",
        rec.max_norm_drift()
    );
    Ok(())
}
