//! Ancilla-based discrete monitoring and its continuum limit.

use monitored_lmg::monitored_quantum::{
    discrete_monitoring_run, kraus_pair, DiscreteOptions, ModelSpec,
};
use monitored_lmg::noise::OutcomeStream;
use monitored_lmg::spin_algebra::{coherent_state, CoherentAngles};

fn main() -> monitored_lmg::Result<()> {
    let model = ModelSpec::new(8, 0.5, 1.0)?;

    println!("{:>8} {:>14}", "dt", "|K+^K+ + K-^K- - 1|");
    for dt in [1e-2, 1e-3, 1e-4] {
        let pair = kraus_pair(&model, (1.0f64 / dt).sqrt(), dt)?;
        println!("{dt:8.0e} {:14.3e}", pair.completeness_residual().norm());
    }

    let psi = coherent_state(model.ops(), CoherentAngles::new(1.2, 0.4)?);
    let opts = DiscreteOptions::for_duration(2.0, 1e-3, 0.25)?;
    let rec = discrete_monitoring_run(&model, &psi, &opts, &mut OutcomeStream::new(3, 0), 0)?;
    println!("\nclicks: {} up, {} down", rec.n_plus, rec.n_minus);
    for (t, mz) in rec.trajectory.t.iter().zip(&rec.trajectory.mz) {
        println!("t = {t:4.2}  <m_z> = {mz:7.4}");
    }
    Ok(())
}
