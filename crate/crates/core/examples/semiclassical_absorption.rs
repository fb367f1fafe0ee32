//! Infinite-N trajectories end on one of the two poles. Below the critical
//! rate almost all of them fall to the south pole.

use monitored_lmg::analysis::ensemble::{
    p_plus, run_semiclassical_ensemble, summarize_semiclassical, DEFAULT_EPSILON,
};
use monitored_lmg::analysis::phase::gamma_critical;
use monitored_lmg::semiclassical::{PhasePoint, SimulationOptions};

fn main() -> monitored_lmg::Result<()> {
    let h = 0.3;
    let gc = gamma_critical(h).value;
    println!("h = {h}, critical rate {gc:.4}");
    let start = PhasePoint::new(0.0, 0.0)?;
    for gamma in [0.5 * gc, 2.0 * gc] {
        let opts = SimulationOptions::new(60.0, 1e-3, 1.0);
        let runs = run_semiclassical_ensemble(start, h, gamma, &opts, 400, 11)?;
        let summary = summarize_semiclassical(&runs, DEFAULT_EPSILON)?;
        let c = summary.counts;
        match p_plus(&summary) {
            Ok(p) => println!(
                "gamma = {gamma:.3}: +1 {} / -1 {} / open {}, p_plus = {:.3} +- {:.3}",
                c.plus, c.minus, c.unabsorbed, p.estimate, p.se
            ),
            Err(e) => println!("gamma = {gamma:.3}: {e}"),
        }
    }
    Ok(())
}
