//! Unmonitored phase space: orbit classes, periods and the slowdown near the separatrix.

use monitored_lmg::classical_flow::{
    classify_orbit, escape_time, hamiltonian_flow, measured_half_period, min_energy, orbit_period,
    separatrix_mz, EnergyLevel,
};
use monitored_lmg::semiclassical::PhasePoint;

fn main() -> monitored_lmg::Result<()> {
    let h = 0.3;
    println!("separatrix at h = {h}:");
    for phi in [0.0, 0.3, 0.6, 0.9, 1.2] {
        println!("  phi = {phi:.1}  m_z = {:?}", separatrix_mz(phi, h));
    }

    let (lo, hi) = (min_energy(h), 2.0 * h);
    for f in [0.1, 0.4, 0.6, 0.9] {
        let level = EnergyLevel::new(lo + f * (hi - lo), h)?;
        let period = orbit_period(level, 1e-3)?;
        println!(
            "E = {:7.4}  {:?}  period {period:.4}",
            level.energy(),
            classify_orbit(level)
        );
    }

    let flow = hamiltonian_flow(PhasePoint::new(0.2, 0.9)?, h, 50.0, 1e-3, 0.5)?;
    println!(
        "RK4 energy drift over t = 50: {:.2e}",
        flow.max_energy_drift()
    );

    println!("\nhalf period from distance dz below the north pole:");
    for dz in [1e-2, 1e-4, 1e-6] {
        let measured = measured_half_period(dz, h, 1e-4)?;
        println!(
            "  dz = {dz:.0e}  measured {measured:.4}  log law {:.4}",
            escape_time(dz, h)?
        );
    }
    Ok(())
}
