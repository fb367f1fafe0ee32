//! Locates the absorption transition at one field value with a small ensemble.

use monitored_lmg::analysis::phase::{extract_gamma_critical_range, gamma_critical, SweepConfig};

fn main() -> monitored_lmg::Result<()> {
    let h = 0.3;
    let theory = gamma_critical(h).value;
    let config = SweepConfig {
        trajectories: 300,
        base_seed: 4,
        ..Default::default()
    };
    let est = extract_gamma_critical_range(h, 0.2, 3.2, 4, &config, 0)?;
    println!("{:>8} {:>8} {:>8}", "gamma", "p_plus", "SE");
    for cell in &est.evaluated {
        println!(
            "{:8.4} {:8.4} {:8.4}",
            cell.gamma, cell.p_plus, cell.p_plus_err
        );
    }
    match est.gamma_c {
        Some(g) => println!(
            "detected {g:.4} (grid ratio {:.3}), theory {theory:.4}",
            est.resolution
        ),
        None => println!("no transition detected in the scan, theory {theory:.4}"),
    }
    Ok(())
}
