//! For gamma much larger than h the magnetization is a driftless martingale
//! with an exact Gaussian solution in s = atanh(m_z).

use monitored_lmg::analysis::fokker_planck::{fokker_planck_p_plus, large_gamma_snapshots};

fn main() -> monitored_lmg::Result<()> {
    let (mz0, gamma) = (0.5, 50.0);
    let taus = [0.5, 1.0, 2.0];
    let snaps = large_gamma_snapshots(mz0, gamma, &taus, 5000, 1e-5, 9)?;
    println!(
        "{:>5} {:>8} {:>8} {:>8} {:>8}",
        "tau", "mean", "SE", "KS D", "p"
    );
    for (k, tau) in taus.iter().enumerate() {
        let ks = snaps.ks_against_exact(k)?;
        println!(
            "{tau:5.1} {:8.4} {:8.4} {:8.4} {:8.3}",
            snaps.mean(k),
            snaps.mean_se(k),
            ks.statistic,
            ks.p_value
        );
    }
    println!(
        "exact absorption probability at +1: {:.3}",
        fokker_planck_p_plus(mz0)?
    );
    Ok(())
}
