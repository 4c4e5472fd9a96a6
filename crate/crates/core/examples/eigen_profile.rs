//! Stability eigenvalues along the Nishimori line for the three regimes of
//! the matrix mean: fully stable, unstable over a stretch of the line, and
//! unstable all the way into the fixed point. Writes the plot-ready CSV
//! next to a human summary.
//!
//! ```text
//! cargo run --release --example eigen_profile
//! ```

use ampse::experiment::{run_eigen_profile, ExperimentConfig, ExperimentKind};

fn main() -> ampse::Result<()> {
    let mut cfg = ExperimentConfig::for_experiment(ExperimentKind::EigenProfile);
    cfg.out_dir = "out/eigen_profile".into();

    let reports = run_eigen_profile(&cfg)?;
    println!("rho = {}, alpha = {}, delta = {:.0e}\n", cfg.rho, cfg.alpha, cfg.resolved_delta());
    for r in &reports {
        println!(
            "gamma = {:<4} sup|lambda_D| = {:>6.3}  |lambda_D| at fixed point = {:>6.3}  -> {:?}",
            r.gamma, r.sup_abs_lambda_d, r.fixed_point_abs_lambda_d, r.regime
        );
    }
    if let Some(first) = reports.first() {
        println!(
            "\ncritical means (independent of the profile gamma): gamma_c1 = {:.4}, gamma_c2 = {:.4}",
            first.gamma_c1, first.gamma_c2
        );
    }
    println!("profiles written to {}/eigen_profile.csv", cfg.out_dir.display());
    Ok(())
}
