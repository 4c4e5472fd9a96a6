//! Desk-scale success-rate sweep: the fraction of instances AMP solves as a
//! function of the matrix mean. The transition sits near the partial
//! instability threshold (about 2.2 at this sparsity) — far below the mean
//! where the whole line turns unstable.
//!
//! ```text
//! cargo run --release --example success_sweep
//! ```

use ampse::experiment::{run_success_sweep, ExperimentConfig, ExperimentKind};

fn main() -> ampse::Result<()> {
    let mut cfg = ExperimentConfig::for_experiment(ExperimentKind::SuccessSweep);
    cfg.n_list = Some(vec![500, 1000]);
    cfg.gamma_grid = Some((0..=10).map(|k| (2 * k) as f64 / 5.0).collect());
    cfg.trials = 20;
    cfg.out_dir = "out/success_sweep".into();

    let result = run_success_sweep(&cfg)?;
    println!(
        "rho = {}, alpha = {}, {} trials per point\n",
        cfg.rho, cfg.alpha, cfg.trials
    );
    for &n in &cfg.resolved_n_list() {
        println!("N = {n}:");
        for row in result.rows.iter().filter(|r| r.n == n) {
            let bar = "#".repeat((row.fraction * 30.0).round() as usize);
            println!(
                "  gamma = {:>4}  {:>5.2} +- {:<5.2} {bar}",
                row.gamma, row.fraction, row.stderr
            );
        }
    }
    println!(
        "\nsweep written to {}/success_sweep.csv",
        cfg.out_dir.display()
    );
    Ok(())
}
