//! Critical matrix means versus sparsity at zero measurement noise. In the
//! regime where the uninformed recursion reaches exact recovery, the full
//! instability threshold is `1/sqrt(rho)` and neither threshold depends on
//! the undersampling ratio.
//!
//! ```text
//! cargo run --release --example threshold_curve
//! ```

use ampse::experiment::{run_threshold_curve, ExperimentConfig, ExperimentKind};

fn main() -> ampse::Result<()> {
    let mut cfg = ExperimentConfig::for_experiment(ExperimentKind::ThresholdCurve);
    cfg.rho_grid = Some(vec![0.02, 0.04, 0.06, 0.08, 0.1, 0.12, 0.14, 0.16]);
    cfg.out_dir = "out/threshold_curve".into();

    let rows = run_threshold_curve(&cfg)?;
    println!("alpha = {}, delta = 0\n", cfg.alpha);
    println!("{:>6} {:>10} {:>10} {:>12}", "rho", "gamma_c1", "gamma_c2", "1/sqrt(rho)");
    for (rho, g1, g2) in &rows {
        println!("{:>6} {:>10.4} {:>10.4} {:>12.4}", rho, g1, g2, 1.0 / rho.sqrt());
    }
    println!(
        "\ncurve written to {}/threshold_curve.csv",
        cfg.out_dir.display()
    );
    Ok(())
}
