//! The centering fix: AMP on a matrix with a large mean diverges, but
//! subtracting the empirical column means of `F` (and the grand mean of
//! `y`) maps the problem onto an equivalent zero-mean system that AMP
//! solves without trouble.
//!
//! ```text
//! cargo run --release --example mean_removal
//! ```

use ampse::amp::{self, AmpConfig};
use ampse::denoiser::Prior;
use ampse::instance::ProblemInstance;

fn main() -> ampse::Result<()> {
    let prior = Prior::new(0.1)?;
    let cfg = AmpConfig::default();

    let inst = ProblemInstance::generate(2000, 600, 10.0, 1e-10, &prior, 7)?;
    let raw = amp::run(&inst, &prior, &cfg);
    println!(
        "raw instance (gamma = 10):      {:?} after {:>4} iterations, final mse = {:.3e}",
        raw.status,
        raw.iterations(),
        raw.final_mse()
    );

    let centered = inst.mean_removed();
    let fixed = amp::run(&centered, &prior, &cfg);
    println!(
        "after mean removal:             {:?} after {:>4} iterations, final mse = {:.3e}",
        fixed.status,
        fixed.iterations(),
        fixed.final_mse()
    );

    // The transform touches only (F, y); the ground truth is unchanged and
    // the noiseless identity y' = F's holds to rounding.
    let worst_col_mean = centered
        .matrix()
        .col_means()
        .iter()
        .fold(0.0f64, |m, &c| m.max(c.abs()));
    println!("largest centered column mean:   {worst_col_mean:.2e}");
    Ok(())
}
