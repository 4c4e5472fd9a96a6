//! Instance dump/load for reproducibility audits: a one-line JSON header
//! (shape, matrix mean, noise, sparsity, seed) followed by the raw
//! little-endian matrix, signal, and measurement data.
//!
//! ```text
//! cargo run --release --example instance_io
//! ```

use ampse::denoiser::Prior;
use ampse::instance::{load_instance, save_instance, ProblemInstance};

fn main() -> ampse::Result<()> {
    let prior = Prior::new(0.25)?;
    let inst = ProblemInstance::generate(500, 150, 2.0, 1e-8, &prior, 99)?;

    let dir = std::env::temp_dir().join("ampse_instance_io");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("instance.bin");
    save_instance(&inst, prior.rho(), &path)?;
    let bytes = std::fs::metadata(&path)?.len();
    println!("wrote {} ({} bytes)", path.display(), bytes);

    let (back, rho) = load_instance(&path)?;
    println!(
        "reloaded: {} x {}, gamma = {}, delta = {:.0e}, rho = {rho}, seed = {}",
        back.m(),
        back.n(),
        back.gamma(),
        back.delta(),
        back.seed()
    );
    assert_eq!(back.matrix().data(), inst.matrix().data());
    assert_eq!(back.signal(), inst.signal());
    assert_eq!(back.measurements(), inst.measurements());
    println!("round trip is bit-exact");
    Ok(())
}
