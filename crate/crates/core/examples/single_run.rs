//! One AMP run end to end: generate a synthetic instance, iterate, and
//! print the order-parameter trace. A zero-mean matrix converges to the
//! noise floor; a matrix mean past the stability threshold wrecks the same
//! iteration.
//!
//! ```text
//! cargo run --release --example single_run
//! ```

use ampse::amp::{self, AmpConfig};
use ampse::denoiser::Prior;
use ampse::instance::ProblemInstance;

fn main() -> ampse::Result<()> {
    let prior = Prior::new(0.1)?;
    let cfg = AmpConfig::default();

    for gamma in [0.0, 3.6] {
        let inst = ProblemInstance::generate(2000, 600, gamma, 1e-10, &prior, 42)?;
        let trace = amp::run(&inst, &prior, &cfg);
        println!(
            "gamma = {gamma}: status = {:?} after {} iterations",
            trace.status,
            trace.iterations()
        );
        println!("{:>6} {:>12} {:>12} {:>12}", "iter", "E", "Vbar", "D");
        let stride = (trace.records.len() / 10).max(1);
        for rec in trace.records.iter().step_by(stride) {
            println!(
                "{:>6} {:>12.3e} {:>12.3e} {:>+12.3e}",
                rec.iter, rec.e, rec.v_bar, rec.d
            );
        }
        if let Some(last) = trace.final_record() {
            println!("final: E = {:.3e}, D = {:+.3e}\n", last.e, last.d);
        }
    }
    Ok(())
}
