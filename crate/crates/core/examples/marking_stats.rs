//! How often each router's mark survives, and the worst-case ratio that
//! sizes the randomized buffer, for the three marking schemes.

use algtrace::stats::{fractions, worst_case_ratio};
use algtrace::MarkingConfig;

fn main() -> algtrace::Result<()> {
    let schemes = [
        ("uniform q=0.2", MarkingConfig::uniform(0.2)?),
        ("cutoff q=0.2 h0=5", MarkingConfig::cutoff(0.2, 5)?),
        (
            "geometric alpha=0.5 h0=5",
            MarkingConfig::geometric(0.5, 5)?,
        ),
    ];
    for (name, config) in &schemes {
        let s = fractions(config, 10);
        println!("{name}: f0 = {:.5}, f1 = {:.5}", s.f0(), s.f1());
        for d in [2, 5, 10, 20] {
            let w = worst_case_ratio(config, d)?;
            println!(
                "  d = {d:2}: worst ratio {:.6} (d' = {})",
                w.ratio(),
                w.d_prime
            );
        }
    }
    Ok(())
}
