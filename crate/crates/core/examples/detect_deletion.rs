//! Spot a router that dropped out of a known path.

use algtrace::incremental::{detect_deletion, DecoderParams, KnownPath};
use algtrace::marking::traverse_deterministic;
use algtrace::{ChangeEvent, FieldCtx, Path};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> algtrace::Result<()> {
    let ctx = FieldCtx::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let known = KnownPath::new(Path::from_ids(&[3, 5, 2, 8, 13, 21, 34], &ctx)?, ctx);

    for position in 1..=known.d() {
        let change = ChangeEvent::deletion_of(known.path(), position)?;
        let new_path = known.path().apply_change(&change)?;
        let pkts = traverse_deterministic(&new_path, 10, 1.0, &ctx, &mut rng)?;
        let r = detect_deletion(
            &known,
            pkts.iter().map(|p| (p.x, p.y)),
            DecoderParams::new(known.d(), &ctx, 2),
        )?;
        println!(
            "{} -> {}: {} ({} packets)",
            known.path(),
            new_path,
            r.event,
            r.packets_consumed
        );
    }
    Ok(())
}
