//! Spot a router inserted into a known path from three marked packets.

use algtrace::incremental::{detect_addition, DecoderParams, KnownPath};
use algtrace::marking::traverse_deterministic;
use algtrace::{ChangeEvent, FieldCtx, Path};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> algtrace::Result<()> {
    let ctx = FieldCtx::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ids: Vec<u64> = (1..=100).map(|i| i * 613 % 65_537).collect();
    let known = KnownPath::new(Path::from_ids(&ids, &ctx)?, ctx);

    let change = ChangeEvent::Added {
        position: 42,
        id: ctx.element(4242)?,
    };
    let new_path = known.path().apply_change(&change)?;
    let params = DecoderParams::new(known.d(), &ctx, 2);
    println!("d = {}, l = {}", known.d(), params.l);

    // marks now arrive with hop d + 1
    let pkts = traverse_deterministic(&new_path, 50, 1.0, &ctx, &mut rng)?;
    let stream = pkts.iter().filter(|p| p.flag).map(|p| (p.x, p.y));
    let r = detect_addition(&known, stream, params)?;
    println!(
        "detected {} after {} packets ({} field multiplications)",
        r.event, r.packets_consumed, r.mults
    );
    assert_eq!(r.event, change);
    Ok(())
}
