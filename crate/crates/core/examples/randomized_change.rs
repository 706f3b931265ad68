//! Detect a change under randomized marking, where any router may restart
//! the mark and the detector must wait for informative packets.

use algtrace::incremental::{
    detect_change_randomized, randomized_window, DecoderParams, KnownPath,
};
use algtrace::marking::traverse_randomized;
use algtrace::stats::worst_case_ratio;
use algtrace::{ChangeEvent, FieldCtx, MarkingConfig, Path};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> algtrace::Result<()> {
    let ctx = FieldCtx::default();
    let config = MarkingConfig::uniform(0.2)?;
    let known = KnownPath::new(
        Path::from_ids(&[11, 22, 33, 44, 55, 66, 77, 88, 99, 110], &ctx)?,
        ctx,
    );
    let d = known.d();
    let params = DecoderParams::new(d, &ctx, 2);
    let window = randomized_window(&config, d, params.l, 1.0)?;
    let worst = worst_case_ratio(&config, d)?;
    println!(
        "d = {d}, l = {}, worst (1-F0)/F1 = {:.3} at d' = {}, window = {window}",
        params.l,
        worst.ratio(),
        worst.d_prime
    );

    let changes = [
        ChangeEvent::Added {
            position: 4,
            id: ctx.element(500)?,
        },
        ChangeEvent::deletion_of(known.path(), 7)?,
        ChangeEvent::NoChange,
    ];
    for (seed, change) in changes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
        let new_path = known.path().apply_change(change)?;
        let buffer = traverse_randomized(&new_path, 5 * window, &config, &ctx, &mut rng)?;
        let r = detect_change_randomized(&known, &buffer, params, window)?;
        println!(
            "truth {change}, detected {} after {} marked packets",
            r.event, r.packets_consumed
        );
    }
    Ok(())
}
