//! Recover a path from scratch under both marking modes.

use algtrace::marking::{traverse_deterministic, traverse_randomized};
use algtrace::reconstruct::{interpolate_path, reconstruct_randomized, segregate_by_hopcount};
use algtrace::stats::fractions;
use algtrace::{FieldCtx, MarkingConfig, Path};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> algtrace::Result<()> {
    let ctx = FieldCtx::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let path = Path::from_ids(&[1201, 77, 4096, 31337, 9, 65000, 12], &ctx)?;
    let d = path.len();

    // only the source starts marks, so d packets are enough
    let pkts = traverse_deterministic(&path, d, 1.0, &ctx, &mut rng)?;
    let seg = segregate_by_hopcount(&pkts);
    let traced = interpolate_path(seg.get(d).expect("hop-d bucket"), d, &ctx)?;
    println!("deterministic: {traced} from {} packets", pkts.len());

    // every router may restart the mark; the source's marks are the rare ones
    let config = MarkingConfig::uniform(0.2)?;
    let stats = fractions(&config, d);
    let pkts = traverse_randomized(&path, 2_000, &config, &ctx, &mut rng)?;
    let traced = reconstruct_randomized(&pkts, &ctx)?;
    let seg = segregate_by_hopcount(&pkts);
    println!(
        "randomized: {traced} from {} packets ({} unmarked, f0 = {:.4}, source share f1 = {:.4})",
        pkts.len(),
        seg.unmarked,
        stats.f0(),
        stats.f1()
    );
    for (hop, set) in &seg.buckets {
        println!("  hop {hop}: {} distinct x", set.len());
    }
    assert_eq!(traced, path);
    Ok(())
}
