//! Run a scenario file as a seeded ensemble.
//!
//! `cargo run --example scenario -- scenarios/randomized.json 50`

use algtrace::sim::{run_ensemble, Scenario};

fn main() -> algtrace::Result<()> {
    let mut args = std::env::args().skip(1);
    let file = args.next().unwrap_or_else(|| {
        concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/deterministic.json").into()
    });
    let trials: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);

    let scenario = Scenario::from_json(&std::fs::read_to_string(&file)?)?;
    let ens = run_ensemble(&scenario, trials, scenario.seed)?;
    let first = &ens.reports[0];
    println!(
        "trial 0: initial trace took {} marked packets",
        first.initial_trace_marked
    );
    for det in &first.detections {
        let got = det
            .detected
            .map(|e| e.to_string())
            .unwrap_or_else(|| "-".into());
        println!(
            "  {} -> {got}, {} marked packets",
            det.ground_truth, det.marked_packets_consumed
        );
    }
    let s = &ens.summary;
    println!(
        "{} trials, {} detections, {} failures; marked packets per detection {:.1} +- {:.1} (min {}, max {})",
        s.trials, s.detections, s.failures, s.marked_packets_consumed.mean, s.marked_packets_consumed.stddev,
        s.marked_packets_consumed.min, s.marked_packets_consumed.max
    );
    Ok(())
}
