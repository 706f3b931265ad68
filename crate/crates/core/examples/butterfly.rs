//! Trace the multicast subgraph of the butterfly network, where node A
//! merges two flows and forwards one mark per slot.

use algtrace::netcode::{
    decompose_paths, intersect_failure_subgraphs, trace_multicast, Dag, MulticastConfig, A, B, C,
    D1, D2, E, S,
};
use algtrace::FieldCtx;
use std::collections::BTreeSet;

fn main() -> algtrace::Result<()> {
    let dag = Dag::butterfly();
    for dst in [D1, D2] {
        let routes: Vec<String> = decompose_paths(&dag, S, dst)?
            .iter()
            .map(|p| dag.path_name(p))
            .collect();
        println!(
            "max-flow routes S -> {}: {}",
            dag.label(dst),
            routes.join(", ")
        );
    }

    let traces = trace_multicast(
        &dag,
        S,
        &MulticastConfig::default(),
        &FieldCtx::default(),
        1,
        32,
        10_000,
    )?;
    for t in &traces {
        let names: Vec<String> = t.paths.iter().map(|p| dag.path_name(p)).collect();
        println!(
            "{} traced {} after {} slots",
            dag.label(t.destination),
            names.join(", "),
            t.slots
        );
    }

    // interior nodes of two failed slots
    let failed = [BTreeSet::from([C, A, B]), BTreeSet::from([E, A, B])];
    let suspects: Vec<String> = intersect_failure_subgraphs(&failed)?
        .iter()
        .map(|&n| dag.label(n))
        .collect();
    println!("suspects: {}", suspects.join(", "));
    Ok(())
}
