//! Traceback over multipath routing and network-coded multicast.
//!
//! With plain routing, each of the edge-disjoint paths found by max-flow is
//! traced as an ordinary path. With coding, a node that merges several
//! inputs forwards the mark of one of them, rotating through inputs slot by
//! slot, so over time a destination sees every source-to-destination path of
//! the subgraph and can rebuild it.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldCtx, FieldElement};
use crate::marking::{update_mark, MarkerBank, Packet};
use crate::reconstruct::{interpolate_path, EvaluationSet};

pub type NodeId = u64;
pub type Edge = (NodeId, NodeId);

/// Unit-capacity directed acyclic graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dag {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<Edge>,
    pub sources: Vec<NodeId>,
    pub destinations: Vec<NodeId>,
    /// Optional display names.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<NodeId, String>,
}

pub const S: NodeId = 1;
pub const C: NodeId = 2;
pub const E: NodeId = 3;
pub const A: NodeId = 4;
pub const B: NodeId = 5;
pub const D1: NodeId = 6;
pub const D2: NodeId = 7;

impl Dag {
    pub fn new(
        nodes: Vec<NodeId>,
        edges: Vec<Edge>,
        sources: Vec<NodeId>,
        destinations: Vec<NodeId>,
    ) -> Result<Dag> {
        let dag = Dag {
            nodes,
            edges,
            sources,
            destinations,
            labels: BTreeMap::new(),
        };
        dag.validate()?;
        Ok(dag)
    }

    pub fn from_json(text: &str) -> Result<Dag> {
        let dag: Dag = serde_json::from_str(text)?;
        dag.validate()?;
        Ok(dag)
    }

    /// The two-source-edge, two-destination multicast graph where `A` merges
    /// the flows through `C` and `E`.
    pub fn butterfly() -> Dag {
        let mut dag = Dag::new(
            vec![S, C, E, A, B, D1, D2],
            vec![
                (S, C),
                (S, E),
                (C, A),
                (E, A),
                (A, B),
                (B, D1),
                (B, D2),
                (C, D1),
                (E, D2),
            ],
            vec![S],
            vec![D1, D2],
        )
        .expect("butterfly is a valid DAG");
        for (id, name) in [
            (S, "S"),
            (C, "C"),
            (E, "E"),
            (A, "A"),
            (B, "B"),
            (D1, "D1"),
            (D2, "D2"),
        ] {
            dag.labels.insert(id, name.to_string());
        }
        dag
    }

    pub fn validate(&self) -> Result<()> {
        let known: BTreeSet<NodeId> = self.nodes.iter().copied().collect();
        if known.len() != self.nodes.len() {
            return Err(Error::InvalidConfig("duplicate node IDs".into()));
        }
        for &(u, v) in &self.edges {
            if !known.contains(&u) || !known.contains(&v) {
                return Err(Error::InvalidConfig(format!(
                    "edge ({u}, {v}) names an unknown node"
                )));
            }
            if u == v {
                return Err(Error::InvalidConfig(format!("self-loop at {u}")));
            }
        }
        for n in self.sources.iter().chain(&self.destinations) {
            if !known.contains(n) {
                return Err(Error::InvalidConfig(format!("terminal {n} is not a node")));
            }
        }
        if self.topo_order().len() != self.nodes.len() {
            return Err(Error::InvalidConfig("graph has a cycle".into()));
        }
        for &s in &self.sources {
            let reach = self.reachable(s);
            for &t in &self.destinations {
                if !reach.contains(&t) {
                    return Err(Error::NoPath { from: s, to: t });
                }
            }
        }
        Ok(())
    }

    pub fn label(&self, id: NodeId) -> String {
        self.labels
            .get(&id)
            .cloned()
            .unwrap_or_else(|| id.to_string())
    }

    /// Concatenated labels, e.g. `SCABD1`.
    pub fn path_name(&self, seq: &[NodeId]) -> String {
        seq.iter().map(|&n| self.label(n)).collect()
    }

    pub fn out_edges(&self, u: NodeId) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().copied().filter(move |e| e.0 == u)
    }

    /// Incoming edges in declaration order.
    pub fn in_edges(&self, v: NodeId) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().copied().filter(move |e| e.1 == v)
    }

    pub fn in_degree(&self, v: NodeId) -> usize {
        self.in_edges(v).count()
    }

    fn topo_order(&self) -> Vec<NodeId> {
        let mut indeg: HashMap<NodeId, usize> = self.nodes.iter().map(|&n| (n, 0)).collect();
        for &(_, v) in &self.edges {
            *indeg.get_mut(&v).expect("validated") += 1;
        }
        let mut queue: VecDeque<NodeId> = self
            .nodes
            .iter()
            .copied()
            .filter(|n| indeg[n] == 0)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for (_, v) in self.out_edges(u) {
                let d = indeg.get_mut(&v).expect("validated");
                *d -= 1;
                if *d == 0 {
                    queue.push_back(v);
                }
            }
        }
        order
    }

    fn reachable(&self, s: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::from([s]);
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for (_, v) in self.out_edges(u) {
                if seen.insert(v) {
                    stack.push(v);
                }
            }
        }
        seen
    }

    pub fn is_path(&self, seq: &[NodeId]) -> bool {
        !seq.is_empty() && seq.windows(2).all(|w| self.edges.contains(&(w[0], w[1])))
    }

    /// Every directed `s -> t` path.
    pub fn all_paths(&self, s: NodeId, t: NodeId) -> Vec<Vec<NodeId>> {
        fn walk(
            dag: &Dag,
            u: NodeId,
            t: NodeId,
            cur: &mut Vec<NodeId>,
            out: &mut Vec<Vec<NodeId>>,
        ) {
            if u == t {
                out.push(cur.clone());
                return;
            }
            for (_, v) in dag.out_edges(u) {
                cur.push(v);
                walk(dag, v, t, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        walk(self, s, t, &mut vec![s], &mut out);
        out
    }

    /// Nodes that merge more than one input and forward the result.
    pub fn coding_nodes(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .copied()
            .filter(|&n| self.in_degree(n) > 1 && self.out_edges(n).next().is_some())
            .collect()
    }

    /// Coding node `v` takes input `(slot / stride_v) mod in_degree(v)`.
    /// Strides multiply up in topological order, so one period runs through
    /// every combination of choices.
    pub fn coding_strides(&self) -> BTreeMap<NodeId, usize> {
        let coding: BTreeSet<NodeId> = self.coding_nodes().into_iter().collect();
        let mut stride = 1;
        let mut out = BTreeMap::new();
        for n in self.topo_order().into_iter().filter(|n| coding.contains(n)) {
            out.insert(n, stride);
            stride *= self.in_degree(n);
        }
        out
    }

    /// Slots after which the coding schedule repeats.
    pub fn schedule_period(&self) -> usize {
        self.coding_nodes()
            .iter()
            .map(|&n| self.in_degree(n))
            .product()
    }
}

/// `R` edge-disjoint `s -> t` paths, `R` being the min-cut, found by
/// breadth-first augmenting paths and then peeled off the flow.
pub fn decompose_paths(dag: &Dag, s: NodeId, t: NodeId) -> Result<Vec<Vec<NodeId>>> {
    if s == t {
        return Err(Error::InvalidConfig("source and sink coincide".into()));
    }
    let m = dag.edges.len();
    let mut flow = vec![false; m];
    loop {
        // residual BFS: forward along unused edges, backward along used ones
        let mut prev: HashMap<NodeId, (usize, bool)> = HashMap::new();
        let mut queue = VecDeque::from([s]);
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            if u == t {
                found = true;
                break;
            }
            for (i, &(a, b)) in dag.edges.iter().enumerate() {
                let (next, forward) = if a == u && !flow[i] {
                    (b, true)
                } else if b == u && flow[i] {
                    (a, false)
                } else {
                    continue;
                };
                if next != s && !prev.contains_key(&next) {
                    prev.insert(next, (i, forward));
                    queue.push_back(next);
                }
            }
        }
        if !found {
            break;
        }
        let mut v = t;
        while v != s {
            let (i, forward) = prev[&v];
            flow[i] = forward;
            v = if forward {
                dag.edges[i].0
            } else {
                dag.edges[i].1
            };
        }
    }

    let mut paths = Vec::new();
    loop {
        let mut seq = vec![s];
        let mut u = s;
        while u != t {
            let Some(i) = (0..m).find(|&i| flow[i] && dag.edges[i].0 == u) else {
                break;
            };
            flow[i] = false;
            u = dag.edges[i].1;
            seq.push(u);
        }
        if u != t {
            break;
        }
        paths.push(seq);
    }
    if paths.is_empty() {
        return Err(Error::NoPath { from: s, to: t });
    }
    Ok(paths)
}

/// How a coding node picks which input's mark to carry forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Input `slot mod k` of `k`.
    #[default]
    Rotate,
    Uniform,
}

/// Picks one incoming packet and folds `node_id` into its mark. Unmarked
/// packets pass through unchanged.
pub fn coding_node_forward<R: Rng + ?Sized>(
    incoming: &[Packet],
    node_id: FieldElement,
    slot: usize,
    selection: Selection,
    ctx: &FieldCtx,
    rng: &mut R,
) -> Result<Packet> {
    if incoming.is_empty() {
        return Err(Error::InvalidConfig("coding node with no input".into()));
    }
    let i = match selection {
        Selection::Rotate => slot % incoming.len(),
        Selection::Uniform => rng.random_range(0..incoming.len()),
    };
    let pkt = incoming[i];
    if pkt.flag {
        update_mark(&pkt, node_id, ctx)
    } else {
        Ok(pkt)
    }
}

/// One packet as seen by a destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CodingObservation {
    pub edge: Edge,
    pub slot: usize,
    pub packet: Packet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MulticastConfig {
    /// Probability the source marks each outgoing packet.
    pub q1: f64,
    pub selection: Selection,
}

impl Default for MulticastConfig {
    fn default() -> Self {
        MulticastConfig {
            q1: 0.5,
            selection: Selection::Rotate,
        }
    }
}

/// Forwards one slot of traffic from `source` through the whole graph and
/// returns what each destination received.
pub fn forward_slot<R: Rng + ?Sized>(
    dag: &Dag,
    source: NodeId,
    slot: usize,
    cfg: &MulticastConfig,
    ctx: &FieldCtx,
    bank: &mut MarkerBank,
    rng: &mut R,
) -> Result<Vec<(NodeId, CodingObservation)>> {
    let mut on_edge: HashMap<Edge, Packet> = HashMap::new();
    let mut seen = Vec::new();
    let strides = dag.coding_strides();
    for u in dag.topo_order() {
        let id = ctx.element(u)?;
        let out: Vec<Edge> = dag.out_edges(u).collect();
        if u == source {
            for e in out {
                let pkt = if rng.random::<f64>() < cfg.q1 {
                    bank.mark(id, ctx, rng)
                } else {
                    Packet::unmarked()
                };
                on_edge.insert(e, pkt);
            }
            continue;
        }
        let inputs: Vec<(Edge, Packet)> = dag
            .in_edges(u)
            .filter_map(|e| on_edge.get(&e).map(|p| (e, *p)))
            .collect();
        if inputs.is_empty() {
            continue;
        }
        if dag.destinations.contains(&u) {
            for &(edge, packet) in &inputs {
                seen.push((u, CodingObservation { edge, slot, packet }));
            }
        }
        if !out.is_empty() {
            let pkts: Vec<Packet> = inputs.iter().map(|p| p.1).collect();
            let turn = slot / strides.get(&u).copied().unwrap_or(1);
            let fwd = coding_node_forward(&pkts, id, turn, cfg.selection, ctx, rng)?;
            for e in out {
                on_edge.insert(e, fwd);
            }
        }
    }
    Ok(seen)
}

/// Rebuilds the node sequences behind a destination's observations. Marks
/// are grouped by last edge, hop count and position in the coding schedule,
/// and each group is interpolated on its own; the destination itself ends
/// every sequence.
pub fn trace_subgraph(
    obs: &[CodingObservation],
    period: usize,
    ctx: &FieldCtx,
) -> Result<BTreeSet<Vec<NodeId>>> {
    let mut groups: BTreeMap<(Edge, u32, usize), EvaluationSet> = BTreeMap::new();
    for o in obs.iter().filter(|o| o.packet.flag) {
        let set = groups
            .entry((o.edge, o.packet.hop, o.slot % period.max(1)))
            .or_insert_with(|| EvaluationSet::new(o.packet.hop as usize, Vec::new()));
        if set.pairs.iter().all(|p| p.0 != o.packet.x) {
            set.pairs.push((o.packet.x, o.packet.y));
        }
    }
    let mut out = BTreeSet::new();
    for ((edge, hop, _), set) in &groups {
        let path = interpolate_path(set, *hop as usize, ctx)?;
        let mut seq = path.ids();
        seq.push(edge.1);
        out.insert(seq);
    }
    Ok(out)
}

/// Whether every group has enough marks to interpolate.
fn groups_complete(obs: &[CodingObservation], period: usize) -> bool {
    let mut counts: BTreeMap<(Edge, u32, usize), BTreeSet<FieldElement>> = BTreeMap::new();
    for o in obs.iter().filter(|o| o.packet.flag) {
        counts
            .entry((o.edge, o.packet.hop, o.slot % period))
            .or_default()
            .insert(o.packet.x);
    }
    counts
        .iter()
        .all(|((_, hop, _), xs)| xs.len() >= *hop as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DestinationTrace {
    pub destination: NodeId,
    pub paths: BTreeSet<Vec<NodeId>>,
    /// Slot at which the trace was taken.
    pub slots: usize,
    pub marked_packets: usize,
}

/// Runs multicast traffic until each destination has had every observed
/// group complete for `quiet` consecutive slots, then traces it.
pub fn trace_multicast(
    dag: &Dag,
    source: NodeId,
    cfg: &MulticastConfig,
    ctx: &FieldCtx,
    seed: u64,
    quiet: usize,
    max_slots: usize,
) -> Result<Vec<DestinationTrace>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bank = MarkerBank::new();
    let period = dag.schedule_period();
    let mut obs: BTreeMap<NodeId, Vec<CodingObservation>> =
        dag.destinations.iter().map(|&d| (d, Vec::new())).collect();
    let mut streak: BTreeMap<NodeId, usize> = dag.destinations.iter().map(|&d| (d, 0)).collect();
    let mut done: BTreeMap<NodeId, DestinationTrace> = BTreeMap::new();

    for slot in 0..max_slots {
        for (dst, o) in forward_slot(dag, source, slot, cfg, ctx, &mut bank, &mut rng)? {
            obs.get_mut(&dst).expect("destination").push(o);
        }
        for &dst in &dag.destinations {
            if done.contains_key(&dst) {
                continue;
            }
            let o = &obs[&dst];
            let s = streak.get_mut(&dst).expect("destination");
            *s = if groups_complete(o, period) {
                *s + 1
            } else {
                0
            };
            if *s >= quiet {
                done.insert(
                    dst,
                    DestinationTrace {
                        destination: dst,
                        paths: trace_subgraph(o, period, ctx)?,
                        slots: slot + 1,
                        marked_packets: o.iter().filter(|o| o.packet.flag).count(),
                    },
                );
            }
        }
        if done.len() == dag.destinations.len() {
            return Ok(done.into_values().collect());
        }
    }
    Err(Error::InvalidConfig(format!(
        "traces incomplete after {max_slots} slots"
    )))
}

/// Nodes common to every failed slot's subgraph.
pub fn intersect_failure_subgraphs(failed: &[BTreeSet<NodeId>]) -> Result<BTreeSet<NodeId>> {
    let (first, rest) = failed
        .split_first()
        .ok_or_else(|| Error::InvalidConfig("no failed slots to intersect".into()))?;
    let common: BTreeSet<NodeId> = rest.iter().fold(first.clone(), |acc, s| {
        acc.intersection(s).copied().collect()
    });
    if common.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    Ok(common)
}
