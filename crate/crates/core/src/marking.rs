//! Packet marking engines.
//!
//! Deterministic encoding: the source `r_1` starts a mark `(x, y = r_1)` and
//! every later router folds its ID in with `y <- y*x + r_i`. Randomized
//! encoding: every router may clear the packet and start a fresh mark, so a
//! surviving mark encodes the suffix of the path that follows its last marker.

use std::collections::{HashMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldCtx, FieldElement};
use crate::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Packet {
    pub flag: bool,
    pub hop: u32,
    pub x: FieldElement,
    pub y: FieldElement,
}

impl Packet {
    pub fn unmarked() -> Packet {
        Packet::default()
    }

    pub fn marked(hop: u32, x: FieldElement, y: FieldElement) -> Packet {
        Packet {
            flag: true,
            hop,
            x,
            y,
        }
    }
}

/// Hop-count dependent marking probability `q(h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MarkingScheme {
    /// Scheme 0: every router marks with the same probability.
    Uniform { q: f64 },
    /// Scheme 1: probability `q` while `1 <= h <= h0`, zero afterwards.
    Cutoff { q: f64, h0: usize },
    /// Scheme 2: probability `alpha^h` while `1 <= h <= h0`, zero afterwards.
    Geometric { alpha: f64, h0: usize },
    /// Source-only marking with probability `q1`.
    Deterministic { q1: f64 },
}

impl MarkingScheme {
    /// `q(h)` for a candidate marker that would give the packet hop count `h`.
    pub fn probability(&self, hop_seen: usize) -> f64 {
        match *self {
            MarkingScheme::Uniform { q } => q,
            MarkingScheme::Cutoff { q, h0 } => {
                if (1..=h0).contains(&hop_seen) {
                    q
                } else {
                    0.0
                }
            }
            MarkingScheme::Geometric { alpha, h0 } => {
                if (1..=h0).contains(&hop_seen) {
                    alpha.powi(hop_seen as i32)
                } else {
                    0.0
                }
            }
            MarkingScheme::Deterministic { q1 } => {
                if hop_seen == 1 {
                    q1
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, MarkingScheme::Deterministic { .. })
    }

    fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64, allow_one: bool| {
            let ok = v >= 0.0 && (v < 1.0 || (allow_one && v == 1.0));
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} = {v} outside the allowed range"
                )))
            }
        };
        match *self {
            MarkingScheme::Uniform { q } => prob("q", q, true),
            MarkingScheme::Cutoff { q, h0 } => {
                prob("q", q, true)?;
                check_h0(h0)
            }
            MarkingScheme::Geometric { alpha, h0 } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "alpha = {alpha} must lie in (0, 1)"
                    )));
                }
                check_h0(h0)
            }
            MarkingScheme::Deterministic { q1 } => prob("q1", q1, true),
        }
    }
}

fn check_h0(h0: usize) -> Result<()> {
    if h0 == 0 {
        Err(Error::InvalidConfig("h0 must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Scheme plus optional per-position overrides (`per_node[i]` is `q_{i+1}`).
///
/// Probabilities of exactly 1 are accepted so tests can force outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkingConfig {
    pub scheme: MarkingScheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_node: Option<Vec<f64>>,
}

impl MarkingConfig {
    pub fn new(scheme: MarkingScheme) -> Result<Self> {
        scheme.validate()?;
        Ok(MarkingConfig {
            scheme,
            per_node: None,
        })
    }

    pub fn uniform(q: f64) -> Result<Self> {
        Self::new(MarkingScheme::Uniform { q })
    }

    pub fn cutoff(q: f64, h0: usize) -> Result<Self> {
        Self::new(MarkingScheme::Cutoff { q, h0 })
    }

    pub fn geometric(alpha: f64, h0: usize) -> Result<Self> {
        Self::new(MarkingScheme::Geometric { alpha, h0 })
    }

    pub fn deterministic(q1: f64) -> Result<Self> {
        Self::new(MarkingScheme::Deterministic { q1 })
    }

    pub fn with_per_node(mut self, q: Vec<f64>) -> Result<Self> {
        if let Some(bad) = q.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidConfig(format!(
                "per-node probability {bad} outside [0, 1]"
            )));
        }
        self.per_node = Some(q);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        if let Some(q) = &self.per_node {
            if q.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidConfig(
                    "per-node probability outside [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }

    /// Probability that the router at 1-based `position` re-marks a packet
    /// that would then carry hop count `hop_seen`.
    pub fn probability_at(&self, position: usize, hop_seen: usize) -> f64 {
        match self.per_node.as_ref().and_then(|q| q.get(position - 1)) {
            Some(&q) => q,
            None => self.scheme.probability(hop_seen),
        }
    }
}

/// `q(h)` of the configured scheme, ignoring per-node overrides.
pub fn marking_probability(config: &MarkingConfig, hop_seen: usize) -> f64 {
    config.scheme.probability(hop_seen)
}

/// Without-replacement sampler over `1..p`.
///
/// The live variant walks a keyed Feistel permutation of `0..p-1` with a
/// counter, so its state is constant-size and no value repeats until all
/// `p - 1` have been issued.
#[derive(Debug, Clone)]
pub enum XSampler {
    Permutation(FeistelPermutation),
    Scripted(VecDeque<FieldElement>),
}

impl XSampler {
    pub fn seeded<R: Rng + ?Sized>(ctx: &FieldCtx, rng: &mut R) -> Self {
        XSampler::Permutation(FeistelPermutation::new(ctx.modulus() - 1, rng))
    }

    fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<FieldElement> {
        match self {
            XSampler::Permutation(perm) => match perm.next() {
                Some(v) => Ok(FieldElement::from_raw(v + 1)),
                None => {
                    perm.rekey(rng);
                    Err(Error::XExhausted)
                }
            },
            XSampler::Scripted(xs) => xs.pop_front().ok_or(Error::XExhausted),
        }
    }
}

/// Four-round balanced Feistel network on `2k` bits, cycle-walked down to
/// the domain `0..n`.
#[derive(Debug, Clone)]
pub struct FeistelPermutation {
    n: u64,
    half_bits: u32,
    keys: [u64; 4],
    counter: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl FeistelPermutation {
    pub fn new<R: Rng + ?Sized>(n: u64, rng: &mut R) -> Self {
        assert!(n >= 1);
        let bits = 64 - (n - 1).leading_zeros();
        let half_bits = bits.div_ceil(2).max(1);
        FeistelPermutation {
            n,
            half_bits,
            keys: rng.random(),
            counter: 0,
        }
    }

    fn rekey<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.keys = rng.random();
        self.counter = 0;
    }

    fn encrypt(&self, v: u64) -> u64 {
        let mask = (1u64 << self.half_bits) - 1;
        let (mut left, mut right) = (v >> self.half_bits, v & mask);
        for k in self.keys {
            let f = splitmix64(right ^ k) & mask;
            (left, right) = (right, left ^ f);
        }
        (left << self.half_bits) | right
    }

    /// Image of `i` under the permutation of `0..n`.
    pub fn permute(&self, i: u64) -> u64 {
        debug_assert!(i < self.n);
        let mut v = self.encrypt(i);
        while v >= self.n {
            v = self.encrypt(v);
        }
        v
    }

    fn next(&mut self) -> Option<u64> {
        if self.counter >= self.n {
            return None;
        }
        let v = self.permute(self.counter);
        self.counter += 1;
        Some(v)
    }
}

/// A router's marking identity and its record of issued x-values.
#[derive(Debug, Clone)]
pub struct NodeMarkerState {
    pub node_id: FieldElement,
    sampler: XSampler,
}

impl NodeMarkerState {
    pub fn new<R: Rng + ?Sized>(node_id: FieldElement, ctx: &FieldCtx, rng: &mut R) -> Self {
        NodeMarkerState {
            node_id,
            sampler: XSampler::seeded(ctx, rng),
        }
    }

    /// A marker that issues exactly the given x-values, in order.
    pub fn scripted(node_id: FieldElement, xs: impl IntoIterator<Item = FieldElement>) -> Self {
        NodeMarkerState {
            node_id,
            sampler: XSampler::Scripted(xs.into_iter().collect()),
        }
    }
}

/// Starts a fresh mark `(x, y = node_id)` with hop count 1.
pub fn init_mark<R: Rng + ?Sized>(state: &mut NodeMarkerState, rng: &mut R) -> Result<Packet> {
    let x = state.sampler.next(rng)?;
    Ok(Packet::marked(1, x, state.node_id))
}

/// Folds `node_id` into an existing mark: `y <- y*x + node_id`, `hop += 1`.
pub fn update_mark(pkt: &Packet, node_id: FieldElement, ctx: &FieldCtx) -> Result<Packet> {
    if !pkt.flag {
        return Err(Error::UnmarkedPacket);
    }
    Ok(Packet {
        flag: true,
        hop: pkt.hop + 1,
        x: pkt.x,
        y: ctx.add(ctx.mul(pkt.y, pkt.x), node_id),
    })
}

/// Marker states for every router a simulation has seen, keyed by ID so a
/// router keeps its x-value record across path changes.
#[derive(Debug, Clone, Default)]
pub struct MarkerBank {
    markers: HashMap<FieldElement, NodeMarkerState>,
}

impl MarkerBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, state: NodeMarkerState) {
        self.markers.insert(state.node_id, state);
    }

    pub fn mark<R: Rng + ?Sized>(
        &mut self,
        node_id: FieldElement,
        ctx: &FieldCtx,
        rng: &mut R,
    ) -> Packet {
        let state = self
            .markers
            .entry(node_id)
            .or_insert_with(|| NodeMarkerState::new(node_id, ctx, rng));
        loop {
            match init_mark(state, rng) {
                Ok(p) => return p,
                Err(Error::XExhausted) => match state.sampler {
                    XSampler::Permutation(_) => continue,
                    XSampler::Scripted(_) => {
                        panic!("scripted marker for {node_id} ran out of x-values")
                    }
                },
                Err(e) => unreachable!("init_mark: {e}"),
            }
        }
    }
}

/// Pushes one packet through `path`. `decide(position, hop_seen, rng)`
/// returns whether the router at `position` starts a new mark.
///
/// With `count_unmarked_hops` the hop field of an unmarked packet still
/// advances at every router (deterministic encoding); otherwise it stays 0.
pub fn forward_packet<R, F>(
    path: &Path,
    ctx: &FieldCtx,
    bank: &mut MarkerBank,
    rng: &mut R,
    count_unmarked_hops: bool,
    mut decide: F,
) -> Packet
where
    R: Rng + ?Sized,
    F: FnMut(usize, usize, &mut R) -> bool,
{
    let mut pkt = Packet::unmarked();
    for (i, &node) in path.nodes().iter().enumerate() {
        let position = i + 1;
        let hop_seen = if pkt.flag { pkt.hop as usize + 1 } else { 1 };
        if decide(position, hop_seen, rng) {
            pkt = bank.mark(node, ctx, rng);
        } else if pkt.flag {
            pkt = update_mark(&pkt, node, ctx).expect("packet is marked");
        } else if count_unmarked_hops {
            pkt.hop += 1;
        }
    }
    pkt
}

/// Sends one packet under `config`, drawing marking decisions from `rng`.
pub fn send_packet<R: Rng + ?Sized>(
    path: &Path,
    config: &MarkingConfig,
    ctx: &FieldCtx,
    bank: &mut MarkerBank,
    rng: &mut R,
) -> Packet {
    let deterministic = config.scheme.is_deterministic();
    forward_packet(
        path,
        ctx,
        bank,
        rng,
        deterministic,
        |position, hop_seen, rng| {
            let q = if deterministic && position > 1 {
                0.0
            } else {
                config.probability_at(position, hop_seen)
            };
            q > 0.0 && rng.random::<f64>() < q
        },
    )
}

/// Source-initiated marking: `r_1` marks with probability `q1`, the rest
/// only update.
pub fn traverse_deterministic<R: Rng + ?Sized>(
    path: &Path,
    n_packets: usize,
    q1: f64,
    ctx: &FieldCtx,
    rng: &mut R,
) -> Result<Vec<Packet>> {
    let config = MarkingConfig::deterministic(q1)?;
    let mut bank = MarkerBank::new();
    Ok((0..n_packets)
        .map(|_| send_packet(path, &config, ctx, &mut bank, rng))
        .collect())
}

/// Probabilistic re-marking at every router per `config`.
pub fn traverse_randomized<R: Rng + ?Sized>(
    path: &Path,
    n_packets: usize,
    config: &MarkingConfig,
    ctx: &FieldCtx,
    rng: &mut R,
) -> Result<Vec<Packet>> {
    config.validate()?;
    let mut bank = MarkerBank::new();
    Ok((0..n_packets)
        .map(|_| send_packet(path, config, ctx, &mut bank, rng))
        .collect())
}
