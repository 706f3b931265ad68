//! Packet-level simulation of a path that changes while under traceback.
//!
//! A trial first traces the initial path from scratch, then applies each
//! scheduled change between two packets and runs the matching incremental
//! detector until it reaches a verdict. Every random draw comes from a
//! ChaCha8 stream seeded with the trial seed, so a scenario and seed fully
//! determine the report.

use std::collections::{BTreeMap, HashSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldCtx, FieldElement};
use crate::incremental::{
    randomized_window, DecoderParams, DetectionResult, KnownPath, PairDetector, RandomizedDetector,
};
use crate::marking::{send_packet, MarkerBank, MarkingConfig, Packet};
use crate::path::{ChangeEvent, Path};
use crate::reconstruct::{interpolate_path, reconstruct_with_len, EvaluationSet, Segregated};
use crate::stats::{ceil_tolerant, fractions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Deterministic,
    Randomized,
}

/// A scheduled change as written in a scenario file. Deletions name only a
/// position; the removed ID is read off the path when the change fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventSpec {
    Add { position: usize, id: u64 },
    Delete { position: usize },
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub at_packet: usize,
    #[serde(flatten)]
    pub change: EventSpec,
}

fn default_delta() -> usize {
    2
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub p: FieldCtx,
    pub initial_path: Vec<u64>,
    pub config: MarkingConfig,
    #[serde(default)]
    pub events: Vec<TimedEvent>,
    pub n_packets: usize,
    #[serde(default)]
    pub seed: u64,
    pub mode: Mode,
    #[serde(default = "default_delta")]
    pub delta: usize,
    /// Multiplier on the randomized detector's quiet window.
    #[serde(default = "default_scale")]
    pub window_scale: f64,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        Path::from_ids(&self.initial_path, &self.p)?;
        self.config.validate()?;
        match (self.mode, self.config.scheme.is_deterministic()) {
            (Mode::Deterministic, false) => {
                return Err(Error::InvalidConfig(
                    "deterministic mode needs a deterministic scheme".into(),
                ))
            }
            (Mode::Randomized, true) => {
                return Err(Error::InvalidConfig(
                    "randomized mode needs a probabilistic scheme".into(),
                ))
            }
            _ => {}
        }
        if self
            .events
            .windows(2)
            .any(|w| w[0].at_packet >= w[1].at_packet)
        {
            return Err(Error::InvalidConfig(
                "event packet indices must be strictly increasing".into(),
            ));
        }
        for ev in &self.events {
            if let EventSpec::Add { id, .. } = ev.change {
                self.p.element(id)?;
            }
        }
        if self.window_scale.is_nan() || self.window_scale <= 0.0 {
            return Err(Error::InvalidConfig("window_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Scenario {
        Scenario {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionRecord {
    pub scheduled_at: usize,
    /// Packet index the change actually took effect at (later than
    /// `scheduled_at` if an earlier traceback was still running).
    pub applied_at: usize,
    pub ground_truth: ChangeEvent,
    pub detected: Option<ChangeEvent>,
    /// Packets sent from the change until the verdict.
    pub packets_consumed: usize,
    /// Marked packets the detector used.
    pub marked_packets_consumed: usize,
    pub retries: usize,
    pub correct: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub seed: u64,
    pub initial_trace_packets: usize,
    pub initial_trace_marked: usize,
    pub initial_trace_correct: bool,
    pub initial_trace_error: Option<String>,
    pub packets_sent: usize,
    pub detections: Vec<DetectionRecord>,
}

impl TrialReport {
    pub fn all_correct(&self) -> bool {
        self.initial_trace_correct && self.detections.iter().all(|d| d.correct)
    }
}

/// Expected hop-`h + 1` marks that must have gone missing before the
/// initial trace settles on length `h`; a miss has chance `e^-12`.
const LONGER_PATH_MARKS: f64 = 12.0;

/// Destination-side collection for the initial full traceback.
struct InitialTrace {
    mode: Mode,
    seg: Segregated,
    seen: HashSet<(usize, FieldElement)>,
    marked: usize,
}

impl InitialTrace {
    fn new(mode: Mode) -> Self {
        InitialTrace {
            mode,
            seg: Segregated::default(),
            seen: HashSet::new(),
            marked: 0,
        }
    }

    /// Feeds one packet; returns the traced path once enough evidence is in.
    fn push(
        &mut self,
        pkt: &Packet,
        config: &MarkingConfig,
        ctx: &FieldCtx,
    ) -> Option<Result<Path>> {
        if !pkt.flag {
            return None;
        }
        self.marked += 1;
        let hop = pkt.hop as usize;
        if self.seen.insert((hop, pkt.x)) {
            self.seg
                .buckets
                .entry(hop)
                .or_insert_with(|| EvaluationSet::new(hop, Vec::new()))
                .pairs
                .push((pkt.x, pkt.y));
        }
        let h = self.seg.max_hop()?;
        let have = self.seg.get(h).map_or(0, |s| s.len());
        if have < h {
            return None;
        }
        match self.mode {
            Mode::Deterministic => Some(interpolate_path(self.seg.get(h)?, h, ctx)),
            Mode::Randomized => {
                // the longest hop seen may still be short of the real length:
                // wait until a path of h + 1 would have shown its first
                // router's marks LONGER_PATH_MARKS times on average
                let ratio = fractions(config, h).ratio().ok()?;
                let longer = fractions(config, h + 1).ratio().ok()?;
                let need = (h as f64 * ceil_tolerant(ratio)).max(LONGER_PATH_MARKS * longer);
                if (self.marked as f64) < need {
                    return None;
                }
                Some(reconstruct_with_len(&self.seg, h, ctx))
            }
        }
    }
}

enum Detector {
    Pairs { det: PairDetector, hop: usize },
    Randomized(RandomizedDetector),
}

struct Epoch {
    timed: TimedEvent,
    applied_at: usize,
    truth: ChangeEvent,
    detector: Option<Detector>,
}

fn resolve(spec: EventSpec, path: &Path, ctx: &FieldCtx) -> Result<ChangeEvent> {
    match spec {
        EventSpec::Add { position, id } => Ok(ChangeEvent::Added {
            position,
            id: ctx.element(id)?,
        }),
        EventSpec::Delete { position } => ChangeEvent::deletion_of(path, position),
        EventSpec::None => Ok(ChangeEvent::NoChange),
    }
}

fn record(
    epoch: &Epoch,
    now: usize,
    outcome: Result<DetectionResult>,
    known: &Path,
    truth_path: &Path,
) -> DetectionRecord {
    let base = DetectionRecord {
        scheduled_at: epoch.timed.at_packet,
        applied_at: epoch.applied_at,
        ground_truth: epoch.truth,
        detected: None,
        packets_consumed: now - epoch.applied_at,
        marked_packets_consumed: 0,
        retries: 0,
        correct: false,
        error: None,
    };
    match outcome {
        Ok(r) => {
            // positions inside a run of equal IDs are interchangeable
            let correct = r.event.kind_name() == epoch.truth.kind_name()
                && known.apply_change(&r.event).ok().as_ref() == Some(truth_path);
            DetectionRecord {
                detected: Some(r.event),
                marked_packets_consumed: r.packets_consumed,
                retries: r.retries,
                correct,
                ..base
            }
        }
        Err(e) => DetectionRecord {
            error: Some(e.to_string()),
            ..base
        },
    }
}

/// Runs one seeded trial of `scenario`.
pub fn run_trial(scenario: &Scenario) -> Result<TrialReport> {
    scenario.validate()?;
    let ctx = scenario.p;
    let config = &scenario.config;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut bank = MarkerBank::new();
    let mut path = Path::from_ids(&scenario.initial_path, &ctx)?;
    let mut pending: VecDeque<TimedEvent> = scenario.events.iter().copied().collect();

    let mut report = TrialReport {
        seed: scenario.seed,
        initial_trace_packets: 0,
        initial_trace_marked: 0,
        initial_trace_correct: false,
        initial_trace_error: None,
        packets_sent: 0,
        detections: Vec::new(),
    };

    let mut trace = Some(InitialTrace::new(scenario.mode));
    let mut known: Option<KnownPath> = None;
    let mut epoch: Option<Epoch> = None;

    for i in 0..scenario.n_packets {
        // changes take effect between packets, and only once the destination
        // holds a path and is not mid-detection
        if let (Some(kp), None) = (&known, &epoch) {
            if pending.front().is_some_and(|ev| ev.at_packet <= i) {
                let timed = pending.pop_front().expect("checked above");
                match resolve(timed.change, &path, &ctx)
                    .and_then(|t| path.apply_change(&t).map(|p| (t, p)))
                {
                    Ok((truth, next)) => {
                        path = next;
                        let detector = match (scenario.mode, truth) {
                            (Mode::Randomized, _) => {
                                let params = DecoderParams::new(kp.d(), &ctx, scenario.delta);
                                let window = randomized_window(
                                    config,
                                    kp.d(),
                                    params.l,
                                    scenario.window_scale,
                                )?;
                                Some(Detector::Randomized(RandomizedDetector::new(
                                    kp.clone(),
                                    params,
                                    window,
                                )?))
                            }
                            _ => None,
                        };
                        epoch = Some(Epoch {
                            timed,
                            applied_at: i,
                            truth,
                            detector,
                        });
                    }
                    Err(e) => report.detections.push(DetectionRecord {
                        scheduled_at: timed.at_packet,
                        applied_at: i,
                        ground_truth: ChangeEvent::NoChange,
                        detected: None,
                        packets_consumed: 0,
                        marked_packets_consumed: 0,
                        retries: 0,
                        correct: false,
                        error: Some(format!("could not apply change: {e}")),
                    }),
                }
            }
        }

        let pkt = send_packet(&path, config, &ctx, &mut bank, &mut rng);
        report.packets_sent = i + 1;

        if let Some(t) = trace.as_mut() {
            if let Some(outcome) = t.push(&pkt, config, &ctx) {
                report.initial_trace_packets = i + 1;
                report.initial_trace_marked = t.marked;
                match outcome {
                    Ok(traced) => {
                        report.initial_trace_correct = traced == path;
                        if !report.initial_trace_correct {
                            report.initial_trace_error =
                                Some(format!("traced {traced}, actual {path}"));
                        }
                    }
                    Err(e) => report.initial_trace_error = Some(e.to_string()),
                }
                // later detections are scored against the real path either way
                known = Some(KnownPath::new(path.clone(), ctx));
                trace = None;
            }
            continue;
        }
        let Some(kp) = known.as_ref() else { continue };

        let outcome: Option<Result<DetectionResult>> = match scenario.mode {
            Mode::Deterministic => {
                let d = kp.d();
                let hop = pkt.hop as usize;
                match epoch.as_mut() {
                    None => None,
                    Some(ep) => match ep.detector.as_mut() {
                        None if hop == d => None,
                        None => {
                            let params = DecoderParams::new(d, &ctx, scenario.delta);
                            let det = if hop == d + 1 {
                                PairDetector::addition(kp.clone(), params)
                            } else if hop + 1 == d {
                                PairDetector::deletion(kp.clone(), params)
                            } else {
                                Err(Error::UnexpectedHop { hop, d })
                            };
                            match det {
                                Ok(det) => {
                                    ep.detector = Some(Detector::Pairs { det, hop });
                                    feed_pairs(ep, &pkt)
                                }
                                Err(e) => Some(Err(e)),
                            }
                        }
                        Some(_) => feed_pairs(ep, &pkt),
                    },
                }
            }
            Mode::Randomized => match epoch.as_mut().and_then(|ep| ep.detector.as_mut()) {
                Some(Detector::Randomized(det)) => det.push(&pkt).transpose(),
                _ => None,
            },
        };

        if let Some(outcome) = outcome {
            let ep = epoch.take().expect("outcome implies an open epoch");
            let rec = record(&ep, i + 1, outcome, kp.path(), &path);
            // a wrong verdict is followed by a fresh traceback in practice;
            // the simulation resynchronises on the real path
            known = Some(KnownPath::new(path.clone(), ctx));
            report.detections.push(rec);
        }
    }

    if trace.is_some() {
        report.initial_trace_marked = trace.as_ref().map_or(0, |t| t.marked);
        report.initial_trace_packets = scenario.n_packets;
        report.initial_trace_error =
            Some("packet budget ran out before the initial traceback completed".into());
    }
    // a deterministic-mode no-change never trips the hop trigger; it is
    // judged correct if the epoch ends quietly
    if let Some(ep) = epoch.take() {
        let now = scenario.n_packets;
        let rec = match (scenario.mode, ep.truth, ep.detector.is_some()) {
            (Mode::Deterministic, ChangeEvent::NoChange, false) => DetectionRecord {
                scheduled_at: ep.timed.at_packet,
                applied_at: ep.applied_at,
                ground_truth: ep.truth,
                detected: Some(ChangeEvent::NoChange),
                packets_consumed: now - ep.applied_at,
                marked_packets_consumed: 0,
                retries: 0,
                correct: true,
                error: None,
            },
            _ => record(
                &ep,
                now,
                Err(Error::StreamExhausted {
                    consumed: now - ep.applied_at,
                }),
                &path,
                &path,
            ),
        };
        report.detections.push(rec);
    }
    for ev in pending {
        report.detections.push(DetectionRecord {
            scheduled_at: ev.at_packet,
            applied_at: scenario.n_packets,
            ground_truth: resolve(ev.change, &path, &ctx).unwrap_or(ChangeEvent::NoChange),
            detected: None,
            packets_consumed: 0,
            marked_packets_consumed: 0,
            retries: 0,
            correct: false,
            error: Some("change never applied before the packet budget ran out".into()),
        });
    }
    Ok(report)
}

fn feed_pairs(ep: &mut Epoch, pkt: &Packet) -> Option<Result<DetectionResult>> {
    let Some(Detector::Pairs { det, hop }) = ep.detector.as_mut() else {
        return None;
    };
    if !pkt.flag || pkt.hop as usize != *hop {
        return None;
    }
    det.push(pkt.x, pkt.y).transpose()
}

/// Mean, spread and range of one metric across an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for fewer than two values.
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let count = values.len();
        if count == 0 {
            return Summary {
                count,
                mean: f64::NAN,
                stddev: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = if count > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64
        } else {
            0.0
        };
        Summary {
            count,
            mean,
            stddev: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub trials: usize,
    pub detections: usize,
    /// Incorrect detections plus failed initial traces.
    pub failures: usize,
    pub error_rate: f64,
    pub initial_trace_marked: Summary,
    pub packets_consumed: Summary,
    pub marked_packets_consumed: Summary,
    pub retries: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ensemble {
    pub reports: Vec<TrialReport>,
    pub summary: EnsembleSummary,
}

pub fn summarize(reports: &[TrialReport]) -> EnsembleSummary {
    let dets: Vec<&DetectionRecord> = reports.iter().flat_map(|r| &r.detections).collect();
    let failures = reports.iter().filter(|r| !r.initial_trace_correct).count()
        + dets.iter().filter(|d| !d.correct).count();
    let outcomes = reports.len() + dets.len();
    let col = |f: &dyn Fn(&DetectionRecord) -> usize| {
        Summary::of(&dets.iter().map(|d| f(d) as f64).collect::<Vec<_>>())
    };
    EnsembleSummary {
        trials: reports.len(),
        detections: dets.len(),
        failures,
        error_rate: failures as f64 / outcomes.max(1) as f64,
        initial_trace_marked: Summary::of(
            &reports
                .iter()
                .map(|r| r.initial_trace_marked as f64)
                .collect::<Vec<_>>(),
        ),
        packets_consumed: col(&|d| d.packets_consumed),
        marked_packets_consumed: col(&|d| d.marked_packets_consumed),
        retries: col(&|d| d.retries),
    }
}

/// Runs `n_trials` copies of `template` with seeds `seed_base + i` in
/// parallel. Reports come back in trial order.
pub fn run_ensemble(template: &Scenario, n_trials: usize, seed_base: u64) -> Result<Ensemble> {
    if n_trials == 0 {
        return Err(Error::InvalidConfig(
            "an ensemble needs at least one trial".into(),
        ));
    }
    template.validate()?;
    let reports = (0..n_trials as u64)
        .into_par_iter()
        .map(|i| run_trial(&template.with_seed(seed_base.wrapping_add(i))))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&reports);
    Ok(Ensemble { reports, summary })
}

/// Per-hop packet counts, handy for inspecting randomized runs.
pub fn hop_histogram(packets: &[Packet]) -> BTreeMap<u32, usize> {
    let mut out = BTreeMap::new();
    for p in packets.iter().filter(|p| p.flag) {
        *out.entry(p.hop).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::incremental::required_l;

    fn det_scenario(events: Vec<TimedEvent>) -> Scenario {
        Scenario {
            p: FieldCtx::default(),
            initial_path: vec![3, 5, 2],
            config: MarkingConfig::deterministic(1.0).unwrap(),
            events,
            n_packets: 200,
            seed: 42,
            mode: Mode::Deterministic,
            delta: 2,
            window_scale: 1.0,
        }
    }

    fn at(at_packet: usize, change: EventSpec) -> TimedEvent {
        TimedEvent { at_packet, change }
    }

    #[test]
    fn deterministic_addition_uses_exactly_l_marks() {
        let s = det_scenario(vec![at(10, EventSpec::Add { position: 2, id: 7 })]);
        let r = run_trial(&s).unwrap();
        assert!(r.initial_trace_correct);
        assert_eq!(r.initial_trace_marked, 3);
        assert_eq!(r.detections.len(), 1);
        let det = &r.detections[0];
        assert!(det.correct, "{det:?}");
        assert_eq!(
            det.marked_packets_consumed,
            required_l(3, &FieldCtx::default(), 2)
        );
        assert_eq!(det.marked_packets_consumed, 3);
        assert_eq!(
            det.detected,
            Some(ChangeEvent::Added {
                position: 2,
                id: FieldCtx::default().reduce(7)
            })
        );
    }

    #[test]
    fn no_events() {
        let r = run_trial(&det_scenario(vec![])).unwrap();
        assert!(r.detections.is_empty());
        assert!(r.initial_trace_correct);
        assert!(r.all_correct());
    }

    #[test]
    fn chained_events_and_deferral() {
        // the first event is due before the initial trace finishes
        let s = det_scenario(vec![
            at(1, EventSpec::Add { position: 4, id: 9 }),
            at(20, EventSpec::Delete { position: 1 }),
            at(40, EventSpec::None),
        ]);
        let r = run_trial(&s).unwrap();
        assert_eq!(r.detections.len(), 3);
        assert_eq!(r.detections[0].applied_at, 3);
        assert!(r.all_correct(), "{r:#?}");
        assert_eq!(
            r.detections[1].ground_truth,
            ChangeEvent::Deleted {
                position: 1,
                id: FieldCtx::default().reduce(3)
            }
        );
    }

    #[test]
    fn reproducible() {
        let mut s = det_scenario(vec![at(10, EventSpec::Delete { position: 2 })]);
        s.config = MarkingConfig::deterministic(0.3).unwrap();
        let a = serde_json::to_string(&run_trial(&s).unwrap()).unwrap();
        let b = serde_json::to_string(&run_trial(&s).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn randomized_trial() {
        let s = Scenario {
            initial_path: (1..=10).map(|i| i * 1_000).collect(),
            config: MarkingConfig::uniform(0.2).unwrap(),
            events: vec![
                at(2_000, EventSpec::Delete { position: 4 }),
                at(
                    6_000,
                    EventSpec::Add {
                        position: 1,
                        id: 77,
                    },
                ),
            ],
            n_packets: 20_000,
            mode: Mode::Randomized,
            ..det_scenario(vec![])
        };
        let r = run_trial(&s).unwrap();
        assert!(r.all_correct(), "{r:#?}");
    }

    #[test]
    fn scenario_json_and_validation() {
        let text = r#"{
            "initial_path": [3, 5, 2],
            "config": {"scheme": {"type": "deterministic", "q1": 1.0}},
            "events": [{"at_packet": 10, "kind": "add", "position": 2, "id": 7}],
            "n_packets": 100,
            "mode": "deterministic"
        }"#;
        let s = Scenario::from_json(text).unwrap();
        assert_eq!(s.p.modulus(), 65_537);
        assert_eq!(s.delta, 2);
        assert_eq!(s.events[0].change, EventSpec::Add { position: 2, id: 7 });

        let bad = text.replace("\"deterministic\", \"q1\"", "\"uniform\", \"q\"");
        assert!(matches!(
            Scenario::from_json(&bad),
            Err(Error::InvalidConfig(_))
        ));
        let err = Scenario::from_json("{\n  \"initial_path\": [3,\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let mut s2 = s.clone();
        s2.events.push(at(5, EventSpec::None));
        assert!(s2.validate().is_err());
    }

    #[test]
    fn ensemble_of_one_matches_single_trial() {
        let s = det_scenario(vec![at(10, EventSpec::Add { position: 2, id: 7 })]);
        let e = run_ensemble(&s, 1, 42).unwrap();
        let single = run_trial(&s).unwrap();
        assert_eq!(e.reports, vec![single.clone()]);
        assert_eq!(
            e.summary.marked_packets_consumed.mean,
            single.detections[0].marked_packets_consumed as f64
        );
        assert_eq!(e.summary.marked_packets_consumed.stddev, 0.0);
        assert_eq!(e.summary.failures, 0);
    }

    #[test]
    fn summary_stats() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((s.count, s.mean, s.min, s.max), (4, 2.5, 1.0, 4.0));
        assert!((s.stddev - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
