//! Command-line front end: figure data as CSV, scenario runs and the
//! butterfly demo.
//!
//! Exit codes: 0 on success, 1 when a detection or trace came out wrong,
//! 2 for usage and configuration errors.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::FieldCtx;
use crate::incremental::required_l;
use crate::marking::MarkingConfig;
use crate::netcode::{self, Dag, MulticastConfig, NodeId};
use crate::sim::{self, EventSpec, Mode, Scenario, TimedEvent};
use crate::stats::{ceil_tolerant, fractions, worst_case_ratio};

#[derive(Debug, Parser)]
#[command(
    name = "algtrace",
    version,
    about = "Algebraic traceback for changing paths"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Marked packets needed for full and incremental traceback, per path length.
    Fig3(Fig3Args),
    /// Worst-case (1 - F0)/F1 for the three randomized marking schemes.
    Fig4(Fig4Args),
    /// Run a scenario file, optionally as a seeded ensemble.
    Simulate(SimulateArgs),
    /// Trace the butterfly multicast subgraph at both destinations.
    Butterfly(ButterflyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DRange {
    #[arg(long, default_value_t = 1)]
    pub d_min: usize,
    #[arg(long, default_value_t = 100)]
    pub d_max: usize,
    #[arg(long, default_value_t = 1)]
    pub d_step: usize,
}

impl DRange {
    pub fn values(&self) -> Result<Vec<usize>> {
        if self.d_min == 0 || self.d_step == 0 || self.d_min > self.d_max {
            return Err(Error::InvalidConfig(format!(
                "bad d range {}..={} step {}",
                self.d_min, self.d_max, self.d_step
            )));
        }
        Ok((self.d_min..=self.d_max).step_by(self.d_step).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeName {
    Uniform,
    Cutoff,
    Geometric,
}

#[derive(Debug, Clone, Args)]
pub struct Fig3Args {
    #[arg(long = "p", default_value_t = crate::DEFAULT_MODULUS)]
    pub p: u64,
    #[arg(long, default_value_t = 2)]
    pub delta: usize,
    /// Randomized scheme behind the rand_* columns.
    #[arg(long, value_enum, default_value_t = SchemeName::Uniform)]
    pub scheme: SchemeName,
    #[arg(long, default_value_t = 0.04)]
    pub q: f64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 5)]
    pub h0: usize,
    #[command(flatten)]
    pub range: DRange,
    /// Simulated trials per d for the Monte-Carlo column; 0 leaves it out.
    #[arg(long, default_value_t = 0)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Default for Fig3Args {
    fn default() -> Self {
        Fig3Args {
            p: crate::DEFAULT_MODULUS,
            delta: 2,
            scheme: SchemeName::Uniform,
            q: 0.04,
            alpha: 0.5,
            h0: 5,
            range: DRange {
                d_min: 1,
                d_max: 100,
                d_step: 1,
            },
            trials: 0,
            seed: 1,
            out: None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Fig4Args {
    #[arg(long, default_value_t = 0.2)]
    pub q: f64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 5)]
    pub h0: usize,
    #[command(flatten)]
    pub range: DRange,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Default for Fig4Args {
    fn default() -> Self {
        Fig4Args {
            q: 0.2,
            alpha: 0.5,
            h0: 5,
            range: DRange {
                d_min: 1,
                d_max: 100,
                d_step: 1,
            },
            out: None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scenario JSON file.
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    /// Seed of the first trial; defaults to the scenario's own.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Deterministic,
    Randomized,
}

#[derive(Debug, Clone, Args)]
pub struct ButterflyArgs {
    #[arg(long = "p", default_value_t = crate::DEFAULT_MODULUS)]
    pub p: u64,
    /// Probability the source marks a packet.
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of seeds to run, starting at --seed.
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    /// Graph JSON to trace instead of the built-in butterfly.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Default for ButterflyArgs {
    fn default() -> Self {
        ButterflyArgs {
            p: crate::DEFAULT_MODULUS,
            q: 0.5,
            seed: 1,
            trials: 1,
            graph: None,
            out: None,
        }
    }
}

/// Rounds to 12 significant digits and prints the shortest form.
pub fn fmt_float(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("own formatting");
    rounded.to_string()
}

fn csv_body(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let bad = |e: csv::Error| Error::InvalidConfig(e.to_string());
    w.write_record(header).map_err(bad)?;
    for r in rows {
        w.write_record(r).map_err(bad)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn meta(cmd: &str, params: &str) -> String {
    format!(
        "# algtrace {cmd}\n# {params}\n# version {}\n",
        env!("CARGO_PKG_VERSION")
    )
}

fn fig3_scheme(a: &Fig3Args) -> Result<MarkingConfig> {
    match a.scheme {
        SchemeName::Uniform => MarkingConfig::uniform(a.q),
        SchemeName::Cutoff => MarkingConfig::cutoff(a.q, a.h0),
        SchemeName::Geometric => MarkingConfig::geometric(a.alpha, a.h0),
    }
}

/// Mean marked packets a simulated deterministic-mode addition used.
fn mc_det_inc(d: usize, a: &Fig3Args, ctx: FieldCtx) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed ^ (d as u64).wrapping_mul(0x9E37_79B9));
    let path: Vec<u64> = (0..d).map(|_| rng.random_range(0..ctx.modulus())).collect();
    let position = rng.random_range(1..=d + 1);
    let id = rng.random_range(0..ctx.modulus());
    let l = required_l(d, &ctx, a.delta);
    let template = Scenario {
        p: ctx,
        initial_path: path,
        config: MarkingConfig::deterministic(1.0)?,
        events: vec![TimedEvent {
            at_packet: d,
            change: EventSpec::Add { position, id },
        }],
        n_packets: d + 20 * l + 20,
        seed: a.seed,
        mode: Mode::Deterministic,
        delta: a.delta,
        window_scale: 1.0,
    };
    let e = sim::run_ensemble(&template, a.trials, a.seed)?;
    Ok(e.summary.marked_packets_consumed.mean)
}

pub fn fig3_csv(a: &Fig3Args) -> Result<String> {
    let ctx = FieldCtx::new(a.p)?;
    let config = fig3_scheme(a)?;
    let ds = a.range.values()?;
    let mut header = vec![
        "d",
        "det_noninc",
        "det_inc",
        "rand_noninc",
        "rand_inc_ceil_inner",
        "rand_inc_product",
    ];
    if a.trials > 0 {
        header.push("mc_det_inc_mean");
    }
    let mut rows = Vec::with_capacity(ds.len());
    for &d in &ds {
        let l = required_l(d, &ctx, a.delta);
        let exact = fractions(&config, d).ratio()?;
        let worst = worst_case_ratio(&config, d)?.ratio();
        let mut row = vec![
            d.to_string(),
            d.to_string(),
            l.to_string(),
            (d as f64 * ceil_tolerant(exact)).to_string(),
            (l as f64 * ceil_tolerant(worst)).to_string(),
            ceil_tolerant(l as f64 * worst).to_string(),
        ];
        if a.trials > 0 {
            row.push(fmt_float(mc_det_inc(d, a, ctx)?));
        }
        rows.push(row);
    }
    let params = format!(
        "p={} delta={} scheme={:?} q={} alpha={} h0={} d={}..={} step={} trials={} seed={}",
        a.p,
        a.delta,
        a.scheme,
        a.q,
        a.alpha,
        a.h0,
        a.range.d_min,
        a.range.d_max,
        a.range.d_step,
        a.trials,
        a.seed
    );
    Ok(meta("fig3", &params) + &csv_body(&header, &rows)?)
}

pub fn fig4_csv(a: &Fig4Args) -> Result<String> {
    let schemes = [
        MarkingConfig::uniform(a.q)?,
        MarkingConfig::cutoff(a.q, a.h0)?,
        MarkingConfig::geometric(a.alpha, a.h0)?,
    ];
    let mut rows = Vec::new();
    for d in a.range.values()? {
        let mut row = vec![d.to_string()];
        for s in &schemes {
            row.push(fmt_float(worst_case_ratio(s, d)?.ratio()));
        }
        rows.push(row);
    }
    let params = format!(
        "q={} alpha={} h0={} d={}..={} step={}",
        a.q, a.alpha, a.h0, a.range.d_min, a.range.d_max, a.range.d_step
    );
    Ok(meta("fig4", &params)
        + &csv_body(
            &["d", "scheme0_ratio", "scheme1_ratio", "scheme2_ratio"],
            &rows,
        )?)
}

fn event_cols(e: Option<&crate::ChangeEvent>) -> [String; 3] {
    match e {
        None => [String::new(), String::new(), String::new()],
        Some(e) => [
            e.kind_name().to_string(),
            e.position().map(|p| p.to_string()).unwrap_or_default(),
            e.id().map(|i| i.to_string()).unwrap_or_default(),
        ],
    }
}

/// Returns the CSV and whether every trace and detection was correct.
pub fn simulate_csv(a: &SimulateArgs) -> Result<(String, bool)> {
    let text = std::fs::read_to_string(&a.scenario)?;
    let mut scenario: Scenario = serde_json::from_str(&text)?;
    if let Some(m) = a.mode {
        scenario.mode = match m {
            ModeArg::Deterministic => Mode::Deterministic,
            ModeArg::Randomized => Mode::Randomized,
        };
    }
    scenario.validate()?;
    let seed = a.seed.unwrap_or(scenario.seed);
    let ens = sim::run_ensemble(&scenario, a.trials, seed)?;

    let header = [
        "trial",
        "seed",
        "initial_trace_marked",
        "initial_trace_correct",
        "event",
        "applied_at",
        "truth_kind",
        "truth_position",
        "truth_id",
        "detected_kind",
        "detected_position",
        "detected_id",
        "packets_consumed",
        "marked_packets_consumed",
        "retries",
        "correct",
        "error",
    ];
    let mut rows = Vec::new();
    for (t, r) in ens.reports.iter().enumerate() {
        for (i, det) in r.detections.iter().enumerate() {
            let mut row = vec![
                t.to_string(),
                r.seed.to_string(),
                r.initial_trace_marked.to_string(),
                r.initial_trace_correct.to_string(),
                i.to_string(),
                det.applied_at.to_string(),
            ];
            row.extend(event_cols(Some(&det.ground_truth)));
            row.extend(event_cols(det.detected.as_ref()));
            row.extend([
                det.packets_consumed.to_string(),
                det.marked_packets_consumed.to_string(),
                det.retries.to_string(),
                det.correct.to_string(),
                det.error.clone().unwrap_or_default(),
            ]);
            rows.push(row);
        }
    }
    let s = &ens.summary;
    let params = format!(
        "scenario={} trials={} seed={} mode={:?}\n# detections={} failures={} error_rate={} mean_marked={}",
        a.scenario.display(),
        a.trials,
        seed,
        scenario.mode,
        s.detections,
        s.failures,
        fmt_float(s.error_rate),
        fmt_float(s.marked_packets_consumed.mean)
    );
    Ok((
        meta("simulate", &params) + &csv_body(&header, &rows)?,
        s.failures == 0,
    ))
}

fn expected_butterfly(dst: NodeId) -> BTreeSet<String> {
    let names: &[&str] = if dst == netcode::D1 {
        &["SCD1", "SEABD1", "SCABD1"]
    } else {
        &["SED2", "SCABD2", "SEABD2"]
    };
    names.iter().map(|s| s.to_string()).collect()
}

/// Lists the recovered path set per destination and seed. The flag is false
/// if any set differs from the paths the graph actually offers.
pub fn butterfly_report(a: &ButterflyArgs) -> Result<(String, bool)> {
    let ctx = FieldCtx::new(a.p)?;
    let (dag, builtin) = match &a.graph {
        Some(path) => (Dag::from_json(&std::fs::read_to_string(path)?)?, false),
        None => (Dag::butterfly(), true),
    };
    let source = *dag
        .sources
        .first()
        .ok_or_else(|| Error::InvalidConfig("graph has no source".into()))?;
    let cfg = MulticastConfig {
        q1: a.q,
        ..MulticastConfig::default()
    };
    if !(cfg.q1 > 0.0 && cfg.q1 <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "q = {} must lie in (0, 1]",
            a.q
        )));
    }
    let mut out = String::new();
    let mut ok = true;
    for seed in a.seed..a.seed.saturating_add(a.trials.max(1) as u64) {
        for t in netcode::trace_multicast(&dag, source, &cfg, &ctx, seed, 32, 100_000)? {
            let got: BTreeSet<String> = t.paths.iter().map(|p| dag.path_name(p)).collect();
            let want: BTreeSet<String> = if builtin {
                expected_butterfly(t.destination)
            } else {
                dag.all_paths(source, t.destination)
                    .iter()
                    .map(|p| dag.path_name(p))
                    .collect()
            };
            let real = t.paths.iter().all(|p| dag.is_path(p));
            let pass = got == want && real;
            ok &= pass;
            let list: Vec<&str> = got.iter().map(String::as_str).collect();
            let _ = writeln!(
                out,
                "seed {seed} {}: {} (slots {}, marked {}){}",
                dag.label(t.destination),
                list.join(" "),
                t.slots,
                t.marked_packets,
                if pass { "" } else { " MISMATCH" }
            );
        }
    }
    Ok((out, ok))
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> ExitCode {
    let result = match &cli.command {
        Command::Fig3(a) => fig3_csv(a)
            .and_then(|s| emit(&s, a.out.as_ref()))
            .map(|_| true),
        Command::Fig4(a) => fig4_csv(a)
            .and_then(|s| emit(&s, a.out.as_ref()))
            .map(|_| true),
        Command::Simulate(a) => {
            simulate_csv(a).and_then(|(s, ok)| emit(&s, a.out.as_ref()).map(|_| ok))
        }
        Command::Butterfly(a) => {
            butterfly_report(a).and_then(|(s, ok)| emit(&s, a.out.as_ref()).map(|_| ok))
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("algtrace: some detections were wrong");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("algtrace: {e}");
            ExitCode::from(2)
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn main_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            ExitCode::from(e.exit_code().clamp(0, 255) as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format() {
        assert_eq!(fmt_float(15.0 / 7.0), "2.14285714286");
        assert_eq!(fmt_float(3.0), "3");
        assert_eq!(fmt_float(0.32768), "0.32768");
    }

    #[test]
    fn fig3_small_values() {
        let csv = fig3_csv(&Fig3Args {
            range: DRange {
                d_min: 1,
                d_max: 25,
                d_step: 1,
            },
            ..Default::default()
        })
        .unwrap();
        let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(
            rows[0],
            "d,det_noninc,det_inc,rand_noninc,rand_inc_ceil_inner,rand_inc_product"
        );
        assert!(rows[1].starts_with("1,1,2,1,"));
        assert!(rows[25].starts_with("25,25,3,"));
    }

    #[test]
    fn bad_range() {
        let a = Fig4Args {
            range: DRange {
                d_min: 5,
                d_max: 2,
                d_step: 1,
            },
            ..Default::default()
        };
        assert!(fig4_csv(&a).is_err());
    }

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from([
            "algtrace", "fig3", "--p", "11", "--d-max", "9", "--scheme", "cutoff",
        ])
        .unwrap();
        match cli.command {
            Command::Fig3(a) => {
                assert_eq!((a.p, a.range.d_max, a.scheme), (11, 9, SchemeName::Cutoff))
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["algtrace", "fig5"]).is_err());
    }
}
