//! Argument definitions, command dispatch and the structured run report for
//! the `adb` binary.

use std::fmt::Write as _;

use adb_core::harness::{
    classify_partial_atomicity, render_report, render_stats, run_live_race, run_stochastic, validate_probability,
    verify_escalation_closure, verify_external_state, verify_theorem, Classification, HarnessError, LiveConfig,
    StochasticConfig, ViolationStats, WitnessReport, DEFAULT_PAUSE,
};
use adb_core::scenarios::{builtin_summary, load, serialize, BUILTIN_NAMES};
use adb_core::{
    check_consistency, check_nontriviality, AttrId, Boundary, PartitionDescriptor, ScenarioError, ScenarioSpec,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "adb", version, about = "Check atomic and split admission boundaries over finite scenarios")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exhaustive bounded search for a preservation violation.
    Verify(VerifyArgs),
    /// Seeded stochastic or live concurrent violation counts.
    Race(RaceArgs),
    /// Classify a scenario under a local/global attribute partition.
    Classify(ClassifyArgs),
    /// Consistency and non-triviality of the scenario tables.
    Check(CommonArgs),
    /// List builtin scenarios.
    List(FormatArg),
    /// Print a scenario in the canonical file format.
    Export(ScenarioArg),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Structured,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Theorem,
    Escalation,
    External,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Split,
    Atomic,
}

impl From<ModeArg> for Boundary {
    fn from(m: ModeArg) -> Boundary {
        match m {
            ModeArg::Split => Boundary::Split,
            ModeArg::Atomic => Boundary::Atomic,
        }
    }
}

#[derive(Args, Debug)]
pub struct ScenarioArg {
    /// Builtin name or path to a scenario file.
    #[arg(long)]
    pub scenario: String,
}

#[derive(Args, Debug)]
pub struct FormatArg {
    #[arg(long, value_enum, default_value_t = Format::Human)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    #[command(flatten)]
    pub scenario: ScenarioArg,
    #[command(flatten)]
    pub format: FormatArg,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Exploration bound in arcs; defaults to the state count plus two.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, value_enum, default_value_t = Which::Theorem)]
    pub which: Which,
}

#[derive(Args, Debug)]
pub struct RaceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Monte-Carlo trials with the environment firing with probability `p`.
    #[arg(long, conflicts_with = "live", required_unless_present = "live")]
    pub stochastic: bool,
    /// Probability in [0, 1] that the environment fires inside the window.
    #[arg(long, requires = "stochastic")]
    pub p: Option<f64>,
    /// Real threads contending on a versioned cell.
    #[arg(long)]
    pub live: bool,
    /// Disable the forced pause inside the open window.
    #[arg(long, requires = "live")]
    pub no_yield: bool,
    /// Threads per trial: one agent plus `workers - 1` environment threads.
    #[arg(long, default_value_t = 2, requires = "live")]
    pub workers: usize,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    #[arg(long, env = "ADB_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Split)]
    pub mode: ModeArg,
    /// Comma-separated local attributes (overrides the scenario's partition).
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub local: Option<Vec<String>>,
    /// Comma-separated global attributes.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub global: Option<Vec<String>>,
    /// Attributes admissibility reads.
    #[arg(long = "adm-dep", value_delimiter = ',', num_args = 0..)]
    pub adm_dep: Option<Vec<String>>,
    /// Exploration bound in arcs; defaults to the state count plus two.
    #[arg(long)]
    pub depth: Option<usize>,
}

/// One result inside a [`RunReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ReportEntry {
    Witness(WitnessReport),
    Stats {
        stats: ViolationStats,
        live: bool,
        p: Option<f64>,
        seed: u64,
    },
    Classification(Classification),
    Check {
        consistent: bool,
        violations: Vec<String>,
        nontrivial: bool,
        reason: Option<String>,
    },
    Listing {
        name: String,
        summary: String,
    },
}

/// Everything a command produced, as printed with `--format structured`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub scenario: Option<String>,
    pub mode: Option<String>,
    pub reports: Vec<ReportEntry>,
    pub exit_status: i32,
}

/// A command failure that maps to the usage exit status.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

impl From<ScenarioError> for UsageError {
    fn from(e: ScenarioError) -> Self {
        UsageError(e.to_string())
    }
}

impl From<HarnessError> for UsageError {
    fn from(e: HarnessError) -> Self {
        UsageError(e.to_string())
    }
}

/// Output of one command: the report and its human rendering.
pub struct Rendered {
    pub report: RunReport,
    pub human: String,
}

impl Rendered {
    pub fn output(&self, format: Format) -> String {
        match format {
            Format::Human => self.human.clone(),
            Format::Structured => {
                let mut s = serde_json::to_string_pretty(&self.report).expect("reports serialize");
                s.push('\n');
                s
            }
        }
    }
}

pub fn format_of(command: &Command) -> Format {
    match command {
        Command::Verify(a) => a.common.format.format,
        Command::Race(a) => a.common.format.format,
        Command::Classify(a) => a.common.format.format,
        Command::Check(a) => a.format.format,
        Command::List(a) => a.format,
        Command::Export(_) => Format::Human,
    }
}

pub fn run(command: &Command) -> Result<Rendered, UsageError> {
    match command {
        Command::Verify(a) => verify(a),
        Command::Race(a) => race(a),
        Command::Classify(a) => classify(a),
        Command::Check(a) => check(a),
        Command::List(_) => Ok(list()),
        Command::Export(a) => {
            let sc = load(&a.scenario)?;
            Ok(Rendered {
                report: RunReport {
                    command: "export".into(),
                    scenario: Some(sc.name.clone()),
                    mode: None,
                    reports: Vec::new(),
                    exit_status: EXIT_OK,
                },
                human: serialize(&sc),
            })
        }
    }
}

/// Exit status for a set of witness reports: any mismatch wins, then any
/// inconclusive outcome.
pub fn witness_exit_status(reports: &[WitnessReport]) -> i32 {
    let verdicts: Vec<_> = reports.iter().map(WitnessReport::matches_expectation).collect();
    if verdicts.contains(&Some(false)) {
        EXIT_MISMATCH
    } else if verdicts.contains(&None) {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_OK
    }
}

fn verify(a: &VerifyArgs) -> Result<Rendered, UsageError> {
    let sc = load(&a.common.scenario.scenario)?;
    let depth = a.depth.unwrap_or_else(|| sc.default_depth());
    let (first, second) = match a.which {
        Which::Theorem => verify_theorem(&sc, depth),
        Which::Escalation => verify_escalation_closure(&sc, depth),
        Which::External => verify_external_state(&sc, depth),
    };
    let reports = vec![first, second];
    let exit_status = witness_exit_status(&reports);
    let human: String = reports.iter().map(|r| render_report(&sc, r)).collect();
    Ok(Rendered {
        report: RunReport {
            command: "verify".into(),
            scenario: Some(sc.name.clone()),
            mode: Some(
                match a.which {
                    Which::Theorem => "theorem",
                    Which::Escalation => "escalation",
                    Which::External => "external",
                }
                .into(),
            ),
            reports: reports.into_iter().map(ReportEntry::Witness).collect(),
            exit_status,
        },
        human,
    })
}

fn race(a: &RaceArgs) -> Result<Rendered, UsageError> {
    let sc = load(&a.common.scenario.scenario)?;
    let mode: Boundary = a.mode.into();
    let (stats, p) = if a.live {
        let cfg = LiveConfig {
            trials: a.trials,
            workers: a.workers,
            seed: a.seed,
            pause: if a.no_yield { None } else { Some(DEFAULT_PAUSE) },
        };
        (run_live_race(&sc, mode, &cfg)?, None)
    } else {
        let p = a.p.ok_or_else(|| UsageError("--stochastic requires --p".into()))?;
        validate_probability(p)?;
        let cfg = StochasticConfig {
            trials: a.trials,
            p,
            seed: a.seed,
        };
        (run_stochastic(&sc, mode, &cfg)?, Some(p))
    };
    let mismatch = !stats.replay_ok || (mode == Boundary::Atomic && stats.violations > 0);
    let exit_status = if mismatch { EXIT_MISMATCH } else { EXIT_OK };
    let mut human = format!("{} ", sc.name);
    match p {
        Some(p) => {
            let _ = write!(human, "stochastic p={p} seed={}: ", a.seed);
        }
        None => {
            let _ = write!(human, "live workers={} seed={}: ", a.workers, a.seed);
        }
    }
    human.push_str(&render_stats(&stats));
    human.push('\n');
    Ok(Rendered {
        report: RunReport {
            command: "race".into(),
            scenario: Some(sc.name.clone()),
            mode: Some(if a.live { "live" } else { "stochastic" }.into()),
            reports: vec![ReportEntry::Stats {
                stats,
                live: a.live,
                p,
                seed: a.seed,
            }],
            exit_status,
        },
        human,
    })
}

fn resolve_attrs(sc: &ScenarioSpec, names: &[String]) -> Result<Vec<AttrId>, UsageError> {
    names
        .iter()
        .filter(|n| !n.is_empty())
        .map(|n| sc.attr_named(n).ok_or_else(|| UsageError(format!("undeclared attribute `{n}`"))))
        .collect()
}

fn attr_list(sc: &ScenarioSpec, attrs: &[AttrId]) -> String {
    if attrs.is_empty() {
        return "-".into();
    }
    attrs
        .iter()
        .map(|a| sc.attributes[a.index()].name.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

fn classify(a: &ClassifyArgs) -> Result<Rendered, UsageError> {
    let sc = load(&a.common.scenario.scenario)?;
    let overrides = [&a.local, &a.global, &a.adm_dep];
    let partition = match (&sc.partition, overrides.iter().all(|o| o.is_some())) {
        (None, false) => return Err(HarnessError::MissingPartition(sc.name.clone()).into()),
        (base, _) => {
            let mut p = base.clone().unwrap_or(PartitionDescriptor {
                local: Vec::new(),
                global: Vec::new(),
                adm_dependency: Vec::new(),
            });
            if let Some(l) = &a.local {
                p.local = resolve_attrs(&sc, l)?;
            }
            if let Some(g) = &a.global {
                p.global = resolve_attrs(&sc, g)?;
            }
            if let Some(d) = &a.adm_dep {
                p.adm_dependency = resolve_attrs(&sc, d)?;
            }
            p
        }
    };
    let depth = a.depth.unwrap_or_else(|| sc.default_depth());
    let c = classify_partial_atomicity(&sc, Some(&partition), a.mode.into(), depth)?;
    let mut human = format!(
        "{}: {} (local: {}; global: {}; admissibility reads: {})\n",
        sc.name,
        c.class.as_str(),
        attr_list(&sc, &c.partition.local),
        attr_list(&sc, &c.partition.global),
        attr_list(&sc, &c.partition.adm_dependency)
    );
    if let Some((trace, v)) = &c.witness {
        let _ = writeln!(human, "  violation through the unfused window:");
        let _ = writeln!(human, "  {}", sc.describe_state(trace.initial));
        for i in 1..=trace.len() {
            let mark = if i == v.index { "   <- violation" } else { "" };
            let _ = writeln!(human, "  {i}. {}{mark}", sc.render_label(&trace.label(i)));
            let _ = writeln!(human, "  {}", sc.describe_state(trace.state(i)));
        }
    }
    Ok(Rendered {
        report: RunReport {
            command: "classify".into(),
            scenario: Some(sc.name.clone()),
            mode: Some(
                match a.mode {
                    ModeArg::Split => "split",
                    ModeArg::Atomic => "atomic",
                }
                .into(),
            ),
            reports: vec![ReportEntry::Classification(c)],
            exit_status: EXIT_OK,
        },
        human,
    })
}

fn check(a: &CommonArgs) -> Result<Rendered, UsageError> {
    let sc = load(&a.scenario.scenario)?;
    let verdict = check_consistency(&sc.decision, &sc.adm).map_err(|e| UsageError(e.to_string()))?;
    let violations: Vec<String> = verdict
        .violations()
        .iter()
        .map(|v| {
            format!(
                "condition {} fails at ({}, {})",
                v.condition,
                sc.state_name(v.state),
                sc.agent_name(v.action)
            )
        })
        .collect();
    let nt = check_nontriviality(&sc);
    let reason = nt.failure_reason();
    let mut human = format!(
        "{}: decision table {}; scenario {}\n",
        sc.name,
        if verdict.is_consistent() { "consistent" } else { "inconsistent" },
        if nt.passes() { "non-trivial" } else { "trivial" }
    );
    for v in &violations {
        let _ = writeln!(human, "  {v}");
    }
    if let Some(r) = &reason {
        let _ = writeln!(human, "  {r}");
    }
    let exit_status = if !verdict.is_consistent() {
        EXIT_MISMATCH
    } else if !nt.passes() {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_OK
    };
    Ok(Rendered {
        report: RunReport {
            command: "check".into(),
            scenario: Some(sc.name.clone()),
            mode: None,
            reports: vec![ReportEntry::Check {
                consistent: verdict.is_consistent(),
                violations,
                nontrivial: nt.passes(),
                reason,
            }],
            exit_status,
        },
        human,
    })
}

fn list() -> Rendered {
    let reports: Vec<ReportEntry> = BUILTIN_NAMES
        .iter()
        .map(|n| ReportEntry::Listing {
            name: n.to_string(),
            summary: builtin_summary(n).unwrap_or_default().to_string(),
        })
        .collect();
    let human = BUILTIN_NAMES
        .iter()
        .map(|n| format!("{n:<20} {}\n", builtin_summary(n).unwrap_or_default()))
        .collect();
    Rendered {
        report: RunReport {
            command: "list".into(),
            scenario: None,
            mode: None,
            reports,
            exit_status: EXIT_OK,
        },
        human,
    }
}
