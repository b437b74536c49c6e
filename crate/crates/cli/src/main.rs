use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use setstab::detectability::DetectabilityKind;
use setstab::domain::{ControlAffine, Outcome, PassiveSystem, SmoothField, Verdict, Witness};
use setstab::integrate::{integrate, Trajectory};
use setstab::limitsets::{omega_limit_estimate, prolongational_limit_estimate, LimitSetEstimate};
use setstab::scenarios::{
    self, Check, CheckOutput, FeedbackSpec, FieldTask, RelativeTo, Scenario, ScenarioConfig, Theorem,
};
use setstab::stability::Property;

const SCHEMA_VERSION: u64 = 1;

#[derive(Parser, Debug)]
#[command(name = "setstab", version, about = "Passivity-based set stabilization checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Built-in scenario name (see `scenario list`).
    #[arg(long, global = true, env = "SETSTAB_SCENARIO")]
    scenario: Option<String>,
    /// Scenario JSON file, used instead of a built-in.
    #[arg(long, global = true, env = "SETSTAB_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "SETSTAB_SEED")]
    seed: Option<u64>,
    #[arg(long, global = true, env = "SETSTAB_RTOL")]
    rtol: Option<f64>,
    #[arg(long, global = true, env = "SETSTAB_ATOL")]
    atol: Option<f64>,
    /// Integration horizon.
    #[arg(long = "T", global = true, env = "SETSTAB_T")]
    horizon: Option<f64>,
    /// Sampling box, `lo:hi` for every coordinate or `lo:hi,lo:hi,...`.
    #[arg(long = "box", global = true, env = "SETSTAB_BOX", allow_hyphen_values = true)]
    sample_box: Option<String>,
    /// Sample count for passivity and stability sampling.
    #[arg(long, global = true, env = "SETSTAB_SAMPLES")]
    samples: Option<usize>,
    /// JSON report path; stdout when absent.
    #[arg(long, global = true, env = "SETSTAB_OUT")]
    out: Option<PathBuf>,
    /// Directory for CSV trajectories and clouds.
    #[arg(long, global = true, env = "SETSTAB_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Open or closed loop; `auto` closes the loop when the scenario has a feedback.
    #[arg(long = "loop", global = true, value_enum, default_value_t = LoopMode::Auto, env = "SETSTAB_LOOP")]
    loop_mode: LoopMode,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one trajectory.
    Simulate {
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
    },
    /// Check the passivity identities on box samples.
    CheckPassivity,
    /// Estimate a limit set from one initial condition.
    LimitSet {
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long, value_enum, default_value_t = Estimate::Omega)]
        estimate: Estimate,
    },
    /// Check a stability property of the goal set.
    CheckStability {
        #[arg(long, value_enum)]
        property: PropertyArg,
        /// Restrict initial conditions to a subset.
        #[arg(long, value_enum)]
        relative: Option<RelativeArg>,
    },
    /// Test the hypotheses and conclusion of a reduction principle.
    CheckReduction {
        #[arg(long, value_enum)]
        theorem: TheoremArg,
        #[arg(long)]
        global: bool,
    },
    /// Classify detectability or test its sufficient conditions.
    CheckDetectability {
        #[arg(long, value_enum, default_value_t = DetectArg::GammaDetect)]
        kind: DetectArg,
        #[arg(long)]
        global: bool,
    },
    /// Built-in scenarios.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
}

#[derive(Subcommand, Debug)]
enum ScenarioAction {
    /// Run every expected-verdict table.
    RunAll,
    List,
    /// Print a scenario configuration.
    Show { name: String },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum LoopMode {
    Auto,
    Open,
    Closed,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Estimate {
    Omega,
    Prolongational,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PropertyArg {
    Stable,
    SemiAttractor,
    GlobalAttractor,
    UniformSemiAttractor,
    #[value(alias = "sas")]
    SemiAsymptoticallyStable,
    #[value(alias = "gsas")]
    GloballySemiAsymptoticallyStable,
}

impl From<PropertyArg> for Property {
    fn from(p: PropertyArg) -> Self {
        match p {
            PropertyArg::Stable => Property::Stable,
            PropertyArg::SemiAttractor => Property::SemiAttractor,
            PropertyArg::GlobalAttractor => Property::GlobalAttractor,
            PropertyArg::UniformSemiAttractor => Property::UniformSemiAttractor,
            PropertyArg::SemiAsymptoticallyStable => Property::SemiAsymptoticallyStable,
            PropertyArg::GloballySemiAsymptoticallyStable => Property::GloballySemiAsymptoticallyStable,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RelativeArg {
    O,
    VZero,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TheoremArg {
    Attractivity,
    Sas,
    Stability,
    Cascade,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DetectArg {
    ZeroState,
    VDetect,
    GammaDetect,
    Sufficient,
    Alternative,
    Theorem5,
    Lemma4,
}

struct Report {
    command: &'static str,
    scenario: Option<String>,
    seed: u64,
    results: Vec<Value>,
    outcomes: Vec<Outcome>,
    files: Vec<String>,
}

impl Report {
    fn new(command: &'static str, scenario: Option<String>, seed: u64) -> Self {
        Report {
            command,
            scenario,
            seed,
            results: vec![],
            outcomes: vec![],
            files: vec![],
        }
    }

    fn push(&mut self, outcome: Outcome, mut entry: Value) {
        entry["outcome"] = json!(outcome);
        self.outcomes.push(outcome);
        self.results.push(entry);
    }

    fn outcome(&self) -> Outcome {
        if self.outcomes.contains(&Outcome::Fails) {
            Outcome::Fails
        } else if self.outcomes.contains(&Outcome::Inconclusive) {
            Outcome::Inconclusive
        } else {
            Outcome::Holds
        }
    }

    fn to_json(&self) -> Value {
        let outcome = self.outcome();
        json!({
            "schema_version": SCHEMA_VERSION,
            "tool": concat!("setstab ", env!("CARGO_PKG_VERSION")),
            "command": self.command,
            "scenario": self.scenario,
            "seed": self.seed,
            "outcome": outcome,
            "exit_code": exit_code(outcome),
            "results": self.results,
            "files": self.files,
        })
    }
}

fn exit_code(o: Outcome) -> u8 {
    match o {
        Outcome::Holds => 0,
        Outcome::Fails => 1,
        Outcome::Inconclusive => 2,
    }
}

fn parse_vector(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad number {v:?} in {s:?}")))
        .collect()
}

fn parse_box(s: &str, n: usize) -> anyhow::Result<Vec<(f64, f64)>> {
    let pairs = s
        .split(',')
        .map(|p| {
            let (lo, hi) = p
                .split_once(':')
                .ok_or_else(|| anyhow!("box entry {p:?} is not lo:hi"))?;
            let num = |v: &str| v.trim().parse::<f64>().with_context(|| format!("bad number {v:?} in box entry {p:?}"));
            let (lo, hi) = (num(lo)?, num(hi)?);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                bail!("box entry {p:?} needs finite lo <= hi");
            }
            Ok((lo, hi))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    match pairs.len() {
        1 => Ok(vec![pairs[0]; n]),
        k if k == n => Ok(pairs),
        k => bail!("box has {k} entries, the state has {n} coordinates"),
    }
}

impl Common {
    fn apply(&self, cfg: &mut ScenarioConfig) -> anyhow::Result<()> {
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        for ic in cfg.integrators_mut() {
            if let Some(r) = self.rtol {
                ic.rtol = r;
            }
            if let Some(a) = self.atol {
                ic.atol = a;
            }
        }
        if let Some(t) = self.horizon {
            cfg.integrator.horizon = t;
            cfg.limits.integrator.horizon = t;
            for s in [&mut cfg.stability, &mut cfg.detect.stability] {
                s.horizon = t;
                s.max_horizon = s.max_horizon.max(t);
            }
        }
        if let Some(b) = &self.sample_box {
            cfg.ic_box = parse_box(b, cfg.system.state_dim())?;
        }
        if let Some(k) = self.samples {
            cfg.stability.samples = k;
            cfg.detect.stability.samples = k;
        }
        Ok(())
    }

    fn scenario(&self) -> anyhow::Result<Scenario> {
        let mut cfg = match (&self.config, &self.scenario) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            (None, Some(name)) => scenarios::builtin_config(name)?,
            (None, None) => bail!("give --scenario NAME or --config FILE"),
        };
        self.apply(&mut cfg)?;
        Ok(Scenario::from_config(cfg)?)
    }

    fn closed_loop(&self, s: &Scenario) -> bool {
        match self.loop_mode {
            LoopMode::Auto => s.config.feedback != FeedbackSpec::None,
            LoopMode::Open => false,
            LoopMode::Closed => true,
        }
    }

    fn data_file(&self, name: &str) -> anyhow::Result<Option<PathBuf>> {
        let Some(dir) = &self.data_dir else { return Ok(None) };
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Some(dir.join(name)))
    }
}

struct Simulate<'a> {
    x0: &'a [f64],
    cfg: &'a setstab::integrate::IntegratorConfig,
}

impl FieldTask<Trajectory> for Simulate<'_> {
    fn run<F: SmoothField>(self, field: &F) -> setstab::Result<Trajectory> {
        integrate(field, self.x0, self.cfg)
    }
}

struct Limit<'a> {
    x0: &'a [f64],
    estimate: Estimate,
    cfg: &'a setstab::limitsets::LimitConfig,
}

impl FieldTask<LimitSetEstimate> for Limit<'_> {
    fn run<F: SmoothField>(self, field: &F) -> setstab::Result<LimitSetEstimate> {
        match self.estimate {
            Estimate::Omega => omega_limit_estimate(field, self.x0, self.cfg),
            Estimate::Prolongational => prolongational_limit_estimate(field, self.x0, None, self.cfg),
        }
    }
}

fn initial(s: &Scenario, x0: &Option<String>) -> anyhow::Result<Vec<f64>> {
    let x0 = match x0 {
        Some(text) => parse_vector(text)?,
        None => s.config.x0.clone(),
    };
    let n = s.model().state_dim();
    if x0.len() != n {
        bail!("x0 has {} coordinates, the state has {n}", x0.len());
    }
    Ok(x0)
}

fn simulate(common: &Common, x0: &Option<String>, report: &mut Report) -> anyhow::Result<()> {
    let s = common.scenario()?;
    let x0 = initial(&s, x0)?;
    let closed = common.closed_loop(&s);
    let tr = s.with_field(closed, Simulate { x0: &x0, cfg: &s.config.integrator })?;
    let m = s.model();
    let v: Vec<f64> = tr.states.iter().map(|x| m.storage::<f64>(x)).collect();
    let rise = v.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let last = tr.final_state();
    report.push(
        Outcome::Holds,
        json!({
            "kind": "simulation",
            "x0": x0,
            "closed_loop": closed,
            "termination": tr.termination,
            "final_time": tr.final_time(),
            "final_state": last,
            "samples": tr.len(),
            "dist_gamma_final": s.gamma.dist(last),
            "dist_o_final": s.o_set.as_ref().map(|o| o.dist(last)),
            "storage_initial": v[0],
            "storage_final": v[v.len() - 1],
            "storage_max_increase": rise,
        }),
    );
    if let Some(path) = common.data_file(&format!("{}_trajectory.csv", s.name()))? {
        tr.save_csv(&path)?;
        report.files.push(path.display().to_string());
    }
    eprintln!(
        "{}: integrated to t = {} ({:?}), final state {:?}",
        s.name(),
        tr.final_time(),
        tr.termination,
        last
    );
    Ok(())
}

fn limit_set(common: &Common, x0: &Option<String>, estimate: Estimate, report: &mut Report) -> anyhow::Result<()> {
    let s = common.scenario()?;
    let x0 = initial(&s, x0)?;
    let closed = common.closed_loop(&s);
    let est = s.with_field(
        closed,
        Limit {
            x0: &x0,
            estimate,
            cfg: &s.config.limits,
        },
    )?;
    let label = match estimate {
        Estimate::Omega => "omega",
        Estimate::Prolongational => "prolongational",
    };
    let far_gamma = est.farthest_from(s.gamma.as_ref()).map(|(_, d)| d);
    let far_o = s
        .o_set
        .as_ref()
        .and_then(|o| est.farthest_from(o.as_ref()))
        .map(|(_, d)| d);
    report.push(
        Outcome::Holds,
        json!({
            "kind": "limit_set",
            "estimate": label,
            "x0": x0,
            "closed_loop": closed,
            "points": est.points.len(),
            "cells": est.cells,
            "escaped_runs": est.escaped_runs,
            "total_runs": est.total_runs,
            "max_dist_gamma": far_gamma,
            "max_dist_o": far_o,
            "note": est.note,
        }),
    );
    if let Some(path) = common.data_file(&format!("{}_{label}_cloud.csv", s.name()))? {
        est.save_csv(&path)?;
        report.files.push(path.display().to_string());
    }
    eprintln!(
        "{}: {label} estimate with {} points, max distance to goal set {:?}",
        s.name(),
        est.points.len(),
        far_gamma
    );
    Ok(())
}

/// Writes the replay of every witness in `v` and its components.
fn save_witnesses(
    common: &Common,
    s: &Scenario,
    closed: bool,
    tag: &str,
    v: &Verdict,
    report: &mut Report,
) -> anyhow::Result<()> {
    if common.data_dir.is_none() {
        return Ok(());
    }
    let mut stack = vec![v];
    while let Some(v) = stack.pop() {
        stack.extend(v.components.iter());
        let Some(Witness { initial, time, .. }) = &v.witness else { continue };
        if *time <= 0.0 || !time.is_finite() {
            continue;
        }
        let cfg = s.config.integrator.with_horizon(*time);
        let tr = s.with_field(closed, Simulate { x0: initial, cfg: &cfg })?;
        if let Some(path) = common.data_file(&format!("{}_{tag}_{}_witness.csv", s.name(), v.property))? {
            tr.save_csv(&path)?;
            report.files.push(path.display().to_string());
        }
    }
    Ok(())
}

fn print_verdict(name: &str, v: &Verdict) {
    let w = v
        .witness
        .as_ref()
        .map(|w| format!(" (witness x0 = {:?}, t = {}, distance = {})", w.initial, w.time, w.distance))
        .unwrap_or_default();
    eprintln!("{name}: {}: {:?}{w}", v.property, v.outcome);
}

fn push_output(report: &mut Report, name: &str, out: CheckOutput) {
    match out {
        CheckOutput::Verdict(v) => {
            print_verdict(name, &v);
            report.push(v.outcome, json!({ "kind": "verdict", "verdict": v }));
        }
        CheckOutput::Report(r) => {
            for (k, h) in &r.hypotheses {
                eprintln!("{name}: hypothesis ({k}) {}: {:?}", h.property, h.outcome);
            }
            eprintln!("{name}: conclusion {}: {:?}", r.conclusion.property, r.conclusion.outcome);
            eprintln!("{name}: {:?}", r.consistency);
            let outcome = CheckOutput::Report(r.clone()).outcome();
            report.push(outcome, json!({ "kind": "reduction", "report": r }));
        }
    }
}

fn run_check(common: &Common, check: Check, witness_loop: Option<bool>, report: &mut Report) -> anyhow::Result<()> {
    let s = common.scenario()?;
    let out = s.run_check(&check)?;
    if let Some(closed) = witness_loop {
        let tag = report.command.replace("check-", "");
        match &out {
            CheckOutput::Verdict(v) => save_witnesses(common, &s, closed, &tag, v, report)?,
            CheckOutput::Report(r) => {
                save_witnesses(common, &s, closed, &tag, &r.conclusion, report)?;
                for h in r.hypotheses.values() {
                    save_witnesses(common, &s, closed, &tag, h, report)?;
                }
            }
        }
    }
    push_output(report, s.name(), out);
    Ok(())
}

fn run_all(common: &Common, report: &mut Report) -> anyhow::Result<()> {
    let names: Vec<String> = match (&common.config, &common.scenario) {
        (Some(_), _) => vec![String::new()],
        (None, Some(n)) => vec![n.clone()],
        (None, None) => scenarios::list().into_iter().map(String::from).collect(),
    };
    for name in names {
        let s = if name.is_empty() {
            common.scenario()?
        } else {
            let mut cfg = scenarios::builtin_config(&name)?;
            common.apply(&mut cfg)?;
            Scenario::from_config(cfg)?
        };
        let run = s.run_expectations()?;
        for r in run.results {
            let outcome = if r.pass { Outcome::Holds } else { Outcome::Fails };
            eprintln!(
                "{}: {}: {}",
                s.name(),
                serde_json::to_string(&r.expected.check)?,
                if r.pass { "PASS" } else { "FAIL" }
            );
            report.push(
                outcome,
                json!({
                    "kind": "expectation",
                    "scenario": s.name(),
                    "check": r.expected.check,
                    "pass": r.pass,
                    "actual": r.actual,
                }),
            );
        }
    }
    Ok(())
}

fn scenario_entry(cfg: &ScenarioConfig, full: bool) -> Value {
    let mut e = json!({
        "kind": "scenario",
        "name": cfg.name,
        "description": cfg.description,
        "invented": cfg.invented,
    });
    if full {
        e["config"] = json!(cfg);
    }
    e
}

fn execute(cli: &Cli) -> anyhow::Result<Report> {
    let c = &cli.common;
    let seed_of = || -> u64 { c.seed.unwrap_or(0) };
    let cmd_name = match &cli.command {
        Command::Simulate { .. } => "simulate",
        Command::CheckPassivity => "check-passivity",
        Command::LimitSet { .. } => "limit-set",
        Command::CheckStability { .. } => "check-stability",
        Command::CheckReduction { .. } => "check-reduction",
        Command::CheckDetectability { .. } => "check-detectability",
        Command::Scenario { action } => match action {
            ScenarioAction::RunAll => "scenario run-all",
            ScenarioAction::List => "scenario list",
            ScenarioAction::Show { .. } => "scenario show",
        },
    };
    let scenario_name = match &cli.command {
        Command::Scenario { action: ScenarioAction::Show { name } } => Some(name.clone()),
        _ => c.scenario.clone().or_else(|| c.config.as_ref().map(|p| p.display().to_string())),
    };
    let mut report = Report::new(cmd_name, scenario_name, seed_of());
    match &cli.command {
        Command::Simulate { x0 } => simulate(c, x0, &mut report)?,
        Command::LimitSet { x0, estimate } => limit_set(c, x0, *estimate, &mut report)?,
        Command::CheckPassivity => {
            let samples = c.samples.unwrap_or(10_000);
            run_check(c, Check::Passivity { samples }, None, &mut report)?
        }
        Command::CheckStability { property, relative } => {
            let s = c.scenario()?;
            let closed = c.closed_loop(&s);
            let check = Check::Stability {
                property: (*property).into(),
                relative: relative.map(|r| match r {
                    RelativeArg::O => RelativeTo::O,
                    RelativeArg::VZero => RelativeTo::VZero,
                }),
                closed_loop: closed,
            };
            run_check(c, check, Some(closed), &mut report)?
        }
        Command::CheckReduction { theorem, global } => {
            let s = c.scenario()?;
            let closed = c.closed_loop(&s);
            let (check, wl) = match theorem {
                TheoremArg::Cascade => (Check::Cascade { global: *global }, None),
                t => {
                    let theorem = match t {
                        TheoremArg::Attractivity => Theorem::Attractivity,
                        TheoremArg::Sas => Theorem::Sas,
                        _ => Theorem::Stability,
                    };
                    let check = Check::Reduction {
                        theorem,
                        global: *global,
                        closed_loop: closed,
                    };
                    (check, Some(closed))
                }
            };
            run_check(c, check, wl, &mut report)?
        }
        Command::CheckDetectability { kind, global } => {
            let local = !*global;
            let check = match kind {
                DetectArg::ZeroState => Check::Detectability {
                    kind: DetectabilityKind::ZeroState,
                    local,
                },
                DetectArg::VDetect => Check::Detectability {
                    kind: DetectabilityKind::VDetect,
                    local,
                },
                DetectArg::GammaDetect => Check::Detectability {
                    kind: DetectabilityKind::GammaDetect,
                    local,
                },
                DetectArg::Sufficient => Check::SufficientConditions,
                DetectArg::Alternative => Check::Alternative,
                DetectArg::Theorem5 => Check::Theorem5 { global: *global },
                DetectArg::Lemma4 => Check::Lemma4,
            };
            run_check(c, check, None, &mut report)?
        }
        Command::Scenario { action } => match action {
            ScenarioAction::RunAll => run_all(c, &mut report)?,
            ScenarioAction::List => {
                for name in scenarios::list() {
                    let cfg = scenarios::builtin_config(name)?;
                    println!("{name:<26}{}{}", if cfg.invented { "[invented] " } else { "" }, cfg.description);
                    report.push(Outcome::Holds, scenario_entry(&cfg, false));
                }
            }
            ScenarioAction::Show { name } => {
                let mut cfg = scenarios::builtin_config(name)?;
                c.apply(&mut cfg)?;
                report.push(Outcome::Holds, scenario_entry(&cfg, true));
            }
        },
    }
    Ok(report)
}

fn write_report(path: Option<&Path>, report: &Value, to_stdout: bool) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(report)? + "\n";
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None if to_stdout => print!("{text}"),
        None => {}
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    let listing = matches!(
        cli.command,
        Command::Scenario {
            action: ScenarioAction::List
        }
    );
    let result = execute(&cli).and_then(|report| {
        let json = report.to_json();
        write_report(cli.common.out.as_deref(), &json, !listing)?;
        Ok(report.outcome())
    });
    match result {
        Ok(o) => ExitCode::from(exit_code(o)),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
