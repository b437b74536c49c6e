//! Named scenarios: a system, its sets and feedback, and a table of expected
//! verdicts. Built-ins and JSON files share one format.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::models::{CascadeKind, CascadeModel, Model};
use crate::calculus::CalculusConfig;
use crate::detectability::{
    check_alternative_condition, check_detectability, check_lemma4, check_sufficient_conditions,
    theorem5_harness, DetectConfig, DetectabilityKind, OSetSpec,
};
use crate::domain::{
    CascadeSystem,
    close_loop, seeded_box_samples, Chart, ClosedSet, ControlAffine, CoordinateSubspace, Drift,
    LiftedSet, OutputFeedback, Outcome, PointSet, SmoothField, Verdict, WholeSpace,
};
use crate::error::{check_dim, Error, Result};
use crate::integrate::{integrate_closed_loop, IntegratorConfig};
use crate::limitsets::{omega_limit_estimate, LimitConfig};
use crate::passivity::{check_passivity, check_storage_monotone, PASSIVITY_TOL};
use crate::reduction::{
    check_cascade, check_reduction_attractivity, check_reduction_sas, check_reduction_stability,
    Consistency, ReductionReport,
};
use crate::stability::{
    check_local_stability_near, check_lub, check_property, Property, StabilityConfig,
    StabilityQuery,
};

fn default_extent() -> f64 {
    2.0
}

/// A closed set in serializable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case")]
pub enum SetSpec {
    Point {
        point: Vec<f64>,
        #[serde(default)]
        chart: Chart,
    },
    /// `{x : x_i = 0 for i in zero}`, sampled within `extent` of the origin.
    Subspace {
        dim: usize,
        zero: Vec<usize>,
        #[serde(default = "default_extent")]
        extent: f64,
        #[serde(default)]
        chart: Chart,
    },
    Whole {
        dim: usize,
        #[serde(default = "default_extent")]
        extent: f64,
    },
    /// `inner × {0}` with `extra` trailing zero coordinates.
    Lifted { inner: Box<SetSpec>, extra: usize },
}

impl SetSpec {
    pub fn build(&self) -> Result<Arc<dyn ClosedSet>> {
        Ok(match self {
            SetSpec::Point { point, chart } => Arc::new(PointSet::with_chart(point.clone(), *chart)),
            SetSpec::Subspace {
                dim,
                zero,
                extent,
                chart,
            } => Arc::new(CoordinateSubspace::with_chart(*dim, zero.clone(), *extent, *chart)?),
            SetSpec::Whole { dim, extent } => Arc::new(WholeSpace::new(*dim, *extent)),
            SetSpec::Lifted { inner, extra } => Arc::new(LiftedSet {
                inner: inner.build()?,
                extra: *extra,
            }),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "feedback", rename_all = "snake_case")]
pub enum FeedbackSpec {
    #[default]
    None,
    /// `u = −gain · y`.
    Output { gain: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelativeTo {
    O,
    VZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    Attractivity,
    Sas,
    Stability,
}

fn default_samples() -> usize {
    2000
}

fn default_runs() -> usize {
    100
}

/// One check a scenario can run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum Check {
    /// Passivity identities on box samples.
    Passivity {
        #[serde(default = "default_samples")]
        samples: usize,
    },
    /// Closed-loop storage nonincreasing from box initial conditions.
    StorageMonotone {
        #[serde(default = "default_runs")]
        runs: usize,
    },
    Stability {
        property: Property,
        #[serde(default)]
        relative: Option<RelativeTo>,
        #[serde(default)]
        closed_loop: bool,
    },
    LocalStabilityNear {
        #[serde(default)]
        closed_loop: bool,
    },
    Lub {
        #[serde(default)]
        closed_loop: bool,
    },
    Reduction {
        theorem: Theorem,
        #[serde(default)]
        global: bool,
        #[serde(default)]
        closed_loop: bool,
    },
    Cascade {
        #[serde(default)]
        global: bool,
    },
    Detectability {
        kind: DetectabilityKind,
        #[serde(default = "yes")]
        local: bool,
    },
    SufficientConditions,
    Alternative,
    Theorem5 {
        #[serde(default)]
        global: bool,
    },
    /// `S` and `S′` membership agree on the ω-limit cloud of `x0`.
    Lemma4,
}

fn yes() -> bool {
    true
}

/// An expected outcome. Verdict checks compare `outcome`; report checks
/// compare `consistency` and any listed hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub check: Check,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency: Option<Consistency>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hypotheses: BTreeMap<String, Outcome>,
}

impl Expectation {
    fn verdict(check: Check, outcome: Outcome) -> Self {
        Expectation {
            check,
            outcome: Some(outcome),
            consistency: None,
            hypotheses: BTreeMap::new(),
        }
    }

    fn report(check: Check, consistency: Consistency, hyps: &[(&str, Outcome)], conclusion: Option<Outcome>) -> Self {
        Expectation {
            check,
            outcome: conclusion,
            consistency: Some(consistency),
            hypotheses: hyps.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn matches(&self, out: &CheckOutput) -> bool {
        match out {
            CheckOutput::Verdict(v) => self.outcome.is_none_or(|o| o == v.outcome),
            CheckOutput::Report(r) => {
                self.consistency.is_none_or(|c| c == r.consistency)
                    && self.outcome.is_none_or(|o| o == r.conclusion.outcome)
                    && self
                        .hypotheses
                        .iter()
                        .all(|(k, o)| r.hypotheses.get(k).is_some_and(|v| v.outcome == *o))
            }
        }
    }
}

/// Everything a scenario file holds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Not taken from the examples; made up to exercise a code path.
    #[serde(default)]
    pub invented: bool,
    pub system: Model,
    pub gamma: SetSpec,
    #[serde(default)]
    pub o_set: Option<SetSpec>,
    #[serde(default)]
    pub v_zero: Option<SetSpec>,
    #[serde(default)]
    pub feedback: FeedbackSpec,
    /// Sampling box for passivity samples and random initial conditions.
    pub ic_box: Vec<(f64, f64)>,
    /// Default initial condition for simulation and limit sets.
    pub x0: Vec<f64>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub limits: LimitConfig,
    #[serde(default)]
    pub detect: DetectConfig,
    #[serde(default)]
    pub expected: Vec<Expectation>,
}

impl ScenarioConfig {
    /// Every integrator setting the checks use.
    pub fn integrators_mut(&mut self) -> [&mut IntegratorConfig; 5] {
        [
            &mut self.integrator,
            &mut self.stability.integrator,
            &mut self.limits.integrator,
            &mut self.detect.stability.integrator,
            &mut self.detect.limits.integrator,
        ]
    }

    /// Re-seeds every sampling stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.stability.seed = seed;
        self.limits.seed = seed;
        self.detect.seed = seed;
        self.detect.stability.seed = seed;
        self.detect.limits.seed = seed;
    }
}

/// A constructed scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub gamma: Arc<dyn ClosedSet>,
    pub o_set: Option<Arc<dyn ClosedSet>>,
    pub v_zero: Option<Arc<dyn ClosedSet>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CheckOutput {
    Report(ReductionReport),
    Verdict(Verdict),
}

impl CheckOutput {
    /// Outcome used for exit codes: a report counts as holding when it is
    /// consistent or its hypotheses are not met.
    pub fn outcome(&self) -> Outcome {
        match self {
            CheckOutput::Verdict(v) => v.outcome,
            CheckOutput::Report(r) => match r.consistency {
                Consistency::Consistent | Consistency::HypothesesNotMet => Outcome::Holds,
                Consistency::Inconsistent => Outcome::Fails,
                Consistency::Inconclusive => Outcome::Inconclusive,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpectationResult {
    pub expected: Expectation,
    pub actual: CheckOutput,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioRun {
    pub scenario: String,
    pub seed: u64,
    pub results: Vec<ExpectationResult>,
}

impl ScenarioRun {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }
}

fn validate_model(m: &Model) -> Result<()> {
    match m {
        Model::Polynomial(p) => p.validate(),
        Model::Cascade(CascadeModel {
            kind: CascadeKind::Linear { a, m, c },
        }) => {
            if a.nrows() != a.ncols() || c.nrows() != c.ncols() || m.len() != c.nrows() {
                return Err(Error::Input("linear cascade needs square A, C and one M per y".into()));
            }
            if m.iter().any(|mk| mk.shape() != a.shape()) {
                return Err(Error::Input("each M must have the shape of A".into()));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self> {
        validate_model(&config.system)?;
        let n = config.system.state_dim();
        let gamma = config.gamma.build()?;
        check_dim("goal set", n, gamma.dim())?;
        let build = |s: &Option<SetSpec>, what: &str| -> Result<Option<Arc<dyn ClosedSet>>> {
            s.as_ref()
                .map(|s| {
                    let set = s.build()?;
                    check_dim(what, n, set.dim())?;
                    Ok(set)
                })
                .transpose()
        };
        let o_set = build(&config.o_set, "O set")?;
        let v_zero = build(&config.v_zero, "zero set of V")?;
        check_dim("initial condition box", n, config.ic_box.len())?;
        check_dim("initial condition", n, config.x0.len())?;
        config.integrator.validate()?;
        config.stability.validate()?;
        Ok(Scenario {
            config,
            gamma,
            o_set,
            v_zero,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_config(serde_json::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn model(&self) -> &Model {
        &self.config.system
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.config.set_seed(seed);
    }

    pub fn seed(&self) -> u64 {
        self.config.stability.seed
    }

    fn o(&self) -> Result<&dyn ClosedSet> {
        self.o_set
            .as_deref()
            .ok_or_else(|| Error::Input(format!("scenario {} defines no O set", self.name())))
    }

    fn v0(&self) -> Result<&dyn ClosedSet> {
        self.v_zero
            .as_deref()
            .ok_or_else(|| Error::Input(format!("scenario {} defines no zero set of V", self.name())))
    }

    fn gain(&self) -> Result<f64> {
        match self.config.feedback {
            FeedbackSpec::Output { gain } => Ok(gain),
            FeedbackSpec::None => Err(Error::Input(format!("scenario {} has no feedback", self.name()))),
        }
    }

    /// Runs `k` on the open or closed loop.
    pub fn with_field<T>(&self, closed_loop: bool, k: impl FieldTask<T>) -> Result<T> {
        let m = self.model();
        if closed_loop {
            let fb = OutputFeedback { sys: m, gain: self.gain()? };
            let cl = close_loop(m, &fb)?;
            k.run(&cl)
        } else {
            k.run(&Drift(m))
        }
    }

    pub fn run_check(&self, check: &Check) -> Result<CheckOutput> {
        let m = self.model();
        let cfg = &self.config.stability;
        let gamma = self.gamma.as_ref();
        let v = |v: Verdict| Ok(CheckOutput::Verdict(v.tagged(Some(self.name()), Some(self.seed()))));
        match check {
            Check::Passivity { samples } => {
                let pts = seeded_box_samples(&self.config.ic_box, *samples, self.seed());
                v(check_passivity(m, &pts, PASSIVITY_TOL)?)
            }
            Check::StorageMonotone { runs } => {
                let fb = OutputFeedback { sys: m, gain: self.gain()? };
                let pts = seeded_box_samples(&self.config.ic_box, *runs, self.seed());
                let icfg = &self.config.integrator;
                for x0 in &pts {
                    let tr = integrate_closed_loop(m, &fb, x0, icfg)?;
                    let verdict = check_storage_monotone(&tr, icfg.rtol, icfg.atol)?;
                    if !verdict.outcome.holds() {
                        return v(verdict.param("runs", runs));
                    }
                }
                v(Verdict::holds("storage_monotone").param("runs", runs))
            }
            Check::Stability {
                property,
                relative,
                closed_loop,
            } => {
                let rel = match relative {
                    None => None,
                    Some(RelativeTo::O) => Some(self.o()?),
                    Some(RelativeTo::VZero) => Some(self.v0()?),
                };
                let q = StabilityQuery {
                    property: *property,
                    relative_to: rel,
                    config: cfg.clone(),
                };
                v(self.with_field(*closed_loop, StabilityTask { gamma, q: &q })?)
            }
            Check::LocalStabilityNear { closed_loop } => {
                let o = self.o()?;
                v(self.with_field(*closed_loop, LocalTask { gamma, o, cfg })?)
            }
            Check::Lub { closed_loop } => v(self.with_field(*closed_loop, LubTask { gamma, cfg })?),
            Check::Reduction {
                theorem,
                global,
                closed_loop,
            } => {
                let o = self.o()?;
                let task = ReductionTask {
                    gamma,
                    o,
                    cfg,
                    theorem: *theorem,
                    global: *global,
                };
                Ok(CheckOutput::Report(self.with_field(*closed_loop, task)?))
            }
            Check::Cascade { global } => {
                let c = m
                    .cascade()
                    .ok_or_else(|| Error::Input(format!("scenario {} is not a cascade", self.name())))?;
                let gx = match &self.config.gamma {
                    SetSpec::Lifted { inner, .. } => inner.build()?,
                    _ => return Err(Error::Input("cascade goal set must be given as a lifted set".into())),
                };
                Ok(CheckOutput::Report(check_cascade(c, gx, cfg, *global)?))
            }
            Check::Detectability { kind, local } => {
                let o = OSetSpec::Explicit(self.o_set.clone().ok_or_else(|| {
                    Error::Input(format!("scenario {} defines no O set", self.name()))
                })?);
                v(check_detectability(m, gamma, &o, *kind, *local, &self.config.detect)?)
            }
            Check::SufficientConditions => v(check_sufficient_conditions(m, gamma, &self.config.detect)?),
            Check::Alternative => v(check_alternative_condition(m, gamma, self.v0()?, self.o()?, cfg)?),
            Check::Theorem5 { global } => {
                let fb = OutputFeedback { sys: m, gain: self.gain()? };
                let o = self.o_set.clone().ok_or_else(|| Error::Input("theorem 5 needs an O set".into()))?;
                Ok(CheckOutput::Report(theorem5_harness(m, &fb, gamma, o, *global, &self.config.detect)?))
            }
            Check::Lemma4 => {
                let cloud = omega_limit_estimate(&Drift(m), &self.config.x0, &self.config.limits)?;
                v(check_lemma4(m, &cloud.points, &CalculusConfig::default())?)
            }
        }
    }

    /// Runs every expectation of the table.
    pub fn run_expectations(&self) -> Result<ScenarioRun> {
        let results = self
            .config
            .expected
            .iter()
            .map(|e| {
                let actual = self.run_check(&e.check)?;
                Ok(ExpectationResult {
                    pass: e.matches(&actual),
                    expected: e.clone(),
                    actual,
                })
            })
            .collect::<Result<_>>()?;
        Ok(ScenarioRun {
            scenario: self.name().to_string(),
            seed: self.seed(),
            results,
        })
    }
}

/// A computation generic over the vector field, so the open and closed
/// loop can share one call site.
pub trait FieldTask<T> {
    fn run<F: SmoothField>(self, field: &F) -> Result<T>;
}

struct StabilityTask<'a> {
    gamma: &'a dyn ClosedSet,
    q: &'a StabilityQuery<'a>,
}

impl FieldTask<Verdict> for StabilityTask<'_> {
    fn run<F: SmoothField>(self, field: &F) -> Result<Verdict> {
        check_property(field, self.gamma, self.q)
    }
}

struct LocalTask<'a> {
    gamma: &'a dyn ClosedSet,
    o: &'a dyn ClosedSet,
    cfg: &'a StabilityConfig,
}

impl FieldTask<Verdict> for LocalTask<'_> {
    fn run<F: SmoothField>(self, field: &F) -> Result<Verdict> {
        check_local_stability_near(field, self.gamma, self.o, self.cfg)
    }
}

struct LubTask<'a> {
    gamma: &'a dyn ClosedSet,
    cfg: &'a StabilityConfig,
}

impl FieldTask<Verdict> for LubTask<'_> {
    fn run<F: SmoothField>(self, field: &F) -> Result<Verdict> {
        check_lub(field, self.gamma, self.cfg)
    }
}

struct ReductionTask<'a> {
    gamma: &'a dyn ClosedSet,
    o: &'a dyn ClosedSet,
    cfg: &'a StabilityConfig,
    theorem: Theorem,
    global: bool,
}

impl FieldTask<ReductionReport> for ReductionTask<'_> {
    fn run<F: SmoothField>(self, field: &F) -> Result<ReductionReport> {
        match self.theorem {
            Theorem::Attractivity => check_reduction_attractivity(field, self.gamma, self.o, self.cfg, self.global),
            Theorem::Sas => check_reduction_sas(field, self.gamma, self.o, self.cfg, self.global),
            Theorem::Stability => check_reduction_stability(field, self.gamma, self.o, self.cfg),
        }
    }
}

const POLAR: Chart = Chart::Polar { r: 0, theta: 1 };

fn subspace(dim: usize, zero: &[usize], extent: f64) -> SetSpec {
    SetSpec::Subspace {
        dim,
        zero: zero.to_vec(),
        extent,
        chart: Chart::Identity,
    }
}

fn origin(dim: usize) -> SetSpec {
    SetSpec::Point {
        point: vec![0.0; dim],
        chart: Chart::Identity,
    }
}

fn base(name: &str, description: &str, system: Model, gamma: SetSpec, x0: Vec<f64>, half: f64) -> ScenarioConfig {
    let n = x0.len();
    ScenarioConfig {
        name: name.into(),
        description: description.into(),
        invented: false,
        system,
        gamma,
        o_set: None,
        v_zero: None,
        feedback: FeedbackSpec::None,
        ic_box: vec![(-half, half); n],
        x0,
        integrator: IntegratorConfig::default(),
        stability: StabilityConfig::default(),
        limits: LimitConfig::default(),
        detect: DetectConfig::default(),
        expected: vec![],
    }
}

use Outcome::{Fails, Holds};

fn example1() -> ScenarioConfig {
    let mut c = base(
        "example1",
        "Global but unstable attractor relative to O = {x3 = 0}; the goal set {x2 = x3 = 0} is not attractive",
        Model::Example1,
        subspace(3, &[1, 2], 1.5),
        vec![1.0, 0.0, 0.5],
        1.5,
    );
    c.o_set = Some(subspace(3, &[2], 1.5));
    c.v_zero = Some(subspace(3, &[2], 1.5));
    c.stability.samples = 24;
    c.expected = vec![
        Expectation::verdict(Check::Passivity { samples: 2000 }, Holds),
        Expectation::verdict(
            Check::Stability {
                property: Property::Stable,
                relative: Some(RelativeTo::O),
                closed_loop: false,
            },
            Fails,
        ),
        Expectation::verdict(
            Check::Stability {
                property: Property::GlobalAttractor,
                relative: Some(RelativeTo::O),
                closed_loop: false,
            },
            Holds,
        ),
        Expectation::report(
            Check::Reduction {
                theorem: Theorem::Attractivity,
                global: true,
                closed_loop: false,
            },
            Consistency::HypothesesNotMet,
            &[("i'", Fails), ("ii'", Holds), ("iii'", Holds)],
            Some(Fails),
        ),
        Expectation::verdict(Check::Lemma4, Holds),
    ];
    c
}

fn example_polar() -> ScenarioConfig {
    let mut c = base(
        "example-polar",
        "Polar-coordinate example: attractive but unstable relative to O = {x3 = 0}, not detectable, u = -y does not stabilize (1, 0, 0)",
        Model::Polar,
        SetSpec::Point {
            point: vec![1.0, 0.0, 0.0],
            chart: POLAR,
        },
        vec![0.5, 1.0, 0.5],
        2.0,
    );
    c.ic_box = vec![(0.1, 2.0), (-3.0, 3.0), (-1.0, 1.0)];
    let o = SetSpec::Subspace {
        dim: 3,
        zero: vec![2],
        extent: 3.0,
        chart: POLAR,
    };
    c.o_set = Some(o.clone());
    c.v_zero = Some(o);
    c.feedback = FeedbackSpec::Output { gain: 1.0 };
    c.stability.samples = 24;
    c.detect.stability.samples = 24;
    c.detect.s_samples = 6;
    c.expected = vec![
        Expectation::verdict(Check::Passivity { samples: 2000 }, Holds),
        Expectation::verdict(Check::StorageMonotone { runs: 20 }, Holds),
        Expectation::verdict(
            Check::Stability {
                property: Property::Stable,
                relative: Some(RelativeTo::O),
                closed_loop: false,
            },
            Fails,
        ),
        Expectation::verdict(
            Check::Stability {
                property: Property::SemiAttractor,
                relative: Some(RelativeTo::O),
                closed_loop: false,
            },
            Holds,
        ),
        Expectation::verdict(Check::LocalStabilityNear { closed_loop: true }, Holds),
        Expectation::report(
            Check::Reduction {
                theorem: Theorem::Sas,
                global: false,
                closed_loop: true,
            },
            Consistency::HypothesesNotMet,
            &[("i", Fails), ("ii", Holds), ("iii", Holds)],
            Some(Fails),
        ),
        Expectation::verdict(
            Check::Detectability {
                kind: DetectabilityKind::GammaDetect,
                local: true,
            },
            Fails,
        ),
        Expectation::verdict(Check::SufficientConditions, Fails),
        Expectation::verdict(Check::Alternative, Fails),
        Expectation::report(Check::Theorem5 { global: false }, Consistency::Consistent, &[], Some(Fails)),
        Expectation::verdict(Check::Lemma4, Holds),
    ];
    c
}

fn five_state() -> ScenarioConfig {
    let mut c = base(
        "5-state",
        "Five-state system with a flat input gain: Gamma-detectable through S' and J+, stabilized by u = -y",
        Model::FiveState,
        origin(5),
        vec![0.0, 1.0, 0.5, 0.0, 0.5],
        1.0,
    );
    let o = subspace(5, &[0, 2, 3, 4], 1.0);
    c.o_set = Some(o.clone());
    c.v_zero = Some(o);
    c.feedback = FeedbackSpec::Output { gain: 1.0 };
    c.stability.samples = 24;
    c.stability.attract_radius = 1e-2;
    c.stability.epsilons = vec![0.05, 0.02];
    c.detect.stability = c.stability.clone();
    c.detect.s_samples = 6;
    c.expected = vec![
        Expectation::verdict(Check::Passivity { samples: 2000 }, Holds),
        Expectation::verdict(Check::StorageMonotone { runs: 20 }, Holds),
        Expectation::verdict(
            Check::Detectability {
                kind: DetectabilityKind::GammaDetect,
                local: true,
            },
            Holds,
        ),
        Expectation::verdict(Check::SufficientConditions, Holds),
        Expectation::verdict(Check::Alternative, Holds),
        Expectation::report(
            Check::Reduction {
                theorem: Theorem::Sas,
                global: false,
                closed_loop: true,
            },
            Consistency::Consistent,
            &[],
            Some(Holds),
        ),
        Expectation::report(Check::Theorem5 { global: false }, Consistency::Consistent, &[], Some(Holds)),
        Expectation::verdict(Check::Lemma4, Holds),
    ];
    c
}

fn integrator() -> ScenarioConfig {
    let mut c = base(
        "integrator",
        "x' = u, y = x, V = x^2/2: zero-state detectable, globally stabilized by u = -y",
        Model::Integrator,
        origin(1),
        vec![1.0],
        2.0,
    );
    c.o_set = Some(origin(1));
    c.v_zero = Some(origin(1));
    c.feedback = FeedbackSpec::Output { gain: 1.0 };
    c.stability.samples = 16;
    c.detect.stability.samples = 16;
    let d = |kind| Check::Detectability { kind, local: true };
    c.expected = vec![
        Expectation::verdict(Check::Passivity { samples: 2000 }, Holds),
        Expectation::verdict(Check::StorageMonotone { runs: 20 }, Holds),
        Expectation::verdict(d(DetectabilityKind::ZeroState), Holds),
        Expectation::verdict(d(DetectabilityKind::VDetect), Holds),
        Expectation::verdict(d(DetectabilityKind::GammaDetect), Holds),
        Expectation::verdict(Check::SufficientConditions, Holds),
        Expectation::verdict(
            Check::Stability {
                property: Property::UniformSemiAttractor,
                relative: None,
                closed_loop: true,
            },
            Holds,
        ),
        Expectation::verdict(
            Check::Stability {
                property: Property::GloballySemiAsymptoticallyStable,
                relative: None,
                closed_loop: true,
            },
            Holds,
        ),
        Expectation::report(Check::Theorem5 { global: true }, Consistency::Consistent, &[], Some(Holds)),
    ];
    c
}

fn oscillator() -> ScenarioConfig {
    let mut c = base(
        "oscillator",
        "Harmonic oscillator with velocity output: observable, damped by u = -y",
        Model::Oscillator,
        origin(2),
        vec![1.0, 0.0],
        2.0,
    );
    c.o_set = Some(origin(2));
    c.v_zero = Some(origin(2));
    c.feedback = FeedbackSpec::Output { gain: 1.0 };
    c.stability.samples = 16;
    c.detect.stability.samples = 16;
    let d = |kind| Check::Detectability { kind, local: true };
    c.expected = vec![
        Expectation::verdict(Check::Passivity { samples: 2000 }, Holds),
        Expectation::verdict(Check::StorageMonotone { runs: 20 }, Holds),
        Expectation::verdict(d(DetectabilityKind::ZeroState), Holds),
        Expectation::verdict(d(DetectabilityKind::VDetect), Holds),
        Expectation::verdict(d(DetectabilityKind::GammaDetect), Holds),
        Expectation::report(Check::Theorem5 { global: false }, Consistency::Consistent, &[], Some(Holds)),
    ];
    c
}

fn unobservable_oscillator() -> ScenarioConfig {
    let mut c = base(
        "unobservable-oscillator",
        "Oscillator invisible to the output: O = {x3 = 0} carries undamped motion, so no detectability and no attraction",
        Model::UnobservableOscillator,
        origin(3),
        vec![0.5, 0.0, 0.5],
        2.0,
    );
    c.invented = true;
    c.o_set = Some(subspace(3, &[2], 2.0));
    c.v_zero = Some(origin(3));
    c.feedback = FeedbackSpec::Output { gain: 1.0 };
    c.stability.samples = 16;
    c.stability.max_horizon = 2000.0;
    c.detect.stability = c.stability.clone();
    let d = |kind| Check::Detectability { kind, local: true };
    c.expected = vec![
        Expectation::verdict(Check::Passivity { samples: 2000 }, Holds),
        Expectation::verdict(d(DetectabilityKind::ZeroState), Fails),
        Expectation::verdict(d(DetectabilityKind::VDetect), Fails),
        Expectation::verdict(d(DetectabilityKind::GammaDetect), Fails),
        Expectation::report(Check::Theorem5 { global: false }, Consistency::Consistent, &[], Some(Fails)),
    ];
    c
}

fn cascade(name: &str, description: &str, kind: CascadeKind, gamma_x: SetSpec, x0: Vec<f64>) -> ScenarioConfig {
    let m = CascadeModel { kind };
    let ny = m.y_dim();
    let gamma = SetSpec::Lifted {
        inner: Box::new(gamma_x),
        extra: ny,
    };
    let mut c = base(name, description, Model::Cascade(m), gamma, x0, 2.0);
    c.invented = true;
    let n = c.x0.len();
    c.o_set = Some(subspace(n, &((n - ny)..n).collect::<Vec<_>>(), 2.0));
    c.stability.samples = 16;
    c
}

fn cascade_scalar() -> ScenarioConfig {
    let mut c = cascade(
        "cascade",
        "x' = -x + x y, y' = -y: the origin is globally semi-asymptotically stable",
        CascadeKind::Scalar,
        origin(1),
        vec![1.0, 1.0],
    );
    c.expected = vec![
        Expectation::report(Check::Cascade { global: true }, Consistency::Consistent, &[], Some(Holds)),
        Expectation::report(
            Check::Reduction {
                theorem: Theorem::Attractivity,
                global: false,
                closed_loop: false,
            },
            Consistency::Consistent,
            &[],
            Some(Holds),
        ),
    ];
    c
}

fn cascade_unstable() -> ScenarioConfig {
    let mut c = cascade(
        "cascade-unstable-driver",
        "x' = -x, y' = y: the driver is unstable so the cascade hypotheses fail",
        CascadeKind::UnstableDriver,
        origin(1),
        vec![1.0, 0.1],
    );
    c.expected = vec![Expectation::report(
        Check::Cascade { global: false },
        Consistency::HypothesesNotMet,
        &[("ii", Fails)],
        None,
    )];
    c
}

fn cascade_rotating() -> ScenarioConfig {
    let mut c = cascade(
        "cascade-rotating",
        "Rotation in (x1, x2) scaled by y with x2 damped, y' = -y: unbounded goal set {x2 = 0}, exercising local uniform boundedness",
        CascadeKind::Rotating,
        subspace(2, &[1], 2.0),
        vec![1.0, 0.5, 0.5],
    );
    c.expected = vec![Expectation::report(
        Check::Cascade { global: false },
        Consistency::Consistent,
        &[("iii", Holds)],
        Some(Holds),
    )];
    c
}

const BUILTINS: &[(&str, fn() -> ScenarioConfig)] = &[
    ("example1", example1),
    ("example-polar", example_polar),
    ("5-state", five_state),
    ("integrator", integrator),
    ("oscillator", oscillator),
    ("unobservable-oscillator", unobservable_oscillator),
    ("cascade", cascade_scalar),
    ("cascade-unstable-driver", cascade_unstable),
    ("cascade-rotating", cascade_rotating),
];

/// Names of the built-in scenarios.
pub fn list() -> Vec<&'static str> {
    BUILTINS.iter().map(|(n, _)| *n).collect()
}

/// A built-in scenario by name.
pub fn load(name: &str) -> Result<Scenario> {
    let (_, make) = BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Input(format!("unknown scenario {name:?}; known: {}", list().join(", "))))?;
    Scenario::from_config(make())
}

/// The configuration of a built-in scenario, e.g. to write it out as JSON.
pub fn builtin_config(name: &str) -> Result<ScenarioConfig> {
    Ok(load(name)?.config)
}
