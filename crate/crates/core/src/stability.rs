//! Sampling checks of stability, semi-attractivity, uniform
//! semi-attractivity and their conjunctions, absolute or relative to a set,
//! plus local stability near `Γ` and local uniform boundedness.
//!
//! Every quantifier is decided on a ladder with an explicit floor. A failing
//! verdict carries a witness `(x₀, t, d)`: integrating from `x₀` for time `t`
//! lands at distance `d` from the relevant set.
//!
//! Instabilities that grow from tiny perturbations show up late, roughly at
//! a time proportional to `1/δ`. When a violation is seen at time `t` the next
//! ladder level therefore integrates for at least `4t`, up to `max_horizon`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    sample_ball_near_set, sample_near_set, ClosedSet, Outcome, SmoothField, Verdict, Witness,
};
use crate::error::{check_dim, Error, Result};
use crate::integrate::{
    boundedness_probe, integrate, IntegratorConfig, ProbeConfig, ProbeOutcome, Trajectory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Stable,
    SemiAttractor,
    GlobalAttractor,
    UniformSemiAttractor,
    SemiAsymptoticallyStable,
    GloballySemiAsymptoticallyStable,
}

impl Property {
    pub fn name(self) -> &'static str {
        match self {
            Property::Stable => "stable",
            Property::SemiAttractor => "semi_attractor",
            Property::GlobalAttractor => "global_attractor",
            Property::UniformSemiAttractor => "uniform_semi_attractor",
            Property::SemiAsymptoticallyStable => "semi_asymptotically_stable",
            Property::GloballySemiAsymptoticallyStable => "globally_semi_asymptotically_stable",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityConfig {
    /// Decreasing `ε` ladder.
    pub epsilons: Vec<f64>,
    pub delta_floor: f64,
    /// Initial conditions per `(ε, δ)` cell.
    pub samples: usize,
    pub horizon: f64,
    pub max_horizon: f64,
    /// Neighbourhood radius for semi-attractivity.
    pub attract_radius: f64,
    /// Sampling radius standing in for "all initial conditions".
    pub global_radius: f64,
    /// Tail distance accepted as convergence.
    pub band: f64,
    /// Drift allowed off an invariant set.
    pub invariance_band: f64,
    /// Ball radius `λ` of the uniform semi-attractor check.
    pub lambda: f64,
    /// Radii `c` of the local-stability-near check.
    pub c_ladder: Vec<f64>,
    /// Points of `Γ` used as centres.
    pub base_points: usize,
    pub seed: u64,
    pub integrator: IntegratorConfig,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            epsilons: vec![0.5, 0.2, 0.1, 0.05],
            delta_floor: 1e-4,
            samples: 64,
            horizon: 200.0,
            max_horizon: 1e5,
            attract_radius: 0.5,
            global_radius: 2.0,
            band: 1e-2,
            invariance_band: 1e-6,
            lambda: 0.5,
            c_ladder: vec![0.5, 1.0],
            base_points: 4,
            seed: 0,
            integrator: IntegratorConfig::default(),
        }
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        let decreasing = self.epsilons.windows(2).all(|w| w[0] > w[1]);
        if self.epsilons.is_empty() || !decreasing || self.epsilons.iter().any(|e| *e <= 0.0) {
            return Err(Error::Input("epsilon ladder must be positive and decreasing".into()));
        }
        if self.samples == 0 || self.base_points == 0 {
            return Err(Error::Input("sample counts must be positive".into()));
        }
        if !(self.delta_floor > 0.0 && self.horizon > 0.0 && self.max_horizon >= self.horizon) {
            return Err(Error::Input("delta floor and horizons must be positive".into()));
        }
        Ok(())
    }

    fn integ(&self, horizon: f64) -> IntegratorConfig {
        self.integrator.with_horizon(horizon)
    }
}

/// A property of `Γ`, optionally relative to a set such as `𝒪` or `V⁻¹(0)`.
#[derive(Debug, Clone)]
pub struct StabilityQuery<'a> {
    pub property: Property,
    pub relative_to: Option<&'a dyn ClosedSet>,
    pub config: StabilityConfig,
}

impl<'a> StabilityQuery<'a> {
    pub fn new(property: Property) -> Self {
        StabilityQuery {
            property,
            relative_to: None,
            config: StabilityConfig::default(),
        }
    }

    pub fn relative(mut self, set: &'a dyn ClosedSet) -> Self {
        self.relative_to = Some(set);
        self
    }

    pub fn with_config(mut self, config: StabilityConfig) -> Self {
        self.config = config;
        self
    }
}

struct Ctx<'a, F: ?Sized> {
    field: &'a F,
    gamma: &'a dyn ClosedSet,
    rel: Option<&'a dyn ClosedSet>,
    cfg: &'a StabilityConfig,
}

impl<F: SmoothField + ?Sized> Ctx<'_, F> {
    /// Runs every initial condition and reduces each trajectory with `stat`,
    /// rejecting runs that leave the relative set.
    fn batch<T: Send>(
        &self,
        ics: &[Vec<f64>],
        horizon: f64,
        stat: impl Fn(&Trajectory) -> T + Sync,
    ) -> Result<Vec<T>> {
        let icfg = self.cfg.integ(horizon);
        ics.par_iter()
            .map(|x0| {
                let tr = integrate(self.field, x0, &icfg)?;
                if let Some(rel) = self.rel {
                    let drift = tr.states.iter().map(|x| rel.dist(x)).fold(0.0, f64::max);
                    if drift > self.cfg.invariance_band && tr.completed() {
                        return Err(Error::Input(format!(
                            "{} is not positively invariant: drift {drift:.3e} from {x0:?}",
                            rel.describe()
                        )));
                    }
                }
                Ok(stat(&tr))
            })
            .collect()
    }

    fn sample_near(&self, radius: f64, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..count)
            .filter_map(|_| sample_near_set(self.gamma, self.rel, radius, rng))
            .collect()
    }

    fn sample_on(&self, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                let p = self.gamma.sample_on(rng);
                match self.rel {
                    Some(r) => r.project(&p),
                    None => p,
                }
            })
            .collect()
    }

    fn tagged(&self, v: Verdict) -> Verdict {
        v.param("relative_to", self.rel.map(|r| r.describe()))
            .param("gamma", self.gamma.describe())
    }
}

/// Distance profile of one run: sup of `dist(·, Γ)`, when it was reached,
/// and the first time it exceeded `eps`.
#[derive(Debug, Clone)]
struct Excursion {
    initial: Vec<f64>,
    sup: f64,
    sup_time: f64,
    first_exit: Option<f64>,
}

fn excursion(tr: &Trajectory, gamma: &dyn ClosedSet, eps: f64) -> Excursion {
    let mut sup = 0.0;
    let mut sup_time = 0.0;
    let mut first_exit = None;
    for (t, x) in tr.times.iter().zip(&tr.states) {
        let d = gamma.dist(x);
        if d > sup {
            sup = d;
            sup_time = *t;
        }
        if first_exit.is_none() && d > eps {
            first_exit = Some(*t);
        }
    }
    if tr.escaped() {
        first_exit.get_or_insert(tr.final_time());
    }
    Excursion {
        initial: tr.states[0].clone(),
        sup,
        sup_time,
        first_exit,
    }
}

/// Checks that `Γ` (and the relative set) are positively invariant.
fn precheck<F: SmoothField + ?Sized>(ctx: &Ctx<'_, F>, rng: &mut ChaCha8Rng) -> Result<()> {
    check_dim("goal set", ctx.field.dim(), ctx.gamma.dim())?;
    if let Some(r) = ctx.rel {
        check_dim("relative set", ctx.field.dim(), r.dim())?;
    }
    let pts = ctx.sample_on(8, rng);
    let horizon = ctx.cfg.horizon.min(50.0);
    let drifts = ctx.batch(&pts, horizon, |tr| {
        tr.states.iter().map(|x| ctx.gamma.dist(x)).fold(0.0, f64::max)
    })?;
    if let Some((k, d)) = drifts
        .iter()
        .enumerate()
        .find(|(_, d)| **d > ctx.cfg.invariance_band)
    {
        return Err(Error::Input(format!(
            "goal set {} is not positively invariant: drift {d:.3e} from {:?}",
            ctx.gamma.describe(),
            pts[k]
        )));
    }
    Ok(())
}

fn stable<F: SmoothField + ?Sized>(ctx: &Ctx<'_, F>, rng: &mut ChaCha8Rng) -> Result<Verdict> {
    let property = if ctx.rel.is_some() { "stable_relative" } else { "stable" };
    let cfg = ctx.cfg;
    let mut deltas = vec![];
    let mut delta = f64::INFINITY;
    let mut horizon = cfg.horizon;
    for &eps in &cfg.epsilons {
        delta = delta.min(eps);
        loop {
            let ics = ctx.sample_near(delta, cfg.samples, rng);
            if ics.is_empty() {
                return Ok(ctx.tagged(Verdict::inconclusive(
                    property,
                    format!("no initial condition found within {delta:.3e} of the goal set"),
                )));
            }
            let runs = ctx.batch(&ics, horizon, |tr| excursion(tr, ctx.gamma, eps))?;
            let worst = runs
                .iter()
                .filter(|r| r.sup > eps)
                .max_by(|a, b| a.sup.total_cmp(&b.sup));
            let Some(worst) = worst else {
                deltas.push(delta);
                break;
            };
            let earliest_exit = runs
                .iter()
                .filter_map(|r| r.first_exit)
                .fold(f64::INFINITY, f64::min);
            if delta / 2.0 < cfg.delta_floor {
                let w = Witness {
                    initial: worst.initial.clone(),
                    time: worst.sup_time,
                    distance: worst.sup,
                };
                return Ok(ctx.tagged(
                    Verdict::fails(property, w)
                        .param("epsilon", eps)
                        .param("delta_floor", cfg.delta_floor)
                        .param("horizon", horizon)
                        .param("deltas", &deltas)
                        .param("samples", cfg.samples),
                ));
            }
            delta /= 2.0;
            if earliest_exit.is_finite() {
                horizon = horizon.max(4.0 * earliest_exit).min(cfg.max_horizon);
            }
        }
    }
    Ok(ctx.tagged(
        Verdict::holds(property)
            .param("epsilons", &cfg.epsilons)
            .param("deltas", &deltas)
            .param("delta_floor", cfg.delta_floor)
            .param("horizon", horizon)
            .param("samples", cfg.samples),
    ))
}

/// Sup of `dist(·, Γ)` over `[0.8T, T]` and where it was reached.
fn tail_sup(tr: &Trajectory, gamma: &dyn ClosedSet) -> (f64, f64) {
    if tr.escaped() {
        return (gamma.dist(tr.final_state()), tr.final_time());
    }
    let from = 0.8 * tr.final_time();
    tr.since(from)
        .map(|(t, x)| (gamma.dist(x), t))
        .fold((0.0, from), |a, b| if b.0 > a.0 { b } else { a })
}

fn attractor<F: SmoothField + ?Sized>(
    ctx: &Ctx<'_, F>,
    radius: f64,
    global: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Verdict> {
    let base = if global { "global_attractor" } else { "semi_attractor" };
    let property = if ctx.rel.is_some() { format!("{base}_relative") } else { base.to_string() };
    let pending = ctx.sample_near(radius, ctx.cfg.samples, rng);
    converge(ctx, pending, property, radius, global)
}

/// Tail distance to `ctx.gamma` from each of `pending` must fall below the
/// band, doubling the horizon for the runs that are not there yet.
fn converge<F: SmoothField + ?Sized>(
    ctx: &Ctx<'_, F>,
    mut pending: Vec<Vec<f64>>,
    property: String,
    radius: f64,
    global: bool,
) -> Result<Verdict> {
    let cfg = ctx.cfg;
    if pending.is_empty() {
        return Ok(ctx.tagged(Verdict::inconclusive(property, "no initial condition found")));
    }
    let total = pending.len();
    let mut previous: Vec<f64> = vec![f64::INFINITY; pending.len()];
    let mut horizon = cfg.horizon;
    let finish = |v: Verdict, horizon: f64| {
        let v = v
            .param("radius", radius)
            .param("band", cfg.band)
            .param("horizon", horizon)
            .param("samples", total);
        ctx.tagged(if global { v.note("global over the sampled radius only") } else { v })
    };
    loop {
        let tails = ctx.batch(&pending, horizon, |tr| tail_sup(tr, ctx.gamma))?;
        let bad: Vec<usize> = (0..pending.len()).filter(|&k| tails[k].0 > cfg.band).collect();
        if bad.is_empty() {
            return Ok(finish(Verdict::holds(property.clone()), horizon));
        }
        if 2.0 * horizon > cfg.max_horizon {
            let k = *bad
                .iter()
                .max_by(|a, b| tails[**a].0.total_cmp(&tails[**b].0))
                .unwrap();
            let (d, t) = tails[k];
            // A tail that is still shrinking fast is slow convergence, not a failure.
            if d.is_finite() && d < 0.5 * previous[k] {
                return Ok(finish(
                    Verdict::inconclusive(
                        property.clone(),
                        format!("tail distance {d:.3e} still decreasing at the horizon cap"),
                    ),
                    horizon,
                ));
            }
            let w = Witness {
                initial: pending[k].clone(),
                time: t,
                distance: d,
            };
            return Ok(finish(Verdict::fails(property.clone(), w), horizon));
        }
        previous = bad.iter().map(|&k| tails[k].0).collect();
        pending = bad.iter().map(|&k| pending[k].clone()).collect();
        horizon *= 2.0;
    }
}

/// Trajectories from `initials` converge to `target`. Runs are also required
/// to stay on `relative` when given.
pub fn check_convergence_from<F: SmoothField + ?Sized>(
    field: &F,
    initials: Vec<Vec<f64>>,
    target: &dyn ClosedSet,
    relative: Option<&dyn ClosedSet>,
    property: &str,
    cfg: &StabilityConfig,
) -> Result<Verdict> {
    cfg.validate()?;
    check_dim("target set", field.dim(), target.dim())?;
    let ctx = Ctx {
        field,
        gamma: target,
        rel: relative,
        cfg,
    };
    let radius = initials.iter().map(|x| target.dist(x)).fold(0.0, f64::max);
    converge(&ctx, initials, property.to_string(), radius, false)
}

/// `target` attracts every sampled start near `gamma`: within
/// `attract_radius`, or `global_radius` when `global`.
pub fn check_attraction_near<F: SmoothField + ?Sized>(
    field: &F,
    gamma: &dyn ClosedSet,
    target: &dyn ClosedSet,
    global: bool,
    cfg: &StabilityConfig,
) -> Result<Verdict> {
    cfg.validate()?;
    check_dim("goal set", field.dim(), gamma.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let radius = if global { cfg.global_radius } else { cfg.attract_radius };
    let ics: Vec<Vec<f64>> = (0..cfg.samples)
        .filter_map(|_| sample_near_set(gamma, None, radius, &mut rng))
        .collect();
    let property = if global { "global_attractor" } else { "locally_semi_attractive_near" };
    let v = check_convergence_from(field, ics, target, None, property, cfg)?;
    Ok(v.param("near", gamma.describe()).param("radius", radius))
}

/// Last time `dist(·, Γ) > eps`, or `None` while the run is unsettled: still
/// outside at the end, or never outside but not yet contracting towards `Γ`.
fn last_exit(tr: &Trajectory, gamma: &dyn ClosedSet, eps: f64, band: f64) -> Option<f64> {
    if tr.escaped() {
        return None;
    }
    let d: Vec<f64> = tr.states.iter().map(|x| gamma.dist(x)).collect();
    if *d.last().unwrap() > eps {
        return None;
    }
    match d.iter().rposition(|v| *v > eps) {
        Some(k) => Some(tr.times[k + 1]),
        None => {
            let (tail, _) = tail_sup(tr, gamma);
            (tail <= band.min(0.25 * d[0])).then_some(0.0)
        }
    }
}

const UNIFORM_LEVELS: usize = 10;
const UNIFORM_PER_LEVEL: usize = 6;

fn uniform<F: SmoothField + ?Sized>(ctx: &Ctx<'_, F>, rng: &mut ChaCha8Rng) -> Result<Verdict> {
    let property = if ctx.rel.is_some() {
        "uniform_semi_attractor_relative"
    } else {
        "uniform_semi_attractor"
    };
    let cfg = ctx.cfg;
    let eps = *cfg.epsilons.last().unwrap();
    let lambda = cfg.lambda;
    let n = ctx.field.dim();
    let bases = ctx.sample_on(cfg.base_points, rng);
    let mut worst_t: f64 = 0.0;
    for p in &bases {
        // Fixed directions, so settling times along one ray are comparable
        // from level to level.
        let dirs: Vec<Vec<f64>> = (0..UNIFORM_PER_LEVEL)
            .map(|_| {
                let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|c| c / norm).collect()
            })
            .collect();
        // settle[d][j]: last time the ray-d run of level j is outside B_eps(Γ).
        let mut settle: Vec<Vec<f64>> = vec![vec![]; dirs.len()];
        let mut last_ic: Vec<Option<(Vec<f64>, f64, f64)>> = vec![None; dirs.len()];
        let mut horizon = cfg.horizon;
        for j in 0..UNIFORM_LEVELS {
            let delta = lambda * 0.5f64.powi(j as i32);
            if delta < cfg.delta_floor {
                break;
            }
            let starts: Vec<(usize, Vec<f64>)> = dirs
                .iter()
                .enumerate()
                .filter_map(|(d, dir)| {
                    let x: Vec<f64> = p.iter().zip(dir).map(|(a, b)| a + delta * b).collect();
                    let x = match ctx.rel {
                        Some(u) => u.project(&x),
                        None => x,
                    };
                    (ctx.gamma.dist(&x) > 0.0 && x.iter().all(|c| c.is_finite())).then_some((d, x))
                })
                .collect();
            if starts.is_empty() {
                continue;
            }
            let ics: Vec<Vec<f64>> = starts.iter().map(|(_, x)| x.clone()).collect();
            loop {
                let runs = ctx.batch(&ics, horizon, |tr| {
                    let e = excursion(tr, ctx.gamma, eps);
                    (last_exit(tr, ctx.gamma, eps, cfg.band), e.sup, e.sup_time)
                })?;
                if runs.iter().all(|r| r.0.is_some()) {
                    for (k, (d, x)) in starts.iter().enumerate() {
                        let t = runs[k].0.unwrap();
                        settle[*d].push(t);
                        last_ic[*d] = Some((x.clone(), runs[k].2, runs[k].1));
                    }
                    break;
                }
                if 2.0 * horizon > cfg.max_horizon {
                    let k = runs.iter().position(|r| r.0.is_none()).unwrap();
                    let ray = &settle[starts[k].0];
                    let growing = ray.len() >= 2 && ray.windows(2).rev().take(2).all(|w| w[1] > 1.5 * w[0]);
                    let w = Witness {
                        initial: ics[k].clone(),
                        time: runs[k].2,
                        distance: runs[k].1,
                    };
                    return Ok(ctx.tagged(if growing {
                        Verdict::fails(property, w).param("settling_times", ray)
                    } else {
                        Verdict::inconclusive(property, "runs still outside B_eps(Γ) at the horizon cap")
                            .param("settling_times", ray)
                    }));
                }
                horizon *= 2.0;
            }
        }
        // Settling times growing without bound as the start approaches Γ
        // along a ray rule out a single T for the whole ball.
        for (d, ray) in settle.iter().enumerate() {
            let m = ray.len();
            if m < 4 {
                continue;
            }
            let tail = &ray[m - 4..];
            if tail.windows(2).all(|w| w[1] > 1.5 * w[0]) && tail[3] > 10.0 {
                let (ic, t, dist) = last_ic[d].clone().unwrap();
                return Ok(ctx.tagged(
                    Verdict::fails(property, Witness { initial: ic, time: t, distance: dist })
                        .param("settling_times", ray)
                        .param("lambda", lambda)
                        .param("epsilon", eps),
                ));
            }
            worst_t = ray.iter().fold(worst_t, |a, b| a.max(*b));
        }
    }
    Ok(ctx.tagged(
        Verdict::holds(property)
            .param("lambda", lambda)
            .param("epsilon", eps)
            .param("settling_time", worst_t)
            .param("base_points", bases.len())
            .note("a single lambda per base point is assumed to serve every epsilon"),
    ))
}

/// Decides `q.property` for `Γ` under `field`.
pub fn check_property<F: SmoothField + ?Sized>(
    field: &F,
    gamma: &dyn ClosedSet,
    q: &StabilityQuery<'_>,
) -> Result<Verdict> {
    q.config.validate()?;
    let ctx = Ctx {
        field,
        gamma,
        rel: q.relative_to,
        cfg: &q.config,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(q.config.seed);
    precheck(&ctx, &mut rng)?;
    let suffix = if q.relative_to.is_some() { "_relative" } else { "" };
    let name = format!("{}{suffix}", q.property.name());
    let v = match q.property {
        Property::Stable => stable(&ctx, &mut rng)?,
        Property::SemiAttractor => attractor(&ctx, q.config.attract_radius, false, &mut rng)?,
        Property::GlobalAttractor => attractor(&ctx, q.config.global_radius, true, &mut rng)?,
        Property::UniformSemiAttractor => uniform(&ctx, &mut rng)?,
        Property::SemiAsymptoticallyStable => Verdict::all(
            name,
            vec![
                stable(&ctx, &mut rng)?,
                attractor(&ctx, q.config.attract_radius, false, &mut rng)?,
            ],
        ),
        Property::GloballySemiAsymptoticallyStable => Verdict::all(
            name,
            vec![
                stable(&ctx, &mut rng)?,
                attractor(&ctx, q.config.global_radius, true, &mut rng)?,
            ],
        ),
    };
    Ok(v.param("seed", q.config.seed).param("empirical", true))
}

/// `𝒪` locally stable near `Γ`: trajectories from close to `Γ` cannot move
/// `ε` away from `𝒪` before leaving `B_c(x)`, `x ∈ Γ`.
pub fn check_local_stability_near<F: SmoothField + ?Sized>(
    field: &F,
    gamma: &dyn ClosedSet,
    o_set: &dyn ClosedSet,
    cfg: &StabilityConfig,
) -> Result<Verdict> {
    let property = "locally_stable_near";
    cfg.validate()?;
    check_dim("goal set", field.dim(), gamma.dim())?;
    check_dim("relative set", field.dim(), o_set.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bases: Vec<Vec<f64>> = (0..cfg.base_points).map(|_| gamma.sample_on(&mut rng)).collect();
    if let Some(p) = bases.iter().find(|p| !o_set.contains(p)) {
        return Err(Error::Input(format!("goal set point {p:?} is not in {}", o_set.describe())));
    }
    let icfg = cfg.integ(cfg.horizon);
    let mut found: Vec<f64> = vec![];
    for x in &bases {
        for &c in &cfg.c_ladder {
            let mut delta = f64::INFINITY;
            for &eps in &cfg.epsilons {
                delta = delta.min(eps).min(c);
                loop {
                    let ics: Vec<Vec<f64>> = (0..cfg.samples)
                        .filter_map(|_| sample_ball_near_set(gamma, None, x, c, delta, &mut rng))
                        .collect();
                    // Sup of dist(·, 𝒪) before the first exit from B_c(x).
                    let runs: Vec<(f64, f64)> = ics
                        .par_iter()
                        .map(|x0| {
                            let tr = integrate(field, x0, &icfg)?;
                            let mut sup = (0.0, 0.0);
                            for (t, y) in tr.times.iter().zip(&tr.states) {
                                if tr.chart.distance(y, x) >= c {
                                    break;
                                }
                                let d = o_set.dist(y);
                                if d > sup.0 {
                                    sup = (d, *t);
                                }
                            }
                            Ok(sup)
                        })
                        .collect::<Result<_>>()?;
                    let worst = (0..runs.len())
                        .filter(|&k| runs[k].0 > eps)
                        .max_by(|a, b| runs[*a].0.total_cmp(&runs[*b].0));
                    match worst {
                        None => {
                            found.push(delta);
                            break;
                        }
                        Some(k) if delta / 2.0 < cfg.delta_floor => {
                            let w = Witness {
                                initial: ics[k].clone(),
                                time: runs[k].1,
                                distance: runs[k].0,
                            };
                            return Ok(Verdict::fails(property, w)
                                .param("base_point", x)
                                .param("c", c)
                                .param("epsilon", eps)
                                .param("delta_floor", cfg.delta_floor));
                        }
                        Some(_) => delta /= 2.0,
                    }
                }
            }
        }
    }
    Ok(Verdict::holds(property)
        .param("c_ladder", &cfg.c_ladder)
        .param("epsilons", &cfg.epsilons)
        .param("smallest_delta", found.iter().fold(f64::INFINITY, |a, b| a.min(*b)))
        .param("o_set", o_set.describe()))
}

/// Local uniform boundedness near `Γ`, probed at sampled points of `Γ`.
pub fn check_lub<F: SmoothField + ?Sized>(
    field: &F,
    gamma: &dyn ClosedSet,
    cfg: &StabilityConfig,
) -> Result<Verdict> {
    let property = "locally_uniformly_bounded";
    check_dim("goal set", field.dim(), gamma.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let probe = ProbeConfig {
        seed: cfg.seed,
        ..Default::default()
    };
    let icfg = cfg.integ(cfg.horizon);
    let mut bounds = vec![];
    for _ in 0..cfg.base_points {
        let p = gamma.sample_on(&mut rng);
        match boundedness_probe(field, &p, &icfg, &probe)? {
            ProbeOutcome::Bounded(b) => bounds.push(b),
            ProbeOutcome::Unbounded(w) => {
                return Ok(Verdict::fails(property, w).param("base_point", p));
            }
        }
    }
    Ok(Verdict::holds(property)
        .param("bounds", &bounds)
        .param("horizon", cfg.horizon))
}

/// Re-integrates a witness and returns the distance to `set` it reaches.
pub fn replay_witness<F: SmoothField + ?Sized>(
    field: &F,
    witness: &Witness,
    set: &dyn ClosedSet,
    integrator: &IntegratorConfig,
) -> Result<f64> {
    if witness.time <= 0.0 {
        return Ok(set.dist(&witness.initial));
    }
    let tr = integrate(field, &witness.initial, &integrator.with_horizon(witness.time))?;
    Ok(set.dist(tr.final_state()))
}

/// Whether a recorded verdict outcome is `holds`.
pub fn holds(v: &Verdict) -> bool {
    v.outcome == Outcome::Holds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CoordinateSubspace, Chart, Drift, LinearField, PointSet, WholeSpace};
    use crate::scenarios::Model;
    use nalgebra::dmatrix;

    fn light() -> StabilityConfig {
        StabilityConfig {
            samples: 16,
            horizon: 50.0,
            ..Default::default()
        }
    }

    #[test]
    fn contraction_is_globally_semi_asymptotically_stable() {
        let f = LinearField::new(dmatrix![-1.0, 0.0; 0.0, -1.0]).unwrap();
        let q = StabilityQuery::new(Property::GloballySemiAsymptoticallyStable).with_config(light());
        let v = check_property(&f, &PointSet::origin(2), &q).unwrap();
        assert!(v.outcome.holds(), "{v:?}");
        assert_eq!(v.components.len(), 2);
    }

    #[test]
    fn example1_attractive_but_unstable_relative_to_o() {
        let m = Model::Example1;
        let gamma = CoordinateSubspace::new(3, vec![1, 2], 1.5).unwrap();
        let o = CoordinateSubspace::new(3, vec![2], 1.5).unwrap();
        let q = StabilityQuery::new(Property::Stable).relative(&o).with_config(light());
        let v = check_property(&Drift(&m), &gamma, &q).unwrap();
        assert!(v.outcome.fails(), "{v:?}");
        let w = v.witness.clone().unwrap();
        let d = replay_witness(&Drift(&m), &w, &gamma, &IntegratorConfig::default()).unwrap();
        assert!((d - w.distance).abs() < 0.01 * w.distance);
        assert!(w.initial[2] == 0.0);

        let q = StabilityQuery::new(Property::SemiAttractor).relative(&o).with_config(light());
        let v = check_property(&Drift(&m), &gamma, &q).unwrap();
        assert!(v.outcome.holds(), "{v:?}");
    }

    #[test]
    fn polar_open_loop_attractive_but_unstable() {
        let m = Model::Polar;
        let polar = Chart::Polar { r: 0, theta: 1 };
        let gamma = PointSet::with_chart(vec![1.0, 0.0, 0.0], polar);
        let o = CoordinateSubspace::with_chart(3, vec![2], 3.0, polar).unwrap();
        let q = StabilityQuery::new(Property::Stable).relative(&o).with_config(light());
        let v = check_property(&Drift(&m), &gamma, &q).unwrap();
        assert!(v.outcome.fails(), "{v:?}");
        let q = StabilityQuery::new(Property::SemiAttractor).relative(&o).with_config(light());
        let v = check_property(&Drift(&m), &gamma, &q).unwrap();
        assert!(v.outcome.holds(), "{v:?}");
    }

    #[test]
    fn non_invariant_goal_set_is_rejected() {
        let f = LinearField::new(dmatrix![1.0, 1.0; 0.0, 1.0]).unwrap();
        let gamma = CoordinateSubspace::new(2, vec![0], 1.0).unwrap();
        let q = StabilityQuery::new(Property::Stable).with_config(light());
        assert!(matches!(check_property(&f, &gamma, &q), Err(Error::Input(_))));
    }

    #[test]
    fn local_stability_near_goal_set() {
        let cfg = light();
        let f = LinearField::new(dmatrix![-1.0, 0.0; 0.0, -1.0]).unwrap();
        let v = check_local_stability_near(&f, &PointSet::origin(2), &WholeSpace::new(2, 1.0), &cfg).unwrap();
        assert!(v.outcome.holds(), "{v:?}");

        let f = LinearField::new(dmatrix![-1.0, 0.0, 0.0; 0.0, -1.0, 0.0; 0.0, 0.0, 1.0]).unwrap();
        let o = CoordinateSubspace::new(3, vec![2], 1.0).unwrap();
        let v = check_local_stability_near(&f, &PointSet::origin(3), &o, &cfg).unwrap();
        assert!(v.outcome.fails(), "{v:?}");
        assert!(v.witness.unwrap().distance > 0.05);
    }

    #[test]
    fn lub_probe() {
        let cfg = light();
        let f = LinearField::new(dmatrix![0.0]).unwrap();
        assert!(check_lub(&f, &PointSet::origin(1), &cfg).unwrap().outcome.holds());
        let f = LinearField::new(dmatrix![1.0]).unwrap();
        let v = check_lub(&f, &PointSet::origin(1), &cfg).unwrap();
        assert!(v.outcome.fails(), "{v:?}");
    }

    #[test]
    fn uniform_semi_attractor() {
        let f = LinearField::new(dmatrix![-1.0, 0.0; 0.0, -2.0]).unwrap();
        let q = StabilityQuery::new(Property::UniformSemiAttractor).with_config(light());
        assert!(check_property(&f, &PointSet::origin(2), &q).unwrap().outcome.holds());

        let m = Model::Example1;
        let gamma = CoordinateSubspace::new(3, vec![1, 2], 1.5).unwrap();
        let o = CoordinateSubspace::new(3, vec![2], 1.5).unwrap();
        let q = StabilityQuery::new(Property::UniformSemiAttractor).relative(&o).with_config(light());
        let v = check_property(&Drift(&m), &gamma, &q).unwrap();
        assert!(v.outcome.fails(), "{v:?}");
    }
}
