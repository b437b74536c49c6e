//! The set `𝒪` (largest open-loop invariant subset of `h⁻¹(0)`), the
//! detectability notions built on it, sufficient conditions through `S′` and
//! prolongational limit sets, and the closed-loop stabilization harness.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{s_prime_residual, s_residual, CalculusConfig};
use crate::domain::{
    close_loop, max_abs, sample_box, sample_near_set, ClosedSet, Drift, FeedbackLaw, Outcome,
    PassiveSystem, PointSet, Verdict, Witness,
};
use crate::error::{check_dim, check_finite, Result};
use crate::integrate::{integrate, Trajectory};
use crate::limitsets::{omega_limit_estimate, prolongational_limit_estimate, LimitConfig};
use crate::passivity::{check_feedback_admissible, PASSIVITY_TOL};
use crate::reduction::{check_bounded_near, Consistency, ReductionReport};
use crate::stability::{
    check_convergence_from, check_lub, check_property, Property, StabilityConfig, StabilityQuery,
};

/// How `𝒪` is supplied.
#[derive(Debug, Clone)]
pub enum OSetSpec {
    /// A known closed set.
    Explicit(Arc<dyn ClosedSet>),
    /// Membership of `candidates` (points drawn near `Γ` when empty) decided
    /// by simulating the open loop. Only a finite-horizon approximation of
    /// maximality.
    Probe { candidates: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectabilityKind {
    ZeroState,
    VDetect,
    GammaDetect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitVariant {
    /// `S′ ∩ J⁺(S′, S′) ⊂ Γ`.
    Prolongational,
    /// `S′ ∩ L⁺(S′) ⊂ V⁻¹(0)`, for `Γ = V⁻¹(0)`.
    Omega,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    /// Output level treated as `h = 0` by the membership probe.
    pub h_band: f64,
    pub probe_horizon: f64,
    pub stability: StabilityConfig,
    pub limits: LimitConfig,
    pub calculus: CalculusConfig,
    /// Box searched for `S′` points; empty means `[-2, 2]` per coordinate.
    pub s_box: Vec<(f64, f64)>,
    /// Box candidates refined towards `S′`.
    pub s_candidates: usize,
    /// Distinct `S′` points whose limit sets are estimated.
    pub s_samples: usize,
    pub refine_iters: usize,
    /// `S′` membership of limit points: every residual entry at most this.
    pub membership_band: f64,
    /// Distance to `Γ` accepted for limit points in `S′`.
    pub gamma_band: f64,
    pub variant: LimitVariant,
    pub seed: u64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            h_band: 1e-6,
            probe_horizon: 50.0,
            stability: StabilityConfig::default(),
            limits: LimitConfig::default(),
            calculus: CalculusConfig::default(),
            s_box: vec![],
            s_candidates: 200,
            s_samples: 8,
            refine_iters: 50,
            membership_band: 0.0,
            gamma_band: 5e-2,
            variant: LimitVariant::Prolongational,
            seed: 0,
        }
    }
}

impl DetectConfig {
    fn s_box(&self, n: usize) -> Vec<(f64, f64)> {
        if self.s_box.is_empty() {
            vec![(-2.0, 2.0); n]
        } else {
            self.s_box.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "membership", rename_all = "snake_case")]
pub enum Membership {
    InO { max_output: f64 },
    Out { max_output: f64, time: f64, escaped: bool },
    Inconclusive { max_output: f64 },
}

impl Membership {
    pub fn is_in(&self) -> bool {
        matches!(self, Membership::InO { .. })
    }
}

/// Whether `x` looks like a point of `𝒪`: the open-loop output stays in the
/// band over `probe_horizon`.
pub fn probe_o_membership<P: PassiveSystem>(ps: &P, x: &[f64], cfg: &DetectConfig) -> Result<Membership> {
    check_dim("state", ps.state_dim(), x.len())?;
    check_finite("state", x)?;
    let tr = integrate(&Drift(ps), x, &cfg.stability.integrator.with_horizon(cfg.probe_horizon))?;
    let mut max_output: f64 = 0.0;
    for (t, s) in tr.times.iter().zip(&tr.states) {
        let h = max_abs(&ps.output(s));
        max_output = max_output.max(h);
        if h > cfg.h_band {
            return Ok(Membership::Out {
                max_output: h,
                time: *t,
                escaped: false,
            });
        }
    }
    if tr.escaped() {
        return Ok(Membership::Out {
            max_output,
            time: tr.final_time(),
            escaped: true,
        });
    }
    Ok(if max_output <= cfg.h_band / 10.0 {
        Membership::InO { max_output }
    } else {
        Membership::Inconclusive { max_output }
    })
}

/// Points of `𝒪` near `Γ`.
fn sample_o<P: PassiveSystem>(
    ps: &P,
    gamma: &dyn ClosedSet,
    o: &OSetSpec,
    radius: f64,
    cfg: &DetectConfig,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let count = cfg.stability.samples;
    match o {
        OSetSpec::Explicit(set) => Ok((0..count)
            .filter_map(|_| sample_near_set(gamma, Some(set.as_ref()), radius, &mut rng))
            .collect()),
        OSetSpec::Probe { candidates } => {
            let candidates: Vec<Vec<f64>> = if candidates.is_empty() {
                (0..count * 4)
                    .filter_map(|_| sample_near_set(gamma, None, radius, &mut rng))
                    .collect()
            } else {
                candidates.clone()
            };
            let mut kept = vec![];
            for x in candidates {
                if probe_o_membership(ps, &x, cfg)?.is_in() {
                    kept.push(x);
                }
            }
            kept.truncate(count);
            Ok(kept)
        }
    }
}

/// Tail sup of `V` over `[0.8T, T]` must fall below the band, doubling `T`.
fn storage_decays<P: PassiveSystem>(ps: &P, ics: &[Vec<f64>], cfg: &StabilityConfig) -> Result<Verdict> {
    let property = "v_detectable";
    let mut pending: Vec<Vec<f64>> = ics.to_vec();
    let mut horizon = cfg.horizon;
    loop {
        let tails: Vec<(f64, f64)> = pending
            .par_iter()
            .map(|x0| {
                let tr = integrate(&Drift(ps), x0, &cfg.integrator.with_horizon(horizon))?;
                if tr.escaped() {
                    return Ok((ps.storage::<f64>(tr.final_state()), tr.final_time()));
                }
                Ok(tr
                    .since(0.8 * tr.final_time())
                    .map(|(t, x)| (ps.storage::<f64>(x), t))
                    .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a }))
            })
            .collect::<Result<_>>()?;
        let bad: Vec<usize> = (0..pending.len()).filter(|&k| tails[k].0 > cfg.band).collect();
        if bad.is_empty() {
            return Ok(Verdict::holds(property)
                .param("band", cfg.band)
                .param("horizon", horizon)
                .param("samples", ics.len()));
        }
        if 2.0 * horizon > cfg.max_horizon {
            let k = bad[0];
            let w = Witness {
                initial: pending[k].clone(),
                time: tails[k].1,
                distance: tails[k].0,
            };
            return Ok(Verdict::fails(property, w)
                .param("band", cfg.band)
                .param("horizon", horizon)
                .note("witness distance is the storage value"));
        }
        pending = bad.iter().map(|&k| pending[k].clone()).collect();
        horizon *= 2.0;
    }
}

/// Zero-state, `V`- or `Γ`-detectability of the open loop, from `𝒪` points
/// within `attract_radius` of `Γ` (`global_radius` when `!local`).
pub fn check_detectability<P: PassiveSystem>(
    ps: &P,
    gamma: &dyn ClosedSet,
    o: &OSetSpec,
    kind: DetectabilityKind,
    local: bool,
    cfg: &DetectConfig,
) -> Result<Verdict> {
    let n = ps.state_dim();
    check_dim("goal set", n, gamma.dim())?;
    let radius = if local {
        cfg.stability.attract_radius
    } else {
        cfg.stability.global_radius
    };
    let scope = if local { "local" } else { "global, sampled radius only" };
    let ics = sample_o(ps, gamma, o, radius, cfg)?;
    let name = match kind {
        DetectabilityKind::ZeroState => "zero_state_detectable",
        DetectabilityKind::VDetect => "v_detectable",
        DetectabilityKind::GammaDetect => "gamma_detectable",
    };
    if ics.is_empty() {
        return Ok(Verdict::inconclusive(name, "no point of O found near the goal set"));
    }
    let rel = match o {
        OSetSpec::Explicit(set) => Some(set.as_ref()),
        OSetSpec::Probe { .. } => None,
    };
    let open = Drift(ps);
    let v = match kind {
        DetectabilityKind::ZeroState => {
            let origin = PointSet::origin(n);
            check_convergence_from(&open, ics, &origin, rel, name, &cfg.stability)?
        }
        DetectabilityKind::VDetect => storage_decays(ps, &ics, &cfg.stability)?,
        DetectabilityKind::GammaDetect => match rel {
            Some(set) => {
                let property = if local {
                    Property::SemiAsymptoticallyStable
                } else {
                    Property::GloballySemiAsymptoticallyStable
                };
                let stab = StabilityConfig {
                    attract_radius: radius,
                    ..cfg.stability.clone()
                };
                let q = StabilityQuery::new(property).relative(set).with_config(stab);
                Verdict::all(name, vec![check_property(&open, gamma, &q)?])
            }
            None => {
                return Ok(Verdict::inconclusive(
                    name,
                    "relative stability needs an explicit O; probe mode only supports zero_state and v_detect",
                ))
            }
        },
    };
    Ok(v.param("scope", scope).param("o_radius", radius))
}

/// `S′` as a closed set: projection refines a point onto the zero set of
/// the `S′` residual by damped Gauss–Newton, then sets coordinates to zero
/// where that keeps the residual in the band.
pub struct SPrimeSet<'a, P> {
    pub sys: &'a P,
    pub calculus: CalculusConfig,
    pub iters: usize,
}

impl<P> fmt::Debug for SPrimeSet<'_, P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SPrimeSet")
    }
}

impl<'a, P: PassiveSystem> SPrimeSet<'a, P> {
    pub fn new(sys: &'a P, calculus: CalculusConfig, iters: usize) -> Self {
        SPrimeSet { sys, calculus, iters }
    }

    pub fn residual(&self, x: &[f64]) -> Option<Vec<f64>> {
        s_prime_residual(self.sys, self.sys.storage_order(), x, &self.calculus).ok()
    }

    fn size(&self, x: &[f64]) -> f64 {
        self.residual(x).map_or(f64::INFINITY, |r| max_abs(&r))
    }

    fn jacobian(&self, x: &[f64], r0: &[f64]) -> Option<DMatrix<f64>> {
        let n = x.len();
        let mut jac = DMatrix::zeros(r0.len(), n);
        for j in 0..n {
            let h = 1e-6 * x[j].abs().max(1.0);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let (rp, rm) = (self.residual(&xp)?, self.residual(&xm)?);
            for i in 0..r0.len() {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        Some(jac)
    }

    /// Refined point and whether it is in the band.
    pub fn refine(&self, x: &[f64]) -> (Vec<f64>, bool) {
        let band = self.calculus.residual_band;
        let mut x = x.to_vec();
        let Some(mut r) = self.residual(&x) else {
            return (x, false);
        };
        let mut mu = 1e-3;
        let mut cost: f64 = r.iter().map(|v| v * v).sum();
        for _ in 0..self.iters {
            if max_abs(&r) <= band {
                break;
            }
            let Some(jac) = self.jacobian(&x, &r) else { break };
            let rv = DVector::from_column_slice(&r);
            let jt = jac.transpose();
            let grad = &jt * &rv;
            let mut stepped = false;
            for _ in 0..8 {
                let mut a = &jt * &jac;
                for i in 0..a.nrows() {
                    a[(i, i)] += mu * (1.0 + a[(i, i)]);
                }
                let Some(d) = a.lu().solve(&(-&grad)) else { break };
                let y: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
                if let Some(ry) = self.residual(&y) {
                    let cy: f64 = ry.iter().map(|v| v * v).sum();
                    if cy < cost {
                        x = y;
                        r = ry;
                        cost = cy;
                        mu = (mu / 3.0).max(1e-12);
                        stepped = true;
                        break;
                    }
                }
                mu *= 4.0;
            }
            if !stepped {
                break;
            }
        }
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|a, b| x[*a].abs().total_cmp(&x[*b].abs()));
        for i in order {
            if x[i] == 0.0 {
                continue;
            }
            let mut y = x.clone();
            y[i] = 0.0;
            if self.size(&y) <= band {
                x = y;
            }
        }
        let ok = self.size(&x) <= band;
        (x, ok)
    }
}

impl<P: PassiveSystem> ClosedSet for SPrimeSet<'_, P> {
    fn dim(&self) -> usize {
        self.sys.state_dim()
    }
    fn chart(&self) -> crate::domain::Chart {
        self.sys.chart()
    }
    fn dist(&self, x: &[f64]) -> f64 {
        let (p, ok) = self.refine(x);
        if ok {
            self.chart().distance(x, &p)
        } else {
            f64::INFINITY
        }
    }
    fn project(&self, x: &[f64]) -> Vec<f64> {
        self.refine(x).0
    }
    fn sample_on(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        let bounds = vec![(-2.0, 2.0); self.dim()];
        for _ in 0..100 {
            let (p, ok) = self.refine(&sample_box(&bounds, rng));
            if ok {
                return p;
            }
        }
        vec![f64::NAN; self.dim()]
    }
    fn is_bounded(&self) -> bool {
        false
    }
    fn membership_tol(&self) -> f64 {
        1e-9
    }
    fn describe(&self) -> String {
        "S'".into()
    }
}

/// Refined, deduplicated `S′` points from the configured box.
pub fn sample_s_prime<P: PassiveSystem>(ps: &P, cfg: &DetectConfig) -> Result<Vec<Vec<f64>>> {
    let n = ps.state_dim();
    let bounds = cfg.s_box(n);
    check_dim("S' box", n, bounds.len())?;
    s_prime_residual(ps, ps.storage_order(), &vec![0.0; n], &cfg.calculus)?;
    let set = SPrimeSet::new(ps, cfg.calculus.clone(), cfg.refine_iters);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let candidates: Vec<Vec<f64>> = (0..cfg.s_candidates).map(|_| sample_box(&bounds, &mut rng)).collect();
    let refined: Vec<(Vec<f64>, bool)> = candidates.par_iter().map(|x| set.refine(x)).collect();
    let chart = ps.chart();
    let mut kept: Vec<Vec<f64>> = vec![];
    for (p, ok) in refined {
        let inside = p.iter().zip(&bounds).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi);
        if ok && inside && kept.iter().all(|q| chart.distance(q, &p) > 0.25) {
            kept.push(p);
        }
        if kept.len() == cfg.s_samples {
            break;
        }
    }
    Ok(kept)
}

/// Sufficient conditions for `Γ`-detectability through `S′`: bounded
/// open-loop runs on `S′`, local uniform boundedness near `Γ`, and limit
/// points from `S′` that lie in `S′` also lying in `Γ`.
pub fn check_sufficient_conditions<P: PassiveSystem>(
    ps: &P,
    gamma: &dyn ClosedSet,
    cfg: &DetectConfig,
) -> Result<Verdict> {
    let property = "s_prime_sufficient_conditions";
    check_dim("goal set", ps.state_dim(), gamma.dim())?;
    let samples = sample_s_prime(ps, cfg)?;
    if samples.is_empty() {
        return Ok(Verdict::inconclusive(property, "no point of S' found in the search box"));
    }
    let open = Drift(ps);
    let set = SPrimeSet::new(ps, cfg.calculus.clone(), cfg.refine_iters);
    let in_s_prime = |x: &[f64]| set.residual(x).is_some_and(|r| max_abs(&r) <= cfg.membership_band);

    // Runs from S′ that are still on S′ at the end must not have escaped.
    let icfg = cfg.stability.integrator.with_horizon(cfg.stability.horizon);
    let runs: Vec<Trajectory> = samples
        .par_iter()
        .map(|x| integrate(&open, x, &icfg))
        .collect::<Result<_>>()?;
    let mut bounded = Verdict::holds("bounded_on_s_prime").param("samples", samples.len());
    for tr in &runs {
        if tr.escaped() && set.size(tr.final_state()) <= cfg.calculus.residual_band {
            let w = Witness {
                initial: tr.states[0].clone(),
                time: tr.final_time(),
                distance: gamma.dist(tr.final_state()),
            };
            bounded = Verdict::fails("bounded_on_s_prime", w);
            break;
        }
    }

    let lub = check_lub(&open, gamma, &cfg.stability)?;

    let inclusion_name = match cfg.variant {
        LimitVariant::Prolongational => "s_prime_jplus_in_gamma",
        LimitVariant::Omega => "s_prime_lplus_in_gamma",
    };
    let estimates: Vec<_> = samples
        .iter()
        .map(|x| match cfg.variant {
            LimitVariant::Prolongational => prolongational_limit_estimate(&open, x, Some(&set), &cfg.limits),
            LimitVariant::Omega => omega_limit_estimate(&open, x, &cfg.limits),
        })
        .collect::<Result<_>>()?;
    let mut inclusion = None;
    let mut checked = 0usize;
    let mut farthest: f64 = 0.0;
    'outer: for est in &estimates {
        for (k, p) in est.points.iter().enumerate() {
            if !in_s_prime(p) {
                continue;
            }
            checked += 1;
            let d = gamma.dist(p);
            farthest = farthest.max(d);
            if d > cfg.gamma_band {
                inclusion = Some(Verdict::fails(inclusion_name, est.witness(k, gamma)).param("s_prime_point", &est.x0));
                break 'outer;
            }
        }
    }
    let inclusion = inclusion.unwrap_or_else(|| {
        Verdict::holds(inclusion_name)
            .param("limit_points_in_s_prime", checked)
            .param("farthest_from_gamma", farthest)
    })
    .param("gamma_band", cfg.gamma_band)
    .param("membership_band", cfg.membership_band)
    .param("escaped_estimates", estimates.iter().filter(|e| e.escaped()).count());

    Ok(Verdict::all(property, vec![bounded, lub, inclusion])
        .param("s_prime_samples", &samples)
        .param("seed", cfg.seed))
}

/// On limit points, membership in `S` and in `S′` agree.
pub fn check_lemma4<P: PassiveSystem>(ps: &P, points: &[Vec<f64>], cfg: &CalculusConfig) -> Result<Verdict> {
    let property = "s_equals_s_prime_on_limit_points";
    if points.is_empty() {
        return Ok(Verdict::inconclusive(property, "empty limit set"));
    }
    let band = cfg.residual_band;
    let r = ps.storage_order();
    let rows: Vec<(f64, f64)> = points
        .par_iter()
        .map(|x| {
            let s = s_residual(ps, x, cfg)?;
            let sp = s_prime_residual(ps, r, x, cfg)?;
            Ok((max_abs(&s), max_abs(&sp)))
        })
        .collect::<Result<_>>()?;
    for (x, (s, sp)) in points.iter().zip(&rows) {
        if (*s <= band) != (*sp <= band) {
            return Ok(Verdict::fails_at(property, x.clone(), s.max(*sp))
                .param("s_residual", s)
                .param("s_prime_residual", sp)
                .param("band", band));
        }
    }
    Ok(Verdict::holds(property).param("points", points.len()).param("band", band))
}

/// Stability of `Γ` relative to `V⁻¹(0)` and semi-attractivity relative to
/// `𝒪`, both for the open loop.
pub fn check_alternative_condition<P: PassiveSystem>(
    ps: &P,
    gamma: &dyn ClosedSet,
    v_zero: &dyn ClosedSet,
    o_set: &dyn ClosedSet,
    cfg: &StabilityConfig,
) -> Result<Verdict> {
    let open = Drift(ps);
    let stable = check_property(
        &open,
        gamma,
        &StabilityQuery::new(Property::Stable).relative(v_zero).with_config(cfg.clone()),
    )?;
    let attract = check_property(
        &open,
        gamma,
        &StabilityQuery::new(Property::SemiAttractor).relative(o_set).with_config(cfg.clone()),
    )?;
    Ok(Verdict::all("alternative_detectability_condition", vec![stable, attract]))
}

/// Closed-loop (semi-)asymptotic stability of `Γ` under a passivity-based
/// feedback against `Γ`-detectability of the open loop, with the side
/// conditions (admissible feedback, local uniform boundedness for unbounded
/// `Γ`, bounded closed-loop runs in global mode). Consistent when both
/// sides agree.
pub fn theorem5_harness<P: PassiveSystem, B: FeedbackLaw>(
    ps: &P,
    fb: &B,
    gamma: &dyn ClosedSet,
    o_set: Arc<dyn ClosedSet>,
    global: bool,
    cfg: &DetectConfig,
) -> Result<ReductionReport> {
    let n = ps.state_dim();
    let bounds = cfg.s_box(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pts: Vec<Vec<f64>> = (0..cfg.stability.samples).map(|_| sample_box(&bounds, &mut rng)).collect();
    let cl = close_loop(ps, fb)?;
    let mut side = vec![(
        "admissible".to_string(),
        check_feedback_admissible(ps, fb, &pts, PASSIVITY_TOL)?,
    )];
    if !gamma.is_bounded() {
        side.push(("lub".to_string(), check_lub(&cl, gamma, &cfg.stability)?));
    }
    if global {
        side.push((
            "bounded".to_string(),
            check_bounded_near(&cl, gamma, cfg.stability.global_radius, &cfg.stability)?.0,
        ));
    }
    let detect = check_detectability(
        ps,
        gamma,
        &OSetSpec::Explicit(o_set),
        DetectabilityKind::GammaDetect,
        !global,
        cfg,
    )?;
    let target = if global {
        Property::GloballySemiAsymptoticallyStable
    } else {
        Property::SemiAsymptoticallyStable
    };
    let conclusion = check_property(
        &cl,
        gamma,
        &StabilityQuery::new(target).with_config(cfg.stability.clone()),
    )?;
    let side_outcomes: Vec<Outcome> = side.iter().map(|(_, v)| v.outcome).collect();
    let consistency = if side_outcomes.contains(&Outcome::Fails) {
        Consistency::HypothesesNotMet
    } else if side_outcomes.contains(&Outcome::Inconclusive)
        || detect.outcome == Outcome::Inconclusive
        || conclusion.outcome == Outcome::Inconclusive
    {
        Consistency::Inconclusive
    } else if detect.outcome == conclusion.outcome {
        Consistency::Consistent
    } else {
        Consistency::Inconsistent
    };
    let mut hypotheses: BTreeMap<String, Verdict> = side.into_iter().collect();
    hypotheses.insert("gamma_detectable".into(), detect);
    Ok(ReductionReport {
        theorem: "passivity_based_stabilization".into(),
        global,
        hypotheses,
        conclusion,
        consistency,
        necessity_ok: None,
    })
}
