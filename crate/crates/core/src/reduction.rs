//! Hypothesis-and-conclusion harness for the reduction principles: from
//! properties of `Γ` inside an invariant set `𝒪` and of `𝒪` near `Γ` to
//! semi-attractivity, semi-asymptotic stability or stability of `Γ`, and
//! the cascade special case `𝒪 = {y = 0}`.
//!
//! Each hypothesis and the conclusion are checked independently. The report
//! records whether the implication survived the sampling.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    norm, sample_near_set, CascadeDriven, CascadeDriver, CascadeProduct, CascadeSystem, ClosedSet,
    CoordinateSubspace, LiftedSet, Outcome, PointSet, SmoothField, Verdict, Witness,
};
use crate::error::{check_dim, Error, Result};
use crate::integrate::{integrate, Trajectory};
use crate::stability::{
    check_attraction_near, check_convergence_from, check_local_stability_near, check_lub,
    check_property, Property, StabilityConfig, StabilityQuery,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Consistency {
    /// Every hypothesis holds and so does the conclusion.
    Consistent,
    /// Some hypothesis fails; the theorem says nothing.
    HypothesesNotMet,
    /// Every hypothesis holds but the conclusion fails.
    Inconsistent,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReductionReport {
    pub theorem: String,
    pub global: bool,
    /// Keyed `i`, `ii`, ... with a trailing `'` for the global variants.
    pub hypotheses: BTreeMap<String, Verdict>,
    pub conclusion: Verdict,
    pub consistency: Consistency,
    /// Whether hypothesis (i) holds whenever the conclusion does, where (i)
    /// is a necessary condition.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub necessity_ok: Option<bool>,
}

impl ReductionReport {
    fn assemble(theorem: &str, global: bool, hyps: Vec<(String, Verdict)>, conclusion: Verdict) -> Self {
        let outcomes: Vec<Outcome> = hyps.iter().map(|(_, v)| v.outcome).collect();
        let consistency = if outcomes.contains(&Outcome::Fails) {
            Consistency::HypothesesNotMet
        } else if outcomes.contains(&Outcome::Inconclusive) {
            Consistency::Inconclusive
        } else {
            match conclusion.outcome {
                Outcome::Holds => Consistency::Consistent,
                Outcome::Fails => Consistency::Inconsistent,
                Outcome::Inconclusive => Consistency::Inconclusive,
            }
        };
        ReductionReport {
            theorem: theorem.to_string(),
            global,
            hypotheses: hyps.into_iter().collect(),
            conclusion,
            consistency,
            necessity_ok: None,
        }
    }

    pub fn hypothesis(&self, key: &str) -> Option<&Verdict> {
        self.hypotheses.get(key)
    }

    fn with_necessity(mut self, key: &str) -> Self {
        if let Some(h) = self.hypotheses.get(key) {
            self.necessity_ok = Some(!(self.conclusion.outcome.holds() && h.outcome.fails()));
        }
        self
    }
}

fn key(base: &str, global: bool) -> String {
    if global { format!("{base}'") } else { base.to_string() }
}

fn check_inclusion(gamma: &dyn ClosedSet, o_set: &dyn ClosedSet, seed: u64) -> Result<()> {
    check_dim("relative set", gamma.dim(), o_set.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..32 {
        let p = gamma.sample_on(&mut rng);
        if o_set.dist(&p) > o_set.membership_tol() {
            return Err(Error::Input(format!(
                "goal set point {p:?} is not in {}",
                o_set.describe()
            )));
        }
    }
    Ok(())
}

/// Ambient sup norm over the samples of `tr` with time in `[a, b]`.
fn sup_norm(tr: &Trajectory, a: f64, b: f64) -> (f64, f64) {
    tr.times
        .iter()
        .zip(&tr.states)
        .filter(|(t, _)| **t >= a && **t <= b)
        .map(|(t, x)| (norm(&tr.chart.to_ambient(x)), *t))
        .fold((0.0, a), |m, v| if v.0 > m.0 { v } else { m })
}

/// Trajectories from starts within `radius` of `gamma` are bounded: none
/// escapes, and the second half of each run does not reach beyond twice the
/// first half (plus one). Returns the runs for later use.
pub fn check_bounded_near<F: SmoothField + ?Sized>(
    field: &F,
    gamma: &dyn ClosedSet,
    radius: f64,
    cfg: &StabilityConfig,
) -> Result<(Verdict, Vec<Trajectory>)> {
    let property = "bounded_trajectories";
    check_dim("goal set", field.dim(), gamma.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5bd1);
    let ics: Vec<Vec<f64>> = (0..cfg.samples)
        .filter_map(|_| sample_near_set(gamma, None, radius, &mut rng))
        .collect();
    let icfg = cfg.integrator.with_horizon(cfg.horizon);
    let runs: Vec<Trajectory> = ics
        .par_iter()
        .map(|x0| integrate(field, x0, &icfg))
        .collect::<Result<_>>()?;
    for tr in &runs {
        let end = tr.final_time();
        let (early, _) = sup_norm(tr, 0.0, 0.5 * end);
        let (late, t) = sup_norm(tr, 0.5 * end, end);
        if tr.escaped() || late > 2.0 * early + 1.0 {
            let t = if tr.escaped() { end } else { t };
            let at = tr.times.iter().position(|s| *s == t).unwrap_or(tr.len() - 1);
            let w = Witness {
                initial: tr.states[0].clone(),
                time: t,
                distance: gamma.dist(&tr.states[at]),
            };
            let v = Verdict::fails(property, w)
                .param("radius", radius)
                .param("escaped", tr.escaped());
            return Ok((v, runs));
        }
    }
    let v = Verdict::holds(property)
        .param("radius", radius)
        .param("horizon", cfg.horizon)
        .param("samples", runs.len());
    Ok((v, runs))
}

/// Hypothesis (iii) of the attractivity principle: bounded runs from near
/// `Γ`, and their points that come within the band of `𝒪` (projected onto
/// it) are attracted to `Γ` along `𝒪`.
fn closure_in_relative_basin<F: SmoothField + ?Sized>(
    field: &F,
    gamma: &dyn ClosedSet,
    o_set: &dyn ClosedSet,
    cfg: &StabilityConfig,
) -> Result<Verdict> {
    let property = "bounded_with_closure_in_relative_basin";
    let (bounded, runs) = check_bounded_near(field, gamma, cfg.attract_radius, cfg)?;
    if !bounded.outcome.holds() {
        return Ok(Verdict::all(property, vec![bounded]));
    }
    let candidates: Vec<Vec<f64>> = runs
        .iter()
        .flat_map(|tr| {
            let from = 0.5 * tr.final_time();
            tr.since(from)
                .filter(|(_, x)| o_set.dist(x) <= cfg.band)
                .map(|(_, x)| o_set.project(x))
                .collect::<Vec<_>>()
        })
        .collect();
    let stride = (candidates.len() / cfg.samples).max(1);
    let picks: Vec<Vec<f64>> = candidates.into_iter().step_by(stride).take(cfg.samples).collect();
    if picks.is_empty() {
        let basin = Verdict::holds("closure_in_relative_basin")
            .note("no trajectory came within the band of the relative set");
        return Ok(Verdict::all(property, vec![bounded, basin]));
    }
    let basin = check_convergence_from(field, picks, gamma, Some(o_set), "closure_in_relative_basin", cfg)?;
    Ok(Verdict::all(property, vec![bounded, basin]))
}

fn relative_query<'a>(property: Property, o_set: &'a dyn ClosedSet, cfg: &StabilityConfig) -> StabilityQuery<'a> {
    StabilityQuery::new(property).relative(o_set).with_config(cfg.clone())
}

fn absolute_query(property: Property, cfg: &StabilityConfig) -> StabilityQuery<'static> {
    StabilityQuery::new(property).with_config(cfg.clone())
}

fn lub_if_unbounded<F: SmoothField + ?Sized>(
    field: &F,
    gamma: &dyn ClosedSet,
    cfg: &StabilityConfig,
) -> Result<Verdict> {
    if gamma.is_bounded() {
        Ok(Verdict::holds("locally_uniformly_bounded").note("goal set is bounded; not required"))
    } else {
        check_lub(field, gamma, cfg)
    }
}

/// Reduction principle for semi-attractivity (global attractivity when
/// `global`).
pub fn check_reduction_attractivity<F: SmoothField + ?Sized>(
    field: &F,
    gamma: &dyn ClosedSet,
    o_set: &dyn ClosedSet,
    cfg: &StabilityConfig,
    global: bool,
) -> Result<ReductionReport> {
    check_dim("goal set", field.dim(), gamma.dim())?;
    check_inclusion(gamma, o_set, cfg.seed)?;
    let sas = if global {
        Property::GloballySemiAsymptoticallyStable
    } else {
        Property::SemiAsymptoticallyStable
    };
    let mut hyps = vec![(key("i", global), check_property(field, gamma, &relative_query(sas, o_set, cfg))?)];
    hyps.push((key("ii", global), check_attraction_near(field, gamma, o_set, global, cfg)?));
    let third = if global {
        check_bounded_near(field, gamma, cfg.global_radius, cfg)?.0
    } else {
        closure_in_relative_basin(field, gamma, o_set, cfg)?
    };
    hyps.push((key("iii", global), third));
    let target = if global { Property::GlobalAttractor } else { Property::SemiAttractor };
    let conclusion = check_property(field, gamma, &absolute_query(target, cfg))?;
    Ok(ReductionReport::assemble("reduction_attractivity", global, hyps, conclusion)
        .with_necessity(&key("ii", global)))
}

fn sas_hypotheses<F: SmoothField + ?Sized>(
    field: &F,
    gamma: &dyn ClosedSet,
    o_set: &dyn ClosedSet,
    cfg: &StabilityConfig,
    global: bool,
    stability_only: bool,
) -> Result<Vec<(String, Verdict)>> {
    let first = if stability_only {
        Property::Stable
    } else if global {
        Property::GloballySemiAsymptoticallyStable
    } else {
        Property::SemiAsymptoticallyStable
    };
    let mut hyps = vec![
        ("i".to_string(), check_property(field, gamma, &relative_query(first, o_set, cfg))?),
        ("ii".to_string(), check_local_stability_near(field, gamma, o_set, cfg)?),
    ];
    if !stability_only {
        hyps.push(("iii".to_string(), check_attraction_near(field, gamma, o_set, global, cfg)?));
    }
    hyps.push(("iv".to_string(), lub_if_unbounded(field, gamma, cfg)?));
    if global && !stability_only {
        hyps.push(("v".to_string(), check_bounded_near(field, gamma, cfg.global_radius, cfg)?.0));
    }
    Ok(hyps)
}

/// Reduction principle for semi-asymptotic stability (global in brackets
/// when `global`).
pub fn check_reduction_sas<F: SmoothField + ?Sized>(
    field: &F,
    gamma: &dyn ClosedSet,
    o_set: &dyn ClosedSet,
    cfg: &StabilityConfig,
    global: bool,
) -> Result<ReductionReport> {
    check_dim("goal set", field.dim(), gamma.dim())?;
    check_inclusion(gamma, o_set, cfg.seed)?;
    let hyps = sas_hypotheses(field, gamma, o_set, cfg, global, false)?;
    let target = if global {
        Property::GloballySemiAsymptoticallyStable
    } else {
        Property::SemiAsymptoticallyStable
    };
    let conclusion = check_property(field, gamma, &absolute_query(target, cfg))?;
    Ok(ReductionReport::assemble("reduction_sas", global, hyps, conclusion).with_necessity("i"))
}

/// Reduction principle for stability: relative stability, local stability
/// of `𝒪` near `Γ`, and local uniform boundedness when `Γ` is unbounded.
pub fn check_reduction_stability<F: SmoothField + ?Sized>(
    field: &F,
    gamma: &dyn ClosedSet,
    o_set: &dyn ClosedSet,
    cfg: &StabilityConfig,
) -> Result<ReductionReport> {
    check_dim("goal set", field.dim(), gamma.dim())?;
    check_inclusion(gamma, o_set, cfg.seed)?;
    let hyps = sas_hypotheses(field, gamma, o_set, cfg, false, true)?;
    let conclusion = check_property(field, gamma, &absolute_query(Property::Stable, cfg))?;
    Ok(ReductionReport::assemble("reduction_stability", false, hyps, conclusion).with_necessity("i"))
}

/// Tolerance on `g(0) = 0`.
pub const CASCADE_TOL: f64 = 1e-10;

/// Cascade `ẋ = f(x,y), ẏ = g(y)` with `Γ̃ = Γ × {0}` and `𝒪 = {y = 0}`.
pub fn check_cascade<C: CascadeSystem + Sync>(
    sys: &C,
    gamma_x: Arc<dyn ClosedSet>,
    cfg: &StabilityConfig,
    global: bool,
) -> Result<ReductionReport> {
    let (nx, ny) = (sys.x_dim(), sys.y_dim());
    check_dim("goal set", nx, gamma_x.dim())?;
    let g0 = sys.g_y::<f64>(&vec![0.0; ny]);
    if g0.iter().any(|v| v.abs() > CASCADE_TOL) {
        return Err(Error::Input(format!("driver field does not vanish at y = 0: g(0) = {g0:?}")));
    }
    let driven = CascadeDriven(sys);
    let driver = CascadeDriver(sys);
    let product = CascadeProduct(sys);
    let lifted = LiftedSet {
        inner: gamma_x.clone(),
        extra: ny,
    };
    let sas = if global {
        Property::GloballySemiAsymptoticallyStable
    } else {
        Property::SemiAsymptoticallyStable
    };
    let mut hyps = vec![
        ("i".to_string(), check_property(&driven, gamma_x.as_ref(), &absolute_query(sas, cfg))?),
        ("ii".to_string(), check_property(&driver, &PointSet::origin(ny), &absolute_query(sas, cfg))?),
    ];
    hyps.push(("iii".to_string(), lub_if_unbounded(&product, &lifted, cfg)?));
    if global {
        hyps.push(("iv".to_string(), check_bounded_near(&product, &lifted, cfg.global_radius, cfg)?.0));
    }
    let conclusion = check_property(&product, &lifted, &absolute_query(sas, cfg))?;
    let o_set = CoordinateSubspace::new(nx + ny, (nx..nx + ny).collect(), f64::INFINITY)?;
    let mut report = ReductionReport::assemble("cascade", global, hyps, conclusion);
    report.conclusion = report.conclusion.param("o_set", o_set.describe());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::Scalar;
    use crate::domain::LinearField;
    use crate::scenarios::{CascadeKind, CascadeModel};
    use nalgebra::dmatrix;

    fn light() -> StabilityConfig {
        StabilityConfig {
            samples: 12,
            horizon: 40.0,
            ..Default::default()
        }
    }

    #[test]
    fn decoupled_contraction_is_consistent() {
        let f = LinearField::new(dmatrix![-1.0, 0.0; 0.0, -1.0]).unwrap();
        let o = CoordinateSubspace::new(2, vec![1], 3.0).unwrap();
        let r = check_reduction_attractivity(&f, &PointSet::origin(2), &o, &light(), false).unwrap();
        assert_eq!(r.consistency, Consistency::Consistent, "{r:#?}");
        assert_eq!(r.hypotheses.keys().collect::<Vec<_>>(), ["i", "ii", "iii"]);
    }

    #[test]
    fn goal_set_outside_o_is_rejected() {
        let f = LinearField::new(dmatrix![-1.0, 0.0; 0.0, -1.0]).unwrap();
        let o = CoordinateSubspace::new(2, vec![1], 3.0).unwrap();
        let gamma = PointSet::new(vec![0.0, 1.0]);
        assert!(matches!(
            check_reduction_sas(&f, &gamma, &o, &light(), false),
            Err(Error::Input(_))
        ));
    }

    struct Offset;

    impl CascadeSystem for Offset {
        fn x_dim(&self) -> usize {
            1
        }
        fn y_dim(&self) -> usize {
            1
        }
        fn f_xy<S: Scalar>(&self, x: &[S], _y: &[S]) -> Vec<S> {
            vec![S::zero() - x[0].clone()]
        }
        fn g_y<S: Scalar>(&self, y: &[S]) -> Vec<S> {
            vec![S::cst(1.0) - y[0].clone()]
        }
    }

    #[test]
    fn cascade_driver_must_vanish_at_zero() {
        assert!(matches!(
            check_cascade(&Offset, Arc::new(PointSet::origin(1)), &light(), false),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn linear_cascade_is_consistent() {
        let m = CascadeModel {
            kind: CascadeKind::Linear {
                a: dmatrix![-1.0],
                m: vec![dmatrix![1.0]],
                c: dmatrix![-1.0],
            },
        };
        let r = check_cascade(&m, Arc::new(PointSet::origin(1)), &light(), false).unwrap();
        assert_eq!(r.consistency, Consistency::Consistent, "{r:#?}");
    }
}
