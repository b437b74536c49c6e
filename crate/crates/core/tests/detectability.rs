use std::sync::Arc;

use setstab::calculus::CalculusConfig;
use setstab::detectability::*;
use setstab::domain::{Chart, ClosedSet, CoordinateSubspace, Drift, OutputFeedback, PointSet};
use setstab::limitsets::{omega_limit_estimate, LimitConfig};
use setstab::integrate::IntegratorConfig;
use setstab::reduction::Consistency;
use setstab::scenarios::Model;
use setstab::stability::StabilityConfig;

const POLAR: Chart = Chart::Polar { r: 0, theta: 1 };

fn polar_sets() -> (PointSet, Arc<dyn ClosedSet>) {
    (
        PointSet::with_chart(vec![1.0, 0.0, 0.0], POLAR),
        Arc::new(CoordinateSubspace::with_chart(3, vec![2], 3.0, POLAR).unwrap()),
    )
}

fn five_state_sets() -> (PointSet, Arc<dyn ClosedSet>) {
    (
        PointSet::origin(5),
        Arc::new(CoordinateSubspace::new(5, vec![0, 2, 3, 4], 1.0).unwrap()),
    )
}

fn cfg() -> DetectConfig {
    DetectConfig {
        stability: StabilityConfig {
            samples: 16,
            horizon: 100.0,
            ..Default::default()
        },
        limits: LimitConfig {
            integrator: IntegratorConfig::default().with_horizon(60.0),
            levels: 4,
            ics_per_level: 4,
            ..Default::default()
        },
        s_samples: 6,
        ..Default::default()
    }
}

#[test]
fn o_membership_probe() {
    let m = Model::Polar;
    assert!(probe_o_membership(&m, &[2.0, 1.0, 0.0], &cfg()).unwrap().is_in());
    assert!(matches!(
        probe_o_membership(&m, &[1.0, 0.0, 0.5], &cfg()).unwrap(),
        Membership::Out { escaped: false, .. }
    ));
    assert!(probe_o_membership(&m, &[1.0, 0.0, 0.0], &cfg()).unwrap().is_in());
}

#[test]
fn five_state_is_gamma_detectable() {
    let (gamma, o) = five_state_sets();
    let v = check_detectability(&Model::FiveState, &gamma, &OSetSpec::Explicit(o), DetectabilityKind::GammaDetect, true, &cfg())
        .unwrap();
    assert!(v.outcome.holds(), "{v:#?}");
}

#[test]
fn polar_is_not_gamma_detectable_but_attractive_in_o() {
    let (gamma, o) = polar_sets();
    let v = check_detectability(&Model::Polar, &gamma, &OSetSpec::Explicit(o), DetectabilityKind::GammaDetect, true, &cfg())
        .unwrap();
    assert!(v.outcome.fails(), "{v:#?}");
    let sas = &v.components[0];
    assert!(sas.component("stable_relative").unwrap().outcome.fails());
    assert!(sas.component("semi_attractor_relative").unwrap().outcome.holds());
}

#[test]
fn lemma2_zero_state_matches_gamma_detect() {
    let gamma = PointSet::origin(1);
    let o: Arc<dyn ClosedSet> = Arc::new(PointSet::origin(1));
    let spec = OSetSpec::Explicit(o);
    let m = Model::Integrator;
    let zs = check_detectability(&m, &gamma, &spec, DetectabilityKind::ZeroState, true, &cfg()).unwrap();
    let gd = check_detectability(&m, &gamma, &spec, DetectabilityKind::GammaDetect, true, &cfg()).unwrap();
    let vd = check_detectability(&m, &gamma, &spec, DetectabilityKind::VDetect, true, &cfg()).unwrap();
    assert_eq!(zs.outcome, gd.outcome);
    assert_eq!(vd.outcome, gd.outcome);
    assert!(gd.outcome.holds());
}

#[test]
fn probe_mode_supports_zero_state() {
    let m = Model::UnobservableOscillator;
    let candidates = vec![vec![0.3, 0.0, 0.0], vec![0.0, 0.2, 0.4]];
    assert!(!probe_o_membership(&m, &candidates[1], &cfg()).unwrap().is_in());
    let spec = OSetSpec::Probe { candidates };
    let v = check_detectability(&m, &PointSet::origin(3), &spec, DetectabilityKind::ZeroState, true, &cfg()).unwrap();
    assert!(v.outcome.fails(), "{v:#?}");
    let v = check_detectability(&m, &PointSet::origin(3), &spec, DetectabilityKind::GammaDetect, true, &cfg()).unwrap();
    assert_eq!(v.outcome, setstab::domain::Outcome::Inconclusive);
}

#[test]
fn sufficient_conditions() {
    let v = check_sufficient_conditions(&Model::Integrator, &PointSet::origin(1), &cfg()).unwrap();
    assert!(v.outcome.holds(), "{v:#?}");

    let (gamma, _) = five_state_sets();
    let v = check_sufficient_conditions(&Model::FiveState, &gamma, &cfg()).unwrap();
    assert!(v.outcome.holds(), "{v:#?}");

    let (gamma, _) = polar_sets();
    let v = check_sufficient_conditions(&Model::Polar, &gamma, &cfg()).unwrap();
    assert!(v.outcome.fails(), "{v:#?}");
    assert!(v.component("s_prime_jplus_in_gamma").unwrap().outcome.fails());
}

#[test]
fn lemma4_on_limit_clouds() {
    let lc = LimitConfig {
        integrator: IntegratorConfig::default().with_horizon(100.0),
        ..Default::default()
    };
    let cc = CalculusConfig::default();
    for (m, x0) in [
        (Model::Example1, vec![1.0, 0.2, 0.5]),
        (Model::Polar, vec![0.5, 1.0, 0.0]),
        (Model::FiveState, vec![0.0, 1.0, 0.5, 0.0, 0.5]),
    ] {
        let cloud = omega_limit_estimate(&Drift(&m), &x0, &lc).unwrap();
        let v = check_lemma4(&m, &cloud.points, &cc).unwrap();
        assert!(v.outcome.holds(), "{m:?}: {v:#?}");
    }
}

#[test]
fn alternative_condition() {
    let (gamma, o) = polar_sets();
    let v = check_alternative_condition(&Model::Polar, &gamma, o.as_ref(), o.as_ref(), &cfg().stability).unwrap();
    assert!(v.outcome.fails(), "{v:#?}");
    let (gamma, o) = five_state_sets();
    let v = check_alternative_condition(&Model::FiveState, &gamma, o.as_ref(), o.as_ref(), &cfg().stability).unwrap();
    assert!(v.outcome.holds(), "{v:#?}");
}

#[test]
fn theorem5_both_directions() {
    let m = Model::FiveState;
    let (gamma, o) = five_state_sets();
    let mut c = cfg();
    c.stability.attract_radius = 1e-2;
    c.stability.epsilons = vec![0.05, 0.02];
    let r = theorem5_harness(&m, &OutputFeedback::new(&m), &gamma, o, false, &c).unwrap();
    assert_eq!(r.consistency, Consistency::Consistent, "{r:#?}");
    assert!(r.conclusion.outcome.holds());

    let m = Model::Polar;
    let (gamma, o) = polar_sets();
    let r = theorem5_harness(&m, &OutputFeedback::new(&m), &gamma, o, false, &cfg()).unwrap();
    assert_eq!(r.consistency, Consistency::Consistent, "{r:#?}");
    assert!(r.conclusion.outcome.fails());

    let m = Model::Integrator;
    let o: Arc<dyn ClosedSet> = Arc::new(PointSet::origin(1));
    let r = theorem5_harness(&m, &OutputFeedback::new(&m), &PointSet::origin(1), o, true, &cfg()).unwrap();
    assert_eq!(r.consistency, Consistency::Consistent, "{r:#?}");
    assert!(r.conclusion.outcome.holds());
}

#[test]
fn probed_o_points_lie_in_s_prime() {
    use setstab::calculus::s_prime_residual;
    use setstab::domain::{seeded_box_samples, PassiveSystem};
    let cc = CalculusConfig::default();
    for (m, bounds) in [
        (Model::Polar, vec![(0.2, 2.0), (-3.0, 3.0), (-0.5, 0.5)]),
        (Model::FiveState, vec![(-1.0, 1.0); 5]),
        (Model::UnobservableOscillator, vec![(-1.0, 1.0); 3]),
    ] {
        let mut pts = seeded_box_samples(&bounds, 12, 3);
        // Candidates on h = 0 as well, since generic points are almost never in O.
        for p in pts.clone() {
            let mut q = p;
            match m {
                Model::FiveState => q[2..].iter_mut().for_each(|v| *v = 0.0),
                _ => q[2] = 0.0,
            }
            pts.push(q);
        }
        let mut inside = 0;
        for x in &pts {
            if probe_o_membership(&m, x, &cfg()).unwrap().is_in() {
                inside += 1;
                let r = s_prime_residual(&m, m.storage_order(), x, &cc).unwrap();
                let worst = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                assert!(worst <= 1e-6, "{m:?} at {x:?}: S' residual {worst:e}");
            }
        }
        assert!(inside > 0, "{m:?}: no probe point landed in O");
    }
}
