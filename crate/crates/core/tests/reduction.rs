use std::sync::Arc;

use setstab::domain::{close_loop, Chart, CoordinateSubspace, Drift, OutputFeedback, PointSet};
use setstab::reduction::{check_cascade, check_reduction_attractivity, check_reduction_sas, Consistency};
use setstab::scenarios::{CascadeKind, CascadeModel, Model};
use setstab::stability::{replay_witness, StabilityConfig};

fn cfg() -> StabilityConfig {
    StabilityConfig {
        samples: 16,
        horizon: 100.0,
        ..Default::default()
    }
}

#[test]
fn example1_attractivity_pattern() {
    let m = Model::Example1;
    let gamma = CoordinateSubspace::new(3, vec![1, 2], 1.5).unwrap();
    let o = CoordinateSubspace::new(3, vec![2], 1.5).unwrap();
    let r = check_reduction_attractivity(&Drift(&m), &gamma, &o, &cfg(), true).unwrap();
    let i = r.hypothesis("i'").unwrap();
    assert!(i.outcome.fails(), "{i:#?}");
    assert!(i.component("stable_relative").unwrap().outcome.fails());
    assert!(r.hypothesis("ii'").unwrap().outcome.holds(), "{r:#?}");
    assert!(r.hypothesis("iii'").unwrap().outcome.holds(), "{r:#?}");
    assert!(r.conclusion.outcome.fails(), "{r:#?}");
    assert_eq!(r.consistency, Consistency::HypothesesNotMet);
    let w = r.conclusion.witness.as_ref().unwrap();
    let d = replay_witness(&Drift(&m), w, &gamma, &cfg().integrator).unwrap();
    assert!((d - w.distance).abs() <= 0.01 * w.distance);
}

#[test]
fn polar_closed_loop_sas_pattern() {
    let m = Model::Polar;
    let fb = OutputFeedback::new(&m);
    let cl = close_loop(&m, &fb).unwrap();
    let polar = Chart::Polar { r: 0, theta: 1 };
    let gamma = PointSet::with_chart(vec![1.0, 0.0, 0.0], polar);
    let o = CoordinateSubspace::with_chart(3, vec![2], 3.0, polar).unwrap();
    let r = check_reduction_sas(&cl, &gamma, &o, &cfg(), false).unwrap();
    assert!(r.hypothesis("i").unwrap().outcome.fails(), "{r:#?}");
    assert!(r.hypothesis("ii").unwrap().outcome.holds(), "{r:#?}");
    assert!(r.hypothesis("iii").unwrap().outcome.holds(), "{r:#?}");
    assert!(r.conclusion.outcome.fails());
    assert_eq!(r.necessity_ok, Some(true));
}

#[test]
fn five_state_closed_loop_sas() {
    let m = Model::FiveState;
    let fb = OutputFeedback::new(&m);
    let cl = close_loop(&m, &fb).unwrap();
    let gamma = PointSet::origin(5);
    let o = CoordinateSubspace::new(5, vec![0, 2, 3, 4], 1.0).unwrap();
    let c = StabilityConfig {
        attract_radius: 1e-2,
        epsilons: vec![0.05, 0.02],
        ..cfg()
    };
    let r = check_reduction_sas(&cl, &gamma, &o, &c, false).unwrap();
    assert_eq!(r.consistency, Consistency::Consistent, "{r:#?}");
}

#[test]
fn scalar_cascade_globally_consistent() {
    let m = CascadeModel { kind: CascadeKind::Scalar };
    let r = check_cascade(&m, Arc::new(PointSet::origin(1)), &cfg(), true).unwrap();
    assert_eq!(r.consistency, Consistency::Consistent, "{r:#?}");
    assert!(r.hypothesis("iv").unwrap().outcome.holds());
}

#[test]
fn unstable_driver_fails_hypothesis_ii() {
    let m = CascadeModel { kind: CascadeKind::UnstableDriver };
    let r = check_cascade(&m, Arc::new(PointSet::origin(1)), &cfg(), false).unwrap();
    assert!(r.hypothesis("ii").unwrap().outcome.fails(), "{r:#?}");
    assert_eq!(r.consistency, Consistency::HypothesesNotMet);
}

#[test]
fn rotating_cascade_exercises_lub() {
    let m = CascadeModel { kind: CascadeKind::Rotating };
    let gamma = CoordinateSubspace::new(2, vec![1], 3.0).unwrap();
    let r = check_cascade(&m, Arc::new(gamma), &cfg(), false).unwrap();
    let lub = r.hypothesis("iii").unwrap();
    assert_eq!(lub.property, "locally_uniformly_bounded");
    assert!(lub.notes.is_empty(), "LUB must be checked for an unbounded goal set");
    assert_ne!(r.consistency, Consistency::Inconsistent, "{r:#?}");
}
