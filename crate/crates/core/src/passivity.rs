//! Sampled checks of the passivity identities `L_f V ≤ 0`, `L_g V = hᵀ`,
//! admissibility of feedbacks `u = −φ(x)`, and monotonicity of the storage
//! along recorded trajectories.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::lie_scalar;
use crate::domain::{
    max_abs, norm, ClosedSet, ControlAffine, Drift, FeedbackLaw, InputField, PassiveSystem,
    Storage, Verdict,
};
use crate::error::{check_dim, Error, Result};
use crate::integrate::Trajectory;

pub const PASSIVITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct PassivityResiduals {
    /// `max(L_f V, 0)`.
    pub drift: f64,
    /// `max_i |L_{g_i} V − h_i|`.
    pub output: f64,
    /// `max(−V, 0)`.
    pub negativity: f64,
}

impl PassivityResiduals {
    pub fn worst(&self) -> f64 {
        self.drift.max(self.output).max(self.negativity)
    }
}

/// Residuals of the passivity identities at one point.
pub fn passivity_residuals<P: PassiveSystem>(ps: &P, x: &[f64]) -> Result<PassivityResiduals> {
    check_dim("state", ps.state_dim(), x.len())?;
    let v = Storage(ps);
    let lfv = lie_scalar(&Drift(ps), &v, x)?;
    let h = ps.output(x);
    let mut output: f64 = 0.0;
    for (i, hi) in h.iter().enumerate() {
        let lgv = lie_scalar(&InputField { sys: ps, index: i }, &v, x)?;
        output = output.max((lgv - hi).abs());
    }
    let value = ps.storage(x);
    if !value.is_finite() {
        return Err(Error::NumericalDomain("storage is not finite".into()));
    }
    Ok(PassivityResiduals {
        drift: lfv.max(0.0),
        output,
        negativity: (-value).max(0.0),
    })
}

/// Checks `L_f V ≤ tol`, `|L_g V − hᵀ| ≤ tol` and `V ≥ −tol` at every sample.
pub fn check_passivity<P: PassiveSystem>(ps: &P, samples: &[Vec<f64>], tol: f64) -> Result<Verdict> {
    let property = "passivity";
    if samples.is_empty() {
        return Ok(Verdict::inconclusive(property, "no sample points"));
    }
    let residuals: Vec<PassivityResiduals> = samples
        .par_iter()
        .map(|x| passivity_residuals(ps, x))
        .collect::<Result<_>>()?;
    let mut worst = PassivityResiduals::default();
    let mut worst_at = 0;
    for (k, r) in residuals.iter().enumerate() {
        if r.worst() > worst.worst() {
            worst_at = k;
        }
        worst.drift = worst.drift.max(r.drift);
        worst.output = worst.output.max(r.output);
        worst.negativity = worst.negativity.max(r.negativity);
    }
    let verdict = if worst.worst() <= tol {
        Verdict::holds(property)
    } else {
        Verdict::fails_at(property, samples[worst_at].clone(), residuals[worst_at].worst())
    };
    Ok(verdict
        .param("samples", samples.len())
        .param("tol", tol)
        .param("max_drift_residual", worst.drift)
        .param("max_output_residual", worst.output)
        .param("max_negativity", worst.negativity))
}

/// Checks `φ = 0` where `h = 0` and `hᵀφ > margin·‖h‖²` elsewhere.
///
/// A sampled pass certifies the samples only; the `global` parameter is
/// `"holds"` only when `φ` is a positive multiple of `h`.
pub fn check_feedback_admissible<C: ControlAffine, B: FeedbackLaw>(
    sys: &C,
    fb: &B,
    samples: &[Vec<f64>],
    tol: f64,
) -> Result<Verdict> {
    let property = "feedback_admissible";
    check_dim("feedback inputs", sys.input_dim(), fb.input_dim())?;
    const MARGIN: f64 = 1e-12;
    let mut zero_set = 0usize;
    let mut active = 0usize;
    let mut worst: Option<(usize, f64)> = None;
    for (k, x) in samples.iter().enumerate() {
        check_dim("state", sys.state_dim(), x.len())?;
        let h: Vec<f64> = sys.output(x);
        let phi: Vec<f64> = fb.phi(x);
        let violation = if norm(&h) <= tol {
            zero_set += 1;
            max_abs(&phi) - tol
        } else {
            active += 1;
            let inner: f64 = h.iter().zip(&phi).map(|(a, b)| a * b).sum();
            MARGIN * norm(&h).powi(2) - inner
        };
        if violation > 0.0 && worst.is_none_or(|(_, w)| violation > w) {
            worst = Some((k, violation));
        }
    }
    if active == 0 {
        return Ok(Verdict::inconclusive(property, "no sample with h(x) != 0")
            .param("samples", samples.len()));
    }
    let structural = fb.output_gain().is_some_and(|k| k > 0.0);
    let verdict = match worst {
        Some((k, v)) => Verdict::fails_at(property, samples[k].clone(), v),
        None if structural => Verdict::holds(property),
        None => Verdict::holds(property)
            .note("holds on the sampled region only; not certified globally"),
    };
    Ok(verdict
        .param("samples", samples.len())
        .param("samples_h_zero", zero_set)
        .param("samples_h_nonzero", active)
        .param("tol", tol)
        .param("margin", MARGIN)
        .param("global", if structural { "holds" } else { "inconclusive" }))
}

/// Holds iff no recorded step raises `V` by more than
/// `1e-8 + 10·(atol + rtol·|V|)`.
pub fn check_storage_monotone(traj: &Trajectory, rtol: f64, atol: f64) -> Result<Verdict> {
    let property = "storage_monotone";
    let v = traj
        .storage
        .as_ref()
        .ok_or_else(|| Error::Input("trajectory carries no storage values".into()))?;
    let mut worst: Option<(usize, f64)> = None;
    for k in 1..v.len() {
        let rise = v[k] - v[k - 1];
        let allowed = 1e-8 + 10.0 * (atol + rtol * v[k - 1].abs());
        if rise > allowed && worst.is_none_or(|(_, w)| rise > w) {
            worst = Some((k, rise));
        }
    }
    let max_rise = (1..v.len()).map(|k| v[k] - v[k - 1]).fold(0.0, f64::max);
    let verdict = match worst {
        None => Verdict::holds(property),
        Some((k, rise)) => Verdict::fails(
            property,
            crate::domain::Witness {
                initial: traj.states[0].clone(),
                time: traj.times[k],
                distance: rise,
            },
        ),
    };
    Ok(verdict
        .param("steps", v.len().saturating_sub(1))
        .param("max_increase", max_rise)
        .param("rtol", rtol)
        .param("atol", atol))
}

/// Sampled check of `Γ ⊂ V⁻¹(0) ⊂ 𝒪 ⊂ h⁻¹(0)`.
pub fn check_inclusion_chain<P: PassiveSystem>(
    ps: &P,
    gamma: &dyn ClosedSet,
    v_zero: &dyn ClosedSet,
    o_set: &dyn ClosedSet,
    count: usize,
    seed: u64,
    tol: f64,
) -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = Vec::new();
    let mut link = |name: &str, from: &dyn ClosedSet, test: &dyn Fn(&[f64]) -> f64| {
        let mut worst: Option<(Vec<f64>, f64)> = None;
        for _ in 0..count {
            let x = from.sample_on(&mut rng);
            let gap = test(&x);
            if gap > tol && worst.as_ref().is_none_or(|(_, w)| gap > *w) {
                worst = Some((x, gap));
            }
        }
        parts.push(match worst {
            None => Verdict::holds(name),
            Some((x, gap)) => Verdict::fails_at(name, x, gap),
        });
    };
    link("gamma_in_v_zero", gamma, &|x| ps.storage(x).abs());
    link("v_zero_in_o", v_zero, &|x| o_set.dist(x));
    link("o_in_h_zero", o_set, &|x| max_abs(&ps.output(x)));
    Ok(Verdict::all("inclusion_chain", parts)
        .param("samples_per_link", count)
        .param("tol", tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::Scalar;
    use crate::domain::{seeded_box_samples, OutputFeedback};
    use crate::integrate::{integrate_closed_loop, IntegratorConfig};
    use crate::scenarios::Model;

    struct WrongStorage;
    impl ControlAffine for WrongStorage {
        fn state_dim(&self) -> usize {
            1
        }
        fn input_dim(&self) -> usize {
            1
        }
        fn drift<S: Scalar>(&self, _x: &[S]) -> Vec<S> {
            vec![S::zero()]
        }
        fn input_field<S: Scalar>(&self, _i: usize, _x: &[S]) -> Vec<S> {
            vec![S::one()]
        }
        fn output<S: Scalar>(&self, x: &[S]) -> Vec<S> {
            vec![x[0].clone()]
        }
    }
    impl PassiveSystem for WrongStorage {
        fn storage<S: Scalar>(&self, x: &[S]) -> S {
            x[0].square()
        }
    }

    struct Mixed<'a>(&'a Model);
    impl FeedbackLaw for Mixed<'_> {
        fn input_dim(&self) -> usize {
            2
        }
        fn phi<S: Scalar>(&self, x: &[S]) -> Vec<S> {
            let h = self.0.output(x);
            vec![h[0].clone(), S::zero() - h[1].clone()]
        }
    }

    struct Negated<'a>(&'a Model);
    impl FeedbackLaw for Negated<'_> {
        fn input_dim(&self) -> usize {
            self.0.input_dim()
        }
        fn phi<S: Scalar>(&self, x: &[S]) -> Vec<S> {
            self.0.output(x).into_iter().map(|v| S::zero() - v).collect()
        }
    }

    #[test]
    fn example_storages_pass() {
        let polar = seeded_box_samples(&[(0.01, 3.0), (-4.0, 4.0), (-2.0, 2.0)], 500, 1);
        let v = check_passivity(&Model::Polar, &polar, PASSIVITY_TOL).unwrap();
        assert!(v.outcome.holds(), "{v:?}");
        let five = seeded_box_samples(&[(-2.0, 2.0); 5], 500, 2);
        assert!(check_passivity(&Model::FiveState, &five, PASSIVITY_TOL).unwrap().outcome.holds());
    }

    #[test]
    fn wrong_storage_factor_fails_with_witness() {
        let xs = seeded_box_samples(&[(-2.0, 2.0)], 50, 3);
        let v = check_passivity(&WrongStorage, &xs, PASSIVITY_TOL).unwrap();
        assert!(v.outcome.fails());
        let w = v.witness.unwrap();
        // L_g V − h = 2x − x = x at the witness
        assert!((w.distance - w.initial[0].abs()).abs() < 1e-12);
    }

    #[test]
    fn feedback_admissibility() {
        let m = Model::Oscillator;
        let mut xs = seeded_box_samples(&[(-1.0, 1.0); 2], 50, 4);
        xs.push(vec![0.5, 0.0]);
        let v = check_feedback_admissible(&m, &OutputFeedback::new(&m), &xs, 1e-12).unwrap();
        assert!(v.outcome.holds());
        assert_eq!(v.params["global"], "holds");
        assert!(check_feedback_admissible(&m, &Negated(&m), &xs, 1e-12).unwrap().outcome.fails());

        // |h1| > |h2| on this box: x3 in [1, 2], x4 in [0.1, 0.5] gives x4 e^{-1/x4^2} < 0.01
        let five = Model::FiveState;
        let ys = seeded_box_samples(&[(-1.0, 1.0), (-1.0, 1.0), (1.0, 2.0), (0.1, 0.5), (-1.0, 1.0)], 50, 5);
        let v = check_feedback_admissible(&five, &Mixed(&five), &ys, 1e-12).unwrap();
        assert!(v.outcome.holds());
        assert_eq!(v.params["global"], "inconclusive");

        let on_zero = vec![vec![0.3, 0.0]];
        let v = check_feedback_admissible(&m, &OutputFeedback::new(&m), &on_zero, 1e-12).unwrap();
        assert_eq!(v.outcome, crate::domain::Outcome::Inconclusive);
    }

    #[test]
    fn storage_monotone_and_its_mirror() {
        let m = Model::Polar;
        let cfg = IntegratorConfig::default().with_horizon(20.0);
        let tr = integrate_closed_loop(&m, &OutputFeedback::new(&m), &[2.0, 1.0, 1.0], &cfg).unwrap();
        let v = check_storage_monotone(&tr, cfg.rtol, cfg.atol).unwrap();
        assert!(v.outcome.holds());
        let s = tr.storage.as_ref().unwrap();
        assert!(s.last().unwrap() < &s[0]);

        let mut rev = tr.clone();
        let t_end = tr.final_time();
        rev.times = tr.times.iter().rev().map(|t| t_end - t).collect();
        rev.states.reverse();
        rev.storage.as_mut().unwrap().reverse();
        let v = check_storage_monotone(&rev, cfg.rtol, cfg.atol).unwrap();
        assert!(v.outcome.fails() && v.witness.is_some());

        let open = crate::integrate::integrate(&Drift(&m), &[2.0, 1.0, 1.0], &cfg).unwrap();
        assert!(matches!(check_storage_monotone(&open, 1e-9, 1e-11), Err(Error::Input(_))));
    }
}
