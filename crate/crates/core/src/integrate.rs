//! Adaptive Dormand–Prince 5(4) integration with PI step control, escape
//! detection, and closed-loop recording of inputs and storage.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    close_loop, norm, uniform_ball, Chart, FeedbackLaw, PassiveSystem, SmoothField, Witness,
};
use crate::error::{check_dim, check_finite, Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Horizon `T`.
    pub horizon: f64,
    /// Escape radius `R_max` in ambient coordinates.
    pub r_max: f64,
    /// Record every `stride`-th accepted step (the last state is always kept).
    pub stride: usize,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rtol: 1e-9,
            atol: 1e-11,
            max_step: f64::MAX,
            horizon: 100.0,
            r_max: 1e6,
            stride: 1,
            max_steps: 20_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_horizon(&self, horizon: f64) -> Self {
        IntegratorConfig {
            horizon,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::Input("integrator tolerances must be positive".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Input("integration horizon must be positive and finite".into()));
        }
        if !(self.max_step > 0.0) || !(self.r_max > 0.0) || self.stride == 0 {
            return Err(Error::Input(
                "max step, escape radius and stride must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    /// `‖x‖` exceeded the escape radius.
    Escaped,
    /// The step size collapsed, taken as leaving the maximal interval of existence.
    StepCollapse,
    StepLimit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `u(t) = −φ(x(t))`, closed-loop runs only.
    pub inputs: Option<Vec<Vec<f64>>>,
    /// `V(x(t))`, closed-loop runs only.
    pub storage: Option<Vec<f64>>,
    pub termination: Termination,
    pub chart: Chart,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least the initial time")
    }

    pub fn completed(&self) -> bool {
        self.termination == Termination::Completed
    }

    /// Escaped the radius or collapsed its step.
    pub fn escaped(&self) -> bool {
        matches!(self.termination, Termination::Escaped | Termination::StepCollapse)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Recorded samples with `t ≥ from`.
    pub fn since(&self, from: f64) -> impl Iterator<Item = (f64, &[f64])> {
        self.times
            .iter()
            .zip(&self.states)
            .filter(move |(t, _)| **t >= from)
            .map(|(t, x)| (*t, x.as_slice()))
    }

    /// Largest ambient distance from `center` over the whole run.
    pub fn sup_distance_from(&self, center: &[f64]) -> f64 {
        self.states
            .iter()
            .map(|x| self.chart.distance(x, center))
            .fold(0.0, f64::max)
    }

    /// `t,x1..xn[,u1..um,V]`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        if let Some(u) = &self.inputs {
            let m = u.first().map_or(0, Vec::len);
            header.extend((1..=m).map(|i| format!("u{i}")));
        }
        if self.storage.is_some() {
            header.push("V".into());
        }
        writeln!(w, "{}", header.join(","))?;
        for (k, (t, x)) in self.times.iter().zip(&self.states).enumerate() {
            let mut row = vec![format!("{t:.16e}")];
            row.extend(x.iter().map(|v| format!("{v:.16e}")));
            if let Some(u) = &self.inputs {
                row.extend(u[k].iter().map(|v| format!("{v:.16e}")));
            }
            if let Some(s) = &self.storage {
                row.push(format!("{:.16e}", s[k]));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

// Dormand–Prince tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - BETA * 0.75;
const COLLAPSE: f64 = 1e-13;

fn err_norm(err: &[f64], x: &[f64], xn: &[f64], cfg: &IntegratorConfig) -> f64 {
    let s: f64 = err
        .iter()
        .zip(x.iter().zip(xn))
        .map(|(e, (a, b))| {
            let sc = cfg.atol + cfg.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / err.len() as f64).sqrt()
}

fn initial_step<F: SmoothField + ?Sized>(field: &F, x: &[f64], f0: &[f64], cfg: &IntegratorConfig) -> f64 {
    let scale: Vec<f64> = x.iter().map(|v| cfg.atol + cfg.rtol * v.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter().zip(&scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len().max(1) as f64).sqrt()
    };
    let (d0, d1) = (rms(x), rms(f0));
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(cfg.horizon);
    let x1: Vec<f64> = x.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let f1 = field.eval(&x1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    let h = (100.0 * h0).min(h1).min(cfg.max_step).min(cfg.horizon);
    if h.is_finite() && h > 0.0 {
        h
    } else {
        1e-6f64.min(cfg.horizon)
    }
}

/// Integrates `ẋ = F(x)` on `[0, T]`.
pub fn integrate<F: SmoothField + ?Sized>(field: &F, x0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    check_dim("initial state", field.dim(), x0.len())?;
    check_finite("initial state", x0)?;
    let chart = field.chart();
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        inputs: None,
        storage: None,
        termination: Termination::Completed,
        chart,
        accepted_steps: 0,
        rejected_steps: 0,
    };
    let escaped = |x: &[f64]| norm(&chart.to_ambient(x)) > cfg.r_max;
    if escaped(x0) {
        traj.termination = Termination::Escaped;
        return Ok(traj);
    }

    let n = x0.len();
    let t_end = cfg.horizon;
    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    k[0] = field.eval(&x);
    if !k[0].iter().all(|v| v.is_finite()) {
        return Err(Error::NumericalDomain(format!(
            "vector field is not finite at {x:?}"
        )));
    }
    let mut h = initial_step(field, &x, &k[0], cfg);
    let mut err_prev: f64 = 1e-4;
    let mut since_record = 0;
    let mut stage = vec![0.0; n];
    let mut xn = vec![0.0; n];

    loop {
        if t >= t_end {
            break;
        }
        if traj.accepted_steps + traj.rejected_steps >= cfg.max_steps {
            traj.termination = Termination::StepLimit;
            break;
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let mut finite = true;
        for s in 1..7 {
            for i in 0..n {
                let acc: f64 = (0..s).map(|j| A[s][j] * k[j][i]).sum();
                stage[i] = x[i] + h * acc;
            }
            if s == 6 {
                xn.copy_from_slice(&stage);
            }
            k[s] = field.eval(&stage);
            if !k[s].iter().all(|v| v.is_finite()) {
                finite = false;
                break;
            }
        }
        let err = if finite {
            let e: Vec<f64> = (0..n)
                .map(|i| h * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>())
                .collect();
            err_norm(&e, &x, &xn, cfg)
        } else {
            f64::INFINITY
        };

        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            x.copy_from_slice(&xn);
            k[0] = k[6].clone();
            traj.accepted_steps += 1;
            since_record += 1;
            let out = escaped(&x);
            if since_record >= cfg.stride || t >= t_end || out {
                traj.times.push(t);
                traj.states.push(x.clone());
                since_record = 0;
            }
            if out {
                traj.termination = Termination::Escaped;
                return Ok(traj);
            }
            let fac = (err.max(1e-10).powf(ALPHA) / err_prev.powf(BETA) / SAFETY).clamp(0.1, 5.0);
            h = (h / fac).min(cfg.max_step);
            err_prev = err.max(1e-4);
        } else {
            traj.rejected_steps += 1;
            let fac = if err.is_finite() {
                (err.powf(ALPHA) / SAFETY).min(5.0)
            } else {
                5.0
            };
            h /= fac;
        }
        if h < COLLAPSE * t_end {
            if t > *traj.times.last().unwrap() {
                traj.times.push(t);
                traj.states.push(x.clone());
            }
            traj.termination = Termination::StepCollapse;
            return Ok(traj);
        }
    }
    if *traj.times.last().unwrap() < t {
        traj.times.push(t);
        traj.states.push(x);
    }
    Ok(traj)
}

/// Integrates the closed loop `u = −φ(x)` and records `u(t)` and `V(x(t))`.
pub fn integrate_closed_loop<P: PassiveSystem, B: FeedbackLaw>(
    ps: &P,
    fb: &B,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let field = close_loop(ps, fb)?;
    let mut traj = integrate(&field, x0, cfg)?;
    let mut inputs = Vec::with_capacity(traj.len());
    let mut storage = Vec::with_capacity(traj.len());
    for x in &traj.states {
        inputs.push(fb.phi(x).into_iter().map(|p: f64| -p).collect());
        storage.push(ps.storage(x));
    }
    traj.inputs = Some(inputs);
    traj.storage = Some(storage);
    Ok(traj)
}

/// Integrates many initial conditions in parallel; results keep input order.
pub fn integrate_batch<F: SmoothField + ?Sized>(
    field: &F,
    initials: &[Vec<f64>],
    cfg: &IntegratorConfig,
) -> Result<Vec<Trajectory>> {
    initials.par_iter().map(|x0| integrate(field, x0, cfg)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// Number of halvings of λ tried after λ = 1.
    pub levels: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            levels: 7,
            samples: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformBound {
    pub lambda: f64,
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeOutcome {
    Bounded(UniformBound),
    /// Even the smallest ball had an escaping solution.
    Unbounded(Witness),
}

impl ProbeOutcome {
    pub fn bound(&self) -> Option<UniformBound> {
        match self {
            ProbeOutcome::Bounded(b) => Some(*b),
            ProbeOutcome::Unbounded(_) => None,
        }
    }
}

/// Largest `λ` on the ladder `1, ½, ¼, …` for which every sampled solution
/// from `B_λ(x)` stays bounded over the horizon, with `m` the observed sup of
/// the distance to `x`.
///
/// Half the samples lie on the sphere `‖x₀ − x‖ = λ`. When even the smallest
/// ball has an escape, the escaping run is returned as a witness.
pub fn boundedness_probe<F: SmoothField + ?Sized>(
    field: &F,
    x_on_gamma: &[f64],
    cfg: &IntegratorConfig,
    probe: &ProbeConfig,
) -> Result<ProbeOutcome> {
    check_dim("probe centre", field.dim(), x_on_gamma.len())?;
    let chart = field.chart();
    let center = chart.to_ambient(x_on_gamma);
    let n = center.len();
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let mut witness = None;
    for level in 0..=probe.levels {
        let lambda = 0.5f64.powi(level as i32);
        let initials: Vec<Vec<f64>> = (0..probe.samples.max(1))
            .map(|s| {
                let mut d = uniform_ball(n, lambda, &mut rng);
                if s % 2 == 0 {
                    let len = norm(&d);
                    if len > 0.0 {
                        d.iter_mut().for_each(|v| *v *= lambda / len);
                    }
                }
                let y: Vec<f64> = center.iter().zip(&d).map(|(c, v)| c + v).collect();
                chart.from_ambient(&y)
            })
            .collect();
        let runs = integrate_batch(field, &initials, cfg)?;
        match runs.iter().position(|r| r.escaped()) {
            None => {
                let m = runs
                    .iter()
                    .map(|r| r.sup_distance_from(x_on_gamma))
                    .fold(0.0, f64::max);
                return Ok(ProbeOutcome::Bounded(UniformBound { lambda, m }));
            }
            Some(k) => {
                witness = Some(Witness {
                    initial: initials[k].clone(),
                    time: runs[k].final_time(),
                    distance: chart.distance(runs[k].final_state(), x_on_gamma),
                });
            }
        }
    }
    Ok(ProbeOutcome::Unbounded(witness.expect("at least one level is probed")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::Scalar;
    use crate::domain::{LinearField, ZeroField};
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    struct Cubic;
    impl SmoothField for Cubic {
        fn dim(&self) -> usize {
            1
        }
        fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
            vec![-x[0].powi(3)]
        }
    }

    struct Square;
    impl SmoothField for Square {
        fn dim(&self) -> usize {
            1
        }
        fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
            vec![x[0].square()]
        }
    }

    struct Nan;
    impl SmoothField for Nan {
        fn dim(&self) -> usize {
            1
        }
        fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
            vec![(x[0].clone() - 2.0).sqrt()]
        }
    }

    #[test]
    fn zero_field_is_constant() {
        let tr = integrate(&ZeroField { n: 3 }, &[1.0, -2.0, 0.5], &IntegratorConfig::default()).unwrap();
        assert!(tr.completed());
        assert_eq!(tr.final_state(), &[1.0, -2.0, 0.5]);
        assert_eq!(tr.final_time(), 100.0);
    }

    #[test]
    fn cubic_decay_matches_closed_form() {
        let cfg = IntegratorConfig::default().with_horizon(4.0);
        let tr = integrate(&Cubic, &[1.0], &cfg).unwrap();
        assert_relative_eq!(tr.final_state()[0], 1.0 / 3.0, epsilon = 1e-7);
    }

    #[test]
    fn rotation_conserves_radius() {
        let f = LinearField::new(dmatrix![0.0, -1.0; 1.0, 0.0]).unwrap();
        let tr = integrate(&f, &[1.0, 0.0], &IntegratorConfig::default()).unwrap();
        for x in &tr.states {
            assert!((x[0].hypot(x[1]) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn finite_escape_is_flagged_not_an_error() {
        let tr = integrate(&Square, &[1.0], &IntegratorConfig::default().with_horizon(2.0)).unwrap();
        assert!(tr.escaped());
        assert!(tr.final_time() < 1.0 + 1e-3);
        let tr = integrate(&Square, &[2e6], &IntegratorConfig::default()).unwrap();
        assert_eq!(tr.termination, Termination::Escaped);
        assert_eq!(tr.len(), 1);
    }

    #[test]
    fn nan_field_is_a_domain_error() {
        assert!(matches!(
            integrate(&Nan, &[1.0], &IntegratorConfig::default()),
            Err(Error::NumericalDomain(_))
        ));
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = IntegratorConfig {
            rtol: 0.0,
            ..Default::default()
        };
        assert!(matches!(integrate(&Cubic, &[1.0], &cfg), Err(Error::Input(_))));
        assert!(integrate(&Cubic, &[f64::NAN], &IntegratorConfig::default()).is_err());
    }

    #[test]
    fn csv_has_header_and_full_precision() {
        let tr = integrate(&Cubic, &[1.0], &IntegratorConfig::default().with_horizon(0.5)).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x1"));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[1], "1.0000000000000000e0");
        assert_eq!(text.lines().count(), tr.len() + 1);
    }

    #[test]
    fn probe_examples() {
        let cfg = IntegratorConfig::default().with_horizon(20.0);
        let probe = ProbeConfig::default();
        let b = boundedness_probe(&ZeroField { n: 2 }, &[0.0, 0.0], &cfg, &probe).unwrap().bound().unwrap();
        assert_eq!(b.lambda, 1.0);
        assert_relative_eq!(b.m, 1.0, epsilon = 1e-12);
        let f = LinearField::new(dmatrix![-1.0, 0.0; 0.0, -2.0]).unwrap();
        let b = boundedness_probe(&f, &[0.0, 0.0], &cfg, &probe).unwrap().bound().unwrap();
        assert_eq!(b.lambda, 1.0);
        assert!(b.m <= 1.0 + 1e-9);
        let cfg = IntegratorConfig::default().with_horizon(500.0);
        match boundedness_probe(&Square, &[0.0], &cfg, &probe).unwrap() {
            ProbeOutcome::Unbounded(w) => assert!(w.initial[0] > 0.0 && w.distance > 1e5),
            other => panic!("expected escape, got {other:?}"),
        }
    }
}
