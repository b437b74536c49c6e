//! Finite-cloud estimates of positive limit sets `L⁺(x₀)` and prolongational
//! limit sets `J⁺(x₀, U)`, and the uniform-attractor test built on them.
//!
//! `J⁺(x₀, U)` collects limits of `φ(t_n, x_n)` with `x_n → x₀` in `U` and
//! `t_n → ∞`. The estimate perturbs `x₀` on a ladder `δ_k = δ₀·2^{−k}` and
//! reads level `k` only after time `τ_k = τ₀·δ₀/δ_k`, so that times grow as
//! the perturbations shrink. Points seen by at least two ladder levels
//! (within the persistence radius) are kept, together with the tail of the
//! unperturbed trajectory.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{sample_near_set, uniform_ball, Chart, ClosedSet, SmoothField, Verdict, Witness};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::integrate::{boundedness_probe, integrate, IntegratorConfig, ProbeConfig, Trajectory};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LimitConfig {
    /// Horizon `T` and tolerances of the unperturbed run.
    pub integrator: IntegratorConfig,
    /// Fraction of `T` discarded before the tail.
    pub burn_in: f64,
    /// Grid resolution of the occupancy summary.
    pub rho: f64,
    pub delta0: f64,
    /// Ladder levels `k = 0..=levels`.
    pub levels: usize,
    pub ics_per_level: usize,
    /// `τ₀`: level `k` is read from time `τ₀·2^k` on.
    pub prolongation_time: f64,
    pub persistence_radius: f64,
    pub ladder_max_step: f64,
    /// Clouds are thinned evenly to at most this many points.
    pub max_points: usize,
    /// Distance to `Γ` accepted by the uniform-attractor test.
    pub attract_band: f64,
    /// Base points used by the uniform-attractor test.
    pub base_points: usize,
    pub seed: u64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig {
            integrator: IntegratorConfig::default().with_horizon(200.0),
            burn_in: 0.8,
            rho: 1e-2,
            delta0: 0.1,
            levels: 6,
            ics_per_level: 8,
            prolongation_time: 5.0,
            persistence_radius: 5e-2,
            ladder_max_step: 2.5e-2,
            max_points: 4000,
            attract_band: 5e-2,
            base_points: 6,
            seed: 0,
        }
    }
}

impl LimitConfig {
    pub fn ladder(&self) -> Vec<f64> {
        (0..=self.levels)
            .map(|k| self.delta0 * 0.5f64.powi(k as i32))
            .collect()
    }

    fn level_window(&self, k: usize) -> (f64, f64) {
        let from = self.prolongation_time * 2f64.powi(k as i32);
        (from, self.integrator.horizon.max(4.0 * from))
    }
}

/// Where a cloud point came from: `initials[initial]` integrated for `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Origin {
    pub initial: usize,
    pub time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitSetEstimate {
    pub x0: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub origins: Vec<Origin>,
    /// Initial conditions referenced by `origins`; index 0 is `x0`.
    pub initials: Vec<Vec<f64>>,
    pub cell_size: f64,
    /// Occupied grid cells at resolution `cell_size`.
    pub cells: usize,
    pub horizon: f64,
    pub burn_in: f64,
    /// Perturbation radii, empty for `L⁺` estimates.
    pub ladder: Vec<f64>,
    /// Runs that escaped or collapsed.
    pub escaped_runs: usize,
    pub total_runs: usize,
    pub chart: Chart,
    pub note: Option<String>,
}

impl LimitSetEstimate {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Every run escaped, so there is nothing to estimate.
    pub fn escaped(&self) -> bool {
        self.total_runs > 0 && self.escaped_runs == self.total_runs
    }

    /// Index and value of the largest distance from a cloud point to `set`.
    pub fn farthest_from(&self, set: &dyn ClosedSet) -> Option<(usize, f64)> {
        self.points
            .iter()
            .map(|p| set.dist(p))
            .enumerate()
            .fold(None, |best, (k, d)| match best {
                Some((_, b)) if b >= d => best,
                _ => Some((k, d)),
            })
    }

    /// A replayable witness for cloud point `k` measured against `set`.
    pub fn witness(&self, k: usize, set: &dyn ClosedSet) -> Witness {
        let o = self.origins[k];
        Witness {
            initial: self.initials[o.initial].clone(),
            time: o.time,
            distance: set.dist(&self.points[k]),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.x0.len();
        let header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for p in &self.points {
            let row: Vec<String> = p.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

type Key = Vec<i64>;

fn cell(chart: Chart, x: &[f64], size: f64) -> Key {
    chart
        .to_ambient(x)
        .iter()
        .map(|v| (v / size).floor() as i64)
        .collect()
}

fn neighbours(key: &Key) -> Vec<Key> {
    let mut out = vec![key.clone()];
    for i in 0..key.len() {
        let mut next = Vec::with_capacity(out.len() * 3);
        for k in &out {
            for d in [-1, 1] {
                let mut m = k.clone();
                m[i] += d;
                next.push(m);
            }
        }
        out.extend(next);
    }
    out
}

/// Tail samples of a run, one per `rho`-cell, keyed by cell.
fn tail_cells(traj: &Trajectory, from: f64, rho: f64, initial: usize) -> HashMap<Key, (Vec<f64>, Origin)> {
    let mut cells = HashMap::new();
    for (t, x) in traj.since(from) {
        cells
            .entry(cell(traj.chart, x, rho))
            .or_insert_with(|| (x.to_vec(), Origin { initial, time: t }));
    }
    cells
}

fn thin<T: Clone>(items: Vec<T>, max: usize) -> Vec<T> {
    if items.len() <= max || max == 0 {
        return items;
    }
    let step = items.len() as f64 / max as f64;
    (0..max).map(|k| items[(k as f64 * step) as usize].clone()).collect()
}

fn check_x0<F: SmoothField + ?Sized>(field: &F, x0: &[f64]) -> Result<()> {
    check_dim("initial state", field.dim(), x0.len())?;
    check_finite("initial state", x0)
}

/// `L⁺(x₀)`: samples of `φ(t, x₀)` for `t ∈ [β·T, T]`.
pub fn omega_limit_estimate<F: SmoothField + ?Sized>(
    field: &F,
    x0: &[f64],
    cfg: &LimitConfig,
) -> Result<LimitSetEstimate> {
    check_x0(field, x0)?;
    let horizon = cfg.integrator.horizon;
    let traj = integrate(field, x0, &cfg.integrator)?;
    let escaped = !traj.completed();
    let (points, origins): (Vec<Vec<f64>>, Vec<Origin>) = if escaped {
        (vec![], vec![])
    } else {
        traj.since(cfg.burn_in * horizon)
            .map(|(t, x)| (x.to_vec(), Origin { initial: 0, time: t }))
            .unzip()
    };
    let cells: HashSet<Key> = points.iter().map(|p| cell(traj.chart, p, cfg.rho)).collect();
    Ok(LimitSetEstimate {
        x0: x0.to_vec(),
        points: thin(points, cfg.max_points),
        origins: thin(origins, cfg.max_points),
        initials: vec![x0.to_vec()],
        cell_size: cfg.rho,
        cells: cells.len(),
        horizon,
        burn_in: cfg.burn_in,
        ladder: vec![],
        escaped_runs: usize::from(escaped),
        total_runs: 1,
        chart: traj.chart,
        note: escaped.then(|| format!("trajectory terminated early ({:?})", traj.termination)),
    })
}

/// `J⁺(x₀, U)`, with `U` the whole space when `relative` is `None`.
pub fn prolongational_limit_estimate<F: SmoothField + ?Sized>(
    field: &F,
    x0: &[f64],
    relative: Option<&dyn ClosedSet>,
    cfg: &LimitConfig,
) -> Result<LimitSetEstimate> {
    check_x0(field, x0)?;
    if let Some(u) = relative {
        check_dim("relative set", u.dim(), x0.len())?;
        if u.dist(x0) > u.membership_tol() {
            return Err(Error::Input(format!(
                "base point is not in the closure of {}",
                u.describe()
            )));
        }
    }
    let chart = field.chart();
    let amb0 = chart.to_ambient(x0);
    let ladder = cfg.ladder();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut initials = vec![x0.to_vec()];
    let mut level_of = vec![usize::MAX];
    let mut empty_levels = vec![];
    for (k, &delta) in ladder.iter().enumerate() {
        let mut found = 0;
        for _ in 0..cfg.ics_per_level * 50 {
            if found == cfg.ics_per_level {
                break;
            }
            let d = uniform_ball(amb0.len(), delta, &mut rng);
            let y: Vec<f64> = amb0.iter().zip(&d).map(|(a, b)| a + b).collect();
            let mut z = chart.from_ambient(&y);
            if let Some(u) = relative {
                z = u.project(&z);
            }
            if chart.distance(&z, x0) < delta {
                initials.push(z);
                level_of.push(k);
                found += 1;
            }
        }
        if found == 0 {
            empty_levels.push(k);
        }
    }

    let ladder_cfg = IntegratorConfig {
        max_step: cfg.ladder_max_step.min(cfg.integrator.max_step),
        ..cfg.integrator.clone()
    };
    let runs: Vec<(bool, HashMap<Key, (Vec<f64>, Origin)>)> = initials
        .par_iter()
        .enumerate()
        .map(|(i, z)| {
            let level = level_of[i];
            let (run_cfg, from) = if level == usize::MAX {
                (ladder_cfg.clone(), cfg.burn_in * cfg.integrator.horizon)
            } else {
                let (from, horizon) = cfg.level_window(level);
                (ladder_cfg.with_horizon(horizon), from)
            };
            let traj = integrate(field, z, &run_cfg)?;
            if !traj.completed() {
                return Ok((true, HashMap::new()));
            }
            Ok((false, tail_cells(&traj, from, cfg.rho, i)))
        })
        .collect::<Result<_>>()?;

    // Which ladder levels visit each persistence cell.
    let eta = cfg.persistence_radius.max(cfg.rho);
    let mut masks: HashMap<Key, u64> = HashMap::new();
    for (i, (_, cells)) in runs.iter().enumerate() {
        let level = level_of[i];
        if level == usize::MAX {
            continue;
        }
        for (x, _) in cells.values() {
            *masks.entry(cell(chart, x, eta)).or_default() |= 1u64 << level.min(63);
        }
    }
    let mut joined: HashMap<Key, u64> = HashMap::new();
    let mut persists = |key: &Key, level: usize| -> bool {
        let mask = *joined.entry(key.clone()).or_insert_with(|| {
            neighbours(key)
                .iter()
                .filter_map(|k| masks.get(k))
                .fold(0, |a, m| a | m)
        });
        mask & !(1u64 << level.min(63)) != 0
    };

    let mut seen: HashSet<Key> = HashSet::new();
    let mut kept: Vec<(Vec<f64>, Origin)> = vec![];
    for (i, (_, cells)) in runs.iter().enumerate() {
        let level = level_of[i];
        let mut entries: Vec<&(Vec<f64>, Origin)> = cells.values().collect();
        entries.sort_by(|a, b| a.1.time.total_cmp(&b.1.time));
        for (x, o) in entries {
            let keep = level == usize::MAX || persists(&cell(chart, x, eta), level);
            if keep && seen.insert(cell(chart, x, cfg.rho)) {
                kept.push((x.clone(), *o));
            }
        }
    }
    let escaped_runs = runs.iter().filter(|(e, _)| *e).count();
    let mut notes = vec![];
    if empty_levels.contains(&cfg.levels) {
        notes.push("no initial condition found in U at the finest ladder level".to_string());
    }
    if escaped_runs > 0 {
        notes.push(format!("{escaped_runs} of {} runs escaped", runs.len()));
    }
    let cells = seen.len();
    let (points, origins): (Vec<_>, Vec<_>) = thin(kept, cfg.max_points).into_iter().unzip();
    Ok(LimitSetEstimate {
        x0: x0.to_vec(),
        points,
        origins,
        initials,
        cell_size: cfg.rho,
        cells,
        horizon: cfg.integrator.horizon,
        burn_in: cfg.burn_in,
        ladder,
        escaped_runs,
        total_runs: runs.len(),
        chart,
        note: (!notes.is_empty()).then(|| notes.join("; ")),
    })
}

/// Symmetric Hausdorff distance between two clouds in ambient coordinates.
pub fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>], chart: Chart) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 0.0 } else { f64::INFINITY };
    }
    let amb = |c: &[Vec<f64>]| c.iter().map(|p| chart.to_ambient(p)).collect::<Vec<_>>();
    let (a, b) = (amb(a), amb(b));
    let one_way = |from: &[Vec<f64>], to: &[Vec<f64>]| {
        from.par_iter()
            .map(|p| {
                to.iter()
                    .map(|q| p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .reduce(|| 0.0, f64::max)
    };
    one_way(&a, &b).max(one_way(&b, &a))
}

/// Distance from `x` to the nearest cloud point, in ambient coordinates.
pub fn distance_to_cloud(x: &[f64], cloud: &[Vec<f64>], chart: Chart) -> f64 {
    cloud
        .iter()
        .map(|p| chart.distance(x, p))
        .fold(f64::INFINITY, f64::min)
}

/// `J⁺(N(Γ), U) ⊂ Γ`, tested from base points on and near `Γ`.
///
/// Local uniform boundedness near `Γ` is probed first; without it the
/// verdict is inconclusive.
pub fn uniform_attractor_test<F: SmoothField + ?Sized>(
    field: &F,
    gamma: &dyn ClosedSet,
    relative: Option<&dyn ClosedSet>,
    radius: f64,
    cfg: &LimitConfig,
) -> Result<Verdict> {
    let property = "uniform_attractor";
    check_dim("goal set", field.dim(), gamma.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let on_gamma = |rng: &mut ChaCha8Rng| {
        let p = gamma.sample_on(rng);
        match relative {
            Some(u) => u.project(&p),
            None => p,
        }
    };
    let probe = ProbeConfig {
        seed: cfg.seed,
        ..Default::default()
    };
    for _ in 0..2 {
        let p = on_gamma(&mut rng);
        if boundedness_probe(field, &p, &cfg.integrator, &probe)?.bound().is_none() {
            return Ok(Verdict::inconclusive(
                property,
                format!("not locally uniformly bounded near {:?}", p),
            ));
        }
    }
    let mut bases = vec![];
    for i in 0..cfg.base_points.max(1) {
        if i % 2 == 0 {
            bases.push(on_gamma(&mut rng));
        } else if let Some(x) = sample_near_set(gamma, relative, radius, &mut rng) {
            bases.push(x);
        }
    }
    let mut worst: Option<(Witness, f64)> = None;
    let mut notes = vec![];
    for (i, b) in bases.iter().enumerate() {
        let est = prolongational_limit_estimate(
            field,
            b,
            relative,
            &LimitConfig {
                seed: cfg.seed.wrapping_add(1 + i as u64),
                ..cfg.clone()
            },
        )?;
        if let Some(n) = &est.note {
            notes.push(n.clone());
        }
        if let Some((k, d)) = est.farthest_from(gamma) {
            if worst.as_ref().is_none_or(|(_, w)| d > *w) {
                worst = Some((est.witness(k, gamma), d));
            }
        }
    }
    let max_dist = worst.as_ref().map_or(0.0, |(_, d)| *d);
    let mut verdict = match worst {
        Some((w, d)) if d > cfg.attract_band => Verdict::fails(property, w),
        None => Verdict::inconclusive(property, "every prolongational estimate was empty"),
        _ => Verdict::holds(property),
    };
    for n in notes {
        verdict = verdict.note(n);
    }
    Ok(verdict
        .param("radius", radius)
        .param("band", cfg.attract_band)
        .param("base_points", bases.len())
        .param("max_distance", max_dist)
        .param("ladder", cfg.ladder())
        .param("horizon", cfg.integrator.horizon)
        .param("empirical", true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CoordinateSubspace, Drift, LinearField, PointSet};
    use crate::scenarios::Model;
    use nalgebra::dmatrix;

    fn quick() -> LimitConfig {
        LimitConfig {
            integrator: IntegratorConfig::default().with_horizon(50.0),
            levels: 3,
            ics_per_level: 4,
            ..Default::default()
        }
    }

    #[test]
    fn stable_equilibrium_estimates_collapse_to_it() {
        let f = LinearField::new(dmatrix![-1.0, 0.5; -0.5, -1.0]).unwrap();
        let origin = PointSet::origin(2);
        let om = omega_limit_estimate(&f, &[0.05, -0.02], &quick()).unwrap();
        assert!(!om.is_empty());
        assert!(om.farthest_from(&origin).unwrap().1 < 1e-4);
        let j = prolongational_limit_estimate(&f, &[0.0, 0.0], None, &quick()).unwrap();
        assert!(j.farthest_from(&origin).unwrap().1 < 1e-3);
        assert_eq!(j.ladder.len(), 4);
    }

    #[test]
    fn base_point_must_lie_in_relative_set() {
        let f = LinearField::new(dmatrix![-1.0, 0.0; 0.0, -1.0]).unwrap();
        let u = CoordinateSubspace::new(2, vec![1], 5.0).unwrap();
        assert!(matches!(
            prolongational_limit_estimate(&f, &[0.0, 1.0], Some(&u), &quick()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn escaping_run_gives_empty_flagged_estimate() {
        let f = LinearField::new(dmatrix![1.0]).unwrap();
        let om = omega_limit_estimate(&f, &[1.0], &quick()).unwrap();
        assert!(om.is_empty() && om.escaped());
    }

    #[test]
    fn example1_is_not_a_uniform_attractor_relative_to_o() {
        let m = Model::Example1;
        let gamma = CoordinateSubspace::new(3, vec![1, 2], 1.5).unwrap();
        let o = CoordinateSubspace::new(3, vec![2], 1.5).unwrap();
        let v = uniform_attractor_test(&Drift(&m), &gamma, Some(&o), 0.1, &LimitConfig::default()).unwrap();
        assert!(v.outcome.fails(), "{v:?}");
        let w = v.witness.unwrap();
        assert!(w.distance > 0.1);
        let replay = integrate(&Drift(&m), &w.initial, &IntegratorConfig::default().with_horizon(w.time)).unwrap();
        assert!((gamma.dist(replay.final_state()) - w.distance).abs() < 0.01 * w.distance);
    }

    #[test]
    fn contracting_system_is_a_uniform_attractor() {
        let f = LinearField::new(dmatrix![-1.0, 0.0; 0.0, -2.0]).unwrap();
        let v = uniform_attractor_test(&f, &PointSet::origin(2), None, 0.5, &quick()).unwrap();
        assert!(v.outcome.holds(), "{v:?}");
    }

    #[test]
    fn hausdorff_of_shifted_clouds() {
        let a = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let b = vec![vec![0.0, 0.5], vec![1.0, 0.0]];
        assert!((hausdorff(&a, &b, Chart::Identity) - 0.5).abs() < 1e-15);
        assert_eq!(hausdorff(&a, &[], Chart::Identity), f64::INFINITY);
    }

    #[test]
    fn cloud_csv_one_point_per_row() {
        let f = LinearField::new(dmatrix![-1.0]).unwrap();
        let om = omega_limit_estimate(&f, &[1.0], &quick()).unwrap();
        let mut buf = vec![];
        om.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), om.points.len() + 1);
    }
}
