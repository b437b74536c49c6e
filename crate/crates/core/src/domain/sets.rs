use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};

use super::system::{norm, sub, Chart};
use crate::error::{check_dim, Error, Result};

pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-7;

/// A closed subset of the state space, known through its distance function,
/// a nearest-point map and a sampler.
///
/// All methods take state coordinates; the set's [`Chart`] says how those map
/// to ambient Euclidean coordinates, in which distances are measured.
pub trait ClosedSet: Send + Sync + Debug {
    fn dim(&self) -> usize;

    fn chart(&self) -> Chart {
        Chart::Identity
    }

    /// `‖x‖_S`.
    fn dist(&self, x: &[f64]) -> f64;

    /// A nearest point of the set.
    fn project(&self, x: &[f64]) -> Vec<f64>;

    /// A point of the set; unbounded sets sample a bounded window.
    fn sample_on(&self, rng: &mut dyn RngCore) -> Vec<f64>;

    fn is_bounded(&self) -> bool;

    fn membership_tol(&self) -> f64 {
        DEFAULT_MEMBERSHIP_TOL
    }

    /// A point within `radius` of the set.
    fn sample_near(&self, radius: f64, rng: &mut dyn RngCore) -> Vec<f64> {
        let p = self.chart().to_ambient(&self.sample_on(rng));
        let d = uniform_ball(p.len(), radius, rng);
        let y: Vec<f64> = p.iter().zip(&d).map(|(a, b)| a + b).collect();
        self.chart().from_ambient(&y)
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.dist(x) <= self.membership_tol()
    }

    fn describe(&self) -> String;
}

/// Distance from `x` to `set`, with a dimension check.
pub fn distance(x: &[f64], set: &dyn ClosedSet) -> Result<f64> {
    check_dim("point", set.dim(), x.len())?;
    Ok(set.dist(x))
}

/// Finite-sample version of `d(P, S) = sup_{x∈P} ‖x‖_S`.
pub fn max_distance(points: &[Vec<f64>], set: &dyn ClosedSet) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Input("max_distance needs a nonempty point set".into()));
    }
    points
        .iter()
        .try_fold(0.0f64, |m, p| Ok(m.max(distance(p, set)?)))
}

/// A single point.
#[derive(Debug, Clone)]
pub struct PointSet {
    pub point: Vec<f64>,
    pub chart: Chart,
}

impl PointSet {
    pub fn new(point: Vec<f64>) -> Self {
        PointSet {
            point,
            chart: Chart::Identity,
        }
    }

    pub fn with_chart(point: Vec<f64>, chart: Chart) -> Self {
        PointSet { point, chart }
    }

    pub fn origin(n: usize) -> Self {
        PointSet::new(vec![0.0; n])
    }
}

impl ClosedSet for PointSet {
    fn dim(&self) -> usize {
        self.point.len()
    }
    fn chart(&self) -> Chart {
        self.chart
    }
    fn dist(&self, x: &[f64]) -> f64 {
        self.chart.distance(x, &self.point)
    }
    fn project(&self, _x: &[f64]) -> Vec<f64> {
        self.point.clone()
    }
    fn sample_on(&self, _rng: &mut dyn RngCore) -> Vec<f64> {
        self.point.clone()
    }
    fn is_bounded(&self) -> bool {
        true
    }
    fn describe(&self) -> String {
        format!("point {:?}", self.point)
    }
}

/// `{x : x_i = 0 for i in zero}`; the remaining coordinates are free.
///
/// Free coordinates are sampled in `[-extent, extent]` (the radius in a
/// polar chart is sampled in `(0, extent]` and the angle over a full turn).
/// Constrained coordinates must not belong to a polar pair.
#[derive(Debug, Clone)]
pub struct CoordinateSubspace {
    pub n: usize,
    pub zero: Vec<usize>,
    pub extent: f64,
    pub chart: Chart,
}

impl CoordinateSubspace {
    pub fn new(n: usize, zero: Vec<usize>, extent: f64) -> Result<Self> {
        Self::with_chart(n, zero, extent, Chart::Identity)
    }

    pub fn with_chart(n: usize, zero: Vec<usize>, extent: f64, chart: Chart) -> Result<Self> {
        if zero.iter().any(|&i| i >= n) {
            return Err(Error::Input("subspace coordinate out of range".into()));
        }
        if let Chart::Polar { r, theta } = chart {
            if zero.contains(&r) || zero.contains(&theta) {
                return Err(Error::Input(
                    "polar coordinates cannot be constrained by a coordinate subspace".into(),
                ));
            }
        }
        Ok(CoordinateSubspace {
            n,
            zero,
            extent,
            chart,
        })
    }
}

impl ClosedSet for CoordinateSubspace {
    fn dim(&self) -> usize {
        self.n
    }
    fn chart(&self) -> Chart {
        self.chart
    }
    fn dist(&self, x: &[f64]) -> f64 {
        self.zero.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt()
    }
    fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut p = x.to_vec();
        for &i in &self.zero {
            p[i] = 0.0;
        }
        p
    }
    fn sample_on(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                if self.zero.contains(&i) {
                    return 0.0;
                }
                match self.chart {
                    Chart::Polar { r, .. } if r == i => rng.gen_range(1e-3..=self.extent),
                    Chart::Polar { theta, .. } if theta == i => rng.gen_range(-PI..PI),
                    _ => rng.gen_range(-self.extent..=self.extent),
                }
            })
            .collect()
    }
    fn is_bounded(&self) -> bool {
        self.zero.len() == self.n
    }
    fn describe(&self) -> String {
        let names: Vec<String> = self.zero.iter().map(|i| format!("x{}=0", i + 1)).collect();
        format!("{{{}}}", names.join(", "))
    }
}

/// The whole state space (sampled on a box of half-width `extent`).
#[derive(Debug, Clone)]
pub struct WholeSpace {
    pub n: usize,
    pub extent: f64,
    pub chart: Chart,
}

impl WholeSpace {
    pub fn new(n: usize, extent: f64) -> Self {
        WholeSpace {
            n,
            extent,
            chart: Chart::Identity,
        }
    }
}

impl ClosedSet for WholeSpace {
    fn dim(&self) -> usize {
        self.n
    }
    fn chart(&self) -> Chart {
        self.chart
    }
    fn dist(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn project(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
    fn sample_on(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        CoordinateSubspace {
            n: self.n,
            zero: vec![],
            extent: self.extent,
            chart: self.chart,
        }
        .sample_on(rng)
    }
    fn is_bounded(&self) -> bool {
        false
    }
    fn describe(&self) -> String {
        "whole space".into()
    }
}

/// `{(x, y) : x ∈ inner, y = 0}` with `y` of dimension `extra`.
#[derive(Debug, Clone)]
pub struct LiftedSet {
    pub inner: Arc<dyn ClosedSet>,
    pub extra: usize,
}

impl ClosedSet for LiftedSet {
    fn dim(&self) -> usize {
        self.inner.dim() + self.extra
    }
    fn dist(&self, x: &[f64]) -> f64 {
        let n1 = self.inner.dim();
        let dx = self.inner.dist(&x[..n1]);
        let dy = norm(&x[n1..]);
        dx.hypot(dy)
    }
    fn project(&self, x: &[f64]) -> Vec<f64> {
        let n1 = self.inner.dim();
        let mut p = self.inner.project(&x[..n1]);
        p.extend(std::iter::repeat_n(0.0, self.extra));
        p
    }
    fn sample_on(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut p = self.inner.sample_on(rng);
        p.extend(std::iter::repeat_n(0.0, self.extra));
        p
    }
    fn is_bounded(&self) -> bool {
        self.inner.is_bounded()
    }
    fn describe(&self) -> String {
        format!("{} x {{0 in R^{}}}", self.inner.describe(), self.extra)
    }
}

/// Standard normal draw (Box–Muller).
pub fn standard_normal(rng: &mut dyn RngCore) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Uniform point in the open Euclidean ball of given radius about 0.
pub fn uniform_ball(dim: usize, radius: f64, rng: &mut dyn RngCore) -> Vec<f64> {
    let g: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
    let n = norm(&g).max(f64::MIN_POSITIVE);
    let u: f64 = rng.gen();
    let s = radius * u.powf(1.0 / dim as f64) / n;
    g.into_iter().map(|v| v * s).collect()
}

/// Uniform point in an axis-aligned box.
pub fn sample_box(bounds: &[(f64, f64)], rng: &mut dyn RngCore) -> Vec<f64> {
    bounds
        .iter()
        .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..hi) } else { lo })
        .collect()
}

/// `count` uniform points of a box from a fixed seed.
pub fn seeded_box_samples(bounds: &[(f64, f64)], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| sample_box(bounds, &mut rng)).collect()
}

const MAX_TRIES: usize = 200;

/// A point within `radius` of `gamma`, lying on `relative` when given.
///
/// Points are drawn near `gamma`, projected onto `relative`, and kept when
/// still within `radius` of `gamma`.
pub fn sample_near_set(
    gamma: &dyn ClosedSet,
    relative: Option<&dyn ClosedSet>,
    radius: f64,
    rng: &mut dyn RngCore,
) -> Option<Vec<f64>> {
    for _ in 0..MAX_TRIES {
        let mut y = gamma.sample_near(radius, rng);
        if let Some(rel) = relative {
            y = rel.project(&y);
            if !rel.contains(&y) {
                continue;
            }
        }
        if gamma.dist(&y) < radius {
            return Some(y);
        }
    }
    None
}

/// A point of `B_λ(center)` at distance at most `delta` from `gamma`,
/// lying on `relative` when given.
///
/// Draws `z ∈ B_λ(center)`, projects it to `relative`, and moves it along the
/// segment towards its nearest point `p ∈ gamma` so that the final distance
/// to `gamma` is uniform in `[0, min(delta, ‖z − p‖)]`.
pub fn sample_ball_near_set(
    gamma: &dyn ClosedSet,
    relative: Option<&dyn ClosedSet>,
    center: &[f64],
    lambda: f64,
    delta: f64,
    rng: &mut dyn RngCore,
) -> Option<Vec<f64>> {
    let chart = gamma.chart();
    let c = chart.to_ambient(center);
    for _ in 0..MAX_TRIES {
        let d = uniform_ball(c.len(), lambda, rng);
        let z_amb: Vec<f64> = c.iter().zip(&d).map(|(a, b)| a + b).collect();
        let mut z = chart.from_ambient(&z_amb);
        if let Some(rel) = relative {
            z = rel.project(&z);
        }
        let z_amb = chart.to_ambient(&z);
        let p_amb = chart.to_ambient(&gamma.project(&z));
        let off = sub(&z_amb, &p_amb);
        let len = norm(&off);
        let y_amb = if len > 0.0 {
            let target = delta.min(len) * rng.gen::<f64>();
            p_amb
                .iter()
                .zip(&off)
                .map(|(p, o)| p + o * target / len)
                .collect()
        } else {
            p_amb
        };
        let y = chart.from_ambient(&y_amb);
        if chart.distance(&y, center) < lambda {
            return Some(y);
        }
    }
    None
}
