//! Exact derivatives of the smooth maps in [`crate::domain`]: gradients,
//! Jacobians, Taylor jets along flows, Lie derivatives, iterated Lie
//! brackets, and the residual vectors whose zero sets define `S` and `S′`.
//!
//! Iterated Lie derivatives `L_f^m q(x)` are read off the Taylor expansion of
//! `t ↦ q(φ(t, x))`: if that expansion is `Σ c_k t^k` then
//! `L_f^m q(x) = m!·c_m`. The expansion of the flow itself is built order by
//! order from `ẋ = f(x)` evaluated on truncated series.
//!
//! Brackets `ad_f^k g` use nested dual numbers, one nesting level per
//! bracket. Nesting is compiled for depths up to [`MAX_NESTING`]; deeper
//! brackets fall back to central differences and are flagged approximate.

mod scalar;

pub use scalar::{Dual, Scalar, Taylor};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::{max_abs, ControlAffine, Drift, InputField, PassiveSystem, SmoothField, SmoothScalar, Storage};
use crate::error::{check_dim, check_finite, Error, Result};

/// Deepest bracket evaluated by nested forward mode.
pub const MAX_NESTING: usize = 4;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CalculusConfig {
    /// Highest Taylor order propagated along a flow.
    pub jet_cap: usize,
    /// Bracket depth evaluated exactly (at most [`MAX_NESTING`]).
    pub nesting_cap: usize,
    /// Central-difference step for brackets beyond `nesting_cap`.
    pub fd_step: f64,
    /// Deepest bracket accepted at all.
    pub fd_depth_limit: usize,
    /// `S`/`S′` membership threshold on the max residual magnitude.
    pub residual_band: f64,
}

impl Default for CalculusConfig {
    fn default() -> Self {
        CalculusConfig {
            jet_cap: 12,
            nesting_cap: MAX_NESTING,
            fd_step: 1e-5,
            fd_depth_limit: 8,
            residual_band: 1e-6,
        }
    }
}

fn lift<S: Scalar>(x: &[S], v: &[S]) -> Vec<Dual<S>> {
    x.iter()
        .zip(v)
        .map(|(a, b)| Dual::new(a.clone(), b.clone()))
        .collect()
}

fn tangent<S: Scalar>(v: Vec<Dual<S>>) -> Vec<S> {
    v.into_iter().map(|d| d.eps).collect()
}

/// `DF(x)·v`, generic so it can sit inside other derivative computations.
pub fn directional<S: Scalar, F: SmoothField>(field: &F, x: &[S], v: &[S]) -> Vec<S> {
    tangent(field.eval(&lift(x, v)))
}

/// `dq(x)·v`.
pub fn directional_scalar<S: Scalar, Q: SmoothScalar>(q: &Q, x: &[S], v: &[S]) -> S {
    q.eval(&lift(x, v)).eps
}

pub fn gradient<Q: SmoothScalar>(q: &Q, x: &[f64]) -> Result<Vec<f64>> {
    check_dim("gradient point", q.dim(), x.len())?;
    let n = x.len();
    let grad: Vec<f64> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            directional_scalar(q, x, &e)
        })
        .collect();
    check_finite("gradient", &grad)?;
    Ok(grad)
}

pub fn jacobian<F: SmoothField>(field: &F, x: &[f64]) -> Result<DMatrix<f64>> {
    check_dim("jacobian point", field.dim(), x.len())?;
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = directional(field, x, &e);
        check_finite("jacobian", &col)?;
        for i in 0..n {
            jac[(i, j)] = col[i];
        }
    }
    Ok(jac)
}

/// `L_f q(x) = dq(x)·f(x)`.
pub fn lie_scalar<F: SmoothField, Q: SmoothScalar>(field: &F, q: &Q, x: &[f64]) -> Result<f64> {
    check_dim("lie derivative point", field.dim(), x.len())?;
    let fx = field.eval(x);
    check_finite("vector field", &fx)?;
    let v = directional_scalar(q, x, &fx);
    check_finite("lie derivative", &[v])?;
    Ok(v)
}

/// The scalar `x ↦ L_F q(x)` as a smooth map in its own right.
pub struct LieScalar<F, Q> {
    pub field: F,
    pub q: Q,
}

impl<F: SmoothField, Q: SmoothScalar> SmoothScalar for LieScalar<F, Q> {
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        let fx = self.field.eval(x);
        directional_scalar(&self.q, x, &fx)
    }
}

/// Taylor coefficients of the flow `t ↦ φ(t, x)` up to `order`.
pub fn flow_jet<F: SmoothField>(field: &F, x: &[f64], order: usize) -> Result<Vec<Taylor>> {
    check_dim("jet base point", field.dim(), x.len())?;
    let mut xs: Vec<Taylor> = x.iter().map(|&v| Taylor::cst(v)).collect();
    for k in 0..order {
        let fx = field.eval(&xs);
        for (xi, fi) in xs.iter_mut().zip(&fx) {
            let c = fi.coeff(k) / (k + 1) as f64;
            if !c.is_finite() {
                return Err(Error::NumericalDomain(format!(
                    "flow jet coefficient of order {} is not finite",
                    k + 1
                )));
            }
            xi.c.push(c);
        }
    }
    Ok(xs)
}

/// Taylor coefficients `c_0..c_K` of `t ↦ q(φ(t, x))` under the flow of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub base: Vec<f64>,
    pub coeffs: Vec<f64>,
}

impl Jet {
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `L_f^m q(x) = m!·c_m`.
    pub fn lie_derivative(&self, m: usize) -> f64 {
        self.coeffs[m] * factorial(m)
    }
}

pub fn scalar_jet<F: SmoothField, Q: SmoothScalar>(
    field: &F,
    q: &Q,
    x: &[f64],
    order: usize,
    cfg: &CalculusConfig,
) -> Result<Jet> {
    if order > cfg.jet_cap {
        return Err(Error::Config(format!(
            "jet order {order} exceeds the configured cap {}",
            cfg.jet_cap
        )));
    }
    let xs = flow_jet(field, x, order)?;
    let qs = q.eval(&xs);
    let coeffs: Vec<f64> = (0..=order).map(|k| qs.coeff(k)).collect();
    check_finite("jet", &coeffs)?;
    Ok(Jet {
        base: x.to_vec(),
        coeffs,
    })
}

/// `L_f^m q(x)`.
pub fn iterated_lie_scalar<F: SmoothField, Q: SmoothScalar>(
    field: &F,
    q: &Q,
    m: usize,
    x: &[f64],
    cfg: &CalculusConfig,
) -> Result<f64> {
    Ok(scalar_jet(field, q, x, m, cfg)?.lie_derivative(m))
}

fn factorial(m: usize) -> f64 {
    (1..=m).fold(1.0, |a, k| a * k as f64)
}

fn ad0<S: Scalar, F: SmoothField, G: SmoothField>(_f: &F, g: &G, x: &[S]) -> Vec<S> {
    g.eval(x)
}

// [f, τ](x) = Dτ(x) f(x) − Df(x) τ(x), with τ the previous level evaluated
// one dual nesting deeper.
macro_rules! ad_level {
    ($name:ident, $prev:ident) => {
        fn $name<S: Scalar, F: SmoothField, G: SmoothField>(f: &F, g: &G, x: &[S]) -> Vec<S> {
            let fx = f.eval(x);
            let tau = $prev(f, g, x);
            let d_tau = tangent($prev(f, g, &lift(x, &fx)));
            let d_f = tangent(f.eval(&lift(x, &tau)));
            d_tau.into_iter().zip(d_f).map(|(a, b)| a - b).collect()
        }
    };
}

ad_level!(ad1, ad0);
ad_level!(ad2, ad1);
ad_level!(ad3, ad2);
ad_level!(ad4, ad3);

/// The field `ad_f^k g` for `k ≤ MAX_NESTING`, evaluated by nested forward mode.
pub struct AdField<F, G> {
    f: F,
    g: G,
    k: usize,
}

impl<F: SmoothField, G: SmoothField> AdField<F, G> {
    pub fn new(f: F, g: G, k: usize) -> Result<Self> {
        if k > MAX_NESTING {
            return Err(Error::Config(format!(
                "bracket depth {k} exceeds the forward-mode nesting limit {MAX_NESTING}"
            )));
        }
        check_dim("bracket fields", f.dim(), g.dim())?;
        Ok(AdField { f, g, k })
    }
}

impl<F: SmoothField, G: SmoothField> SmoothField for AdField<F, G> {
    fn dim(&self) -> usize {
        self.f.dim()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        match self.k {
            0 => ad0(&self.f, &self.g, x),
            1 => ad1(&self.f, &self.g, x),
            2 => ad2(&self.f, &self.g, x),
            3 => ad3(&self.f, &self.g, x),
            4 => ad4(&self.f, &self.g, x),
            _ => unreachable!("depth checked in AdField::new"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BracketValue {
    pub value: Vec<f64>,
    /// Set when some level was computed by finite differences.
    pub approximate: bool,
}

/// `[f, g](x) = Dg(x) f(x) − Df(x) g(x)`.
pub fn lie_bracket<F: SmoothField, G: SmoothField>(f: &F, g: &G, x: &[f64]) -> Result<Vec<f64>> {
    Ok(ad_iterate(f, g, 1, x, &CalculusConfig::default())?.value)
}

/// `ad_f^k g(x)`.
pub fn ad_iterate<F: SmoothField, G: SmoothField>(
    f: &F,
    g: &G,
    k: usize,
    x: &[f64],
    cfg: &CalculusConfig,
) -> Result<BracketValue> {
    check_dim("bracket point", f.dim(), x.len())?;
    if k > cfg.fd_depth_limit {
        return Err(Error::Config(format!(
            "bracket depth {k} exceeds the configured limit {}",
            cfg.fd_depth_limit
        )));
    }
    let cap = cfg.nesting_cap.min(MAX_NESTING);
    let value = fd_ad(f, g, k, cap, cfg.fd_step, x);
    check_finite("lie bracket", &value)?;
    Ok(BracketValue {
        value,
        approximate: k > cap,
    })
}

fn fd_ad<F: SmoothField, G: SmoothField>(
    f: &F,
    g: &G,
    k: usize,
    cap: usize,
    step: f64,
    x: &[f64],
) -> Vec<f64> {
    if k <= cap {
        return AdField { f, g, k }.eval(x);
    }
    let fx = f.eval(x);
    let speed = fx.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tau = fd_ad(f, g, k - 1, cap, step, x);
    let d_tau = if speed == 0.0 {
        vec![0.0; x.len()]
    } else {
        let shift = |s: f64| -> Vec<f64> {
            x.iter()
                .zip(&fx)
                .map(|(xi, vi)| xi + s * step * vi / speed)
                .collect()
        };
        let plus = fd_ad(f, g, k - 1, cap, step, &shift(1.0));
        let minus = fd_ad(f, g, k - 1, cap, step, &shift(-1.0));
        plus.iter()
            .zip(&minus)
            .map(|(p, m)| (p - m) / (2.0 * step) * speed)
            .collect()
    };
    let d_f = directional(f, x, &tau);
    d_tau.iter().zip(&d_f).map(|(a, b)| a - b).collect()
}

fn check_order(r: usize) -> Result<()> {
    if r == 0 {
        return Err(Error::Input("storage smoothness order r must be at least 1".into()));
    }
    Ok(())
}

/// All `L_f^m h_i(x)` for `0 ≤ m ≤ r+n−2`, grouped by output component.
///
/// `x ∈ S′` iff every entry vanishes.
pub fn s_prime_residual<C: ControlAffine>(
    sys: &C,
    r: usize,
    x: &[f64],
    cfg: &CalculusConfig,
) -> Result<Vec<f64>> {
    check_order(r)?;
    let n = sys.state_dim();
    check_dim("residual point", n, x.len())?;
    let top = (r + n).saturating_sub(2);
    if top > cfg.jet_cap {
        return Err(Error::Config(format!(
            "S' needs Lie derivatives of order {top}, above the jet cap {}",
            cfg.jet_cap
        )));
    }
    let xs = flow_jet(&Drift(sys), x, top)?;
    let hs = sys.output(&xs);
    let mut out = Vec::with_capacity(hs.len() * (top + 1));
    for h in &hs {
        for m in 0..=top {
            out.push(h.coeff(m) * factorial(m));
        }
    }
    check_finite("S' residual", &out)?;
    Ok(out)
}

/// All `L_f^j L_τ V(x)` for generators `τ = ad_f^k g_i` (`0 ≤ k ≤ n−1`) of the
/// distribution and `0 ≤ j < r`, ordered by `i`, then `k`, then `j`.
///
/// `x ∈ S` iff every entry vanishes.
pub fn s_residual<P: PassiveSystem>(ps: &P, x: &[f64], cfg: &CalculusConfig) -> Result<Vec<f64>> {
    let r = ps.storage_order();
    check_order(r)?;
    let n = ps.state_dim();
    check_dim("residual point", n, x.len())?;
    let depth = n.saturating_sub(1);
    if depth > cfg.nesting_cap.min(MAX_NESTING) {
        return Err(Error::Config(format!(
            "S needs brackets of depth {depth}, above the nesting cap {}",
            cfg.nesting_cap.min(MAX_NESTING)
        )));
    }
    let f = Drift(ps);
    let mut out = Vec::new();
    for i in 0..ps.input_dim() {
        let g = InputField { sys: ps, index: i };
        for k in 0..=depth {
            let tau = AdField::new(&f, &g, k)?;
            let psi = LieScalar {
                field: tau,
                q: Storage(ps),
            };
            let jet = scalar_jet(&f, &psi, x, r - 1, cfg)?;
            out.extend((0..r).map(|j| jet.lie_derivative(j)));
        }
    }
    Ok(out)
}

/// Whether a residual vector lies within the membership band.
pub fn vanishes(residual: &[f64], band: f64) -> bool {
    max_abs(residual) <= band
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ConstantField, LinearField, ZeroField};
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    struct HalfSquare(usize);
    impl SmoothScalar for HalfSquare {
        fn dim(&self) -> usize {
            self.0
        }
        fn eval<S: Scalar>(&self, x: &[S]) -> S {
            x.iter().fold(S::zero(), |a, v| a + v.square()) * 0.5
        }
    }

    struct QuarticLast;
    impl SmoothScalar for QuarticLast {
        fn dim(&self) -> usize {
            3
        }
        fn eval<S: Scalar>(&self, x: &[S]) -> S {
            x[2].powi(4) / 4.0
        }
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(gradient(&HalfSquare(3), &[1.0, -2.0, 3.0]).unwrap(), vec![1.0, -2.0, 3.0]);
        assert_eq!(gradient(&QuarticLast, &[0.3, 0.1, 2.0]).unwrap(), vec![0.0, 0.0, 8.0]);
    }

    #[test]
    fn jacobian_of_linear_field_is_its_matrix() {
        let a = dmatrix![1.0, 2.0; -3.0, 0.5];
        let f = LinearField::new(a.clone()).unwrap();
        assert_eq!(jacobian(&f, &[0.7, -0.2]).unwrap(), a);
    }

    #[test]
    fn lie_derivative_of_constant_is_zero() {
        struct Const;
        impl SmoothScalar for Const {
            fn dim(&self) -> usize {
                2
            }
            fn eval<S: Scalar>(&self, _x: &[S]) -> S {
                S::cst(4.0)
            }
        }
        let f = LinearField::new(dmatrix![0.0, 1.0; -1.0, 0.0]).unwrap();
        assert_eq!(lie_scalar(&f, &Const, &[1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn iterated_lie_of_zero_field_vanishes() {
        let cfg = CalculusConfig::default();
        let x = [0.4, -1.0, 2.0];
        assert_eq!(iterated_lie_scalar(&ZeroField { n: 3 }, &QuarticLast, 0, &x, &cfg).unwrap(), 4.0);
        for m in 1..5 {
            assert_eq!(iterated_lie_scalar(&ZeroField { n: 3 }, &QuarticLast, m, &x, &cfg).unwrap(), 0.0);
        }
        assert!(matches!(
            iterated_lie_scalar(&ZeroField { n: 3 }, &QuarticLast, 13, &x, &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn iterated_lie_on_linear_field_matches_matrix_powers() {
        // q = ½‖x‖², f = Ax: L_f q = xᵀAx (A symmetric part), L_f² q = xᵀ(AᵀA + Aᵀ² ... ) checked via recursion
        let a = dmatrix![-1.0, 2.0; 0.5, -0.3];
        let f = LinearField::new(a.clone()).unwrap();
        let x = [0.8, -0.6];
        let cfg = CalculusConfig::default();
        let l1 = iterated_lie_scalar(&f, &HalfSquare(2), 1, &x, &cfg).unwrap();
        let direct = lie_scalar(&f, &HalfSquare(2), &x).unwrap();
        assert_relative_eq!(l1, direct, epsilon = 1e-14);
        let once = LieScalar { field: &f, q: HalfSquare(2) };
        let l2 = iterated_lie_scalar(&f, &HalfSquare(2), 2, &x, &cfg).unwrap();
        assert_relative_eq!(l2, lie_scalar(&f, &once, &x).unwrap(), epsilon = 1e-13);
    }

    #[test]
    fn bracket_of_linear_and_constant_field() {
        let a = dmatrix![0.0, 1.0, 0.0; -2.0, 0.0, 1.0; 1.0, 1.0, -1.0];
        let f = LinearField::new(a.clone()).unwrap();
        let g = ConstantField { c: vec![1.0, -1.0, 2.0] };
        let b = lie_bracket(&f, &g, &[0.3, 0.2, -0.1]).unwrap();
        let expected = -(&a * nalgebra::dvector![1.0, -1.0, 2.0]);
        for i in 0..3 {
            assert_relative_eq!(b[i], expected[i], epsilon = 1e-14);
        }
        let cfg = CalculusConfig::default();
        assert_eq!(ad_iterate(&f, &g, 0, &[0.3, 0.2, -0.1], &cfg).unwrap().value, g.c);
    }

    #[test]
    fn self_bracket_vanishes() {
        let f = LinearField::new(dmatrix![0.2, 1.0; -1.0, 0.0]).unwrap();
        let b = lie_bracket(&f, &f, &[1.0, 2.0]).unwrap();
        assert!(b.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn bracket_beyond_nesting_cap_is_approximate_then_rejected() {
        let f = LinearField::new(dmatrix![0.0, 1.0; -1.0, -0.5]).unwrap();
        let g = ConstantField { c: vec![0.0, 1.0] };
        let x = [0.2, 0.1];
        let cfg = CalculusConfig {
            nesting_cap: 2,
            ..Default::default()
        };
        let exact = ad_iterate(&f, &g, 3, &x, &CalculusConfig::default()).unwrap();
        let approx = ad_iterate(&f, &g, 3, &x, &cfg).unwrap();
        assert!(!exact.approximate && approx.approximate);
        for i in 0..2 {
            assert_relative_eq!(exact.value[i], approx.value[i], epsilon = 1e-6);
        }
        assert!(matches!(ad_iterate(&f, &g, 9, &x, &cfg), Err(Error::Config(_))));
    }
}
