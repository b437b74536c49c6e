use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::calculus::Scalar;
use crate::error::{check_dim, Error, Result};

/// Coordinates in which a state vector is stored.
///
/// `Polar` marks a pair `(r, θ)` standing for the planar point
/// `(r cos θ, r sin θ)`; θ is kept unwrapped by the solver and all distances
/// are taken in the ambient Euclidean coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Chart {
    #[default]
    Identity,
    Polar { r: usize, theta: usize },
}

impl Chart {
    pub fn to_ambient(&self, x: &[f64]) -> Vec<f64> {
        match *self {
            Chart::Identity => x.to_vec(),
            Chart::Polar { r, theta } => {
                let mut y = x.to_vec();
                y[r] = x[r] * x[theta].cos();
                y[theta] = x[r] * x[theta].sin();
                y
            }
        }
    }

    pub fn from_ambient(&self, y: &[f64]) -> Vec<f64> {
        match *self {
            Chart::Identity => y.to_vec(),
            Chart::Polar { r, theta } => {
                let mut x = y.to_vec();
                x[r] = y[r].hypot(y[theta]);
                x[theta] = y[theta].atan2(y[r]);
                x
            }
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let (pa, pb) = (self.to_ambient(a), self.to_ambient(b));
        norm(&sub(&pa, &pb))
    }
}

/// A scalar function of the state, evaluable on any [`Scalar`].
pub trait SmoothScalar: Send + Sync {
    fn dim(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S]) -> S;
    /// Declared smoothness order.
    fn order(&self) -> usize {
        usize::MAX
    }
}

/// A vector field on an `n`-dimensional state space.
pub trait SmoothField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S>;
    fn chart(&self) -> Chart {
        Chart::Identity
    }
}

/// A smooth map between spaces of possibly different dimension.
pub trait SmoothMap: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S>;
}

/// `ẋ = f(x) + Σ g_i(x) u_i`, `y = h(x)`.
pub trait ControlAffine: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn drift<S: Scalar>(&self, x: &[S]) -> Vec<S>;
    fn input_field<S: Scalar>(&self, i: usize, x: &[S]) -> Vec<S>;
    fn output<S: Scalar>(&self, x: &[S]) -> Vec<S>;
    fn chart(&self) -> Chart {
        Chart::Identity
    }
}

/// A control-affine system together with a candidate storage function.
///
/// Passivity itself is not assumed; it is verified by
/// [`crate::passivity::check_passivity`].
pub trait PassiveSystem: ControlAffine {
    fn storage<S: Scalar>(&self, x: &[S]) -> S;
    /// Smoothness order `r` of the storage.
    fn storage_order(&self) -> usize {
        2
    }
}

/// State feedback `u = -φ(x)`.
pub trait FeedbackLaw: Send + Sync {
    fn input_dim(&self) -> usize;
    fn phi<S: Scalar>(&self, x: &[S]) -> Vec<S>;
    /// `Some(k)` when `φ = k·h` identically.
    fn output_gain(&self) -> Option<f64> {
        None
    }
}

impl<T: SmoothField + ?Sized> SmoothField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        (**self).eval(x)
    }
    fn chart(&self) -> Chart {
        (**self).chart()
    }
}

impl<T: SmoothScalar + ?Sized> SmoothScalar for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        (**self).eval(x)
    }
    fn order(&self) -> usize {
        (**self).order()
    }
}

/// The open-loop field `f` of a control system.
#[derive(Clone, Copy)]
pub struct Drift<'a, C>(pub &'a C);

impl<C: ControlAffine> SmoothField for Drift<'_, C> {
    fn dim(&self) -> usize {
        self.0.state_dim()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        self.0.drift(x)
    }
    fn chart(&self) -> Chart {
        self.0.chart()
    }
}

/// The input field `g_i`.
#[derive(Clone, Copy)]
pub struct InputField<'a, C> {
    pub sys: &'a C,
    pub index: usize,
}

impl<C: ControlAffine> SmoothField for InputField<'_, C> {
    fn dim(&self) -> usize {
        self.sys.state_dim()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        self.sys.input_field(self.index, x)
    }
    fn chart(&self) -> Chart {
        self.sys.chart()
    }
}

/// One output component `h_i`.
#[derive(Clone, Copy)]
pub struct OutputComponent<'a, C> {
    pub sys: &'a C,
    pub index: usize,
}

impl<C: ControlAffine> SmoothScalar for OutputComponent<'_, C> {
    fn dim(&self) -> usize {
        self.sys.state_dim()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        self.sys.output(x).swap_remove(self.index)
    }
}

/// The storage `V` as a scalar map.
#[derive(Clone, Copy)]
pub struct Storage<'a, P>(pub &'a P);

impl<P: PassiveSystem> SmoothScalar for Storage<'_, P> {
    fn dim(&self) -> usize {
        self.0.state_dim()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        self.0.storage(x)
    }
    fn order(&self) -> usize {
        self.0.storage_order()
    }
}

/// Output feedback `φ(x) = k·h(x)`, i.e. `u = -k y`.
#[derive(Clone, Copy)]
pub struct OutputFeedback<'a, C> {
    pub sys: &'a C,
    pub gain: f64,
}

impl<'a, C: ControlAffine> OutputFeedback<'a, C> {
    pub fn new(sys: &'a C) -> Self {
        OutputFeedback { sys, gain: 1.0 }
    }
}

impl<C: ControlAffine> FeedbackLaw for OutputFeedback<'_, C> {
    fn input_dim(&self) -> usize {
        self.sys.input_dim()
    }
    fn phi<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        self.sys.output(x).into_iter().map(|y| y * self.gain).collect()
    }
    fn output_gain(&self) -> Option<f64> {
        Some(self.gain)
    }
}

/// `φ ≡ 0`.
#[derive(Clone, Copy, Debug)]
pub struct ZeroFeedback {
    pub inputs: usize,
}

impl FeedbackLaw for ZeroFeedback {
    fn input_dim(&self) -> usize {
        self.inputs
    }
    fn phi<S: Scalar>(&self, _x: &[S]) -> Vec<S> {
        vec![S::zero(); self.inputs]
    }
}

/// Closed loop `x ↦ f(x) − Σ g_i(x) φ_i(x)`.
pub struct ClosedLoop<'a, P, B> {
    pub sys: &'a P,
    pub feedback: &'a B,
}

impl<P: ControlAffine, B: FeedbackLaw> SmoothField for ClosedLoop<'_, P, B> {
    fn dim(&self) -> usize {
        self.sys.state_dim()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let mut dx = self.sys.drift(x);
        let phi = self.feedback.phi(x);
        for (i, p) in phi.into_iter().enumerate() {
            let g = self.sys.input_field(i, x);
            for (d, gi) in dx.iter_mut().zip(g) {
                *d = d.clone() - gi * p.clone();
            }
        }
        dx
    }
    fn chart(&self) -> Chart {
        self.sys.chart()
    }
}

/// Builds the closed-loop field for `u = -φ(x)`.
pub fn close_loop<'a, P: ControlAffine, B: FeedbackLaw>(
    sys: &'a P,
    feedback: &'a B,
) -> Result<ClosedLoop<'a, P, B>> {
    check_dim("feedback input dimension", sys.input_dim(), feedback.input_dim())?;
    Ok(ClosedLoop { sys, feedback })
}

/// A cascade `ẋ = f(x, y)`, `ẏ = g(y)` on `ℝ^{nx} × ℝ^{ny}`.
pub trait CascadeSystem: Send + Sync {
    fn x_dim(&self) -> usize;
    fn y_dim(&self) -> usize;
    fn f_xy<S: Scalar>(&self, x: &[S], y: &[S]) -> Vec<S>;
    fn g_y<S: Scalar>(&self, y: &[S]) -> Vec<S>;
}

/// The cascade as one field on the stacked state `(x, y)`.
pub struct CascadeProduct<'a, C>(pub &'a C);

impl<C: CascadeSystem> SmoothField for CascadeProduct<'_, C> {
    fn dim(&self) -> usize {
        self.0.x_dim() + self.0.y_dim()
    }
    fn eval<S: Scalar>(&self, z: &[S]) -> Vec<S> {
        let (x, y) = z.split_at(self.0.x_dim());
        let mut out = self.0.f_xy(x, y);
        out.extend(self.0.g_y(y));
        out
    }
}

/// The driven subsystem with its input switched off, `ẋ = f(x, 0)`.
pub struct CascadeDriven<'a, C>(pub &'a C);

impl<C: CascadeSystem> SmoothField for CascadeDriven<'_, C> {
    fn dim(&self) -> usize {
        self.0.x_dim()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let y = vec![S::zero(); self.0.y_dim()];
        self.0.f_xy(x, &y)
    }
}

/// The driving subsystem `ẏ = g(y)`.
pub struct CascadeDriver<'a, C>(pub &'a C);

impl<C: CascadeSystem> SmoothField for CascadeDriver<'_, C> {
    fn dim(&self) -> usize {
        self.0.y_dim()
    }
    fn eval<S: Scalar>(&self, y: &[S]) -> Vec<S> {
        self.0.g_y(y)
    }
}

/// `ẋ = A x`.
#[derive(Debug, Clone)]
pub struct LinearField {
    pub a: DMatrix<f64>,
}

impl LinearField {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Input("linear field needs a square matrix".into()));
        }
        Ok(LinearField { a })
    }
}

impl SmoothField for LinearField {
    fn dim(&self) -> usize {
        self.a.nrows()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let n = self.a.nrows();
        (0..n)
            .map(|i| {
                (0..n).fold(S::zero(), |acc, j| {
                    let aij = self.a[(i, j)];
                    if aij == 0.0 {
                        acc
                    } else {
                        acc + x[j].clone() * aij
                    }
                })
            })
            .collect()
    }
}

/// `ẋ = 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroField {
    pub n: usize,
}

impl SmoothField for ZeroField {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval<S: Scalar>(&self, _x: &[S]) -> Vec<S> {
        vec![S::zero(); self.n]
    }
}

/// Constant field `ẋ = c`.
#[derive(Debug, Clone)]
pub struct ConstantField {
    pub c: Vec<f64>,
}

impl SmoothField for ConstantField {
    fn dim(&self) -> usize {
        self.c.len()
    }
    fn eval<S: Scalar>(&self, _x: &[S]) -> Vec<S> {
        self.c.iter().map(|&c| S::cst(c)).collect()
    }
}

/// Evaluates a field on plain floats, rejecting non-finite output.
pub fn eval_field<F: SmoothField + ?Sized>(field: &F, x: &[f64]) -> Result<Vec<f64>> {
    check_dim("state", field.dim(), x.len())?;
    let v = field.eval(x);
    crate::error::check_finite("vector field", &v)?;
    Ok(v)
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Integrator;

    impl ControlAffine for Integrator {
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

    #[test]
    fn output_feedback_on_integrator_gives_decay() {
        let fb = OutputFeedback::new(&Integrator);
        let cl = close_loop(&Integrator, &fb).unwrap();
        assert_eq!(cl.eval(&[2.5]), vec![-2.5]);
    }

    #[test]
    fn zero_feedback_leaves_drift() {
        let fb = ZeroFeedback { inputs: 1 };
        let cl = close_loop(&Integrator, &fb).unwrap();
        assert_eq!(cl.eval(&[2.5]), vec![0.0]);
    }

    #[test]
    fn close_loop_rejects_dimension_mismatch() {
        let fb = ZeroFeedback { inputs: 2 };
        assert!(matches!(close_loop(&Integrator, &fb), Err(Error::Input(_))));
    }

    #[test]
    fn polar_chart_round_trip() {
        let c = Chart::Polar { r: 0, theta: 1 };
        let x = [2.0, 0.5, -1.0];
        let back = c.from_ambient(&c.to_ambient(&x));
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-14);
        }
        // θ and θ + 2π are the same ambient point
        assert!(c.distance(&[1.0, 0.1, 0.0], &[1.0, 0.1 + std::f64::consts::TAU, 0.0]) < 1e-14);
    }
}
