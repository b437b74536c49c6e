//! Concrete systems: the worked examples, a few textbook checks, cascades,
//! and polynomial systems read from coefficient tables.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::calculus::Scalar;
use crate::domain::{CascadeSystem, Chart, ControlAffine, PassiveSystem};
use crate::error::{Error, Result};

/// `c · Π x_i^{p_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub c: f64,
    pub p: Vec<u32>,
}

/// A polynomial map `ℝⁿ → ℝᵏ`, one list of monomials per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyMap {
    pub dim: usize,
    pub components: Vec<Vec<Monomial>>,
}

impl PolyMap {
    pub fn zero(dim: usize, outputs: usize) -> Self {
        PolyMap {
            dim,
            components: vec![vec![]; outputs],
        }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        for (k, comp) in self.components.iter().enumerate() {
            for m in comp {
                if m.p.len() != self.dim || !m.c.is_finite() {
                    return Err(Error::Input(format!(
                        "{what}[{k}]: monomial needs {} finite exponents and a finite coefficient",
                        self.dim
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        self.components
            .iter()
            .map(|comp| {
                comp.iter().fold(S::zero(), |acc, m| {
                    let term = m
                        .p
                        .iter()
                        .zip(x)
                        .filter(|(p, _)| **p > 0)
                        .fold(S::cst(m.c), |t, (p, xi)| t * xi.powi(*p));
                    acc + term
                })
            })
            .collect()
    }
}

/// `ẋ = f(x) + Σ g_i(x) u_i`, `y = h(x)`, storage `V`, all polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySystem {
    pub drift: PolyMap,
    #[serde(default)]
    pub inputs: Vec<PolyMap>,
    pub output: PolyMap,
    pub storage: PolyMap,
    #[serde(default = "default_order")]
    pub storage_order: usize,
}

fn default_order() -> usize {
    2
}

impl PolySystem {
    pub fn validate(&self) -> Result<()> {
        let n = self.drift.dim;
        if self.drift.components.len() != n {
            return Err(Error::Input("drift must have one component per state".into()));
        }
        self.drift.validate("drift")?;
        for (i, g) in self.inputs.iter().enumerate() {
            if g.dim != n || g.components.len() != n {
                return Err(Error::Input(format!("input field {i} must map R^{n} to R^{n}")));
            }
            g.validate("input")?;
        }
        if self.output.dim != n || self.output.components.len() != self.inputs.len() {
            return Err(Error::Input("output must have one component per input".into()));
        }
        self.output.validate("output")?;
        if self.storage.dim != n || self.storage.components.len() != 1 {
            return Err(Error::Input("storage must be a scalar polynomial on the state".into()));
        }
        self.storage.validate("storage")?;
        if self.storage_order == 0 {
            return Err(Error::Input("storage order must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CascadeKind {
    /// `ẋ = −x + x y`, `ẏ = −y`.
    Scalar,
    /// `ẋ = −x`, `ẏ = y`.
    UnstableDriver,
    /// `ẋ₁ = −y x₂`, `ẋ₂ = −x₂ + y x₁`, `ẏ = −y`; used with `Γ = {x₂ = 0}`.
    Rotating,
    /// `ẋ = A x + Σ_j y_j M_j x`, `ẏ = C y`.
    Linear {
        a: DMatrix<f64>,
        m: Vec<DMatrix<f64>>,
        c: DMatrix<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeModel {
    pub kind: CascadeKind,
}

impl CascadeSystem for CascadeModel {
    fn x_dim(&self) -> usize {
        match &self.kind {
            CascadeKind::Scalar | CascadeKind::UnstableDriver => 1,
            CascadeKind::Rotating => 2,
            CascadeKind::Linear { a, .. } => a.nrows(),
        }
    }

    fn y_dim(&self) -> usize {
        match &self.kind {
            CascadeKind::Linear { c, .. } => c.nrows(),
            _ => 1,
        }
    }

    fn f_xy<S: Scalar>(&self, x: &[S], y: &[S]) -> Vec<S> {
        match &self.kind {
            CascadeKind::Scalar => vec![x[0].clone() * (y[0].clone() - 1.0)],
            CascadeKind::UnstableDriver => vec![S::zero() - x[0].clone()],
            CascadeKind::Rotating => vec![
                S::zero() - y[0].clone() * x[1].clone(),
                y[0].clone() * x[0].clone() - x[1].clone(),
            ],
            CascadeKind::Linear { a, m, .. } => {
                let nx = a.nrows();
                (0..nx)
                    .map(|i| {
                        let mut acc = S::zero();
                        for j in 0..nx {
                            let mut coef = S::cst(a[(i, j)]);
                            for (k, mk) in m.iter().enumerate() {
                                coef = coef + y[k].clone() * mk[(i, j)];
                            }
                            acc = acc + coef * x[j].clone();
                        }
                        acc
                    })
                    .collect()
            }
        }
    }

    fn g_y<S: Scalar>(&self, y: &[S]) -> Vec<S> {
        match &self.kind {
            CascadeKind::UnstableDriver => vec![y[0].clone()],
            CascadeKind::Linear { c, .. } => (0..c.nrows())
                .map(|i| {
                    (0..c.ncols()).fold(S::zero(), |acc, j| acc + y[j].clone() * c[(i, j)])
                })
                .collect(),
            _ => vec![S::zero() - y[0].clone()],
        }
    }
}

/// Every built-in system, dispatched by variant so scenarios can be stored
/// in one registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    /// `ẋ₁ = −(x₂²+x₃²)x₂`, `ẋ₂ = (x₂²+x₃²)x₁`, `ẋ₃ = −x₃³`; no input,
    /// storage `x₃²/2`.
    Example1,
    /// `ṙ = −r(r−1)`, `θ̇ = sin²(θ/2) + x₃`, `ẋ₃ = u`, `y = x₃³`,
    /// `V = x₃⁴/4`, state `(r, θ, x₃)`.
    Polar,
    /// The five-state system with the flat input gain `e^{−1/x₄²}`.
    FiveState,
    /// `ẋ = u`, `y = x`, `V = x²/2`.
    Integrator,
    /// `ẋ₁ = x₂`, `ẋ₂ = −x₁ + u`, `y = x₂`, `V = ½‖x‖²`.
    Oscillator,
    /// `ẋ₁ = x₂`, `ẋ₂ = −x₁`, `ẋ₃ = u`, `y = x₃`, `V = ½‖x‖²`.
    UnobservableOscillator,
    /// A cascade with no input and `V ≡ 0`.
    Cascade(CascadeModel),
    Polynomial(Box<PolySystem>),
}

impl Model {
    pub fn cascade(&self) -> Option<&CascadeModel> {
        match self {
            Model::Cascade(c) => Some(c),
            _ => None,
        }
    }
}

impl ControlAffine for Model {
    fn state_dim(&self) -> usize {
        match self {
            Model::Example1 | Model::Polar | Model::UnobservableOscillator => 3,
            Model::FiveState => 5,
            Model::Integrator => 1,
            Model::Oscillator => 2,
            Model::Cascade(c) => c.x_dim() + c.y_dim(),
            Model::Polynomial(p) => p.drift.dim,
        }
    }

    fn input_dim(&self) -> usize {
        match self {
            Model::Example1 | Model::Cascade(_) => 0,
            Model::FiveState => 2,
            Model::Polynomial(p) => p.inputs.len(),
            _ => 1,
        }
    }

    fn drift<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let z = S::zero;
        match self {
            Model::Example1 => {
                let w = x[1].square() + x[2].square();
                vec![
                    z() - w.clone() * x[1].clone(),
                    w * x[0].clone(),
                    z() - x[2].powi(3),
                ]
            }
            Model::Polar => {
                let r = x[0].clone();
                let half = (x[1].clone() * 0.5).sin();
                vec![r.clone() * (S::one() - r), half.square() + x[2].clone(), z()]
            }
            Model::FiveState => vec![
                z() - x[0].clone() - x[0].clone() * x[3].clone(),
                x[0].clone() - x[1].clone() - x[3].square(),
                x[4].square(),
                x[0].square(),
                z() - x[2].clone() * x[4].clone(),
            ],
            Model::Integrator => vec![z()],
            Model::Oscillator => vec![x[1].clone(), z() - x[0].clone()],
            Model::UnobservableOscillator => vec![x[1].clone(), z() - x[0].clone(), z()],
            Model::Cascade(c) => {
                let (xs, ys) = x.split_at(c.x_dim());
                let mut out = c.f_xy(xs, ys);
                out.extend(c.g_y(ys));
                out
            }
            Model::Polynomial(p) => p.drift.eval(x),
        }
    }

    fn input_field<S: Scalar>(&self, i: usize, x: &[S]) -> Vec<S> {
        let n = self.state_dim();
        let unit = |k: usize| {
            let mut v = vec![S::zero(); n];
            v[k] = S::one();
            v
        };
        match self {
            Model::FiveState => {
                if i == 0 {
                    unit(2)
                } else {
                    let mut v = vec![S::zero(); 5];
                    v[3] = x[3].flat_bump();
                    v
                }
            }
            Model::Polar | Model::UnobservableOscillator => unit(2),
            Model::Integrator => unit(0),
            Model::Oscillator => unit(1),
            Model::Polynomial(p) => p.inputs[i].eval(x),
            Model::Example1 | Model::Cascade(_) => {
                unreachable!("system has no inputs")
            }
        }
    }

    fn output<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        match self {
            Model::Example1 | Model::Cascade(_) => vec![],
            Model::Polar => vec![x[2].powi(3)],
            Model::FiveState => vec![x[2].clone(), x[3].clone() * x[3].flat_bump()],
            Model::Integrator => vec![x[0].clone()],
            Model::Oscillator => vec![x[1].clone()],
            Model::UnobservableOscillator => vec![x[2].clone()],
            Model::Polynomial(p) => p.output.eval(x),
        }
    }

    fn chart(&self) -> Chart {
        match self {
            Model::Polar => Chart::Polar { r: 0, theta: 1 },
            _ => Chart::Identity,
        }
    }
}

impl PassiveSystem for Model {
    fn storage<S: Scalar>(&self, x: &[S]) -> S {
        let half_sq = |xs: &[S]| xs.iter().fold(S::zero(), |a, v| a + v.square()) * 0.5;
        match self {
            Model::Example1 => x[2].square() * 0.5,
            Model::Polar => x[2].powi(4) / 4.0,
            Model::FiveState => {
                (x[0].square() + x[2].square() + x[3].square() + x[4].square()) * 0.5
            }
            Model::Integrator | Model::Oscillator | Model::UnobservableOscillator => half_sq(x),
            Model::Cascade(_) => S::zero(),
            Model::Polynomial(p) => p.storage.eval(x).swap_remove(0),
        }
    }

    fn storage_order(&self) -> usize {
        match self {
            Model::Polynomial(p) => p.storage_order,
            _ => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{eval_field, Drift};

    #[test]
    fn polynomial_matches_hand_evaluation() {
        // 3 x0^2 x1 - x1
        let p = PolyMap {
            dim: 2,
            components: vec![vec![
                Monomial { c: 3.0, p: vec![2, 1] },
                Monomial { c: -1.0, p: vec![0, 1] },
            ]],
        };
        assert_eq!(p.eval(&[2.0, 0.5]), vec![5.5]);
        let bad = PolyMap {
            dim: 2,
            components: vec![vec![Monomial { c: 1.0, p: vec![1] }]],
        };
        assert!(bad.validate("f").is_err());
    }

    #[test]
    fn cascade_model_stacks_both_parts() {
        let m = Model::Cascade(CascadeModel {
            kind: CascadeKind::Scalar,
        });
        assert_eq!(eval_field(&Drift(&m), &[2.0, 0.5]).unwrap(), vec![-1.0, -0.5]);
    }

    #[test]
    fn five_state_flat_gain_vanishes_at_zero() {
        let m = Model::FiveState;
        let x = [1.0, 1.0, 0.0, 0.0, 0.0];
        assert_eq!(m.input_field(1, &x)[3], 0.0);
        assert_eq!(m.output(&x), vec![0.0, 0.0]);
    }
}
