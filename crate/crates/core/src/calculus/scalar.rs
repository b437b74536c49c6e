//! Number types for exact forward-mode differentiation.
//!
//! Every smooth map in this crate is written once, generically over
//! [`Scalar`], and evaluated on three families of numbers:
//!
//! - `f64` for plain evaluation,
//! - [`Dual<S>`] for a directional derivative (nestable, so `Dual<Dual<f64>>`
//!   carries second derivatives and so on),
//! - [`Taylor`] for truncated power series in time, used to propagate jets
//!   along the flow of a vector field.
//!
//! Mixed nests such as `Dual<Taylor>` are what make `L_f^j L_τ V` computable
//! without symbolic algebra.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic required of every number a smooth map is evaluated on.
pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Embeds a constant.
    fn cst(c: f64) -> Self;

    /// The primal value, with every infinitesimal part dropped.
    fn value(&self) -> f64;

    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn recip(&self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn one() -> Self {
        Self::cst(1.0)
    }

    fn powi(&self, k: u32) -> Self {
        let mut acc = Self::one();
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base.clone();
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        acc
    }

    fn square(&self) -> Self {
        self.clone() * self.clone()
    }

    /// `exp(-1/x²)`, extended by 0 at `x = 0` together with every derivative.
    ///
    /// The branch is taken on the primal value, so at `x = 0` all jet and
    /// tangent coefficients vanish, which is exact for this flat function.
    fn flat_bump(&self) -> Self {
        if self.value() == 0.0 {
            Self::zero()
        } else {
            (-(self.square().recip())).exp()
        }
    }
}

impl Scalar for f64 {
    fn cst(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn recip(&self) -> Self {
        1.0 / *self
    }
    fn powi(&self, k: u32) -> Self {
        f64::powi(*self, k as i32)
    }
}

/// `re + eps·ε` with `ε² = 0`, over any scalar type.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual<S> {
    pub re: S,
    pub eps: S,
}

impl<S: Scalar> Dual<S> {
    pub fn new(re: S, eps: S) -> Self {
        Dual { re, eps }
    }

    pub fn constant(re: S) -> Self {
        Dual { re, eps: S::zero() }
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let eps = self.re.clone() * o.eps + self.eps * o.re.clone();
        Dual::new(self.re * o.re, eps)
    }
}

impl<S: Scalar> Div for Dual<S> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}

impl<S: Scalar> Add<f64> for Dual<S> {
    type Output = Self;
    fn add(self, c: f64) -> Self {
        Dual::new(self.re + c, self.eps)
    }
}

impl<S: Scalar> Sub<f64> for Dual<S> {
    type Output = Self;
    fn sub(self, c: f64) -> Self {
        Dual::new(self.re - c, self.eps)
    }
}

impl<S: Scalar> Mul<f64> for Dual<S> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        Dual::new(self.re * c, self.eps * c)
    }
}

impl<S: Scalar> Div<f64> for Dual<S> {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        Dual::new(self.re / c, self.eps / c)
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    fn cst(c: f64) -> Self {
        Dual::constant(S::cst(c))
    }
    fn value(&self) -> f64 {
        self.re.value()
    }
    fn exp(&self) -> Self {
        let e = self.re.exp();
        Dual::new(e.clone(), self.eps.clone() * e)
    }
    fn ln(&self) -> Self {
        Dual::new(self.re.ln(), self.eps.clone() / self.re.clone())
    }
    fn sin(&self) -> Self {
        Dual::new(self.re.sin(), self.eps.clone() * self.re.cos())
    }
    fn cos(&self) -> Self {
        Dual::new(self.re.cos(), -(self.eps.clone() * self.re.sin()))
    }
    fn sqrt(&self) -> Self {
        let s = self.re.sqrt();
        Dual::new(s.clone(), self.eps.clone() / (s * 2.0))
    }
    fn recip(&self) -> Self {
        let r = self.re.recip();
        Dual::new(r.clone(), -(self.eps.clone() * r.square()))
    }
}

/// Truncated univariate power series `Σ c_k t^k`.
///
/// Series of different lengths combine by zero-padding; the result keeps the
/// longer length. Constants have length one.
#[derive(Debug, Clone, PartialEq)]
pub struct Taylor {
    pub c: Vec<f64>,
}

impl Taylor {
    pub fn new(c: Vec<f64>) -> Self {
        assert!(!c.is_empty(), "taylor series needs at least one coefficient");
        Taylor { c }
    }

    /// `c0 + t`, truncated to `len` coefficients.
    pub fn variable(c0: f64, len: usize) -> Self {
        let mut c = vec![0.0; len.max(1)];
        c[0] = c0;
        if len > 1 {
            c[1] = 1.0;
        }
        Taylor { c }
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.c.get(k).copied().unwrap_or(0.0)
    }

    fn padded(&self, len: usize) -> Vec<f64> {
        let mut v = self.c.clone();
        v.resize(len, 0.0);
        v
    }

    fn zip_with(self, o: Taylor, op: impl Fn(f64, f64) -> f64) -> Taylor {
        let len = self.len().max(o.len());
        let a = self.padded(len);
        let b = o.padded(len);
        Taylor::new(a.iter().zip(&b).map(|(x, y)| op(*x, *y)).collect())
    }

    fn map(self, op: impl Fn(f64) -> f64) -> Taylor {
        Taylor::new(self.c.into_iter().map(op).collect())
    }
}

impl Add for Taylor {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.zip_with(o, |a, b| a + b)
    }
}

impl Sub for Taylor {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.zip_with(o, |a, b| a - b)
    }
}

impl Mul for Taylor {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let len = self.len().max(o.len());
        let mut out = vec![0.0; len];
        for (i, &ai) in self.c.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            for (j, &bj) in o.c.iter().enumerate().take(len - i) {
                out[i + j] += ai * bj;
            }
        }
        Taylor::new(out)
    }
}

impl Div for Taylor {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let len = self.len().max(o.len());
        let a = self.padded(len);
        let b = o.padded(len);
        let mut q = vec![0.0; len];
        for k in 0..len {
            let mut s = a[k];
            for j in 1..=k {
                s -= b[j] * q[k - j];
            }
            q[k] = s / b[0];
        }
        Taylor::new(q)
    }
}

impl Neg for Taylor {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|a| -a)
    }
}

impl Add<f64> for Taylor {
    type Output = Self;
    fn add(mut self, c: f64) -> Self {
        self.c[0] += c;
        self
    }
}

impl Sub<f64> for Taylor {
    type Output = Self;
    fn sub(mut self, c: f64) -> Self {
        self.c[0] -= c;
        self
    }
}

impl Mul<f64> for Taylor {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        self.map(|a| a * c)
    }
}

impl Div<f64> for Taylor {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        self.map(|a| a / c)
    }
}

impl Scalar for Taylor {
    fn cst(c: f64) -> Self {
        Taylor { c: vec![c] }
    }

    fn value(&self) -> f64 {
        self.c[0]
    }

    // e' = a' e  =>  k e_k = Σ_{j=1..k} j a_j e_{k-j}
    fn exp(&self) -> Self {
        let a = &self.c;
        let n = a.len();
        let mut e = vec![0.0; n];
        e[0] = a[0].exp();
        for k in 1..n {
            let mut s = 0.0;
            for j in 1..=k {
                s += j as f64 * a[j] * e[k - j];
            }
            e[k] = s / k as f64;
        }
        Taylor::new(e)
    }

    // a l' = a'  =>  k a_0 l_k = k a_k - Σ_{j=1..k-1} j l_j a_{k-j}
    fn ln(&self) -> Self {
        let a = &self.c;
        let n = a.len();
        let mut l = vec![0.0; n];
        l[0] = a[0].ln();
        for k in 1..n {
            let mut s = k as f64 * a[k];
            for j in 1..k {
                s -= j as f64 * l[j] * a[k - j];
            }
            l[k] = s / (k as f64 * a[0]);
        }
        Taylor::new(l)
    }

    fn sin(&self) -> Self {
        sin_cos(&self.c).0
    }

    fn cos(&self) -> Self {
        sin_cos(&self.c).1
    }

    // s² = a  =>  2 s_0 s_k = a_k - Σ_{j=1..k-1} s_j s_{k-j}
    fn sqrt(&self) -> Self {
        let a = &self.c;
        let n = a.len();
        let mut s = vec![0.0; n];
        s[0] = a[0].sqrt();
        for k in 1..n {
            let mut acc = a[k];
            for j in 1..k {
                acc -= s[j] * s[k - j];
            }
            s[k] = acc / (2.0 * s[0]);
        }
        Taylor::new(s)
    }

    fn recip(&self) -> Self {
        Taylor::cst(1.0) / self.clone()
    }
}

fn sin_cos(a: &[f64]) -> (Taylor, Taylor) {
    let n = a.len();
    let mut s = vec![0.0; n];
    let mut c = vec![0.0; n];
    s[0] = a[0].sin();
    c[0] = a[0].cos();
    for k in 1..n {
        let mut ss = 0.0;
        let mut cc = 0.0;
        for j in 1..=k {
            let ja = j as f64 * a[j];
            ss += ja * c[k - j];
            cc -= ja * s[k - j];
        }
        s[k] = ss / k as f64;
        c[k] = cc / k as f64;
    }
    (Taylor::new(s), Taylor::new(c))
}
