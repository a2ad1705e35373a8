//! Forward-mode automatic differentiation over fixed-width dual numbers.
//!
//! The stance dynamics and cost integrands are written once, generically over
//! [`Scalar`], and evaluated with `f64` for plain values, [`Dual`] for exact
//! first derivatives, and [`Dual2`] for exact second derivatives. Widths are
//! compile-time constants sized to the local variable count of one knot or
//! one collocation interval, so no allocation happens in the hot path.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic scalar abstraction shared by plain values and dual numbers.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Lift a constant into the scalar type (zero derivatives).
    fn c(v: f64) -> Self;
    /// The underlying value.
    fn val(self) -> f64;
    fn sqrt(self) -> Self;
    fn powi2(self) -> Self {
        self * self
    }
}

impl Scalar for f64 {
    #[inline]
    fn c(v: f64) -> Self {
        v
    }
    #[inline]
    fn val(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// First-order dual number carrying `N` partial derivatives.
#[derive(Debug, Clone, Copy)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    /// Seed an independent variable: value `v`, unit derivative in slot `i`.
    pub fn var(v: f64, i: usize) -> Self {
        let mut d = [0.0; N];
        d[i] = 1.0;
        Dual { v, d }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(rhs.d.iter()) {
            *a += *b;
        }
        Dual { v: self.v + rhs.v, d }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(rhs.d.iter()) {
            *a -= *b;
        }
        Dual { v: self.v - rhs.v, d }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Dual { v: self.v * rhs.v, d }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.v;
        let v = self.v * inv;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (self.d[i] - v * rhs.d[i]) * inv;
        }
        Dual { v, d }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut d = self.d;
        for a in d.iter_mut() {
            *a = -*a;
        }
        Dual { v: -self.v, d }
    }
}

impl<const N: usize> Scalar for Dual<N> {
    #[inline]
    fn c(v: f64) -> Self {
        Dual { v, d: [0.0; N] }
    }
    #[inline]
    fn val(self) -> f64 {
        self.v
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        let inv = 0.5 / s;
        let mut d = self.d;
        for a in d.iter_mut() {
            *a *= inv;
        }
        Dual { v: s, d }
    }
}

/// Second-order dual number: value, gradient and full symmetric Hessian.
#[derive(Debug, Clone, Copy)]
pub struct Dual2<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
    pub h: [[f64; N]; N],
}

impl<const N: usize> Dual2<N> {
    pub fn var(v: f64, i: usize) -> Self {
        let mut g = [0.0; N];
        g[i] = 1.0;
        Dual2 { v, g, h: [[0.0; N]; N] }
    }
}

impl<const N: usize> Add for Dual2<N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut out = self;
        out.v += rhs.v;
        for i in 0..N {
            out.g[i] += rhs.g[i];
            for j in 0..N {
                out.h[i][j] += rhs.h[i][j];
            }
        }
        out
    }
}

impl<const N: usize> Sub for Dual2<N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut out = self;
        out.v -= rhs.v;
        for i in 0..N {
            out.g[i] -= rhs.g[i];
            for j in 0..N {
                out.h[i][j] -= rhs.h[i][j];
            }
        }
        out
    }
}

impl<const N: usize> Mul for Dual2<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut out = Dual2 { v: self.v * rhs.v, g: [0.0; N], h: [[0.0; N]; N] };
        for i in 0..N {
            out.g[i] = self.g[i] * rhs.v + self.v * rhs.g[i];
            for j in 0..N {
                out.h[i][j] = self.h[i][j] * rhs.v
                    + self.v * rhs.h[i][j]
                    + self.g[i] * rhs.g[j]
                    + self.g[j] * rhs.g[i];
            }
        }
        out
    }
}

impl<const N: usize> Div for Dual2<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

impl<const N: usize> Neg for Dual2<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut out = self;
        out.v = -out.v;
        for i in 0..N {
            out.g[i] = -out.g[i];
            for j in 0..N {
                out.h[i][j] = -out.h[i][j];
            }
        }
        out
    }
}

impl<const N: usize> Dual2<N> {
    /// 1/x with exact first and second derivatives.
    #[inline]
    fn recip(self) -> Self {
        let inv = 1.0 / self.v;
        let inv2 = inv * inv;
        let inv3 = inv2 * inv;
        let mut out = Dual2 { v: inv, g: [0.0; N], h: [[0.0; N]; N] };
        for i in 0..N {
            out.g[i] = -self.g[i] * inv2;
            for j in 0..N {
                out.h[i][j] = 2.0 * self.g[i] * self.g[j] * inv3 - self.h[i][j] * inv2;
            }
        }
        out
    }
}

impl<const N: usize> Scalar for Dual2<N> {
    #[inline]
    fn c(v: f64) -> Self {
        Dual2 { v, g: [0.0; N], h: [[0.0; N]; N] }
    }
    #[inline]
    fn val(self) -> f64 {
        self.v
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        let inv = 0.5 / s;
        let mut out = Dual2 { v: s, g: [0.0; N], h: [[0.0; N]; N] };
        for i in 0..N {
            out.g[i] = self.g[i] * inv;
        }
        for i in 0..N {
            for j in 0..N {
                out.h[i][j] = (self.h[i][j] - 2.0 * out.g[i] * out.g[j]) * inv;
            }
        }
        out
    }
}
