//! First-order forward-mode dual numbers with a dense direction vector.

use super::Scalar;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Value plus gradient with respect to `k` seeded directions. A missing
/// buffer means "constant": the gradient is identically zero and no memory
/// is touched until a variable enters the computation.
#[derive(Debug, Clone)]
pub struct Dual {
    v: f64,
    g: Option<Box<[f64]>>,
}

impl Dual {
    #[inline]
    pub fn constant(v: f64) -> Self {
        Self { v, g: None }
    }

    pub fn var(v: f64, i: usize, k: usize) -> Self {
        assert!(i < k);
        let mut g = vec![0.0; k].into_boxed_slice();
        g[i] = 1.0;
        Self { v, g: Some(g) }
    }

    #[inline]
    pub fn grad_slice(&self) -> Option<&[f64]> {
        self.g.as_deref()
    }

    /// gradient entry, zero for constants
    #[inline]
    pub fn grad(&self, i: usize) -> f64 {
        self.g.as_ref().map_or(0.0, |g| g[i])
    }

    /// apply the chain rule for a unary map with value `fv` and slope `f1`
    fn unary(mut self, fv: f64, f1: f64) -> Self {
        if let Some(g) = self.g.as_deref_mut() {
            for gi in g {
                *gi *= f1;
            }
        }
        self.v = fv;
        self
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len(), "direction counts must match");
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(mut self) -> Dual {
        self.v = -self.v;
        if let Some(g) = self.g.as_deref_mut() {
            for gi in g {
                *gi = -*gi;
            }
        }
        self
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(mut self, rhs: Dual) -> Dual {
        self.v += rhs.v;
        match (self.g.as_deref_mut(), rhs.g) {
            (Some(a), Some(b)) => axpy(a, 1.0, &b),
            (None, Some(b)) => self.g = Some(b),
            _ => {}
        }
        self
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(mut self, rhs: Dual) -> Dual {
        self.v -= rhs.v;
        match (self.g.as_deref_mut(), rhs.g) {
            (Some(a), Some(b)) => axpy(a, -1.0, &b),
            (None, Some(mut b)) => {
                for bi in b.iter_mut() {
                    *bi = -*bi;
                }
                self.g = Some(b);
            }
            _ => {}
        }
        self
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(mut self, rhs: Dual) -> Dual {
        let (av, bv) = (self.v, rhs.v);
        self.v = av * bv;
        match (self.g.as_deref_mut(), rhs.g) {
            (Some(a), Some(b)) => {
                for (ai, bi) in a.iter_mut().zip(b.iter()) {
                    *ai = *ai * bv + bi * av;
                }
            }
            (Some(a), None) => {
                for ai in a {
                    *ai *= bv;
                }
            }
            (None, Some(mut b)) => {
                for bi in b.iter_mut() {
                    *bi *= av;
                }
                self.g = Some(b);
            }
            (None, None) => {}
        }
        self
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        self.div_ref(&rhs)
    }
}

impl Scalar for Dual {
    const TRACKS_VALUE: bool = true;

    #[inline]
    fn from_f64(c: f64) -> Self {
        Dual::constant(c)
    }
    #[inline]
    fn value(&self) -> f64 {
        self.v
    }
    fn all_finite(&self) -> bool {
        self.v.is_finite() && self.g.as_deref().is_none_or(|g| g.iter().all(|x| x.is_finite()))
    }

    fn add_ref(&self, o: &Self) -> Self {
        self.clone() + o.clone()
    }
    fn sub_ref(&self, o: &Self) -> Self {
        self.clone() - o.clone()
    }

    fn mul_ref(&self, o: &Self) -> Self {
        let v = self.v * o.v;
        let g = match (self.g.as_deref(), o.g.as_deref()) {
            (Some(a), Some(b)) => {
                let mut g = vec![0.0; a.len()].into_boxed_slice();
                for i in 0..a.len() {
                    g[i] = a[i] * o.v + b[i] * self.v;
                }
                Some(g)
            }
            (Some(a), None) => {
                let mut g = a.to_vec().into_boxed_slice();
                for gi in g.iter_mut() {
                    *gi *= o.v;
                }
                Some(g)
            }
            (None, Some(b)) => {
                let mut g = b.to_vec().into_boxed_slice();
                for gi in g.iter_mut() {
                    *gi *= self.v;
                }
                Some(g)
            }
            (None, None) => None,
        };
        Dual { v, g }
    }

    fn div_ref(&self, o: &Self) -> Self {
        // a/b = a * (1/b); slope of 1/b is -1/b^2
        let inv = 1.0 / o.v;
        let v = self.v * inv;
        let g = match (self.g.as_deref(), o.g.as_deref()) {
            (Some(a), Some(b)) => {
                let mut g = vec![0.0; a.len()].into_boxed_slice();
                for i in 0..a.len() {
                    g[i] = (a[i] - v * b[i]) * inv;
                }
                Some(g)
            }
            (Some(a), None) => {
                let mut g = a.to_vec().into_boxed_slice();
                for gi in g.iter_mut() {
                    *gi *= inv;
                }
                Some(g)
            }
            (None, Some(b)) => {
                let mut g = b.to_vec().into_boxed_slice();
                for gi in g.iter_mut() {
                    *gi *= -v * inv;
                }
                Some(g)
            }
            (None, None) => None,
        };
        Dual { v, g }
    }

    fn scale(mut self, c: f64) -> Self {
        self.v *= c;
        if let Some(g) = self.g.as_deref_mut() {
            for gi in g {
                *gi *= c;
            }
        }
        self
    }

    fn add_f64(mut self, c: f64) -> Self {
        self.v += c;
        self
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        self.unary(e, e)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        self.unary(t, 1.0 - t * t)
    }
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.unary(s, c)
    }
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.unary(c, -s)
    }
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Dual::constant(1.0),
            1 => self,
            _ => {
                let fv = self.v.powi(n);
                let f1 = n as f64 * self.v.powi(n - 1);
                self.unary(fv, f1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_allocate_nothing() {
        let c = Dual::constant(2.5);
        let d = c.clone() * Dual::constant(2.0) + Dual::constant(1.0);
        assert_eq!(d.value(), 6.0);
        assert!(d.grad_slice().is_none());
    }

    #[test]
    fn seeded_variable_differentiates_itself() {
        let x = Dual::var(3.0, 1, 4);
        assert_eq!(x.grad(1), 1.0);
        assert_eq!(x.grad(0), 0.0);
        let y = x.clone() * x; // x^2, derivative 6 at x = 3
        assert_eq!(y.value(), 9.0);
        assert_eq!(y.grad(1), 6.0);
    }

    #[test]
    fn mixed_constant_variable_arithmetic() {
        let x = Dual::var(2.0, 0, 1);
        let y = (Dual::constant(3.0) - x.clone()) / x.clone(); // (3-x)/x = 3/x - 1
        assert!((y.value() - 0.5).abs() < 1e-15);
        assert!((y.grad(0) - (-3.0 / 4.0)).abs() < 1e-15, "d/dx = -3/x^2");
    }
}
