//! Second-order forward-mode dual numbers: value, gradient and the dense
//! lower triangle of the Hessian, packed row-major.

use super::{tri_index, tri_len, Scalar};
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone)]
struct Buf {
    g: Box<[f64]>,
    h: Box<[f64]>,
}

/// Value, gradient and packed Hessian over `k` seeded directions; constants
/// carry no buffers.
#[derive(Debug, Clone)]
pub struct Dual2 {
    v: f64,
    d: Option<Box<Buf>>,
}

impl Dual2 {
    #[inline]
    pub fn constant(v: f64) -> Self {
        Self { v, d: None }
    }

    pub fn var(v: f64, i: usize, k: usize) -> Self {
        assert!(i < k);
        let mut g = vec![0.0; k].into_boxed_slice();
        g[i] = 1.0;
        let h = vec![0.0; tri_len(k)].into_boxed_slice();
        Self { v, d: Some(Box::new(Buf { g, h })) }
    }

    #[inline]
    pub fn grad_slice(&self) -> Option<&[f64]> {
        self.d.as_ref().map(|b| &*b.g)
    }

    /// packed lower-triangular Hessian (see [`tri_index`])
    #[inline]
    pub fn hess_slice(&self) -> Option<&[f64]> {
        self.d.as_ref().map(|b| &*b.h)
    }

    #[inline]
    pub fn grad(&self, i: usize) -> f64 {
        self.d.as_ref().map_or(0.0, |b| b.g[i])
    }

    #[inline]
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.d.as_ref().map_or(0.0, |b| b.h[tri_index(i, j)])
    }

    /// chain rule for a unary map: value `fv`, first and second derivative
    /// `f1`, `f2` at the inner value
    fn unary(mut self, fv: f64, f1: f64, f2: f64) -> Self {
        if let Some(b) = self.d.as_deref_mut() {
            let k = b.g.len();
            for i in 0..k {
                let gi = b.g[i];
                let row = &mut b.h[tri_index(i, 0)..=tri_index(i, i)];
                for (j, r) in row.iter_mut().enumerate() {
                    *r = f1 * *r + f2 * gi * b.g[j];
                }
            }
            for gi in b.g.iter_mut() {
                *gi *= f1;
            }
        }
        self.v = fv;
        self
    }

    fn recip(self) -> Self {
        let inv = 1.0 / self.v;
        self.unary(inv, -inv * inv, 2.0 * inv * inv * inv)
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len(), "direction counts must match");
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// h += ag (x) bg + bg (x) ag, lower triangle
fn sym_outer_into(h: &mut [f64], ag: &[f64], bg: &[f64]) {
    let k = ag.len();
    for i in 0..k {
        let (ai, bi) = (ag[i], bg[i]);
        if ai == 0.0 && bi == 0.0 {
            continue;
        }
        let row = &mut h[tri_index(i, 0)..=tri_index(i, i)];
        for (j, r) in row.iter_mut().enumerate() {
            *r += ai * bg[j] + bi * ag[j];
        }
    }
}

impl Neg for Dual2 {
    type Output = Dual2;
    fn neg(mut self) -> Dual2 {
        self.v = -self.v;
        if let Some(b) = self.d.as_deref_mut() {
            for x in b.g.iter_mut() {
                *x = -*x;
            }
            for x in b.h.iter_mut() {
                *x = -*x;
            }
        }
        self
    }
}

impl Add for Dual2 {
    type Output = Dual2;
    fn add(mut self, rhs: Dual2) -> Dual2 {
        self.v += rhs.v;
        match (self.d.as_deref_mut(), rhs.d) {
            (Some(a), Some(b)) => {
                axpy(&mut a.g, 1.0, &b.g);
                axpy(&mut a.h, 1.0, &b.h);
            }
            (None, Some(b)) => self.d = Some(b),
            _ => {}
        }
        self
    }
}

impl Sub for Dual2 {
    type Output = Dual2;
    fn sub(mut self, rhs: Dual2) -> Dual2 {
        self.v -= rhs.v;
        match (self.d.as_deref_mut(), rhs.d) {
            (Some(a), Some(b)) => {
                axpy(&mut a.g, -1.0, &b.g);
                axpy(&mut a.h, -1.0, &b.h);
            }
            (None, Some(mut b)) => {
                for x in b.g.iter_mut() {
                    *x = -*x;
                }
                for x in b.h.iter_mut() {
                    *x = -*x;
                }
                self.d = Some(b);
            }
            _ => {}
        }
        self
    }
}

impl Mul for Dual2 {
    type Output = Dual2;
    fn mul(mut self, rhs: Dual2) -> Dual2 {
        let (av, bv) = (self.v, rhs.v);
        self.v = av * bv;
        match (self.d.as_deref_mut(), rhs.d) {
            (Some(a), Some(b)) => {
                // Hessian first: it needs the original gradients
                for x in a.h.iter_mut() {
                    *x *= bv;
                }
                axpy(&mut a.h, av, &b.h);
                sym_outer_into(&mut a.h, &a.g, &b.g);
                for (ai, bi) in a.g.iter_mut().zip(b.g.iter()) {
                    *ai = *ai * bv + bi * av;
                }
            }
            (Some(a), None) => {
                for x in a.h.iter_mut() {
                    *x *= bv;
                }
                for x in a.g.iter_mut() {
                    *x *= bv;
                }
            }
            (None, Some(mut b)) => {
                for x in b.h.iter_mut() {
                    *x *= av;
                }
                for x in b.g.iter_mut() {
                    *x *= av;
                }
                self.d = Some(b);
            }
            (None, None) => {}
        }
        self
    }
}

impl Div for Dual2 {
    type Output = Dual2;
    fn div(self, rhs: Dual2) -> Dual2 {
        if rhs.d.is_none() {
            return self.scale(1.0 / rhs.v);
        }
        self * rhs.recip()
    }
}

impl Scalar for Dual2 {
    const TRACKS_VALUE: bool = true;

    #[inline]
    fn from_f64(c: f64) -> Self {
        Dual2::constant(c)
    }
    #[inline]
    fn value(&self) -> f64 {
        self.v
    }
    fn all_finite(&self) -> bool {
        self.v.is_finite()
            && self.d.as_ref().is_none_or(|b| {
                b.g.iter().all(|x| x.is_finite()) && b.h.iter().all(|x| x.is_finite())
            })
    }

    fn add_ref(&self, o: &Self) -> Self {
        self.clone() + o.clone()
    }
    fn sub_ref(&self, o: &Self) -> Self {
        self.clone() - o.clone()
    }
    fn mul_ref(&self, o: &Self) -> Self {
        match (&self.d, &o.d) {
            (Some(a), Some(b)) => {
                let k = a.g.len();
                let mut g = vec![0.0; k].into_boxed_slice();
                for i in 0..k {
                    g[i] = a.g[i] * o.v + b.g[i] * self.v;
                }
                let mut h = vec![0.0; a.h.len()].into_boxed_slice();
                for i in 0..a.h.len() {
                    h[i] = a.h[i] * o.v + b.h[i] * self.v;
                }
                sym_outer_into(&mut h, &a.g, &b.g);
                Dual2 { v: self.v * o.v, d: Some(Box::new(Buf { g, h })) }
            }
            _ => self.clone() * o.clone(),
        }
    }
    fn div_ref(&self, o: &Self) -> Self {
        self.clone() / o.clone()
    }

    fn scale(mut self, c: f64) -> Self {
        self.v *= c;
        if let Some(b) = self.d.as_deref_mut() {
            for x in b.g.iter_mut() {
                *x *= c;
            }
            for x in b.h.iter_mut() {
                *x *= c;
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
        self.unary(e, e, e)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        let f1 = 0.5 / s;
        let f2 = -0.5 * f1 / self.v;
        self.unary(s, f1, f2)
    }
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        let sech2 = 1.0 - t * t;
        self.unary(t, sech2, -2.0 * t * sech2)
    }
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.unary(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.unary(c, -s, -c)
    }
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Dual2::constant(1.0),
            1 => self,
            _ => {
                let fv = self.v.powi(n);
                let f1 = n as f64 * self.v.powi(n - 1);
                let f2 = (n as f64) * (n as f64 - 1.0) * self.v.powi(n - 2);
                self.unary(fv, f1, f2)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_hessian_is_the_symmetric_cross_term() {
        // f = x*y: H = [[0, 1], [1, 0]]
        let x = Dual2::var(3.0, 0, 2);
        let y = Dual2::var(-2.0, 1, 2);
        let f = x * y;
        assert_eq!(f.hess(0, 0), 0.0);
        assert_eq!(f.hess(1, 0), 1.0);
        assert_eq!(f.hess(1, 1), 0.0);
        assert_eq!(f.grad(0), -2.0);
        assert_eq!(f.grad(1), 3.0);
    }

    #[test]
    fn square_hessian_is_two() {
        let x = Dual2::var(1.7, 0, 1);
        let f = x.mul_ref(&x);
        assert_eq!(f.hess(0, 0), 2.0);
        assert!((f.grad(0) - 3.4).abs() < 1e-15);
    }

    #[test]
    fn exp_of_product_matches_analytic_hessian() {
        // f = exp(x*y): f_xx = y^2 e, f_xy = (1 + xy) e, f_yy = x^2 e
        let (xv, yv) = (0.4, -0.7);
        let x = Dual2::var(xv, 0, 2);
        let y = Dual2::var(yv, 1, 2);
        let f = (x * y).exp();
        let e = (xv * yv).exp();
        assert!((f.hess(0, 0) - yv * yv * e).abs() < 1e-14);
        assert!((f.hess(1, 0) - (1.0 + xv * yv) * e).abs() < 1e-14);
        assert!((f.hess(1, 1) - xv * xv * e).abs() < 1e-14);
    }

    #[test]
    fn reciprocal_curvature() {
        // f = 1/x: f'' = 2/x^3
        let x = Dual2::var(2.0, 0, 1);
        let f = Dual2::constant(1.0) / x;
        assert!((f.value() - 0.5).abs() < 1e-15);
        assert!((f.grad(0) + 0.25).abs() < 1e-15);
        assert!((f.hess(0, 0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn cube_second_derivative() {
        let x = Dual2::var(1.5, 0, 1);
        let f = x.powi(3);
        assert!((f.hess(0, 0) - 9.0).abs() < 1e-13, "6x at x=1.5");
    }
}
