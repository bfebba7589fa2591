//! Forward-mode automatic differentiation up to second order, plus a
//! structural probe that propagates dependency sets instead of numbers.
//!
//! Model right-hand sides are written once, generically over [`Scalar`], and
//! evaluated with `f64` (values), [`Dual`] (values + gradient), [`Dual2`]
//! (values + gradient + dense packed Hessian) or [`Probe`] (which variables
//! and variable pairs can appear in first and second derivatives). All dual
//! numbers inside one evaluation share the same direction count `k`;
//! constants carry no buffers at all, so literals stay cheap.

pub mod bundle;
mod dual;
mod dual2;
mod probe;

pub use dual::Dual;
pub use dual2::Dual2;
pub use probe::{pair_list, Probe};

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Packed lower-triangle index of the entry `(i, j)` with `j <= i`.
#[inline]
pub fn tri_index(i: usize, j: usize) -> usize {
    debug_assert!(j <= i);
    i * (i + 1) / 2 + j
}

/// Length of a packed lower triangle over `k` variables.
#[inline]
pub fn tri_len(k: usize) -> usize {
    k * (k + 1) / 2
}

/// The scalar abstraction model code is generic over.
///
/// By-value operators may reuse the left operand's buffers; the `_ref`
/// variants read both operands and allocate the result, so callers never
/// need defensive clones.
pub trait Scalar:
    Sized
    + Clone
    + Debug
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    /// false for [`Probe`]: numeric guard clauses must be skipped because
    /// values are meaningless there
    const TRACKS_VALUE: bool;

    fn from_f64(c: f64) -> Self;
    fn value(&self) -> f64;
    /// value and every tracked derivative is finite
    fn all_finite(&self) -> bool;

    fn add_ref(&self, o: &Self) -> Self;
    fn sub_ref(&self, o: &Self) -> Self;
    fn mul_ref(&self, o: &Self) -> Self;
    fn div_ref(&self, o: &Self) -> Self;

    /// multiply by a plain constant
    fn scale(self, c: f64) -> Self;
    /// add a plain constant
    fn add_f64(self, c: f64) -> Self;

    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn powi(self, n: i32) -> Self;
}

impl Scalar for f64 {
    const TRACKS_VALUE: bool = true;

    #[inline]
    fn from_f64(c: f64) -> Self {
        c
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
    #[inline]
    fn add_ref(&self, o: &Self) -> Self {
        self + o
    }
    #[inline]
    fn sub_ref(&self, o: &Self) -> Self {
        self - o
    }
    #[inline]
    fn mul_ref(&self, o: &Self) -> Self {
        self * o
    }
    #[inline]
    fn div_ref(&self, o: &Self) -> Self {
        self / o
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }
    #[inline]
    fn add_f64(self, c: f64) -> Self {
        self + c
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// Seed a full set of first-order variables: entry `i` carries value
/// `values[i]` and direction `e_i` in a space of `values.len()` directions.
pub fn dual_seed(values: &[f64]) -> Vec<Dual> {
    let k = values.len();
    values.iter().enumerate().map(|(i, &v)| Dual::var(v, i, k)).collect()
}

/// Seed a full set of second-order variables.
pub fn dual2_seed(values: &[f64]) -> Vec<Dual2> {
    let k = values.len();
    values.iter().enumerate().map(|(i, &v)| Dual2::var(v, i, k)).collect()
}

/// Seed `k` structural probe variables.
pub fn probe_seed(k: usize) -> Vec<Probe> {
    (0..k).map(|i| Probe::var(i, k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// a composite expression exercising every operation the models use
    fn expr<S: Scalar>(x: &[S]) -> S {
        let a = x[0].mul_ref(&x[1]).add_f64(0.5); // x0*x1 + 0.5
        let b = x[2].clone().sin().mul_ref(&x[0].clone().exp()); // sin(x2)*exp(x0)
        let c = x[1].div_ref(&x[2].clone().add_f64(3.0)); // x1/(x2+3)
        let d = x[0].clone().powi(3).scale(0.25); // 0.25 x0^3
        let e = (x[1].clone().tanh() + x[2].mul_ref(&x[2])).add_f64(2.0).sqrt(); // sqrt(tanh(x1)+x2^2+2)
        a.mul_ref(&b) + c - d + e
    }

    fn expr_f64(x: &[f64]) -> f64 {
        expr(x)
    }

    #[test]
    fn dual_value_matches_plain_eval() {
        let x = [0.3, -1.2, 0.9];
        let d = dual_seed(&x);
        let y = expr(&d);
        assert!((y.value() - expr_f64(&x)).abs() < 1e-15);
        let d2 = dual2_seed(&x);
        let y2 = expr(&d2);
        assert!((y2.value() - expr_f64(&x)).abs() < 1e-15);
    }

    #[test]
    fn dual_gradient_matches_central_differences() {
        let x = [0.3, -1.2, 0.9];
        let d = dual_seed(&x);
        let y = expr(&d);
        let g = y.grad_slice().expect("depends on variables");
        let h = 1e-6;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (expr_f64(&xp) - expr_f64(&xm)) / (2.0 * h);
            assert!(
                (g[i] - fd).abs() < 1e-8 * (1.0 + fd.abs()),
                "dexpr/dx{i}: ad {} vs fd {fd}",
                g[i]
            );
        }
    }

    #[test]
    fn dual2_hessian_matches_finite_differences_of_gradient() {
        let x = [0.3, -1.2, 0.9];
        let y = expr(&dual2_seed(&x));
        let h = y.hess_slice().expect("depends on variables");
        let step = 1e-5;
        let grad_at = |x: &[f64; 3]| -> Vec<f64> {
            expr(&dual_seed(x)).grad_slice().unwrap().to_vec()
        };
        for i in 0..3 {
            for j in 0..=i {
                let mut xp = x;
                let mut xm = x;
                xp[j] += step;
                xm[j] -= step;
                let fd = (grad_at(&xp)[i] - grad_at(&xm)[i]) / (2.0 * step);
                let got = h[tri_index(i, j)];
                assert!(
                    (got - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                    "H[{i},{j}]: ad {got} vs fd {fd}"
                );
            }
        }
    }

    /// product-rule cross derivative of a polynomial oscillator right-hand
    /// side: d/dy of mu*(1-x^2)*y - x is mu*(1-x^2), so d2/dxdy = -2*mu*x
    #[test]
    fn cross_second_derivative_of_polynomial_rhs() {
        let mu = 1.0;
        let (xv, yv) = (1.3, 2.0);
        let v = dual2_seed(&[xv, yv]);
        let one_minus_x2 = v[0].mul_ref(&v[0]).scale(-1.0).add_f64(1.0);
        let f = one_minus_x2.mul_ref(&v[1]).scale(mu) - v[0].clone();
        let h = f.hess_slice().unwrap();
        assert!((h[tri_index(1, 0)] - (-2.0 * mu * xv)).abs() < 1e-14);
        assert!((h[tri_index(0, 0)] - (-2.0 * mu * yv)).abs() < 1e-14);
        assert!(h[tri_index(1, 1)].abs() < 1e-14);
    }

    #[test]
    fn tri_index_is_a_bijection() {
        let k = 9;
        let mut seen = vec![false; tri_len(k)];
        for i in 0..k {
            for j in 0..=i {
                let t = tri_index(i, j);
                assert!(!seen[t], "collision at ({i},{j})");
                seen[t] = true;
            }
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn probe_pattern_matches_actual_hessian_nonzeros() {
        // same expression probed structurally and evaluated numerically at a
        // generic point: the pair set must equal the nonzero set
        let x = [0.37, -1.21, 0.93];
        let num = expr(&dual2_seed(&x));
        let h = num.hess_slice().unwrap();
        let p = expr(&probe_seed(3));
        let pairs = p.pairs();
        for i in 0..3 {
            for j in 0..=i {
                let nz = h[tri_index(i, j)].abs() > 1e-12;
                let marked = pairs.contains(&(i, j));
                assert_eq!(
                    nz, marked,
                    "pair ({i},{j}): numeric {} vs structural {}",
                    h[tri_index(i, j)],
                    marked
                );
            }
        }
        // first-order dependencies likewise
        let g = num.grad_slice().unwrap();
        let deps = p.deps();
        for i in 0..3 {
            assert_eq!(g[i].abs() > 1e-12, deps.contains(&i), "dep {i}");
        }
    }

    #[test]
    fn linear_operations_create_no_pairs() {
        let v = probe_seed(4);
        let lin = v[0].add_ref(&v[1]).scale(2.0).sub_ref(&v[2]).add_f64(1.0)
            + v[3].clone().powi(1);
        assert!(lin.pairs().is_empty(), "linear combination has no curvature");
        assert_eq!(lin.deps(), vec![0, 1, 2, 3]);
        let sq = lin.clone().powi(2);
        assert_eq!(sq.pairs().len(), 10, "dense lower triangle over 4 vars");
    }

    #[test]
    fn division_marks_denominator_curvature() {
        let v = probe_seed(2);
        let q = v[0].div_ref(&v[1]);
        let pairs = q.pairs();
        assert!(pairs.contains(&(1, 1)), "1/x1 is curved in x1");
        assert!(pairs.contains(&(1, 0)), "cross term between x0 and x1");
        assert!(!pairs.contains(&(0, 0)), "numerator enters linearly");
    }

    /// polynomial with known coefficients: second derivatives are exact
    fn poly<S: Scalar>(x: &[S], c: &[f64; 10]) -> S {
        // c0 + c1 x + c2 y + c3 z + c4 x^2 + c5 xy + c6 xz + c7 y^2 + c8 yz + c9 z^2
        let (xx, yy, zz) = (&x[0], &x[1], &x[2]);
        S::from_f64(c[0])
            + xx.clone().scale(c[1])
            + yy.clone().scale(c[2])
            + zz.clone().scale(c[3])
            + xx.mul_ref(xx).scale(c[4])
            + xx.mul_ref(yy).scale(c[5])
            + xx.mul_ref(zz).scale(c[6])
            + yy.mul_ref(yy).scale(c[7])
            + yy.mul_ref(zz).scale(c[8])
            + zz.mul_ref(zz).scale(c[9])
    }

    proptest! {
        #[test]
        fn quadratic_hessians_are_exact(
            c in proptest::array::uniform10(-3.0f64..3.0),
            x in proptest::array::uniform3(-2.0f64..2.0),
        ) {
            let v = dual2_seed(&x);
            let y = poly(&v, &c);
            // analytic Hessian of the quadratic
            let want = [
                (0, 0, 2.0 * c[4]),
                (1, 0, c[5]),
                (2, 0, c[6]),
                (1, 1, 2.0 * c[7]),
                (2, 1, c[8]),
                (2, 2, 2.0 * c[9]),
            ];
            match y.hess_slice() {
                Some(h) => {
                    for (i, j, w) in want {
                        prop_assert!((h[tri_index(i, j)] - w).abs() < 1e-12,
                            "H[{}][{}] = {} want {}", i, j, h[tri_index(i, j)], w);
                    }
                }
                None => {
                    for (_, _, w) in want {
                        prop_assert!(w == 0.0);
                    }
                }
            }
            // gradient check at the point
            let g = y.grad_slice().map(|s| s.to_vec()).unwrap_or(vec![0.0; 3]);
            let gx = c[1] + 2.0 * c[4] * x[0] + c[5] * x[1] + c[6] * x[2];
            let gy = c[2] + c[5] * x[0] + 2.0 * c[7] * x[1] + c[8] * x[2];
            let gz = c[3] + c[6] * x[0] + c[8] * x[1] + 2.0 * c[9] * x[2];
            prop_assert!((g[0] - gx).abs() < 1e-12);
            prop_assert!((g[1] - gy).abs() < 1e-12);
            prop_assert!((g[2] - gz).abs() < 1e-12);
        }
    }
}
