//! Structural sparsity probe: a scalar that tracks *which* seeded variables
//! a result depends on and which variable pairs can carry second-derivative
//! information, without computing any numbers.
//!
//! Propagation rules are the conservative mirror of the dual arithmetic:
//! linear operations merge sets, a product adds the cross pairs of its
//! operands' dependency sets, and every nonlinear unary map (and the
//! reciprocal inside division) adds the full self-pairs of its operand.

use super::{tri_index, Scalar};
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone)]
struct Sets {
    k: usize,
    dep: Vec<u64>,
    pairs: Vec<u64>,
}

impl Sets {
    fn new(k: usize) -> Self {
        let dep = vec![0u64; k.div_ceil(64)];
        let pairs = vec![0u64; (k * (k + 1) / 2).div_ceil(64)];
        Self { k, dep, pairs }
    }

    #[inline]
    fn set_dep(&mut self, i: usize) {
        self.dep[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    fn set_pair(&mut self, i: usize, j: usize) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let b = tri_index(i, j);
        self.pairs[b / 64] |= 1 << (b % 64);
    }

    fn dep_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for i in 0..self.k {
            if self.dep[i / 64] >> (i % 64) & 1 == 1 {
                out.push(i);
            }
        }
        out
    }

    fn union(&mut self, o: &Sets) {
        debug_assert_eq!(self.k, o.k, "probes must share the seed space");
        for (a, b) in self.dep.iter_mut().zip(&o.dep) {
            *a |= b;
        }
        for (a, b) in self.pairs.iter_mut().zip(&o.pairs) {
            *a |= b;
        }
    }

    /// mark all pairs (i, j) with i from `da`, j from `db`
    fn mark_cross(&mut self, da: &[usize], db: &[usize]) {
        for &i in da {
            for &j in db {
                self.set_pair(i, j);
            }
        }
    }

    fn mark_self_pairs(&mut self) {
        let d = self.dep_indices();
        self.mark_cross(&d, &d);
    }
}

/// Structural stand-in scalar. Constants carry no sets.
#[derive(Debug, Clone)]
pub struct Probe {
    s: Option<Box<Sets>>,
}

impl Probe {
    pub fn constant() -> Self {
        Self { s: None }
    }

    pub fn var(i: usize, k: usize) -> Self {
        let mut sets = Sets::new(k);
        sets.set_dep(i);
        Self { s: Some(Box::new(sets)) }
    }

    /// sorted indices of variables the result depends on
    pub fn deps(&self) -> Vec<usize> {
        self.s.as_ref().map_or_else(Vec::new, |s| s.dep_indices())
    }

    /// sorted lower-triangle pairs (i, j), j <= i, that can carry curvature
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let Some(s) = self.s.as_ref() else { return Vec::new() };
        let mut out = Vec::new();
        for i in 0..s.k {
            for j in 0..=i {
                let b = tri_index(i, j);
                if s.pairs[b / 64] >> (b % 64) & 1 == 1 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    fn merge(mut self, rhs: Probe) -> Probe {
        match (self.s.as_deref_mut(), rhs.s) {
            (Some(a), Some(b)) => a.union(&b),
            (None, Some(b)) => self.s = Some(b),
            _ => {}
        }
        self
    }

    fn nonlinear(mut self) -> Probe {
        if let Some(s) = self.s.as_deref_mut() {
            s.mark_self_pairs();
        }
        self
    }
}

/// convenience: pairs of a probed scalar
pub fn pair_list(p: &Probe) -> Vec<(usize, usize)> {
    p.pairs()
}

impl Neg for Probe {
    type Output = Probe;
    fn neg(self) -> Probe {
        self
    }
}

impl Add for Probe {
    type Output = Probe;
    fn add(self, rhs: Probe) -> Probe {
        self.merge(rhs)
    }
}

impl Sub for Probe {
    type Output = Probe;
    fn sub(self, rhs: Probe) -> Probe {
        self.merge(rhs)
    }
}

impl Mul for Probe {
    type Output = Probe;
    fn mul(mut self, rhs: Probe) -> Probe {
        match (self.s.as_deref_mut(), rhs.s) {
            (Some(a), Some(b)) => {
                let da = a.dep_indices();
                let db = b.dep_indices();
                a.union(&b);
                a.mark_cross(&da, &db);
            }
            (None, Some(b)) => self.s = Some(b),
            _ => {}
        }
        self
    }
}

impl Div for Probe {
    type Output = Probe;
    fn div(self, rhs: Probe) -> Probe {
        // a / b = a * (1/b); the reciprocal is curved in b
        self * rhs.nonlinear()
    }
}

impl Scalar for Probe {
    const TRACKS_VALUE: bool = false;

    fn from_f64(_c: f64) -> Self {
        Probe::constant()
    }
    fn value(&self) -> f64 {
        0.0
    }
    fn all_finite(&self) -> bool {
        true
    }

    fn add_ref(&self, o: &Self) -> Self {
        self.clone() + o.clone()
    }
    fn sub_ref(&self, o: &Self) -> Self {
        self.clone() - o.clone()
    }
    fn mul_ref(&self, o: &Self) -> Self {
        self.clone() * o.clone()
    }
    fn div_ref(&self, o: &Self) -> Self {
        self.clone() / o.clone()
    }

    fn scale(self, _c: f64) -> Self {
        self
    }
    fn add_f64(self, _c: f64) -> Self {
        self
    }

    fn exp(self) -> Self {
        self.nonlinear()
    }
    fn sqrt(self) -> Self {
        self.nonlinear()
    }
    fn tanh(self) -> Self {
        self.nonlinear()
    }
    fn sin(self) -> Self {
        self.nonlinear()
    }
    fn cos(self) -> Self {
        self.nonlinear()
    }
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Probe::constant(),
            1 => self,
            _ => self.nonlinear(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::probe_seed;
    use super::*;

    #[test]
    fn product_marks_cross_pairs_only() {
        let v = probe_seed(3);
        let p = v[0].mul_ref(&v[1]);
        assert_eq!(p.deps(), vec![0, 1]);
        assert_eq!(p.pairs(), vec![(1, 0)]);
    }

    #[test]
    fn nonlinear_unary_marks_self_pairs() {
        let v = probe_seed(3);
        let p = (v[0].add_ref(&v[2])).exp();
        assert_eq!(p.pairs(), vec![(0, 0), (2, 0), (2, 2)]);
    }

    #[test]
    fn constants_stay_empty() {
        let c = Probe::constant().exp().powi(5).scale(2.0);
        assert!(c.deps().is_empty() && c.pairs().is_empty());
    }

    #[test]
    fn large_seed_spaces_round_trip() {
        // more than 64 variables exercises multi-word bitsets
        let k = 150;
        let v = probe_seed(k);
        let p = v[149].mul_ref(&v[64]).add_ref(&v[0]);
        assert_eq!(p.deps(), vec![0, 64, 149]);
        assert_eq!(p.pairs(), vec![(149, 64)]);
    }
}
