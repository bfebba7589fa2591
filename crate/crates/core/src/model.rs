//! Model abstraction: ODE right-hand sides whose parameters live in neural
//! or rational surrogate terms, written once and evaluated with any
//! [`Scalar`] implementation.
//!
//! A model exposes its computation as a two-stage composition: scalar
//! surrogates `nu_k = s_k(x_deps, w_k)` (each owning a slice of the
//! parameter vector) feed cheap outer algebra for the dynamics `f`, the
//! fitting integrand `L`, and optional path constraints. Declaring that
//! split lets derivative passes run per surrogate over only its active
//! variables instead of over the whole `(x, p)` space; models that do not
//! declare surrogates simply mark every parameter as directly used and are
//! differentiated monolithically through the same code path.

use crate::autodiff::Scalar;
use rand::Rng;
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    /// the trial point cannot be evaluated (guard tripped or non-finite
    /// intermediate); the solver treats this as "reject and backtrack"
    #[error("trial point rejected: {0}")]
    InvalidPoint(&'static str),
}

/// Per-node evaluation context: absolute time plus exogenous data values
/// sampled at that time (road inputs, measured targets, ...).
#[derive(Debug, Clone, Copy)]
pub struct NodeCtx<'a> {
    pub t: f64,
    pub data: &'a [f64],
}

impl<'a> NodeCtx<'a> {
    pub fn new(t: f64, data: &'a [f64]) -> Self {
        Self { t, data }
    }
}

/// One declared surrogate: which state components feed it and which slice of
/// the parameter vector it owns. Parameter slices of different surrogates
/// must not overlap.
#[derive(Debug, Clone)]
pub struct SurrogateSpec {
    pub state_deps: Vec<usize>,
    pub params: Range<usize>,
}

/// How a model's computation decomposes for derivative evaluation.
#[derive(Debug, Clone)]
pub struct ModelStructure {
    pub surrogates: Vec<SurrogateSpec>,
    /// parameter indices the outer stage reads directly (sorted)
    pub direct_params: Vec<usize>,
}

impl ModelStructure {
    /// no declared structure: everything is differentiated in one pass
    pub fn monolithic(d_p: usize) -> Self {
        Self { surrogates: Vec::new(), direct_params: (0..d_p).collect() }
    }

    pub fn validate(&self, d_x: usize, d_p: usize) {
        let mut owned = vec![false; d_p];
        for s in &self.surrogates {
            assert!(s.params.end <= d_p, "surrogate parameter slice out of range");
            for i in s.params.clone() {
                assert!(!owned[i], "parameter {i} owned by two surrogates");
                owned[i] = true;
            }
            for &d in &s.state_deps {
                assert!(d < d_x, "surrogate state dependency out of range");
            }
        }
        for &i in &self.direct_params {
            assert!(i < d_p, "direct parameter out of range");
            assert!(!owned[i], "parameter {i} both direct and surrogate-owned");
        }
    }
}

/// A dynamic model `dx/dt = f(x, p, t, data)` with fitting integrand `L`,
/// optional endpoint cost, boundary equality rows and path inequality rows.
///
/// `pd` always holds the directly-read parameters (in `direct_params`
/// order), `nu` the surrogate outputs in declaration order.
pub trait DynamicModel {
    fn dim_x(&self) -> usize;
    fn dim_p(&self) -> usize;
    /// width of the per-node exogenous data vector
    fn data_width(&self) -> usize {
        0
    }

    fn structure(&self) -> ModelStructure {
        ModelStructure::monolithic(self.dim_p())
    }

    /// surrogate `k`: `xa` = states selected by its `state_deps`, `w` = its
    /// parameter slice
    fn surrogate<S: Scalar>(&self, k: usize, xa: &[S], w: &[S]) -> Result<S, EvalError> {
        let _ = (k, xa, w);
        unreachable!("model declares no surrogates")
    }

    fn rhs<S: Scalar>(
        &self,
        x: &[S],
        pd: &[S],
        nu: &[S],
        ctx: &NodeCtx,
        out: &mut [S],
    ) -> Result<(), EvalError>;

    fn lagrange<S: Scalar>(
        &self,
        x: &[S],
        pd: &[S],
        nu: &[S],
        ctx: &NodeCtx,
    ) -> Result<S, EvalError> {
        let _ = (x, pd, nu, ctx);
        Ok(S::from_f64(0.0))
    }

    /// constraint rows enforced at every collocation node; admissible range
    /// per row comes from [`DynamicModel::path_bounds`]
    fn n_path(&self) -> usize {
        0
    }
    fn path<S: Scalar>(
        &self,
        x: &[S],
        pd: &[S],
        nu: &[S],
        ctx: &NodeCtx,
        out: &mut [S],
    ) -> Result<(), EvalError> {
        let _ = (x, pd, nu, ctx);
        debug_assert!(out.is_empty());
        Ok(())
    }
    /// `(lo, hi)` for path row `k`; equal entries make the row an equality.
    /// Default: one-sided `g <= 0`.
    fn path_bounds(&self, k: usize) -> (f64, f64) {
        let _ = k;
        (f64::NEG_INFINITY, 0.0)
    }

    /// rows `r(x(t0), x(tf), p)` enforced once per trajectory; range per row
    /// comes from [`DynamicModel::boundary_bounds`]
    fn n_boundary(&self) -> usize {
        0
    }
    fn boundary<S: Scalar>(
        &self,
        x0: &[S],
        xf: &[S],
        p: &[S],
        out: &mut [S],
    ) -> Result<(), EvalError> {
        let _ = (x0, xf, p);
        debug_assert!(out.is_empty());
        Ok(())
    }
    /// `(lo, hi)` for boundary row `k`. Default: equality `r = 0`.
    fn boundary_bounds(&self, k: usize) -> (f64, f64) {
        let _ = k;
        (0.0, 0.0)
    }

    /// endpoint cost added to the integrated fitting term
    fn mayer<S: Scalar>(&self, x0: &[S], xf: &[S], p: &[S]) -> Result<S, EvalError> {
        let _ = (x0, xf, p);
        Ok(S::from_f64(0.0))
    }

    /// extra output channels derived from a state (e.g. accelerations),
    /// reported by simulations and used as measured training targets
    fn n_observables(&self) -> usize {
        0
    }
    fn observable_names(&self) -> Vec<&'static str> {
        Vec::new()
    }
    fn observe(
        &self,
        x: &[f64],
        p: &[f64],
        ctx: &NodeCtx,
        out: &mut [f64],
    ) -> Result<(), EvalError> {
        let _ = (x, p, ctx);
        debug_assert!(out.is_empty());
        Ok(())
    }
}

/// Evaluate all surrogates of `st` at `(x, p)` into `nu`.
pub fn eval_surrogates<S: Scalar, M: DynamicModel>(
    model: &M,
    st: &ModelStructure,
    x: &[S],
    p: &[S],
    nu: &mut Vec<S>,
) -> Result<(), EvalError> {
    nu.clear();
    let mut xa: Vec<S> = Vec::new();
    for (k, s) in st.surrogates.iter().enumerate() {
        xa.clear();
        xa.extend(s.state_deps.iter().map(|&i| x[i].clone()));
        let w = &p[s.params.clone()];
        nu.push(model.surrogate(k, &xa, w)?);
    }
    Ok(())
}

/// Gather the directly-read parameters.
pub fn gather_direct<S: Scalar>(st: &ModelStructure, p: &[S], pd: &mut Vec<S>) {
    pd.clear();
    pd.extend(st.direct_params.iter().map(|&i| p[i].clone()));
}

/// Full right-hand side evaluation (surrogates then outer stage), for
/// callers that do not exploit the structure, e.g. the integrator.
pub fn eval_rhs<S: Scalar, M: DynamicModel>(
    model: &M,
    st: &ModelStructure,
    x: &[S],
    p: &[S],
    ctx: &NodeCtx,
    out: &mut [S],
) -> Result<(), EvalError> {
    let mut nu = Vec::with_capacity(st.surrogates.len());
    eval_surrogates(model, st, x, p, &mut nu)?;
    let mut pd = Vec::with_capacity(st.direct_params.len());
    gather_direct(st, p, &mut pd);
    model.rhs(x, &pd, &nu, ctx, out)
}

/// logistic activation, computed through tanh so huge pre-activations stay
/// finite in value and in every derivative order
pub fn sigmoid<S: Scalar>(x: S) -> S {
    x.scale(0.5).tanh().scale(0.5).add_f64(0.5)
}

/// smooth rectifier `(x + sqrt(x^2 + 1)) / 2`
pub fn squareplus<S: Scalar>(x: S) -> S {
    let root = x.mul_ref(&x).add_f64(1.0).sqrt();
    (x + root).scale(0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Squareplus,
}

impl Activation {
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Squareplus => squareplus(x),
        }
    }
}

/// Dense feed-forward network with one linear output. Parameters are packed
/// layer by layer, weights (row-major, output x input) before biases.
#[derive(Debug, Clone)]
pub struct FeedForwardNet {
    pub layers: Vec<usize>,
    pub activation: Activation,
}

impl FeedForwardNet {
    pub fn new(layers: &[usize], activation: Activation) -> Self {
        assert!(layers.len() >= 2, "need input and output layers");
        assert_eq!(*layers.last().unwrap(), 1, "single scalar output");
        Self { layers: layers.to_vec(), activation }
    }

    pub fn n_params(&self) -> usize {
        self.layers.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn forward<S: Scalar>(&self, input: &[S], w: &[S]) -> S {
        debug_assert_eq!(input.len(), self.layers[0]);
        debug_assert_eq!(w.len(), self.n_params());
        let mut h: Vec<S> = input.to_vec();
        let mut off = 0;
        let last = self.layers.len() - 2;
        for (l, pair) in self.layers.windows(2).enumerate() {
            let (n_in, n_out) = (pair[0], pair[1]);
            let mut next: Vec<S> = Vec::with_capacity(n_out);
            let bias_off = off + n_in * n_out;
            for o in 0..n_out {
                let mut acc = w[bias_off + o].clone();
                for (i, hi) in h.iter().enumerate() {
                    acc = acc + w[off + o * n_in + i].mul_ref(hi);
                }
                next.push(if l == last { acc } else { self.activation.apply(acc) });
            }
            h = next;
            off = bias_off + n_out;
        }
        let mut h = h;
        h.pop().expect("output layer has one neuron")
    }

    /// uniform init in [-a, a] with a = sqrt(6 / (fan_in + fan_out)),
    /// biases zero; weights drawn layer by layer in packing order
    pub fn init_weights<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.n_params());
        for pair in self.layers.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let a = (6.0 / (n_in + n_out) as f64).sqrt();
            for _ in 0..n_in * n_out {
                w.push(rng.gen_range(-a..a));
            }
            w.extend(std::iter::repeat(0.0).take(n_out));
        }
        w
    }
}

/// Rational function in the Chebyshev basis,
/// `R(s) = sum_k w[k] T_k(s~) / sum_k w[N+1+k] T_k(s~)`,
/// where `s~` is the input after an affine map onto [-1, 1]. The packed
/// parameters are numerator then denominator coefficients.
#[derive(Debug, Clone)]
pub struct RationalChebyshev {
    pub degree_num: usize,
    pub degree_den: usize,
    /// affine input map: `s~ = (s - center) / halfwidth`
    pub center: f64,
    pub halfwidth: f64,
}

/// denominator magnitudes below this reject the trial point
pub const RATIONAL_DEN_GUARD: f64 = 1e-8;

impl RationalChebyshev {
    pub fn new(degree_num: usize, degree_den: usize, center: f64, halfwidth: f64) -> Self {
        assert!(halfwidth > 0.0);
        Self { degree_num, degree_den, center, halfwidth }
    }

    pub fn n_params(&self) -> usize {
        self.degree_num + 1 + self.degree_den + 1
    }

    /// index of the denominator's constant coefficient inside the pack
    pub fn den_const_index(&self) -> usize {
        self.degree_num + 1
    }

    fn weighted_basis<S: Scalar>(s: &S, coeffs: &[S]) -> S {
        // Chebyshev three-term recurrence, accumulated on the fly
        let mut acc = coeffs[0].clone();
        if coeffs.len() == 1 {
            return acc;
        }
        let mut tm1 = S::from_f64(1.0);
        let mut t = s.clone();
        acc = acc + coeffs[1].mul_ref(&t);
        for c in &coeffs[2..] {
            let next = s.mul_ref(&t).scale(2.0) - tm1;
            acc = acc + c.mul_ref(&next);
            tm1 = t;
            t = next;
        }
        acc
    }

    pub fn eval<S: Scalar>(&self, s_raw: &S, w: &[S]) -> Result<S, EvalError> {
        debug_assert_eq!(w.len(), self.n_params());
        let s = s_raw.clone().add_f64(-self.center).scale(1.0 / self.halfwidth);
        let num = Self::weighted_basis(&s, &w[..=self.degree_num]);
        let den = Self::weighted_basis(&s, &w[self.degree_num + 1..]);
        if S::TRACKS_VALUE && den.value().abs() < RATIONAL_DEN_GUARD {
            return Err(EvalError::InvalidPoint("rational denominator vanished"));
        }
        Ok(num.div_ref(&den))
    }

    /// numerator value alone (used by zero-output equality rows, which stay
    /// linear in the coefficients this way)
    pub fn numerator<S: Scalar>(&self, s_raw: &S, w: &[S]) -> S {
        let s = s_raw.clone().add_f64(-self.center).scale(1.0 / self.halfwidth);
        Self::weighted_basis(&s, &w[..=self.degree_num])
    }

    /// small random coefficients, denominator constant term exactly 1
    pub fn init_coeffs<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.n_params());
        for _ in 0..=self.degree_num {
            w.push(rng.gen_range(-0.1..0.1));
        }
        w.push(1.0);
        for _ in 1..=self.degree_den {
            w.push(rng.gen_range(-0.01..0.01));
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{dual2_seed, dual_seed, probe_seed, tri_index};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn squareplus_value_and_derivatives() {
        // value at 0 is 1/2; slope is (1 + x/sqrt(1+x^2))/2;
        // curvature is 1 / (2 (1+x^2)^(3/2))
        assert!((squareplus(0.0_f64) - 0.5).abs() < 1e-15);
        for &xv in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let x = dual2_seed(&[xv]);
            let y = squareplus(x[0].clone());
            let root = (1.0 + xv * xv).sqrt();
            let want_v = (xv + root) / 2.0;
            let want_d1 = (1.0 + xv / root) / 2.0;
            let want_d2 = 0.5 / ((1.0 + xv * xv) * root);
            assert!((y.value() - want_v).abs() < 1e-14);
            assert!((y.grad(0) - want_d1).abs() < 1e-14, "slope at {xv}");
            assert!((y.hess(0, 0) - want_d2).abs() < 1e-13, "curvature at {xv}");
        }
        // positive, monotone, asymptotically linear
        assert!(squareplus(-40.0_f64) > 0.0);
        assert!((squareplus(40.0_f64) - 40.0).abs() < 0.01);
    }

    #[test]
    fn squareplus_shift_identity() {
        // squareplus(x) - squareplus(-x) = x for all x
        for &xv in &[-25.0, -1.3, 0.0, 0.2, 4.0, 30.0] {
            let diff = squareplus(xv) - squareplus(-xv);
            assert!((diff - xv).abs() < 1e-12 * (1.0 + xv.abs()), "identity at {xv}");
        }
    }

    #[test]
    fn sigmoid_value_and_slope() {
        assert!((sigmoid(0.0_f64) - 0.5).abs() < 1e-15);
        let x = dual_seed(&[0.0]);
        assert!((sigmoid(x[0].clone()).grad(0) - 0.25).abs() < 1e-15);
        // matches the exp form away from overflow, stays finite beyond it
        for &xv in &[-20.0, -3.0, 0.7, 15.0] {
            let direct = 1.0 / (1.0 + (-xv as f64).exp());
            assert!((sigmoid(xv) - direct).abs() < 1e-12);
        }
        let far = dual2_seed(&[800.0]);
        let y = sigmoid(far[0].clone());
        assert!(y.all_finite(), "saturated sigmoid keeps finite derivatives");
        assert!((y.value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn net_parameter_counts() {
        let a = FeedForwardNet::new(&[1, 5, 5, 1], Activation::Squareplus);
        assert_eq!(a.n_params(), 46);
        let b = FeedForwardNet::new(&[2, 5, 5, 1], Activation::Sigmoid);
        assert_eq!(b.n_params(), 51);
    }

    #[test]
    fn net_forward_matches_hand_computation() {
        // tiny 1-2-1 net with hand-picked weights
        let net = FeedForwardNet::new(&[1, 2, 1], Activation::Sigmoid);
        assert_eq!(net.n_params(), 7);
        // layer 0: W = [0.5; -1.0], b = [0.1, 0.2]; layer 1: W = [2.0, -3.0], b = [0.05]
        let w = [0.5, -1.0, 0.1, 0.2, 2.0, -3.0, 0.05];
        let xv = 0.8;
        let h1 = 1.0 / (1.0 + (-(0.5 * xv + 0.1) as f64).exp());
        let h2 = 1.0 / (1.0 + (-(-1.0 * xv + 0.2) as f64).exp());
        let want = 2.0 * h1 - 3.0 * h2 + 0.05;
        let got = net.forward(&[xv], &w);
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }

    #[test]
    fn net_degenerate_and_zero_cases() {
        // single affine layer: output = w*x + b, gradient picks the weight
        let affine = FeedForwardNet::new(&[1, 1], Activation::Sigmoid);
        assert_eq!(affine.n_params(), 2);
        let seeds = dual_seed(&[1.7, -0.4, 0.3]);
        let out = affine.forward(&seeds[..1], &seeds[1..]);
        assert!((out.value() - (-0.4 * 1.7 + 0.3)).abs() < 1e-15);
        assert!((out.grad(0) - -0.4).abs() < 1e-15, "d/dx = weight");
        assert!((out.grad(1) - 1.7).abs() < 1e-15, "d/dw = input");
        assert!((out.grad(2) - 1.0).abs() < 1e-15, "d/db = 1");
        // all-zero weights: output is identically zero whatever the input
        let net = FeedForwardNet::new(&[2, 5, 5, 1], Activation::Sigmoid);
        let zeros = vec![0.0; net.n_params()];
        for &xv in &[-4.0, 0.0, 9.2] {
            let y: f64 = net.forward(&[xv, -xv], &zeros);
            assert_eq!(y, 0.0, "zero-weight net must output exactly 0");
        }
    }

    #[test]
    fn net_init_is_seeded_and_bounded() {
        let net = FeedForwardNet::new(&[2, 5, 5, 1], Activation::Sigmoid);
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let w1 = net.init_weights(&mut r1);
        let w2 = net.init_weights(&mut r2);
        assert_eq!(w1, w2, "same seed, same weights");
        let mut r3 = ChaCha8Rng::seed_from_u64(8);
        assert_ne!(w1, net.init_weights(&mut r3), "different seed differs");
        // biases of the first layer are exactly zero
        assert!(w1[10..15].iter().all(|b| *b == 0.0));
        let a0 = (6.0 / 7.0_f64).sqrt();
        assert!(w1[..10].iter().all(|x| x.abs() <= a0));
    }

    #[test]
    fn net_probe_pattern_equals_numeric_nonzeros() {
        let net = FeedForwardNet::new(&[2, 3, 1], Activation::Squareplus);
        let k = 2 + net.n_params();
        let mut vals = vec![0.37, -0.9];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        vals.extend(net.init_weights(&mut rng));
        // perturb biases away from zero so no accidental zero derivatives
        for v in vals.iter_mut() {
            if *v == 0.0 {
                *v = 0.123;
            }
        }
        let d = dual2_seed(&vals);
        let num = net.forward(&d[..2], &d[2..]);
        let h = num.hess_slice().unwrap();
        let p = probe_seed(k);
        let pat = net.forward(&p[..2], &p[2..]);
        let pairs = pat.pairs();
        for i in 0..k {
            for j in 0..=i {
                let nz = h[tri_index(i, j)].abs() > 1e-13;
                let marked = pairs.contains(&(i, j));
                // structure must cover every numeric nonzero
                assert!(
                    marked || !nz,
                    "numeric nonzero not covered at ({i},{j}): {}",
                    h[tri_index(i, j)]
                );
            }
        }
        // and the final bias is provably linear: no pairs may touch it
        let out_bias = k - 1;
        assert!(pairs.iter().all(|&(i, j)| i != out_bias && j != out_bias));
    }

    #[test]
    fn rational_reproduces_chebyshev_basis() {
        let r = RationalChebyshev::new(7, 7, 0.0, 1.0);
        assert_eq!(r.n_params(), 16);
        // numerator = T_3, denominator = 1
        let mut w = vec![0.0; 16];
        w[3] = 1.0;
        w[r.den_const_index()] = 1.0;
        for &s in &[-0.9, -0.3, 0.2, 0.77] {
            let got = r.eval(&s, &w).unwrap();
            let want = (3.0 * s.acos()).cos();
            assert!((got - want).abs() < 1e-12, "T_3({s}) = {want}, got {got}");
        }
    }

    #[test]
    fn rational_constant_and_identity() {
        // num = T_0, den = T_0: the constant function 1
        let r = RationalChebyshev::new(7, 7, 0.0, 1.0);
        let mut w = vec![0.0; 16];
        w[0] = 1.0;
        w[r.den_const_index()] = 1.0;
        for &s in &[-1.0, 0.0, 0.6] {
            assert_eq!(r.eval(&s, &w).unwrap(), 1.0);
        }
        // degree 1/1, num = T_1, den = T_0: the identity map on [-1, 1]
        let id = RationalChebyshev::new(1, 1, 0.0, 1.0);
        let w = [0.0, 1.0, 1.0, 0.0];
        for &s in &[-0.8, 0.1, 0.9] {
            assert!((id.eval(&s, &w).unwrap() - s).abs() < 1e-15);
        }
    }

    #[test]
    fn rational_guard_rejects_vanishing_denominator() {
        let r = RationalChebyshev::new(2, 2, 0.0, 1.0);
        let mut w = vec![0.0; 6];
        w[0] = 1.0; // numerator = 1
        w[3] = 0.0; // denominator = 0 + 1*T_1 = s
        w[4] = 1.0;
        assert!(r.eval(&0.0, &w).is_err(), "den = s vanishes at 0");
        assert!(r.eval(&0.5, &w).is_ok());
        // the probe path must not consult values
        let p = probe_seed(6 + 1);
        let out = r.eval(&p[0], &p[1..]);
        assert!(out.is_ok(), "structural pass ignores numeric guards");
    }

    #[test]
    fn rational_init_fixes_denominator_constant() {
        let r = RationalChebyshev::new(7, 7, 0.1, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = r.init_coeffs(&mut rng);
        assert_eq!(w.len(), 16);
        assert_eq!(w[r.den_const_index()], 1.0);
    }

    #[test]
    fn structure_validation_catches_overlap() {
        let st = ModelStructure {
            surrogates: vec![
                SurrogateSpec { state_deps: vec![0], params: 0..4 },
                SurrogateSpec { state_deps: vec![1], params: 4..8 },
            ],
            direct_params: vec![8],
        };
        st.validate(2, 9);
        let bad = ModelStructure {
            surrogates: vec![
                SurrogateSpec { state_deps: vec![0], params: 0..4 },
                SurrogateSpec { state_deps: vec![1], params: 3..8 },
            ],
            direct_params: vec![],
        };
        let res = std::panic::catch_unwind(|| bad.validate(2, 8));
        assert!(res.is_err(), "overlapping parameter slices must be rejected");
    }
}
