//! Flipped Legendre-Gauss-Radau collocation schemes on the unit interval.
//!
//! A scheme of order parameter `m` places collocation nodes at the roots of
//! `(1 - t) * P_{m-1}^{(1,0)}(2t - 1)` on `(0, 1]`, so the right endpoint is
//! always a node. Together with the interpolation support point `t = 0`
//! (which carries the interval's initial state but is not collocated) this
//! yields the differentiation matrix and quadrature weights used by the
//! transcription and the fixed-step integrator.

use crate::linalg::LuFactor;

/// Nodes, quadrature weights and differentiation matrix for one interval,
/// everything expressed on [0, 1].
#[derive(Debug, Clone)]
pub struct CollocationScheme {
    /// number of collocation nodes
    pub m: usize,
    /// collocation nodes `c_1 <= ... <= c_m`, strictly inside (0, 1], `c_m == 1`
    pub nodes: Vec<f64>,
    /// interpolation support `[0, c_1, ..., c_m]`
    pub support: Vec<f64>,
    /// barycentric weights of `support`
    pub bary: Vec<f64>,
    /// quadrature weights `b_1..b_m` (positive, sum to 1)
    pub weights: Vec<f64>,
    /// differentiation matrix, row `j-1` maps values at `support` to the
    /// interpolant's derivative at `c_j`; flat `m x (m+1)`, row-major
    pub diff: Vec<f64>,
}

impl CollocationScheme {
    pub fn new(m: usize) -> Self {
        assert!(m >= 1, "a scheme needs at least one collocation node");
        let nodes = flipped_radau_nodes(m);
        let mut support = Vec::with_capacity(m + 1);
        support.push(0.0);
        support.extend_from_slice(&nodes);
        let bary = barycentric_weights(&support);
        let weights = quadrature_weights(&nodes);
        let diff = differentiation_matrix(&support, &bary);
        Self { m, nodes, support, bary, weights, diff }
    }

    /// Entry `D[j][k]` with `j` in `1..=m` (collocation node index) and `k`
    /// in `0..=m` (support index).
    #[inline]
    pub fn d(&self, j: usize, k: usize) -> f64 {
        debug_assert!((1..=self.m).contains(&j) && k <= self.m);
        self.diff[(j - 1) * (self.m + 1) + k]
    }
}

/// Evaluate the Jacobi polynomial `P_n^{(alpha,beta)}` at `x` by the
/// three-term recurrence.
fn jacobi(n: usize, alpha: f64, beta: f64, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut pm1 = 1.0;
    let mut p = (alpha + 1.0) + (alpha + beta + 2.0) * (x - 1.0) / 2.0;
    for k in 2..=n {
        let k = k as f64;
        let a = 2.0 * k * (k + alpha + beta) * (2.0 * k + alpha + beta - 2.0);
        let b = 2.0 * k + alpha + beta - 1.0;
        let c = (2.0 * k + alpha + beta) * (2.0 * k + alpha + beta - 2.0);
        let d = alpha * alpha - beta * beta;
        let e = 2.0 * (k + alpha - 1.0) * (k + beta - 1.0) * (2.0 * k + alpha + beta);
        let next = (b * (c * x + d) * p - e * pm1) / a;
        pm1 = p;
        p = next;
    }
    p
}

/// `d/dx P_n^{(alpha,beta)}(x)`
fn jacobi_deriv(n: usize, alpha: f64, beta: f64, x: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    0.5 * (n as f64 + alpha + beta + 1.0) * jacobi(n - 1, alpha + 1.0, beta + 1.0, x)
}

/// The `m` flipped Radau nodes on `(0, 1]`, ascending, last node exactly 1.
pub fn flipped_radau_nodes(m: usize) -> Vec<f64> {
    assert!(m >= 1, "need at least one node");
    let interior = m - 1; // roots of P_{m-1}^{(1,0)} on (-1, 1)
    let mut roots: Vec<f64> = Vec::with_capacity(interior);
    for k in 0..interior {
        // uniform-angle initial guess; deflation keeps the roots distinct
        let mut s = -(std::f64::consts::PI * (k as f64 + 1.0) / (interior as f64 + 1.0)).cos();
        for _ in 0..200 {
            let p = jacobi(interior, 1.0, 0.0, s);
            let dp = jacobi_deriv(interior, 1.0, 0.0, s);
            let mut deflate = 0.0;
            for &r in &roots {
                deflate += 1.0 / (s - r);
            }
            let denom = dp / p - deflate;
            let step = 1.0 / denom;
            s -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        debug_assert!(jacobi(interior, 1.0, 0.0, s).abs() < 1e-9);
        roots.push(s);
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut nodes: Vec<f64> = roots.iter().map(|s| (s + 1.0) / 2.0).collect();
    nodes.push(1.0);
    for w in nodes.windows(2) {
        assert!(w[0] < w[1], "collocation nodes must be strictly increasing");
    }
    assert!(nodes[0] > 0.0 && *nodes.last().unwrap() == 1.0);
    nodes
}

/// Shifted Legendre polynomial `P~_k` on [0, 1]:
/// `P~_0 = 1`, `P~_1 = 2t - 1`, `(k+1) P~_{k+1} = (2k+1)(2t-1) P~_k - k P~_{k-1}`.
pub fn shifted_legendre(k: usize, t: f64) -> f64 {
    let u = 2.0 * t - 1.0;
    match k {
        0 => 1.0,
        1 => u,
        _ => {
            let mut pm1 = 1.0;
            let mut p = u;
            for j in 1..k {
                let j = j as f64;
                let next = ((2.0 * j + 1.0) * u * p - j * pm1) / (j + 1.0);
                pm1 = p;
                p = next;
            }
            p
        }
    }
}

/// Quadrature weights for the given nodes: the unique weights that integrate
/// every polynomial of degree `< m` exactly over [0, 1]. The moment system is
/// assembled in the shifted Legendre basis, which stays well conditioned for
/// large `m` (monomial moments would be numerically singular long before the
/// node counts the spectral configuration uses).
pub fn quadrature_weights(nodes: &[f64]) -> Vec<f64> {
    let m = nodes.len();
    let mut a = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    // integral of P~_k over [0,1] is 1 for k = 0 and 0 otherwise
    rhs[0] = 1.0;
    for k in 0..m {
        for (j, &t) in nodes.iter().enumerate() {
            a[k * m + j] = shifted_legendre(k, t);
        }
    }
    let lu = LuFactor::factor(&a, m).expect("moment system is nonsingular for distinct nodes");
    lu.solve(&rhs).expect("dimensions match")
}

/// Barycentric weights `w_k = 1 / prod_{r != k} (t_k - t_r)`.
pub fn barycentric_weights(points: &[f64]) -> Vec<f64> {
    let n = points.len();
    let mut w = vec![1.0; n];
    for k in 0..n {
        for r in 0..n {
            if r != k {
                w[k] *= points[k] - points[r];
            }
        }
        w[k] = 1.0 / w[k];
    }
    w
}

/// Differentiation matrix of the Lagrange basis on `support`, evaluated at
/// `support[1..]` (the collocation nodes). Off-diagonal entries come from the
/// barycentric identity `D_jk = (w_k / w_j) / (t_j - t_k)`; the diagonal is
/// the negated row sum so constants differentiate to exactly zero.
fn differentiation_matrix(support: &[f64], bary: &[f64]) -> Vec<f64> {
    let n = support.len(); // m + 1
    let m = n - 1;
    let mut d = vec![0.0; m * n];
    for j in 1..n {
        let mut diag = 0.0;
        for k in 0..n {
            if k != j {
                let v = (bary[k] / bary[j]) / (support[j] - support[k]);
                d[(j - 1) * n + k] = v;
                diag -= v;
            }
        }
        d[(j - 1) * n + j] = diag;
    }
    d
}

/// Evaluate the Lagrange interpolant through `(points[i], values[i])` at `t`
/// using the barycentric form. Exact passthrough when `t` hits a point.
pub fn barycentric_eval(points: &[f64], bary: &[f64], values: &[f64], t: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..points.len() {
        let dt = t - points[i];
        if dt == 0.0 {
            return values[i];
        }
        let c = bary[i] / dt;
        num += c * values[i];
        den += c;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT6: f64 = 2.449489742783178;

    #[test]
    fn nodes_match_closed_forms() {
        let n1 = flipped_radau_nodes(1);
        assert_eq!(n1, vec![1.0]);

        let n2 = flipped_radau_nodes(2);
        assert!((n2[0] - 1.0 / 3.0).abs() < 1e-14, "m=2 interior node: {}", n2[0]);
        assert_eq!(n2[1], 1.0);

        let n3 = flipped_radau_nodes(3);
        assert!((n3[0] - (4.0 - SQRT6) / 10.0).abs() < 1e-14, "m=3 first node: {}", n3[0]);
        assert!((n3[1] - (4.0 + SQRT6) / 10.0).abs() < 1e-14, "m=3 second node: {}", n3[1]);
        assert_eq!(n3[2], 1.0);
        // decimal spot checks
        assert!((n3[0] - 0.1550510257216822).abs() < 1e-13);
        assert!((n3[1] - 0.6449489742783178).abs() < 1e-13);
    }

    #[test]
    fn weights_match_closed_forms() {
        let s = CollocationScheme::new(1);
        assert!((s.weights[0] - 1.0).abs() < 1e-15);

        let s = CollocationScheme::new(2);
        assert!((s.weights[0] - 0.75).abs() < 1e-14, "b1 = {}", s.weights[0]);
        assert!((s.weights[1] - 0.25).abs() < 1e-14, "b2 = {}", s.weights[1]);

        let s = CollocationScheme::new(3);
        let expect = [(16.0 - SQRT6) / 36.0, (16.0 + SQRT6) / 36.0, 1.0 / 9.0];
        for (w, e) in s.weights.iter().zip(expect) {
            assert!((w - e).abs() < 1e-14, "m=3 weights {:?}", s.weights);
        }
    }

    /// integral of t^k over [0,1] is 1/(k+1); the rule must hit it exactly
    /// for k <= 2m-2 and miss it for k = 2m-1 (sharpness).
    #[test]
    fn quadrature_exactness_is_sharp() {
        for m in 1..=8 {
            let s = CollocationScheme::new(m);
            for k in 0..=(2 * m - 2) {
                let q: f64 = s
                    .nodes
                    .iter()
                    .zip(&s.weights)
                    .map(|(t, w)| w * t.powi(k as i32))
                    .sum();
                let exact = 1.0 / (k as f64 + 1.0);
                assert!(
                    (q - exact).abs() < 1e-13,
                    "m={m} k={k}: quadrature {q} vs exact {exact}"
                );
            }
            // sharpness: the defect at degree 2m-1 is the rule's error
            // constant, which decays fast with m; only small m keep it
            // comfortably above roundoff
            if m <= 4 {
                let k = 2 * m - 1;
                let q: f64 = s
                    .nodes
                    .iter()
                    .zip(&s.weights)
                    .map(|(t, w)| w * t.powi(k as i32))
                    .sum();
                let exact = 1.0 / (k as f64 + 1.0);
                assert!(
                    (q - exact).abs() > 1e-8,
                    "m={m}: rule unexpectedly exact at degree {k}"
                );
            }
        }
    }

    /// Same exactness statement expressed in the shifted Legendre basis,
    /// which stays well scaled at large m: sum of w_i * P~_k(c_i) must be 0
    /// for 1 <= k <= 2m-2 (and 1 for k = 0).
    #[test]
    fn quadrature_exactness_large_m() {
        for &m in &[12usize, 40, 70] {
            let s = CollocationScheme::new(m);
            let total: f64 = s.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "m={m}: weights sum {total}");
            assert!(s.weights.iter().all(|w| *w > 0.0), "m={m}: weights positive");
            for k in 1..=(2 * m - 2) {
                let q: f64 = s
                    .nodes
                    .iter()
                    .zip(&s.weights)
                    .map(|(t, w)| w * shifted_legendre(k, *t))
                    .sum();
                assert!(q.abs() < 5e-12, "m={m} k={k}: defect {q}");
            }
        }
    }

    #[test]
    fn differentiation_is_exact_on_polynomials() {
        for m in 1..=10 {
            let s = CollocationScheme::new(m);
            // p(t) = t^d has derivative d t^(d-1); the interpolant of p on
            // m+1 support points reproduces p exactly for d <= m
            for d in 0..=m {
                for j in 1..=m {
                    let mut got = 0.0;
                    for k in 0..=m {
                        got += s.d(j, k) * s.support[k].powi(d as i32);
                    }
                    let want = if d == 0 {
                        0.0
                    } else {
                        d as f64 * s.nodes[j - 1].powi(d as i32 - 1)
                    };
                    assert!(
                        (got - want).abs() < 1e-10 * (1.0 + want.abs()),
                        "m={m} d={d} j={j}: got {got}, want {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn m1_is_implicit_euler() {
        let s = CollocationScheme::new(1);
        assert!((s.d(1, 0) + 1.0).abs() < 1e-15);
        assert!((s.d(1, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn barycentric_eval_interpolates_and_reconstructs() {
        let s = CollocationScheme::new(4);
        // values of sin on the support; interpolant should be ~1e-6 accurate
        let vals: Vec<f64> = s.support.iter().map(|t| t.sin()).collect();
        for (i, &t) in s.support.iter().enumerate() {
            assert_eq!(barycentric_eval(&s.support, &s.bary, &vals, t), vals[i]);
        }
        let mid = 0.41;
        let got = barycentric_eval(&s.support, &s.bary, &vals, mid);
        assert!((got - mid.sin()).abs() < 1e-6, "interp error {}", got - mid.sin());
    }

    #[test]
    fn spectral_node_count_is_supported() {
        let s = CollocationScheme::new(70);
        assert_eq!(s.nodes.len(), 70);
        assert_eq!(*s.nodes.last().unwrap(), 1.0);
        // all interior Jacobi roots resolved and distinct
        for w in s.nodes.windows(2) {
            assert!(w[1] - w[0] > 1e-6);
        }
    }
}
