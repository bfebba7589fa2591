//! Interior-point solver for sparse nonlinear programs.
//!
//! The solver consumes problems through the object-safe [`Nlp`] trait:
//! sizes, bounds, coordinate sparsity, and plain-`f64` evaluation callbacks.
//! Duplicate coordinates in the patterns are allowed and accumulate, so
//! producers can emit entries in generation order.

use thiserror::Error;

/// Evaluation failure at a trial point. The solver reacts by shortening the
/// step, never by aborting outright.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("callback failed{}: {what}", match node { Some((i, j)) => format!(" at node ({i},{j})"), None => String::new() })]
pub struct CallbackError {
    /// collocation node (interval, stage) that failed, when known
    pub node: Option<(usize, usize)>,
    pub what: &'static str,
}

impl CallbackError {
    pub fn new(what: &'static str) -> Self {
        Self { node: None, what }
    }
    pub fn at(node: (usize, usize), what: &'static str) -> Self {
        Self { node: Some(node), what }
    }
}

/// Elimination-order hint for the KKT factorization: `order[new] = old`
/// over the stacked index space `[variables, then constraints]`, with the
/// final `n - border_start` positions forming a dense border.
#[derive(Debug, Clone)]
pub struct KktOrder {
    pub order: Vec<u32>,
    pub border_start: usize,
}

/// A sparse NLP: minimize `f(z)` subject to `c_lo <= c(z) <= c_hi` and
/// `z_lo <= z <= z_hi`. Rows with `c_lo == c_hi` are equalities.
pub trait Nlp {
    fn n_var(&self) -> usize;
    fn n_con(&self) -> usize;

    fn var_bounds(&self, i: usize) -> (f64, f64) {
        let _ = i;
        (f64::NEG_INFINITY, f64::INFINITY)
    }
    fn con_bounds(&self, r: usize) -> (f64, f64);

    /// coordinate Jacobian pattern `(rows, cols)`; duplicates accumulate
    fn jac_pattern(&self) -> (&[u32], &[u32]);
    /// coordinate lower-triangle Hessian pattern `(rows, cols)`, `row >= col`
    fn hess_pattern(&self) -> (&[u32], &[u32]);

    /// objective value and constraint values
    fn eval_fc(&self, z: &[f64], c: &mut [f64]) -> Result<f64, CallbackError>;

    /// objective gradient, Jacobian values, and the Hessian values of
    /// `obj_scale * f + sum_r lam[r] * c_r` (gradient is of `f` alone)
    fn eval_derivs(
        &self,
        z: &[f64],
        obj_scale: f64,
        lam: &[f64],
        grad: &mut [f64],
        jac: &mut [f64],
        hess: &mut [f64],
    ) -> Result<(), CallbackError>;

    fn kkt_order(&self) -> Option<KktOrder> {
        None
    }
}

// ---------------------------------------------------------------------------
// KKT linear system
// ---------------------------------------------------------------------------

use crate::linalg::{DenseLdl, Inertia, LinalgError, SkylineLdl};
use std::time::Instant;

/// Below this KKT dimension a dense factorization beats the envelope path.
pub const DENSE_KKT_LIMIT: usize = 500;

enum Backend {
    Dense {
        a: Vec<f64>,
        fac: Option<DenseLdl>,
    },
    Skyline {
        /// assembled values, kept for residual mat-vecs after the in-place factor
        asm: Vec<f64>,
        fac: SkylineLdl,
    },
}

/// Factorization of the symmetric indefinite system
/// `[[W + D_v, J^T], [J, D_c]]` over `[variables, constraint rows]`.
///
/// Entry slots are precomputed from the problem patterns, so each iteration
/// is a scatter plus a numeric factorization. When the problem supplies a
/// bandwidth-reducing order it is applied symmetrically; duplicates in the
/// patterns accumulate.
pub struct KktSolver {
    n_var: usize,
    n_con: usize,
    /// `perm[old] = new` over `[variables, constraint rows]`
    perm: Vec<usize>,
    hess_slots: Vec<usize>,
    jac_slots: Vec<usize>,
    /// slots of the `n_var + n_con` diagonal entries, original order
    diag_slots: Vec<usize>,
    backend: Backend,
}

impl KktSolver {
    pub fn new(nlp: &dyn Nlp) -> Self {
        let n_var = nlp.n_var();
        let n_con = nlp.n_con();
        let n = n_var + n_con;
        let perm: Vec<usize> = match nlp.kkt_order() {
            Some(k) => {
                assert_eq!(k.order.len(), n, "KKT order must cover variables and rows");
                let mut p = vec![usize::MAX; n];
                for (new, &old) in k.order.iter().enumerate() {
                    p[old as usize] = new;
                }
                p
            }
            None => (0..n).collect(),
        };
        // permuted lower-triangle coordinates of every stored entry
        let (hr, hc) = nlp.hess_pattern();
        let (jr, jc) = nlp.jac_pattern();
        let tri = |a: usize, b: usize| if a >= b { (a, b) } else { (b, a) };
        let h_coords: Vec<(usize, usize)> = hr
            .iter()
            .zip(hc)
            .map(|(&r, &c)| tri(perm[r as usize], perm[c as usize]))
            .collect();
        let j_coords: Vec<(usize, usize)> = jr
            .iter()
            .zip(jc)
            .map(|(&r, &c)| tri(perm[n_var + r as usize], perm[c as usize]))
            .collect();
        let d_coords: Vec<(usize, usize)> = (0..n).map(|i| (perm[i], perm[i])).collect();

        if n < DENSE_KKT_LIMIT {
            let slot = |&(i, j): &(usize, usize)| i * n + j;
            KktSolver {
                n_var,
                n_con,
                perm,
                hess_slots: h_coords.iter().map(slot).collect(),
                jac_slots: j_coords.iter().map(slot).collect(),
                diag_slots: d_coords.iter().map(slot).collect(),
                backend: Backend::Dense {
                    a: vec![0.0; n * n],
                    fac: None,
                },
            }
        } else {
            let mut first: Vec<usize> = (0..n).collect();
            for &(i, j) in h_coords.iter().chain(&j_coords) {
                if j < first[i] {
                    first[i] = j;
                }
            }
            let fac = SkylineLdl::symbolic(first);
            let hess_slots = h_coords.iter().map(|&(i, j)| fac.slot(i, j)).collect();
            let jac_slots = j_coords.iter().map(|&(i, j)| fac.slot(i, j)).collect();
            let diag_slots = d_coords.iter().map(|&(i, j)| fac.slot(i, j)).collect();
            let asm = vec![0.0; fac.envelope_len()];
            KktSolver {
                n_var,
                n_con,
                perm,
                hess_slots,
                jac_slots,
                diag_slots,
                backend: Backend::Skyline { asm, fac },
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.n_var + self.n_con
    }

    /// Assemble from the callback values plus the two diagonal augmentations
    /// (`var_diag` on the variable block, `con_diag` on the row block) and
    /// factor. Returns the inertia; `zero > 0` marks a failed factorization.
    pub fn factor(
        &mut self,
        hess: &[f64],
        jac: &[f64],
        var_diag: &[f64],
        con_diag: &[f64],
    ) -> Inertia {
        assert_eq!(hess.len(), self.hess_slots.len(), "Hessian value count");
        assert_eq!(jac.len(), self.jac_slots.len(), "Jacobian value count");
        assert_eq!(var_diag.len(), self.n_var, "variable diagonal length");
        assert_eq!(con_diag.len(), self.n_con, "row diagonal length");
        let n = self.n_var + self.n_con;
        let vals: &mut [f64] = match &mut self.backend {
            Backend::Dense { a, .. } => a,
            Backend::Skyline { asm, .. } => asm,
        };
        vals.fill(0.0);
        for (&s, &v) in self.hess_slots.iter().zip(hess) {
            vals[s] += v;
        }
        for (&s, &v) in self.jac_slots.iter().zip(jac) {
            vals[s] += v;
        }
        for (i, &v) in var_diag.iter().enumerate() {
            vals[self.diag_slots[i]] += v;
        }
        for (r, &v) in con_diag.iter().enumerate() {
            vals[self.diag_slots[self.n_var + r]] += v;
        }
        match &mut self.backend {
            Backend::Dense { a, fac } => match DenseLdl::factor(a, n) {
                Ok(f) => {
                    let inertia = f.inertia;
                    *fac = Some(f);
                    inertia
                }
                Err(_) => {
                    *fac = None;
                    Inertia {
                        pos: 0,
                        neg: 0,
                        zero: n,
                    }
                }
            },
            Backend::Skyline { asm, fac } => {
                fac.values_mut().copy_from_slice(asm);
                fac.factor()
            }
        }
    }

    /// Solve `K x = b` in the original ordering, overwriting `b`.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<(), LinalgError> {
        let n = self.dim();
        assert_eq!(b.len(), n, "right-hand side length");
        let mut pb = vec![0.0; n];
        for (i, &bi) in b.iter().enumerate() {
            pb[self.perm[i]] = bi;
        }
        match &self.backend {
            Backend::Dense { fac, .. } => fac
                .as_ref()
                .ok_or(LinalgError::Singular(0))?
                .solve_in_place(&mut pb)?,
            Backend::Skyline { fac, .. } => fac.solve_in_place(&mut pb)?,
        }
        for (i, bi) in b.iter_mut().enumerate() {
            *bi = pb[self.perm[i]];
        }
        Ok(())
    }

    /// `y += scale * K x` in the original ordering, from the assembled
    /// (unfactored) values of the last [`factor`](KktSolver::factor) call.
    pub fn mat_vec_accum(&self, x: &[f64], y: &mut [f64], scale: f64) {
        let n = self.dim();
        assert_eq!(x.len(), n, "input length");
        assert_eq!(y.len(), n, "output length");
        let mut px = vec![0.0; n];
        for (i, &xi) in x.iter().enumerate() {
            px[self.perm[i]] = xi;
        }
        let mut py = vec![0.0; n];
        match &self.backend {
            Backend::Dense { a, .. } => {
                for i in 0..n {
                    let row = &a[i * n..i * n + i + 1];
                    let mut acc = row[i] * px[i];
                    for j in 0..i {
                        acc += row[j] * px[j];
                        py[j] += row[j] * px[i];
                    }
                    py[i] += acc;
                }
            }
            Backend::Skyline { asm, fac } => fac.mat_vec_accum(asm, &px, &mut py),
        }
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += scale * py[self.perm[i]];
        }
    }
}

// ---------------------------------------------------------------------------
// Interior-point method
// ---------------------------------------------------------------------------

/// Options for [`solve`].
#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// scaled KKT error target
    pub tol: f64,
    /// absolute constraint-violation target
    pub con_tol: f64,
    pub mu_init: f64,
    /// declare [`SolveStatus::Acceptable`] when the relative objective
    /// improvement over this many iterations falls below `early_stop_rel`
    /// while feasible; `0` disables the early stop
    pub early_stop_window: usize,
    pub early_stop_rel: f64,
    /// one stderr line per iteration
    pub print: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 200,
            tol: 1e-7,
            con_tol: 1e-8,
            mu_init: 0.1,
            early_stop_window: 15,
            early_stop_rel: 1e-6,
            print: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// KKT error below `tol` and constraint violation below `con_tol`
    Optimal,
    /// feasible but stalled: early stop or line-search breakdown
    Acceptable,
    MaxIter,
    /// no acceptable step from an infeasible point, or the KKT matrix could
    /// not be repaired
    Infeasible,
    /// the problem functions failed at the accepted iterate
    EvalFailure,
}

impl SolveStatus {
    pub fn converged(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Acceptable)
    }
}

/// One row of the iteration log.
#[derive(Debug, Clone)]
pub struct IterRow {
    pub iter: usize,
    pub objective: f64,
    pub inf_pr: f64,
    pub inf_du: f64,
    pub mu: f64,
    /// primal step actually taken in the previous iteration
    pub alpha_pr: f64,
    pub alpha_du: f64,
    /// inertia-correction shift used in the previous iteration
    pub delta_w: f64,
}

/// Wall-clock split between problem callbacks and solver-internal work.
#[derive(Debug, Clone, Copy, Default)]
pub struct Timing {
    pub total: f64,
    pub callbacks: f64,
    pub solver_core: f64,
}

/// Result of [`solve`].
#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    pub z: Vec<f64>,
    /// constraint multipliers
    pub lam: Vec<f64>,
    pub objective: f64,
    pub inf_pr: f64,
    pub inf_du: f64,
    pub iterations: usize,
    pub log: Vec<IterRow>,
    pub timing: Timing,
}

impl Solution {
    pub fn write_iteration_csv(&self, path: &std::path::Path) -> std::io::Result<()> {
        use std::io::Write as _;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "iter,objective,inf_pr,inf_du,mu,alpha_pr,alpha_du,delta_w")?;
        for r in &self.log {
            writeln!(
                f,
                "{},{:.16e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
                r.iter, r.objective, r.inf_pr, r.inf_du, r.mu, r.alpha_pr, r.alpha_du, r.delta_w
            )?;
        }
        f.flush()
    }
}

const TAU: f64 = 0.99; // fraction-to-boundary
const KAPPA_EPS: f64 = 10.0; // barrier tightened once E(mu) <= KAPPA_EPS * mu
const KAPPA_SIGMA: f64 = 1e10; // bound-dual clipping box
const GAMMA_THETA: f64 = 1e-5; // filter margins
const GAMMA_PHI: f64 = 1e-5;
const S_PHI: f64 = 2.3; // switching-condition exponents
const S_THETA: f64 = 1.1;
const DELTA_SW: f64 = 1.0;
const ETA_PHI: f64 = 1e-8; // Armijo factor
const DELTA_C: f64 = 1e-8; // equality-row regularization scale, shrinks as mu^0.25
const S_MAX: f64 = 100.0; // residual scaling cap
const ALPHA_MIN: f64 = 1e-12; // line-search breakdown
const P_SOC_MAX: usize = 4; // second-order correction rounds per iteration
const KAPPA_SOC: f64 = 0.99; // required violation decrease between rounds
const DELTA_W0: f64 = 1e-4; // inertia-correction schedule
const DELTA_W_MIN: f64 = 1e-20;
const DELTA_W_MAX: f64 = 1e40;

fn timed<T>(acc: &mut f64, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    *acc += t.elapsed().as_secs_f64();
    out
}

/// distance of `x` outside `[lo, hi]`
fn range_violation(x: f64, lo: f64, hi: f64) -> f64 {
    (lo - x).max(x - hi).max(0.0)
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |a, &v| a.max(v.abs()))
}

/// move `x` strictly inside `[lo, hi]`
fn push_interior(x: &mut f64, lo: f64, hi: f64) {
    const KAPPA_1: f64 = 1e-2;
    match (lo.is_finite(), hi.is_finite()) {
        (false, false) => {}
        (true, false) => {
            let pad = KAPPA_1 * lo.abs().max(1.0);
            if *x < lo + pad {
                *x = lo + pad;
            }
        }
        (false, true) => {
            let pad = KAPPA_1 * hi.abs().max(1.0);
            if *x > hi - pad {
                *x = hi - pad;
            }
        }
        (true, true) => {
            let pad = KAPPA_1 * (hi - lo);
            *x = x.clamp(lo + pad, hi - pad);
        }
    }
}

/// slack-equality infeasibility: rows measured against their bound (equality)
/// or their slack (inequality)
fn slack_theta(c: &[f64], con_lo: &[f64], slack_of_row: &[usize], v: &[f64], n_var: usize) -> f64 {
    let mut th = 0.0f64;
    for r in 0..c.len() {
        th = th.max(row_residual(c, v, con_lo, slack_of_row, n_var, r).abs());
    }
    th
}

/// signed residual of one row against its bound (equality) or slack (inequality)
#[inline]
fn row_residual(
    c: &[f64],
    v: &[f64],
    con_lo: &[f64],
    slack_of_row: &[usize],
    n_var: usize,
    r: usize,
) -> f64 {
    if slack_of_row[r] == usize::MAX {
        c[r] - con_lo[r]
    } else {
        c[r] - v[n_var + slack_of_row[r]]
    }
}

/// expand a condensed KKT solution into the full item direction: variables
/// straight from the solution, slacks recovered from their eliminated rows
fn expand_slack_steps(
    step: &[f64],
    n_var: usize,
    ineq_rows: &[usize],
    lam: &[f64],
    rtilde_s: &[f64],
    sigma: &[f64],
    dv: &mut [f64],
) {
    dv[..n_var].copy_from_slice(&step[..n_var]);
    for (k, &r) in ineq_rows.iter().enumerate() {
        let t = n_var + k;
        dv[t] = (step[n_var + r] + lam[r] + rtilde_s[t]) / sigma[t];
    }
}

/// bound-dual directions implied by an item direction
fn expand_bound_dual_steps(
    v: &[f64],
    dv: &[f64],
    lo: &[f64],
    hi: &[f64],
    zl: &[f64],
    zu: &[f64],
    mu: f64,
    dzl: &mut [f64],
    dzu: &mut [f64],
) {
    for t in 0..v.len() {
        dzl[t] = if lo[t].is_finite() {
            let gap = v[t] - lo[t];
            mu / gap - zl[t] - zl[t] / gap * dv[t]
        } else {
            0.0
        };
        dzu[t] = if hi[t].is_finite() {
            let gap = hi[t] - v[t];
            mu / gap - zu[t] + zu[t] / gap * dv[t]
        } else {
            0.0
        };
    }
}

/// largest step along `dv` keeping every bounded item a `TAU` fraction inside
fn boundary_cap(v: &[f64], dv: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut a = 1.0f64;
    for t in 0..v.len() {
        if dv[t] < 0.0 && lo[t].is_finite() {
            a = a.min(TAU * (v[t] - lo[t]) / -dv[t]);
        }
        if dv[t] > 0.0 && hi[t].is_finite() {
            a = a.min(TAU * (hi[t] - v[t]) / dv[t]);
        }
    }
    a
}

/// largest dual step keeping the bound multipliers positive
fn dual_cap(zl: &[f64], zu: &[f64], dzl: &[f64], dzu: &[f64]) -> f64 {
    let mut a = 1.0f64;
    for t in 0..zl.len() {
        if dzl[t] < 0.0 && zl[t] > 0.0 {
            a = a.min(TAU * zl[t] / -dzl[t]);
        }
        if dzu[t] < 0.0 && zu[t] > 0.0 {
            a = a.min(TAU * zu[t] / -dzu[t]);
        }
    }
    a
}

/// barrier objective over all bounded items
fn barrier_phi(obj: f64, v: &[f64], lo: &[f64], hi: &[f64], mu: f64) -> f64 {
    let mut phi = obj;
    for t in 0..v.len() {
        if lo[t].is_finite() {
            phi -= mu * (v[t] - lo[t]).ln();
        }
        if hi[t].is_finite() {
            phi -= mu * (hi[t] - v[t]).ln();
        }
    }
    phi
}

/// (max |slackness - mu|, bounded-side count, sum of bound-dual magnitudes)
fn comp_stats(v: &[f64], lo: &[f64], hi: &[f64], zl: &[f64], zu: &[f64], mu: f64) -> (f64, usize, f64) {
    let mut comp = 0.0f64;
    let mut count = 0usize;
    let mut l1 = 0.0f64;
    for t in 0..v.len() {
        if lo[t].is_finite() {
            comp = comp.max(((v[t] - lo[t]) * zl[t] - mu).abs());
            count += 1;
            l1 += zl[t].abs();
        }
        if hi[t].is_finite() {
            comp = comp.max(((hi[t] - v[t]) * zu[t] - mu).abs());
            count += 1;
            l1 += zu[t].abs();
        }
    }
    (comp, count, l1)
}

/// Ipopt-style residual scaling: grows once average multiplier magnitude
/// exceeds `S_MAX`
fn residual_scale(l1: f64, count: usize) -> f64 {
    if count == 0 {
        1.0
    } else {
        (l1 / count as f64).max(S_MAX) / S_MAX
    }
}

fn eval_fc_checked(
    nlp: &dyn Nlp,
    cb: &mut f64,
    z: &[f64],
    c: &mut [f64],
) -> Option<f64> {
    match timed(cb, || nlp.eval_fc(z, c)) {
        Ok(f) if f.is_finite() && c.iter().all(|x| x.is_finite()) => Some(f),
        _ => None,
    }
}

/// Minimize the NLP from `z0` with a primal-dual interior-point iteration:
/// inequality rows get slacks, bounds get log barriers, and each step solves
/// the slack-condensed symmetric KKT system with inertia correction. Steps
/// are accepted by a filter line search on (constraint violation, barrier
/// objective); the barrier parameter decreases monotonically.
pub fn solve(nlp: &dyn Nlp, z0: &[f64], opts: &SolverOptions) -> Solution {
    let t_start = Instant::now();
    let mut cb_time = 0.0f64;

    let n_var = nlp.n_var();
    let n_con = nlp.n_con();
    assert_eq!(z0.len(), n_var, "initial point length");

    // row classification: equal bounds are equality rows, others get a slack
    let mut con_lo = vec![0.0; n_con];
    let mut con_hi = vec![0.0; n_con];
    let mut slack_of_row = vec![usize::MAX; n_con];
    let mut ineq_rows: Vec<usize> = Vec::new();
    for r in 0..n_con {
        let (l, h) = nlp.con_bounds(r);
        assert!(l <= h, "row {r}: lower bound above upper");
        assert!(
            l.is_finite() || h.is_finite(),
            "row {r}: at least one bound must be finite"
        );
        con_lo[r] = l;
        con_hi[r] = h;
        if l != h {
            slack_of_row[r] = ineq_rows.len();
            ineq_rows.push(r);
        }
    }
    let n_ineq = ineq_rows.len();
    // "items" = variables followed by inequality slacks; all bound handling
    // is uniform over items
    let n_items = n_var + n_ineq;
    let mut lo = vec![f64::NEG_INFINITY; n_items];
    let mut hi = vec![f64::INFINITY; n_items];
    for i in 0..n_var {
        let (l, h) = nlp.var_bounds(i);
        if l.is_finite() || h.is_finite() {
            assert!(l < h, "variable {i}: finite bounds must satisfy lo < hi");
        }
        lo[i] = l;
        hi[i] = h;
    }
    for (k, &r) in ineq_rows.iter().enumerate() {
        lo[n_var + k] = con_lo[r];
        hi[n_var + k] = con_hi[r];
    }

    let mut v = vec![0.0; n_items];
    v[..n_var].copy_from_slice(z0);
    for t in 0..n_var {
        push_interior(&mut v[t], lo[t], hi[t]);
    }

    let fail = |status: SolveStatus, v: &[f64], cb_time: f64, t_start: Instant| {
        let total = t_start.elapsed().as_secs_f64();
        Solution {
            status,
            z: v[..n_var].to_vec(),
            lam: vec![0.0; n_con],
            objective: f64::NAN,
            inf_pr: f64::NAN,
            inf_du: f64::NAN,
            iterations: 0,
            log: Vec::new(),
            timing: Timing {
                total,
                callbacks: cb_time,
                solver_core: total - cb_time,
            },
        }
    };

    let mut c = vec![0.0; n_con];
    let mut obj = match eval_fc_checked(nlp, &mut cb_time, &v[..n_var], &mut c) {
        Some(f) => f,
        None => return fail(SolveStatus::EvalFailure, &v, cb_time, t_start),
    };
    // slacks start at the constraint values, pushed inside their range
    for (k, &r) in ineq_rows.iter().enumerate() {
        let t = n_var + k;
        v[t] = c[r];
        push_interior(&mut v[t], lo[t], hi[t]);
    }

    let mut mu = opts.mu_init;
    let mut lam = vec![0.0; n_con];
    let mut zl = vec![0.0; n_items];
    let mut zu = vec![0.0; n_items];
    for t in 0..n_items {
        if lo[t].is_finite() {
            zl[t] = (mu / (v[t] - lo[t])).clamp(1e-8, 1e8);
        }
        if hi[t].is_finite() {
            zu[t] = (mu / (hi[t] - v[t])).clamp(1e-8, 1e8);
        }
    }

    let mut kkt = KktSolver::new(nlp);
    let (jr, jc) = nlp.jac_pattern();
    let mut grad = vec![0.0; n_var];
    let mut jac = vec![0.0; jr.len()];
    let mut hess = vec![0.0; nlp.hess_pattern().0.len()];
    let mut jtlam = vec![0.0; n_var];
    let mut sigma = vec![0.0; n_items];
    let mut rtilde_s = vec![0.0; n_items];
    let mut var_diag = vec![0.0; n_var];
    let mut con_diag = vec![0.0; n_con];
    let mut rhs = vec![0.0; n_var + n_con];
    let mut step = vec![0.0; n_var + n_con];
    let mut resid = vec![0.0; n_var + n_con];
    let mut dv = vec![0.0; n_items];
    let mut dzl = vec![0.0; n_items];
    let mut dzu = vec![0.0; n_items];
    let mut dlam_buf = vec![0.0; n_con];
    let mut v_trial = vec![0.0; n_items];
    let mut c_trial = vec![0.0; n_con];
    let mut c_soc = vec![0.0; n_con];
    let mut step_soc = vec![0.0; n_var + n_con];
    let mut dv_soc = vec![0.0; n_items];
    let mut v_soc = vec![0.0; n_items];
    let mut c_soc_eval = vec![0.0; n_con];

    let mut filter: Vec<(f64, f64)> = Vec::new();
    let mut obj_hist: Vec<f64> = Vec::new();
    let mut viol_hist: Vec<f64> = Vec::new();
    let mut log: Vec<IterRow> = Vec::new();

    let status;
    let mut n_iter = 0usize;
    let mut alpha_pr = 0.0f64;
    let mut alpha_du = 0.0f64;
    let mut delta_w_used = 0.0f64;
    let mut delta_w_last = 0.0f64;
    let mut theta_min = 0.0f64;
    let mut theta_max = f64::INFINITY;
    let mut last_viol = f64::NAN;
    let mut last_inf_du = f64::NAN;
    let mu_min = opts.tol / 10.0;

    'outer: loop {
        // derivatives at the accepted iterate
        let ok = timed(&mut cb_time, || {
            nlp.eval_derivs(&v[..n_var], 1.0, &lam, &mut grad, &mut jac, &mut hess)
        });
        let finite = ok.is_ok()
            && grad.iter().all(|x| x.is_finite())
            && jac.iter().all(|x| x.is_finite())
            && hess.iter().all(|x| x.is_finite());
        if !finite {
            status = SolveStatus::EvalFailure;
            break;
        }

        // KKT residuals
        jtlam.fill(0.0);
        for ((&r, &ci), &jv) in jr.iter().zip(jc).zip(jac.iter()) {
            jtlam[ci as usize] += lam[r as usize] * jv;
        }
        let mut inf_du = 0.0f64;
        for i in 0..n_var {
            inf_du = inf_du.max((grad[i] + jtlam[i] - zl[i] + zu[i]).abs());
        }
        for (k, &r) in ineq_rows.iter().enumerate() {
            let t = n_var + k;
            inf_du = inf_du.max((-lam[r] - zl[t] + zu[t]).abs());
        }
        let theta = slack_theta(&c, &con_lo, &slack_of_row, &v, n_var);
        let mut viol = 0.0f64;
        for r in 0..n_con {
            viol = viol.max(range_violation(c[r], con_lo[r], con_hi[r]));
        }
        let (comp0, n_bounded, dual_l1) = comp_stats(&v, &lo, &hi, &zl, &zu, 0.0);
        let lam_l1: f64 = lam.iter().map(|x| x.abs()).sum();
        let s_d = residual_scale(lam_l1 + dual_l1, n_con + n_bounded);
        let s_c = residual_scale(dual_l1, n_bounded);
        let e0 = (inf_du / s_d).max(theta.max(viol)).max(comp0 / s_c);
        last_viol = viol;
        last_inf_du = inf_du;

        if n_iter == 0 {
            theta_min = 1e-4 * theta.max(1.0);
            theta_max = 1e4 * theta.max(1.0);
            filter.clear();
            filter.push((theta_max, f64::NEG_INFINITY));
        }

        log.push(IterRow {
            iter: n_iter,
            objective: obj,
            inf_pr: theta.max(viol),
            inf_du,
            mu,
            alpha_pr,
            alpha_du,
            delta_w: delta_w_used,
        });
        if opts.print {
            eprintln!(
                "iter {:4}  f {:+.8e}  pr {:8.2e}  du {:8.2e}  mu {:7.1e}  a {:7.1e}",
                n_iter, obj, theta.max(viol), inf_du, mu, alpha_pr
            );
        }
        obj_hist.push(obj);
        viol_hist.push(viol);

        // termination
        if e0 <= opts.tol && viol <= opts.con_tol {
            status = SolveStatus::Optimal;
            break;
        }
        if opts.early_stop_window > 0 && n_iter >= opts.early_stop_window {
            let w = opts.early_stop_window;
            let prev = obj_hist[n_iter - w];
            let rel = (prev - obj).abs() / obj.abs().max(1.0);
            if rel < opts.early_stop_rel && viol <= opts.con_tol && viol_hist[n_iter - w] <= opts.con_tol
            {
                status = SolveStatus::Acceptable;
                break;
            }
        }
        if n_iter >= opts.max_iter {
            status = SolveStatus::MaxIter;
            break;
        }

        // monotone barrier decrease, possibly several tightenings at once
        while mu > mu_min {
            let (comp_mu, _, _) = comp_stats(&v, &lo, &hi, &zl, &zu, mu);
            let e_mu = (inf_du / s_d).max(theta.max(viol)).max(comp_mu / s_c);
            if e_mu > KAPPA_EPS * mu {
                break;
            }
            mu = mu_min.max((mu / 5.0).min(mu.powf(1.5)));
            filter.clear();
            filter.push((theta_max, f64::NEG_INFINITY));
        }

        // condensed KKT pieces
        for t in 0..n_items {
            let mut s = 0.0;
            if lo[t].is_finite() {
                s += zl[t] / (v[t] - lo[t]);
            }
            if hi[t].is_finite() {
                s += zu[t] / (hi[t] - v[t]);
            }
            sigma[t] = s;
            let mut rs = 0.0;
            if lo[t].is_finite() {
                rs += mu / (v[t] - lo[t]);
            }
            if hi[t].is_finite() {
                rs -= mu / (hi[t] - v[t]);
            }
            rtilde_s[t] = rs; // slack rows add lam[r] below
        }
        // keeps the factorization quasidefinite in any pivot order while
        // vanishing fast enough not to bias the converged solution
        let delta_c = DELTA_C * mu.powf(0.25);
        for r in 0..n_con {
            con_diag[r] = if slack_of_row[r] == usize::MAX {
                -delta_c
            } else {
                // slack rows always carry at least one finite bound
                -1.0 / sigma[n_var + slack_of_row[r]]
            };
        }
        for i in 0..n_var {
            rhs[i] = -(grad[i] + jtlam[i]) + rtilde_s[i];
        }
        for r in 0..n_con {
            rhs[n_var + r] = if slack_of_row[r] == usize::MAX {
                -(c[r] - con_lo[r])
            } else {
                let t = n_var + slack_of_row[r];
                let rs = lam[r] + rtilde_s[t];
                -(c[r] - v[t]) + rs / sigma[t]
            };
        }

        // factor with inertia correction on the variable block
        let target = Inertia {
            pos: n_var,
            neg: n_con,
            zero: 0,
        };
        let mut delta_w = 0.0f64;
        loop {
            for i in 0..n_var {
                var_diag[i] = sigma[i] + delta_w;
            }
            if kkt.factor(&hess, &jac, &var_diag, &con_diag) == target {
                break;
            }
            delta_w = if delta_w == 0.0 {
                if delta_w_last == 0.0 {
                    DELTA_W0
                } else {
                    DELTA_W_MIN.max(delta_w_last / 3.0)
                }
            } else if delta_w_last == 0.0 {
                delta_w * 100.0
            } else {
                delta_w * 8.0
            };
            if delta_w > DELTA_W_MAX {
                status = SolveStatus::Infeasible;
                break 'outer;
            }
        }
        delta_w_used = delta_w;
        if delta_w > 0.0 {
            delta_w_last = delta_w;
        }

        step.copy_from_slice(&rhs);
        if kkt.solve_in_place(&mut step).is_err() {
            status = SolveStatus::Infeasible;
            break;
        }
        // one round of iterative refinement on the condensed system
        resid.copy_from_slice(&rhs);
        kkt.mat_vec_accum(&step, &mut resid, -1.0);
        if inf_norm(&resid) > 1e-13 * (1.0 + inf_norm(&rhs)) && kkt.solve_in_place(&mut resid).is_ok()
        {
            for (s, r) in step.iter_mut().zip(&resid) {
                *s += r;
            }
        }

        // recover slack and bound-dual steps
        dlam_buf.copy_from_slice(&step[n_var..]);
        expand_slack_steps(&step, n_var, &ineq_rows, &lam, &rtilde_s, &sigma, &mut dv);
        expand_bound_dual_steps(&v, &dv, &lo, &hi, &zl, &zu, mu, &mut dzl, &mut dzu);

        // fraction-to-boundary step caps
        let a_max = boundary_cap(&v, &dv, &lo, &hi);
        alpha_du = dual_cap(&zl, &zu, &dzl, &dzu);

        // filter line search on (theta, barrier objective)
        let phi0 = barrier_phi(obj, &v, &lo, &hi, mu);
        let mut dphi = 0.0;
        for i in 0..n_var {
            dphi += grad[i] * dv[i];
        }
        for t in 0..n_items {
            if lo[t].is_finite() {
                dphi -= mu / (v[t] - lo[t]) * dv[t];
            }
            if hi[t].is_finite() {
                dphi += mu / (hi[t] - v[t]) * dv[t];
            }
        }
        let theta0 = theta;
        let mut alpha = a_max;
        let mut accepted = false;
        let mut armijo_used = false;
        let mut obj_trial = obj;
        let mut first_trial = true;
        while alpha >= ALPHA_MIN {
            for t in 0..n_items {
                v_trial[t] = v[t] + alpha * dv[t];
            }
            if let Some(ft) = eval_fc_checked(nlp, &mut cb_time, &v_trial[..n_var], &mut c_trial) {
                let theta_t = slack_theta(&c_trial, &con_lo, &slack_of_row, &v_trial, n_var);
                let phi_t = barrier_phi(ft, &v_trial, &lo, &hi, mu);
                let blocked = filter
                    .iter()
                    .any(|&(tf, pf)| theta_t >= tf && phi_t >= pf);
                if !blocked {
                    let switching = theta0 <= theta_min
                        && dphi < 0.0
                        && alpha * (-dphi).powf(S_PHI) > DELTA_SW * theta0.powf(S_THETA);
                    let ok = if switching {
                        armijo_used = phi_t <= phi0 + ETA_PHI * alpha * dphi;
                        armijo_used
                    } else {
                        theta_t <= (1.0 - GAMMA_THETA) * theta0 || phi_t <= phi0 - GAMMA_PHI * theta0
                    };
                    if ok {
                        accepted = true;
                        obj_trial = ft;
                        break;
                    }
                }

                // second-order correction: when the full step fails to cut the
                // violation, re-aim it at the constraint residual observed at
                // the trial point, reusing the current factorization
                if first_trial && theta_t >= theta0 {
                    for r in 0..n_con {
                        c_soc[r] = alpha
                            * row_residual(&c, &v, &con_lo, &slack_of_row, n_var, r)
                            + row_residual(&c_trial, &v_trial, &con_lo, &slack_of_row, n_var, r);
                    }
                    let mut theta_old = theta_t;
                    for _ in 0..P_SOC_MAX {
                        step_soc[..n_var].copy_from_slice(&rhs[..n_var]);
                        for r in 0..n_con {
                            step_soc[n_var + r] = if slack_of_row[r] == usize::MAX {
                                -c_soc[r]
                            } else {
                                let t = n_var + slack_of_row[r];
                                -c_soc[r] + (lam[r] + rtilde_s[t]) / sigma[t]
                            };
                        }
                        if kkt.solve_in_place(&mut step_soc).is_err() {
                            break;
                        }
                        expand_slack_steps(
                            &step_soc, n_var, &ineq_rows, &lam, &rtilde_s, &sigma, &mut dv_soc,
                        );
                        let a_soc = boundary_cap(&v, &dv_soc, &lo, &hi);
                        for t in 0..n_items {
                            v_soc[t] = v[t] + a_soc * dv_soc[t];
                        }
                        let Some(f_soc) =
                            eval_fc_checked(nlp, &mut cb_time, &v_soc[..n_var], &mut c_soc_eval)
                        else {
                            break;
                        };
                        let theta_soc =
                            slack_theta(&c_soc_eval, &con_lo, &slack_of_row, &v_soc, n_var);
                        let phi_soc = barrier_phi(f_soc, &v_soc, &lo, &hi, mu);
                        let blocked_soc = filter
                            .iter()
                            .any(|&(tf, pf)| theta_soc >= tf && phi_soc >= pf);
                        if !blocked_soc {
                            // acceptance tests reuse the original direction's
                            // model decrease and first step length
                            let switching_soc = theta0 <= theta_min
                                && dphi < 0.0
                                && a_max * (-dphi).powf(S_PHI) > DELTA_SW * theta0.powf(S_THETA);
                            let ok_soc = if switching_soc {
                                armijo_used = phi_soc <= phi0 + ETA_PHI * a_max * dphi;
                                armijo_used
                            } else {
                                theta_soc <= (1.0 - GAMMA_THETA) * theta0
                                    || phi_soc <= phi0 - GAMMA_PHI * theta0
                            };
                            if ok_soc {
                                v_trial.copy_from_slice(&v_soc);
                                c_trial.copy_from_slice(&c_soc_eval);
                                dlam_buf.copy_from_slice(&step_soc[n_var..]);
                                expand_bound_dual_steps(
                                    &v, &dv_soc, &lo, &hi, &zl, &zu, mu, &mut dzl, &mut dzu,
                                );
                                alpha_du = dual_cap(&zl, &zu, &dzl, &dzu);
                                alpha = a_soc;
                                accepted = true;
                                obj_trial = f_soc;
                                break;
                            }
                        }
                        if theta_soc > KAPPA_SOC * theta_old {
                            break;
                        }
                        theta_old = theta_soc;
                        for r in 0..n_con {
                            c_soc[r] = a_soc * c_soc[r]
                                + row_residual(&c_soc_eval, &v_soc, &con_lo, &slack_of_row, n_var, r);
                        }
                    }
                    if accepted {
                        break;
                    }
                }
            }
            first_trial = false;
            alpha *= 0.5;
        }
        if !accepted {
            status = if viol <= opts.con_tol {
                SolveStatus::Acceptable
            } else {
                SolveStatus::Infeasible
            };
            break;
        }
        if !armijo_used {
            filter.push(((1.0 - GAMMA_THETA) * theta0, phi0 - GAMMA_PHI * theta0));
        }

        // accept
        v.copy_from_slice(&v_trial);
        for (r, l) in lam.iter_mut().enumerate() {
            *l += alpha * dlam[r];
        }
        for t in 0..n_items {
            if lo[t].is_finite() {
                let gap = v[t] - lo[t];
                zl[t] = (zl[t] + alpha_du * dzl[t])
                    .clamp(mu / (KAPPA_SIGMA * gap), KAPPA_SIGMA * mu / gap);
            }
            if hi[t].is_finite() {
                let gap = hi[t] - v[t];
                zu[t] = (zu[t] + alpha_du * dzu[t])
                    .clamp(mu / (KAPPA_SIGMA * gap), KAPPA_SIGMA * mu / gap);
            }
        }
        obj = obj_trial;
        c.copy_from_slice(&c_trial);
        alpha_pr = alpha;
        n_iter += 1;
    }

    let total = t_start.elapsed().as_secs_f64();
    Solution {
        status,
        z: v[..n_var].to_vec(),
        lam,
        objective: obj,
        inf_pr: last_viol,
        inf_du: last_inf_du,
        iterations: n_iter,
        log,
        timing: Timing {
            total,
            callbacks: cb_time,
            solver_core: total - cb_time,
        },
    }
}
