//! Per-node derivative bundles.
//!
//! At one collocation node the model exposes the output stack
//! `[f (d_x rows), L, g (d_g rows)]` over the local variables
//! `v = (x, p)`. This module computes, in one sweep:
//!   - all output values,
//!   - dense local Jacobian rows over `v`,
//!   - one weight-combined Hessian `sum_s wf[s] f_s'' + wl L'' + sum_k wg[k] g_k''`
//!     as a packed lower triangle over `v`.
//!
//! Second derivatives never run over the full `(x, p)` space when the model
//! declares surrogates: each surrogate gets its own second-order pass over
//! only its active variables, a small second-order pass covers the outer
//! algebra over `(x, direct params, surrogate outputs)`, and the two are
//! combined with the exact second-order chain rule. Models without declared
//! structure take the identical code path with zero surrogates, which then
//! degenerates to one monolithic pass.

use crate::autodiff::{dual2_seed, tri_index, tri_len, Scalar};
use crate::model::{eval_surrogates, DynamicModel, EvalError, ModelStructure, NodeCtx};

/// Caller-owned output buffers for one node evaluation. Jacobian rows are
/// dense over the local variables `v = (x, p)`; sparsity is the caller's
/// business (it knows the structural pattern).
#[derive(Debug, Clone)]
pub struct NodeDerivs {
    pub d_x: usize,
    pub d_g: usize,
    /// local variable count `d_x + d_p`
    pub k: usize,
    pub f: Vec<f64>,
    pub l: f64,
    pub g: Vec<f64>,
    /// `d_x` rows of length `k`
    pub jac_f: Vec<f64>,
    pub grad_l: Vec<f64>,
    /// `d_g` rows of length `k`
    pub jac_g: Vec<f64>,
    /// weight-combined Hessian, packed lower triangle over `v`
    pub hess: Vec<f64>,
}

impl NodeDerivs {
    pub fn new(d_x: usize, d_p: usize, d_g: usize) -> Self {
        let k = d_x + d_p;
        Self {
            d_x,
            d_g,
            k,
            f: vec![0.0; d_x],
            l: 0.0,
            g: vec![0.0; d_g],
            jac_f: vec![0.0; d_x * k],
            grad_l: vec![0.0; k],
            jac_g: vec![0.0; d_g * k],
            hess: vec![0.0; tri_len(k)],
        }
    }

    #[inline]
    pub fn jac_f_row(&self, s: usize) -> &[f64] {
        &self.jac_f[s * self.k..(s + 1) * self.k]
    }

    #[inline]
    pub fn jac_g_row(&self, r: usize) -> &[f64] {
        &self.jac_g[r * self.k..(r + 1) * self.k]
    }

    fn clear(&mut self) {
        self.jac_f.fill(0.0);
        self.grad_l.fill(0.0);
        self.jac_g.fill(0.0);
        self.hess.fill(0.0);
    }
}

/// What one input slot of the outer stage maps to in `v`-space.
enum OuterSpan {
    /// single local variable, unit sensitivity
    Var(usize),
    /// surrogate output: spans that surrogate's variables with its gradient
    Nu(usize),
}

/// Reusable workspace computing [`NodeDerivs`] for one model shape.
pub struct NodeEvaluator {
    d_x: usize,
    d_p: usize,
    st: ModelStructure,
    /// per surrogate: local `v` indices of its inputs, state deps first then
    /// its parameter slice (matches the surrogate's own input ordering)
    surr_vars: Vec<Vec<usize>>,
    /// input slots of the outer stage: `x`, direct params, surrogate outputs
    spans: Vec<OuterSpan>,
    outer_k: usize,
    // per-surrogate first/second derivatives over its own variables
    nu_val: Vec<f64>,
    nu_grad: Vec<Vec<f64>>,
    nu_hess: Vec<Vec<f64>>,
    /// weight-combined outer Hessian, packed tri over `outer_k`
    a_tri: Vec<f64>,
    /// weight-combined outer gradient over `outer_k` (its surrogate slots
    /// are the weights of the per-surrogate curvature terms)
    a_lin: Vec<f64>,
    seed_buf: Vec<f64>,
}

impl NodeEvaluator {
    pub fn new<M: DynamicModel>(model: &M) -> Self {
        let (d_x, d_p) = (model.dim_x(), model.dim_p());
        let st = model.structure();
        st.validate(d_x, d_p);
        let surr_vars: Vec<Vec<usize>> = st
            .surrogates
            .iter()
            .map(|s| {
                let mut v: Vec<usize> = s.state_deps.clone();
                v.extend(s.params.clone().map(|i| d_x + i));
                v
            })
            .collect();
        let mut spans: Vec<OuterSpan> = (0..d_x).map(OuterSpan::Var).collect();
        spans.extend(st.direct_params.iter().map(|&i| OuterSpan::Var(d_x + i)));
        spans.extend((0..st.surrogates.len()).map(OuterSpan::Nu));
        let outer_k = spans.len();
        let n_s = st.surrogates.len();
        Self {
            d_x,
            d_p,
            nu_val: vec![0.0; n_s],
            nu_grad: surr_vars.iter().map(|v| vec![0.0; v.len()]).collect(),
            nu_hess: surr_vars.iter().map(|v| vec![0.0; tri_len(v.len())]).collect(),
            surr_vars,
            spans,
            outer_k,
            a_tri: vec![0.0; tri_len(outer_k)],
            a_lin: vec![0.0; outer_k],
            st,
            seed_buf: Vec::new(),
        }
    }

    pub fn structure(&self) -> &ModelStructure {
        &self.st
    }

    /// Values only (cheap scalar pass): fills `f`, `g`, returns `L`.
    pub fn values<M: DynamicModel>(
        &mut self,
        model: &M,
        x: &[f64],
        p: &[f64],
        ctx: &NodeCtx,
        f_out: &mut [f64],
        g_out: &mut [f64],
    ) -> Result<f64, EvalError> {
        let mut nu: Vec<f64> = Vec::with_capacity(self.st.surrogates.len());
        eval_surrogates(model, &self.st, x, p, &mut nu)?;
        let mut pd: Vec<f64> = Vec::with_capacity(self.st.direct_params.len());
        pd.extend(self.st.direct_params.iter().map(|&i| p[i]));
        model.rhs(x, &pd, &nu, ctx, f_out)?;
        if !g_out.is_empty() {
            model.path(x, &pd, &nu, ctx, g_out)?;
        }
        let l = model.lagrange(x, &pd, &nu, ctx)?;
        if !(l.is_finite() && f_out.iter().chain(g_out.iter()).all(|v| v.is_finite())) {
            return Err(EvalError::InvalidPoint("non-finite node value"));
        }
        Ok(l)
    }

    /// Values, Jacobian rows and the `(wf, wl, wg)`-combined Hessian.
    pub fn derivs<M: DynamicModel>(
        &mut self,
        model: &M,
        x: &[f64],
        p: &[f64],
        ctx: &NodeCtx,
        wf: &[f64],
        wl: f64,
        wg: &[f64],
        out: &mut NodeDerivs,
    ) -> Result<(), EvalError> {
        debug_assert_eq!(out.d_x, self.d_x);
        debug_assert_eq!(out.k, self.d_x + self.d_p);
        out.clear();
        self.a_tri.fill(0.0);
        self.a_lin.fill(0.0);

        // surrogate passes: second-order over each surrogate's own variables
        for (k_idx, sp) in self.st.surrogates.iter().enumerate() {
            let n_dep = sp.state_deps.len();
            let k_s = self.surr_vars[k_idx].len();
            self.seed_buf.clear();
            self.seed_buf.extend(sp.state_deps.iter().map(|&i| x[i]));
            self.seed_buf.extend(p[sp.params.clone()].iter().copied());
            let seeds = dual2_seed(&self.seed_buf);
            let val = model.surrogate(k_idx, &seeds[..n_dep], &seeds[n_dep..])?;
            if !val.all_finite() {
                return Err(EvalError::InvalidPoint("non-finite surrogate"));
            }
            self.nu_val[k_idx] = val.value();
            let g = &mut self.nu_grad[k_idx];
            g.fill(0.0);
            if let Some(src) = val.grad_slice() {
                g.copy_from_slice(src);
            }
            let h = &mut self.nu_hess[k_idx];
            h.fill(0.0);
            if let Some(src) = val.hess_slice() {
                h.copy_from_slice(src);
            }
            debug_assert_eq!(g.len(), k_s);
        }

        // outer pass: second-order over (x, direct params, surrogate outputs)
        self.seed_buf.clear();
        self.seed_buf.extend_from_slice(x);
        self.seed_buf.extend(self.st.direct_params.iter().map(|&i| p[i]));
        self.seed_buf.extend_from_slice(&self.nu_val);
        let seeds = dual2_seed(&self.seed_buf);
        let n_d = self.st.direct_params.len();
        let (xs, rest) = seeds.split_at(self.d_x);
        let (pds, nus) = rest.split_at(n_d);

        let mut f2 = vec![crate::autodiff::Dual2::constant(0.0); self.d_x];
        model.rhs(xs, pds, nus, ctx, &mut f2)?;
        for (s, fv) in f2.iter().enumerate() {
            if !fv.all_finite() {
                return Err(EvalError::InvalidPoint("non-finite dynamics value"));
            }
            out.f[s] = fv.value();
            self.spread_jacobian_row(fv, &mut out.jac_f[s * out.k..(s + 1) * out.k]);
            self.accumulate_outer_hessian(fv, wf[s]);
        }

        let l2 = model.lagrange(xs, pds, nus, ctx)?;
        if !l2.all_finite() {
            return Err(EvalError::InvalidPoint("non-finite integrand value"));
        }
        out.l = l2.value();
        let k = out.k;
        self.spread_jacobian_row(&l2, &mut out.grad_l[..k]);
        self.accumulate_outer_hessian(&l2, wl);

        if out.d_g > 0 {
            let mut g2 = vec![crate::autodiff::Dual2::constant(0.0); out.d_g];
            model.path(xs, pds, nus, ctx, &mut g2)?;
            for (r, gv) in g2.iter().enumerate() {
                if !gv.all_finite() {
                    return Err(EvalError::InvalidPoint("non-finite path value"));
                }
                out.g[r] = gv.value();
                self.spread_jacobian_row(gv, &mut out.jac_g[r * k..(r + 1) * k]);
                self.accumulate_outer_hessian(gv, wg[r]);
            }
        }

        self.expand_hessian(&mut out.hess);
        Ok(())
    }

    /// chain first derivatives of one outer output into a dense `v`-row
    fn spread_jacobian_row(&self, val: &crate::autodiff::Dual2, row: &mut [f64]) {
        let g = match val.grad_slice() {
            Some(g) => g,
            None => return,
        };
        for (slot, &gv) in g.iter().enumerate() {
            if gv == 0.0 {
                continue;
            }
            match &self.spans[slot] {
                OuterSpan::Var(v) => row[*v] += gv,
                OuterSpan::Nu(k_idx) => {
                    let vars = &self.surr_vars[*k_idx];
                    let ng = &self.nu_grad[*k_idx];
                    for (li, &v) in vars.iter().enumerate() {
                        row[v] += gv * ng[li];
                    }
                }
            }
        }
    }

    /// add `w * (outer gradient/Hessian of val)` into the combined buffers
    fn accumulate_outer_hessian(&mut self, val: &crate::autodiff::Dual2, w: f64) {
        if w == 0.0 {
            return;
        }
        if let Some(g) = val.grad_slice() {
            for (dst, &src) in self.a_lin.iter_mut().zip(g.iter()) {
                *dst += w * src;
            }
        }
        if let Some(h) = val.hess_slice() {
            for (dst, &src) in self.a_tri.iter_mut().zip(h.iter()) {
                *dst += w * src;
            }
        }
    }

    /// map the combined outer Hessian (plus per-surrogate curvature) into
    /// the packed `v`-triangle via the exact second-order chain rule:
    /// `H_v = J^T A J + sum_k u_k H_{nu_k}` with `J` the (structural) map
    /// from `v` to the outer inputs and `u_k` the combined sensitivity to
    /// surrogate `k`'s output
    fn expand_hessian(&self, hess: &mut [f64]) {
        // quadratic part: expand each stored outer pair (alpha >= beta) over
        // the variable spans of its two slots
        for alpha in 0..self.outer_k {
            for beta in 0..=alpha {
                let val = self.a_tri[tri_index(alpha, beta)];
                if val == 0.0 {
                    continue;
                }
                match (&self.spans[alpha], &self.spans[beta]) {
                    (OuterSpan::Var(a), OuterSpan::Var(b)) => {
                        let (hi, lo) = if a >= b { (*a, *b) } else { (*b, *a) };
                        hess[tri_index(hi, lo)] += val;
                    }
                    (OuterSpan::Var(a), OuterSpan::Nu(kb)) => {
                        Self::cross_into(hess, val, &[*a], &[1.0], &self.surr_vars[*kb], &self.nu_grad[*kb]);
                    }
                    (OuterSpan::Nu(ka), OuterSpan::Var(b)) => {
                        Self::cross_into(hess, val, &self.surr_vars[*ka], &self.nu_grad[*ka], &[*b], &[1.0]);
                    }
                    (OuterSpan::Nu(ka), OuterSpan::Nu(kb)) if ka == kb => {
                        // diagonal A entry: val * g (x) g over one span
                        let vars = &self.surr_vars[*ka];
                        let g = &self.nu_grad[*ka];
                        for li in 0..vars.len() {
                            if g[li] == 0.0 {
                                continue;
                            }
                            for lj in 0..=li {
                                let (vi, vj) = (vars[li], vars[lj]);
                                let (hi, lo) = if vi >= vj { (vi, vj) } else { (vj, vi) };
                                hess[tri_index(hi, lo)] += val * g[li] * g[lj];
                            }
                        }
                    }
                    (OuterSpan::Nu(ka), OuterSpan::Nu(kb)) => {
                        Self::cross_into(hess, val, &self.surr_vars[*ka], &self.nu_grad[*ka], &self.surr_vars[*kb], &self.nu_grad[*kb]);
                    }
                }
            }
        }
        // first-order-through-nu part: u_k * H_{nu_k}
        let nu_base = self.outer_k - self.st.surrogates.len();
        for (k_idx, vars) in self.surr_vars.iter().enumerate() {
            let u = self.a_lin[nu_base + k_idx];
            if u == 0.0 {
                continue;
            }
            let h = &self.nu_hess[k_idx];
            for li in 0..vars.len() {
                for lj in 0..=li {
                    let src = h[tri_index(li, lj)];
                    if src == 0.0 {
                        continue;
                    }
                    let (vi, vj) = (vars[li], vars[lj]);
                    let (hi, lo) = if vi >= vj { (vi, vj) } else { (vj, vi) };
                    hess[tri_index(hi, lo)] += u * src;
                }
            }
        }
    }

    /// expand one off-diagonal outer pair `val * (Ja (x) Jb + Jb (x) Ja)`
    /// over two distinct spans: each ordered product lands once in the
    /// unordered triangle slot; shared variables on the diagonal need both
    /// orientations, hence the factor 2
    fn cross_into(
        hess: &mut [f64],
        val: f64,
        vars_a: &[usize],
        grad_a: &[f64],
        vars_b: &[usize],
        grad_b: &[f64],
    ) {
        for (li, &vi) in vars_a.iter().enumerate() {
            let ga = grad_a[li];
            if ga == 0.0 {
                continue;
            }
            for (lj, &vj) in vars_b.iter().enumerate() {
                let term = val * ga * grad_b[lj];
                if term == 0.0 {
                    continue;
                }
                if vi == vj {
                    hess[tri_index(vi, vi)] += 2.0 * term;
                } else {
                    let (hi, lo) = if vi > vj { (vi, vj) } else { (vj, vi) };
                    hess[tri_index(hi, lo)] += term;
                }
            }
        }
    }
}
