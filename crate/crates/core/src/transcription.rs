//! Transcription of a continuous-time fitting problem into a sparse NLP.
//!
//! Decision vector: `z = [x(t0) | x_{i,j} node-major | p]`. For every
//! collocation node `(i, j)` the interpolant-derivative condition
//! `sum_k D[j][k] x_{i,k} - dt_i f(x_{i,j}, p, t_{i,j}) = 0` contributes
//! `d_x` equality rows, followed by that node's path rows; trajectory-level
//! boundary rows come last. The objective is the quadrature of the fitting
//! integrand plus the endpoint cost, scaled by `1/(tf - t0)` so its
//! magnitude does not grow with the horizon.
//!
//! Derivative storage is generation-ordered: Jacobian and Hessian values of
//! node `q` occupy the contiguous block `[q * per_node_nnz, ...)`, so
//! parallel evaluation writes disjoint windows and never reorders a float
//! reduction (per-chunk partials for parameter-gradient and parameter-pair
//! Hessian entries are folded in fixed chunk order). Patterns may therefore
//! contain duplicate coordinates (last node vs boundary, integrand vs
//! endpoint cost); consumers accumulate.

use crate::autodiff::bundle::{NodeDerivs, NodeEvaluator};
use crate::autodiff::{dual2_seed, probe_seed, tri_index, tri_len, Dual2, Scalar};
use crate::data::{DataError, DataSource};
use crate::mesh::{DecisionLayout, Mesh};
use crate::model::{eval_surrogates, DynamicModel, EvalError, NodeCtx};
use crate::solver::{CallbackError, KktOrder, Nlp};
use rayon::prelude::*;
use std::ops::Range;
use thiserror::Error;

/// nodes per parallel work unit; fixed so reductions are order-stable
/// regardless of thread count
pub const NODE_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum TranscribeError {
    #[error("model expects {expected} data channels, the source provides {got}")]
    DataWidth { expected: usize, got: usize },
    #[error("sampling exogenous data at the nodes failed: {0}")]
    Data(#[from] DataError),
    #[error("structural probe of the model failed: {0}")]
    Probe(#[from] EvalError),
}

/// one Jacobian entry of a dynamics row, in ascending-column order
#[derive(Debug, Clone, Copy)]
enum DynEntry {
    /// derivative-stencil tap on support state `k != j`, constant value
    Stencil { k: u32, d: f64 },
    /// own-node state column `sp`: stencil diagonal (when `sp == s`) plus
    /// `-dt * df_s/dx_sp` when the dynamics row actually depends on `sp`
    Own { sp: u32, d: f64, fdep: bool },
    /// parameter column, value `-dt * df_s/dp_pi`
    Par { pi: u32 },
}

/// one Jacobian entry of a path row
#[derive(Debug, Clone, Copy)]
enum PathEntry {
    State(u32),
    Par(u32),
}

/// per-chunk reduction payload, folded in chunk order
struct ChunkOut {
    lagrange: f64,
    grad_p: Vec<f64>,
    shared_hess: Vec<f64>,
}

/// hands out caller-guaranteed-disjoint mutable windows of one buffer to
/// parallel chunk workers
struct DisjointWindows<'a> {
    ptr: *mut f64,
    len: usize,
    _marker: std::marker::PhantomData<&'a mut [f64]>,
}

unsafe impl Send for DisjointWindows<'_> {}
unsafe impl Sync for DisjointWindows<'_> {}

impl<'a> DisjointWindows<'a> {
    fn new(s: &'a mut [f64]) -> Self {
        Self { ptr: s.as_mut_ptr(), len: s.len(), _marker: std::marker::PhantomData }
    }

    /// Safety: concurrent callers must request non-overlapping ranges.
    #[allow(clippy::mut_from_ref)]
    unsafe fn window(&self, start: usize, len: usize) -> &'a mut [f64] {
        debug_assert!(start + len <= self.len, "window escapes the buffer");
        std::slice::from_raw_parts_mut(self.ptr.add(start), len)
    }
}

/// A dynamic model transcribed on a mesh: sizes, bounds, structural
/// sparsity, and deterministic (optionally multithreaded) evaluation
/// callbacks for an interior-point solver.
pub struct SparseNlp<M: DynamicModel> {
    model: M,
    mesh: Mesh,
    layout: DecisionLayout,
    d_x: usize,
    d_p: usize,
    d_g: usize,
    d_r: usize,
    data_width: usize,
    /// exogenous data at every node, node-major, sampled once up front
    node_data: Vec<f64>,
    /// `1 / (tf - t0)`, multiplies the whole objective
    obj_scale: f64,
    var_lo: Vec<f64>,
    var_hi: Vec<f64>,
    con_lo: Vec<f64>,
    con_hi: Vec<f64>,
    jac_rows: Vec<u32>,
    jac_cols: Vec<u32>,
    node_jac_nnz: usize,
    /// dynamics-row templates, indexed `(j - 1) * d_x + s`
    dyn_tpl: Vec<Vec<DynEntry>>,
    path_tpl: Vec<Vec<PathEntry>>,
    /// boundary-row dependencies in `(x0, xf, p)`-local indices
    bnd_jac_tpl: Vec<Vec<u32>>,
    hess_rows: Vec<u32>,
    hess_cols: Vec<u32>,
    /// node-local Hessian pairs `(a >= b, b < d_x)` over `(x, p)`
    node_pairs: Vec<(u32, u32)>,
    /// parameter-parameter pairs shared by all nodes (`a, b >= d_x`)
    shared_pairs: Vec<(u32, u32)>,
    /// boundary/endpoint-cost pairs in `(x0, xf, p)`-local indices
    bnd_pairs: Vec<(u32, u32)>,
    threads: usize,
    pool: Option<rayon::ThreadPool>,
}

impl<M: DynamicModel + Sync> SparseNlp<M> {
    pub fn new(model: M, mesh: Mesh, data: &dyn DataSource) -> Result<Self, TranscribeError> {
        let d_x = model.dim_x();
        let d_p = model.dim_p();
        let d_g = model.n_path();
        let d_r = model.n_boundary();
        let data_width = model.data_width();
        if data.width() != data_width {
            return Err(TranscribeError::DataWidth { expected: data_width, got: data.width() });
        }
        let layout = DecisionLayout::for_mesh(&mesh, d_x, d_p);
        let m = mesh.m();
        let n_nodes = mesh.n_nodes();

        let mut node_data = vec![0.0; n_nodes * data_width];
        for q in 0..n_nodes {
            let (i, j) = (q / m, q % m + 1);
            data.sample_into(mesh.node_time(i, j), &mut node_data[q * data_width..][..data_width])?;
        }

        // structural probe at one node; sparsity must not depend on the
        // point or the node, only on the model
        let seeds = probe_seed(d_x + d_p);
        let (xs, ps) = seeds.split_at(d_x);
        let st = model.structure();
        st.validate(d_x, d_p);
        let ctx0 = NodeCtx::new(mesh.node_time(0, 1), &node_data[..data_width]);
        let mut nu = Vec::new();
        eval_surrogates(&model, &st, xs, ps, &mut nu)?;
        let mut pd = Vec::new();
        pd.extend(st.direct_params.iter().map(|&i| ps[i].clone()));
        let mut f_probe = vec![crate::autodiff::Probe::from_f64(0.0); d_x];
        model.rhs(xs, &pd, &nu, &ctx0, &mut f_probe)?;
        let l_probe = model.lagrange(xs, &pd, &nu, &ctx0)?;
        let mut g_probe = vec![crate::autodiff::Probe::from_f64(0.0); d_g];
        if d_g > 0 {
            model.path(xs, &pd, &nu, &ctx0, &mut g_probe)?;
        }

        let split = |deps: Vec<usize>| -> (Vec<u32>, Vec<u32>) {
            let mut xs = Vec::new();
            let mut ps = Vec::new();
            for d in deps {
                if d < d_x {
                    xs.push(d as u32);
                } else {
                    ps.push((d - d_x) as u32);
                }
            }
            (xs, ps)
        };
        let f_deps: Vec<(Vec<u32>, Vec<u32>)> = f_probe.iter().map(|p| split(p.deps())).collect();
        let g_deps: Vec<(Vec<u32>, Vec<u32>)> = g_probe.iter().map(|p| split(p.deps())).collect();

        let mut all_pairs: Vec<(usize, usize)> = l_probe.pairs();
        for pr in f_probe.iter().chain(g_probe.iter()) {
            all_pairs.extend(pr.pairs());
        }
        all_pairs.sort_unstable();
        all_pairs.dedup();
        let mut node_pairs = Vec::new();
        let mut shared_pairs = Vec::new();
        for (a, b) in all_pairs {
            if b < d_x {
                node_pairs.push((a as u32, b as u32));
            } else {
                shared_pairs.push((a as u32, b as u32));
            }
        }

        // boundary probe over (x0, xf, p)
        let kb = 2 * d_x + d_p;
        let bseeds = probe_seed(kb);
        let (bx0, brest) = bseeds.split_at(d_x);
        let (bxf, bp) = brest.split_at(d_x);
        let mut r_probe = vec![crate::autodiff::Probe::from_f64(0.0); d_r];
        if d_r > 0 {
            model.boundary(bx0, bxf, bp, &mut r_probe)?;
        }
        let mayer_probe = model.mayer(bx0, bxf, bp)?;
        let bnd_jac_tpl: Vec<Vec<u32>> =
            r_probe.iter().map(|p| p.deps().into_iter().map(|d| d as u32).collect()).collect();
        let mut bnd_pairs: Vec<(usize, usize)> = mayer_probe.pairs();
        for pr in &r_probe {
            bnd_pairs.extend(pr.pairs());
        }
        bnd_pairs.sort_unstable();
        bnd_pairs.dedup();
        let bnd_pairs: Vec<(u32, u32)> =
            bnd_pairs.into_iter().map(|(a, b)| (a as u32, b as u32)).collect();

        // dynamics-row Jacobian templates: one per (stage, state row)
        let scheme = &mesh.scheme;
        let mut dyn_tpl = Vec::with_capacity(m * d_x);
        for j in 1..=m {
            for s in 0..d_x {
                let mut own: Vec<u32> = f_deps[s].0.clone();
                if !own.contains(&(s as u32)) {
                    own.push(s as u32);
                    own.sort_unstable();
                }
                let mut tpl = Vec::new();
                for k in 0..=m {
                    if k != j {
                        tpl.push(DynEntry::Stencil { k: k as u32, d: scheme.d(j, k) });
                    } else {
                        for &sp in &own {
                            tpl.push(DynEntry::Own {
                                sp,
                                d: if sp as usize == s { scheme.d(j, j) } else { 0.0 },
                                fdep: f_deps[s].0.contains(&sp),
                            });
                        }
                    }
                }
                tpl.extend(f_deps[s].1.iter().map(|&pi| DynEntry::Par { pi }));
                dyn_tpl.push(tpl);
            }
        }
        let path_tpl: Vec<Vec<PathEntry>> = (0..d_g)
            .map(|r| {
                let mut tpl: Vec<PathEntry> =
                    g_deps[r].0.iter().map(|&sp| PathEntry::State(sp)).collect();
                tpl.extend(g_deps[r].1.iter().map(|&pi| PathEntry::Par(pi)));
                tpl
            })
            .collect();

        // assemble the full coordinate patterns, node-major; per-row entry
        // counts do not depend on the stage, so any stage's templates give
        // the per-node total
        let node_jac_nnz = dyn_tpl[..d_x].iter().map(Vec::len).sum::<usize>()
            + path_tpl.iter().map(Vec::len).sum::<usize>();
        let bnd_jac_nnz: usize = bnd_jac_tpl.iter().map(Vec::len).sum();
        let mut jac_rows = Vec::with_capacity(n_nodes * node_jac_nnz + bnd_jac_nnz);
        let mut jac_cols = Vec::with_capacity(jac_rows.capacity());
        let row_stride = d_x + d_g;
        for q in 0..n_nodes {
            let (i, j) = (q / m, q % m + 1);
            let row_base = (q * row_stride) as u32;
            let own_base = layout.node_state_start(q) as u32;
            for s in 0..d_x {
                let row = row_base + s as u32;
                for e in &dyn_tpl[(j - 1) * d_x + s] {
                    let col = match *e {
                        DynEntry::Stencil { k, .. } => {
                            (layout.state_start(i, k as usize) + s) as u32
                        }
                        DynEntry::Own { sp, .. } => own_base + sp,
                        DynEntry::Par { pi } => layout.param_index(pi as usize) as u32,
                    };
                    jac_rows.push(row);
                    jac_cols.push(col);
                }
            }
            for (r, tpl) in path_tpl.iter().enumerate() {
                let row = row_base + (d_x + r) as u32;
                for e in tpl {
                    let col = match *e {
                        PathEntry::State(sp) => own_base + sp,
                        PathEntry::Par(pi) => layout.param_index(pi as usize) as u32,
                    };
                    jac_rows.push(row);
                    jac_cols.push(col);
                }
            }
        }
        let bnd_row0 = n_nodes * row_stride;
        for (r, tpl) in bnd_jac_tpl.iter().enumerate() {
            for &a in tpl {
                jac_rows.push((bnd_row0 + r) as u32);
                jac_cols.push(bnd_global(&layout, d_x, a as usize) as u32);
            }
        }

        let mut hess_rows =
            Vec::with_capacity(n_nodes * node_pairs.len() + shared_pairs.len() + bnd_pairs.len());
        let mut hess_cols = Vec::with_capacity(hess_rows.capacity());
        for q in 0..n_nodes {
            let own_base = layout.node_state_start(q);
            let gmap = |a: u32| -> u32 {
                if (a as usize) < d_x {
                    (own_base + a as usize) as u32
                } else {
                    layout.param_index(a as usize - d_x) as u32
                }
            };
            for &(a, b) in &node_pairs {
                hess_rows.push(gmap(a));
                hess_cols.push(gmap(b));
            }
        }
        for &(a, b) in &shared_pairs {
            hess_rows.push(layout.param_index(a as usize - d_x) as u32);
            hess_cols.push(layout.param_index(b as usize - d_x) as u32);
        }
        for &(a, b) in &bnd_pairs {
            hess_rows.push(bnd_global(&layout, d_x, a as usize) as u32);
            hess_cols.push(bnd_global(&layout, d_x, b as usize) as u32);
        }

        let n_con = n_nodes * row_stride + d_r;
        let mut con_lo = Vec::with_capacity(n_con);
        let mut con_hi = Vec::with_capacity(n_con);
        for _q in 0..n_nodes {
            con_lo.extend(std::iter::repeat(0.0).take(d_x));
            con_hi.extend(std::iter::repeat(0.0).take(d_x));
            for r in 0..d_g {
                let (lo, hi) = model.path_bounds(r);
                con_lo.push(lo);
                con_hi.push(hi);
            }
        }
        for r in 0..d_r {
            let (lo, hi) = model.boundary_bounds(r);
            con_lo.push(lo);
            con_hi.push(hi);
        }

        let n_var = layout.var_count();
        Ok(Self {
            obj_scale: 1.0 / (mesh.tf - mesh.t0),
            model,
            mesh,
            layout,
            d_x,
            d_p,
            d_g,
            d_r,
            data_width,
            node_data,
            var_lo: vec![f64::NEG_INFINITY; n_var],
            var_hi: vec![f64::INFINITY; n_var],
            con_lo,
            con_hi,
            jac_rows,
            jac_cols,
            node_jac_nnz,
            dyn_tpl,
            path_tpl,
            bnd_jac_tpl,
            hess_rows,
            hess_cols,
            node_pairs,
            shared_pairs,
            bnd_pairs,
            threads: 1,
            pool: None,
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn layout(&self) -> &DecisionLayout {
        &self.layout
    }

    pub fn objective_scale(&self) -> f64 {
        self.obj_scale
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// evaluation thread count; results are bit-identical for every choice
    pub fn set_threads(&mut self, threads: usize) {
        let threads = threads.max(1);
        self.threads = threads;
        self.pool = if threads == 1 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .expect("building a thread pool cannot fail with positive size"),
            )
        };
    }

    /// pin (or bound) one decision variable
    pub fn set_var_bound(&mut self, idx: usize, lo: f64, hi: f64) {
        assert!(lo <= hi, "variable bound must be a nonempty interval");
        self.var_lo[idx] = lo;
        self.var_hi[idx] = hi;
    }

    /// fill a decision vector from a state trajectory and parameter values
    pub fn pack_guess(&self, mut x_of_t: impl FnMut(f64, &mut [f64]), p: &[f64]) -> Vec<f64> {
        assert_eq!(p.len(), self.d_p, "parameter guess has the wrong length");
        let mut z = vec![0.0; self.layout.var_count()];
        x_of_t(self.mesh.t0, &mut z[..self.d_x]);
        let m = self.mesh.m();
        for q in 0..self.mesh.n_nodes() {
            let (i, j) = (q / m, q % m + 1);
            let start = self.layout.node_state_start(q);
            x_of_t(self.mesh.node_time(i, j), &mut z[start..start + self.d_x]);
        }
        z[self.layout.param_start()..].copy_from_slice(p);
        z
    }

    /// state block of every support point `(t, x)` in time order, including
    /// the initial point
    pub fn unpack_states<'z>(&self, z: &'z [f64]) -> Vec<(f64, &'z [f64])> {
        let mut out = Vec::with_capacity(1 + self.mesh.n_nodes());
        out.push((self.mesh.t0, &z[..self.d_x]));
        let m = self.mesh.m();
        for q in 0..self.mesh.n_nodes() {
            let (i, j) = (q / m, q % m + 1);
            let start = self.layout.node_state_start(q);
            out.push((self.mesh.node_time(i, j), &z[start..start + self.d_x]));
        }
        out
    }

    pub fn params<'z>(&self, z: &'z [f64]) -> &'z [f64] {
        &z[self.layout.param_start()..]
    }

    /// structural nonzero count of the Jacobian after merging duplicates
    pub fn jac_nnz_unique(&self) -> usize {
        count_unique(&self.jac_rows, &self.jac_cols)
    }

    /// structural nonzero count of the Hessian lower triangle after merging
    /// duplicates
    pub fn hess_nnz_unique(&self) -> usize {
        count_unique(&self.hess_rows, &self.hess_cols)
    }

    #[inline]
    fn node_ctx(&self, q: usize, t: f64) -> NodeCtx<'_> {
        NodeCtx::new(t, &self.node_data[q * self.data_width..][..self.data_width])
    }

    fn n_chunks(&self) -> usize {
        self.mesh.n_nodes().div_ceil(NODE_CHUNK)
    }

    fn chunk_range(&self, ci: usize) -> Range<usize> {
        let start = ci * NODE_CHUNK;
        start..(start + NODE_CHUNK).min(self.mesh.n_nodes())
    }

    /// constraint residuals and quadrature contribution for one node range
    fn values_chunk(&self, qs: Range<usize>, z: &[f64], c_w: &mut [f64]) -> Result<f64, CallbackError> {
        let (d_x, d_g, m) = (self.d_x, self.d_g, self.mesh.m());
        let mut ev = NodeEvaluator::new(&self.model);
        let mut f_buf = vec![0.0; d_x];
        let mut g_buf = vec![0.0; d_g];
        let p = &z[self.layout.param_start()..];
        let mut lagrange = 0.0;
        for (dq, q) in qs.enumerate() {
            let (i, j) = (q / m, q % m + 1);
            let dt = self.mesh.dt(i);
            let x = &z[self.layout.node_state_start(q)..][..d_x];
            let ctx = self.node_ctx(q, self.mesh.node_time(i, j));
            let l = ev
                .values(&self.model, x, p, &ctx, &mut f_buf, &mut g_buf)
                .map_err(|e| cb_err(e, (i, j)))?;
            let crow = &mut c_w[dq * (d_x + d_g)..][..d_x + d_g];
            for s in 0..d_x {
                let mut acc = 0.0;
                for k in 0..=m {
                    acc += self.mesh.scheme.d(j, k) * z[self.layout.state_start(i, k) + s];
                }
                crow[s] = acc - dt * f_buf[s];
            }
            crow[d_x..].copy_from_slice(&g_buf);
            lagrange += self.obj_scale * dt * self.mesh.scheme.weights[j - 1] * l;
        }
        Ok(lagrange)
    }

    /// derivatives for one node range: Jacobian and Hessian windows are
    /// node-major and private to the range; parameter-space reductions go
    /// through the returned payload
    #[allow(clippy::too_many_arguments)]
    fn derivs_chunk(
        &self,
        qs: Range<usize>,
        z: &[f64],
        sigma: f64,
        lam: &[f64],
        jac_w: &mut [f64],
        hess_w: &mut [f64],
        grad_w: &mut [f64],
    ) -> Result<ChunkOut, CallbackError> {
        let (d_x, d_p, d_g, m) = (self.d_x, self.d_p, self.d_g, self.mesh.m());
        let row_stride = d_x + d_g;
        let mut ev = NodeEvaluator::new(&self.model);
        let mut nd = NodeDerivs::new(d_x, d_p, d_g);
        let mut wf = vec![0.0; d_x];
        let mut wg = vec![0.0; d_g];
        let mut out = ChunkOut {
            lagrange: 0.0,
            grad_p: vec![0.0; d_p],
            shared_hess: vec![0.0; self.shared_pairs.len()],
        };
        let p = &z[self.layout.param_start()..];
        for (dq, q) in qs.enumerate() {
            let (i, j) = (q / m, q % m + 1);
            let dt = self.mesh.dt(i);
            let row_base = q * row_stride;
            let w_obj = self.obj_scale * dt * self.mesh.scheme.weights[j - 1];
            for s in 0..d_x {
                wf[s] = -dt * lam[row_base + s];
            }
            for r in 0..d_g {
                wg[r] = lam[row_base + d_x + r];
            }
            let x = &z[self.layout.node_state_start(q)..][..d_x];
            let ctx = self.node_ctx(q, self.mesh.node_time(i, j));
            ev.derivs(&self.model, x, p, &ctx, &wf, sigma * w_obj, &wg, &mut nd)
                .map_err(|e| cb_err(e, (i, j)))?;
            out.lagrange += w_obj * nd.l;

            let jrow = &mut jac_w[dq * self.node_jac_nnz..][..self.node_jac_nnz];
            let mut slot = 0;
            for s in 0..d_x {
                let jf = nd.jac_f_row(s);
                for e in &self.dyn_tpl[(j - 1) * d_x + s] {
                    jrow[slot] = match *e {
                        DynEntry::Stencil { d, .. } => d,
                        DynEntry::Own { sp, d, fdep } => {
                            if fdep {
                                d - dt * jf[sp as usize]
                            } else {
                                d
                            }
                        }
                        DynEntry::Par { pi } => -dt * jf[d_x + pi as usize],
                    };
                    slot += 1;
                }
            }
            for (r, tpl) in self.path_tpl.iter().enumerate() {
                let jg = nd.jac_g_row(r);
                for e in tpl {
                    jrow[slot] = match *e {
                        PathEntry::State(sp) => jg[sp as usize],
                        PathEntry::Par(pi) => jg[d_x + pi as usize],
                    };
                    slot += 1;
                }
            }
            debug_assert_eq!(slot, self.node_jac_nnz);

            let hrow = &mut hess_w[dq * self.node_pairs.len()..][..self.node_pairs.len()];
            for (dst, &(a, b)) in hrow.iter_mut().zip(&self.node_pairs) {
                *dst = nd.hess[tri_index(a as usize, b as usize)];
            }
            for (dst, &(a, b)) in out.shared_hess.iter_mut().zip(&self.shared_pairs) {
                *dst += nd.hess[tri_index(a as usize, b as usize)];
            }

            let gx = &mut grad_w[dq * d_x..][..d_x];
            for s in 0..d_x {
                gx[s] += w_obj * nd.grad_l[s];
            }
            for pi in 0..d_p {
                out.grad_p[pi] += w_obj * nd.grad_l[d_x + pi];
            }
        }
        Ok(out)
    }

    /// boundary rows and endpoint cost: values and tail constraint block
    fn boundary_values(&self, z: &[f64], c_tail: &mut [f64]) -> Result<f64, CallbackError> {
        let (x0, xf, p) = self.endpoint_slices(z);
        self.model.boundary(x0, xf, p, c_tail).map_err(|e| cb_err(e, (usize::MAX, 0)))?;
        let mayer = self.model.mayer(x0, xf, p).map_err(|e| cb_err(e, (usize::MAX, 0)))?;
        if !(mayer.is_finite() && c_tail.iter().all(|v| v.is_finite())) {
            return Err(CallbackError::new("non-finite boundary value"));
        }
        Ok(self.obj_scale * mayer)
    }

    /// boundary rows and endpoint cost: gradient, Jacobian tail, Hessian tail
    fn boundary_derivs(
        &self,
        z: &[f64],
        sigma: f64,
        lam: &[f64],
        grad: &mut [f64],
        jac_tail: &mut [f64],
        hess_tail: &mut [f64],
    ) -> Result<(), CallbackError> {
        let d_x = self.d_x;
        let kb = 2 * d_x + self.d_p;
        let (x0, xf, p) = self.endpoint_slices(z);
        let mut vals = Vec::with_capacity(kb);
        vals.extend_from_slice(x0);
        vals.extend_from_slice(xf);
        vals.extend_from_slice(p);
        let seeds = dual2_seed(&vals);
        let (sx0, rest) = seeds.split_at(d_x);
        let (sxf, sp) = rest.split_at(d_x);

        let mut acc = vec![0.0; tri_len(kb)];
        let mayer = self.model.mayer(sx0, sxf, sp).map_err(|e| cb_err(e, (usize::MAX, 0)))?;
        if !mayer.all_finite() {
            return Err(CallbackError::new("non-finite endpoint cost"));
        }
        if let Some(g) = mayer.grad_slice() {
            for (a, &gv) in g.iter().enumerate() {
                grad[bnd_global(&self.layout, d_x, a)] += self.obj_scale * gv;
            }
        }
        let wm = sigma * self.obj_scale;
        if wm != 0.0 {
            if let Some(h) = mayer.hess_slice() {
                for (dst, &hv) in acc.iter_mut().zip(h) {
                    *dst += wm * hv;
                }
            }
        }

        if self.d_r > 0 {
            let mut rows = vec![Dual2::constant(0.0); self.d_r];
            self.model
                .boundary(sx0, sxf, sp, &mut rows)
                .map_err(|e| cb_err(e, (usize::MAX, 0)))?;
            let row0 = self.mesh.n_nodes() * (d_x + self.d_g);
            let mut slot = 0;
            for (r, rv) in rows.iter().enumerate() {
                if !rv.all_finite() {
                    return Err(CallbackError::new("non-finite boundary row"));
                }
                let g = rv.grad_slice();
                for &a in &self.bnd_jac_tpl[r] {
                    jac_tail[slot] = g.map_or(0.0, |g| g[a as usize]);
                    slot += 1;
                }
                let w = lam[row0 + r];
                if w != 0.0 {
                    if let Some(h) = rv.hess_slice() {
                        for (dst, &hv) in acc.iter_mut().zip(h) {
                            *dst += w * hv;
                        }
                    }
                }
            }
            debug_assert_eq!(slot, jac_tail.len());
        }

        for (dst, &(a, b)) in hess_tail.iter_mut().zip(&self.bnd_pairs) {
            *dst = acc[tri_index(a as usize, b as usize)];
        }
        Ok(())
    }

    fn endpoint_slices<'z>(&self, z: &'z [f64]) -> (&'z [f64], &'z [f64], &'z [f64]) {
        let d_x = self.d_x;
        let xf = self.layout.last_state_start();
        (&z[..d_x], &z[xf..xf + d_x], &z[self.layout.param_start()..])
    }

    /// write one evaluation of the problem as a JSON document, for
    /// inspecting small instances
    pub fn debug_dump(&self, z: &[f64], path: &std::path::Path) -> std::io::Result<()> {
        let mut c = vec![0.0; self.n_con()];
        let obj = self.eval_fc(z, &mut c).map_err(std::io::Error::other)?;
        let mut grad = vec![0.0; self.n_var()];
        let mut jac = vec![0.0; self.jac_rows.len()];
        let mut hess = vec![0.0; self.hess_rows.len()];
        let lam = vec![0.0; self.n_con()];
        self.eval_derivs(z, 1.0, &lam, &mut grad, &mut jac, &mut hess)
            .map_err(std::io::Error::other)?;
        let nums = |v: &[f64]| {
            v.iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(",")
        };
        let ints = |v: &[u32]| {
            v.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
        };
        let body = format!(
            concat!(
                "{{\n\"n_var\":{},\n\"n_con\":{},\n\"objective\":{:.17e},\n",
                "\"objective_scale\":{:.17e},\n",
                "\"constraints\":[{}],\n\"gradient\":[{}],\n",
                "\"jac_rows\":[{}],\n\"jac_cols\":[{}],\n\"jac_vals\":[{}],\n",
                "\"hess_rows\":[{}],\n\"hess_cols\":[{}],\n\"hess_vals\":[{}]\n}}\n"
            ),
            self.n_var(),
            self.n_con(),
            obj,
            self.obj_scale,
            nums(&c),
            nums(&grad),
            ints(&self.jac_rows),
            ints(&self.jac_cols),
            nums(&jac),
            ints(&self.hess_rows),
            ints(&self.hess_cols),
            nums(&hess),
        );
        std::fs::write(path, body)
    }
}

impl<M: DynamicModel + Sync> Nlp for SparseNlp<M> {
    fn n_var(&self) -> usize {
        self.layout.var_count()
    }

    fn n_con(&self) -> usize {
        self.mesh.n_nodes() * (self.d_x + self.d_g) + self.d_r
    }

    fn var_bounds(&self, i: usize) -> (f64, f64) {
        (self.var_lo[i], self.var_hi[i])
    }

    fn con_bounds(&self, r: usize) -> (f64, f64) {
        (self.con_lo[r], self.con_hi[r])
    }

    fn jac_pattern(&self) -> (&[u32], &[u32]) {
        (&self.jac_rows, &self.jac_cols)
    }

    fn hess_pattern(&self) -> (&[u32], &[u32]) {
        (&self.hess_rows, &self.hess_cols)
    }

    fn eval_fc(&self, z: &[f64], c: &mut [f64]) -> Result<f64, CallbackError> {
        assert_eq!(z.len(), self.n_var());
        assert_eq!(c.len(), self.n_con());
        let node_rows = self.mesh.n_nodes() * (self.d_x + self.d_g);
        let (c_nodes, c_tail) = c.split_at_mut(node_rows);
        let n_chunks = self.n_chunks();
        let row_stride = self.d_x + self.d_g;
        let partials: Result<Vec<f64>, CallbackError> = {
            let cw = DisjointWindows::new(c_nodes);
            let task = |ci: usize| {
                let qs = self.chunk_range(ci);
                // windows indexed by node ranges are disjoint across chunks
                let w = unsafe { cw.window(qs.start * row_stride, qs.len() * row_stride) };
                self.values_chunk(qs, z, w)
            };
            match &self.pool {
                None => (0..n_chunks).map(task).collect(),
                Some(pool) => pool.install(|| (0..n_chunks).into_par_iter().map(task).collect()),
            }
        };
        let mut obj: f64 = partials?.iter().sum();
        obj += self.boundary_values(z, c_tail)?;
        Ok(obj)
    }

    fn eval_derivs(
        &self,
        z: &[f64],
        sigma: f64,
        lam: &[f64],
        grad: &mut [f64],
        jac: &mut [f64],
        hess: &mut [f64],
    ) -> Result<(), CallbackError> {
        assert_eq!(z.len(), self.n_var());
        assert_eq!(lam.len(), self.n_con());
        assert_eq!(grad.len(), self.n_var());
        assert_eq!(jac.len(), self.jac_rows.len());
        assert_eq!(hess.len(), self.hess_rows.len());
        grad.fill(0.0);
        let n_nodes = self.mesh.n_nodes();
        let d_x = self.d_x;
        let node_hess = self.node_pairs.len();
        let n_chunks = self.n_chunks();
        let jac_node_len = n_nodes * self.node_jac_nnz;
        let hess_node_len = n_nodes * node_hess;

        let partials: Result<Vec<ChunkOut>, CallbackError> = {
            let (jac_nodes, _) = jac.split_at_mut(jac_node_len);
            let (hess_nodes, _) = hess.split_at_mut(hess_node_len);
            // x(t0) holds the first d_x gradient slots; node states follow
            let grad_nodes = &mut grad[d_x..d_x + n_nodes * d_x];
            let jw = DisjointWindows::new(jac_nodes);
            let hw = DisjointWindows::new(hess_nodes);
            let gw = DisjointWindows::new(grad_nodes);
            let task = |ci: usize| {
                let qs = self.chunk_range(ci);
                // windows indexed by node ranges are disjoint across chunks
                let (j_w, h_w, g_w) = unsafe {
                    (
                        jw.window(qs.start * self.node_jac_nnz, qs.len() * self.node_jac_nnz),
                        hw.window(qs.start * node_hess, qs.len() * node_hess),
                        gw.window(qs.start * d_x, qs.len() * d_x),
                    )
                };
                self.derivs_chunk(qs, z, sigma, lam, j_w, h_w, g_w)
            };
            match &self.pool {
                None => (0..n_chunks).map(task).collect(),
                Some(pool) => pool.install(|| (0..n_chunks).into_par_iter().map(task).collect()),
            }
        };
        // parameter-space contributions fold in fixed chunk order so the
        // result does not depend on the thread count
        let p0 = self.layout.param_start();
        let hess_shared =
            &mut hess[hess_node_len..hess_node_len + self.shared_pairs.len()];
        hess_shared.fill(0.0);
        for co in partials? {
            for (dst, src) in grad[p0..].iter_mut().zip(&co.grad_p) {
                *dst += src;
            }
            for (dst, src) in hess_shared.iter_mut().zip(&co.shared_hess) {
                *dst += src;
            }
        }
        let hess_bnd_start = hess_node_len + self.shared_pairs.len();
        let jac_tail = &mut jac[jac_node_len..];
        let hess_tail = &mut hess[hess_bnd_start..];
        self.boundary_derivs(z, sigma, lam, grad, jac_tail, hess_tail)
    }

    fn kkt_order(&self) -> Option<KktOrder> {
        let n_var = self.layout.var_count();
        let (d_x, d_g) = (self.d_x, self.d_g);
        let n_nodes = self.mesh.n_nodes();
        let mut order = Vec::with_capacity(n_var + self.n_con());
        for q in 0..n_nodes {
            let vs = self.layout.node_state_start(q);
            order.extend((vs..vs + d_x).map(|v| v as u32));
            let row = q * (d_x + d_g);
            order.extend((row..row + d_x + d_g).map(|r| (n_var + r) as u32));
        }
        // dense border: initial-state variables carry no objective curvature
        // (the quadrature nodes exclude t0), so they pivot stably only after
        // the interval-0 rows; parameters and boundary rows live here too
        let border_start = order.len();
        order.extend((0..d_x).map(|v| v as u32));
        let p0 = self.layout.param_start();
        order.extend((p0..p0 + self.d_p).map(|v| v as u32));
        let row0 = n_nodes * (d_x + d_g);
        order.extend((row0..row0 + self.d_r).map(|r| (n_var + r) as u32));
        Some(KktOrder { order, border_start })
    }
}

fn cb_err(e: EvalError, node: (usize, usize)) -> CallbackError {
    let EvalError::InvalidPoint(what) = e;
    if node.0 == usize::MAX {
        CallbackError::new(what)
    } else {
        CallbackError::at(node, what)
    }
}

/// global column of a boundary-local index over `(x0, xf, p)`
fn bnd_global(layout: &DecisionLayout, d_x: usize, a: usize) -> usize {
    if a < d_x {
        a
    } else if a < 2 * d_x {
        layout.last_state_start() + (a - d_x)
    } else {
        layout.param_index(a - 2 * d_x)
    }
}

fn count_unique(rows: &[u32], cols: &[u32]) -> usize {
    let mut pairs: Vec<(u32, u32)> = rows.iter().copied().zip(cols.iter().copied()).collect();
    pairs.sort_unstable();
    pairs.dedup();
    pairs.len()
}
