//! Time meshes and the layout of the decision vector.
//!
//! A mesh splits `[t0, tf]` into intervals, each carrying the same
//! collocation scheme. Because the last collocation node of every interval
//! sits at the interval's right end, the state there is shared with the next
//! interval's support point: the decision vector stores each mesh state
//! exactly once, `z = [x(t0), states at all collocation nodes, parameters]`.

use crate::collocation::CollocationScheme;

#[derive(Debug, Clone)]
pub struct Mesh {
    pub t0: f64,
    pub tf: f64,
    /// interval boundaries, `n + 1` ascending values with `breaks[0] == t0`
    pub breaks: Vec<f64>,
    pub scheme: CollocationScheme,
}

impl Mesh {
    pub fn uniform(t0: f64, tf: f64, n_intervals: usize, m: usize) -> Self {
        assert!(n_intervals >= 1, "need at least one interval");
        assert!(tf > t0, "time window must have positive length");
        let n = n_intervals;
        let breaks: Vec<f64> = (0..=n)
            .map(|i| t0 + (tf - t0) * (i as f64) / (n as f64))
            .collect();
        Self { t0, tf, breaks, scheme: CollocationScheme::new(m) }
    }

    /// Non-equidistant mesh from explicit interval boundaries.
    pub fn from_breaks(breaks: Vec<f64>, m: usize) -> Self {
        assert!(breaks.len() >= 2, "need at least one interval");
        assert!(
            breaks.windows(2).all(|w| w[1] > w[0]),
            "interval boundaries must be strictly increasing"
        );
        let t0 = breaks[0];
        let tf = *breaks.last().unwrap();
        Self { t0, tf, breaks, scheme: CollocationScheme::new(m) }
    }

    /// All distinct mesh times in order: `t0` followed by every collocation
    /// node. Interval ends are stored once (the next interval starts there).
    pub fn all_times(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(1 + self.n_nodes());
        out.push(self.t0);
        for i in 0..self.n_intervals() {
            for j in 1..=self.m() {
                out.push(self.node_time(i, j));
            }
        }
        out
    }

    #[inline]
    pub fn n_intervals(&self) -> usize {
        self.breaks.len() - 1
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.scheme.m
    }

    /// total number of collocation nodes
    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_intervals() * self.m()
    }

    #[inline]
    pub fn dt(&self, i: usize) -> f64 {
        self.breaks[i + 1] - self.breaks[i]
    }

    /// time of collocation node `j` (1-based) in interval `i`
    #[inline]
    pub fn node_time(&self, i: usize, j: usize) -> f64 {
        debug_assert!((1..=self.m()).contains(&j));
        self.breaks[i] + self.scheme.nodes[j - 1] * self.dt(i)
    }

    /// time of support point `j` (0 = interval start) in interval `i`
    #[inline]
    pub fn support_time(&self, i: usize, j: usize) -> f64 {
        if j == 0 {
            self.breaks[i]
        } else {
            self.node_time(i, j)
        }
    }
}

/// Index arithmetic for the decision vector
/// `z = [x_{0,0} | x_{i,j} for i in 0..n, j in 1..=m | p]`.
///
/// `x_{i,0}` (the support state at the start of interval `i`) aliases
/// `x_{i-1,m}` for `i > 0`; only `x_{0,0}` occupies its own slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecisionLayout {
    pub d_x: usize,
    pub d_p: usize,
    pub n_intervals: usize,
    pub m: usize,
}

impl DecisionLayout {
    pub fn new(d_x: usize, d_p: usize, n_intervals: usize, m: usize) -> Self {
        assert!(d_x >= 1 && n_intervals >= 1 && m >= 1);
        Self { d_x, d_p, n_intervals, m }
    }

    pub fn for_mesh(mesh: &Mesh, d_x: usize, d_p: usize) -> Self {
        Self::new(d_x, d_p, mesh.n_intervals(), mesh.m())
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_intervals * self.m
    }

    #[inline]
    pub fn var_count(&self) -> usize {
        (1 + self.n_nodes()) * self.d_x + self.d_p
    }

    /// flat node index of collocation node (i, j), `j` 1-based
    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_intervals && (1..=self.m).contains(&j));
        i * self.m + (j - 1)
    }

    /// offset of the state block at support point (i, j), `j` in `0..=m`
    #[inline]
    pub fn state_start(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_intervals && j <= self.m);
        if j == 0 {
            if i == 0 {
                0
            } else {
                self.state_start(i - 1, self.m)
            }
        } else {
            self.d_x * (1 + self.node_index(i, j))
        }
    }

    /// offset of the state block at a flat node index
    #[inline]
    pub fn node_state_start(&self, q: usize) -> usize {
        debug_assert!(q < self.n_nodes());
        self.d_x * (1 + q)
    }

    /// offset of the final state (last node of the last interval)
    #[inline]
    pub fn last_state_start(&self) -> usize {
        self.state_start(self.n_intervals - 1, self.m)
    }

    #[inline]
    pub fn param_start(&self) -> usize {
        (1 + self.n_nodes()) * self.d_x
    }

    #[inline]
    pub fn param_index(&self, k: usize) -> usize {
        debug_assert!(k < self.d_p);
        self.param_start() + k
    }

    /// Inverse of the flat indexing: classify a decision-vector slot.
    pub fn var_info(&self, flat: usize) -> VarInfo {
        assert!(flat < self.var_count(), "flat index out of range");
        if flat >= self.param_start() {
            return VarInfo::Param(flat - self.param_start());
        }
        let block = flat / self.d_x;
        let state = flat % self.d_x;
        if block == 0 {
            VarInfo::InitialState(state)
        } else {
            VarInfo::NodeState { node: block - 1, state }
        }
    }
}

/// What a flat decision-vector index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarInfo {
    /// component of `x(t0)`
    InitialState(usize),
    /// component of the state at a flat collocation-node index
    NodeState { node: usize, state: usize },
    /// parameter index
    Param(usize),
}
