//! Small dense factorizations used by the node/weight computation and as the
//! fallback path of the KKT solver. Row-major storage throughout.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is singular at elimination step {0}")]
    Singular(usize),
    #[error("dimension mismatch: matrix is {n}x{n}, vector has length {len}")]
    Dimension { n: usize, len: usize },
}

/// LU factorization with partial pivoting of a dense row-major matrix.
pub struct LuFactor {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl LuFactor {
    pub fn factor(a: &[f64], n: usize) -> Result<Self, LinalgError> {
        assert_eq!(a.len(), n * n, "matrix storage must be n*n");
        let mut lu = a.to_vec();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for i in (k + 1)..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(LinalgError::Singular(k));
            }
            if p != k {
                piv.swap(p, k);
                for j in 0..n {
                    lu.swap(p * n + j, k * n + j);
                }
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let m = lu[i * n + k] / pivot;
                lu[i * n + k] = m;
                if m != 0.0 {
                    for j in (k + 1)..n {
                        lu[i * n + j] -= m * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, piv })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<(), LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::Dimension { n, len: b.len() });
        }
        // apply the row permutation, then forward/backward substitution
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[i] = b[self.piv[i]];
        }
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        b.copy_from_slice(&x);
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}

/// Inertia of a factored symmetric matrix: counts of positive, negative and
/// (numerically) zero pivots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub pos: usize,
    pub neg: usize,
    pub zero: usize,
}

/// Dense LDL^T without pivoting. Intended for symmetric quasidefinite
/// matrices (the regularized KKT systems), where the factorization with 1x1
/// pivots exists in any order; a vanishing pivot is reported, not repaired.
pub struct DenseLdl {
    n: usize,
    /// strictly lower triangle of L (unit diagonal implied), row-major packed
    l: Vec<f64>,
    d: Vec<f64>,
    pub inertia: Inertia,
}

const PIVOT_TINY: f64 = 1e-30;

impl DenseLdl {
    /// Factor a dense symmetric matrix given by its full row-major storage
    /// (only the lower triangle is read).
    pub fn factor(a: &[f64], n: usize) -> Result<Self, LinalgError> {
        assert_eq!(a.len(), n * n, "matrix storage must be n*n");
        let mut l = vec![0.0; n * (n + 1) / 2];
        let mut d = vec![0.0; n];
        let idx = |i: usize, j: usize| i * (i + 1) / 2 + j; // j <= i
        let mut inertia = Inertia { pos: 0, neg: 0, zero: 0 };
        for j in 0..n {
            let mut dj = a[j * n + j];
            for k in 0..j {
                let ljk = l[idx(j, k)];
                dj -= ljk * ljk * d[k];
            }
            if !dj.is_finite() {
                return Err(LinalgError::Singular(j));
            }
            if dj.abs() <= PIVOT_TINY {
                inertia.zero += 1;
            } else if dj > 0.0 {
                inertia.pos += 1;
            } else {
                inertia.neg += 1;
            }
            d[j] = dj;
            if dj.abs() <= PIVOT_TINY {
                // leave column zero; caller must treat the factor as singular
                continue;
            }
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[idx(i, k)] * d[k] * l[idx(j, k)];
                }
                l[idx(i, j)] = s / dj;
            }
        }
        Ok(Self { n, l, d, inertia })
    }

    pub fn is_singular(&self) -> bool {
        self.inertia.zero > 0
    }

    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<(), LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::Dimension { n, len: b.len() });
        }
        let idx = |i: usize, j: usize| i * (i + 1) / 2 + j;
        for i in 0..n {
            let mut s = b[i];
            for j in 0..i {
                s -= self.l[idx(i, j)] * b[j];
            }
            b[i] = s;
        }
        for i in 0..n {
            b[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in (i + 1)..n {
                s -= self.l[idx(j, i)] * b[j];
            }
            b[i] = s;
        }
        Ok(())
    }
}

/// Envelope (skyline) LDL^T without pivoting: row `i` of the lower triangle
/// is stored contiguously from its first structural column `first[i]` up to
/// the diagonal. Fill stays inside the envelope, so the symbolic shape is
/// fixed once and refactorization reuses the same storage. Intended for
/// regularized quasidefinite KKT matrices, where 1x1 pivots are stable in
/// any order; a vanishing pivot is counted, not repaired.
pub struct SkylineLdl {
    n: usize,
    first: Vec<usize>,
    /// row `i` occupies `vals[ptr[i]..ptr[i + 1]]`, columns `first[i]..=i`
    ptr: Vec<usize>,
    vals: Vec<f64>,
    d: Vec<f64>,
    pub inertia: Inertia,
}

impl SkylineLdl {
    /// Allocate storage for the envelope described by `first` (first
    /// structural column of every row; `first[i] <= i`).
    pub fn symbolic(first: Vec<usize>) -> Self {
        let n = first.len();
        let mut ptr = Vec::with_capacity(n + 1);
        ptr.push(0);
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i, "row profile must not start past the diagonal");
            ptr.push(ptr[i] + (i - f + 1));
        }
        let nnz = ptr[n];
        Self {
            n,
            first,
            ptr,
            vals: vec![0.0; nnz],
            d: vec![0.0; n],
            inertia: Inertia { pos: 0, neg: 0, zero: 0 },
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn envelope_len(&self) -> usize {
        self.vals.len()
    }

    /// flat storage slot of entry `(i, j)`, `first[i] <= j <= i`
    #[inline]
    pub fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j >= self.first[i] && j <= i, "entry outside the envelope");
        self.ptr[i] + (j - self.first[i])
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    /// `y += A x` with the symmetric matrix `A` given by `vals` in this
    /// envelope's layout. Takes the values externally because [`factor`]
    /// overwrites the internal storage with the factors.
    ///
    /// [`factor`]: SkylineLdl::factor
    pub fn mat_vec_accum(&self, vals: &[f64], x: &[f64], y: &mut [f64]) {
        assert_eq!(vals.len(), self.vals.len(), "values must fill the envelope");
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &vals[self.ptr[i]..self.ptr[i + 1]];
            let mut acc = 0.0;
            for (k, &v) in row.iter().enumerate() {
                let j = fi + k;
                acc += v * x[j];
                if j < i {
                    y[j] += v * x[i];
                }
            }
            y[i] += acc;
        }
    }

    /// Factor in place; afterwards `vals` holds unit-lower `L` (diagonal
    /// slots hold the pivots) and solves become available.
    pub fn factor(&mut self) -> Inertia {
        let mut inertia = Inertia { pos: 0, neg: 0, zero: 0 };
        for i in 0..self.n {
            let fi = self.first[i];
            let (prev, rest) = self.vals.split_at_mut(self.ptr[i]);
            let row_i = &mut rest[..self.ptr[i + 1] - self.ptr[i]];
            // c_j = A_ij - sum_k c_k L_jk, scanning left to right so every
            // c_k is final when used
            for j in (fi + 1)..i {
                let start = fi.max(self.first[j]);
                let row_j_off = self.ptr[j] - self.first[j];
                let mut s = row_i[j - fi];
                for k in start..j {
                    s -= row_i[k - fi] * prev[row_j_off + k];
                }
                row_i[j - fi] = s;
            }
            // pivot and conversion c_k -> L_ik = c_k / d_k
            let mut di = row_i[i - fi];
            for k in fi..i {
                let ck = row_i[k - fi];
                let dk = self.d[k];
                let lik = if dk.abs() <= PIVOT_TINY { 0.0 } else { ck / dk };
                di -= ck * lik;
                row_i[k - fi] = lik;
            }
            if di.abs() <= PIVOT_TINY {
                inertia.zero += 1;
            } else if di > 0.0 {
                inertia.pos += 1;
            } else {
                inertia.neg += 1;
            }
            self.d[i] = di;
            row_i[i - fi] = di;
        }
        self.inertia = inertia;
        inertia
    }

    pub fn is_singular(&self) -> bool {
        self.inertia.zero > 0
    }

    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<(), LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::Dimension { n: self.n, len: b.len() });
        }
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.vals[self.ptr[i]..self.ptr[i + 1]];
            let mut s = b[i];
            for k in fi..i {
                s -= row[k - fi] * b[k];
            }
            b[i] = s;
        }
        for i in 0..self.n {
            let di = self.d[i];
            if di.abs() <= PIVOT_TINY {
                return Err(LinalgError::Singular(i));
            }
            b[i] /= di;
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.vals[self.ptr[i]..self.ptr[i + 1]];
            let bi = b[i];
            for k in fi..i {
                b[k] -= row[k - fi] * bi;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat_vec(a: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum())
            .collect()
    }

    #[test]
    fn lu_solves_random_systems() {
        // deterministic pseudo-random fill, no RNG dependency needed here
        let n = 17;
        let mut a = vec![0.0; n * n];
        let mut s = 1234.5_f64;
        for v in a.iter_mut() {
            s = (s * 997.0 + 1.0).rem_euclid(1013.0);
            *v = s / 1013.0 - 0.5;
        }
        for i in 0..n {
            a[i * n + i] += 3.0; // make it comfortably nonsingular
        }
        let xs: Vec<f64> = (0..n).map(|i| (i as f64) * 0.3 - 2.0).collect();
        let b = mat_vec(&a, n, &xs);
        let lu = LuFactor::factor(&a, n).expect("factor");
        let x = lu.solve(&b).expect("solve");
        for i in 0..n {
            assert!(
                (x[i] - xs[i]).abs() < 1e-10,
                "component {i}: got {}, want {}",
                x[i],
                xs[i]
            );
        }
    }

    #[test]
    fn lu_reports_singularity() {
        let a = vec![1.0, 2.0, 2.0, 4.0];
        assert!(LuFactor::factor(&a, 2).is_err());
    }

    #[test]
    fn ldl_reconstructs_and_counts_inertia() {
        // symmetric quasidefinite: [[4,1,2],[1,-3,0.5],[2,0.5,-5]] is not
        // quasidefinite as-is, so shift blocks to make pivots well defined
        let n = 3;
        let a = [4.0, 1.0, 2.0, 1.0, -3.0, 0.5, 2.0, 0.5, -5.0];
        let f = DenseLdl::factor(&a, n).expect("factor");
        assert_eq!(f.inertia, Inertia { pos: 1, neg: 2, zero: 0 });
        let b = [1.0, -2.0, 0.25];
        let mut x = b;
        f.solve_in_place(&mut x).expect("solve");
        let r = mat_vec(&a, n, &x);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-12, "residual {i} = {}", r[i] - b[i]);
        }
    }

    #[test]
    fn ldl_flags_zero_pivot() {
        let a = [1.0, 1.0, 1.0, 1.0];
        let f = DenseLdl::factor(&a, 2).expect("factor");
        assert!(f.is_singular());
        assert_eq!(f.inertia.zero, 1);
    }

    /// deterministic banded quasidefinite test matrix with a dense last row
    fn skyline_fixture(n: usize, bw: usize) -> (Vec<usize>, Vec<f64>) {
        let mut first: Vec<usize> = (0..n).map(|i| i.saturating_sub(bw)).collect();
        first[n - 1] = 0;
        let mut a = vec![0.0; n * n];
        let mut s = 77.0_f64;
        let mut rnd = move || {
            s = (s * 613.0 + 3.0).rem_euclid(811.0);
            s / 811.0 - 0.5
        };
        for i in 0..n {
            for j in first[i]..=i {
                let v = rnd();
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
            // alternate-sign diagonal dominance: quasidefinite by blocks
            let sign = if i % 3 == 2 { -1.0 } else { 1.0 };
            a[i * n + i] = sign * (4.0 + i as f64 * 0.1);
        }
        (first, a)
    }

    #[test]
    fn skyline_matches_dense_factorization() {
        let n = 24;
        let (first, a) = skyline_fixture(n, 3);
        let mut sky = SkylineLdl::symbolic(first.clone());
        for i in 0..n {
            for j in first[i]..=i {
                let slot = sky.slot(i, j);
                sky.values_mut()[slot] = a[i * n + j];
            }
        }
        let inertia = sky.factor();
        let dense = DenseLdl::factor(&a, n).expect("dense factor");
        assert_eq!(inertia, dense.inertia, "both factorizations see the same inertia");

        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut x = b.clone();
        sky.solve_in_place(&mut x).expect("skyline solve");
        let r = mat_vec(&a, n, &x);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-10, "residual {i} = {}", r[i] - b[i]);
        }
    }

    #[test]
    fn skyline_mat_vec_matches_dense_product() {
        let n = 15;
        let (first, a) = skyline_fixture(n, 4);
        let sky = SkylineLdl::symbolic(first.clone());
        let mut vals = vec![0.0; sky.envelope_len()];
        for i in 0..n {
            for j in first[i]..=i {
                vals[sky.slot(i, j)] = a[i * n + j];
            }
        }
        let x: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let mut y = vec![0.0; n];
        sky.mat_vec_accum(&vals, &x, &mut y);
        let want = mat_vec(&a, n, &x);
        for i in 0..n {
            assert!((y[i] - want[i]).abs() < 1e-13, "row {i}: {} vs {}", y[i], want[i]);
        }
    }

    #[test]
    fn skyline_inertia_on_signed_diagonals() {
        // identity: all pivots positive
        let mut sky = SkylineLdl::symbolic(vec![0, 1, 2, 3]);
        for i in 0..4 {
            let slot = sky.slot(i, i);
            sky.values_mut()[slot] = 1.0;
        }
        assert_eq!(sky.factor(), Inertia { pos: 4, neg: 0, zero: 0 });

        // diag(1, -1): one of each
        let mut sky = SkylineLdl::symbolic(vec![0, 1]);
        let s0 = sky.slot(0, 0);
        sky.values_mut()[s0] = 1.0;
        let s1 = sky.slot(1, 1);
        sky.values_mut()[s1] = -1.0;
        assert_eq!(sky.factor(), Inertia { pos: 1, neg: 1, zero: 0 });
    }
}
