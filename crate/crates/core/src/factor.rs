//! Sparse `LDLᵀ` factorization of symmetric positive definite matrices.
//!
//! The ordering is a minimum-degree elimination on the adjacency graph. The
//! simulated elimination doubles as the symbolic factorization: the
//! neighbourhood of a vertex at the moment it is eliminated is exactly the
//! sparsity pattern of its column in `L`. Trees and chains therefore factor
//! without fill. Small or dense inputs fall back to a dense factorization.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

use crate::dense::DenseLdl;
use crate::error::{invalid, Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone)]
enum Storage {
    Sparse {
        /// `perm[new] = old`.
        perm: Vec<usize>,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        lvals: Vec<f64>,
        d: Vec<f64>,
    },
    Dense(DenseLdl),
}

/// Factor `A = P L D Lᵀ Pᵀ` ready for repeated solves.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    storage: Storage,
}

const DENSE_CUTOFF: usize = 48;

impl LdlFactor {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(invalid("LDLᵀ needs a square matrix"));
        }
        let dense_enough = n <= DENSE_CUTOFF || (a.nnz() as f64) > 0.2 * (n as f64) * (n as f64);
        if dense_enough {
            let f = DenseLdl::new(&a.to_dense(), n)?;
            return Ok(Self { n, storage: Storage::Dense(f) });
        }
        let (perm, patterns) = minimum_degree(a);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for pat in &patterns {
            let mut rows: Vec<usize> = pat.iter().map(|&o| iperm[o]).collect();
            rows.sort_unstable();
            row_idx.extend(rows);
            col_ptr.push(row_idx.len());
        }
        // Columns k having row j in their pattern, in increasing k.
        let mut row_cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for k in 0..n {
            for &i in &row_idx[col_ptr[k]..col_ptr[k + 1]] {
                row_cols[i].push(k);
            }
        }
        let mut lvals = vec![0.0; row_idx.len()];
        let mut d = vec![0.0; n];
        let mut cursor: Vec<usize> = col_ptr[..n].to_vec();
        let mut work = vec![0.0; n];
        let scale = a.max_abs_diag();
        let tiny = scale * 1e-14;
        for j in 0..n {
            let old_j = perm[j];
            for (old_c, v) in a.row(old_j) {
                let i = iperm[old_c];
                if i >= j {
                    work[i] += v;
                }
            }
            for &k in &row_cols[j] {
                let pos = cursor[k];
                debug_assert_eq!(row_idx[pos], j);
                let f = lvals[pos] * d[k];
                for t in pos..col_ptr[k + 1] {
                    work[row_idx[t]] -= lvals[t] * f;
                }
                cursor[k] += 1;
            }
            let dj = work[j];
            work[j] = 0.0;
            if !(dj > tiny) {
                return Err(Error::NotPositiveDefinite { column: old_j, pivot: dj });
            }
            d[j] = dj;
            for t in col_ptr[j]..col_ptr[j + 1] {
                let i = row_idx[t];
                lvals[t] = work[i] / dj;
                work[i] = 0.0;
            }
        }
        Ok(Self { n, storage: Storage::Sparse { perm, col_ptr, row_idx, lvals, d } })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored off-diagonal entries of `L`.
    pub fn fill(&self) -> usize {
        match &self.storage {
            Storage::Sparse { row_idx, .. } => row_idx.len(),
            Storage::Dense(_) => self.n * (self.n.saturating_sub(1)) / 2,
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        match &self.storage {
            Storage::Dense(f) => f.solve_in_place(b),
            Storage::Sparse { perm, col_ptr, row_idx, lvals, d } => {
                let mut y: Vec<f64> = perm.iter().map(|&o| b[o]).collect();
                for j in 0..self.n {
                    let yj = y[j];
                    if yj != 0.0 {
                        for t in col_ptr[j]..col_ptr[j + 1] {
                            y[row_idx[t]] -= lvals[t] * yj;
                        }
                    }
                }
                for j in 0..self.n {
                    y[j] /= d[j];
                }
                for j in (0..self.n).rev() {
                    let mut s = y[j];
                    for t in col_ptr[j]..col_ptr[j + 1] {
                        s -= lvals[t] * y[row_idx[t]];
                    }
                    y[j] = s;
                }
                for (new, &old) in perm.iter().enumerate() {
                    b[old] = y[new];
                }
            }
        }
    }
}

/// Minimum-degree elimination order and, per eliminated vertex, the set of
/// not-yet-eliminated neighbours at elimination time (original labels).
fn minimum_degree(a: &CsrMatrix) -> (Vec<usize>, Vec<Vec<usize>>) {
    let n = a.nrows();
    let mut adj: Vec<HashSet<usize>> = vec![HashSet::new(); n];
    for i in 0..n {
        for (j, _) in a.row(i) {
            if i != j {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
    }
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        (0..n).map(|i| Reverse((adj[i].len(), i))).collect();
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut patterns = Vec::with_capacity(n);
    while let Some(Reverse((deg, p))) = heap.pop() {
        if done[p] || adj[p].len() != deg {
            continue;
        }
        done[p] = true;
        let mut nb: Vec<usize> = adj[p].drain().collect();
        nb.sort_unstable();
        for &u in &nb {
            adj[u].remove(&p);
        }
        for x in 0..nb.len() {
            for y in x + 1..nb.len() {
                if adj[nb[x]].insert(nb[y]) {
                    adj[nb[y]].insert(nb[x]);
                }
            }
        }
        for &u in &nb {
            heap.push(Reverse((adj[u].len(), u)));
        }
        order.push(p);
        patterns.push(nb);
    }
    (order, patterns)
}
