//! Compressed sparse row storage and the stiffness/mass operator pair.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Square or rectangular matrix in compressed sparse row form.
///
/// Column indices inside each row are sorted and unique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    ///
    /// Duplicates are summed in the order they appear, so the result is
    /// deterministic for a deterministic triplet list.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(invalid(format!(
                    "triplet ({i},{j}) outside a {nrows}x{ncols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(invalid(format!("non-finite entry at ({i},{j})")));
            }
        }
        let mut counts = vec![0usize; nrows + 1];
        for &(i, _, _) in triplets {
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        // Stable bucket by row, then stable sort by column inside each row.
        let mut order = vec![0usize; triplets.len()];
        let mut next = counts.clone();
        for (t, &(i, _, _)) in triplets.iter().enumerate() {
            order[next[i]] = t;
            next[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for i in 0..nrows {
            let slice = &mut order[counts[i]..counts[i + 1]];
            slice.sort_by_key(|&t| triplets[t].1);
            let mut last: Option<usize> = None;
            for &t in slice.iter() {
                let (_, j, v) = triplets[t];
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { nrows, ncols, row_ptr, col_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    /// Dense row-major input; exact zeros are skipped.
    pub fn from_dense(n: usize, m: usize, a: &[f64]) -> Result<Self> {
        if a.len() != n * m {
            return Err(Error::DimensionMismatch { expected: n * m, got: a.len() });
        }
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..m {
                let v = a[i * m + j];
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, m, &t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entries of row `i` as `(column, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                t.push((i, j, v));
            }
        }
        t
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `xᵀ A x` for square matrices.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let ax = self.mul_vec(x);
        ax.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        ay.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn is_symmetric(&self) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        (0..self.nrows).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.nrows).all(|i| self.row(i).all(|(j, _)| j == i))
    }

    /// Principal submatrix on the listed indices (which must be increasing).
    pub fn principal_submatrix(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.ncols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut t = Vec::new();
        for (new_i, &old_i) in keep.iter().enumerate() {
            for (j, v) in self.row(old_i) {
                if map[j] != usize::MAX {
                    t.push((new_i, map[j], v));
                }
            }
        }
        Self::from_triplets(keep.len(), keep.len(), &t).expect("indices are in range")
    }

    /// Dense row-major copy; intended for small matrices and tests.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.nrows * self.ncols];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                a[i * self.ncols + j] = v;
            }
        }
        a
    }

    /// `D A D` for a diagonal `D` given by its entries.
    pub fn scale_symmetric(&self, d: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[p] *= d[i] * d[self.col_idx[p]];
            }
        }
        out
    }

    /// `A + s B` for matrices of equal shape.
    pub fn add_scaled(&self, s: f64, b: &CsrMatrix) -> Self {
        let mut t = self.triplets();
        t.extend(b.triplets().into_iter().map(|(i, j, v)| (i, j, s * v)));
        Self::from_triplets(self.nrows, self.ncols, &t).expect("shapes agree")
    }

    pub fn max_abs_diag(&self) -> f64 {
        self.diag().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Symmetric stiffness / mass pair of a generalized eigenproblem `K u = λ M u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseOperator {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
}

impl SparseOperator {
    /// Checks shapes, exact symmetry and positive mass diagonal.
    pub fn new(stiffness: CsrMatrix, mass: CsrMatrix) -> Result<Self> {
        let n = stiffness.nrows();
        if stiffness.ncols() != n || mass.nrows() != n || mass.ncols() != n {
            return Err(invalid("stiffness and mass must be square and of equal size"));
        }
        if !stiffness.is_symmetric() {
            return Err(invalid("stiffness matrix is not symmetric"));
        }
        if !mass.is_symmetric() {
            return Err(invalid("mass matrix is not symmetric"));
        }
        if let Some(i) = mass.diag().iter().position(|&m| m.is_nan() || m <= 0.0) {
            return Err(invalid(format!("mass diagonal entry {i} is not positive")));
        }
        Ok(Self { stiffness, mass })
    }

    pub fn dimension(&self) -> usize {
        self.stiffness.nrows()
    }

    pub fn rayleigh(&self, u: &[f64]) -> f64 {
        self.stiffness.quad_form(u) / self.mass.quad_form(u)
    }

    /// Smallest value of `⟨Ku,u⟩/⟨u,u⟩` over `samples` random vectors.
    ///
    /// A negative result well below round-off signals an indefinite stiffness.
    pub fn psd_probe(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.dimension();
        let mut worst = f64::INFINITY;
        for _ in 0..samples {
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nn: f64 = u.iter().map(|x| x * x).sum();
            if nn > 0.0 {
                worst = worst.min(self.stiffness.quad_form(&u) / nn);
            }
        }
        worst
    }
}

/// Writes the lower triangle of a symmetric matrix in Matrix Market
/// coordinate format.
pub fn write_matrix_market<W: Write>(a: &CsrMatrix, mut w: W) -> Result<()> {
    let symmetric = a.is_symmetric();
    let kind = if symmetric { "symmetric" } else { "general" };
    writeln!(w, "%%MatrixMarket matrix coordinate real {kind}")?;
    let entries: Vec<(usize, usize, f64)> = a
        .triplets()
        .into_iter()
        .filter(|&(i, j, _)| !symmetric || j <= i)
        .collect();
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// Reads a real coordinate Matrix Market file (general or symmetric).
pub fn read_matrix_market<R: BufRead>(r: R) -> Result<CsrMatrix> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| invalid("empty Matrix Market input"))??;
    let lower = header.to_ascii_lowercase();
    if !lower.starts_with("%%matrixmarket matrix coordinate real") {
        return Err(invalid(format!("unsupported Matrix Market header: {header}")));
    }
    let symmetric = lower.contains("symmetric");
    let mut size: Option<(usize, usize, usize)> = None;
    let mut t = Vec::new();
    for line in lines {
        let line = line?;
        let s = line.trim();
        if s.is_empty() || s.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = s.split_whitespace().collect();
        let bad = || invalid(format!("malformed Matrix Market line: {s}"));
        if size.is_none() {
            if parts.len() != 3 {
                return Err(bad());
            }
            let p: Vec<usize> = parts
                .iter()
                .map(|x| x.parse().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            size = Some((p[0], p[1], p[2]));
            continue;
        }
        if parts.len() != 3 {
            return Err(bad());
        }
        let i: usize = parts[0].parse().map_err(|_| bad())?;
        let j: usize = parts[1].parse().map_err(|_| bad())?;
        let v: f64 = parts[2].parse().map_err(|_| bad())?;
        if i == 0 || j == 0 {
            return Err(bad());
        }
        t.push((i - 1, j - 1, v));
        if symmetric && i != j {
            t.push((j - 1, i - 1, v));
        }
    }
    let (n, m, _) = size.ok_or_else(|| invalid("Matrix Market size line missing"))?;
    CsrMatrix::from_triplets(n, m, &t)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
