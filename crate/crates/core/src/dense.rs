//! Small dense kernels: cyclic Jacobi eigensolver and LDLᵀ factorization.
//!
//! Matrices are square and stored row-major in a flat slice.

use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns of a row-major `n×n` matrix.
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    // Symmetrize against round-off in the caller's assembly.
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = s;
            m[j * n + i] = s;
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..i {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off.sqrt() <= 1e-15 * frob.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m[a * n + a].total_cmp(&m[b * n + b]));
    let values: Vec<f64> = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vecs = vec![0.0; n * n];
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vecs[k * n + new] = v[k * n + old];
        }
    }
    (values, vecs)
}

/// Dense `A = L D Lᵀ` with unit lower-triangular `L`.
#[derive(Debug, Clone)]
pub struct DenseLdl {
    n: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl DenseLdl {
    /// Factors a symmetric positive definite matrix; fails on a pivot that is
    /// not safely positive.
    pub fn new(a: &[f64], n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let scale = (0..n).fold(0.0f64, |m, i| m.max(a[i * n + i].abs()));
        let tiny = scale * 1e-14;
        let mut l = vec![0.0; n * n];
        let mut d = vec![0.0; n];
        for j in 0..n {
            let mut dj = a[j * n + j];
            for k in 0..j {
                dj -= l[j * n + k] * l[j * n + k] * d[k];
            }
            if !(dj > tiny) {
                return Err(Error::NotPositiveDefinite { column: j, pivot: dj });
            }
            d[j] = dj;
            l[j * n + j] = 1.0;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k] * d[k];
                }
                l[i * n + j] = s / dj;
            }
        }
        Ok(Self { n, l, d })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s;
        }
        for i in 0..n {
            b[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s;
        }
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }
}

/// Solves the dense generalized problem `A x = λ B x` with `B` positive
/// definite, returning ascending eigenvalues and `B`-orthonormal vectors as
/// columns of a row-major matrix.
pub fn generalized_symmetric_eigen(a: &[f64], b: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    // B = C Cᵀ with C = L D^{1/2}; reduce to C⁻¹ A C⁻ᵀ.
    let f = DenseLdl::new(b, n)?;
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            c[i * n + j] = f.l[i * n + j] * f.d[j].sqrt();
        }
    }
    let lower_solve = |rhs: &mut [f64]| {
        for i in 0..n {
            let mut s = rhs[i];
            for k in 0..i {
                s -= c[i * n + k] * rhs[k];
            }
            rhs[i] = s / c[i * n + i];
        }
    };
    // W = C⁻¹ A (column by column on Aᵀ = A), then S = C⁻¹ Wᵀ.
    let mut w = vec![0.0; n * n];
    for j in 0..n {
        let mut col: Vec<f64> = (0..n).map(|i| a[i * n + j]).collect();
        lower_solve(&mut col);
        for i in 0..n {
            w[i * n + j] = col[i];
        }
    }
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        let mut col: Vec<f64> = (0..n).map(|j| w[i * n + j]).collect();
        lower_solve(&mut col);
        for j in 0..n {
            s[j * n + i] = col[j];
        }
    }
    let (vals, y) = symmetric_eigen(&s, n);
    // x = C⁻ᵀ y.
    let mut x = vec![0.0; n * n];
    for k in 0..n {
        let mut col: Vec<f64> = (0..n).map(|i| y[i * n + k]).collect();
        for i in (0..n).rev() {
            let mut t = col[i];
            for r in i + 1..n {
                t -= c[r * n + i] * col[r];
            }
            col[i] = t / c[i * n + i];
        }
        for i in 0..n {
            x[i * n + k] = col[i];
        }
    }
    Ok((vals, x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_two_by_two() {
        let (vals, vecs) = symmetric_eigen(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((vals[0] - 1.0).abs() < 1e-14);
        assert!((vals[1] - 3.0).abs() < 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((vecs[0].abs() - r).abs() < 1e-14);
        assert!((vecs[0] + vecs[2]).abs() < 1e-14);
    }

    #[test]
    fn ldl_rejects_indefinite() {
        assert!(DenseLdl::new(&[1.0, 2.0, 2.0, 1.0], 2).is_err());
    }

    #[test]
    fn ldl_solves() {
        let a = [4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0];
        let f = DenseLdl::new(&a, 3).unwrap();
        let mut b = vec![1.0, 2.0, 3.0];
        f.solve_in_place(&mut b);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * b[j]).sum();
            assert!((r - (i as f64 + 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn generalized_diagonal_pair() {
        let a = [2.0, 0.0, 0.0, 6.0];
        let b = [1.0, 0.0, 0.0, 2.0];
        let (vals, _) = generalized_symmetric_eigen(&a, &b, 2).unwrap();
        assert!((vals[0] - 2.0).abs() < 1e-14);
        assert!((vals[1] - 3.0).abs() < 1e-14);
    }
}
