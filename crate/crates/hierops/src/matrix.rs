//! Dense symmetric matrix storage and the low-level eigensolver binding.
//!
//! `SymMatrix` stores the full square row-major and only exposes symmetric
//! writes, so built matrices are exactly symmetric by construction. The
//! eigensolver is faer's self-adjoint decomposition, run sequentially so
//! results are bitwise reproducible regardless of worker count.

use std::ops::Range;
use std::sync::Once;

use crate::error::{Error, Result};

fn faer_sequential() {
    static INIT: Once = Once::new();
    INIT.call_once(|| {
        faer::set_global_parallelism(faer::Par::Seq);
    });
}

/// Dense real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    /// Build from the upper triangle of `f`; `f(j, k)` is evaluated once per
    /// unordered pair with `j <= k` and mirrored.
    pub fn from_upper_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = SymMatrix::zeros(dim);
        for j in 0..dim {
            for k in j..dim {
                let v = f(j, k);
                m.data[j * dim + k] = v;
                m.data[k * dim + j] = v;
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.data[j * self.dim + k]
    }

    /// Symmetric write of the pair `(j, k)` and `(k, j)`.
    #[inline]
    pub fn set_sym(&mut self, j: usize, k: usize, v: f64) {
        self.data[j * self.dim + k] = v;
        self.data[k * self.dim + j] = v;
    }

    /// Symmetric in-place add.
    #[inline]
    pub fn add_sym(&mut self, j: usize, k: usize, v: f64) {
        self.data[j * self.dim + k] += v;
        if j != k {
            self.data[k * self.dim + j] += v;
        }
    }

    pub fn add_to_diagonal(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.dim);
        for (j, x) in v.iter().enumerate() {
            self.data[j * self.dim + j] += x;
        }
    }

    /// Add `other`, whose rows/columns live on the index range `at` of self.
    pub fn add_embedded(&mut self, at: Range<usize>, other: &SymMatrix) {
        assert_eq!(at.len(), other.dim);
        assert!(at.end <= self.dim);
        for (jo, j) in at.clone().enumerate() {
            for (ko, k) in at.clone().enumerate() {
                self.data[j * self.dim + k] += other.data[jo * other.dim + ko];
            }
        }
    }

    /// Sum of `self + other` entrywise.
    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, other.dim);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        SymMatrix {
            dim: self.dim,
            data,
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|j| self.data[j * self.dim + j]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn is_symmetric(&self) -> bool {
        for j in 0..self.dim {
            for k in 0..j {
                if self.data[j * self.dim + k] != self.data[k * self.dim + j] {
                    return false;
                }
            }
        }
        true
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim);
        let mut out = vec![0.0; self.dim];
        for j in 0..self.dim {
            let row = &self.data[j * self.dim..(j + 1) * self.dim];
            out[j] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        out
    }

    fn to_faer(&self) -> faer::Mat<f64> {
        faer::Mat::from_fn(self.dim, self.dim, |i, j| self.data[i * self.dim + j])
    }

    fn fingerprint(&self) -> String {
        format!(
            "dim={} trace={:.6e} max|entry|={:.6e}",
            self.dim,
            self.trace(),
            self.max_abs()
        )
    }
}

/// Orthonormal eigenvector family, columns in eigenvalue order.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenVectors {
    dim: usize,
    /// column-major: column `i` is `data[i*dim..(i+1)*dim]`
    data: Vec<f64>,
}

impl EigenVectors {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// `psi_i(site)` — amplitude of eigenvector `i` at a site.
    #[inline]
    pub fn amplitude(&self, site: usize, i: usize) -> f64 {
        self.data[i * self.dim + site]
    }
}

/// Eigenvalues of a symmetric matrix, ascending. No eigenvectors, no
/// residual certificate; this is the cheap path for level-statistics sweeps.
pub fn symmetric_eigenvalues(a: &SymMatrix) -> Result<Vec<f64>> {
    faer_sequential();
    let mut vals = a
        .to_faer()
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| {
            Error::numerical(format!("eigensolver failed ({e:?}) on {}", a.fingerprint()))
        })?;
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Full decomposition: ascending eigenvalues, orthonormal eigenvectors, and
/// the max residual `||A v_i - lambda_i v_i||_2` over all i.
pub fn symmetric_eigen(a: &SymMatrix) -> Result<(Vec<f64>, EigenVectors, f64)> {
    faer_sequential();
    let fa = a.to_faer();
    let evd = fa.self_adjoint_eigen(faer::Side::Lower).map_err(|e| {
        Error::numerical(format!("eigensolver failed ({e:?}) on {}", a.fingerprint()))
    })?;
    let n = a.dim;
    let s = evd.S();
    let u = evd.U();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]));

    let mut vals = Vec::with_capacity(n);
    let mut data = vec![0.0; n * n];
    for (pos, &i) in order.iter().enumerate() {
        vals.push(s[i]);
        for row in 0..n {
            data[pos * n + row] = u[(row, i)];
        }
    }
    let vectors = EigenVectors { dim: n, data };

    // residual certificate via one matrix product
    let av = &fa * evd.U();
    let mut max_res2 = 0.0f64;
    for i in 0..n {
        let mut r2 = 0.0;
        for row in 0..n {
            let d = av[(row, i)] - s[i] * u[(row, i)];
            r2 += d * d;
        }
        max_res2 = max_res2.max(r2);
    }
    Ok((vals, vectors, max_res2.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_by_construction() {
        let m = SymMatrix::from_upper_fn(5, |j, k| (j * 7 + k) as f64);
        assert!(m.is_symmetric());
    }

    #[test]
    fn eigenvalues_of_swap() {
        let mut m = SymMatrix::zeros(2);
        m.set_sym(0, 1, 1.0);
        let vals = symmetric_eigenvalues(&m).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_decomposition_residual_small() {
        let m = SymMatrix::from_upper_fn(20, |j, k| 1.0 / (1.0 + j as f64 + k as f64));
        let (vals, vecs, res) = symmetric_eigen(&m).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        assert!(res < 1e-12);
        // spot-check one eigenpair
        let v = vecs.column(3);
        let av = m.mul_vec(v);
        for (a, b) in av.iter().zip(v) {
            assert!((a - vals[3] * b).abs() < 1e-10);
        }
    }

    #[test]
    fn embedded_add_targets_block() {
        let mut m = SymMatrix::zeros(4);
        let mut b = SymMatrix::zeros(2);
        b.set_sym(0, 0, 1.0);
        b.set_sym(0, 1, 2.0);
        b.set_sym(1, 1, 3.0);
        m.add_embedded(1..3, &b);
        assert_eq!(m.get(1, 1), 1.0);
        assert_eq!(m.get(1, 2), 2.0);
        assert_eq!(m.get(2, 1), 2.0);
        assert_eq!(m.get(2, 2), 3.0);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.get(3, 3), 0.0);
    }
}
