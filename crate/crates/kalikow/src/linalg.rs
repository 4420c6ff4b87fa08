//! Dense symmetric matrices and their eigendecomposition.
//!
//! Gram matrices here are small (a few dozen rows), so a classic
//! Householder tridiagonalization followed by implicit-QL iteration covers
//! every need: smallest eigenvalue, spectral norm, pseudo-inverse based
//! Schur complements.

// The solvers below are index-based translations of classic dense
// algorithms; range loops mirror their reference form.
#![allow(clippy::needless_range_loop)]

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Symmetry tolerance accepted by [`SymMat::from_rows`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Dense symmetric matrix, stored row-major in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMat {
    n: usize,
    data: Vec<f64>,
}

impl SymMat {
    pub fn zeros(n: usize) -> Self {
        SymMat {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = SymMat::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Build from row-major data, enforcing symmetry within
    /// [`SYMMETRY_TOLERANCE`] (entries are averaged with their mirror).
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Contract(format!(
                "expected {} entries for a {n} x {n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        let mut max_asym = 0.0f64;
        let mut out = data;
        for i in 0..n {
            for j in (i + 1)..n {
                let a = out[i * n + j];
                let b = out[j * n + i];
                max_asym = max_asym.max((a - b).abs());
                let avg = 0.5 * (a + b);
                out[i * n + j] = avg;
                out[j * n + i] = avg;
            }
        }
        if max_asym > SYMMETRY_TOLERANCE {
            return Err(Error::NotSymmetric(max_asym));
        }
        Ok(SymMat { n, data: out })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Set `(i, j)` and its mirror.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn rows(&self) -> &[f64] {
        &self.data
    }

    /// `y = M a`.
    pub fn mul_vec(&self, a: &[f64]) -> Vec<f64> {
        debug_assert_eq!(a.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            y[i] = row.iter().zip(a).map(|(m, x)| m * x).sum();
        }
        y
    }

    /// `a^T M a`.
    pub fn quad_form(&self, a: &[f64]) -> f64 {
        self.mul_vec(a).iter().zip(a).map(|(y, x)| y * x).sum()
    }

    /// Principal submatrix on `idx` (indices must be strictly increasing).
    pub fn submatrix(&self, idx: &[usize]) -> SymMat {
        let k = idx.len();
        let mut out = SymMat::zeros(k);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out.data[a * k + b] = self.get(i, j);
            }
        }
        out
    }

    /// Entrywise difference `self - other`.
    pub fn diff(&self, other: &SymMat) -> SymMat {
        debug_assert_eq!(self.n, other.n);
        SymMat {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Largest absolute entry difference with `other`.
    pub fn max_abs_diff(&self, other: &SymMat) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Eigenvalues in ascending order (eigenvectors discarded).
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigh().values
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Spectral norm (largest absolute eigenvalue).
    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Full symmetric eigendecomposition `M = V diag(values) V^T`.
    pub fn eigh(&self) -> EigenDecomposition {
        let n = self.n;
        if n == 0 {
            return EigenDecomposition {
                values: vec![],
                vectors: vec![],
                n: 0,
            };
        }
        let mut v = self.data.clone();
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n];
        tred2(&mut v, &mut d, &mut e, n);
        tql2(&mut v, &mut d, &mut e, n);
        // Sort ascending, carrying the eigenvector columns along.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
        let values: Vec<f64> = order.iter().map(|&k| d[k]).collect();
        let mut vectors = vec![0.0; n * n];
        for (new_col, &old_col) in order.iter().enumerate() {
            for row in 0..n {
                vectors[row * n + new_col] = v[row * n + old_col];
            }
        }
        EigenDecomposition {
            values,
            vectors,
            n,
        }
    }

    /// Schur complement `M_JJ - M_JK M_KK^+ M_KJ` of the complement block,
    /// with the pseudo-inverse cut at `tol` relative to the largest
    /// eigenvalue of `M_KK`.
    pub fn schur_complement(&self, j_idx: &[usize], tol: f64) -> SymMat {
        let k_idx: Vec<usize> = (0..self.n).filter(|i| !j_idx.contains(i)).collect();
        let s = j_idx.len();
        let mut out = self.submatrix(j_idx);
        if k_idx.is_empty() {
            return out;
        }
        let kk = self.submatrix(&k_idx);
        let eig = kk.eigh();
        let scale = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let cut = tol * scale.max(1e-300);
        // B[j][k] = M[j_idx[j]][k_idx[k]]
        let b: Vec<Vec<f64>> = j_idx
            .iter()
            .map(|&j| k_idx.iter().map(|&k| self.get(j, k)).collect())
            .collect();
        // Project B onto the eigenbasis: c[j][e] = <B_j, v_e>.
        let ne = k_idx.len();
        for a in 0..s {
            for bcol in a..s {
                let mut acc = 0.0;
                for ecol in 0..ne {
                    let lam = eig.values[ecol];
                    if lam.abs() <= cut {
                        continue;
                    }
                    let mut ca = 0.0;
                    let mut cb = 0.0;
                    for r in 0..ne {
                        ca += b[a][r] * eig.vectors[r * ne + ecol];
                        cb += b[bcol][r] * eig.vectors[r * ne + ecol];
                    }
                    acc += ca * cb / lam;
                }
                let v = out.get(a, bcol) - acc;
                out.set(a, bcol, v);
            }
        }
        out
    }
}

/// Result of [`SymMat::eigh`]: ascending eigenvalues and the matching
/// orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    /// Row-major `n x n`; column `k` is the eigenvector of `values[k]`.
    pub vectors: Vec<f64>,
    n: usize,
}

impl EigenDecomposition {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|r| self.vectors[r * self.n + k]).collect()
    }
}

// Householder reduction to tridiagonal form; EISPACK tred2 layout with the
// accumulating transformation kept in `v`.
fn tred2(v: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    for (i, slot) in d.iter_mut().enumerate() {
        *slot = v[(n - 1) * n + i];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
                v[j * n + i] = 0.0;
            }
        } else {
            for item in d.iter_mut().take(i) {
                *item /= scale;
                h += *item * *item;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j * n + i] = f;
                g = e[j] + v[j * n + j] * f;
                for k in (j + 1)..i {
                    g += v[k * n + j] * d[k];
                    e[k] += v[k * n + j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k * n + j] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..(n - 1) {
        v[(n - 1) * n + i] = v[i * n + i];
        v[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for (k, slot) in d.iter_mut().enumerate().take(i + 1) {
                *slot = v[k * n + i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k * n + i + 1] * v[k * n + j];
                }
                for (k, item) in d.iter().enumerate().take(i + 1) {
                    v[k * n + j] -= g * item;
                }
            }
        }
        for k in 0..=i {
            v[k * n + i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
        v[(n - 1) * n + j] = 0.0;
    }
    v[(n - 1) * n + n - 1] = 1.0;
    e[0] = 0.0;
}

// Implicit-QL iteration on the tridiagonal form; EISPACK tql2.
fn tql2(v: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= tst1 * f64::EPSILON {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                assert!(iter < 60, "eigensolver failed to converge");

                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[k * n + i + 1];
                        v[k * n + i + 1] = s * v[k * n + i] + c * h;
                        v[k * n + i] = c * v[k * n + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= tst1 * f64::EPSILON {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_eigenvalues() {
        let m = SymMat::identity(4);
        let vals = m.eigenvalues();
        assert!(vals.iter().all(|v| (v - 1.0).abs() < 1e-14));
        assert!((m.lambda_min() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[1, 0.5], [0.5, 1]] has eigenvalues 0.5 and 1.5.
        let m = SymMat::from_rows(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        let vals = m.eigenvalues();
        assert!((vals[0] - 0.5).abs() < 1e-14);
        assert!((vals[1] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn rank_one_outer_product() {
        let a = [0.3, -0.7, 0.2];
        let mut m = SymMat::zeros(3);
        for i in 0..3 {
            for j in 0..3 {
                m.set(i, j, a[i] * a[j]);
            }
        }
        let vals = m.eigenvalues();
        assert!(vals[0].abs() < 1e-12);
        assert!(vals[1].abs() < 1e-12);
        let norm_sq: f64 = a.iter().map(|x| x * x).sum();
        assert!((vals[2] - norm_sq).abs() < 1e-12);
    }

    #[test]
    fn equicorrelated_eigenvalues() {
        // diag 1, off-diag rho: eigenvalues 1 - rho (x3) and 1 + 3 rho.
        let n = 4;
        let rho = 0.2;
        let mut m = SymMat::identity(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m.set(i, j, rho);
                }
            }
        }
        let vals = m.eigenvalues();
        for v in &vals[..n - 1] {
            assert!((v - (1.0 - rho)).abs() < 1e-13, "{v}");
        }
        assert!((vals[n - 1] - (1.0 + 3.0 * rho)).abs() < 1e-13);
    }

    #[test]
    fn eigenvectors_reconstruct() {
        let m = SymMat::from_rows(
            3,
            vec![2.0, -0.3, 0.1, -0.3, 1.5, 0.4, 0.1, 0.4, 0.9],
        )
        .unwrap();
        let eig = m.eigh();
        for k in 0..3 {
            let v = eig.vector(k);
            let mv = m.mul_vec(&v);
            for i in 0..3 {
                assert!(
                    (mv[i] - eig.values[k] * v[i]).abs() < 1e-12,
                    "residual at ({k}, {i})"
                );
            }
        }
    }

    #[test]
    fn asymmetry_rejected() {
        let res = SymMat::from_rows(2, vec![1.0, 0.5, 0.2, 1.0]);
        assert!(matches!(res, Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn schur_complement_matches_block_formula() {
        // M = [[a, b], [b, c]] with J = {0}: Schur = a - b^2 / c.
        let m = SymMat::from_rows(2, vec![2.0, 0.6, 0.6, 1.5]).unwrap();
        let s = m.schur_complement(&[0], 1e-12);
        assert!((s.get(0, 0) - (2.0 - 0.36 / 1.5)).abs() < 1e-13);
    }

    #[test]
    fn spectral_norm_vs_frobenius() {
        let m = SymMat::from_rows(
            3,
            vec![0.5, 0.1, -0.2, 0.1, 0.7, 0.05, -0.2, 0.05, 0.3],
        )
        .unwrap();
        assert!(m.spectral_norm() <= m.frobenius_norm() + 1e-14);
    }
}
