//! Compressed sparse rows, a banded LU factorisation and BiCGSTAB.
//!
//! The finite-element matrices are banded under a tensor ordering of the
//! nodes, so a band solver with partial pivoting is the direct method of
//! choice; BiCGSTAB is the fallback when the direct residual is not small.

use std::io::Write;

use crate::error::{Error, Result};

/// Square sparse matrix in CSR form with sorted, unique column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the matrix by summing duplicates in input order, so equal
    /// triplet lists give bit-identical matrices.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(i, j, _) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n}x{n}");
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        // Bucket by row (stable), then sort each row by column.
        let mut order = vec![0usize; triplets.len()];
        let mut next = counts.clone();
        for (k, &(i, _, _)) in triplets.iter().enumerate() {
            order[next[i]] = k;
            next[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            let row = &mut order[counts[i]..counts[i + 1]];
            row.sort_by_key(|&k| triplets[k].1);
            for &k in row.iter() {
                let (_, j, v) = triplets[k];
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix { n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `vᵀ A u`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        assert_eq!(v.len(), self.n);
        let au = self.mul_vec(u);
        crate::sum::pairwise(&au.iter().zip(v).map(|(a, b)| a * b).collect::<Vec<_>>())
    }

    pub fn transpose(&self) -> CsrMatrix {
        let triplets: Vec<_> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        CsrMatrix::from_triplets(self.n, &triplets)
    }

    /// `α·self + β·other`.
    pub fn linear_combination(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        assert_eq!(self.n, other.n);
        let triplets: Vec<_> = self
            .triplets()
            .map(|(i, j, v)| (i, j, alpha * v))
            .chain(other.triplets().map(|(i, j, v)| (i, j, beta * v)))
            .collect();
        CsrMatrix::from_triplets(self.n, &triplets)
    }

    pub fn from_diagonal(d: &[f64]) -> CsrMatrix {
        let triplets: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        CsrMatrix::from_triplets(d.len(), &triplets)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// `max |i − j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        self.triplets().map(|(i, j, _)| i.abs_diff(j)).max().unwrap_or(0)
    }

    /// Lower and upper bandwidth after renumbering by `perm` (`perm[new] = old`).
    fn bandwidths_permuted(&self, inv: &[usize]) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for (i, j, _) in self.triplets() {
            let (pi, pj) = (inv[i], inv[j]);
            if pi > pj {
                kl = kl.max(pi - pj);
            } else {
                ku = ku.max(pj - pi);
            }
        }
        (kl, ku)
    }

    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        let diff = self.linear_combination(1.0, other, -1.0);
        diff.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Coordinate format, `row col value` per line, 0-based.
    pub fn write_triplets(&self, mut w: impl Write) -> std::io::Result<()> {
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {v:e}")?;
        }
        Ok(())
    }
}

/// LU factorisation with partial pivoting of a band matrix, optionally after a
/// symmetric renumbering of the unknowns.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    /// Upper bandwidth of `U`, i.e. `ku + kl` after pivoting fill.
    ku_fill: usize,
    width: usize,
    band: Vec<f64>,
    pivots: Vec<usize>,
    perm: Vec<usize>,
    condition_estimate: f64,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let perm: Vec<usize> = (0..a.dim()).collect();
        Self::factor_permuted(a, &perm)
    }

    /// Factors `P A Pᵀ` where the new unknown `k` is the old unknown `perm[k]`.
    pub fn factor_permuted(a: &CsrMatrix, perm: &[usize]) -> Result<Self> {
        let n = a.dim();
        assert_eq!(perm.len(), n);
        let mut inv = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        assert!(inv.iter().all(|&k| k < n), "perm is not a permutation");
        let (kl, ku) = a.bandwidths_permuted(&inv);
        let ku_fill = ku + kl;
        let width = kl + ku_fill + 1;
        // Row i stores columns i − kl ..= i + ku_fill at offsets 0..width.
        let mut band = vec![0.0; n * width];
        for (i, j, v) in a.triplets() {
            let (pi, pj) = (inv[i], inv[j]);
            band[pi * width + (pj + kl - pi)] = v;
        }
        let at = |i: usize, j: usize| i * width + (j + kl - i);

        let mut pivots = vec![0usize; n];
        let mut max_piv = 0.0f64;
        let mut min_piv = f64::INFINITY;
        let mut row_k = vec![0.0; ku_fill + 1];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = band[at(k, k)].abs();
            for i in k + 1..=last {
                let v = band[at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            pivots[k] = p;
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::Singular { condition_estimate: f64::INFINITY });
            }
            max_piv = max_piv.max(best);
            min_piv = min_piv.min(best);
            let jmax = (k + ku_fill).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    band.swap(at(k, j), at(p, j));
                }
            }
            for (off, j) in (k..=jmax).enumerate() {
                row_k[off] = band[at(k, j)];
            }
            let pivot = row_k[0];
            for i in k + 1..=last {
                let idx = at(i, k);
                let l = band[idx] / pivot;
                band[idx] = l;
                if l != 0.0 {
                    let base = at(i, k);
                    for off in 1..=(jmax - k) {
                        band[base + off] -= l * row_k[off];
                    }
                }
            }
        }
        let condition_estimate = if n == 0 { 1.0 } else { max_piv / min_piv };
        if !(condition_estimate < 1e15) {
            return Err(Error::Singular { condition_estimate });
        }
        Ok(BandedLu { n, kl, ku_fill, width, band, pivots, perm: perm.to_vec(), condition_estimate })
    }

    /// Ratio of the largest to the smallest pivot magnitude; a cheap lower
    /// bound on the condition number, used for diagnostics only.
    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let w = self.width;
        let kl = self.kl;
        let at = |i: usize, j: usize| i * w + (j + kl - i);
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            if xk != 0.0 {
                let last = (k + kl).min(n.saturating_sub(1));
                for (i, xi) in x.iter_mut().enumerate().take(last + 1).skip(k + 1) {
                    *xi -= self.band[at(i, k)] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let jmax = (k + self.ku_fill).min(n - 1);
            let base = at(k, k);
            let mut s = x[k];
            for off in 1..=(jmax - k) {
                s -= self.band[base + off] * x[k + off];
            }
            x[k] = s / self.band[base];
        }
        let mut out = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterativeReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r = norm(&ax.iter().zip(b).map(|(p, q)| q - p).collect::<Vec<_>>());
    let nb = norm(b);
    if nb == 0.0 {
        r
    } else {
        r / nb
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned BiCGSTAB. `x` holds the initial guess on entry.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<IterativeReport> {
    let n = a.dim();
    let dinv: Vec<f64> = a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let nb = norm(b);
    if nb == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(IterativeReport { iterations: 0, relative_residual: 0.0 });
    }
    let ax = a.mul_vec(x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = dinv[i] * p[i];
        }
        a.mul_vec_into(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / nb <= tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(IterativeReport { iterations: it, relative_residual: relative_residual(a, x, b) });
        }
        for i in 0..n {
            z[i] = dinv[i] * s[i];
        }
        a.mul_vec_into(&z, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        let res = norm(&r) / nb;
        if !res.is_finite() {
            return Err(Error::Numerical("BiCGSTAB produced non-finite residual".into()));
        }
        if res <= tol {
            return Ok(IterativeReport { iterations: it, relative_residual: relative_residual(a, x, b) });
        }
    }
    let relative_residual = relative_residual(a, x, b);
    if relative_residual <= tol {
        return Ok(IterativeReport { iterations: max_iter, relative_residual });
    }
    Err(Error::Numerical(format!("BiCGSTAB stalled at relative residual {relative_residual:e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                t.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 0, 2.0), (0, 1, 0.5), (0, 0, 3.0)]);
        assert_eq!(a.get(0, 1), 1.5);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.bandwidth(), 1);
        assert_eq!(a.mul_vec(&[1.0, 2.0]), vec![6.0, 2.0]);
        assert_eq!(a.transpose().get(1, 0), 1.5);
    }

    #[test]
    fn banded_lu_needs_pivoting() {
        // zero leading entry forces a row swap
        let a = CsrMatrix::from_triplets(
            3,
            &[(0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0), (1, 2, 1.0), (2, 1, 2.0), (2, 2, 1.0)],
        );
        let lu = BandedLu::factor(&a).unwrap();
        let b = vec![1.0, 2.0, 3.0];
        let x = lu.solve(&b);
        assert!(relative_residual(&a, &x, &b) < 1e-14);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(BandedLu::factor(&a), Err(Error::Singular { .. })));
    }

    #[test]
    fn permuted_factorisation_matches() {
        let n = 40;
        let mut a = random_banded(n, 3, 2, 7);
        a = a.linear_combination(1.0, &CsrMatrix::identity(n), 6.0);
        let perm: Vec<usize> = (0..n).rev().collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x1 = BandedLu::factor(&a).unwrap().solve(&b);
        let x2 = BandedLu::factor_permuted(&a, &perm).unwrap().solve(&b);
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn bicgstab_converges_on_diagonally_dominant() {
        let n = 200;
        let a = random_banded(n, 5, 5, 3).linear_combination(1.0, &CsrMatrix::identity(n), 12.0);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64).collect();
        let mut x = vec![0.0; n];
        let rep = bicgstab(&a, &b, &mut x, 1e-12, 500).unwrap();
        assert!(rep.relative_residual <= 1e-12);
    }

    proptest! {
        #[test]
        fn banded_lu_solves_random_systems(seed in 0u64..1000, kl in 0usize..5, ku in 0usize..5) {
            let n = 30;
            // shift keeps the system well conditioned without making pivoting moot
            let a = random_banded(n, kl, ku, seed)
                .linear_combination(1.0, &CsrMatrix::identity(n), 0.5);
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
            if let Ok(lu) = BandedLu::factor(&a) {
                let x = lu.solve(&b);
                // normwise backward error
                let ax = a.mul_vec(&x);
                let r = ax.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
                let a_norm = (0..n).map(|i| a.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max);
                let x_norm = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
                prop_assert!(r <= 1e-12 * a_norm * x_norm + 1e-300);
            }
        }
    }
}
