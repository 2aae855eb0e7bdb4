//! Sparse complex matrices: triplet assembly, LU solves, and a shift-invert
//! Arnoldi eigensolver for interior eigenvalues.

use super::{C64, CMat, ZERO};
use crate::{Error, Result};
use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat};

/// Triplet accumulator for building sparse complex matrices.
#[derive(Debug, Clone)]
pub struct SpBuilder {
    pub nrows: usize,
    pub ncols: usize,
    triplets: Vec<Triplet<usize, usize, C64>>,
}

impl SpBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, triplets: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, val: C64) {
        if val != ZERO {
            self.triplets.push(Triplet::new(row, col, val));
        }
    }

    /// Add `scale * M` where `M` is dense; zero entries are skipped.
    pub fn add_dense(&mut self, row0: usize, col0: usize, m: &CMat, scale: C64) {
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = scale * m[(i, j)];
                if v != ZERO {
                    self.triplets.push(Triplet::new(row0 + i, col0 + j, v));
                }
            }
        }
    }

    pub fn build(&self) -> SpMat {
        let inner =
            SparseColMat::<usize, C64>::try_new_from_triplets(self.nrows, self.ncols, &self.triplets)
                .expect("sparse assembly failed");
        SpMat { inner }
    }
}

/// CSC sparse complex matrix with matvec and solver entry points.
#[derive(Debug, Clone)]
pub struct SpMat {
    pub inner: SparseColMat<usize, C64>,
}

impl SpMat {
    pub fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn nnz(&self) -> usize {
        self.inner.compute_nnz()
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let n = self.nrows();
        let mut y = vec![ZERO; n];
        let sym = self.inner.symbolic();
        let vals = self.inner.val();
        for j in 0..self.ncols() {
            let xj = x[j];
            if xj == ZERO {
                continue;
            }
            let range = sym.col_range(j);
            let rows = &sym.row_idx()[range.clone()];
            for (k, &i) in range.zip(rows.iter()) {
                y[i] += vals[k] * xj;
            }
        }
        y
    }

    /// Dense copy (for small systems and spectra).
    pub fn to_dense(&self) -> CMat {
        let mut out = CMat::zeros(self.nrows(), self.ncols());
        let sym = self.inner.symbolic();
        let vals = self.inner.val();
        for j in 0..self.ncols() {
            let range = sym.col_range(j);
            let rows = &sym.row_idx()[range.clone()];
            for (k, &i) in range.zip(rows.iter()) {
                out[(i, j)] += vals[k];
            }
        }
        out
    }

    /// LU-factorize once; the factorization can then solve many right-hand sides.
    pub fn factorize(&self) -> Result<SpLu> {
        let symbolic = SymbolicLu::try_new(self.inner.symbolic())
            .map_err(|e| Error::Solver(format!("symbolic LU failed: {e:?}")))?;
        let numeric = Lu::try_new_with_symbolic(symbolic, self.inner.as_ref())
            .map_err(|e| Error::Solver(format!("numeric LU failed: {e:?}")))?;
        Ok(SpLu { lu: numeric, dim: self.nrows() })
    }
}

pub struct SpLu {
    lu: Lu<usize, C64>,
    dim: usize,
}

impl SpLu {
    pub fn solve(&self, rhs: &[C64]) -> Vec<C64> {
        let mut m = Mat::<C64>::zeros(self.dim, 1);
        for (i, &v) in rhs.iter().enumerate() {
            m[(i, 0)] = v;
        }
        self.lu.solve_in_place_with_conj(Conj::No, m.as_mut());
        (0..self.dim).map(|i| m[(i, 0)]).collect()
    }
}

fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Eigenvalues of `A` closest to `shift`, by Arnoldi iteration on
/// `(A - shift)^{-1}`. Returns `(eigenvalue, ritz residual)` pairs sorted by
/// distance from the shift.
pub fn shift_invert_eigs(
    a: &SpMat,
    shift: C64,
    k: usize,
    krylov_dim: usize,
) -> Result<Vec<(C64, f64)>> {
    let n = a.nrows();
    let m = krylov_dim.max(2 * k + 8).min(n);
    // factor A - shift I
    let mut b = SpBuilder::new(n, n);
    {
        let sym = a.inner.symbolic();
        let vals = a.inner.val();
        for j in 0..n {
            let range = sym.col_range(j);
            let rows = &sym.row_idx()[range.clone()];
            for (kk, &i) in range.zip(rows.iter()) {
                b.push(i, j, vals[kk]);
            }
            b.push(j, j, -shift);
        }
    }
    let lu = b.build().factorize()?;

    let mut q: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
    let mut h = CMat::zeros(m + 1, m);
    // deterministic pseudo-random start vector
    let mut state = 0x853c49e6748fea9bu64;
    let mut v0: Vec<C64> = (0..n)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let x = ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let y = ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            C64::new(x, y)
        })
        .collect();
    let nv = norm2(&v0);
    v0.iter_mut().for_each(|z| *z /= nv);
    q.push(v0);

    let mut mdim = m;
    for j in 0..m {
        let mut w = lu.solve(&q[j]);
        // modified Gram-Schmidt, twice
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = dot(qi, &w);
                h[(i, j)] += c;
                for (wk, qk) in w.iter_mut().zip(qi) {
                    *wk -= c * qk;
                }
            }
        }
        let beta = norm2(&w);
        h[(j + 1, j)] = C64::new(beta, 0.0);
        if beta < 1e-14 {
            mdim = j + 1;
            break;
        }
        w.iter_mut().for_each(|z| *z /= beta);
        q.push(w);
    }

    // Ritz values of the Hessenberg block
    let hm = CMat::from_fn(mdim, mdim, |i, j| h[(i, j)]);
    let (theta, vecs) = super::eig(&hm);
    let mut out: Vec<(C64, f64)> = theta
        .iter()
        .enumerate()
        .filter(|(_, t)| t.norm() > 1e-14)
        .map(|(idx, t)| {
            // residual estimate |h_{m+1,m}| |last component|
            let tail = if mdim < q.len() {
                h[(mdim, mdim - 1)].norm() * vecs[(mdim - 1, idx)].norm() / t.norm()
            } else {
                0.0
            };
            (shift + 1.0 / t, tail)
        })
        .collect();
    out.sort_by(|x, y| (x.0 - shift).norm().total_cmp(&(y.0 - shift).norm()));
    out.truncate(k);
    Ok(out)
}
