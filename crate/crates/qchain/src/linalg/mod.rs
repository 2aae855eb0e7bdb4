//! Shared dense/sparse complex linear algebra kernels.

pub mod expm;
pub mod ode;
pub mod quad;
pub mod schur;
pub mod sparse;

use faer::linalg::solvers::{Eigen, SelfAdjointEigen, Solve};
use faer::{Mat, Side};
use num_complex::Complex64;

pub type C64 = Complex64;
/// Dense complex matrix used throughout the crate.
pub type CMat = Mat<C64>;
/// Dense complex column vector.
pub type CVec = faer::Col<C64>;

pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn cmat_zeros(n: usize, m: usize) -> CMat {
    CMat::zeros(n, m)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn dagger(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    a * b + b * a
}

pub fn trace(a: &CMat) -> C64 {
    let mut t = ZERO;
    for i in 0..a.nrows().min(a.ncols()) {
        t += a[(i, i)];
    }
    t
}

/// Kronecker product, row-major convention: `(a ⊗ b)[(i1*nb+i2, j1*mb+j2)] = a[i1,j1] b[i2,j2]`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (na, ma) = (a.nrows(), a.ncols());
    let (nb, mb) = (b.nrows(), b.ncols());
    let mut out = CMat::zeros(na * nb, ma * mb);
    for ja in 0..ma {
        for ia in 0..na {
            let x = a[(ia, ja)];
            if x == ZERO {
                continue;
            }
            for jb in 0..mb {
                for ib in 0..nb {
                    out[(ia * nb + ib, ja * mb + jb)] = x * b[(ib, jb)];
                }
            }
        }
    }
    out
}

/// Largest entry magnitude.
pub fn max_abs(a: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn max_abs_vec(v: &CVec) -> f64 {
    let mut m = 0.0f64;
    for i in 0..v.nrows() {
        m = m.max(v[i].norm());
    }
    m
}

pub fn frobenius_norm(a: &CMat) -> f64 {
    let mut s = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Max deviation from Hermiticity, `max |A - A^dag|`.
pub fn hermiticity_defect(a: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..=j {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

/// Eigenvalues and eigenvectors of a Hermitian matrix, ascending order.
pub fn eigh(a: &CMat) -> (Vec<f64>, CMat) {
    let evd = SelfAdjointEigen::new(a.as_ref(), Side::Lower).expect("hermitian eigensolver failed");
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let vals: Vec<f64> = (0..n).map(|i| evd.S()[i].re).collect();
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    let mut w = Vec::with_capacity(n);
    let mut v = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        w.push(vals[src]);
        for i in 0..n {
            v[(i, dst)] = evd.U()[(i, src)];
        }
    }
    (w, v)
}

/// Eigenvalues and right eigenvectors of a general complex matrix.
pub fn eig(a: &CMat) -> (Vec<C64>, CMat) {
    let evd = Eigen::new(a.as_ref()).expect("general eigensolver failed");
    let n = a.nrows();
    let vals = (0..n).map(|i| evd.S()[i]).collect();
    (vals, evd.U().to_owned())
}

/// Solve `A x = b` by dense partial-pivot LU.
pub fn solve_dense(a: &CMat, b: &CMat) -> CMat {
    let lu = a.partial_piv_lu();
    let mut x = b.clone();
    lu.solve_in_place(x.as_mut());
    x
}

pub fn inv(a: &CMat) -> CMat {
    solve_dense(a, &identity(a.nrows()))
}

/// Hermitian part `(A + A^dag)/2`.
pub fn hermitize(a: &CMat) -> CMat {
    let d = dagger(a);
    let mut out = a + &d;
    for j in 0..out.ncols() {
        for i in 0..out.nrows() {
            out[(i, j)] *= 0.5;
        }
    }
    out
}

/// Trace distance `tr|A - B| / 2` of two Hermitian matrices.
pub fn trace_distance(a: &CMat, b: &CMat) -> f64 {
    let d = a - b;
    let (w, _) = eigh(&hermitize(&d));
    0.5 * w.iter().map(|x| x.abs()).sum::<f64>()
}

/// `ln(rho)` for a Hermitian positive matrix; eigenvalues clamped at `floor`.
pub fn ln_hermitian(rho: &CMat, floor: f64) -> CMat {
    let (w, v) = eigh(rho);
    let n = rho.nrows();
    let mut d = CMat::zeros(n, n);
    for (i, &x) in w.iter().enumerate() {
        d[(i, i)] = C64::new(x.max(floor).ln(), 0.0);
    }
    &v * d * v.adjoint()
}

/// von Neumann entropy `-tr(rho ln rho)`.
pub fn von_neumann_entropy(rho: &CMat) -> f64 {
    let (w, _) = eigh(rho);
    -w.iter()
        .filter(|&&x| x > 1e-300)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

pub fn scale(a: &CMat, s: C64) -> CMat {
    let mut out = a.clone();
    for j in 0..out.ncols() {
        for i in 0..out.nrows() {
            out[(i, j)] *= s;
        }
    }
    out
}

/// Deterministic pseudo-random complex matrix (splitmix-style LCG), entries
/// with real and imaginary parts in `(-0.5, 0.5)`. Used by tests and by the
/// randomized property checks.
pub fn deterministic_matrix(n: usize, m: usize, seed: u64) -> CMat {
    let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    CMat::from_fn(n, m, |_, _| C64::new(next(), next()))
}
