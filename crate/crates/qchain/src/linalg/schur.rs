//! Complex Schur decomposition and the dense Lyapunov solver built on it.
//!
//! `A = Q T Q^dag` with `Q` unitary and `T` upper triangular, computed by
//! Householder reduction to Hessenberg form followed by implicit single-shift
//! QR iteration with Wilkinson shifts.

use super::{C64, CMat, ONE, ZERO, identity, max_abs};
use crate::{Error, Result};

/// Complex Givens rotation `[c s; -conj(s) c]` mapping `(f, g)` to `(r, 0)`,
/// with `c` real and `c^2 + |s|^2 = 1`.
fn givens(f: C64, g: C64) -> (f64, C64) {
    let fa = f.norm();
    let ga = g.norm();
    if ga == 0.0 {
        return (1.0, ZERO);
    }
    if fa == 0.0 {
        return (0.0, g.conj() / ga);
    }
    let d = (fa * fa + ga * ga).sqrt();
    let c = fa / d;
    let s = (f / fa) * g.conj() / d;
    (c, s)
}

fn rot_rows(h: &mut CMat, i: usize, k: usize, c: f64, s: C64, j0: usize, j1: usize) {
    for j in j0..j1 {
        let a = h[(i, j)];
        let b = h[(k, j)];
        h[(i, j)] = c * a + s * b;
        h[(k, j)] = -s.conj() * a + c * b;
    }
}

fn rot_cols(h: &mut CMat, i: usize, k: usize, c: f64, s: C64, r0: usize, r1: usize) {
    for r in r0..r1 {
        let a = h[(r, i)];
        let b = h[(r, k)];
        h[(r, i)] = c * a + s.conj() * b;
        h[(r, k)] = -s * a + c * b;
    }
}

/// In-place Householder reduction to upper Hessenberg form; returns the
/// accumulated unitary.
fn hessenberg(h: &mut CMat) -> CMat {
    let n = h.nrows();
    let mut q = identity(n);
    if n < 3 {
        return q;
    }
    for j in 0..n - 2 {
        // Householder vector for column j below the diagonal.
        let mut norm2 = 0.0f64;
        for i in j + 1..n {
            norm2 += h[(i, j)].norm_sqr();
        }
        if norm2 == 0.0 {
            continue;
        }
        let x0 = h[(j + 1, j)];
        let alpha = if x0 == ZERO {
            C64::new(norm2.sqrt(), 0.0)
        } else {
            (x0 / x0.norm()) * norm2.sqrt()
        };
        let mut v: Vec<C64> = (j + 1..n).map(|i| h[(i, j)]).collect();
        v[0] += alpha;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let tau = 2.0 / vnorm2;
        // H <- P H, rows j+1..n
        for col in j..n {
            let mut dot = ZERO;
            for (k, vi) in v.iter().enumerate() {
                dot += vi.conj() * h[(j + 1 + k, col)];
            }
            dot *= tau;
            for (k, vi) in v.iter().enumerate() {
                h[(j + 1 + k, col)] -= dot * vi;
            }
        }
        // H <- H P, cols j+1..n
        for row in 0..n {
            let mut dot = ZERO;
            for (k, vi) in v.iter().enumerate() {
                dot += h[(row, j + 1 + k)] * *vi;
            }
            dot *= tau;
            for (k, vi) in v.iter().enumerate() {
                h[(row, j + 1 + k)] -= dot * vi.conj();
            }
        }
        // Q <- Q P
        for row in 0..n {
            let mut dot = ZERO;
            for (k, vi) in v.iter().enumerate() {
                dot += q[(row, j + 1 + k)] * *vi;
            }
            dot *= tau;
            for (k, vi) in v.iter().enumerate() {
                q[(row, j + 1 + k)] -= dot * vi.conj();
            }
        }
    }
    // clean below first subdiagonal
    for j in 0..n {
        for i in j + 2..n {
            h[(i, j)] = ZERO;
        }
    }
    q
}

fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr - 4.0 * det).sqrt();
    let l1 = 0.5 * (tr + disc);
    let l2 = 0.5 * (tr - disc);
    if (l1 - d).norm() <= (l2 - d).norm() { l1 } else { l2 }
}

/// Schur decomposition `A = Q T Q^dag`. Returns `(Q, T)`.
pub fn schur(a: &CMat) -> Result<(CMat, CMat)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "schur requires a square matrix");
    let mut t = a.clone();
    if n <= 1 {
        return Ok((identity(n), t));
    }
    let mut q = hessenberg(&mut t);
    let scale = max_abs(&t).max(1e-300);
    let eps = f64::EPSILON;
    let negligible = |t: &CMat, k: usize| -> bool {
        let s = t[(k - 1, k - 1)].norm() + t[(k, k)].norm();
        let s = if s == 0.0 { scale } else { s };
        t[(k, k - 1)].norm() <= eps * s
    };

    let mut hi = n - 1;
    let mut iters_here = 0usize;
    let mut total = 0usize;
    let max_total = 60 * n;
    while hi > 0 {
        if negligible(&t, hi) {
            t[(hi, hi - 1)] = ZERO;
            hi -= 1;
            iters_here = 0;
            continue;
        }
        // active block [lo..=hi]
        let mut lo = hi;
        while lo > 0 && !negligible(&t, lo) {
            lo -= 1;
        }
        if lo > 0 {
            t[(lo, lo - 1)] = ZERO;
        }

        total += 1;
        iters_here += 1;
        if total > max_total {
            return Err(Error::Solver(format!(
                "QR iteration failed to converge after {max_total} sweeps"
            )));
        }
        let mu = if iters_here % 20 == 0 {
            // exceptional shift breaks rare stagnation cycles
            t[(hi, hi)] + 0.75 * t[(hi, hi - 1)].norm() * ONE
        } else {
            wilkinson_shift(
                t[(hi - 1, hi - 1)],
                t[(hi - 1, hi)],
                t[(hi, hi - 1)],
                t[(hi, hi)],
            )
        };

        // implicit single-shift bulge chase over [lo..hi]
        let mut x = t[(lo, lo)] - mu;
        let mut y = t[(lo + 1, lo)];
        for k in lo..hi {
            let (c, s) = givens(x, y);
            let colstart = if k > lo { k - 1 } else { lo };
            rot_rows(&mut t, k, k + 1, c, s, colstart, n);
            rot_cols(&mut t, k, k + 1, c, s, 0, (k + 3).min(hi + 1));
            rot_cols(&mut q, k, k + 1, c, s, 0, n);
            if k > lo {
                t[(k + 1, k - 1)] = ZERO;
            }
            if k + 1 < hi {
                x = t[(k + 1, k)];
                y = t[(k + 2, k)];
            }
        }
    }
    for j in 0..n {
        for i in j + 1..n {
            t[(i, j)] = ZERO;
        }
    }
    Ok((q, t))
}

/// Solve the triangular Lyapunov system `T Y + Y T^dag = F` with `T` upper
/// triangular, by back substitution over columns.
fn solve_triangular_lyapunov(t: &CMat, f: &CMat) -> Result<CMat> {
    let n = t.nrows();
    let mut y = CMat::zeros(n, n);
    for j in (0..n).rev() {
        // rhs_j = F[:, j] - sum_{k>j} conj(T[j,k]) y_k
        let mut rhs: Vec<C64> = (0..n).map(|i| f[(i, j)]).collect();
        for k in j + 1..n {
            let w = t[(j, k)].conj();
            if w == ZERO {
                continue;
            }
            for (i, r) in rhs.iter_mut().enumerate() {
                *r -= w * y[(i, k)];
            }
        }
        // (T + conj(T_jj) I) y_j = rhs, upper triangular back substitution
        let shift = t[(j, j)].conj();
        for i in (0..n).rev() {
            let mut v = rhs[i];
            for k in i + 1..n {
                v -= t[(i, k)] * y[(k, j)];
            }
            let piv = t[(i, i)] + shift;
            if piv.norm() < 1e-300 {
                return Err(Error::Solver(
                    "singular Lyapunov operator: eigenvalue pair sums to zero".into(),
                ));
            }
            y[(i, j)] = v / piv;
        }
    }
    Ok(y)
}

/// Solve the continuous Lyapunov equation `W C + C W^dag = D` via the Schur
/// form of `W`, with one step of iterative refinement.
pub fn solve_lyapunov(w: &CMat, d: &CMat) -> Result<CMat> {
    let (q, t) = schur(w)?;
    let solve_once = |rhs: &CMat| -> Result<CMat> {
        let f = q.adjoint() * rhs * &q;
        let y = solve_triangular_lyapunov(&t, &f)?;
        Ok(&q * y * q.adjoint())
    };
    let mut c = solve_once(d)?;
    let scale = max_abs(d).max(max_abs(&c)).max(1e-300);
    for _ in 0..2 {
        let resid = d - (w * &c + &c * w.adjoint());
        if max_abs(&resid) <= 1e-13 * scale {
            break;
        }
        c += solve_once(&resid)?;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dagger, eig};

    fn lcg(state: &mut u64) -> f64 {
        *state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((*state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    }

    fn random_cmat(n: usize, seed: u64) -> CMat {
        let mut s = seed.wrapping_add(0x9e3779b97f4a7c15);
        CMat::from_fn(n, n, |_, _| C64::new(lcg(&mut s), lcg(&mut s)))
    }

    #[test]
    fn schur_factorizes_random_matrices() {
        for seed in 0..5u64 {
            let n = 3 + 7 * (seed as usize % 3);
            let a = random_cmat(n, seed);
            let (q, t) = schur(&a).unwrap();
            let rec = &q * &t * dagger(&q);
            assert!(max_abs(&(&rec - &a)) < 1e-12, "factorization residual");
            let qq = &q * dagger(&q);
            assert!(max_abs(&(&qq - &identity(n))) < 1e-12, "unitarity");
            for j in 0..n {
                for i in j + 1..n {
                    assert_eq!(t[(i, j)], ZERO);
                }
            }
        }
    }

    #[test]
    fn schur_eigenvalues_match_general_eigensolver() {
        let a = random_cmat(14, 42);
        let (_, t) = schur(&a).unwrap();
        let mut mine: Vec<C64> = (0..14).map(|i| t[(i, i)]).collect();
        let (mut theirs, _) = eig(&a);
        let key = |z: &C64| (z.re, z.im);
        mine.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        theirs.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        for (m, t) in mine.iter().zip(theirs.iter()) {
            assert!((m - t).norm() < 1e-10, "eigenvalue mismatch {m} vs {t}");
        }
    }

    #[test]
    fn lyapunov_residual_tiny_for_chain_drift() {
        // W = i h + boundary damping, the shape produced by boundary-driven chains
        let l = 60;
        let mut w = CMat::zeros(l, l);
        for i in 0..l - 1 {
            w[(i, i + 1)] = C64::new(0.0, -1.0);
            w[(i + 1, i)] = C64::new(0.0, -1.0);
        }
        w[(0, 0)] += C64::new(0.5, 0.0);
        w[(l - 1, l - 1)] += C64::new(0.5, 0.0);
        let mut d = CMat::zeros(l, l);
        d[(0, 0)] = C64::new(1.0, 0.0);
        let c = solve_lyapunov(&w, &d).unwrap();
        let resid = &d - (&w * &c + &c * dagger(&w));
        assert!(max_abs(&resid) < 1e-12);
    }
}
