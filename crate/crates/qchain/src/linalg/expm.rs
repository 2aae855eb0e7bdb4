//! Dense matrix exponential by Pade approximation with scaling and squaring.

use super::{C64, CMat, identity, solve_dense};

fn one_norm(a: &CMat) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        let mut s = 0.0f64;
        for i in 0..a.nrows() {
            s += a[(i, j)].norm();
        }
        best = best.max(s);
    }
    best
}

/// `exp(A)` for a square complex matrix (degree-13 Pade, scaling and squaring).
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    const THETA13: f64 = 5.371920351148152;
    let norm = one_norm(a);
    let mut squarings = 0u32;
    let mut a_scaled = a.clone();
    if norm > THETA13 {
        squarings = (norm / THETA13).log2().ceil() as u32;
        let factor = C64::new(0.5f64.powi(squarings as i32), 0.0);
        for j in 0..n {
            for i in 0..n {
                a_scaled[(i, j)] *= factor;
            }
        }
    }

    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let id = identity(n);
    let a2 = &a_scaled * &a_scaled;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let mut u_inner = CMat::zeros(n, n);
    let mut v_inner = CMat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            u_inner[(i, j)] = B[13] * a6[(i, j)] + B[11] * a4[(i, j)] + B[9] * a2[(i, j)];
            v_inner[(i, j)] = B[12] * a6[(i, j)] + B[10] * a4[(i, j)] + B[8] * a2[(i, j)];
        }
    }
    let mut u = &a6 * &u_inner;
    let mut v = &a6 * &v_inner;
    for j in 0..n {
        for i in 0..n {
            u[(i, j)] += B[7] * a6[(i, j)] + B[5] * a4[(i, j)] + B[3] * a2[(i, j)]
                + B[1] * id[(i, j)];
            v[(i, j)] += B[6] * a6[(i, j)] + B[4] * a4[(i, j)] + B[2] * a2[(i, j)]
                + B[0] * id[(i, j)];
        }
    }
    let u = &a_scaled * &u;

    // (V - U) F = (V + U)
    let vm = &v - &u;
    let vp = &v + &u;
    let mut f = solve_dense(&vm, &vp);
    for _ in 0..squarings {
        f = &f * &f;
    }
    f
}
