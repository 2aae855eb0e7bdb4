//! Adaptive Gauss-Kronrod quadrature (G7/K15) and a Cauchy principal-value
//! helper with symmetric-interval cancellation.

use crate::{Error, Result};

// QUADPACK 15-point Kronrod rule, positive half of the nodes.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kronrod = WGK[7] * f(c);
    let mut gauss = WG[3] * f(c);
    for i in 0..7 {
        let x = h * XGK[i];
        let fv = f(c - x) + f(c + x);
        kronrod += WGK[i] * fv;
        if i % 2 == 1 {
            gauss += WG[i / 2] * fv;
        }
    }
    kronrod *= h;
    gauss *= h;
    (kronrod, (kronrod - gauss).abs())
}

/// Adaptive quadrature of `f` on `[a, b]` to absolute/relative tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rtol: f64, atol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    #[derive(Clone, Copy)]
    struct Seg {
        a: f64,
        b: f64,
        value: f64,
        err: f64,
    }
    let (v, e) = gk15(&f, a, b);
    let mut segs = vec![Seg { a, b, value: v, err: e }];
    for _ in 0..2000 {
        let total: f64 = segs.iter().map(|s| s.value).sum();
        let err: f64 = segs.iter().map(|s| s.err).sum();
        if err <= atol + rtol * total.abs() {
            return Ok(total);
        }
        // split the worst segment
        let (idx, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .unwrap();
        let s = segs.swap_remove(idx);
        let m = 0.5 * (s.a + s.b);
        if m == s.a || m == s.b {
            segs.push(s);
            let total: f64 = segs.iter().map(|s| s.value).sum();
            return Ok(total);
        }
        let (v1, e1) = gk15(&f, s.a, m);
        let (v2, e2) = gk15(&f, m, s.b);
        segs.push(Seg { a: s.a, b: m, value: v1, err: e1 });
        segs.push(Seg { a: m, b: s.b, value: v2, err: e2 });
    }
    Err(Error::Quadrature(format!(
        "interval budget exhausted on [{a}, {b}]"
    )))
}

/// Cauchy principal value `P int_a^b g(x)/(x0 - x) dx` for `x0` strictly inside
/// `(a, b)`. The symmetric window around the pole is folded so the integrand
/// stays finite.
pub fn principal_value<F: Fn(f64) -> f64>(
    g: F,
    x0: f64,
    a: f64,
    b: f64,
    rtol: f64,
    atol: f64,
) -> Result<f64> {
    if !(a < x0 && x0 < b) {
        // pole outside: plain integral
        return integrate(|x| g(x) / (x0 - x), a, b, rtol, atol);
    }
    let delta = (x0 - a).min(b - x0);
    // folded part: int_0^delta [g(x0+u) - g(x0-u)] / (-u) du
    let folded = integrate(
        |u| {
            if u == 0.0 {
                // limit -2 g'(x0); a centered difference is accurate enough here
                let h = 1e-6 * delta.max(1e-6);
                -(g(x0 + h) - g(x0 - h)) / h
            } else {
                (g(x0 - u) - g(x0 + u)) / u
            }
        },
        0.0,
        delta,
        rtol,
        atol,
    )?;
    let mut rest = 0.0;
    if x0 - delta > a {
        rest += integrate(|x| g(x) / (x0 - x), a, x0 - delta, rtol, atol)?;
    }
    if x0 + delta < b {
        rest += integrate(|x| g(x) / (x0 - x), x0 + delta, b, rtol, atol)?;
    }
    Ok(folded + rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12, 1e-14).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_tail() {
        let v = integrate(|x| (-x * x).exp(), -8.0, 8.0, 1e-12, 1e-14).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn principal_value_of_constant_is_log() {
        // P int_0^2 1/(1-x) dx = 0 by symmetry
        let v = principal_value(|_| 1.0, 1.0, 0.0, 2.0, 1e-12, 1e-14).unwrap();
        assert!(v.abs() < 1e-12);
        // P int_0^3 1/(1-x) dx = ln(1/2)
        let v = principal_value(|_| 1.0, 1.0, 0.0, 3.0, 1e-12, 1e-14).unwrap();
        assert!((v - 0.5f64.ln()).abs() < 1e-11);
    }

    #[test]
    fn principal_value_semicircle() {
        // P int_{-1}^{1} sqrt(1-x^2)/(x0 - x) dx = pi x0 for |x0| < 1
        let x0 = 0.3;
        let v = principal_value(|x| (1.0 - x * x).max(0.0).sqrt(), x0, -1.0, 1.0, 1e-11, 1e-13)
            .unwrap();
        assert!((v - std::f64::consts::PI * x0).abs() < 1e-8, "got {v}");
    }
}
