//! Adaptive explicit Runge-Kutta integration (Dormand-Prince 5(4)) for
//! complex state vectors.

use super::C64;
use crate::{Error, Result};

/// Relative/absolute tolerance pair for the adaptive integrator.
#[derive(Debug, Clone, Copy)]
pub struct OdeTol {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for OdeTol {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12 }
    }
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
// 5th-order weights equal the last row of A; 4th-order embedded weights:
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate `dy/dt = f(t, y)` from `t0`, producing the solution at each of
/// `sample_times` (which must be nondecreasing and >= t0).
pub fn integrate_sampled<F>(
    mut f: F,
    t0: f64,
    y0: &[C64],
    sample_times: &[f64],
    tol: OdeTol,
) -> Result<Vec<Vec<C64>>>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut out = Vec::with_capacity(sample_times.len());

    let mut k: Vec<Vec<C64>> = (0..7).map(|_| vec![C64::new(0.0, 0.0); n]).collect();
    let mut ytmp = vec![C64::new(0.0, 0.0); n];
    let mut first_stage_fresh = false;

    let mut h_suggest = 0.0f64;

    for &t_target in sample_times {
        if t_target < t - 1e-14 * t.abs().max(1.0) {
            return Err(Error::Inconsistent("sample times must be nondecreasing".into()));
        }
        while t < t_target {
            let span = t_target - t;
            if h_suggest == 0.0 {
                h_suggest = span.min(1e-3);
            }
            let mut h = h_suggest.min(span);
            // one accepted step
            loop {
                if !first_stage_fresh {
                    f(t, &y, &mut k[0]);
                }
                for s in 1..7 {
                    for i in 0..n {
                        let mut acc = C64::new(0.0, 0.0);
                        for (j, kj) in k.iter().enumerate().take(s) {
                            let a = A[s - 1][j.min(5)];
                            if j < 6 && a != 0.0 {
                                acc += a * kj[i];
                            }
                        }
                        ytmp[i] = y[i] + h * acc;
                    }
                    let ts = t + if s < 6 { C[s - 1] * h } else { h };
                    let (head, tail) = k.split_at_mut(s);
                    let _ = head;
                    f(ts, &ytmp, &mut tail[0]);
                }
                // 5th order solution is ytmp from stage 6 (FSAL structure)
                let mut err = 0.0f64;
                for i in 0..n {
                    let mut e = C64::new(0.0, 0.0);
                    for (j, kj) in k.iter().enumerate() {
                        let b5 = if j < 6 { A[5][j] } else { 0.0 };
                        e += (b5 - B4[j]) * kj[i];
                    }
                    let scale = tol.atol + tol.rtol * y[i].norm().max(ytmp[i].norm());
                    err = err.max((h * e).norm() / scale);
                }
                if err <= 1.0 || h <= 1e-14 * t.abs().max(1.0) + 1e-300 {
                    t += h;
                    y.copy_from_slice(&ytmp);
                    k.swap(0, 6); // FSAL: last stage value becomes next first stage
                    first_stage_fresh = true;
                    let fac = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
                    h_suggest = h * fac.clamp(0.2, 5.0);
                    break;
                }
                let fac = 0.9 * err.powf(-0.2);
                h = h * fac.clamp(0.1, 0.9);
                if h < 1e-300 {
                    return Err(Error::Solver("step size underflow in ODE integrator".into()));
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let y0 = [C64::new(1.0, 0.0)];
        let sols = integrate_sampled(
            |_t, y, dy| dy[0] = C64::new(-2.0, 0.0) * y[0],
            0.0,
            &y0,
            &[0.5, 1.0, 3.0],
            OdeTol::default(),
        )
        .unwrap();
        for (t, s) in [0.5f64, 1.0, 3.0].iter().zip(&sols) {
            assert!((s[0].re - (-2.0 * t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn oscillator_phase_accuracy() {
        // dy/dt = i y  =>  y = e^{it}
        let y0 = [C64::new(1.0, 0.0)];
        let t = 10.0;
        let sols = integrate_sampled(
            |_t, y, dy| dy[0] = C64::new(0.0, 1.0) * y[0],
            0.0,
            &y0,
            &[t],
            OdeTol { rtol: 1e-10, atol: 1e-13 },
        )
        .unwrap();
        let want = C64::new(t.cos(), t.sin());
        assert!((sols[0][0] - want).norm() < 1e-8);
    }
}
