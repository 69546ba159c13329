//! Embedded Dormand-Prince 5(4) integrator with adaptive step size.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            max_steps: 10_000_000,
        }
    }
}

/// Integrates `dy/dt = f(t, y)` and returns the state at every time in
/// `grid` (which must be nondecreasing and start at or after `t0`).
pub fn integrate<F>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    grid: &[f64],
    opts: OdeOptions,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut out = Vec::with_capacity(grid.len());
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    let mut h = f64::NAN;
    let mut steps = 0usize;

    for &target in grid {
        if target < t {
            return Err(Error::InvalidInput(format!(
                "time grid not increasing at {target}"
            )));
        }
        if h.is_nan() {
            h = ((target - t) / 100.0).max(1e-6);
        }
        while t < target {
            let remaining = target - t;
            let last = h >= remaining;
            let step = if last { remaining } else { h };
            if step < 1e-14 * t.abs().max(1.0) && !last {
                return Err(Error::Numerical(format!("step size underflow at t = {t}")));
            }
            f(t, &y, &mut k[0]);
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for j in 0..s {
                        acc += step * A[s][j] * k[j][i];
                    }
                    tmp[i] = acc;
                }
                f(t + C[s] * step, &tmp, &mut k[s]);
            }
            let mut err: f64 = 0.0;
            for i in 0..n {
                let mut hi = y[i];
                let mut lo = y[i];
                for s in 0..7 {
                    hi += step * B5[s] * k[s][i];
                    lo += step * B4[s] * k[s][i];
                }
                y5[i] = hi;
                let scale = opts.atol + opts.rtol * y[i].abs().max(hi.abs());
                err = err.max((hi - lo).abs() / scale);
            }
            if !err.is_finite() {
                h = step * 0.1;
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::Numerical(format!(
                        "non-finite derivative near t = {t}"
                    )));
                }
                continue;
            }
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Numerical(format!(
                    "step budget exhausted at t = {t}"
                )));
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                t = if last { target } else { t + step };
                std::mem::swap(&mut y, &mut y5);
                if !last || factor < 1.0 {
                    h = step * factor;
                }
            } else {
                h = step * factor;
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::Numerical(format!("step size underflow at t = {t}")));
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
        let grid = [0.5, 1.0, 3.0];
        let out = integrate(
            |_, y, dy| dy[0] = -2.0 * y[0],
            0.0,
            &[1.0],
            &grid,
            OdeOptions::with_tol(1e-11),
        )
        .unwrap();
        for (t, y) in grid.iter().zip(&out) {
            assert!((y[0] - (-2.0 * t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn harmonic_oscillator() {
        let out = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            &[1.0, 0.0],
            &[std::f64::consts::PI],
            OdeOptions::with_tol(1e-12),
        )
        .unwrap();
        assert!((out[0][0] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_decreasing_grid() {
        let r = integrate(
            |_, _, dy| dy[0] = 0.0,
            0.0,
            &[1.0],
            &[1.0, 0.5],
            OdeOptions::with_tol(1e-8),
        );
        assert!(r.is_err());
    }
}
