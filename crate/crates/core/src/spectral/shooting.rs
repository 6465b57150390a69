//! Shooting integrals for `(p y')' + (q − λρ) y = 0`.
//!
//! The counting function uses the Prüfer angle `θ` defined by
//! `y = r sin θ`, `p y' = r cos θ`, which obeys
//! `θ' = cos²θ / p + (q − λρ) sin²θ` and never crosses a multiple of π
//! downwards. Eigenfunctions are sampled by integrating the first-order
//! system in `(y, p y')` through every grid node.

use std::f64::consts::PI;

use super::problem::SturmLiouvilleProblem;
use crate::{Error, Result};

const MAX_STEPS: usize = 2_000_000;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-13,
        }
    }
}

// Dormand–Prince 5(4) tableau.
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
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Adaptive Dormand–Prince integration of `y' = f(x, y)` from `x0` to `x1`.
///
/// `h` carries the step-size estimate between consecutive calls.
pub(crate) fn dopri5<const D: usize, F>(
    f: F,
    x0: f64,
    y0: [f64; D],
    x1: f64,
    tol: Tolerance,
    h: &mut f64,
) -> Result<[f64; D]>
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let span = x1 - x0;
    if span <= 0.0 {
        return Ok(y0);
    }
    let mut x = x0;
    let mut y = y0;
    if !(*h > 0.0) {
        *h = span.min(1e-3);
    }
    let mut k = [[0.0; D]; 7];
    k[0] = f(x, &y);
    for _ in 0..MAX_STEPS {
        let remaining = x1 - x;
        if remaining <= 1e-15 * x1.abs().max(1.0) {
            return Ok(y);
        }
        let last = *h >= remaining;
        let step = if last { remaining } else { *h };
        for s in 1..7 {
            let mut ys = y;
            for (d, ysd) in ys.iter_mut().enumerate() {
                *ysd += step * (0..s).map(|j| A[s][j] * k[j][d]).sum::<f64>();
            }
            k[s] = f(x + C[s] * step, &ys);
        }
        let mut y_new = y;
        let mut err = 0.0;
        for d in 0..D {
            y_new[d] += step * (0..7).map(|j| B[j] * k[j][d]).sum::<f64>();
            let e = step * (0..7).map(|j| E[j] * k[j][d]).sum::<f64>();
            let scale = tol.atol + tol.rtol * y[d].abs().max(y_new[d].abs());
            err += (e / scale).powi(2);
        }
        let err = (err / D as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::Integrator(format!(
                "non-finite error estimate at x = {x}"
            )));
        }
        if err <= 1.0 {
            x = if last { x1 } else { x + step };
            y = y_new;
            k[0] = k[6];
            if last {
                return Ok(y);
            }
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        let next = step * factor;
        // don't let the final short step shrink the carried estimate
        *h = if last && err <= 1.0 {
            h.max(next)
        } else {
            next
        };
        if *h < 1e-14 * span {
            return Err(Error::Integrator(format!("step size underflow at x = {x}")));
        }
    }
    Err(Error::Integrator(format!("exceeded {MAX_STEPS} steps")))
}

/// Boundary angles `(α, β)` with `α ∈ [0, π)` and `β ∈ (0, π]`.
pub(crate) fn boundary_angles(pb: &SturmLiouvilleProblem) -> (f64, f64) {
    let (p0, p1) = (pb.p.eval(0.0), pb.p.eval(1.0));
    let mut alpha = pb.theta1.sin().atan2(p0 * pb.theta1.cos());
    alpha = alpha.rem_euclid(PI);
    let mut beta = (-pb.theta2.sin())
        .atan2(p1 * pb.theta2.cos())
        .rem_euclid(PI);
    if beta <= 0.0 {
        beta += PI;
    }
    (alpha, beta)
}

/// Prüfer angle at ξ = 1 for a trial eigenvalue.
pub(crate) fn prufer_end_angle(
    pb: &SturmLiouvilleProblem,
    lambda: f64,
    tol: Tolerance,
) -> Result<f64> {
    let (alpha, _) = boundary_angles(pb);
    let rhs = |x: f64, th: &[f64; 1]| {
        let (s, c) = th[0].sin_cos();
        let q = pb.q.eval(x) - lambda * pb.rho.eval(x);
        [c * c / pb.p.eval(x) + q * s * s]
    };
    let mut h = 0.0;
    Ok(dopri5(rhs, 0.0, [alpha], 1.0, tol, &mut h)?[0])
}

/// Number of eigenvalues strictly above `lambda` and the sign of the
/// characteristic function `cos θ₂ y(1) + sin θ₂ y'(1)`.
pub(crate) fn count_and_sign(
    pb: &SturmLiouvilleProblem,
    lambda: f64,
    tol: Tolerance,
) -> Result<(usize, f64)> {
    let (_, beta) = boundary_angles(pb);
    let theta = prufer_end_angle(pb, lambda, tol)?;
    let count = ((theta - beta) / PI).ceil().max(0.0) as usize;
    let p1 = pb.p.eval(1.0);
    let (s, c) = theta.sin_cos();
    let f = pb.theta2.cos() * s + pb.theta2.sin() * c / p1;
    Ok((count, f))
}

/// Samples `(y, p y')` at every node for the shooting solution started from
/// `(y, y') = (sin θ₁, cos θ₁)`.
pub(crate) fn sample_solution(
    pb: &SturmLiouvilleProblem,
    lambda: f64,
    nodes: &[f64],
    tol: Tolerance,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let rhs = |x: f64, u: &[f64; 2]| {
        let q = pb.q.eval(x) - lambda * pb.rho.eval(x);
        [u[1] / pb.p.eval(x), -q * u[0]]
    };
    let mut u = [pb.theta1.sin(), pb.p.eval(0.0) * pb.theta1.cos()];
    let mut y = Vec::with_capacity(nodes.len());
    let mut flux = Vec::with_capacity(nodes.len());
    let mut h = 0.0;
    let mut x = 0.0;
    for &node in nodes {
        u = dopri5(rhs, x, u, node, tol, &mut h)?;
        x = node;
        y.push(u[0]);
        flux.push(u[1]);
    }
    Ok((y, flux))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dopri5_matches_exponential() {
        let mut h = 0.0;
        let y = dopri5(
            |_, y: &[f64; 1]| [-2.0 * y[0]],
            0.0,
            [1.0],
            3.0,
            Tolerance::default(),
            &mut h,
        )
        .unwrap();
        assert!((y[0] - (-6.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn dopri5_harmonic_oscillator_in_pieces() {
        let tol = Tolerance::default();
        let mut h = 0.0;
        let mut u = [0.0, 1.0];
        let mut x = 0.0;
        for i in 1..=10 {
            let x1 = i as f64 * 0.7;
            u = dopri5(|_, u: &[f64; 2]| [u[1], -u[0]], x, u, x1, tol, &mut h).unwrap();
            x = x1;
        }
        assert!((u[0] - 7.0f64.sin()).abs() < 1e-10);
        assert!((u[1] - 7.0f64.cos()).abs() < 1e-10);
    }

    #[test]
    fn dirichlet_angles() {
        let pb = SturmLiouvilleProblem::constant(1.0, 0.0, 0.0, 0.0);
        let (a, b) = boundary_angles(&pb);
        assert_eq!(a, 0.0);
        assert!((b - PI).abs() < 1e-15);
    }

    #[test]
    fn dirichlet_counting_function() {
        // eigenvalues −(nπ)²
        let pb = SturmLiouvilleProblem::constant(1.0, 0.0, 0.0, 0.0);
        let tol = Tolerance::default();
        assert_eq!(count_and_sign(&pb, 0.0, tol).unwrap().0, 0);
        assert_eq!(count_and_sign(&pb, -10.0, tol).unwrap().0, 1);
        assert_eq!(count_and_sign(&pb, -50.0, tol).unwrap().0, 2);
        assert_eq!(count_and_sign(&pb, -160.0, tol).unwrap().0, 4);
    }
}
