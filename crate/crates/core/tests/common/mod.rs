//! Closed-form eigenpairs of the constant-coefficient reference problem.
//!
//! With ρ = 1 and constant p, q every eigenfunction is
//! `y = k sin θ₁ cos(kξ) + cos θ₁ sin(kξ)` with `λ = q − p k²`, where `k`
//! solves `cos θ₂ y(1) + sin θ₂ y'(1) = 0`.
#![allow(dead_code)]

use std::f64::consts::PI;

pub const P: f64 = 0.015;
pub const Q: f64 = 0.35;
const T1: f64 = PI / 3.0;
const T2: f64 = PI / 10.0;

pub fn mode(k: f64, x: f64) -> (f64, f64) {
    let (a, b) = (k * T1.sin(), T1.cos());
    let y = a * (k * x).cos() + b * (k * x).sin();
    let dy = -a * k * (k * x).sin() + b * k * (k * x).cos();
    (y, dy)
}

pub fn mode_norm(k: f64) -> f64 {
    let (a, b) = (k * T1.sin(), T1.cos());
    let s = (2.0 * k).sin() / (4.0 * k);
    (a * a * (0.5 + s) + b * b * (0.5 - s) + a * b * (1.0 - (2.0 * k).cos()) / (2.0 * k)).sqrt()
}

/// Normalized eigenfunction for wavenumber `k`.
pub fn eigenfunction(k: f64, x: f64) -> f64 {
    mode(k, x).0 / mode_norm(k)
}

/// First `n` wavenumbers by sign scan and bisection.
pub fn wavenumbers(n: usize) -> Vec<f64> {
    let g = |k: f64| {
        let (y, dy) = mode(k, 1.0);
        T2.cos() * y + T2.sin() * dy
    };
    let mut roots = Vec::new();
    let step = 1e-3;
    let mut lo = 1e-9;
    while roots.len() < n {
        let hi = lo + step;
        if g(lo).signum() != g(hi).signum() {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if g(a).signum() == g(m).signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
        lo = hi;
    }
    roots
}

pub fn simpson(f: impl Fn(f64) -> f64, intervals: usize) -> f64 {
    let h = 1.0 / intervals as f64;
    let mut s = f(0.0) + f(1.0);
    for i in 1..intervals {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0
}
