//! Delay fields `D(t, ξ)` and the control history they are read through.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Families of continuous delay fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayKind {
    /// `D ≡ D₀`.
    Constant,
    /// `D(t) = D₀ + amplitude · sin(omega · t + phase)`, uniform in ξ.
    UniformSinusoid {
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    /// `D(t, ξ) = D₀ − a + a |2ξ − 1| {1 + sin((3/2 + ξ) t + 11ξ − 3)}`.
    ///
    /// With `D₀ = 1` and `a = 0.23` this is `0.77 + 0.23 |2ξ − 1| {…}`.
    Reference { amplitude: f64 },
    /// Bilinear interpolation of a rectangular `(t, ξ)` table. Times beyond
    /// the last row hold the last row.
    CustomSampled {
        times: Vec<f64>,
        positions: Vec<f64>,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayField {
    pub kind: DelayKind,
    pub d0: f64,
    pub delta_claimed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub max_deviation: f64,
    pub min_delay: f64,
    pub max_delay: f64,
    pub delta_claimed: f64,
    pub pass: bool,
    /// Some `∂D/∂t ≥ 1` was seen, so `t ↦ t − D(t, ξ)` is not monotone.
    pub non_monotone: bool,
}

impl DelayField {
    pub fn constant(d0: f64) -> Self {
        Self {
            kind: DelayKind::Constant,
            d0,
            delta_claimed: 0.0,
        }
    }

    /// `0.77 + 0.23 |2ξ − 1| {1 + sin((3/2 + ξ) t + 11ξ − 3)}` around `D₀ = 1`.
    pub fn reference_example() -> Self {
        Self::reference_family(1.0, 0.23)
    }

    pub fn reference_family(d0: f64, amplitude: f64) -> Self {
        Self {
            kind: DelayKind::Reference { amplitude },
            d0,
            delta_claimed: amplitude,
        }
    }

    /// Checks the family parameters and `0 ≤ δ < D₀`.
    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0) {
            return Err(Error::InvalidDelay(format!(
                "D0 must be positive, got {}",
                self.d0
            )));
        }
        if !(self.delta_claimed >= 0.0 && self.delta_claimed < self.d0) {
            return Err(Error::InvalidDelay(format!(
                "delta_claimed = {} must lie in [0, D0 = {})",
                self.delta_claimed, self.d0
            )));
        }
        if let DelayKind::CustomSampled {
            times,
            positions,
            values,
        } = &self.kind
        {
            if times.len() < 2 || positions.len() < 2 {
                return Err(Error::InvalidDelay(
                    "sampled delay needs at least a 2×2 lattice".into(),
                ));
            }
            if values.len() != times.len() * positions.len() {
                return Err(Error::InvalidDelay(format!(
                    "sampled delay has {} values for a {}×{} lattice",
                    values.len(),
                    times.len(),
                    positions.len()
                )));
            }
            if !times.windows(2).all(|w| w[0] < w[1]) || !positions.windows(2).all(|w| w[0] < w[1])
            {
                return Err(Error::InvalidDelay(
                    "sampled lattice axes must be strictly increasing".into(),
                ));
            }
            if positions[0] > 0.0 || *positions.last().unwrap() < 1.0 {
                return Err(Error::InvalidDelay(
                    "sampled lattice must cover ξ ∈ [0, 1]".into(),
                ));
            }
        }
        if self.deviation_bound() >= self.d0 {
            return Err(Error::InvalidDelay(format!(
                "delay field can reach zero (deviation bound {} ≥ D0)",
                self.deviation_bound()
            )));
        }
        Ok(())
    }

    /// `D(t, ξ)`.
    pub fn evaluate(&self, t: f64, xi: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::Domain(xi));
        }
        Ok(self.eval_unchecked(t, xi))
    }

    pub(crate) fn eval_unchecked(&self, t: f64, xi: f64) -> f64 {
        match &self.kind {
            DelayKind::Constant => self.d0,
            DelayKind::UniformSinusoid {
                amplitude,
                omega,
                phase,
            } => self.d0 + amplitude * (omega * t + phase).sin(),
            DelayKind::Reference { amplitude } => {
                self.d0 - amplitude
                    + amplitude
                        * (2.0 * xi - 1.0).abs()
                        * (1.0 + ((1.5 + xi) * t + 11.0 * xi - 3.0).sin())
            }
            DelayKind::CustomSampled {
                times,
                positions,
                values,
            } => bilinear(times, positions, values, t, xi),
        }
    }

    /// An upper bound on `|D − D₀|` that holds everywhere.
    pub fn deviation_bound(&self) -> f64 {
        match &self.kind {
            DelayKind::Constant => 0.0,
            DelayKind::UniformSinusoid { amplitude, .. } => amplitude.abs(),
            DelayKind::Reference { amplitude } => amplitude.abs(),
            DelayKind::CustomSampled { values, .. } => values
                .iter()
                .fold(0.0f64, |m, v| m.max((v - self.d0).abs())),
        }
    }

    /// Scans `n_xi × n_t` points of `[0, 1] × [0, t_max]`.
    pub fn validate_deviation(
        &self,
        n_xi: usize,
        n_t: usize,
        t_max: f64,
    ) -> Result<DeviationReport> {
        if n_xi < 64 || n_t < 64 {
            return Err(Error::InvalidDelay(format!(
                "validation lattice must be at least 64 × 64, got {n_xi} × {n_t}"
            )));
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut non_monotone = false;
        let dt = t_max / (n_t - 1) as f64;
        for i in 0..n_xi {
            let xi = i as f64 / (n_xi - 1) as f64;
            let mut prev = None;
            for j in 0..n_t {
                let t = j as f64 * dt;
                let d = self.eval_unchecked(t, xi);
                lo = lo.min(d);
                hi = hi.max(d);
                if let Some(p) = prev {
                    if d - p >= dt {
                        non_monotone = true;
                    }
                }
                prev = Some(d);
            }
        }
        let max_deviation = (hi - self.d0).max(self.d0 - lo);
        Ok(DeviationReport {
            max_deviation,
            min_delay: lo,
            max_delay: hi,
            delta_claimed: self.delta_claimed,
            pass: max_deviation <= self.delta_claimed + 1e-12,
            non_monotone,
        })
    }
}

fn locate(axis: &[f64], x: f64) -> (usize, f64) {
    if x <= axis[0] {
        return (0, 0.0);
    }
    let last = axis.len() - 1;
    if x >= axis[last] {
        return (last - 1, 1.0);
    }
    let j = axis.partition_point(|&a| a <= x) - 1;
    (j, (x - axis[j]) / (axis[j + 1] - axis[j]))
}

fn bilinear(times: &[f64], positions: &[f64], values: &[f64], t: f64, xi: f64) -> f64 {
    let (i, a) = locate(times, t);
    let (j, b) = locate(positions, xi);
    let m = positions.len();
    let v = |r: usize, c: usize| values[r * m + c];
    (1.0 - a) * ((1.0 - b) * v(i, j) + b * v(i, j + 1))
        + a * ((1.0 - b) * v(i + 1, j) + b * v(i + 1, j + 1))
}

/// Past control samples `w(k·dt)`, `k = 0, 1, …`, with zero control for
/// negative times and linear interpolation in between.
#[derive(Debug, Clone)]
pub struct ControlHistory {
    dim: usize,
    dt: f64,
    /// Maximum retained samples; `None` keeps everything.
    capacity: Option<usize>,
    /// Index of the oldest retained sample.
    first: usize,
    samples: VecDeque<f64>,
}

impl ControlHistory {
    /// Retains at least `window` seconds behind the newest sample.
    pub fn new(dim: usize, dt: f64, window: f64) -> Result<Self> {
        if !(dt > 0.0) || !(window >= 0.0) {
            return Err(Error::StepSize(format!(
                "invalid history spacing {dt} or window {window}"
            )));
        }
        let capacity = (window / dt).ceil() as usize + 2;
        Ok(Self {
            dim,
            dt,
            capacity: Some(capacity),
            first: 0,
            samples: VecDeque::with_capacity(capacity * dim),
        })
    }

    pub fn unbounded(dim: usize, dt: f64) -> Result<Self> {
        let mut h = Self::new(dim, dt, 0.0)?;
        h.capacity = None;
        Ok(h)
    }

    /// Rebuilds a history from a row-major trace of samples `w(k·dt)`.
    pub fn from_trace(dim: usize, dt: f64, trace: &[f64]) -> Result<Self> {
        if dim == 0 || !trace.len().is_multiple_of(dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: trace.len(),
            });
        }
        let mut h = Self::unbounded(dim, dt)?;
        h.samples.extend(trace.iter().copied());
        Ok(h)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of samples pushed so far.
    pub fn len(&self) -> usize {
        self.first + self.samples.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Time of the newest sample.
    pub fn t_head(&self) -> Option<f64> {
        self.len().checked_sub(1).map(|k| k as f64 * self.dt)
    }

    pub fn oldest_time(&self) -> f64 {
        self.first as f64 * self.dt
    }

    /// Appends `w((len)·dt)`.
    pub fn push(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: w.len(),
            });
        }
        self.samples.extend(w.iter().copied());
        if let Some(cap) = self.capacity {
            while self.samples.len() > cap * self.dim {
                self.samples.drain(..self.dim);
                self.first += 1;
            }
        }
        Ok(())
    }

    /// Stored sample `w(k·dt)`; zero for negative `k`.
    pub fn sample(&self, k: i64, out: &mut [f64]) -> Result<()> {
        if k < 0 {
            out.fill(0.0);
            return Ok(());
        }
        let k = k as usize;
        if k < self.first {
            return Err(Error::OutOfWindow {
                s: k as f64 * self.dt,
                oldest: self.oldest_time(),
            });
        }
        if k >= self.len() {
            return Err(Error::Future {
                s: k as f64 * self.dt,
                head: self.t_head().unwrap_or(f64::NEG_INFINITY),
            });
        }
        let base = (k - self.first) * self.dim;
        for (d, o) in out.iter_mut().enumerate() {
            *o = self.samples[base + d];
        }
        Ok(())
    }

    /// `w(s)` written into `out`.
    pub fn lookup_into(&self, s: f64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: out.len(),
            });
        }
        if s <= 0.0 {
            out.fill(0.0);
            return Ok(());
        }
        let pos = s / self.dt;
        let k = pos.floor();
        let frac = pos - k;
        let k = k as i64;
        let head = self.len() as i64 - 1;
        if k > head || (k == head && frac > 1e-9) {
            return Err(Error::Future {
                s,
                head: self.t_head().unwrap_or(f64::NEG_INFINITY),
            });
        }
        if (k as usize) < self.first {
            return Err(Error::OutOfWindow {
                s,
                oldest: self.oldest_time(),
            });
        }
        let base = (k as usize - self.first) * self.dim;
        if frac == 0.0 || k == head {
            for (d, o) in out.iter_mut().enumerate() {
                *o = self.samples[base + d];
            }
        } else {
            for (d, o) in out.iter_mut().enumerate() {
                let a = self.samples[base + d];
                let b = self.samples[base + self.dim + d];
                *o = a + frac * (b - a);
            }
        }
        Ok(())
    }

    pub fn lookup(&self, s: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.lookup_into(s, &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_field_center_is_constant() {
        let d = DelayField::reference_example();
        for t in [0.0, 0.3, 7.0, 39.0] {
            assert!((d.evaluate(t, 0.5).unwrap() - 0.77).abs() < 1e-15);
        }
        assert_eq!(DelayField::constant(1.0).evaluate(12.0, 0.3).unwrap(), 1.0);
    }

    #[test]
    fn domain_error_outside_unit_interval() {
        let d = DelayField::reference_example();
        assert!(matches!(d.evaluate(0.0, 1.5), Err(Error::Domain(_))));
        assert!(matches!(d.evaluate(0.0, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn lattice_bounds_of_reference_field() {
        // 101 × 1001 lattice over [0, 1] × [0, 40]
        let r = DelayField::reference_example()
            .validate_deviation(101, 1001, 40.0)
            .unwrap();
        assert!(r.min_delay >= 0.77 - 1e-15);
        assert!(r.max_delay <= 1.23 + 1e-15);
        assert!(r.max_deviation <= 0.23 + 1e-15);
        assert!(r.pass);
        assert!(!r.non_monotone);
    }

    #[test]
    fn claimed_bound_too_small_fails() {
        let mut d = DelayField::reference_example();
        d.delta_claimed = 0.20;
        let r = d.validate_deviation(101, 1001, 40.0).unwrap();
        assert!(!r.pass);
        assert!((r.max_deviation - 0.23).abs() < 1e-3);
    }

    #[test]
    fn constant_field_has_no_deviation() {
        let r = DelayField::constant(1.0)
            .validate_deviation(64, 64, 10.0)
            .unwrap();
        assert_eq!(r.max_deviation, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn small_lattice_rejected() {
        assert!(DelayField::constant(1.0)
            .validate_deviation(10, 100, 1.0)
            .is_err());
    }

    #[test]
    fn fast_sinusoid_flags_non_monotone_arrival() {
        let d = DelayField {
            kind: DelayKind::UniformSinusoid {
                amplitude: 0.2,
                omega: 10.0,
                phase: 0.0,
            },
            d0: 1.0,
            delta_claimed: 0.2,
        };
        let r = d.validate_deviation(64, 4001, 10.0).unwrap();
        assert!(r.non_monotone);
        assert!(r.pass);
    }

    #[test]
    fn bilinear_custom_field() {
        let d = DelayField {
            kind: DelayKind::CustomSampled {
                times: vec![0.0, 2.0],
                positions: vec![0.0, 1.0],
                values: vec![1.0, 1.2, 0.8, 1.0],
            },
            d0: 1.0,
            delta_claimed: 0.2,
        };
        d.validate().unwrap();
        assert!((d.evaluate(1.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((d.evaluate(0.0, 0.5).unwrap() - 1.1).abs() < 1e-15);
        assert!((d.evaluate(5.0, 0.0).unwrap() - 0.8).abs() < 1e-15);
        assert!((d.deviation_bound() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn invalid_fields() {
        assert!(DelayField::constant(0.0).validate().is_err());
        let mut d = DelayField::reference_example();
        d.delta_claimed = 1.0;
        assert!(d.validate().is_err());
        assert!(DelayField::reference_family(1.0, 1.2).validate().is_err());
    }

    #[test]
    fn history_zero_past_exact_samples_and_midpoints() {
        let mut h = ControlHistory::new(2, 0.1, 1.0).unwrap();
        for k in 0..5 {
            h.push(&[k as f64, -(k as f64) * 2.0]).unwrap();
        }
        assert_eq!(h.lookup(-0.5).unwrap(), vec![0.0, 0.0]);
        assert_eq!(h.lookup(0.0).unwrap(), vec![0.0, 0.0]);
        let s = 3.0 * 0.1;
        let v = h.lookup(s).unwrap();
        assert!((v[0] - 3.0).abs() < 1e-12 && (v[1] + 6.0).abs() < 1e-12);
        let mid = h.lookup(0.25).unwrap();
        assert!((mid[0] - 2.5).abs() < 1e-12 && (mid[1] + 5.0).abs() < 1e-12);
        assert!(matches!(h.lookup(0.5), Err(Error::Future { .. })));
    }

    #[test]
    fn history_guards_its_window() {
        let mut h = ControlHistory::new(1, 0.1, 0.3).unwrap();
        for k in 0..50 {
            h.push(&[k as f64]).unwrap();
        }
        assert!(h.lookup(4.9 - 0.3).is_ok());
        assert!(matches!(h.lookup(1.0), Err(Error::OutOfWindow { .. })));
        assert_eq!(h.lookup(-1.0).unwrap(), vec![0.0]);
    }

    #[test]
    fn interpolation_error_is_second_order() {
        let err = |dt: f64| {
            let mut h = ControlHistory::unbounded(1, dt).unwrap();
            let n = (3.0 / dt) as usize + 1;
            for k in 0..n {
                h.push(&[(k as f64 * dt).sin()]).unwrap();
            }
            (0..200)
                .map(|i| {
                    let s = 0.5 + i as f64 * 0.01237;
                    (h.lookup(s).unwrap()[0] - s.sin()).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(0.02) / err(0.01);
        assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
    }
}
