//! Transition ramp and the discretized constant-delay predictor
//!
//! `w(t) = φ(t) K { x(t) + ∫_{t−D₀}^{t} e^{(t−D₀−s)Λ} w(s) ds }`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::delay::ControlHistory;
use crate::design::ControllerDesign;
use crate::{Error, Result};

/// Continuous ramp from 0 (t ≤ 0) to 1 (t ≥ t₀).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionSignal {
    pub t0: f64,
}

impl TransitionSignal {
    pub fn new(t0: f64) -> Result<Self> {
        if !(t0 > 0.0) {
            return Err(Error::InvalidDesign(format!(
                "transition time must be positive, got {t0}"
            )));
        }
        Ok(Self { t0 })
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t >= self.t0 {
            1.0
        } else {
            t / self.t0
        }
    }
}

/// Quadrature rule for the predictor integral on the history grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadRule {
    /// Nodes `t − D₀, …, t − h`; explicit in `w(t)`.
    #[default]
    #[serde(alias = "left")]
    LeftRiemann,
    /// Includes `s = t`, which makes `w(t)` the solution of a linear system.
    Trapezoid,
}

impl std::str::FromStr for QuadRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" | "left_riemann" => Ok(QuadRule::LeftRiemann),
            "trapezoid" => Ok(QuadRule::Trapezoid),
            other => Err(Error::Config(format!("unknown quadrature rule `{other}`"))),
        }
    }
}

/// Predictor on a history grid of spacing `h` with `D₀ = m·h`.
#[derive(Debug, Clone)]
pub struct PredictorState {
    n: usize,
    k: DMatrix<f64>,
    phi: TransitionSignal,
    rule: QuadRule,
    h: f64,
    m: usize,
    /// `kernel[j][i] = e^{−j h λ_i}`, `j = 0..=m`.
    kernel: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorOutput {
    pub w: Vec<f64>,
    /// Discretized integral term; `x + integral` is the Artstein state.
    pub integral: Vec<f64>,
}

impl PredictorState {
    pub fn new(design: &ControllerDesign, rule: QuadRule, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::StepSize(format!(
                "predictor step must be positive, got {h}"
            )));
        }
        let ratio = design.d0 / h;
        let m = ratio.round();
        if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::StepSize(format!(
                "D0 = {} is not an integer multiple of the step {h}",
                design.d0
            )));
        }
        let m = m as usize;
        let kernel = (0..=m)
            .map(|j| {
                design
                    .lambda
                    .iter()
                    .map(|l| (-(j as f64) * h * l).exp())
                    .collect()
            })
            .collect();
        Ok(Self {
            n: design.n,
            k: design.k.clone(),
            phi: TransitionSignal::new(design.t0)?,
            rule,
            h,
            m,
            kernel,
        })
    }

    pub fn rule(&self) -> QuadRule {
        self.rule
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn transition(&self) -> TransitionSignal {
        self.phi
    }

    fn step_index(&self, t: f64) -> Result<i64> {
        let pos = t / self.h;
        let k = pos.round();
        if (pos - k).abs() > 1e-7 {
            return Err(Error::StepSize(format!(
                "t = {t} is not on the predictor grid of step {}",
                self.h
            )));
        }
        Ok(k as i64)
    }

    /// Explicit part of the integral: every node strictly before `t`, with
    /// the rule's weights.
    fn past_integral(&self, k: i64, hist: &ControlHistory) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.n];
        let mut w = vec![0.0; self.n];
        // node s_j = t − D₀ + j h carries kernel e^{−j h Λ}
        for j in 0..self.m {
            let idx = k - self.m as i64 + j as i64;
            if idx < 0 {
                continue;
            }
            hist.sample(idx, &mut w)?;
            let weight = if self.rule == QuadRule::Trapezoid && j == 0 {
                0.5 * self.h
            } else {
                self.h
            };
            let ker = &self.kernel[j];
            for i in 0..self.n {
                acc[i] += weight * ker[i] * w[i];
            }
        }
        Ok(acc)
    }

    /// `w(t)` for the modal state `x` (first `N` entries are used).
    ///
    /// `hist` must hold every sample strictly before `t` back to `t − D₀`.
    pub fn output(&self, t: f64, x: &[f64], hist: &ControlHistory) -> Result<PredictorOutput> {
        if x.len() < self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: x.len(),
            });
        }
        let phi = self.phi.value(t);
        if phi == 0.0 {
            let integral = if t < 0.0 {
                vec![0.0; self.n]
            } else {
                self.past_integral(self.step_index(t)?, hist)?
            };
            return Ok(PredictorOutput {
                w: vec![0.0; self.n],
                integral,
            });
        }
        let k = self.step_index(t)?;
        let integral = self.past_integral(k, hist)?;
        let z = DVector::from_iterator(
            self.n,
            x[..self.n].iter().zip(&integral).map(|(x, i)| x + i),
        );
        let rhs = (&self.k * z) * phi;
        match self.rule {
            QuadRule::LeftRiemann => Ok(PredictorOutput {
                w: rhs.as_slice().to_vec(),
                integral,
            }),
            QuadRule::Trapezoid => {
                let endpoint =
                    DMatrix::from_diagonal(&DVector::from_column_slice(&self.kernel[self.m]));
                let system =
                    DMatrix::identity(self.n, self.n) - &self.k * endpoint * (phi * 0.5 * self.h);
                let w = system.lu().solve(&rhs).ok_or_else(|| {
                    Error::StepSize(format!(
                        "implicit trapezoid system is singular at t = {t}; use a smaller step"
                    ))
                })?;
                let mut integral = integral;
                for i in 0..self.n {
                    integral[i] += 0.5 * self.h * self.kernel[self.m][i] * w[i];
                }
                Ok(PredictorOutput {
                    w: w.as_slice().to_vec(),
                    integral,
                })
            }
        }
    }

    /// Artstein state `z(t) = x(t) + ∫ e^{(t−D₀−s)Λ} w(s) ds` with the same
    /// discretization as the control path. For the trapezoid rule `w(t)`
    /// must already be stored.
    pub fn artstein_state(&self, t: f64, x: &[f64], hist: &ControlHistory) -> Result<Vec<f64>> {
        if x.len() < self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: x.len(),
            });
        }
        if t < 0.0 {
            return Ok(x[..self.n].to_vec());
        }
        let k = self.step_index(t)?;
        let mut integral = self.past_integral(k, hist)?;
        if self.rule == QuadRule::Trapezoid {
            let mut w = vec![0.0; self.n];
            hist.sample(k, &mut w)?;
            for i in 0..self.n {
                integral[i] += 0.5 * self.h * self.kernel[self.m][i] * w[i];
            }
        }
        Ok(x[..self.n]
            .iter()
            .zip(&integral)
            .map(|(x, i)| x + i)
            .collect())
    }
}
