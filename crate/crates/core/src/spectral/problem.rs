use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A coefficient function on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coefficient {
    Constant {
        value: f64,
    },
    /// `c[0] + c[1] ξ + c[2] ξ² + …`
    Polynomial {
        coeffs: Vec<f64>,
    },
}

impl Coefficient {
    pub fn constant(value: f64) -> Self {
        Coefficient::Constant { value }
    }

    pub fn eval(&self, xi: f64) -> f64 {
        match self {
            Coefficient::Constant { value } => *value,
            Coefficient::Polynomial { coeffs } => {
                coeffs.iter().rev().fold(0.0, |acc, c| acc * xi + c)
            }
        }
    }

    pub fn sample(&self, nodes: &[f64]) -> Vec<f64> {
        nodes.iter().map(|&x| self.eval(x)).collect()
    }

    /// Returns a copy with `c` added to the function.
    pub fn shifted(&self, c: f64) -> Self {
        match self {
            Coefficient::Constant { value } => Coefficient::Constant { value: value + c },
            Coefficient::Polynomial { coeffs } => {
                let mut coeffs = coeffs.clone();
                if coeffs.is_empty() {
                    coeffs.push(0.0);
                }
                coeffs[0] += c;
                Coefficient::Polynomial { coeffs }
            }
        }
    }
}

/// `A f = (1/ρ)(p f')' + (q/ρ) f` on `[0, 1]` with Robin conditions
/// `cos θ₁ f(0) − sin θ₁ f'(0) = 0` and `cos θ₂ f(1) + sin θ₂ f'(1) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SturmLiouvilleProblem {
    pub rho: Coefficient,
    pub p: Coefficient,
    pub q: Coefficient,
    pub theta1: f64,
    pub theta2: f64,
}

impl SturmLiouvilleProblem {
    /// Constant-coefficient problem with unit weight.
    pub fn constant(p: f64, q: f64, theta1: f64, theta2: f64) -> Self {
        Self {
            rho: Coefficient::constant(1.0),
            p: Coefficient::constant(p),
            q: Coefficient::constant(q),
            theta1,
            theta2,
        }
    }

    /// ρ = 1, p = 0.015, q = 0.35, θ₁ = π/3, θ₂ = π/10.
    pub fn reference_example() -> Self {
        use std::f64::consts::PI;
        Self::constant(0.015, 0.35, PI / 3.0, PI / 10.0)
    }

    /// Checks the angles and the positivity of ρ and p at every node.
    pub fn validate(&self, nodes: &[f64]) -> Result<()> {
        for (name, theta) in [("theta1", self.theta1), ("theta2", self.theta2)] {
            if !(theta.is_finite() && (0.0..TAU).contains(&theta)) {
                return Err(Error::InvalidProblem(format!(
                    "{name} = {theta} is outside [0, 2π)"
                )));
            }
        }
        for &x in nodes {
            let (rho, p, q) = (self.rho.eval(x), self.p.eval(x), self.q.eval(x));
            if !(rho > 0.0) {
                return Err(Error::InvalidProblem(format!(
                    "ρ({x}) = {rho} is not positive"
                )));
            }
            if !(p > 0.0) {
                return Err(Error::InvalidProblem(format!(
                    "p({x}) = {p} is not positive"
                )));
            }
            if !q.is_finite() {
                return Err(Error::InvalidProblem(format!("q({x}) = {q} is not finite")));
            }
        }
        Ok(())
    }
}
