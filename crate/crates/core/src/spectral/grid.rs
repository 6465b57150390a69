use crate::{Error, Result};

/// Uniform nodes on `[0, 1]` with composite Simpson weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub const DEFAULT_NODES: usize = 801;

    /// `n` must be odd and at least 3.
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 3 || n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "composite Simpson needs an odd node count ≥ 3, got {n}"
            )));
        }
        let h = 1.0 / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n)
            .map(|i| if i == n - 1 { 1.0 } else { i as f64 * h })
            .collect();
        let weights = (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * h / 3.0
            })
            .collect();
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.nodes[1] - self.nodes[0]
    }

    /// `∫₀¹ f dξ` for samples of `f` on the nodes.
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: f.len(),
            });
        }
        Ok(f.iter().zip(&self.weights).map(|(f, w)| f * w).sum())
    }
}

impl Default for Grid {
    fn default() -> Self {
        Self::uniform(Self::DEFAULT_NODES).expect("default node count is odd")
    }
}
