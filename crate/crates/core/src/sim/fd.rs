//! Method-of-lines solver for
//! `y_t = (1/ρ)(p y_ξ)_ξ + (q/ρ) y + u(t − D(t, ξ), ξ)` with Robin ends.
//!
//! Second-order conservative differences in space; half cells at the
//! boundaries carry the Robin flux. Time stepping is TR-BDF2
//! (`γ = 2 − √2`), which is L-stable, so the stiff diffusion modes need no
//! step restriction. Both stages share the matrix `I − (1 − 1/√2) dt L`.

use serde::{Deserialize, Serialize};

use super::{InitialCondition, SimulationConfig, EIGEN_TOL};
use crate::delay::ControlHistory;
use crate::spectral::{solve_eigensystem, Grid, SpectralBasis};
use crate::{Error, Result};

pub const MIN_FD_NODES: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdOptions {
    /// Odd node count of the uniform grid.
    pub nodes: usize,
    pub dt: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdTrajectory {
    pub grid: Grid,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl FdTrajectory {
    pub fn state_at(&self, t: f64) -> Option<&[f64]> {
        self.times
            .iter()
            .position(|s| (s - t).abs() < 1e-9)
            .map(|i| self.states[i].as_slice())
    }
}

/// Tridiagonal operator rows `sub[i] y_{i−1} + diag[i] y_i + sup[i] y_{i+1}`.
struct Operator {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    pinned: Vec<bool>,
}

impl Operator {
    fn build(config: &SimulationConfig, nodes: &[f64]) -> Self {
        let pb = &config.problem;
        let n = nodes.len();
        let h = nodes[1] - nodes[0];
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut pinned = vec![false; n];
        let flux = |x: f64| pb.p.eval(x);
        for i in 0..n {
            let x = nodes[i];
            let rho = pb.rho.eval(x);
            let q = pb.q.eval(x) / rho;
            if i == 0 {
                if pb.theta1.sin().abs() < 1e-14 {
                    pinned[i] = true;
                    continue;
                }
                // p y'(0) = p(0) cot θ₁ y(0)
                let cot = pb.theta1.cos() / pb.theta1.sin();
                let pr = flux(x + 0.5 * h);
                diag[i] = (-pr / h - flux(0.0) * cot) / (0.5 * h * rho) + q;
                sup[i] = pr / h / (0.5 * h * rho);
            } else if i == n - 1 {
                if pb.theta2.sin().abs() < 1e-14 {
                    pinned[i] = true;
                    continue;
                }
                // p y'(1) = −p(1) cot θ₂ y(1)
                let cot = pb.theta2.cos() / pb.theta2.sin();
                let pl = flux(x - 0.5 * h);
                diag[i] = (-flux(1.0) * cot - pl / h) / (0.5 * h * rho) + q;
                sub[i] = pl / h / (0.5 * h * rho);
            } else {
                let (pl, pr) = (flux(x - 0.5 * h), flux(x + 0.5 * h));
                sub[i] = pl / (h * h * rho);
                sup[i] = pr / (h * h * rho);
                diag[i] = -(pl + pr) / (h * h * rho) + q;
            }
        }
        Self {
            sub,
            diag,
            sup,
            pinned,
        }
    }

    fn apply(&self, y: &[f64], out: &mut [f64]) {
        let n = y.len();
        for i in 0..n {
            let mut v = self.diag[i] * y[i];
            if i > 0 {
                v += self.sub[i] * y[i - 1];
            }
            if i + 1 < n {
                v += self.sup[i] * y[i + 1];
            }
            out[i] = if self.pinned[i] { 0.0 } else { v };
        }
    }
}

/// Thomas factorization of `I − c L`.
struct Factorized {
    lower: Vec<f64>,
    pivot: Vec<f64>,
    upper: Vec<f64>,
}

impl Factorized {
    fn new(op: &Operator, c: f64) -> Result<Self> {
        let n = op.diag.len();
        let a: Vec<f64> = op.sub.iter().map(|v| -c * v).collect();
        let b: Vec<f64> = op.diag.iter().map(|v| 1.0 - c * v).collect();
        let upper: Vec<f64> = op.sup.iter().map(|v| -c * v).collect();
        let mut pivot = vec![0.0; n];
        let mut lower = vec![0.0; n];
        pivot[0] = b[0];
        for i in 1..n {
            if pivot[i - 1].abs() < 1e-300 {
                return Err(Error::Degenerate(
                    "singular finite-difference system".into(),
                ));
            }
            lower[i] = a[i] / pivot[i - 1];
            pivot[i] = b[i] - lower[i] * upper[i - 1];
        }
        Ok(Self {
            lower,
            pivot,
            upper,
        })
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        for i in 1..n {
            rhs[i] -= self.lower[i] * rhs[i - 1];
        }
        rhs[n - 1] /= self.pivot[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.upper[i] * rhs[i + 1]) / self.pivot[i];
        }
    }
}

struct Forcing<'a> {
    config: &'a SimulationConfig,
    controls: &'a ControlHistory,
    basis: &'a SpectralBasis,
    pinned: &'a [bool],
    w: Vec<f64>,
}

impl Forcing<'_> {
    fn eval(&mut self, t: f64, out: &mut [f64]) -> Result<()> {
        let n_ctrl = self.controls.dim();
        for (i, &xi) in self.basis.grid().nodes().iter().enumerate() {
            if self.pinned[i] {
                out[i] = 0.0;
                continue;
            }
            let s = t - self.config.delay.eval_unchecked(t, xi);
            self.controls.lookup_into(s, &mut self.w)?;
            out[i] = (0..n_ctrl)
                .map(|k| self.w[k] * self.basis.eigenfunction(k)[i])
                .sum();
        }
        Ok(())
    }
}

/// Finite-difference solution driven by a recorded control history.
///
/// The distributed input is `u(t − D(t, ξ), ξ) = Σ_k w_k(t − D(t, ξ)) e_k(ξ)`
/// with `e_k` solved on the finite-difference grid. States are stored at the
/// requested `sample_times` (rounded to the time grid).
pub fn fd_oracle(
    config: &SimulationConfig,
    controls: &ControlHistory,
    options: FdOptions,
    sample_times: &[f64],
) -> Result<FdTrajectory> {
    if options.nodes < MIN_FD_NODES {
        return Err(Error::Config(format!(
            "finite-difference resolution {} is too coarse (minimum {MIN_FD_NODES})",
            options.nodes
        )));
    }
    if !(options.dt > 0.0 && options.t_end > 0.0) {
        return Err(Error::StepSize(format!(
            "invalid dt {} or t_end {}",
            options.dt, options.t_end
        )));
    }
    let grid = Grid::uniform(options.nodes)?;
    let n_ctrl = controls.dim();
    let basis = solve_eigensystem(&config.problem, n_ctrl.max(1), &grid, EIGEN_TOL)?;
    let op = Operator::build(config, grid.nodes());
    let gamma = 2.0 - 2f64.sqrt();
    let c = 1.0 - 1.0 / 2f64.sqrt();
    let factor = Factorized::new(&op, c * options.dt)?;

    let mut y = match &config.y0 {
        InitialCondition::Mode { .. } | InitialCondition::Sampled { .. } => {
            let full = solve_eigensystem(&config.problem, config.n_sim_modes, &grid, EIGEN_TOL)?;
            config.y0.sample(&full)?
        }
        other => other.sample(&basis)?,
    };
    for (yi, &p) in y.iter_mut().zip(&op.pinned) {
        if p {
            *yi = 0.0;
        }
    }

    let mut forcing = Forcing {
        config,
        controls,
        basis: &basis,
        pinned: &op.pinned,
        w: vec![0.0; n_ctrl],
    };
    let n = grid.len();
    let steps = (options.t_end / options.dt).round() as usize;
    let wanted: Vec<usize> = sample_times
        .iter()
        .map(|t| (t / options.dt).round() as usize)
        .collect();
    let mut traj = FdTrajectory {
        grid: grid.clone(),
        times: Vec::new(),
        states: Vec::new(),
    };
    let store = |k: usize, y: &[f64], traj: &mut FdTrajectory| {
        if wanted.contains(&k) {
            traj.times.push(k as f64 * options.dt);
            traj.states.push(y.to_vec());
        }
    };
    store(0, &y, &mut traj);

    let (mut f0, mut fg, mut f1) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut ly, mut rhs) = (vec![0.0; n], vec![0.0; n]);
    forcing.eval(0.0, &mut f0)?;
    let (a_prev, a_gamma) = (
        (1.0 - gamma).powi(2) / (gamma * (2.0 - gamma)),
        1.0 / (gamma * (2.0 - gamma)),
    );
    for k in 0..steps {
        let t = k as f64 * options.dt;
        let dt = options.dt;
        forcing.eval(t + gamma * dt, &mut fg)?;
        forcing.eval(t + dt, &mut f1)?;
        // trapezoid stage to t + γ dt
        op.apply(&y, &mut ly);
        for i in 0..n {
            rhs[i] = y[i] + c * dt * (ly[i] + f0[i] + fg[i]);
        }
        factor.solve(&mut rhs);
        let y_gamma = rhs.clone();
        // BDF2 stage to t + dt
        for i in 0..n {
            rhs[i] = a_gamma * y_gamma[i] - a_prev * y[i] + c * dt * f1[i];
        }
        factor.solve(&mut rhs);
        for i in 0..n {
            y[i] = if op.pinned[i] { 0.0 } else { rhs[i] };
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(t + dt));
        }
        std::mem::swap(&mut f0, &mut f1);
        store(k + 1, &y, &mut traj);
    }
    Ok(traj)
}

/// Grid-refinement study of the finite-difference solution at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdConvergence {
    pub nodes: usize,
    /// Relative L²_ρ difference between `nodes` and `2·nodes − 1`.
    pub coarse_change: f64,
    /// Relative L²_ρ difference between `2·nodes − 1` and `4·nodes − 3`.
    pub fine_change: f64,
    pub observed_order: f64,
}

/// Runs three nested grids and reports the observed spatial order. An order
/// below 1.5 means `nodes` is too coarse for the asymptotic regime.
pub fn fd_convergence(
    config: &SimulationConfig,
    controls: &ControlHistory,
    nodes: usize,
    dt: f64,
    t_eval: f64,
) -> Result<FdConvergence> {
    let levels = [nodes, 2 * nodes - 1, 4 * nodes - 3];
    let mut states = Vec::new();
    for &m in &levels {
        let traj = fd_oracle(
            config,
            controls,
            FdOptions {
                nodes: m,
                dt,
                t_end: t_eval,
            },
            &[t_eval],
        )?;
        states.push((
            traj.grid.clone(),
            traj.states.last().cloned().unwrap_or_default(),
        ));
    }
    // compare on the coarse nodes, which every finer grid contains
    let coarse = Grid::uniform(nodes)?;
    let rho = config.problem.rho.sample(coarse.nodes());
    let restrict = |(grid, y): &(Grid, Vec<f64>)| -> Vec<f64> {
        let stride = (grid.len() - 1) / (nodes - 1);
        (0..nodes).map(|i| y[i * stride]).collect()
    };
    let r: Vec<Vec<f64>> = states.iter().map(restrict).collect();
    let rel = |a: &[f64], b: &[f64]| -> Result<f64> {
        let diff: Vec<f64> = a
            .iter()
            .zip(b)
            .zip(&rho)
            .map(|((a, b), r)| r * (a - b).powi(2))
            .collect();
        let base: Vec<f64> = b.iter().zip(&rho).map(|(b, r)| r * b * b).collect();
        Ok((coarse.integrate(&diff)? / coarse.integrate(&base)?).sqrt())
    };
    let coarse_change = rel(&r[0], &r[1])?;
    let fine_change = rel(&r[1], &r[2])?;
    let observed_order = (coarse_change / fine_change).log2();
    if !(observed_order >= 1.5) {
        return Err(Error::Degenerate(format!(
            "finite-difference resolution {nodes} is too coarse: observed order {observed_order:.2}"
        )));
    }
    Ok(FdConvergence {
        nodes,
        coarse_change,
        fine_change,
        observed_order,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::delay::DelayField;
    use crate::design::ControllerDesign;
    use crate::spectral::SturmLiouvilleProblem;

    fn config(
        problem: SturmLiouvilleProblem,
        y0: InitialCondition,
        lambda: Vec<f64>,
    ) -> SimulationConfig {
        let design = ControllerDesign::new(lambda, 1.0, 1.0, &[-0.3], 0.2).unwrap();
        let mut c = SimulationConfig::new(problem, design, DelayField::constant(1.0), y0);
        c.n_sim_modes = 4;
        c
    }

    fn idle(dt: f64, t_end: f64) -> ControlHistory {
        let mut h = ControlHistory::unbounded(1, dt).unwrap();
        for _ in 0..=((t_end / dt).round() as usize) {
            h.push(&[0.0]).unwrap();
        }
        h
    }

    #[test]
    fn dirichlet_heat_mode() {
        let pb = SturmLiouvilleProblem::constant(1.0, 0.0, 0.0, 0.0);
        let cfg = config(pb, InitialCondition::Sine { k: 1.0 }, vec![-PI * PI]);
        let traj = fd_oracle(
            &cfg,
            &idle(1e-3, 0.2),
            FdOptions {
                nodes: 201,
                dt: 1e-3,
                t_end: 0.2,
            },
            &[0.2],
        )
        .unwrap();
        let y = traj.state_at(0.2).unwrap();
        let decay = (-PI * PI * 0.2).exp();
        let err = traj
            .grid
            .nodes()
            .iter()
            .zip(y)
            .map(|(x, y)| (y - decay * (PI * x).sin()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4 * decay, "{err}");
    }

    #[test]
    fn robin_mode_grows_at_its_eigenvalue() {
        let pb = SturmLiouvilleProblem::reference_example();
        let basis = solve_eigensystem(&pb, 2, &Grid::uniform(201).unwrap(), 1e-12).unwrap();
        let l1 = basis.eigenvalues()[0];
        let cfg = config(pb, InitialCondition::Mode { index: 1 }, vec![l1]);
        let t = 5.0;
        let traj = fd_oracle(
            &cfg,
            &idle(1e-2, t),
            FdOptions {
                nodes: 201,
                dt: 1e-2,
                t_end: t,
            },
            &[0.0, t],
        )
        .unwrap();
        let n0 = basis.norm(traj.state_at(0.0).unwrap()).unwrap();
        let n1 = basis.norm(traj.state_at(t).unwrap()).unwrap();
        let rate = (n1 / n0).ln() / t;
        assert!((rate / l1 - 1.0).abs() < 0.005, "{rate} vs {l1}");
    }

    #[test]
    fn too_coarse_rejected() {
        let pb = SturmLiouvilleProblem::reference_example();
        let cfg = config(pb, InitialCondition::Reference, vec![0.3]);
        assert!(fd_oracle(
            &cfg,
            &idle(0.1, 1.0),
            FdOptions {
                nodes: 5,
                dt: 0.1,
                t_end: 1.0
            },
            &[]
        )
        .is_err());
    }
}
