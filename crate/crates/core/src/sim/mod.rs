//! Closed-loop simulation in modal coordinates and a finite-difference
//! cross-check.
//!
//! Each mode obeys `ẋ_n = λ_n x_n + v_n(t)` where
//! `v_n(t) = ∫ ρ Σ_k w_k(t − D(t, ξ)) e_k(ξ) e_n(ξ) dξ`. The residual
//! `Δ = v − v₀` compares it with the nominally delayed input
//! `v₀,n(t) = w_n(t − D₀)`.

mod fd;
mod fit;

use serde::{Deserialize, Serialize};

pub use fd::{fd_convergence, fd_oracle, FdConvergence, FdOptions, FdTrajectory};
pub use fit::fit_decay;

use crate::control::{PredictorState, QuadRule};
use crate::delay::{ControlHistory, DelayField, DeviationReport};
use crate::design::ControllerDesign;
use crate::spectral::{solve_eigensystem, Grid, SpectralBasis, SturmLiouvilleProblem};
use crate::{Error, Result};

/// Fraction of the horizon used for the decay fit.
pub const FIT_WINDOW: f64 = 1.0 / 3.0;
/// Eigenvalue tolerance used when a run solves its own basis.
pub const EIGEN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `(1 − 2ξ)/2 + 20ξ(1 − ξ)(ξ − 3/5)`.
    Reference,
    /// Ascending-power coefficients.
    Polynomial { coeffs: Vec<f64> },
    /// `sin(kπξ)`.
    Sine { k: f64 },
    /// Eigenfunction `e_index` (1-based).
    Mode { index: usize },
    /// Values on the simulation grid.
    Sampled { values: Vec<f64> },
}

impl InitialCondition {
    pub fn sample(&self, basis: &SpectralBasis) -> Result<Vec<f64>> {
        let nodes = basis.grid().nodes();
        Ok(match self {
            InitialCondition::Reference => nodes
                .iter()
                .map(|x| (1.0 - 2.0 * x) / 2.0 + 20.0 * x * (1.0 - x) * (x - 0.6))
                .collect(),
            InitialCondition::Polynomial { coeffs } => nodes
                .iter()
                .map(|&x| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c))
                .collect(),
            InitialCondition::Sine { k } => nodes
                .iter()
                .map(|x| (k * std::f64::consts::PI * x).sin())
                .collect(),
            InitialCondition::Mode { index } => {
                if *index == 0 || *index > basis.len() {
                    return Err(Error::Config(format!(
                        "initial mode {index} outside 1..={}",
                        basis.len()
                    )));
                }
                basis.eigenfunction(index - 1).to_vec()
            }
            InitialCondition::Sampled { values } => {
                if values.len() != nodes.len() {
                    return Err(Error::Dimension {
                        expected: nodes.len(),
                        got: values.len(),
                    });
                }
                values.clone()
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub problem: SturmLiouvilleProblem,
    pub n_sim_modes: usize,
    pub design: ControllerDesign,
    pub delay: DelayField,
    pub y0: InitialCondition,
    pub t_end: f64,
    pub dt: f64,
    pub grid: Grid,
    pub rule: QuadRule,
    pub open_loop: bool,
    /// Record every `output_every`-th step.
    pub output_every: usize,
    /// `normX` above this counts as divergence.
    pub divergence_threshold: f64,
    /// δ of an attached certificate, if any.
    pub certified_delta: Option<f64>,
}

impl SimulationConfig {
    pub fn new(
        problem: SturmLiouvilleProblem,
        design: ControllerDesign,
        delay: DelayField,
        y0: InitialCondition,
    ) -> Self {
        Self {
            problem,
            n_sim_modes: 20,
            design,
            delay,
            y0,
            t_end: 30.0,
            dt: 1e-3,
            grid: Grid::default(),
            rule: QuadRule::LeftRiemann,
            open_loop: false,
            output_every: 10,
            divergence_threshold: 1e12,
            certified_delta: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sim_modes <= self.design.n {
            return Err(Error::Config(format!(
                "n_sim_modes = {} must exceed the truncation order N = {}",
                self.n_sim_modes, self.design.n
            )));
        }
        self.delay.validate()?;
        if (self.delay.d0 - self.design.d0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "delay field nominal value {} differs from the design's D0 = {}",
                self.delay.d0, self.design.d0
            )));
        }
        let shortest = self.delay.d0 - self.delay.deviation_bound().max(self.delay.delta_claimed);
        if !(self.dt > 0.0) || self.dt > shortest / 10.0 + 1e-15 {
            return Err(Error::StepSize(format!(
                "dt = {} must be positive and at most (D0 − δ)/10 = {}",
                self.dt,
                shortest / 10.0
            )));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::Config(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if self.output_every == 0 {
            return Err(Error::Config("output_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub rule: QuadRule,
    pub open_loop: bool,
    pub dt: f64,
    pub t_end: f64,
    pub n_sim_modes: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub grid_nodes: usize,
    pub output_every: usize,
    pub history_window: f64,
    pub deviation: DeviationReport,
    /// The delay field stays within a certified δ.
    pub certificate_covered: bool,
    pub certified_delta: Option<f64>,
    pub fit_window: f64,
    pub decaying: bool,
    pub diverged_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub times: Vec<f64>,
    /// Modal state, `n_sim_modes` per instant.
    pub x: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub v_proj: Vec<Vec<f64>>,
    /// Artstein state `x + ∫ e^{(t−D₀−s)Λ} w(s) ds` of the controlled modes.
    pub z: Vec<Vec<f64>>,
    pub delta_norm: Vec<f64>,
    pub norm_x: Vec<f64>,
    pub norm_u: Vec<f64>,
    pub kappa_est: Option<f64>,
    /// Every control sample `w(k·dt)`, row-major, for replay.
    pub control_trace: Vec<f64>,
    pub metadata: RunMetadata,
}

impl SimulationRun {
    pub fn diverged(&self) -> bool {
        self.metadata.diverged_at.is_some()
    }

    /// History over the full run, for replaying the control elsewhere.
    pub fn control_history(&self) -> Result<ControlHistory> {
        ControlHistory::from_trace(self.metadata.n, self.metadata.dt, &self.control_trace)
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| (s - t).abs() < 1e-9)
    }
}

/// Delayed input projections `v_n(t)`, `n = 1..=basis.len()`, and the
/// residual `Δ(t)` for the first `n_ctrl` modes.
pub fn project_delayed_input(
    basis: &SpectralBasis,
    n_ctrl: usize,
    delay: &DelayField,
    history: &ControlHistory,
    t: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut v = vec![0.0; basis.len()];
    let mut scratch = Scratch::new(basis, n_ctrl);
    delayed_input_into(basis, n_ctrl, delay, history, t, &mut scratch, &mut v)?;
    let mut w0 = vec![0.0; n_ctrl];
    history.lookup_into(t - delay.d0, &mut w0)?;
    let delta = (0..n_ctrl).map(|n| v[n] - w0[n]).collect();
    Ok((v, delta))
}

struct Scratch {
    w: Vec<f64>,
    weighted_u: Vec<f64>,
}

impl Scratch {
    fn new(basis: &SpectralBasis, n_ctrl: usize) -> Self {
        Self {
            w: vec![0.0; n_ctrl],
            weighted_u: vec![0.0; basis.grid().len()],
        }
    }
}

fn delayed_input_into(
    basis: &SpectralBasis,
    n_ctrl: usize,
    delay: &DelayField,
    history: &ControlHistory,
    t: f64,
    scratch: &mut Scratch,
    v: &mut [f64],
) -> Result<()> {
    let nodes = basis.grid().nodes();
    let weights = basis.weighted_weights();
    for (i, &xi) in nodes.iter().enumerate() {
        let s = t - delay.eval_unchecked(t, xi);
        history.lookup_into(s, &mut scratch.w)?;
        let u: f64 = (0..n_ctrl)
            .map(|k| scratch.w[k] * basis.eigenfunction(k)[i])
            .sum();
        scratch.weighted_u[i] = weights[i] * u;
    }
    for (n, vn) in v.iter_mut().enumerate() {
        *vn = basis
            .eigenfunction(n)
            .iter()
            .zip(&scratch.weighted_u)
            .map(|(e, u)| e * u)
            .sum();
    }
    Ok(())
}

/// One RK4 step of `ẋ_n = λ_n x_n + v_n` given `v` at `t`, `t + dt/2`, `t + dt`.
pub fn step(
    lambda: &[f64],
    x: &[f64],
    dt: f64,
    v_start: &[f64],
    v_mid: &[f64],
    v_end: &[f64],
) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(n, &xn)| {
            let l = lambda[n];
            let k1 = l * xn + v_start[n];
            let k2 = l * (xn + 0.5 * dt * k1) + v_mid[n];
            let k3 = l * (xn + 0.5 * dt * k2) + v_mid[n];
            let k4 = l * (xn + dt * k3) + v_end[n];
            xn + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        })
        .collect()
}

/// Solves the basis on `config.grid` and simulates.
pub fn run(config: &SimulationConfig) -> Result<SimulationRun> {
    let basis = solve_eigensystem(&config.problem, config.n_sim_modes, &config.grid, EIGEN_TOL)?;
    run_with_basis(config, &basis)
}

/// Simulates with a precomputed basis holding at least `n_sim_modes` modes.
pub fn run_with_basis(config: &SimulationConfig, basis: &SpectralBasis) -> Result<SimulationRun> {
    config.validate()?;
    if basis.len() < config.n_sim_modes {
        return Err(Error::Dimension {
            expected: config.n_sim_modes,
            got: basis.len(),
        });
    }
    let basis = basis.truncated(config.n_sim_modes);
    let n_ctrl = config.design.n;
    let dt = config.dt;
    let lambda = basis.eigenvalues().to_vec();
    for (n, (a, b)) in lambda.iter().zip(&config.design.lambda).enumerate() {
        if (a - b).abs() > 1e-6 * a.abs().max(1.0) {
            return Err(Error::Config(format!(
                "design eigenvalue λ{} = {b} does not match the basis value {a}",
                n + 1
            )));
        }
    }

    let deviation = config.delay.validate_deviation(101, 1001, config.t_end)?;
    let bound = config
        .delay
        .deviation_bound()
        .max(config.delay.delta_claimed);
    let window = config.delay.d0 + bound + 2.0 * dt;
    let mut history = ControlHistory::new(n_ctrl, dt, window)?;
    let predictor = PredictorState::new(&config.design, config.rule, dt)?;

    let y0 = config.y0.sample(&basis)?;
    let mut x = basis.project(&y0, config.n_sim_modes)?;
    let n_steps = (config.t_end / dt).round() as usize;

    let mut run = SimulationRun {
        times: Vec::new(),
        x: Vec::new(),
        w: Vec::new(),
        v_proj: Vec::new(),
        z: Vec::new(),
        delta_norm: Vec::new(),
        norm_x: Vec::new(),
        norm_u: Vec::new(),
        kappa_est: None,
        control_trace: Vec::with_capacity((n_steps + 1) * n_ctrl),
        metadata: RunMetadata {
            rule: config.rule,
            open_loop: config.open_loop,
            dt,
            t_end: config.t_end,
            n_sim_modes: config.n_sim_modes,
            n: n_ctrl,
            grid_nodes: basis.grid().len(),
            output_every: config.output_every,
            history_window: window,
            deviation,
            certificate_covered: deviation.pass
                && config
                    .certified_delta
                    .is_some_and(|d| deviation.max_deviation <= d && bound <= d),
            certified_delta: config.certified_delta,
            fit_window: FIT_WINDOW,
            decaying: false,
            diverged_at: None,
        },
    };

    let control = |t: f64, x: &[f64], history: &ControlHistory| -> Result<(Vec<f64>, Vec<f64>)> {
        let out = predictor.output(t, x, history)?;
        let w = if config.open_loop {
            vec![0.0; n_ctrl]
        } else {
            out.w
        };
        let z = x[..n_ctrl]
            .iter()
            .zip(&out.integral)
            .map(|(x, i)| x + i)
            .collect();
        Ok((w, z))
    };

    let mut scratch = Scratch::new(&basis, n_ctrl);
    let (w, mut z) = control(0.0, &x, &history)?;
    history.push(&w)?;
    run.control_trace.extend_from_slice(&w);
    if config.rule == QuadRule::Trapezoid {
        z = predictor.artstein_state(0.0, &x, &history)?;
    }
    let mut v_start = vec![0.0; config.n_sim_modes];
    delayed_input_into(
        &basis,
        n_ctrl,
        &config.delay,
        &history,
        0.0,
        &mut scratch,
        &mut v_start,
    )?;
    record(&mut run, &history, &config.delay, 0.0, &x, &w, &v_start, &z)?;

    let mut v_mid = vec![0.0; config.n_sim_modes];
    let mut v_end = vec![0.0; config.n_sim_modes];
    for k in 0..n_steps {
        let t = k as f64 * dt;
        let t_next = (k + 1) as f64 * dt;
        delayed_input_into(
            &basis,
            n_ctrl,
            &config.delay,
            &history,
            t + 0.5 * dt,
            &mut scratch,
            &mut v_mid,
        )?;
        delayed_input_into(
            &basis,
            n_ctrl,
            &config.delay,
            &history,
            t_next,
            &mut scratch,
            &mut v_end,
        )?;
        x = step(&lambda, &x, dt, &v_start, &v_mid, &v_end);

        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > config.divergence_threshold {
            run.metadata.diverged_at = Some(t_next);
            break;
        }
        let (w, mut z) = control(t_next, &x, &history)?;
        history.push(&w)?;
        run.control_trace.extend_from_slice(&w);
        if config.rule == QuadRule::Trapezoid {
            z = predictor.artstein_state(t_next, &x, &history)?;
        }
        std::mem::swap(&mut v_start, &mut v_end);
        if (k + 1) % config.output_every == 0 {
            record(
                &mut run,
                &history,
                &config.delay,
                t_next,
                &x,
                &w,
                &v_start,
                &z,
            )?;
        }
    }

    if let Ok(kappa) = fit_decay(&run.times, &run.norm_x, FIT_WINDOW) {
        run.kappa_est = Some(kappa);
        run.metadata.decaying = kappa > 0.0;
    }
    Ok(run)
}

#[allow(clippy::too_many_arguments)]
fn record(
    run: &mut SimulationRun,
    history: &ControlHistory,
    delay: &DelayField,
    t: f64,
    x: &[f64],
    w: &[f64],
    v: &[f64],
    z: &[f64],
) -> Result<()> {
    let n_ctrl = w.len();
    let nominal = history.lookup(t - delay.d0)?;
    let delta_norm = (0..n_ctrl)
        .map(|n| (v[n] - nominal[n]).powi(2))
        .sum::<f64>()
        .sqrt();
    run.times.push(t);
    run.norm_x.push(x.iter().map(|v| v * v).sum::<f64>().sqrt());
    run.norm_u.push(w.iter().map(|v| v * v).sum::<f64>().sqrt());
    run.delta_norm.push(delta_norm);
    run.x.push(x.to_vec());
    run.w.push(w.to_vec());
    run.v_proj.push(v.to_vec());
    run.z.push(z.to_vec());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::ControllerDesign;

    #[test]
    fn rk4_step_on_pure_exponential() {
        let lambda = [0.317, 0.0];
        let mut x = vec![1.0, 2.5];
        let zero = [0.0, 0.0];
        for _ in 0..10_000 {
            x = step(&lambda, &x, 1e-3, &zero, &zero, &zero);
        }
        assert!((x[0] / (3.17f64).exp() - 1.0).abs() < 1e-10);
        assert_eq!(x[1], 2.5);
    }

    #[test]
    fn zero_history_gives_zero_input() {
        let pb = SturmLiouvilleProblem::reference_example();
        let basis = solve_eigensystem(&pb, 5, &Grid::uniform(201).unwrap(), 1e-10).unwrap();
        let mut hist = ControlHistory::unbounded(2, 0.01).unwrap();
        for _ in 0..300 {
            hist.push(&[0.0, 0.0]).unwrap();
        }
        let (v, delta) =
            project_delayed_input(&basis, 2, &DelayField::reference_example(), &hist, 2.5).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
        assert!(delta.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn nominal_delay_has_no_residual() {
        let pb = SturmLiouvilleProblem::reference_example();
        let basis = solve_eigensystem(&pb, 8, &Grid::default(), 1e-12).unwrap();
        let dt = 0.01;
        let mut hist = ControlHistory::unbounded(2, dt).unwrap();
        for k in 0..400 {
            let s = k as f64 * dt;
            hist.push(&[s.sin(), (2.0 * s).cos()]).unwrap();
        }
        let (v, delta) =
            project_delayed_input(&basis, 2, &DelayField::constant(1.0), &hist, 3.333).unwrap();
        assert!(delta.iter().all(|d| d.abs() < 1e-8), "{delta:?}");
        assert!(v[2..].iter().all(|d| d.abs() < 1e-8), "{v:?}");
    }

    #[test]
    fn config_rejects_coarse_step_and_small_mode_count() {
        let pb = SturmLiouvilleProblem::reference_example();
        let design =
            ControllerDesign::new(vec![0.317, 0.116], 0.342, 1.0, &[-0.3, -0.3], 0.2).unwrap();
        let mut cfg = SimulationConfig::new(
            pb,
            design,
            DelayField::reference_example(),
            InitialCondition::Reference,
        );
        assert!(cfg.validate().is_ok());
        cfg.dt = 0.1;
        assert!(matches!(cfg.validate(), Err(Error::StepSize(_))));
        cfg.dt = 1e-3;
        cfg.n_sim_modes = 2;
        assert!(cfg.validate().is_err());
    }
}
