use rayon::prelude::*;

use super::grid::Grid;
use super::problem::SturmLiouvilleProblem;
use super::shooting::{count_and_sign, sample_solution, Tolerance};
use crate::{Error, Result};

/// Downward scan step for the characteristic function.
pub const SCAN_STEP: f64 = 0.25;

/// Sorted eigenvalues `λ₁ ≥ λ₂ ≥ …` with ρ-orthonormal eigenfunctions
/// sampled on a [`Grid`].
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<Vec<f64>>,
    fluxes: Vec<Vec<f64>>,
    grid: Grid,
    rho: Vec<f64>,
    weighted: Vec<f64>,
}

/// Computes the `n_modes` largest eigenvalues of the operator by shooting.
///
/// The scan walks λ downwards from `max(q/ρ) + 1` in steps of
/// [`SCAN_STEP`] and bisects every sign change of the characteristic
/// function. The Prüfer counting function tells how many eigenvalues each
/// window holds, so windows with clustered eigenvalues are subdivided
/// instead of skipped.
pub fn solve_eigensystem(
    problem: &SturmLiouvilleProblem,
    n_modes: usize,
    grid: &Grid,
    tol: f64,
) -> Result<SpectralBasis> {
    if n_modes == 0 {
        return Err(Error::InvalidProblem("n_modes must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidProblem(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    problem.validate(grid.nodes())?;
    let ode_tol = Tolerance::default();

    let eigenvalues = scan_eigenvalues(problem, n_modes, grid, tol, ode_tol)?;

    let rho = problem.rho.sample(grid.nodes());
    let weighted: Vec<f64> = rho.iter().zip(grid.weights()).map(|(r, w)| r * w).collect();

    let pairs: Vec<(Vec<f64>, Vec<f64>)> = eigenvalues
        .par_iter()
        .map(|&lambda| {
            let (mut y, mut flux) = sample_solution(problem, lambda, grid.nodes(), ode_tol)?;
            let norm = y
                .iter()
                .zip(&weighted)
                .map(|(y, w)| w * y * y)
                .sum::<f64>()
                .sqrt();
            let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let first = y
                .iter()
                .copied()
                .find(|v| v.abs() > 1e-12 * peak)
                .unwrap_or(1.0);
            let scale = first.signum() / norm;
            y.iter_mut().for_each(|v| *v *= scale);
            flux.iter_mut().for_each(|v| *v *= scale);
            Ok((y, flux))
        })
        .collect::<Result<_>>()?;
    let (eigenfunctions, fluxes): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();

    let basis = SpectralBasis {
        eigenvalues,
        eigenfunctions,
        fluxes,
        grid: grid.clone(),
        rho,
        weighted,
    };
    for n in 0..basis.len() {
        let zeros = basis.sign_changes(n);
        if zeros != n {
            return Err(Error::Degenerate(format!(
                "eigenfunction {} has {zeros} interior sign changes, expected {n}; refine the grid",
                n + 1
            )));
        }
    }
    Ok(basis)
}

fn scan_eigenvalues(
    pb: &SturmLiouvilleProblem,
    n_modes: usize,
    grid: &Grid,
    tol: f64,
    ode_tol: Tolerance,
) -> Result<Vec<f64>> {
    let top_ratio = grid
        .nodes()
        .iter()
        .map(|&x| pb.q.eval(x) / pb.rho.eval(x))
        .fold(f64::NEG_INFINITY, f64::max);
    // Robin conditions with cot θ < 0 can push λ₁ above max(q/ρ).
    let mut offset = 1.0;
    let mut hi = top_ratio + offset;
    let mut hi_state = count_and_sign(pb, hi, ode_tol)?;
    while hi_state.0 > 0 {
        offset *= 2.0;
        if offset > 1e12 {
            return Err(Error::Bracketing { lo: top_ratio, hi });
        }
        hi = top_ratio + offset;
        hi_state = count_and_sign(pb, hi, ode_tol)?;
    }
    let start = hi;

    let mut eigenvalues = Vec::with_capacity(n_modes);
    let max_windows = 1usize << 40;
    let mut windows = 0usize;
    while eigenvalues.len() < n_modes {
        let lo = hi - SCAN_STEP;
        let lo_state = count_and_sign(pb, lo, ode_tol)?;
        if lo_state.0 > hi_state.0 {
            isolate(
                pb,
                (lo, lo_state),
                (hi, hi_state),
                tol,
                ode_tol,
                &mut eigenvalues,
            )?;
        }
        hi = lo;
        hi_state = lo_state;
        windows += 1;
        if windows > max_windows || !hi.is_finite() {
            return Err(Error::Bracketing { lo: hi, hi: start });
        }
    }
    eigenvalues.truncate(n_modes);
    Ok(eigenvalues)
}

/// Pushes every eigenvalue in `(lo, hi]`, largest first.
fn isolate(
    pb: &SturmLiouvilleProblem,
    lo: (f64, (usize, f64)),
    hi: (f64, (usize, f64)),
    tol: f64,
    ode_tol: Tolerance,
    out: &mut Vec<f64>,
) -> Result<()> {
    let inside = lo.1 .0 - hi.1 .0;
    if inside == 0 {
        return Ok(());
    }
    if inside == 1 && lo.1 .1 * hi.1 .1 <= 0.0 {
        out.push(bisect(pb, lo, hi, tol, ode_tol)?);
        return Ok(());
    }
    if hi.0 - lo.0 < tol {
        // a cluster narrower than the tolerance; report it once per eigenvalue
        let mid = 0.5 * (lo.0 + hi.0);
        out.extend(std::iter::repeat_n(mid, inside));
        return Ok(());
    }
    let mid = 0.5 * (lo.0 + hi.0);
    let mid_state = count_and_sign(pb, mid, ode_tol)?;
    isolate(pb, (mid, mid_state), hi, tol, ode_tol, out)?;
    isolate(pb, lo, (mid, mid_state), tol, ode_tol, out)
}

fn bisect(
    pb: &SturmLiouvilleProblem,
    mut lo: (f64, (usize, f64)),
    mut hi: (f64, (usize, f64)),
    tol: f64,
    ode_tol: Tolerance,
) -> Result<f64> {
    if hi.1 .1 == 0.0 {
        return Ok(hi.0);
    }
    if lo.1 .1 == 0.0 {
        return Ok(lo.0);
    }
    while hi.0 - lo.0 > tol {
        let mid = 0.5 * (lo.0 + hi.0);
        if mid <= lo.0 || mid >= hi.0 {
            break;
        }
        let state = count_and_sign(pb, mid, ode_tol)?;
        if state.1 == 0.0 {
            return Ok(mid);
        }
        if state.1 * hi.1 .1 < 0.0 {
            lo = (mid, state);
        } else {
            hi = (mid, state);
        }
    }
    Ok(0.5 * (lo.0 + hi.0))
}

impl SpectralBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Samples of `e_{n+1}` (zero-based `n`).
    pub fn eigenfunction(&self, n: usize) -> &[f64] {
        &self.eigenfunctions[n]
    }

    /// Samples of `p e'_{n+1}` (zero-based `n`).
    pub fn flux(&self, n: usize) -> &[f64] {
        &self.fluxes[n]
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// Quadrature weights multiplied by ρ at each node.
    pub fn weighted_weights(&self) -> &[f64] {
        &self.weighted
    }

    /// A basis with only the first `n` modes.
    pub fn truncated(&self, n: usize) -> SpectralBasis {
        let n = n.min(self.len());
        SpectralBasis {
            eigenvalues: self.eigenvalues[..n].to_vec(),
            eigenfunctions: self.eigenfunctions[..n].to_vec(),
            fluxes: self.fluxes[..n].to_vec(),
            grid: self.grid.clone(),
            rho: self.rho.clone(),
            weighted: self.weighted.clone(),
        }
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.grid.len() {
            return Err(Error::Dimension {
                expected: self.grid.len(),
                got: f.len(),
            });
        }
        Ok(())
    }

    /// Weighted inner product `∫ ρ f g`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        self.check_len(g)?;
        Ok(f.iter()
            .zip(g)
            .zip(&self.weighted)
            .map(|((f, g), w)| w * f * g)
            .sum())
    }

    pub fn norm(&self, f: &[f64]) -> Result<f64> {
        Ok(self.inner(f, f)?.max(0.0).sqrt())
    }

    /// `⟨f, e_k⟩` for `k = 1..=n`.
    pub fn project(&self, f: &[f64], n: usize) -> Result<Vec<f64>> {
        self.check_len(f)?;
        if n > self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: n,
            });
        }
        let fw: Vec<f64> = f.iter().zip(&self.weighted).map(|(f, w)| f * w).collect();
        Ok(self.eigenfunctions[..n]
            .iter()
            .map(|e| e.iter().zip(&fw).map(|(e, f)| e * f).sum())
            .collect())
    }

    /// `Σ c_n e_n` on the grid.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() > self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: coeffs.len(),
            });
        }
        let mut out = vec![0.0; self.grid.len()];
        for (c, e) in coeffs.iter().zip(&self.eigenfunctions) {
            if *c != 0.0 {
                out.iter_mut().zip(e).for_each(|(o, e)| *o += c * e);
            }
        }
        Ok(out)
    }

    /// Gram matrix `⟨e_m, e_n⟩` of the first `n` modes, row-major.
    pub fn gram(&self, n: usize) -> Vec<Vec<f64>> {
        let n = n.min(self.len());
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        self.inner(&self.eigenfunctions[i], &self.eigenfunctions[j])
                            .unwrap()
                    })
                    .collect()
            })
            .collect()
    }

    /// Interior sign changes of mode `n` (zero-based), ignoring exact zeros.
    pub fn sign_changes(&self, n: usize) -> usize {
        let e = &self.eigenfunctions[n];
        let peak = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = 1e-6 * peak;
        let mut count = 0;
        let mut last = 0.0f64;
        for &v in e {
            if v.abs() <= floor {
                continue;
            }
            if last != 0.0 && v.signum() != last.signum() {
                count += 1;
            }
            last = v;
        }
        count
    }

    /// `−∫ p e_m' e_n' + ∫ q e_m e_n + [p e_m' e_n]₀¹`, the weak form of
    /// `⟨A e_m, e_n⟩`, which equals `λ_m δ_mn` for exact eigenpairs.
    pub fn weak_form(&self, problem: &SturmLiouvilleProblem, m: usize, n: usize) -> f64 {
        let nodes = self.grid.nodes();
        let last = nodes.len() - 1;
        let (em, en) = (&self.eigenfunctions[m], &self.eigenfunctions[n]);
        let (fm, fn_) = (&self.fluxes[m], &self.fluxes[n]);
        let integrand: Vec<f64> = (0..nodes.len())
            .map(|i| {
                let p = problem.p.eval(nodes[i]);
                -fm[i] * fn_[i] / p + problem.q.eval(nodes[i]) * em[i] * en[i]
            })
            .collect();
        let boundary = fm[last] * en[last] - fm[0] * en[0];
        self.grid.integrate(&integrand).unwrap() + boundary
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn reference_basis(n: usize) -> SpectralBasis {
        solve_eigensystem(
            &SturmLiouvilleProblem::reference_example(),
            n,
            &Grid::default(),
            1e-12,
        )
        .unwrap()
    }

    #[test]
    fn reference_spectrum() {
        let b = reference_basis(3);
        let expected = [0.317, 0.116, -0.342];
        for (l, e) in b.eigenvalues().iter().zip(expected) {
            assert!((l - e).abs() < 0.005, "{l} vs {e}");
        }
    }

    #[test]
    fn dirichlet_laplacian() {
        let pb = SturmLiouvilleProblem::constant(1.0, 0.0, 0.0, 0.0);
        let b = solve_eigensystem(&pb, 6, &Grid::uniform(401).unwrap(), 1e-10).unwrap();
        for (n, l) in b.eigenvalues().iter().enumerate() {
            let exact = -((n + 1) as f64 * PI).powi(2);
            assert!(
                (l - exact).abs() < 1e-9 * exact.abs(),
                "mode {}: {l} vs {exact}",
                n + 1
            );
        }
        // sin(nπξ)·√2, positive near 0
        let g = b.grid().nodes();
        for (i, &x) in g.iter().enumerate() {
            assert!((b.eigenfunction(1)[i] - 2f64.sqrt() * (2.0 * PI * x).sin()).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_shift_moves_every_eigenvalue() {
        let pb = SturmLiouvilleProblem::reference_example();
        let mut shifted = pb.clone();
        shifted.q = pb.q.shifted(0.8);
        let grid = Grid::uniform(201).unwrap();
        let a = solve_eigensystem(&pb, 5, &grid, 1e-12).unwrap();
        let b = solve_eigensystem(&shifted, 5, &grid, 1e-12).unwrap();
        for n in 0..5 {
            assert!((b.eigenvalues()[n] - a.eigenvalues()[n] - 0.8).abs() < 1e-9);
            for (x, y) in a.eigenfunction(n).iter().zip(b.eigenfunction(n)) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn close_eigenvalues_inside_one_scan_window() {
        // λ₁ − λ₂ ≈ 0.2 < SCAN_STEP for the reference problem
        let b = reference_basis(2);
        assert!(b.eigenvalues()[0] - b.eigenvalues()[1] < SCAN_STEP);
        assert_eq!(b.sign_changes(0), 0);
        assert_eq!(b.sign_changes(1), 1);
    }

    #[test]
    fn negative_cotangent_lifts_the_top_eigenvalue() {
        // θ₁ = 3π/4: y'(0) = −y(0), the first eigenvalue is positive with q = 0
        let pb = SturmLiouvilleProblem::constant(1.0, 0.0, 3.0 * PI / 4.0, 3.0 * PI / 4.0);
        let b = solve_eigensystem(&pb, 3, &Grid::uniform(401).unwrap(), 1e-10).unwrap();
        assert!(b.eigenvalues()[0] > 0.0);
        assert!(b.eigenvalues().windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn project_and_synthesize_basics() {
        let b = reference_basis(4);
        let c = b.project(b.eigenfunction(0), 4).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-8);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-8));
        let zero = vec![0.0; b.grid().len()];
        assert!(b.project(&zero, 4).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(b.synthesize(&[1.0]).unwrap(), b.eigenfunction(0));
        assert!(b.synthesize(&[0.0; 4]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_errors() {
        let b = reference_basis(2);
        assert!(matches!(
            b.project(&[1.0; 3], 1),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            b.synthesize(&[1.0; 3]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn invalid_inputs() {
        let mut pb = SturmLiouvilleProblem::reference_example();
        assert!(solve_eigensystem(&pb, 0, &Grid::default(), 1e-9).is_err());
        assert!(solve_eigensystem(&pb, 2, &Grid::default(), 0.0).is_err());
        pb.p = crate::spectral::Coefficient::constant(-1.0);
        assert!(matches!(
            solve_eigensystem(&pb, 2, &Grid::default(), 1e-9),
            Err(Error::InvalidProblem(_))
        ));
    }

    #[test]
    fn weak_form_residual_is_diagonal() {
        let pb = SturmLiouvilleProblem::reference_example();
        let b = reference_basis(8);
        for m in 0..8 {
            for n in 0..8 {
                let expected = if m == n { b.eigenvalues()[m] } else { 0.0 };
                let got = b.weak_form(&pb, m, n);
                assert!((got - expected).abs() < 1e-7 * b.eigenvalues()[7].abs(), "({m}, {n}): {got}");
            }
        }
    }
}
