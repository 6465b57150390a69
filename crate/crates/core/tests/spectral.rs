//! Checks against closed-form eigenpairs of the reference problem.

mod common;

use common::{mode, mode_norm, simpson, wavenumbers, P, Q};
use rdstab_core::sim::{InitialCondition, EIGEN_TOL};
use rdstab_core::spectral::{solve_eigensystem, Grid, SturmLiouvilleProblem};

fn y0(x: f64) -> f64 {
    (1.0 - 2.0 * x) / 2.0 + 20.0 * x * (1.0 - x) * (x - 0.6)
}

#[test]
fn spectrum_matches_transcendental_roots() {
    let ks = wavenumbers(20);
    let basis = solve_eigensystem(
        &SturmLiouvilleProblem::reference_example(),
        20,
        &Grid::default(),
        EIGEN_TOL,
    )
    .unwrap();
    for (n, (k, l)) in ks.iter().zip(basis.eigenvalues()).enumerate() {
        let exact = Q - P * k * k;
        assert!(
            (l - exact).abs() < 1e-9 * exact.abs().max(1.0),
            "mode {}: {l} vs {exact}",
            n + 1
        );
    }
}

#[test]
fn eigenfunctions_match_closed_form() {
    let ks = wavenumbers(20);
    let basis = solve_eigensystem(
        &SturmLiouvilleProblem::reference_example(),
        20,
        &Grid::default(),
        EIGEN_TOL,
    )
    .unwrap();
    for (n, &k) in ks.iter().enumerate() {
        let norm = mode_norm(k);
        let err = basis
            .grid()
            .nodes()
            .iter()
            .zip(basis.eigenfunction(n))
            .map(|(&x, e)| (e - mode(k, x).0 / norm).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "mode {}: {err}", n + 1);
    }
}

#[test]
fn initial_profile_projection_matches_fine_quadrature() {
    let ks = wavenumbers(20);
    let basis = solve_eigensystem(
        &SturmLiouvilleProblem::reference_example(),
        20,
        &Grid::default(),
        EIGEN_TOL,
    )
    .unwrap();
    let samples = InitialCondition::Reference.sample(&basis).unwrap();
    let coeffs = basis.project(&samples, 20).unwrap();
    for (n, &k) in ks.iter().enumerate() {
        let norm = mode_norm(k);
        let oracle = simpson(|x| y0(x) * mode(k, x).0 / norm, 8000);
        assert!(
            (coeffs[n] - oracle).abs() < 1e-6,
            "c{}: {} vs {oracle}",
            n + 1,
            coeffs[n]
        );
    }
}

#[test]
fn truncation_residual_is_the_tail_energy() {
    let basis = solve_eigensystem(
        &SturmLiouvilleProblem::reference_example(),
        40,
        &Grid::default(),
        EIGEN_TOL,
    )
    .unwrap();
    let samples = InitialCondition::Reference.sample(&basis).unwrap();
    let all = basis.project(&samples, 40).unwrap();
    let tail = all[20..].iter().map(|c| c * c).sum::<f64>().sqrt();
    let rebuilt = basis.synthesize(&all[..20]).unwrap();
    let diff: Vec<f64> = samples.iter().zip(&rebuilt).map(|(a, b)| a - b).collect();
    let residual = basis.norm(&diff).unwrap();
    // modes beyond 40 carry the remainder of the residual
    assert!(residual >= tail * (1.0 - 1e-6), "{residual} vs {tail}");
    assert!(residual <= 1.2 * tail, "{residual} vs {tail}");
}

#[test]
fn shift_leaves_eigenfunctions_unchanged() {
    let pb = SturmLiouvilleProblem::reference_example();
    let mut shifted = pb.clone();
    shifted.q = pb.q.shifted(-1.3);
    let grid = Grid::uniform(401).unwrap();
    let a = solve_eigensystem(&pb, 6, &grid, EIGEN_TOL).unwrap();
    let b = solve_eigensystem(&shifted, 6, &grid, EIGEN_TOL).unwrap();
    for n in 0..6 {
        assert!((a.eigenvalues()[n] - 1.3 - b.eigenvalues()[n]).abs() < 1e-9);
        let err = a
            .eigenfunction(n)
            .iter()
            .zip(b.eigenfunction(n))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "mode {}: {err}", n + 1);
    }
}

#[test]
fn projection_of_a_mode_is_a_unit_vector() {
    let basis = solve_eigensystem(
        &SturmLiouvilleProblem::reference_example(),
        10,
        &Grid::default(),
        EIGEN_TOL,
    )
    .unwrap();
    let c = basis.project(basis.eigenfunction(0), 10).unwrap();
    assert!((c[0] - 1.0).abs() < 1e-8);
    assert!(c[1..].iter().all(|v| v.abs() < 1e-8));
    assert!(basis
        .project(&vec![0.0; basis.grid().len()], 10)
        .unwrap()
        .iter()
        .all(|v| *v == 0.0));
    let mut unit = vec![0.0; 10];
    unit[0] = 1.0;
    assert_eq!(basis.synthesize(&unit).unwrap(), basis.eigenfunction(0));
}
