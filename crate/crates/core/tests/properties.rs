use std::sync::OnceLock;

use proptest::prelude::*;
use rdstab_core::delay::ControlHistory;
use rdstab_core::sim::EIGEN_TOL;
use rdstab_core::spectral::{solve_eigensystem, Grid, SpectralBasis, SturmLiouvilleProblem};

fn basis() -> &'static SpectralBasis {
    static B: OnceLock<SpectralBasis> = OnceLock::new();
    B.get_or_init(|| {
        solve_eigensystem(
            &SturmLiouvilleProblem::reference_example(),
            12,
            &Grid::default(),
            EIGEN_TOL,
        )
        .unwrap()
    })
}

proptest! {
    #[test]
    fn synthesize_then_project_is_identity(coeffs in prop::collection::vec(-5.0f64..5.0, 1..12)) {
        let b = basis();
        let f = b.synthesize(&coeffs).unwrap();
        let back = b.project(&f, coeffs.len()).unwrap();
        for (a, c) in back.iter().zip(&coeffs) {
            prop_assert!((a - c).abs() < 1e-7);
        }
        // Parseval
        let energy: f64 = coeffs.iter().map(|c| c * c).sum();
        prop_assert!((b.norm(&f).unwrap().powi(2) - energy).abs() < 1e-7 * energy.max(1.0));
    }

    #[test]
    fn projection_never_exceeds_the_norm(a in -3.0f64..3.0, c in -3.0f64..3.0, k in 0.5f64..30.0) {
        let b = basis();
        let f: Vec<f64> = b.grid().nodes().iter().map(|x| a + c * (k * x).sin()).collect();
        let coeffs = b.project(&f, 12).unwrap();
        let energy: f64 = coeffs.iter().map(|c| c * c).sum();
        prop_assert!(energy <= b.norm(&f).unwrap().powi(2) * (1.0 + 1e-8) + 1e-12);
    }

    #[test]
    fn history_interpolates_linear_signals_exactly(
        slope in -2.0f64..2.0,
        offset in -1.0f64..1.0,
        s in 0.0f64..4.0,
    ) {
        let dt = 0.01;
        let mut h = ControlHistory::new(1, dt, 6.0).unwrap();
        for k in 0..=500 {
            h.push(&[offset + slope * k as f64 * dt]).unwrap();
        }
        let v = h.lookup(s + 0.5).unwrap()[0];
        prop_assert!((v - (offset + slope * (s + 0.5))).abs() < 1e-10);
    }
}
