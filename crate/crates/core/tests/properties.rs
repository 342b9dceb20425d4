use std::f64::consts::PI;

use proptest::prelude::*;

use wqed2d::green::{port_totals, scatter};
use wqed2d::hamiltonians::{
    build_h1d, build_heff_2d, build_heff_ribbon, build_inverse_h1d, build_inverse_h2d, inverse_chain_coefficients,
    symmetry_defect, PhaseMode,
};
use wqed2d::model::{gaussian_input, single_port_input, Direction, LatticeParams};
use wqed2d::spectral::{eigendecompose_matrix, ipr, kronecker_decomposition};
use wqed2d::transfer::{chain_dispersion, chain_eigen_analysis, chain_transfer_1d, gap_range, solve_network, Regime};
use wqed2d::{Complex64, Error};

fn lattice() -> impl Strategy<Value = LatticeParams> {
    (1usize..=4, 1usize..=4, 0.2f64..3.0, 0.1f64..2.0, 0.1f64..2.0)
        .prop_map(|(nx, ny, phi0, gx, gy)| LatticeParams::new(nx, ny, 1.0, 100.0, 100.0 * phi0, gx, gy).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probability_is_conserved(p in lattice(), det in -6.0f64..6.0, pick in 0usize..4) {
        let l = 1 + pick % p.n_y;
        let w = p.omega_from_detuning(det);
        match scatter(&p, &single_port_input(&p, w, l).unwrap()) {
            Ok((a, _)) => prop_assert!((port_totals(&a).total() - 1.0).abs() < 1e-9),
            Err(Error::Pole { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn effective_hamiltonians_are_complex_symmetric(p in lattice(), det in -3.0f64..3.0) {
        let w = p.omega_from_detuning(det);
        prop_assert!(symmetry_defect(build_heff_2d(&p, PhaseMode::Exact(w)).unwrap().matrix.view()) < 1e-14);
        prop_assert!(symmetry_defect(build_heff_2d(&p, PhaseMode::Markov).unwrap().matrix.view()) < 1e-14);
        if let Ok(h) = build_heff_ribbon(&p, w, 1e-9) {
            prop_assert!(symmetry_defect(h.matrix.view()) < 1e-12);
        }
    }

    #[test]
    fn green_and_transfer_agree(p in lattice(), det in -4.0f64..4.0, pick in 0usize..4) {
        let l = 1 + pick % p.n_y;
        let w = p.omega_from_detuning(det);
        let g = match scatter(&p, &single_port_input(&p, w, l).unwrap()) {
            Ok((a, _)) => a,
            Err(Error::Pole { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let t = solve_network(&p, w, l).unwrap().amplitudes();
        for dir in Direction::ALL {
            for (a, b) in g.probabilities(dir).iter().zip(t.probabilities(dir).iter()) {
                prop_assert!((a - b).abs() < 1e-8, "{dir:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn band_and_gap_partition_the_axis(phi in 0.1f64..(PI - 0.1), x in -20.0f64..20.0) {
        let (lo, hi) = gap_range(phi).unwrap();
        prop_assume!(x.abs() > 1e-6 && (x - lo).abs() > 1e-6 && (x - hi).abs() > 1e-6);
        let cls = chain_eigen_analysis(1.0, phi, x).unwrap();
        let inside = x > lo && x < hi;
        prop_assert_eq!(cls.regime == Regime::Gap, inside);
        if cls.regime == Regime::Band {
            prop_assert!((chain_dispersion(phi, cls.k_or_gamma) - x).abs() < 1e-6 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn chain_conserves_flux(phi in 0.1f64..(PI - 0.1), x in -10.0f64..10.0, n in 1usize..60) {
        prop_assume!(x.abs() > 1e-6);
        let (t, r) = chain_transfer_1d(1.0, phi, x, n).unwrap();
        prop_assert!((t.norm_sqr() + r.norm_sqr() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn gaussian_inputs_are_normalized_and_mirror_symmetric(
        ny in 2usize..9, sigma in 0.5f64..4.0, ky in -1.0f64..1.0, det in -2.0f64..2.0,
    ) {
        let p = LatticeParams::new(3, ny, 1.0, 100.0, 100.0, 1.0, 1.0).unwrap();
        let w = p.omega_from_detuning(det);
        let inp = gaussian_input(&p, w, sigma, ky, p.center_y()).unwrap();
        prop_assert!((inp.norm_sqr() - 1.0).abs() < 1e-12);
        for l in 1..ny {
            let ratio = inp.f[l] / inp.f[l - 1];
            let drift = (ratio.arg() - ky).rem_euclid(2.0 * PI);
            prop_assert!(drift.min(2.0 * PI - drift) < 1e-9);
        }
        let a = scatter(&p, &single_port_input(&p, w, 1).unwrap()).unwrap().0;
        let b = scatter(&p, &single_port_input(&p, w, p.mirror_port(1)).unwrap()).unwrap().0;
        let (sa, sb) = (port_totals(&a), port_totals(&b));
        prop_assert!((sa.s_xbar - sb.s_xbar).abs() < 1e-10);
        prop_assert!((sa.s_x - sb.s_x).abs() < 1e-10);
    }

    #[test]
    fn inverse_chain_inverts(n in 2usize..25, phi in 0.1f64..(PI - 0.1), gamma in 0.001f64..1.0) {
        let co = inverse_chain_coefficients(gamma, phi).unwrap();
        let prod = build_inverse_h1d(n, &co).unwrap().dot(&build_h1d(n, gamma, phi, 0.0).unwrap().matrix);
        for ((i, j), v) in prod.indexed_iter() {
            let e = if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            prop_assert!((v - e).norm() < 1e-9);
        }
    }

    #[test]
    fn ipr_is_bounded(v in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..40)) {
        let psi: Vec<Complex64> = v.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
        prop_assume!(psi.iter().any(|z| z.norm() > 1e-3));
        let q = ipr(&psi);
        prop_assert!(q >= 1.0 / psi.len() as f64 - 1e-12 && q <= 1.0 + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn two_dimensional_spectrum_is_pairwise_sums(n in 2usize..=6, phi in 0.2f64..(PI - 0.2)) {
        let co = inverse_chain_coefficients(0.01, phi).unwrap();
        let h1 = build_inverse_h1d(n, &co).unwrap();
        let h2 = build_inverse_h2d(n, &co).unwrap();
        let d1 = eigendecompose_matrix(h1.view()).unwrap();
        let kron = kronecker_decomposition(&d1, &d1, true);
        let scale = h2.iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(kron.max_residual(h2.view()) < 1e-9 * scale);
        let direct = eigendecompose_matrix(h2.view()).unwrap();
        for e in direct.eigenvalues.iter() {
            let nearest = kron.eigenvalues.iter().map(|s| (s - e).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(nearest < 1e-6 * scale, "{e} unmatched by {nearest}");
        }
    }
}
