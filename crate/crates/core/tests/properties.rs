//! Property tests for the invariants of the transforms, the forward solver,
//! the trace gating, the frequency preprocessing and the postprocessing of
//! the coefficient.

use gcm_core::field::{dft2_forward, dft2_inverse, divergence3, gradient3, laplacian7, Grid3, PlaneField, PlaneGrid, VolumeWave, C64};
use gcm_core::forward::{apply_ls_operator, ls_residual, solve_total_field, LsConfig, MediumField};
use gcm_core::freqprep::{
    assemble_boundary, calibration_factor, evanescent_filter, propagate, select_and_shift, spectrum_peak, working_lattice,
    BoundaryOptions, IntervalSelection, PropagationJob, INTERVAL_WIDTH, K_STEP,
};
use gcm_core::gcm::{postprocess, TruncationMask};
use gcm_core::timeprep::{gate_scattered, offset_correct, GateSpec, TimeTraceSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_values(n: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

fn rel_diff(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Band-limited random field: a sum of Gaussian bumps with random phases.
fn bumps(plane: &PlaneGrid, k: f64, seed: u64) -> PlaneField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b: Vec<([f64; 2], f64, C64)> = (0..4)
        .map(|_| {
            let c = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let w = rng.random_range(0.5..1.5);
            (c, w, C64::from_polar(rng.random_range(0.2..1.0), rng.random_range(0.0..6.28)))
        })
        .collect();
    PlaneField::from_fn(plane, k, |x| {
        b.iter().map(|(c, w, a)| a * (-((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) / (w * w)).exp()).sum()
    })
    .unwrap()
}

fn small_plane() -> PlaneGrid {
    PlaneGrid::new(-8.0, [-6.0, -6.0], [0.25, 0.25], [48, 48]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn dft2_round_trip_is_identity(seed in any::<u64>(), n1 in 4usize..20, n2 in 4usize..20, k in 1.0f64..20.0) {
        let plane = PlaneGrid::new(-0.75, [-1.0, 0.5], [0.1, 0.07], [n1, n2]).unwrap();
        let f = PlaneField::new(plane, k, random_values(n1 * n2, seed)).unwrap();
        let back = dft2_inverse(&dft2_forward(&f)).unwrap();
        prop_assert!(rel_diff(&back.values, &f.values) < 1e-12);
    }

    #[test]
    fn difference_operators_are_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let g = Grid3::computational_domain(9).unwrap();
        let f = VolumeWave::new(g.clone(), random_values(g.len(), seed)).unwrap();
        let h = VolumeWave::new(g.clone(), random_values(g.len(), seed ^ 0x5555)).unwrap();
        let (a, b) = (C64::new(alpha, 0.3), C64::new(beta, -0.7));
        let mix = f.scaled(a).add_scaled(b, &h).unwrap();
        let (gf, gh, gm) = (gradient3(&f).unwrap(), gradient3(&h).unwrap(), gradient3(&mix).unwrap());
        for axis in 0..3 {
            let expect = gf[axis].scaled(a).add_scaled(b, &gh[axis]).unwrap();
            prop_assert!(rel_diff(&gm[axis].values, &expect.values) < 1e-12);
        }
        let dm = divergence3(&gm).unwrap();
        let expect = divergence3(&gf).unwrap().scaled(a).add_scaled(b, &divergence3(&gh).unwrap()).unwrap();
        prop_assert!(rel_diff(&dm.values, &expect.values) < 1e-12);
        let lm = laplacian7(&mix).unwrap();
        let expect = laplacian7(&f).unwrap().scaled(a).add_scaled(b, &laplacian7(&h).unwrap()).unwrap();
        prop_assert!(rel_diff(&lm.values, &expect.values) < 1e-12);
    }

    #[test]
    fn harmonic_quadratics_have_zero_discrete_laplacian(n in 8usize..14, a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0) {
        let g = Grid3::computational_domain(n).unwrap();
        let f = VolumeWave::from_fn(&g, |x| C64::new(a * (x[0] * x[0] - x[1] * x[1]) + b * x[0] * x[2] + c * x[1], 0.0));
        let lap = divergence3(&gradient3(&f).unwrap()).unwrap();
        let interior = |[i, j, k]: [usize; 3]| !g.is_boundary(i, j, k);
        prop_assert!(lap.max_diff_where(&VolumeWave::zeros(&g), interior) < 1e-10);
    }

    #[test]
    fn ls_operator_is_linear(seed in any::<u64>(), contrast in 0.1f64..2.0, k in 2.0f64..8.0) {
        let g = Grid3::computational_domain(10).unwrap();
        let m = MediumField::from_nodes(&g, |[i, j, l]| if (3..6).contains(&i) && (3..7).contains(&j) && (2..5).contains(&l) { 1.0 + contrast } else { 1.0 }).unwrap();
        let f = VolumeWave::new(g.clone(), random_values(g.len(), seed)).unwrap();
        let h = VolumeWave::new(g.clone(), random_values(g.len(), !seed)).unwrap();
        let (a, b) = (C64::new(0.4, 1.1), C64::new(-2.0, 0.5));
        let lhs = apply_ls_operator(&m, k, &f.scaled(a).add_scaled(b, &h).unwrap()).unwrap();
        let rhs = apply_ls_operator(&m, k, &f).unwrap().scaled(a).add_scaled(b, &apply_ls_operator(&m, k, &h).unwrap()).unwrap();
        prop_assert!(rel_diff(&lhs.values, &rhs.values) < 1e-12);
    }

    #[test]
    fn gating_is_linear_and_never_adds_energy(seed in any::<u64>(), alpha in -4.0f64..4.0, standoff in 6.0f64..9.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let positions = vec![[0.0, 0.0], [1.2, -0.4], [-3.0, 2.2]];
        let n = 600;
        let mut row = || (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let f = TimeTraceSet::new(positions.clone(), 0.05, vec![row(), row(), row()]).unwrap();
        let h = TimeTraceSet::new(positions.clone(), 0.05, vec![row(), row(), row()]).unwrap();
        let gate = GateSpec { standoff, ..GateSpec::default() };
        let mix_rows = f.samples.iter().zip(&h.samples).map(|(a, b)| a.iter().zip(b).map(|(x, y)| alpha * x + y).collect()).collect();
        let mix = TimeTraceSet::new(positions, 0.05, mix_rows).unwrap();
        let (gf, gh, gm) = (gate_scattered(&f, &gate).unwrap(), gate_scattered(&h, &gate).unwrap(), gate_scattered(&mix, &gate).unwrap());
        for r in 0..3 {
            for t in 0..n {
                prop_assert!((gm.samples[r][t] - (alpha * gf.samples[r][t] + gh.samples[r][t])).abs() < 1e-12);
            }
            let e = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
            prop_assert!(e(&gf.samples[r]) <= e(&f.samples[r]));
        }
        let centred = offset_correct(&mix);
        let shifted = offset_correct(&f);
        for r in 0..3 {
            let mean: f64 = centred.samples[r].iter().sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-12);
            let mean: f64 = shifted.samples[r].iter().sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn evanescent_filter_is_a_projection(seed in any::<u64>(), k in 2.0f64..14.0) {
        let f = PlaneField::new(small_plane(), k, random_values(48 * 48, seed)).unwrap();
        let once = evanescent_filter(&f).unwrap();
        let twice = evanescent_filter(&once).unwrap();
        prop_assert!(rel_diff(&twice.values, &once.values) < 1e-12);
    }

    #[test]
    fn propagation_preserves_the_propagating_norm(seed in any::<u64>(), k in 2.0f64..14.0, dist in 0.1f64..10.0) {
        let f = PlaneField::new(small_plane(), k, random_values(48 * 48, seed)).unwrap();
        let filtered = dft2_forward(&evanescent_filter(&f).unwrap()).weighted_norm();
        let moved = propagate(&f, &PropagationJob::new(-8.0, -8.0 + dist)).unwrap();
        let norm = dft2_forward(&moved).weighted_norm();
        prop_assert!((norm - filtered).abs() < 1e-12 * filtered);
    }

    #[test]
    fn calibration_is_covariant_under_rescaling(seed in any::<u64>(), lambda in 1e-3f64..1e3) {
        let grid = Grid3::computational_domain(16).unwrap();
        let gamma = PlaneGrid::near_face(&grid);
        let ks = working_lattice();
        let exp: Vec<PlaneField> = ks.iter().enumerate().map(|(j, &k)| bumps(&gamma, k, seed + j as u64).scaled(C64::new(0.05, 0.0))).collect();
        let sim: Vec<PlaneField> = ks.iter().enumerate().map(|(j, &k)| bumps(&gamma, k, !seed + j as u64).scaled(C64::new(0.1, 0.0))).collect();
        let eps = bumps(&gamma.at_x3(gamma.x3 + 0.1), *ks.last().unwrap(), seed ^ 7).scaled(C64::new(0.05, 0.0));
        let s = C64::new(lambda, 0.0);
        let exp_scaled: Vec<PlaneField> = exp.iter().map(|f| f.scaled(s)).collect();
        let d = calibration_factor(&sim, &exp).unwrap();
        let d_scaled = calibration_factor(&sim, &exp_scaled).unwrap();
        for (a, b) in d.d.iter().zip(&d_scaled.d) {
            prop_assert!((a / lambda - b).abs() < 1e-12 * b);
        }
        let b0 = assemble_boundary(&exp, &eps, &d, &grid, BoundaryOptions::default()).unwrap();
        let b1 = assemble_boundary(&exp_scaled, &eps.scaled(s), &d_scaled, &grid, BoundaryOptions::default()).unwrap();
        for (x, y) in b0.g_hat.iter().zip(&b1.g_hat) {
            prop_assert!(rel_diff(&y.values, &x.values) < 1e-10);
        }
        for (x, y) in b0.psi.iter().zip(&b1.psi) {
            prop_assert!(rel_diff(&y.values, &x.values) < 1e-10);
        }
        for (x, y) in b0.grad_over_u.iter().zip(&b1.grad_over_u) {
            prop_assert!(rel_diff(&y.values, &x.values) < 1e-10);
        }
    }

    #[test]
    fn selected_interval_is_centred_and_shifted_onto_the_lattice(seed in any::<u64>(), n in 60usize..380) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ks: Vec<f64> = (0..401).map(|j| ((2.0 + j as f64 * K_STEP) * 1e9).round() / 1e9).collect();
        let plane = PlaneGrid::near_face(&Grid3::computational_domain(9).unwrap());
        let fields: Vec<PlaneField> = ks
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                let amp = if j == n { 2.0 } else { rng.random_range(0.0..1.0) };
                PlaneField::from_fn(&plane, k, |x| C64::new(amp * (-(x[0] * x[0] + x[1] * x[1])).exp(), 0.0)).unwrap()
            })
            .collect();
        let curve = spectrum_peak(&fields).unwrap();
        prop_assert!((curve.k_opt - ks[n]).abs() < 1e-9);
        let sel = IntervalSelection::around(curve.k_opt);
        prop_assert!((sel.k_high_raw - sel.k_low_raw - INTERVAL_WIDTH).abs() < 1e-12);
        prop_assert!((0.5 * (sel.k_high_raw + sel.k_low_raw) - curve.k_opt).abs() < 1e-12);
        let shifted = select_and_shift(&fields, &sel).unwrap();
        prop_assert_eq!(shifted.len(), 11);
        for (f, k) in shifted.iter().zip(working_lattice()) {
            prop_assert!((f.k - k).abs() < 1e-12);
        }
        prop_assert_eq!(&shifted[5].values, &fields[n].values);
    }

    #[test]
    fn postprocessed_coefficient_is_confined_and_bounded_below(seed in any::<u64>(), level in 0.3f64..0.9, passes in 0usize..3) {
        let g = Grid3::computational_domain(12).unwrap();
        let gamma = PlaneGrid::near_face(&g);
        let mask = TruncationMask::from_field(&bumps(&gamma, 6.5, seed), level, [-0.75, 1.0]);
        let raw = VolumeWave::new(g.clone(), random_values(g.len(), seed).into_iter().map(|v| v * 6.0).collect()).unwrap();
        let c = postprocess(&raw, &mask, passes).unwrap();
        for idx in 0..g.len() {
            let [i, j, k] = g.node(idx);
            prop_assert!(c.c[idx] >= 1.0);
            if !mask.contains(&g, i, j, k) {
                prop_assert_eq!(c.c[idx], 1.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn reported_residual_is_certified(contrast in 0.1f64..1.5, k in 2.0f64..7.0) {
        let g = Grid3::computational_domain(12).unwrap();
        let m = MediumField::from_nodes(&g, |[i, j, l]| if (4..8).contains(&i) && (3..9).contains(&j) && (2..6).contains(&l) { 1.0 + contrast } else { 1.0 }).unwrap();
        let (u, rep) = solve_total_field(&m, k, &LsConfig::default()).unwrap();
        let again = ls_residual(&m, k, &u).unwrap();
        prop_assert!(rep.residual <= 1e-6);
        prop_assert!((again - rep.residual).abs() < 1e-12);
    }
}
