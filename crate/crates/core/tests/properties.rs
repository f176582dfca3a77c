use icbell::concat::{
    enumerate_protocol, error_distribution, fourier_coefficients, guess_error_probabilities,
    squared_deviation_spectral, squared_deviation_sum, transition_matrix, DistributionMethod,
    GuessMethod,
};
use icbell::ic::{
    entropy_quadratic_bound, fano_lower_bound, ic_quadratic_lhs, ic_verdict, ln_binomial,
    mutual_information, shannon_entropy,
};
use icbell::ml::{
    block_amplitude, block_diagonalize, build_block, group_action, min_eigenvalue,
    min_eigenvalue_real, ml_verdict_analytic, symmetrized_moment_matrix, witness_assignment,
    witness_free, SymmetrizedFree,
};
use icbell::nsbox::{
    guessing_profile, random_distribution, random_mixture_box, random_profile, GuessingProfile,
};
use icbell::scan::figure2_family;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn profile(d: usize, seed: u64) -> GuessingProfile {
    random_profile(d, &mut StdRng::seed_from_u64(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transition_matrix_is_circulant_and_stochastic(d in 2usize..=10, seed: u64, j in 0usize..2) {
        let p = profile(d, seed);
        let m = transition_matrix(&p, j).unwrap();
        prop_assert!(m.is_circulant());
        prop_assert!(m.stochastic_residual() < 1e-12);
        let q = m.power_apply(64);
        prop_assert!(q.iter().all(|x| *x >= -1e-15 && *x <= 1.0 + 1e-12));
        prop_assert!((q.sum() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn closed_form_matches_matrix_power(d in 2usize..=7, k in 0usize..=8, seed: u64, j in 0usize..2) {
        let p = profile(d, seed);
        let a = error_distribution(&p, j, k, DistributionMethod::Power).unwrap().q;
        let b = error_distribution(&p, j, k, DistributionMethod::Closed).unwrap().q;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn fourier_coefficients_are_bounded(d in 2usize..=12, seed: u64) {
        let p = profile(d, seed);
        for j in 0..2 {
            let l = fourier_coefficients(&p, j).unwrap();
            prop_assert!(l.values().iter().all(|z| z.norm() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn guess_methods_agree(d in 2usize..=7, n in 1usize..=6, seed: u64, kf in 0.0f64..=1.0) {
        let p = profile(d, seed);
        let k = (kf * n as f64).round() as usize;
        let a = guess_error_probabilities(&p, n, k, GuessMethod::Convolution).unwrap();
        let b = guess_error_probabilities(&p, n, k, GuessMethod::Closed).unwrap();
        prop_assert!(a.max_abs_diff(&b.probs) < 1e-10);
        prop_assert!((a.probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn squared_deviation_identity(d in 2usize..=7, n in 1usize..=8, seed: u64, kf in 0.0f64..=1.0) {
        let p = profile(d, seed);
        let k = (kf * n as f64).round() as usize;
        let direct = squared_deviation_sum(&p, n, k).unwrap();
        let spectral = squared_deviation_spectral(&p, n, k).unwrap();
        prop_assert!((direct - spectral).abs() < 1e-10);
    }

    #[test]
    fn binomial_collapse(a in 0.0f64..=1.0, b in 0.0f64..=1.0, n in 1usize..=30) {
        let mut sum = 0.0;
        for k in 0..=n {
            let t = a.powi(k as i32) * b.powi((n - k) as i32);
            if t > 0.0 {
                sum += (ln_binomial(n, k) + t.ln()).exp();
            }
        }
        let closed = (a + b).powi(n as i32);
        prop_assert!((sum - closed).abs() <= 1e-9 * closed.max(1e-300));
    }

    #[test]
    fn quadratic_lhs_two_ways(d in 2usize..=6, n in 1usize..=6, seed: u64) {
        let r = ic_quadratic_lhs(&profile(d, seed), n).unwrap();
        prop_assert!(r.lhs >= 0.0 && r.rhs > 0.0);
        prop_assert!(r.agreement < 1e-9, "{:?}", r);
    }

    #[test]
    fn aggregate_is_symmetric_in_settings(d in 2usize..=6, n in 1usize..=6, seed: u64) {
        let p = profile(d, seed);
        let a = ic_quadratic_lhs(&p, n).unwrap();
        let b = ic_quadratic_lhs(&p.swapped(), n).unwrap();
        prop_assert!((a.lhs_direct - b.lhs_direct).abs() < 1e-12);
        prop_assert!((a.lhs - b.lhs).abs() < 1e-12);
    }

    #[test]
    fn relabeling_preserves_profile(d in 2usize..=5, seed: u64, r in 0usize..5, s in 0usize..5) {
        let b = random_mixture_box(d, &mut StdRng::seed_from_u64(seed)).unwrap();
        let p = guessing_profile(&b).unwrap();
        for moved in [b.relabel_outcomes(r % d), b.relabel_settings(s % d)] {
            let q = guessing_profile(&moved).unwrap();
            for e in 0..d {
                for j in 0..2 {
                    prop_assert!((p.p(e, j) - q.p(e, j)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn symmetrized_matrix_is_group_invariant(d in 2usize..=6, seed: u64) {
        let p = profile(d, seed);
        let g = symmetrized_moment_matrix(&p, &witness_free(&p).unwrap()).unwrap();
        for (r, s) in [(1, 0), (0, 1)] {
            prop_assert!((group_action(&g.matrix, d, r, s) - &g.matrix).abs().max() < 1e-12);
        }
    }

    #[test]
    fn block_amplitudes_match_fourier(d in 2usize..=10, seed: u64) {
        let p = profile(d, seed);
        for j in 0..2 {
            let l = fourier_coefficients(&p, j).unwrap();
            for m in 1..=d / 2 {
                prop_assert!((block_amplitude(&p, m, j).norm() - l.get(m).norm()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn witness_block_psd_iff_inequality(d in 2usize..=7, seed: u64) {
        let p = profile(d, seed);
        for m in 1..d {
            let lhs = block_amplitude(&p, m, 0).norm_sqr() + block_amplitude(&p, m, 1).norm_sqr();
            if (lhs - 1.0).abs() < 1e-6 {
                continue;
            }
            let min = min_eigenvalue(&build_block(&p, m, &witness_assignment(&p, m).unwrap()).unwrap());
            prop_assert_eq!(min >= -1e-10, lhs <= 1.0, "m = {}, lhs = {}, min = {}", m, lhs, min);
        }
    }

    #[test]
    fn witness_lifts_to_full_matrix(d in 2usize..=6, seed: u64) {
        let p = profile(d, seed);
        let v = ic_verdict(&p, 1e-9);
        prop_assume!((v.max_lhs - 1.0).abs() > 1e-6);
        let g = symmetrized_moment_matrix(&p, &witness_free(&p).unwrap()).unwrap();
        prop_assert_eq!(min_eigenvalue_real(&g.matrix) >= -1e-10, v.max_lhs <= 1.0);
    }

    #[test]
    fn constant_block_is_psd(d in 2usize..=10, seed: u64) {
        let p = profile(d, seed);
        let fam = block_diagonalize(&symmetrized_moment_matrix(&p, &SymmetrizedFree::flat(d).unwrap()).unwrap()).unwrap();
        prop_assert!(min_eigenvalue(&fam.blocks[0]) > -1e-10);
        prop_assert_eq!(fam.sizes().iter().sum::<usize>(), (d + 1) * (d + 1));
    }

    #[test]
    fn ml_and_ic_verdicts_coincide(d in 2usize..=8, seed: u64) {
        let p = profile(d, seed);
        let a = ic_verdict(&p, 1e-9);
        let b = ml_verdict_analytic(&p, 1e-9);
        prop_assert_eq!(a.verdict, b.verdict);
        for (x, y) in a.per_m.iter().zip(&b.per_m) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn figure2_profiles_are_valid(mu in 0.0f64..=1.0, frac in 0.0f64..=1.0) {
        let eta = frac * (1.0 - mu);
        let p = figure2_family(mu, eta).unwrap();
        prop_assert!((0..4).all(|e| p.p(e, 0) >= 0.0 && p.p(e, 0) == p.p(e, 1)));
    }

    #[test]
    fn fano_bound_holds(d in 2usize..=6, seed: u64) {
        let mut rng = StdRng::seed_from_u64(seed);
        let cond: Vec<Vec<f64>> = (0..d).map(|_| random_distribution(d, &mut rng)).collect();
        let joint: Vec<Vec<f64>> = cond.iter().map(|row| row.iter().map(|x| x / d as f64).collect()).collect();
        let mut err = vec![0.0; d];
        for (a, row) in joint.iter().enumerate() {
            for (b, x) in row.iter().enumerate() {
                err[(b + d - a) % d] += x;
            }
        }
        prop_assert!(mutual_information(&joint).unwrap() >= fano_lower_bound(&err, d).unwrap() - 1e-12);
    }

    #[test]
    fn quadratic_entropy_bound_holds(d in 2usize..=8, seed: u64) {
        let dist = random_distribution(d, &mut StdRng::seed_from_u64(seed));
        prop_assert!(shannon_entropy(&dist).unwrap() <= entropy_quadratic_bound(&dist, d).unwrap() + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn enumerator_depends_only_on_weight(d in 2usize..=3, seed: u64) {
        let b = random_mixture_box(d, &mut StdRng::seed_from_u64(seed)).unwrap();
        let one = enumerate_protocol(&b, 2, 1).unwrap();
        let two = enumerate_protocol(&b, 2, 2).unwrap();
        prop_assert_eq!(one.k, two.k);
        prop_assert!(one.max_abs_diff(&two.probs) < 1e-10);
    }
}
