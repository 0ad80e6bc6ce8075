//! Property tests for the calculus and the linear-algebra substrate.

use nalgebra::DVector;
use proptest::prelude::*;

use sgdscale::engine::{sgd_run_quadratic, InitialError, SGDConfig, StepPolicy};
use sgdscale::problems::{random_interpolated_quadratic, SpectrumProfile};
use sgdscale::rates::{g_lambda, QuadraticRateParams};
use sgdscale::spectral::{covariance, subsample_covariance, DataMatrix, SpectralSummary};

fn rate_params() -> impl Strategy<Value = QuadraticRateParams> {
    (
        1_000usize..100_000,
        0.3f64..3.0,
        0.002f64..0.5,
        0.05f64..1.0,
    )
        .prop_map(|(n, beta, l1_frac, lk_frac)| {
            let lambda1 = (beta * l1_frac).max(2.0 * beta / n as f64);
            let lambda_k = (beta / n as f64 * lk_frac).min(lambda1);
            QuadraticRateParams::new(beta, lambda1, lambda_k, n).expect("valid by construction")
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn speedup_identity_links_rate_and_speedup(p in rate_params(), m in 1.0f64..500.0) {
        // g*(m) = 1 - (lambda_k / beta) s(m).
        let lhs = p.optimal_rate(m);
        let rhs = 1.0 - p.lambda_k() / p.beta() * p.speedup(m);
        prop_assert!((lhs - rhs).abs() <= 1e-12, "gap {:e}", (lhs - rhs).abs());
    }

    #[test]
    fn rate_curves_are_monotone(p in rate_params(), m in 1.0f64..400.0, bump in 1.01f64..4.0) {
        let m2 = m * bump;
        // g* non-increasing, s increasing, efficiency increasing in m.
        prop_assert!(p.optimal_rate(m2) <= p.optimal_rate(m) + 1e-12);
        prop_assert!(p.speedup(m2) > p.speedup(m));
        prop_assert!(p.efficiency(m2) > p.efficiency(m));
        let g = p.optimal_rate(m);
        prop_assert!(g > 0.0 && g < 1.0);
    }

    #[test]
    fn step_sizes_are_ordered(p in rate_params(), m in 1.0f64..500.0) {
        // eta_hat <= eta_0, eta* <= eta_0 < eta_1, all positive.
        let eta_star = p.optimal_step(m);
        let eta_hat = p.hat_step(m).unwrap();
        let eta0 = p.eta0(m);
        let eta1 = p.eta1(m);
        prop_assert!(eta_hat > 0.0);
        prop_assert!(eta_hat <= eta0 * (1.0 + 1e-12));
        prop_assert!(eta_star <= eta0 * (1.0 + 1e-12));
        prop_assert!(eta0 <= eta1);
        prop_assert!(eta_star < eta1);
    }

    #[test]
    fn g_max_dominates_interior_eigenvalues(
        p in rate_params(),
        m in 1.0f64..200.0,
        eta_frac in 0.05f64..0.99,
        mid in 0.0f64..1.0,
    ) {
        let eta = eta_frac * p.eta1(m);
        let g = p.g_max(m, eta).unwrap();
        let ends = g_lambda(p.lambda_k(), m, eta, p.beta())
            .max(g_lambda(p.lambda1(), m, eta, p.beta()));
        prop_assert!((g - ends).abs() <= 1e-15);
        let lambda_mid = p.lambda_k() + mid * (p.lambda1() - p.lambda_k());
        prop_assert!(g_lambda(lambda_mid, m, eta, p.beta()) <= g + 1e-15);
        prop_assert!(g < 1.0);
    }

    #[test]
    fn near_optimal_rate_is_a_mild_upper_bound(p in rate_params(), m in 1.0f64..200.0) {
        // g_hat >= g*, with slowdown at most 1 + 2m/n for m <= n/2.
        let g_star = p.optimal_rate(m);
        let g_hat = p.hat_rate(m).unwrap();
        prop_assert!(g_hat >= g_star - 1e-12);
        if m <= p.n() as f64 / 2.0 {
            let slowdown = (1.0 - g_star) / (1.0 - g_hat);
            prop_assert!(
                slowdown <= 1.0 + 2.0 * m / p.n() as f64 + 1e-12,
                "slowdown {slowdown} at m={m}, n={}",
                p.n()
            );
        }
    }
}

fn data_matrix() -> impl Strategy<Value = DataMatrix> {
    (1usize..7, 1usize..7).prop_flat_map(|(n, d)| {
        proptest::collection::vec(-2.0f64..2.0, n * d)
            .prop_filter_map("needs a nonzero row", move |entries| {
                let data = DataMatrix::new(n, d, entries).ok()?;
                let beta = data.max_row_norm_sq();
                (beta > 1e-3).then_some(data)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn covariance_is_psd_with_bounded_trace(data in data_matrix()) {
        let h = covariance(&data);
        let beta = data.max_row_norm_sq();
        prop_assert!(h.matrix().trace() <= beta * (1.0 + 1e-12));
        let min_eig = h
            .matrix()
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let max_eig = h
            .matrix()
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min_eig >= -1e-10 * max_eig.max(1e-300));
    }

    #[test]
    fn projections_split_orthogonally(data in data_matrix(), coords in proptest::collection::vec(-3.0f64..3.0, 1..7)) {
        let summary = match SpectralSummary::from_data(&data, 1e-10) {
            Ok(s) => s,
            Err(_) => return Ok(()), // all-zero spectrum drawn; nothing to test
        };
        if coords.len() != data.dim() {
            return Ok(());
        }
        let v = DVector::from_vec(coords);
        let p = summary.project_range(&v).unwrap();
        let q = summary.project_null(&v).unwrap();
        let scale = v.norm().max(1.0);
        prop_assert!((&p + &q - &v).norm() <= 1e-12 * scale);
        prop_assert!(p.dot(&q).abs() <= 1e-10 * scale * scale);
        // Projection is idempotent.
        let pp = summary.project_range(&p).unwrap();
        prop_assert!((&pp - &p).norm() <= 1e-10 * scale);
    }

    #[test]
    fn singleton_subsamples_average_to_the_covariance(data in data_matrix()) {
        let n = data.num_samples();
        let d = data.dim();
        let mut acc = nalgebra::DMatrix::zeros(d, d);
        for i in 0..n {
            acc += subsample_covariance(&data, &[i]).unwrap().matrix();
        }
        acc /= n as f64;
        let h = covariance(&data);
        prop_assert!((acc - h.matrix()).amax() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn engine_is_a_pure_function_of_problem_and_config(
        seed in 0u64..1_000,
        m in 1usize..6,
        stride in 1u64..5,
    ) {
        let problem = random_interpolated_quadratic(
            5,
            3,
            SpectrumProfile::UniformRowNorms { min: 0.5, max: 1.0 },
            42,
        )
        .unwrap();
        let config = SGDConfig::new(m, StepPolicy::Optimal)
            .with_seed(seed)
            .with_max_iterations(40)
            .with_trace_stride(stride)
            .with_initial_error(InitialError::SeededNormal);
        let a = sgd_run_quadratic(&problem, &config).unwrap();
        let b = sgd_run_quadratic(&problem, &config).unwrap();
        prop_assert_eq!(a, b);
    }
}
