//! Named verification battery pitting the closed-form calculus against the
//! independent oracles. Each check is deterministic; the CLI renders the
//! results as a pass/fail table.

use nalgebra::DVector;

use crate::oracle::{
    check_batch_grad_norm_identity, check_subsample_second_moment, exact_moment_trace,
};
use crate::problems::{random_interpolated_quadratic, tightness_instance, SpectrumProfile};
use crate::rates::QuadraticRateParams;
use crate::rng;
use crate::spectral::{subsample_covariance, SpectralSummary};

/// How much work the battery does.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    /// A few seconds end to end.
    Quick,
    /// 100-seed property sweeps.
    Full,
}

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
}

impl CheckResult {
    fn pass(name: &'static str, details: String) -> Self {
        Self {
            name,
            passed: true,
            details,
        }
    }

    fn fail(name: &'static str, details: String) -> Self {
        Self {
            name,
            passed: false,
            details,
        }
    }

    fn from_gap(name: &'static str, worst: f64, tolerance: f64, context: &str) -> Self {
        let details = format!("worst {worst:.3e} vs tolerance {tolerance:.1e} ({context})");
        if worst <= tolerance {
            Self::pass(name, details)
        } else {
            Self::fail(name, details)
        }
    }
}

/// Runs the whole battery.
pub fn run_all(level: Level) -> Vec<CheckResult> {
    vec![
        null_space_annihilation(level),
        batch_grad_norm_identity(level),
        subsample_second_moment(level),
        contraction_upper_bound(level),
        flat_spectrum_equality(),
        unit_batch_efficiency(level),
        per_gradient_rate_monotonicity(level),
        step_size_boundary(),
        critical_batch_references(),
    ]
}

/// Subsample covariances built from any batch annihilate the null space of
/// the full covariance and never map into it.
fn null_space_annihilation(level: Level) -> CheckResult {
    let batches = match level {
        Level::Quick => 200u64,
        Level::Full => 1000,
    };
    let mut worst: f64 = 0.0;
    for (pi, (n, d)) in [(3usize, 6usize), (4, 9), (2, 5)].iter().enumerate() {
        let problem = match random_interpolated_quadratic(
            *n,
            *d,
            SpectrumProfile::UniformRowNorms { min: 0.5, max: 1.2 },
            7000 + pi as u64,
        ) {
            Ok(p) => p,
            Err(e) => return CheckResult::fail("null-space-annihilation", e.to_string()),
        };
        let beta = problem.beta();
        let s = problem.spectral();
        for trial in 0..batches {
            let m = 1 + (rng::counter_hash(pi as u64, trial, 1) % 4) as usize;
            let indices: Vec<usize> = (0..m)
                .map(|j| rng::sample_index(8000 + pi as u64, trial, j as u64, *n))
                .collect();
            let hm = subsample_covariance(problem.data(), &indices).expect("valid indices");

            let v = DVector::from_vec(rng::normal_vector(9000 + trial * 7 + pi as u64, *d));
            let null_v = s.project_null(&v).expect("dimension matches");
            let killed = (hm.matrix() * &null_v).norm() / (beta * null_v.norm().max(1e-300));
            let leaked = s
                .project_null(&(hm.matrix() * &v))
                .expect("dimension matches")
                .norm()
                / (beta * v.norm());
            worst = worst.max(killed).max(leaked);
        }
    }
    CheckResult::from_gap(
        "null-space-annihilation",
        worst,
        1e-10,
        "scaled by beta and the vector norm",
    )
}

/// Mini-batch gradient norm expansion, exhaustively for n <= 4, m <= 3.
fn batch_grad_norm_identity(level: Level) -> CheckResult {
    let seeds: u64 = match level {
        Level::Quick => 2,
        Level::Full => 8,
    };
    let mut worst: f64 = 0.0;
    for seed in 0..seeds {
        for n in 1..=4usize {
            for m in 1..=3usize {
                let problem = match random_interpolated_quadratic(
                    n,
                    3,
                    SpectrumProfile::UniformRowNorms { min: 0.6, max: 1.1 },
                    500 + seed * 16 + (n * 4 + m) as u64,
                ) {
                    Ok(p) => p,
                    Err(e) => return CheckResult::fail("batch-grad-norm-identity", e.to_string()),
                };
                let w = DVector::from_vec(rng::normal_vector(600 + seed * 13 + m as u64, 3));
                match check_batch_grad_norm_identity(&problem, &w, m) {
                    Ok(check) => worst = worst.max(check.gap),
                    Err(e) => return CheckResult::fail("batch-grad-norm-identity", e.to_string()),
                }
            }
        }
    }
    CheckResult::from_gap(
        "batch-grad-norm-identity",
        worst,
        1e-12,
        "absolute gap, all n <= 4, m <= 3",
    )
}

/// Subsample second-moment expansion plus its PSD domination bound.
fn subsample_second_moment(level: Level) -> CheckResult {
    let seeds: u64 = match level {
        Level::Quick => 2,
        Level::Full => 8,
    };
    let mut worst_gap: f64 = 0.0;
    let mut worst_slack: f64 = f64::INFINITY;
    for seed in 0..seeds {
        for n in 2..=4usize {
            for m in 1..=3usize {
                let problem = match random_interpolated_quadratic(
                    n,
                    3,
                    SpectrumProfile::UniformRowNorms { min: 0.5, max: 1.0 },
                    700 + seed * 16 + (n * 4 + m) as u64,
                ) {
                    Ok(p) => p,
                    Err(e) => return CheckResult::fail("subsample-second-moment", e.to_string()),
                };
                match check_subsample_second_moment(&problem, m) {
                    Ok(check) => {
                        worst_gap = worst_gap.max(check.max_entry_gap);
                        worst_slack = worst_slack.min(
                            check.bound_slack_min_eig / (problem.beta() * problem.beta()),
                        );
                    }
                    Err(e) => return CheckResult::fail("subsample-second-moment", e.to_string()),
                }
            }
        }
    }
    let details = format!(
        "worst entry gap {worst_gap:.3e} (tol 1e-12); \
         scaled bound slack {worst_slack:.3e} (floor -1e-10)"
    );
    if worst_gap <= 1e-12 && worst_slack >= -1e-10 {
        CheckResult::pass("subsample-second-moment", details)
    } else {
        CheckResult::fail("subsample-second-moment", details)
    }
}

/// Exact second-moment range error never exceeds the worst-case contraction
/// power law.
fn contraction_upper_bound(level: Level) -> CheckResult {
    let (instances, pairs, t_max) = match level {
        Level::Quick => (5u64, 3usize, 100u64),
        Level::Full => (20, 5, 200),
    };
    let mut worst_excess: f64 = 0.0;
    for inst in 0..instances {
        let n = 4 + (rng::counter_hash(1, inst, 10) % 13) as usize;
        let d = 4 + (rng::counter_hash(1, inst, 11) % 13) as usize;
        let problem = match random_interpolated_quadratic(
            n,
            d,
            SpectrumProfile::UniformRowNorms { min: 0.4, max: 1.3 },
            4200 + inst,
        ) {
            Ok(p) => p,
            Err(e) => return CheckResult::fail("contraction-upper-bound", e.to_string()),
        };
        let params = match problem.rate_params() {
            Ok(p) => p,
            Err(e) => return CheckResult::fail("contraction-upper-bound", e.to_string()),
        };
        let raw = DVector::from_vec(rng::normal_vector(4300 + inst, d));
        let delta0 = problem.spectral().project_range(&raw).expect("dims match");
        for pair in 0..pairs {
            let m = 1 + (rng::counter_hash(2, inst, pair as u64) % 16) as usize;
            let frac = 0.15 + 0.8 * (rng::counter_hash(3, inst, pair as u64) % 1000) as f64 / 1000.0;
            let eta = frac * params.eta1(m as f64);
            let g = match params.g_max(m as f64, eta) {
                Ok(g) => g,
                Err(e) => return CheckResult::fail("contraction-upper-bound", e.to_string()),
            };
            let trace = exact_moment_trace(&problem, m, eta, &delta0, t_max);
            let p0 = trace.range_error[0];
            // The additive term is the f64 floor of the recursion arithmetic,
            // twenty orders below any tolerance in play; a real violation
            // would surface at the bound's own scale.
            let float_floor = 1e-30 * p0;
            for (t, &value) in trace.range_error.iter().enumerate() {
                let bound = g.powi(t as i32) * p0 * (1.0 + 1e-9);
                if value > bound + float_floor {
                    worst_excess = worst_excess.max(value / bound - 1.0);
                }
            }
        }
    }
    CheckResult::from_gap(
        "contraction-upper-bound",
        worst_excess.max(0.0),
        0.0,
        "relative excess over g^t with 1e-9 slack already applied",
    )
}

/// On the flat design the contraction bound is an equality.
fn flat_spectrum_equality() -> CheckResult {
    let n = 32;
    let problem = match tightness_instance(n, 1.0, 77) {
        Ok(p) => p,
        Err(e) => return CheckResult::fail("flat-spectrum-equality", e.to_string()),
    };
    let params = match problem.rate_params() {
        Ok(p) => p,
        Err(e) => return CheckResult::fail("flat-spectrum-equality", e.to_string()),
    };
    let delta0 = DVector::from_vec(rng::normal_vector(78, n));
    let norm0 = delta0.norm_squared();
    let mut worst: f64 = 0.0;
    for m in [1usize, 4, 16] {
        let eta = params.optimal_step(m as f64);
        let g = params.optimal_rate(m as f64);
        let trace = exact_moment_trace(&problem, m, eta, &delta0, 100);
        for (t, &value) in trace.total_error.iter().enumerate() {
            let expected = g.powi(t as i32) * norm0;
            worst = worst.max((value - expected).abs() / expected);
        }
    }
    CheckResult::from_gap(
        "flat-spectrum-equality",
        worst,
        1e-9,
        "relative, t <= 100, m in {1,4,16}",
    )
}

fn random_params(seed: u64) -> QuadraticRateParams {
    let mut r = rng::chacha(seed);
    let n = 1000 + (rng::counter_hash(seed, 1, 2) % 99_000) as usize;
    let beta = rng::uniform_in(&mut r, 0.3, 3.0);
    let lambda1 = beta * rng::uniform_in(&mut r, 2.0 / n as f64, 0.5);
    let lambda_k = (beta / n as f64) * rng::uniform_in(&mut r, 0.05, 1.0);
    let lambda_k = lambda_k.min(lambda1);
    QuadraticRateParams::new(beta, lambda1, lambda_k, n).expect("constructed valid")
}

/// Exhaustive integer search confirms batch size one is the most
/// computation-efficient, under both step-size rules.
fn unit_batch_efficiency(level: Level) -> CheckResult {
    let sets: u64 = match level {
        Level::Quick => 25,
        Level::Full => 100,
    };
    for seed in 0..sets {
        let p = random_params(10_000 + seed);
        let best = p.best_batch(1024);
        let best_hat = match p.best_batch_hat(1024) {
            Ok(b) => b,
            Err(e) => return CheckResult::fail("unit-batch-efficiency", e.to_string()),
        };
        if best != 1 || best_hat != 1 {
            return CheckResult::fail(
                "unit-batch-efficiency",
                format!(
                    "argmin over 1..=1024 gave {best} (optimal) / {best_hat} (near-optimal) \
                     for beta={}, lambda1={}, lambda_k={}",
                    p.beta(),
                    p.lambda1(),
                    p.lambda_k()
                ),
            );
        }
    }
    CheckResult::pass(
        "unit-batch-efficiency",
        format!("argmin = 1 on {sets} random parameter sets, both step rules"),
    )
}

/// First-branch per-gradient rate is strictly increasing in m, never above
/// the second-branch form, and the two meet at the branch point.
fn per_gradient_rate_monotonicity(level: Level) -> CheckResult {
    let sets: u64 = match level {
        Level::Quick => 25,
        Level::Full => 100,
    };
    let mut worst_equality_gap: f64 = 0.0;
    for seed in 0..sets {
        let p = random_params(20_000 + seed);
        let (beta, l1, lk) = (p.beta(), p.lambda1(), p.lambda_k());
        let g1 = |m: f64| 1.0 - m * lk / (beta + (m - 1.0) * lk);
        let g2 = |m: f64| {
            let den = beta + (m - 1.0) * (l1 + lk);
            1.0 - 4.0 * m * (m - 1.0) * l1 * lk / (den * den)
        };
        // Dense grid over m in [1, 1e4].
        let grid = 2000usize;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=grid {
            let m = 1.0 + (1e4 - 1.0) * (i as f64 / grid as f64).powi(2);
            let eff = (g1(m).ln() / m).exp();
            if eff <= prev {
                return CheckResult::fail(
                    "per-gradient-rate-monotonicity",
                    format!("g1(m)^(1/m) not strictly increasing at m = {m} (seed {seed})"),
                );
            }
            prev = eff;
            if g1(m) > g2(m) + 1e-12 {
                return CheckResult::fail(
                    "per-gradient-rate-monotonicity",
                    format!("g1 > g2 at m = {m} (seed {seed})"),
                );
            }
        }
        let branch = beta / (l1 - lk) + 1.0;
        worst_equality_gap = worst_equality_gap.max((g1(branch) - g2(branch)).abs());
    }
    CheckResult::from_gap(
        "per-gradient-rate-monotonicity",
        worst_equality_gap,
        1e-9,
        "g1 = g2 at the branch point",
    )
}

/// Past the convergence boundary the exact expected loss grows; at the
/// near-optimal step it decreases monotonically.
fn step_size_boundary() -> CheckResult {
    let n = 32;
    let problem = match tightness_instance(n, 1.0, 99) {
        Ok(p) => p,
        Err(e) => return CheckResult::fail("step-size-boundary", e.to_string()),
    };
    let params = match problem.rate_params() {
        Ok(p) => p,
        Err(e) => return CheckResult::fail("step-size-boundary", e.to_string()),
    };
    let delta0 = DVector::from_vec(rng::normal_vector(98, n));
    for m in [1usize, 4, 16] {
        let above = 1.1 * params.eta1(m as f64);
        let trace = exact_moment_trace(&problem, m, above, &delta0, 200);
        if trace.expected_loss[200] <= trace.expected_loss[0] {
            return CheckResult::fail(
                "step-size-boundary",
                format!(
                    "m={m}: expected loss fell from {} to {} at 1.1 * eta1",
                    trace.expected_loss[0], trace.expected_loss[200]
                ),
            );
        }
        let hat = match params.hat_step(m as f64) {
            Ok(v) => v,
            Err(e) => return CheckResult::fail("step-size-boundary", e.to_string()),
        };
        let good = exact_moment_trace(&problem, m, hat, &delta0, 200);
        for pair in good.expected_loss.windows(2) {
            if pair[1] >= pair[0] {
                return CheckResult::fail(
                    "step-size-boundary",
                    format!("m={m}: expected loss not strictly decreasing at the near-optimal step"),
                );
            }
        }
    }
    CheckResult::pass(
        "step-size-boundary",
        "grows at 1.1 * eta1, strictly decreases at the near-optimal step (m in {1,4,16})".into(),
    )
}

/// Frozen critical-batch-size reference values.
fn critical_batch_references() -> CheckResult {
    let cases = [
        (1.0, 0.15, 10_000usize, 8.0_f64, 0.5),
        (0.6, 0.012, 10_000, 51.3, 1.0),
        (1.0, 0.054, 10_000, 20.0, 0.5),
    ];
    let mut details = String::new();
    for (beta, lambda1, n, expected, tol) in cases {
        let lambda_k = beta / n as f64;
        let p = match QuadraticRateParams::new(beta, lambda1, lambda_k, n) {
            Ok(p) => p,
            Err(e) => return CheckResult::fail("critical-batch-references", e.to_string()),
        };
        let m_star = match p.critical_batch().value() {
            Some(v) => v,
            None => {
                return CheckResult::fail(
                    "critical-batch-references",
                    "unexpected unbounded critical batch".into(),
                )
            }
        };
        if (m_star - expected).abs() > tol {
            return CheckResult::fail(
                "critical-batch-references",
                format!("beta={beta}, lambda1={lambda1}: m* = {m_star}, expected about {expected}"),
            );
        }
        details.push_str(&format!("m*({beta}, {lambda1}) = {m_star:.2}; "));
    }
    CheckResult::pass("critical-batch-references", details)
}

/// Worst relative gap between the exact flat-design error curve and a
/// candidate per-step factor. Used by the equality check with the true
/// optimal rate, and by tests as a negative control with a wrong one.
pub fn flat_design_rate_gap(n: usize, m: usize, candidate_rate: f64, t_max: u64) -> f64 {
    let problem = tightness_instance(n, 1.0, 77).expect("valid flat design");
    let params = problem.rate_params().expect("valid spectrum");
    let delta0 = DVector::from_vec(rng::normal_vector(78, n));
    let norm0 = delta0.norm_squared();
    let eta = params.optimal_step(m as f64);
    let trace = exact_moment_trace(&problem, m, eta, &delta0, t_max);
    let mut worst: f64 = 0.0;
    for (t, &value) in trace.total_error.iter().enumerate() {
        let expected = candidate_rate.powi(t as i32) * norm0;
        worst = worst.max((value - expected).abs() / expected);
    }
    worst
}

/// Fraction of directions a computed spectral summary keeps; exposed so the
/// CLI can sanity-report dataset rank alongside the battery.
pub fn retained_rank_fraction(summary: &SpectralSummary) -> f64 {
    summary.rank() as f64 / summary.dim() as f64
}
