//! Independent verification machinery.
//!
//! Three routes to the same expectations, used to cross-check the engine and
//! the closed-form calculus:
//!
//! 1. An *exact* recursion for the second moment `M_t = E[delta_t delta_t^T]`
//!    of the quadratic SGD error under i.i.d. with-replacement batches:
//!
//!    ```text
//!    M' = M - eta (H M + M H)
//!         + eta^2 [ (1/m) (1/n) sum_i (x_i^T M x_i) x_i x_i^T
//!                 + (1 - 1/m) H M H ]
//!    ```
//!
//!    No sampling noise: `trace(M_t)` *is* `E ||delta_t||^2`.
//! 2. Brute-force enumeration over every ordered batch index sequence on
//!    tiny instances, which validates the recursion itself.
//! 3. Seeded Monte-Carlo estimators with standard errors.
//!
//! Enumeration budgets are hard errors, never silent truncation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::engine::ConvexObjective;
use crate::error::{Error, Result};
use crate::problems::QuadraticProblem;
use crate::rng;
use crate::spectral::{subsample_covariance, SpectralSummary};

/// Largest number of enumerated states allowed per exhaustive call.
pub const ENUMERATION_BUDGET: f64 = 1e7;

/// Second moment `E[delta_t delta_t^T]` at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    matrix: DMatrix<f64>,
    iteration: u64,
}

impl MomentState {
    /// Deterministic start: the outer product of the initial error.
    pub fn from_error(delta0: &DVector<f64>) -> Self {
        Self {
            matrix: delta0 * delta0.transpose(),
            iteration: 0,
        }
    }

    pub fn new(matrix: DMatrix<f64>, iteration: u64) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        let scale = matrix.amax().max(1.0);
        for i in 0..matrix.nrows() {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!(
                        "moment matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { matrix, iteration })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// `E ||delta||^2 = trace(M)`.
    pub fn total_error(&self) -> f64 {
        self.matrix.trace()
    }

    /// `E ||P delta||^2`: the trace of `M` restricted to the range basis.
    pub fn range_error(&self, spectral: &SpectralSummary) -> f64 {
        spectral
            .basis()
            .column_iter()
            .map(|e| {
                let me = &self.matrix * e;
                e.dot(&me)
            })
            .sum()
    }

    /// `E[loss] = trace(H M)`.
    pub fn expected_loss(&self, problem: &QuadraticProblem) -> f64 {
        (problem.covariance().matrix() * &self.matrix).trace()
    }
}

/// One exact step of the second-moment recursion.
pub fn exact_moment_step(
    state: &MomentState,
    problem: &QuadraticProblem,
    m: usize,
    eta: f64,
) -> MomentState {
    assert!(m >= 1, "batch size must be >= 1");
    assert!(eta >= 0.0, "step size must be non-negative");
    let h = problem.covariance().matrix();
    let mm = &state.matrix;
    let n = problem.num_samples();
    let d = problem.dim();

    let hm = h * mm;
    // (1/n) sum_i (x_i^T M x_i) x_i x_i^T.
    let mut fourth = DMatrix::zeros(d, d);
    let mut xi = DVector::zeros(d);
    for i in 0..n {
        xi.copy_from_slice(problem.data().row(i));
        let mx = mm * &xi;
        let t = xi.dot(&mx);
        for b in 0..d {
            let s = t * xi[b];
            for a in 0..d {
                fourth[(a, b)] += s * xi[a];
            }
        }
    }
    fourth /= n as f64;

    let m_f = m as f64;
    let hmh = &hm * h;
    let mut next = mm - eta * (&hm + hm.transpose())
        + (eta * eta) * ((1.0 / m_f) * fourth + (1.0 - 1.0 / m_f) * hmh);
    // The operator preserves symmetry; scrub accumulation asymmetry.
    for i in 0..d {
        for j in 0..i {
            let avg = 0.5 * (next[(i, j)] + next[(j, i)]);
            next[(i, j)] = avg;
            next[(j, i)] = avg;
        }
    }
    MomentState {
        matrix: next,
        iteration: state.iteration + 1,
    }
}

/// Exact expectation curves for `t = 0..=t_max`, one recursion pass.
#[derive(Debug, Clone)]
pub struct ExactMomentTrace {
    /// `E ||delta_t||^2`.
    pub total_error: Vec<f64>,
    /// `E ||P delta_t||^2`.
    pub range_error: Vec<f64>,
    /// `E[loss_t] = trace(H M_t)`.
    pub expected_loss: Vec<f64>,
}

pub fn exact_moment_trace(
    problem: &QuadraticProblem,
    m: usize,
    eta: f64,
    delta0: &DVector<f64>,
    t_max: u64,
) -> ExactMomentTrace {
    let mut state = MomentState::from_error(delta0);
    let mut out = ExactMomentTrace {
        total_error: Vec::with_capacity(t_max as usize + 1),
        range_error: Vec::with_capacity(t_max as usize + 1),
        expected_loss: Vec::with_capacity(t_max as usize + 1),
    };
    for _ in 0..=t_max {
        out.total_error.push(state.total_error());
        out.range_error.push(state.range_error(problem.spectral()));
        out.expected_loss.push(state.expected_loss(problem));
        state = exact_moment_step(&state, problem, m, eta);
    }
    out
}

fn budget_check(states: f64) -> Result<()> {
    // Overflowed state counts come in as inf or NaN; both must fail.
    if states.is_nan() || states > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded {
            required: states,
            budget: ENUMERATION_BUDGET,
        });
    }
    Ok(())
}

/// Calls `f` once per ordered index tuple of length `m` over `0..n`.
fn for_each_tuple(n: usize, m: usize, mut f: impl FnMut(&[usize])) {
    let mut tuple = vec![0usize; m];
    loop {
        f(&tuple);
        let mut pos = m;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            tuple[pos] += 1;
            if tuple[pos] < n {
                break;
            }
            tuple[pos] = 0;
        }
    }
}

/// Exact `E ||delta_t||^2` by averaging over **all** `n^(m t)` ordered batch
/// index sequences, each equally weighted (i.i.d. with replacement).
pub fn enumerate_expected_error(
    problem: &QuadraticProblem,
    m: usize,
    eta: f64,
    delta0: &DVector<f64>,
    t: u64,
) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidInput("batch size must be >= 1".into()));
    }
    let n = problem.num_samples();
    budget_check((n as f64).powf((m as u64 * t) as f64))?;

    fn recurse(
        problem: &QuadraticProblem,
        m: usize,
        eta: f64,
        delta: &DVector<f64>,
        steps_left: u64,
    ) -> f64 {
        if steps_left == 0 {
            return delta.norm_squared();
        }
        let n = problem.num_samples();
        let scale = eta / m as f64;
        let mut total = 0.0;
        for_each_tuple(n, m, |tuple| {
            // Mirror the engine update: accumulate residual gradients, then
            // apply one scaled step.
            let mut grad = DVector::zeros(delta.len());
            for &i in tuple {
                let row = problem.data().row(i);
                let r: f64 = row.iter().zip(delta.iter()).map(|(x, d)| x * d).sum();
                for (g, x) in grad.iter_mut().zip(row) {
                    *g += r * x;
                }
            }
            let next = delta - scale * grad;
            total += recurse(problem, m, eta, &next, steps_left - 1);
        });
        total
    }

    let total = recurse(problem, m, eta, delta0, t);
    Ok(total / (n as f64).powi((m as u64 * t) as i32))
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: u64,
    pub seed: u64,
    /// Trials that blew past the divergence guard (excluded from the mean).
    pub diverged_trials: u64,
    /// Set when a majority of trials diverged; the mean is then unusable.
    pub flagged: bool,
}

/// Seeded Monte-Carlo estimate of `E ||delta_t||^2`.
pub fn mc_expected_error(
    problem: &QuadraticProblem,
    m: usize,
    eta: f64,
    delta0: &DVector<f64>,
    t: u64,
    trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    if trials < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 trials, got {trials}"
        )));
    }
    if m == 0 {
        return Err(Error::InvalidInput("batch size must be >= 1".into()));
    }
    let n = problem.num_samples();
    let guard = 1e12 * delta0.norm_squared().max(f64::MIN_POSITIVE);

    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let trial_seed = rng::derive_seed(seed, trial);
            let mut delta = delta0.clone();
            let mut grad = vec![0.0; delta.len()];
            let scale = eta / m as f64;
            for iter in 0..t {
                grad.fill(0.0);
                for slot in 0..m {
                    let i = rng::sample_index(trial_seed, iter, slot as u64, n);
                    let row = problem.data().row(i);
                    let r: f64 = row.iter().zip(delta.iter()).map(|(x, d)| x * d).sum();
                    for (g, x) in grad.iter_mut().zip(row) {
                        *g += r * x;
                    }
                }
                for (dv, g) in delta.iter_mut().zip(&grad) {
                    *dv -= scale * g;
                }
            }
            delta.norm_squared()
        })
        .collect();

    let finite: Vec<f64> = values
        .iter()
        .copied()
        .filter(|v| v.is_finite() && *v <= guard)
        .collect();
    let diverged = trials - finite.len() as u64;
    let flagged = diverged * 2 > trials;
    let (mean, std_error) = if finite.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let k = finite.len() as f64;
        let mean = finite.iter().sum::<f64>() / k;
        let var = if finite.len() > 1 {
            finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        (mean, (var / k).sqrt())
    };
    Ok(McEstimate {
        mean,
        std_error,
        trials,
        seed,
        diverged_trials: diverged,
        flagged,
    })
}

/// Two sides of an expectation identity and their absolute gap.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Checks `E ||grad L_m||^2 = (1/m) E ||grad L_1||^2 +
/// ((m-1)/m) ||grad L||^2` at `w` by enumerating all `n^m` batches.
pub fn check_batch_grad_norm_identity<P: ConvexObjective + ?Sized>(
    problem: &P,
    w: &DVector<f64>,
    m: usize,
) -> Result<IdentityCheck> {
    if m == 0 {
        return Err(Error::InvalidInput("batch size must be >= 1".into()));
    }
    let n = problem.num_samples();
    budget_check((n as f64).powf(m as f64))?;

    let grads: Vec<DVector<f64>> = (0..n).map(|i| problem.sample_grad(i, w)).collect();
    let mean_grad = grads.iter().sum::<DVector<f64>>() / n as f64;
    let mean_sq_norm = grads.iter().map(|g| g.norm_squared()).sum::<f64>() / n as f64;

    let mut lhs_total = 0.0;
    let mut count = 0u64;
    for_each_tuple(n, m, |tuple| {
        let mut acc = DVector::zeros(problem.dim());
        for &i in tuple {
            acc += &grads[i];
        }
        acc /= m as f64;
        lhs_total += acc.norm_squared();
        count += 1;
    });
    let lhs = lhs_total / count as f64;
    let m_f = m as f64;
    let rhs = mean_sq_norm / m_f + (m_f - 1.0) / m_f * mean_grad.norm_squared();
    Ok(IdentityCheck {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

/// Enumerated `E[H_m^2]` against its closed form and the PSD upper bound.
#[derive(Debug, Clone)]
pub struct SecondMomentExpansion {
    pub enumerated: DMatrix<f64>,
    pub closed_form: DMatrix<f64>,
    /// Largest entrywise difference between the two routes.
    pub max_entry_gap: f64,
    /// Smallest eigenvalue of `(beta/m) H + ((m-1)/m) H^2 - E[H_m^2]`;
    /// non-negative (to solver noise) iff the domination bound holds.
    pub bound_slack_min_eig: f64,
}

/// Checks `E[H_m^2] = (1/m) E[H_1^2] + ((m-1)/m) H^2` by enumeration, and
/// the PSD bound `E[H_m^2] <= (beta/m) H + ((m-1)/m) H^2`.
pub fn check_subsample_second_moment(
    problem: &QuadraticProblem,
    m: usize,
) -> Result<SecondMomentExpansion> {
    if m == 0 {
        return Err(Error::InvalidInput("batch size must be >= 1".into()));
    }
    let n = problem.num_samples();
    let d = problem.dim();
    budget_check((n as f64).powf(m as f64))?;

    let mut enumerated = DMatrix::zeros(d, d);
    let mut count = 0u64;
    for_each_tuple(n, m, |tuple| {
        let hm = subsample_covariance(problem.data(), tuple)
            .expect("indices are in range by construction");
        enumerated += hm.matrix() * hm.matrix();
        count += 1;
    });
    enumerated /= count as f64;

    // E[H_1^2] = (1/n) sum_i ||x_i||^2 x_i x_i^T.
    let mut h1_sq = DMatrix::zeros(d, d);
    for i in 0..n {
        let row = problem.data().row(i);
        let norm_sq: f64 = row.iter().map(|v| v * v).sum();
        for a in 0..d {
            for b in 0..d {
                h1_sq[(a, b)] += norm_sq * row[a] * row[b];
            }
        }
    }
    h1_sq /= n as f64;

    let h = problem.covariance().matrix();
    let m_f = m as f64;
    let closed_form = &h1_sq / m_f + (1.0 - 1.0 / m_f) * (h * h);
    let max_entry_gap = (&enumerated - &closed_form).amax();

    let beta = problem.beta();
    let bound = (beta / m_f) * h + (1.0 - 1.0 / m_f) * (h * h) - &enumerated;
    let bound_slack_min_eig = bound
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);

    Ok(SecondMomentExpansion {
        enumerated,
        closed_form,
        max_entry_gap,
        bound_slack_min_eig,
    })
}
