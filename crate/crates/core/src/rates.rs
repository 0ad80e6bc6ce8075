//! Closed-form step sizes, contraction factors, speedups and batch-size
//! selection for constant-step mini-batch SGD under interpolation.
//!
//! Two parameter families are covered. For general smooth convex losses the
//! relevant constants are `(beta, lambda, alpha)` and the per-iteration
//! contraction of the squared parameter error is `1 - eta*(m) alpha` with
//! `eta*(m) = m / (beta + lambda (m - 1))`. For quadratic losses the full
//! curve is explicit: along an eigendirection with eigenvalue `lambda` one
//! step multiplies the expected squared error by
//!
//! ```text
//! g(lambda; m, eta) = (1 - eta lambda)^2 + eta^2 lambda (beta - lambda) / m
//! ```
//!
//! and the worst case over `[lambda_k, lambda_1]` is attained at one of the
//! two endpoints. Minimizing that worst case over `eta` gives the optimal
//! step `eta*(m)` and rate `g*(m)`, both piecewise in `m` with the branch at
//! `m = beta / (lambda_1 - lambda_k) + 1` — the critical batch size.
//!
//! Batch size is treated as a real number throughout; the branch points are
//! non-integer. Integer-only call sites round at the edge.

use crate::error::{Error, Result};
use crate::spectral::SpectralSummary;

/// Relative slack used when validating parameter orderings that are exact in
/// real arithmetic but arrive through floating-point eigensolvers.
const ORDER_SLACK: f64 = 1e-9;

/// Constants of a smooth convex interpolated problem.
///
/// `beta` bounds the smoothness of every per-sample loss, `lambda` is the
/// smoothness of the averaged loss and `alpha` its strong convexity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexRateParams {
    beta: f64,
    lambda: f64,
    alpha: f64,
}

impl ConvexRateParams {
    pub fn new(beta: f64, lambda: f64, alpha: f64) -> Result<Self> {
        let ok = beta.is_finite()
            && lambda.is_finite()
            && alpha.is_finite()
            && alpha > 0.0
            && lambda >= alpha - ORDER_SLACK * alpha
            && beta >= lambda - ORDER_SLACK * lambda;
        if !ok {
            return Err(Error::InvalidInput(format!(
                "convex constants must satisfy beta >= lambda >= alpha > 0, \
                 got beta={beta}, lambda={lambda}, alpha={alpha}"
            )));
        }
        let lambda = lambda.min(beta);
        let alpha = alpha.min(lambda);
        Ok(Self {
            beta,
            lambda,
            alpha,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Constant step size `m / (beta + lambda (m - 1))`; increasing in `m`
    /// with limit `1 / lambda`.
    pub fn step_size(&self, m: f64) -> f64 {
        assert!(m >= 1.0, "batch size must be >= 1, got {m}");
        m / (self.beta + self.lambda * (m - 1.0))
    }

    /// Per-iteration factor `1 - eta*(m) alpha` on the expected squared
    /// parameter error.
    pub fn rate(&self, m: f64) -> f64 {
        let r = 1.0 - self.step_size(m) * self.alpha;
        // beta >= lambda >= alpha keeps eta * alpha <= 1.
        assert!(
            (0.0..=1.0).contains(&r),
            "rate {r} escaped [0, 1]; constants violate beta >= lambda >= alpha"
        );
        r
    }

    /// First-order iteration-count ratio `t(1)/t(m) ~ m beta / (beta +
    /// lambda (m - 1))`, the usual reading when `lambda >> alpha`.
    pub fn speedup(&self, m: f64) -> f64 {
        assert!(m >= 1.0, "batch size must be >= 1, got {m}");
        m * self.beta / (self.beta + self.lambda * (m - 1.0))
    }

    /// Exact log-ratio `ln(1 - eta*(m) alpha) / ln(1 - eta*(1) alpha)`.
    ///
    /// Agrees with [`Self::speedup`] to first order; kept separate so both
    /// readings are available.
    pub fn speedup_exact(&self, m: f64) -> f64 {
        let r1 = self.rate(1.0);
        let rm = self.rate(m);
        rm.ln() / r1.ln()
    }

    /// Boundary `beta / lambda + 1` between the linear-scaling and
    /// saturation regimes of [`Self::speedup`].
    pub fn critical_batch(&self) -> f64 {
        self.beta / self.lambda + 1.0
    }
}

/// Eigendirection contraction factor `g(lambda; m, eta)`.
pub fn g_lambda(lambda: f64, m: f64, eta: f64, beta: f64) -> f64 {
    debug_assert!(m >= 1.0);
    debug_assert!(eta >= 0.0);
    debug_assert!((0.0..=beta).contains(&lambda));
    let a = 1.0 - eta * lambda;
    a * a + eta * eta * lambda * (beta - lambda) / m
}

/// Spectral constants of a quadratic interpolated problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticRateParams {
    beta: f64,
    lambda1: f64,
    lambda_k: f64,
    n: usize,
}

/// Critical batch size: finite when `lambda_1 > lambda_k`, otherwise the
/// linear-scaling branch applies to every batch size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticalBatch {
    Finite(f64),
    Unbounded,
}

impl CriticalBatch {
    /// Integer recommendation: `round(m*)` when finite.
    pub fn rounded(&self) -> Option<u64> {
        match self {
            CriticalBatch::Finite(m) => Some(m.round() as u64),
            CriticalBatch::Unbounded => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            CriticalBatch::Finite(m) => Some(*m),
            CriticalBatch::Unbounded => None,
        }
    }
}

/// Scaling regime of one batch size relative to the critical batch size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    LinearScaling,
    Saturation,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::LinearScaling => write!(f, "linear-scaling"),
            Regime::Saturation => write!(f, "saturation"),
        }
    }
}

/// One row of the rate calculus at a fixed batch size.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    pub m: u64,
    pub eta_star: f64,
    pub g_star: f64,
    pub eta_hat: f64,
    pub g_hat: f64,
    pub speedup: f64,
    pub efficiency: f64,
    pub regime: Regime,
}

impl QuadraticRateParams {
    /// Validates `0 < lambda_k <= lambda_1 < beta`, or the flat-spectrum
    /// boundary `lambda_k = lambda_1 <= beta`.
    pub fn new(beta: f64, lambda1: f64, lambda_k: f64, n: usize) -> Result<Self> {
        let finite = beta.is_finite() && lambda1.is_finite() && lambda_k.is_finite();
        let positive = lambda_k > 0.0 && lambda1 > 0.0 && beta > 0.0 && n >= 1;
        let ordered = lambda_k <= lambda1 * (1.0 + ORDER_SLACK);
        let below_beta = lambda1 < beta
            || (lambda1 <= beta * (1.0 + ORDER_SLACK) && lambda_k >= lambda1 * (1.0 - ORDER_SLACK));
        if !(finite && positive && ordered && below_beta) {
            return Err(Error::InvalidInput(format!(
                "spectral constants must satisfy 0 < lambda_k <= lambda_1 < beta \
                 (or lambda_k = lambda_1 <= beta), got beta={beta}, \
                 lambda1={lambda1}, lambda_k={lambda_k}, n={n}"
            )));
        }
        Ok(Self {
            beta,
            lambda1: lambda1.min(beta),
            lambda_k: lambda_k.min(lambda1.min(beta)),
            n,
        })
    }

    /// Reads the constants off a computed spectrum.
    pub fn from_summary(summary: &SpectralSummary, n: usize) -> Result<Self> {
        Self::new(summary.beta(), summary.lambda1(), summary.lambda_k(), n)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda_k(&self) -> f64 {
        self.lambda_k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Step size below which the worst eigendirection is `lambda_k`:
    /// `2m / (beta + (m-1)(lambda_1 + lambda_k))`.
    pub fn eta0(&self, m: f64) -> f64 {
        assert!(m >= 1.0, "batch size must be >= 1, got {m}");
        2.0 * m / (self.beta + (m - 1.0) * (self.lambda1 + self.lambda_k))
    }

    /// Convergence boundary `2m / (beta + (m-1) lambda_1)`; the expected
    /// error diverges for any step at or beyond it.
    pub fn eta1(&self, m: f64) -> f64 {
        assert!(m >= 1.0, "batch size must be >= 1, got {m}");
        2.0 * m / (self.beta + (m - 1.0) * self.lambda1)
    }

    /// Worst contraction factor over the whole spectrum interval:
    /// `g(lambda_k)` for `eta <= eta0(m)`, `g(lambda_1)` beyond.
    pub fn g_max(&self, m: f64, eta: f64) -> Result<f64> {
        assert!(m >= 1.0, "batch size must be >= 1, got {m}");
        let eta1 = self.eta1(m);
        if !(eta > 0.0 && eta < eta1) {
            return Err(Error::StepSizeOutOfRange { eta, limit: eta1 });
        }
        let lambda = if eta <= self.eta0(m) {
            self.lambda_k
        } else {
            self.lambda1
        };
        let g = g_lambda(lambda, m, eta, self.beta);
        debug_assert!(g < 1.0, "g_max = {g} >= 1 inside the convergent range");
        Ok(g)
    }

    /// Batch size `beta / (lambda_1 - lambda_k) + 1` where the optimal step
    /// switches branch. `None` for a flat spectrum.
    pub fn branch_point(&self) -> Option<f64> {
        if self.lambda1 > self.lambda_k {
            Some(self.beta / (self.lambda1 - self.lambda_k) + 1.0)
        } else {
            None
        }
    }

    fn in_first_branch(&self, m: f64) -> bool {
        match self.branch_point() {
            Some(b) => m <= b,
            None => true,
        }
    }

    /// Optimal constant step size for batch size `m`.
    pub fn optimal_step(&self, m: f64) -> f64 {
        assert!(m >= 1.0, "batch size must be >= 1, got {m}");
        if self.in_first_branch(m) {
            m / (self.beta + (m - 1.0) * self.lambda_k)
        } else {
            self.eta0(m)
        }
    }

    /// Contraction factor at the optimal step: `g*(m) = g(m, eta*(m))`.
    pub fn optimal_rate(&self, m: f64) -> f64 {
        assert!(m >= 1.0, "batch size must be >= 1, got {m}");
        if self.in_first_branch(m) {
            1.0 - m * self.lambda_k / (self.beta + (m - 1.0) * self.lambda_k)
        } else {
            let den = self.beta + (m - 1.0) * (self.lambda1 + self.lambda_k);
            1.0 - 4.0 * m * (m - 1.0) * self.lambda1 * self.lambda_k / (den * den)
        }
    }

    /// Branch point of the near-optimal step. `None` means the first branch
    /// applies to every `m` (flat spectrum sitting exactly at `beta/n`).
    fn hat_branch_point(&self) -> Result<Option<f64>> {
        let beta_n = self.beta / self.n as f64;
        if self.lambda1 <= beta_n {
            if self.lambda_k >= self.lambda1 * (1.0 - ORDER_SLACK) {
                return Ok(None);
            }
            return Err(Error::InvalidInput(format!(
                "lambda_1 = {} must exceed beta/n = {beta_n} for the \
                 spectrum-tail-free step size",
                self.lambda1
            )));
        }
        Ok(Some(self.beta / (self.lambda1 - beta_n) + 1.0))
    }

    fn in_first_hat_branch(&self, m: f64) -> Result<bool> {
        Ok(match self.hat_branch_point()? {
            Some(b) => m <= b,
            None => true,
        })
    }

    /// Whether `lambda_k / beta <= 1/n` holds, the assumption under which
    /// [`Self::hat_rate`] upper-bounds the realized contraction.
    pub fn hat_assumption_holds(&self) -> bool {
        self.lambda_k / self.beta <= 1.0 / self.n as f64
    }

    /// Near-optimal step size that avoids `lambda_k` entirely, substituting
    /// the bound `beta / n` for it.
    pub fn hat_step(&self, m: f64) -> Result<f64> {
        assert!(m >= 1.0, "batch size must be >= 1, got {m}");
        let n = self.n as f64;
        if self.in_first_hat_branch(m)? {
            Ok(m / (self.beta * (1.0 + (m - 1.0) / n)))
        } else {
            Ok(2.0 * m / (self.beta + (m - 1.0) * (self.lambda1 + self.beta / n)))
        }
    }

    /// Guaranteed contraction factor at the near-optimal step, assuming
    /// `lambda_k / beta <= 1/n`.
    pub fn hat_rate(&self, m: f64) -> Result<f64> {
        assert!(m >= 1.0, "batch size must be >= 1, got {m}");
        let n = self.n as f64;
        if self.in_first_hat_branch(m)? {
            Ok(1.0 - m * self.lambda_k / (self.beta * (1.0 + (m - 1.0) / n)))
        } else {
            let den = self.beta + (m - 1.0) * (self.lambda1 + self.beta / n);
            Ok(1.0 - 4.0 * m * (m - 1.0) * self.lambda1 * self.lambda_k / (den * den))
        }
    }

    /// Iteration-count speedup `s(m) = t(1) / t(m)`; satisfies
    /// `g*(m) = 1 - (lambda_k / beta) s(m)`.
    pub fn speedup(&self, m: f64) -> f64 {
        assert!(m >= 1.0, "batch size must be >= 1, got {m}");
        let b = self.beta;
        if self.in_first_branch(m) {
            m / (1.0 + (m - 1.0) * self.lambda_k / b)
        } else {
            let den = 1.0 + (m - 1.0) * (self.lambda1 + self.lambda_k) / b;
            4.0 * m * (m - 1.0) * self.lambda1 / (b * den * den)
        }
    }

    /// Exact large-`m` limit of the speedup, `4 lambda_1 beta /
    /// (lambda_1 + lambda_k)^2`; close to `4 beta / lambda_1` only when
    /// `lambda_k << lambda_1`.
    pub fn speedup_limit(&self) -> f64 {
        let s = self.lambda1 + self.lambda_k;
        4.0 * self.lambda1 * self.beta / (s * s)
    }

    /// `m* = beta / (lambda_1 - lambda_k) + 1`, or unbounded for a flat
    /// spectrum where every batch size scales linearly.
    pub fn critical_batch(&self) -> CriticalBatch {
        match self.branch_point() {
            Some(b) => CriticalBatch::Finite(b),
            None => CriticalBatch::Unbounded,
        }
    }

    /// Error contraction per gradient evaluation: `g*(m)^(1/m)`.
    pub fn efficiency(&self, m: f64) -> f64 {
        (self.optimal_rate(m).ln() / m).exp()
    }

    /// `g_hat(m)^(1/m)`, the same measure under the near-optimal step.
    pub fn hat_efficiency(&self, m: f64) -> Result<f64> {
        Ok((self.hat_rate(m)?.ln() / m).exp())
    }

    /// Integer batch size minimizing `g*(m)^(1/m)` over `1..=m_max` by
    /// exhaustive search; ties break toward smaller `m`.
    pub fn best_batch(&self, m_max: u64) -> u64 {
        assert!(m_max >= 1);
        let mut best = (1u64, self.efficiency(1.0));
        for m in 2..=m_max {
            let e = self.efficiency(m as f64);
            if e < best.1 {
                best = (m, e);
            }
        }
        best.0
    }

    /// Same search for `g_hat(m)^(1/m)`.
    pub fn best_batch_hat(&self, m_max: u64) -> Result<u64> {
        assert!(m_max >= 1);
        let mut best = (1u64, self.hat_efficiency(1.0)?);
        for m in 2..=m_max {
            let e = self.hat_efficiency(m as f64)?;
            if e < best.1 {
                best = (m, e);
            }
        }
        Ok(best.0)
    }

    /// Assembles one [`RatePoint`] per requested batch size.
    pub fn rate_table(&self, batch_sizes: &[u64]) -> Result<Vec<RatePoint>> {
        let critical = self.critical_batch();
        batch_sizes
            .iter()
            .map(|&m| {
                if m == 0 {
                    return Err(Error::InvalidInput("batch size 0 in grid".into()));
                }
                let mf = m as f64;
                let regime = match critical {
                    CriticalBatch::Finite(b) if mf > b => Regime::Saturation,
                    _ => Regime::LinearScaling,
                };
                Ok(RatePoint {
                    m,
                    eta_star: self.optimal_step(mf),
                    g_star: self.optimal_rate(mf),
                    eta_hat: self.hat_step(mf)?,
                    g_hat: self.hat_rate(mf)?,
                    speedup: self.speedup(mf),
                    efficiency: self.efficiency(mf),
                    regime,
                })
            })
            .collect()
    }
}

/// Iterations needed for a factor-`g` decay from `l0` down to `epsilon`:
/// `ceil(ln(epsilon / l0) / ln(g))`, at least 1.
pub fn iterations_to_target(g: f64, l0: f64, epsilon: f64) -> Result<u64> {
    if !(g > 0.0 && g < 1.0) {
        return Err(Error::NonConvergentRate(g));
    }
    if !(epsilon > 0.0 && epsilon < l0) {
        return Err(Error::InvalidInput(format!(
            "target {epsilon} must lie in (0, initial bound {l0})"
        )));
    }
    let t = ((epsilon / l0).ln() / g.ln()).ceil();
    Ok((t as u64).max(1))
}
