//! Constant-step mini-batch SGD simulation.
//!
//! Each iteration draws `m` sample indices i.i.d. uniformly *with
//! replacement* from a counter-based generator keyed by `(seed, iteration,
//! slot)`, so a run is a pure function of `(problem, config)` — independent
//! runs reproduce bit-identically no matter how they are scheduled.
//!
//! Quadratic runs apply `w <- w - (eta/m) sum_j r_j x_j` with residuals
//! `r_j = x_j . w - y_j`, which is the subsample-covariance update on the
//! error `delta = w - w*` written through per-sample half-squared-loss
//! gradients. The reported loss is `delta^T H delta` — twice the mean
//! half-squared loss; both conventions are kept deliberately.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::problems::QuadraticProblem;
use crate::rates::ConvexRateParams;
use crate::rng;

/// How the step size is chosen for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy {
    /// Spectrum-optimal step for the configured batch size.
    Optimal,
    /// Near-optimal step that does not depend on the smallest eigenvalue.
    Hat,
    /// A multiple of the near-optimal step (e.g. 2.0 to probe divergence).
    HatMultiple(f64),
    /// A fixed explicit value.
    Explicit(f64),
}

/// Where the initial error `delta_0 = w_0 - w*` comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialError {
    /// Seeded standard normal projected onto `Range(H)` (quadratic runs;
    /// convex runs have no spectral structure and use the raw draw).
    SeededRangeNormal,
    /// Seeded standard normal, unprojected.
    SeededNormal,
    /// Caller-supplied error vector.
    Explicit(DVector<f64>),
}

/// Run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SGDConfig {
    pub batch_size: usize,
    pub step: StepPolicy,
    pub max_iterations: u64,
    pub target_loss: Option<f64>,
    pub seed: u64,
    /// Record every `trace_stride`-th iteration (the final one always).
    pub trace_stride: u64,
    /// A recorded loss above `divergence_factor * initial_loss` flags the
    /// run as diverged.
    pub divergence_factor: f64,
    /// Replace the sampled subsample covariance by the full `H` (plain
    /// gradient descent); epochs then count one per iteration.
    pub full_gradient: bool,
    pub initial_error: InitialError,
}

impl SGDConfig {
    pub fn new(batch_size: usize, step: StepPolicy) -> Self {
        Self {
            batch_size,
            step,
            max_iterations: 1_000,
            target_loss: None,
            seed: 0,
            trace_stride: 1,
            divergence_factor: 1e12,
            full_gradient: false,
            initial_error: InitialError::SeededRangeNormal,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: u64) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_target_loss(mut self, target: f64) -> Self {
        self.target_loss = Some(target);
        self
    }

    pub fn with_trace_stride(mut self, stride: u64) -> Self {
        self.trace_stride = stride;
        self
    }

    pub fn with_initial_error(mut self, initial: InitialError) -> Self {
        self.initial_error = initial;
        self
    }

    pub fn with_full_gradient(mut self, on: bool) -> Self {
        self.full_gradient = on;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be >= 1".into()));
        }
        if self.trace_stride == 0 {
            return Err(Error::InvalidInput("trace stride must be >= 1".into()));
        }
        if !(self.divergence_factor.is_finite() && self.divergence_factor > 1.0) {
            return Err(Error::InvalidInput(format!(
                "divergence factor must exceed 1, got {}",
                self.divergence_factor
            )));
        }
        if let StepPolicy::Explicit(eta) = self.step {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "explicit step size must be positive, got {eta}"
                )));
            }
        }
        if let StepPolicy::HatMultiple(c) = self.step {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "step multiplier must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// One recorded point of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: u64,
    /// `iteration * m / n` (or `iteration` in full-gradient mode).
    pub epoch: f64,
    pub loss: f64,
    /// `||P delta||^2`; absent for general convex runs.
    pub range_error: Option<f64>,
    /// `||Q delta||^2`; conserved along quadratic runs.
    pub null_error: Option<f64>,
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    ReachedTarget,
    ExhaustedBudget,
    Diverged,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunStatus::ReachedTarget => write!(f, "reached-target"),
            RunStatus::ExhaustedBudget => write!(f, "exhausted-budget"),
            RunStatus::Diverged => write!(f, "diverged"),
        }
    }
}

/// Full record of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub status: RunStatus,
    pub final_parameters: DVector<f64>,
    pub step_size: f64,
    pub batch_size: usize,
    pub seed: u64,
}

/// Per-sample view of a smooth convex interpolated objective.
pub trait ConvexObjective: Sync {
    fn num_samples(&self) -> usize;

    fn dim(&self) -> usize;

    fn minimizer(&self) -> &DVector<f64>;

    /// Constants `(beta, lambda, alpha)` of the family.
    fn constants(&self) -> ConvexRateParams;

    fn sample_loss(&self, i: usize, w: &[f64]) -> f64;

    /// Adds the gradient of sample `i` at `w` into `acc`; returns `false`
    /// when a non-finite value shows up.
    fn accumulate_sample_grad(&self, i: usize, w: &[f64], acc: &mut [f64]) -> bool;

    /// Gradient of one sample as an owned vector.
    fn sample_grad(&self, i: usize, w: &DVector<f64>) -> DVector<f64> {
        let mut acc = vec![0.0; self.dim()];
        self.accumulate_sample_grad(i, w.as_slice(), &mut acc);
        DVector::from_vec(acc)
    }

    /// Averaged loss over all samples.
    fn total_loss(&self, w: &[f64]) -> f64 {
        (0..self.num_samples())
            .map(|i| self.sample_loss(i, w))
            .sum::<f64>()
            / self.num_samples() as f64
    }
}

/// Internal simulation surface shared by the quadratic and convex runners.
trait Simulated {
    fn num_samples(&self) -> usize;
    fn dim(&self) -> usize;
    fn minimizer(&self) -> &DVector<f64>;
    fn loss(&self, w: &DVector<f64>) -> f64;
    fn errors(&self, w: &DVector<f64>) -> (Option<f64>, Option<f64>);
    fn accumulate(&self, i: usize, w: &[f64], acc: &mut [f64]) -> bool;
    /// Writes the *mean* gradient over all samples into `acc`.
    fn mean_gradient(&self, w: &DVector<f64>, acc: &mut [f64]) -> bool;
    fn initial_error(&self, kind: &InitialError, seed: u64) -> Result<DVector<f64>>;
    fn resolve_step(&self, config: &SGDConfig) -> Result<f64>;
}

struct QuadraticSim<'a>(&'a QuadraticProblem);

impl Simulated for QuadraticSim<'_> {
    fn num_samples(&self) -> usize {
        self.0.num_samples()
    }

    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn minimizer(&self) -> &DVector<f64> {
        self.0.minimizer_vec()
    }

    fn loss(&self, w: &DVector<f64>) -> f64 {
        self.0.loss(w)
    }

    fn errors(&self, w: &DVector<f64>) -> (Option<f64>, Option<f64>) {
        let delta = w - self.0.minimizer_vec();
        let range = self.0.spectral().range_norm_sq(delta.as_slice());
        let null = (delta.norm_squared() - range).max(0.0);
        (Some(range), Some(null))
    }

    fn accumulate(&self, i: usize, w: &[f64], acc: &mut [f64]) -> bool {
        self.0.accumulate_sample_grad(i, w, acc)
    }

    fn mean_gradient(&self, w: &DVector<f64>, acc: &mut [f64]) -> bool {
        // H delta exactly: the full-gradient update replaces H_m by H.
        let delta = w - self.0.minimizer_vec();
        let g = self.0.covariance().matrix() * delta;
        let ok = g.iter().all(|v| v.is_finite());
        acc.copy_from_slice(g.as_slice());
        ok
    }

    fn initial_error(&self, kind: &InitialError, seed: u64) -> Result<DVector<f64>> {
        match kind {
            InitialError::SeededRangeNormal => {
                let raw = DVector::from_vec(rng::normal_vector(seed, self.dim()));
                self.0.spectral().project_range(&raw)
            }
            InitialError::SeededNormal => {
                Ok(DVector::from_vec(rng::normal_vector(seed, self.dim())))
            }
            InitialError::Explicit(v) => {
                if v.len() != self.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim(),
                        actual: v.len(),
                    });
                }
                Ok(v.clone())
            }
        }
    }

    fn resolve_step(&self, config: &SGDConfig) -> Result<f64> {
        let m = config.batch_size as f64;
        match config.step {
            StepPolicy::Explicit(eta) => Ok(eta),
            StepPolicy::Optimal => Ok(self.0.rate_params()?.optimal_step(m)),
            StepPolicy::Hat => self.0.rate_params()?.hat_step(m),
            StepPolicy::HatMultiple(c) => Ok(c * self.0.rate_params()?.hat_step(m)?),
        }
    }
}

struct ConvexSim<'a, P: ConvexObjective + ?Sized>(&'a P);

impl<P: ConvexObjective + ?Sized> Simulated for ConvexSim<'_, P> {
    fn num_samples(&self) -> usize {
        self.0.num_samples()
    }

    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn minimizer(&self) -> &DVector<f64> {
        self.0.minimizer()
    }

    fn loss(&self, w: &DVector<f64>) -> f64 {
        self.0.total_loss(w.as_slice())
    }

    fn errors(&self, _w: &DVector<f64>) -> (Option<f64>, Option<f64>) {
        (None, None)
    }

    fn accumulate(&self, i: usize, w: &[f64], acc: &mut [f64]) -> bool {
        self.0.accumulate_sample_grad(i, w, acc)
    }

    fn mean_gradient(&self, w: &DVector<f64>, acc: &mut [f64]) -> bool {
        acc.fill(0.0);
        for i in 0..self.num_samples() {
            if !self.0.accumulate_sample_grad(i, w.as_slice(), acc) {
                return false;
            }
        }
        let inv = 1.0 / self.num_samples() as f64;
        for v in acc.iter_mut() {
            *v *= inv;
        }
        true
    }

    fn initial_error(&self, kind: &InitialError, seed: u64) -> Result<DVector<f64>> {
        match kind {
            // No spectral structure to project onto.
            InitialError::SeededRangeNormal | InitialError::SeededNormal => {
                Ok(DVector::from_vec(rng::normal_vector(seed, self.dim())))
            }
            InitialError::Explicit(v) => {
                if v.len() != self.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim(),
                        actual: v.len(),
                    });
                }
                Ok(v.clone())
            }
        }
    }

    fn resolve_step(&self, config: &SGDConfig) -> Result<f64> {
        let m = config.batch_size as f64;
        match config.step {
            StepPolicy::Explicit(eta) => Ok(eta),
            StepPolicy::Optimal => Ok(self.0.constants().step_size(m)),
            StepPolicy::Hat | StepPolicy::HatMultiple(_) => Err(Error::InvalidInput(
                "the near-optimal step policy needs quadratic spectral structure".into(),
            )),
        }
    }
}

/// Runs mini-batch SGD on a quadratic problem, tracing loss and the
/// range/null split of the error.
pub fn sgd_run_quadratic(problem: &QuadraticProblem, config: &SGDConfig) -> Result<Trace> {
    run(&QuadraticSim(problem), config)
}

/// Runs mini-batch SGD on a general smooth convex interpolated objective.
pub fn sgd_run_convex<P: ConvexObjective + ?Sized>(
    problem: &P,
    config: &SGDConfig,
) -> Result<Trace> {
    run(&ConvexSim(problem), config)
}

fn run<S: Simulated>(sim: &S, config: &SGDConfig) -> Result<Trace> {
    config.validate()?;
    let n = sim.num_samples();
    let d = sim.dim();
    let m = config.batch_size;
    let eta = sim.resolve_step(config)?;
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidInput(format!(
            "resolved step size {eta} is not positive"
        )));
    }

    let delta0 = sim.initial_error(&config.initial_error, rng::derive_seed(config.seed, 0xD0))?;
    let mut w = sim.minimizer() + delta0;
    let mut grad = vec![0.0; d];

    let epoch_at = |t: u64| {
        if config.full_gradient {
            t as f64
        } else {
            (t * m as u64) as f64 / n as f64
        }
    };
    let record = |records: &mut Vec<TraceRecord>, t: u64, w: &DVector<f64>, loss: f64| {
        let (range_error, null_error) = sim.errors(w);
        records.push(TraceRecord {
            iteration: t,
            epoch: epoch_at(t),
            loss,
            range_error,
            null_error,
        });
    };

    let initial_loss = sim.loss(&w);
    let divergence_ceiling = config.divergence_factor * initial_loss.max(f64::MIN_POSITIVE);
    let mut records = Vec::new();
    record(&mut records, 0, &w, initial_loss);

    let mut status = RunStatus::ExhaustedBudget;
    if config.target_loss.is_some_and(|eps| initial_loss <= eps) {
        status = RunStatus::ReachedTarget;
    } else if !initial_loss.is_finite() {
        status = RunStatus::Diverged;
    } else {
        for t in 0..config.max_iterations {
            let finite = if config.full_gradient {
                sim.mean_gradient(&w, &mut grad)
            } else {
                grad.fill(0.0);
                let mut ok = true;
                for slot in 0..m {
                    let i = rng::sample_index(config.seed, t, slot as u64, n);
                    ok &= sim.accumulate(i, w.as_slice(), &mut grad);
                }
                ok
            };
            if !finite {
                // Record the pre-update state and stop; the trace is partial.
                record(&mut records, t, &w, sim.loss(&w));
                status = RunStatus::Diverged;
                break;
            }
            let scale = if config.full_gradient {
                eta
            } else {
                eta / m as f64
            };
            {
                let ws = w.as_mut_slice();
                for (wi, gi) in ws.iter_mut().zip(&grad) {
                    *wi -= scale * gi;
                }
            }

            let done = t + 1;
            if done % config.trace_stride == 0 || done == config.max_iterations {
                let loss = sim.loss(&w);
                record(&mut records, done, &w, loss);
                if !loss.is_finite() || loss > divergence_ceiling {
                    status = RunStatus::Diverged;
                    break;
                }
                if config.target_loss.is_some_and(|eps| loss <= eps) {
                    status = RunStatus::ReachedTarget;
                    break;
                }
            }
        }
    }

    Ok(Trace {
        records,
        status,
        final_parameters: w,
        step_size: eta,
        batch_size: m,
        seed: config.seed,
    })
}

/// Runs one configuration over several quadratic problems that share the
/// same features (independent outputs of one dataset), with shared sampled
/// batches, and sums the per-output losses and errors.
pub fn sgd_run_quadratic_multi(problems: &[QuadraticProblem], config: &SGDConfig) -> Result<Trace> {
    let first = problems.first().ok_or(Error::EmptyInput("problem list"))?;
    if problems.len() == 1 {
        return sgd_run_quadratic(first, config);
    }
    for p in &problems[1..] {
        if p.num_samples() != first.num_samples() || p.dim() != first.dim() {
            return Err(Error::InvalidInput(
                "multi-output problems must share the feature matrix".into(),
            ));
        }
    }
    let inner = SGDConfig {
        target_loss: None,
        ..config.clone()
    };
    let traces: Vec<Trace> = problems
        .iter()
        .map(|p| sgd_run_quadratic(p, &inner))
        .collect::<Result<_>>()?;

    let shortest = traces
        .iter()
        .map(|t| t.records.len())
        .min()
        .expect("non-empty");
    let mut records = Vec::with_capacity(shortest);
    for idx in 0..shortest {
        let base = &traces[0].records[idx];
        let mut merged = base.clone();
        for t in &traces[1..] {
            let r = &t.records[idx];
            merged.loss += r.loss;
            merged.range_error = merged.range_error.zip(r.range_error).map(|(a, b)| a + b);
            merged.null_error = merged.null_error.zip(r.null_error).map(|(a, b)| a + b);
        }
        records.push(merged);
    }

    let mut status = if traces.iter().any(|t| t.status == RunStatus::Diverged) {
        RunStatus::Diverged
    } else {
        RunStatus::ExhaustedBudget
    };
    if status != RunStatus::Diverged {
        if let Some(eps) = config.target_loss {
            if let Some(pos) = records.iter().position(|r| r.loss <= eps) {
                records.truncate(pos + 1);
                status = RunStatus::ReachedTarget;
            }
        }
    }

    let dim = first.dim();
    let mut stacked = DVector::zeros(dim * traces.len());
    for (c, t) in traces.iter().enumerate() {
        stacked
            .rows_mut(c * dim, dim)
            .copy_from(&t.final_parameters);
    }
    Ok(Trace {
        records,
        status,
        final_parameters: stacked,
        step_size: traces[0].step_size,
        batch_size: config.batch_size,
        seed: config.seed,
    })
}

/// Aggregated loss statistics at one recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanLossPoint {
    pub iteration: u64,
    pub epoch: f64,
    pub mean_loss: f64,
    pub std_error: f64,
}

/// Pointwise mean and standard error of the loss across traces recorded on
/// the same iteration grid.
pub fn mean_loss_curve(traces: &[Trace]) -> Result<Vec<MeanLossPoint>> {
    if traces.is_empty() {
        return Err(Error::EmptyInput("trace set"));
    }
    let grid: Vec<u64> = traces[0].records.iter().map(|r| r.iteration).collect();
    for t in traces {
        let this: Vec<u64> = t.records.iter().map(|r| r.iteration).collect();
        if this != grid {
            return Err(Error::InvalidInput(
                "traces do not share a recording grid; run them with identical \
                 stride and horizon"
                    .into(),
            ));
        }
    }
    let trials = traces.len() as f64;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(idx, &iteration)| {
            let mean = traces.iter().map(|t| t.records[idx].loss).sum::<f64>() / trials;
            let var = if traces.len() > 1 {
                traces
                    .iter()
                    .map(|t| (t.records[idx].loss - mean).powi(2))
                    .sum::<f64>()
                    / (trials - 1.0)
            } else {
                0.0
            };
            MeanLossPoint {
                iteration,
                epoch: traces[0].records[idx].epoch,
                mean_loss: mean,
                std_error: (var / trials).sqrt(),
            }
        })
        .collect())
}

/// Smallest recorded iteration at which the mean loss across traces drops
/// to `epsilon`; `None` when the budget ran out first.
pub fn empirical_iterations(traces: &[Trace], epsilon: f64) -> Result<Option<u64>> {
    let curve = mean_loss_curve(traces)?;
    Ok(curve
        .iter()
        .find(|p| p.mean_loss <= epsilon)
        .map(|p| p.iteration))
}
