//! Problem instance construction.
//!
//! Every builder returns a [`QuadraticProblem`] (or a smooth non-quadratic
//! wrapper around one) that provably interpolates: the stored minimizer
//! drives every residual to zero. Construction is pure given the inputs and
//! seed, and the resulting instances are immutable.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::engine::ConvexObjective;
use crate::error::{Error, Result};
use crate::rates::{ConvexRateParams, QuadraticRateParams};
use crate::rng;
use crate::spectral::{covariance, Covariance, DataMatrix, SpectralSummary, DEFAULT_RANK_TOLERANCE};

/// Relative tolerance of the interpolation residual check.
const INTERPOLATION_TOLERANCE: f64 = 1e-10;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// An interpolated least-squares instance with its cached spectral data.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    data: DataMatrix,
    targets: DVector<f64>,
    minimizer: DVector<f64>,
    covariance: Covariance,
    spectral: SpectralSummary,
    convex_constants: ConvexRateParams,
}

impl QuadraticProblem {
    /// Assembles a problem and verifies the interpolation property
    /// `|x_i . w* - y_i| <= 1e-10 (1 + |y_i|)` for every sample.
    pub fn new(data: DataMatrix, targets: DVector<f64>, minimizer: DVector<f64>) -> Result<Self> {
        Self::with_rank_tolerance(data, targets, minimizer, DEFAULT_RANK_TOLERANCE)
    }

    pub fn with_rank_tolerance(
        data: DataMatrix,
        targets: DVector<f64>,
        minimizer: DVector<f64>,
        rank_tolerance: f64,
    ) -> Result<Self> {
        if targets.len() != data.num_samples() {
            return Err(Error::DimensionMismatch {
                expected: data.num_samples(),
                actual: targets.len(),
            });
        }
        if minimizer.len() != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                actual: minimizer.len(),
            });
        }
        for (i, row) in data.rows().enumerate() {
            let residual = dot(row, minimizer.as_slice()) - targets[i];
            if residual.abs() > INTERPOLATION_TOLERANCE * (1.0 + targets[i].abs()) {
                return Err(Error::InvalidInput(format!(
                    "minimizer does not interpolate sample {i}: residual {residual:e}"
                )));
            }
        }
        let h = covariance(&data);
        let spectral = SpectralSummary::compute(
            &h,
            data.max_row_norm_sq(),
            data.num_samples(),
            rank_tolerance,
        )?;
        let convex_constants =
            ConvexRateParams::new(spectral.beta(), spectral.lambda1(), spectral.lambda_k())?;
        Ok(Self {
            data,
            targets,
            minimizer,
            covariance: h,
            spectral,
            convex_constants,
        })
    }

    pub fn data(&self) -> &DataMatrix {
        &self.data
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn minimizer_vec(&self) -> &DVector<f64> {
        &self.minimizer
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    pub fn spectral(&self) -> &SpectralSummary {
        &self.spectral
    }

    pub fn num_samples(&self) -> usize {
        self.data.num_samples()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn beta(&self) -> f64 {
        self.spectral.beta()
    }

    /// Spectral rate constants `(beta, lambda_1, lambda_k, n)`.
    pub fn rate_params(&self) -> Result<QuadraticRateParams> {
        QuadraticRateParams::from_summary(&self.spectral, self.num_samples())
    }

    /// Quadratic loss `(w - w*)^T H (w - w*)`.
    pub fn loss(&self, w: &DVector<f64>) -> f64 {
        let delta = w - &self.minimizer;
        self.covariance.quadratic_form(&delta)
    }

    /// Loss evaluated directly at an error vector `delta = w - w*`.
    pub fn loss_at_error(&self, delta: &DVector<f64>) -> f64 {
        self.covariance.quadratic_form(delta)
    }

    /// Plain-text serialization: `n d beta`, then one line per sample with
    /// `d` features and the target, then the minimizer.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {}",
            self.num_samples(),
            self.dim(),
            self.beta()
        );
        for (i, row) in self.data.rows().enumerate() {
            for v in row {
                let _ = write!(out, "{v} ");
            }
            let _ = writeln!(out, "{}", self.targets[i]);
        }
        let mut first = true;
        for v in self.minimizer.iter() {
            if !first {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
            first = false;
        }
        out.push('\n');
        out
    }

    /// Inverse of [`Self::to_text`]; validates shape and interpolation.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or(Error::EmptyInput("problem text header"))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::InvalidInput(format!(
                "header must read 'n d beta', got '{header}'"
            )));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad {what} '{s}': {e}")))
        };
        let n = parse(parts[0], "sample count")? as usize;
        let d = parse(parts[1], "dimension")? as usize;
        let beta = parse(parts[2], "beta")?;

        let mut rows = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for i in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| Error::InvalidInput(format!("missing sample line {i}")))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|s| parse(s, "sample value"))
                .collect::<Result<_>>()?;
            if vals.len() != d + 1 {
                return Err(Error::DimensionMismatch {
                    expected: d + 1,
                    actual: vals.len(),
                });
            }
            rows.push(vals[..d].to_vec());
            targets.push(vals[d]);
        }
        let w_line = lines
            .next()
            .ok_or(Error::EmptyInput("minimizer line in problem text"))?;
        let minimizer: Vec<f64> = w_line
            .split_whitespace()
            .map(|s| parse(s, "minimizer value"))
            .collect::<Result<_>>()?;

        let data = DataMatrix::from_rows(&rows)?;
        let problem = Self::new(
            data,
            DVector::from_vec(targets),
            DVector::from_vec(minimizer),
        )?;
        if (problem.beta() - beta).abs() > 1e-9 * (1.0 + beta.abs()) {
            return Err(Error::InvalidInput(format!(
                "header beta {beta} disagrees with rows (computed {})",
                problem.beta()
            )));
        }
        Ok(problem)
    }
}

/// Flat-spectrum design: `n` orthogonal feature vectors of equal squared
/// norm `beta` in `d = n` dimensions, so every covariance eigenvalue is
/// exactly `beta / n` and the worst-case contraction bound is met with
/// equality.
pub fn tightness_instance(n: usize, beta: f64, seed: u64) -> Result<QuadraticProblem> {
    if n == 0 {
        return Err(Error::InvalidInput("need n >= 1".into()));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidInput(format!("beta must be > 0, got {beta}")));
    }
    let scale = beta.sqrt();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        entries[i * n + i] = scale;
    }
    let data = DataMatrix::new(n, n, entries)?;
    let minimizer = DVector::from_vec(rng::normal_vector(rng::derive_seed(seed, 1), n));
    let targets = DVector::from_iterator(n, (0..n).map(|i| dot(data.row(i), minimizer.as_slice())));
    QuadraticProblem::new(data, targets, minimizer)
}

/// How feature row norms are laid out by [`random_interpolated_quadratic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectrumProfile {
    /// Row norms drawn uniformly from `[min, max]`.
    UniformRowNorms { min: f64, max: f64 },
    /// Row norms interpolated geometrically from `first` down to `last`.
    DecayingRowNorms { first: f64, last: f64 },
}

impl SpectrumProfile {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = match self {
            SpectrumProfile::UniformRowNorms { min, max } => (*min, *max),
            SpectrumProfile::DecayingRowNorms { first, last } => (*last, *first),
        };
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidInput(format!(
                "degenerate spectrum profile {self:?}; row norms must be positive"
            )));
        }
        Ok(())
    }
}

/// Seeded random interpolated quadratic: random directions with profiled
/// norms, a Gaussian minimizer, and targets constructed from it.
pub fn random_interpolated_quadratic(
    n: usize,
    d: usize,
    profile: SpectrumProfile,
    seed: u64,
) -> Result<QuadraticProblem> {
    profile.validate()?;
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput("need n >= 1 and d >= 1".into()));
    }
    let mut r = rng::chacha(rng::derive_seed(seed, 2));
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = rng::normal_vector(rng::derive_seed(seed, 100 + i as u64), d);
        let norm = dot(&row, &row).sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateSpectrum(format!(
                "sample {i} drew a zero row"
            )));
        }
        let target_norm = match profile {
            SpectrumProfile::UniformRowNorms { min, max } => {
                if max > min {
                    rng::uniform_in(&mut r, min, max)
                } else {
                    min
                }
            }
            SpectrumProfile::DecayingRowNorms { first, last } => {
                if n == 1 {
                    first
                } else {
                    first * (last / first).powf(i as f64 / (n - 1) as f64)
                }
            }
        };
        for v in &mut row {
            *v *= target_norm / norm;
        }
        rows.push(row);
    }
    let data = DataMatrix::from_rows(&rows)?;
    let minimizer = DVector::from_vec(rng::normal_vector(rng::derive_seed(seed, 3), d));
    let targets = DVector::from_iterator(n, (0..n).map(|i| dot(data.row(i), minimizer.as_slice())));
    QuadraticProblem::new(data, targets, minimizer)
}

/// Interpolated least-squares problem straight from a design matrix: the
/// minimizer is the least-norm solution of `X w = y`, so construction fails
/// when the labels are not interpolable.
pub fn linear_problem(features: &DataMatrix, targets: &DVector<f64>) -> Result<QuadraticProblem> {
    if targets.len() != features.num_samples() {
        return Err(Error::DimensionMismatch {
            expected: features.num_samples(),
            actual: targets.len(),
        });
    }
    let x = features.to_dmatrix();
    let svd = x.svd(true, true);
    let w_star = svd
        .solve(targets, DEFAULT_RANK_TOLERANCE * svd.singular_values.max())
        .map_err(|e| Error::InvalidInput(format!("least-squares solve failed: {e}")))?;
    QuadraticProblem::new(
        features.clone(),
        targets.clone(),
        DVector::from_column_slice(w_star.as_slice()),
    )
    .map_err(|e| Error::InvalidInput(format!("labels are not interpolable: {e}")))
}

/// Kernel family for [`kernel_problem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Gaussian,
    Laplace,
}

/// Positive definite kernel with its bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidInput(format!(
                "kernel bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(Self { family, bandwidth })
    }

    fn evaluate(&self, a: &[f64], b: &[f64]) -> f64 {
        let dist_sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        match self.family {
            KernelFamily::Gaussian => (-dist_sq / (2.0 * self.bandwidth * self.bandwidth)).exp(),
            KernelFamily::Laplace => (-dist_sq.sqrt() / self.bandwidth).exp(),
        }
    }
}

/// Output of [`kernel_problem`]: one interpolated quadratic per label
/// column, plus any numerical warnings raised along the way.
#[derive(Debug, Clone)]
pub struct KernelProblems {
    pub problems: Vec<QuadraticProblem>,
    pub warnings: Vec<String>,
}

/// Dual-space kernel regression instance.
///
/// Builds the kernel matrix `K`, takes its symmetric square root `S` as the
/// feature matrix (so `H = K / n` eigenvalue-for-eigenvalue and
/// `||x_i||^2 = K_ii`, hence `beta = max_i K_ii`), and solves for the
/// interpolating dual coefficients per label column. Multi-column labels
/// become independent problems sharing the same features; running them with
/// a common seed shares the sampled batches.
pub fn kernel_problem(
    points: &DataMatrix,
    labels: &DMatrix<f64>,
    spec: &KernelSpec,
) -> Result<KernelProblems> {
    let n = points.num_samples();
    if labels.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: labels.nrows(),
        });
    }
    if labels.ncols() == 0 {
        return Err(Error::EmptyInput("label columns"));
    }
    let mut warnings = Vec::new();

    let mut k = DMatrix::zeros(n, n);
    let mut duplicates = 0usize;
    for i in 0..n {
        for j in 0..=i {
            let v = spec.evaluate(points.row(i), points.row(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
            if i != j && points.row(i) == points.row(j) {
                duplicates += 1;
            }
        }
    }
    if duplicates > 0 {
        warnings.push(format!(
            "{duplicates} duplicate point pair(s); kernel matrix is singular and \
             the retained rank drops below n"
        ));
    }

    let eig = k.symmetric_eigen();
    let lambda_max = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if lambda_max <= 0.0 {
        return Err(Error::DegenerateSpectrum(
            "kernel matrix has no positive eigenvalue".into(),
        ));
    }
    let clipped = eig
        .eigenvalues
        .iter()
        .filter(|&&v| v < -1e-10 * lambda_max)
        .count();
    if clipped > 0 {
        warnings.push(format!(
            "kernel matrix is not numerically PSD; clipped {clipped} negative eigenvalue(s) to 0"
        ));
    }
    let cutoff = DEFAULT_RANK_TOLERANCE * lambda_max;
    let kept = eig.eigenvalues.iter().filter(|&&v| v > cutoff).count();
    if kept < n {
        warnings.push(format!(
            "kernel matrix numerically singular: rank {kept} < n = {n}"
        ));
    }

    // S = U diag(sqrt(max(lambda, 0))) U^T, the symmetric square root.
    let sqrt_vals = DVector::from_iterator(n, eig.eigenvalues.iter().map(|&v| v.max(0.0).sqrt()));
    let s = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            entries.push(s[(i, j)]);
        }
    }
    let data = DataMatrix::new(n, n, entries)?;

    // Interpolating dual solution per column via the pseudo-inverse of S.
    let inv_sqrt = DVector::from_iterator(
        n,
        eig.eigenvalues
            .iter()
            .map(|&v| if v > cutoff { 1.0 / v.sqrt() } else { 0.0 }),
    );
    let pinv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();

    let mut problems = Vec::with_capacity(labels.ncols());
    for c in 0..labels.ncols() {
        let y = DVector::from_column_slice(labels.column(c).as_slice());
        let w_star = &pinv * &y;
        let problem = QuadraticProblem::new(data.clone(), y, w_star).map_err(|e| {
            Error::InvalidInput(format!(
                "label column {c} is not interpolable by the kernel: {e}"
            ))
        })?;
        problems.push(problem);
    }
    Ok(KernelProblems { problems, warnings })
}

/// Smooth non-quadratic interpolated family built over a quadratic base:
/// per-sample loss `h(x_i . w - y_i)` with `h(z) = z^2/2 + mix * ln cosh z`.
///
/// Since `h'' in [1, 1 + mix]`, the convex constants are
/// `beta = (1 + mix) max_i ||x_i||^2`, `lambda = (1 + mix) lambda_1(H)` and
/// `alpha = lambda_k(H)`; the base covariance must be full rank so that the
/// averaged loss is strongly convex.
#[derive(Debug, Clone)]
pub struct LogCoshProblem {
    base: QuadraticProblem,
    mix: f64,
    constants: ConvexRateParams,
}

pub fn logcosh_problem(base: QuadraticProblem, mix: f64) -> Result<LogCoshProblem> {
    if !(mix.is_finite() && mix >= 0.0) {
        return Err(Error::InvalidInput(format!("mix must be >= 0, got {mix}")));
    }
    if base.spectral().rank() < base.dim() {
        return Err(Error::InvalidInput(format!(
            "base covariance has rank {} < d = {}; the averaged loss would \
             not be strongly convex",
            base.spectral().rank(),
            base.dim()
        )));
    }
    let constants = ConvexRateParams::new(
        (1.0 + mix) * base.beta(),
        (1.0 + mix) * base.spectral().lambda1(),
        base.spectral().lambda_k(),
    )?;
    Ok(LogCoshProblem {
        base,
        mix,
        constants,
    })
}

fn ln_cosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl LogCoshProblem {
    pub fn base(&self) -> &QuadraticProblem {
        &self.base
    }

    pub fn mix(&self) -> f64 {
        self.mix
    }

    fn residual(&self, i: usize, w: &[f64]) -> f64 {
        dot(self.base.data().row(i), w) - self.base.targets()[i]
    }
}

impl ConvexObjective for LogCoshProblem {
    fn num_samples(&self) -> usize {
        self.base.num_samples()
    }

    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn minimizer(&self) -> &DVector<f64> {
        self.base.minimizer_vec()
    }

    fn constants(&self) -> ConvexRateParams {
        self.constants
    }

    fn sample_loss(&self, i: usize, w: &[f64]) -> f64 {
        let r = self.residual(i, w);
        0.5 * r * r + self.mix * ln_cosh(r)
    }

    fn accumulate_sample_grad(&self, i: usize, w: &[f64], acc: &mut [f64]) -> bool {
        let r = self.residual(i, w);
        let s = r + self.mix * r.tanh();
        if !s.is_finite() {
            return false;
        }
        for (a, x) in acc.iter_mut().zip(self.base.data().row(i)) {
            *a += s * x;
        }
        true
    }
}

impl ConvexObjective for QuadraticProblem {
    fn num_samples(&self) -> usize {
        self.data.num_samples()
    }

    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn minimizer(&self) -> &DVector<f64> {
        &self.minimizer
    }

    /// Half-squared per-sample losses: `beta = max ||x_i||^2`, and the
    /// averaged loss is `lambda_1`-smooth with curvature `lambda_k` along
    /// the covariance range.
    fn constants(&self) -> ConvexRateParams {
        self.convex_constants
    }

    fn sample_loss(&self, i: usize, w: &[f64]) -> f64 {
        let r = dot(self.data.row(i), w) - self.targets[i];
        0.5 * r * r
    }

    fn accumulate_sample_grad(&self, i: usize, w: &[f64], acc: &mut [f64]) -> bool {
        let r = dot(self.data.row(i), w) - self.targets[i];
        if !r.is_finite() {
            return false;
        }
        for (a, x) in acc.iter_mut().zip(self.data.row(i)) {
            *a += r * x;
        }
        true
    }
}

/// A parsed CSV dataset: features plus zero or more label columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvDataset {
    pub features: DataMatrix,
    pub labels: DMatrix<f64>,
    pub feature_names: Vec<String>,
    pub label_names: Vec<String>,
}

/// Loads a headered numeric CSV, splitting off the named label columns.
/// Row order is preserved; every cell must parse to a finite number.
pub fn load_csv(path: impl AsRef<Path>, label_columns: &[&str]) -> Result<CsvDataset> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() {
        return Err(Error::EmptyInput("csv header"));
    }
    let mut label_idx = Vec::with_capacity(label_columns.len());
    for name in label_columns {
        let idx = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                path: display.clone(),
                row: 0,
                column: (*name).to_string(),
                message: "label column not found in header".into(),
            })?;
        label_idx.push(idx);
    }
    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|i| !label_idx.contains(i))
        .collect();

    let mut feature_rows: Vec<Vec<f64>> = Vec::new();
    let mut label_rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let parse_cell = |idx: usize| -> Result<f64> {
            let raw = record.get(idx).unwrap_or("");
            let value: f64 = raw.trim().parse().map_err(|_| Error::Parse {
                path: display.clone(),
                row: r + 1,
                column: headers[idx].clone(),
                message: format!("cell '{raw}' is not numeric"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    path: display.clone(),
                    row: r + 1,
                    column: headers[idx].clone(),
                    message: format!("cell '{raw}' is not finite"),
                });
            }
            Ok(value)
        };
        feature_rows.push(
            feature_idx
                .iter()
                .map(|&i| parse_cell(i))
                .collect::<Result<_>>()?,
        );
        label_rows.push(
            label_idx
                .iter()
                .map(|&i| parse_cell(i))
                .collect::<Result<_>>()?,
        );
    }
    if feature_rows.is_empty() {
        return Err(Error::EmptyInput("csv data rows"));
    }

    let n = feature_rows.len();
    let labels = DMatrix::from_fn(n, label_idx.len(), |r, c| label_rows[r][c]);
    Ok(CsvDataset {
        features: DataMatrix::from_rows(&feature_rows)?,
        labels,
        feature_names: feature_idx.iter().map(|&i| headers[i].clone()).collect(),
        label_names: label_idx.iter().map(|&i| headers[i].clone()).collect(),
    })
}

/// Writes a dataset back out; numbers use shortest round-trip formatting so
/// a save/load cycle is bit-exact.
pub fn write_csv(path: impl AsRef<Path>, dataset: &CsvDataset) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let header: Vec<&str> = dataset
        .feature_names
        .iter()
        .chain(dataset.label_names.iter())
        .map(String::as_str)
        .collect();
    writer.write_record(&header)?;
    for i in 0..dataset.features.num_samples() {
        let mut record: Vec<String> = dataset
            .features
            .row(i)
            .iter()
            .map(|v| v.to_string())
            .collect();
        for c in 0..dataset.labels.ncols() {
            record.push(dataset.labels[(i, c)].to_string());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
