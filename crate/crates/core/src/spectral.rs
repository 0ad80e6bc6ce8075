//! Empirical covariance matrices and their eigenstructure.
//!
//! Everything downstream (rate formulas, the SGD engine, the exact oracles)
//! consumes the quantities assembled here: the covariance `H`, its ordered
//! nonzero eigenvalues, the orthonormal basis of `Range(H)`, and the data
//! bound `beta = max_i ||x_i||^2`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative cutoff separating genuine eigenvalues from solver noise.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-10;

/// Row-major sample matrix; row `i` is the feature vector of sample `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    d: usize,
    entries: Vec<f64>,
}

impl DataMatrix {
    /// Builds a matrix from row-major entries, rejecting empty shapes and
    /// non-finite values.
    pub fn new(n: usize, d: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput(format!(
                "data matrix must have n >= 1 and d >= 1, got {n}x{d}"
            )));
        }
        if entries.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                actual: entries.len(),
            });
        }
        if let Some(pos) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry {} at row {}, col {}",
                entries[pos],
                pos / d,
                pos % d
            )));
        }
        Ok(Self { n, d, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("data rows"));
        }
        let d = rows[0].len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad.len(),
            });
        }
        let entries = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), d, entries)
    }

    pub fn num_samples(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks_exact(self.d)
    }

    /// `beta`: the largest squared row norm. Always computed from the rows,
    /// never inferred from `H` (only `tr(H) <= beta` holds there).
    pub fn max_row_norm_sq(&self) -> f64 {
        self.rows()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.n, self.d, self.entries.iter().copied())
    }
}

/// Symmetric positive semi-definite `d x d` covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    matrix: DMatrix<f64>,
}

impl Covariance {
    /// Wraps a matrix after checking squareness and symmetry.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
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
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Quadratic form `v^T H v`.
    pub fn quadratic_form(&self, v: &DVector<f64>) -> f64 {
        (self.matrix() * v).dot(v)
    }
}

/// `H = (1/n) sum_i x_i x_i^T`, symmetrized after accumulation.
pub fn covariance(data: &DataMatrix) -> Covariance {
    let x = data.to_dmatrix();
    let mut h = x.transpose() * &x;
    h /= data.num_samples() as f64;
    symmetrize(&mut h);
    Covariance { matrix: h }
}

/// `H_m = (1/m) sum over the index multiset of x_i x_i^T`.
///
/// Indices are a multiset: repetitions are meaningful because batches are
/// drawn with replacement.
pub fn subsample_covariance(data: &DataMatrix, indices: &[usize]) -> Result<Covariance> {
    if indices.is_empty() {
        return Err(Error::EmptyInput("subsample index list"));
    }
    let d = data.dim();
    let mut h = DMatrix::zeros(d, d);
    for &i in indices {
        if i >= data.num_samples() {
            return Err(Error::InvalidInput(format!(
                "sample index {i} out of range 0..{}",
                data.num_samples()
            )));
        }
        let row = data.row(i);
        for a in 0..d {
            for b in 0..d {
                h[(a, b)] += row[a] * row[b];
            }
        }
    }
    h /= indices.len() as f64;
    symmetrize(&mut h);
    Ok(Covariance { matrix: h })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Ordered nonzero spectrum of a covariance matrix together with an
/// orthonormal basis of its range.
#[derive(Debug, Clone)]
pub struct SpectralSummary {
    beta: f64,
    eigenvalues: Vec<f64>,
    basis: DMatrix<f64>,
    rank_tolerance: f64,
}

impl SpectralSummary {
    /// Eigendecomposes `H` and keeps the eigenvalues above
    /// `rank_tolerance * lambda_1`, capped at `min(n, d)` of them.
    ///
    /// `beta` must come from the data rows; `n` is the sample count behind
    /// `H` and only bounds the retained rank.
    pub fn compute(h: &Covariance, beta: f64, n: usize, rank_tolerance: f64) -> Result<Self> {
        if !(rank_tolerance > 0.0 && rank_tolerance < 1.0) {
            return Err(Error::InvalidInput(format!(
                "rank tolerance must lie in (0, 1), got {rank_tolerance}"
            )));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "beta must be positive and finite, got {beta}"
            )));
        }
        let d = h.dim();
        let eig = h.matrix().clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        let lambda1 = eig.eigenvalues[order[0]];
        if lambda1 <= 0.0 {
            return Err(Error::DegenerateSpectrum(format!(
                "largest eigenvalue is {lambda1}; no nonzero spectrum"
            )));
        }
        let cutoff = rank_tolerance * lambda1;
        let mut k = order
            .iter()
            .take_while(|&&i| eig.eigenvalues[i] > cutoff)
            .count();
        k = k.min(n).min(d);
        if k == 0 {
            return Err(Error::DegenerateSpectrum(
                "no eigenvalue above the rank cutoff".into(),
            ));
        }

        let eigenvalues: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut basis = DMatrix::zeros(d, k);
        for (col, &i) in order[..k].iter().enumerate() {
            basis.set_column(col, &eig.eigenvectors.column(i));
        }
        Ok(Self {
            beta,
            eigenvalues,
            basis,
            rank_tolerance,
        })
    }

    /// Convenience composition: covariance of `data`, then its summary.
    pub fn from_data(data: &DataMatrix, rank_tolerance: f64) -> Result<Self> {
        let h = covariance(data);
        Self::compute(
            &h,
            data.max_row_norm_sq(),
            data.num_samples(),
            rank_tolerance,
        )
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Descending nonzero eigenvalues `lambda_1 >= ... >= lambda_k`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda1(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_k(&self) -> f64 {
        *self.eigenvalues.last().expect("rank >= 1")
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Orthonormal range basis, one column per retained eigenvalue.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn rank_tolerance(&self) -> f64 {
        self.rank_tolerance
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: v.len(),
            });
        }
        Ok(())
    }

    /// Projection of `v` onto `Range(H)`: `sum_i (v . e_i) e_i`.
    pub fn project_range(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(v)?;
        let coords = self.basis.transpose() * v;
        Ok(&self.basis * coords)
    }

    /// Projection of `v` onto `Null(H)`: the complement `v - P v`.
    pub fn project_null(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(v - self.project_range(v)?)
    }

    /// `||P v||^2` without allocating the projected vector.
    pub fn range_norm_sq(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dim());
        let mut total = 0.0;
        for col in self.basis.column_iter() {
            let c: f64 = col.iter().zip(v).map(|(e, x)| e * x).sum();
            total += c * c;
        }
        total
    }
}
