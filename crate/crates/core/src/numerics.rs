//! Shared linear-algebra, random-sampling, and finite-difference utilities.
//!
//! Everything here is pure and reentrant. Random state lives in [`RngStream`]
//! values that are created per task and never shared between concurrent tasks,
//! so (seed, stream_id) indexing stays stable regardless of thread counts.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Condition-number guard for every inversion in the crate. Sandwich bounds
/// amplify ill-conditioning, so we refuse to invert past this point.
pub const MAX_CONDITION_NUMBER: f64 = 1e12;

/// Default tolerance for Loewner-order checks on unit-scaled matrices.
pub const DEFAULT_LOEWNER_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// SymMatrix
// ---------------------------------------------------------------------------

/// A real symmetric matrix.
///
/// Holds all matrix-valued information and bound quantities. Construction
/// enforces symmetry to within `1e-12` relative tolerance; use
/// [`SymMatrix::symmetrize`] for matrices with roundoff drift.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    entries: DMatrix<f64>,
}

impl SymMatrix {
    /// Checked constructor: square, dim >= 1, finite, symmetric to 1e-12 relative.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.nrows() != entries.ncols() {
            return Err(Error::InvalidInput(format!(
                "SymMatrix must be square with dim >= 1, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("SymMatrix entries must be finite".into()));
        }
        let scale = entries.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        for i in 0..entries.nrows() {
            for j in (i + 1)..entries.ncols() {
                if (entries[(i, j)] - entries[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!(
                        "matrix not symmetric at ({i},{j}): {} vs {}",
                        entries[(i, j)],
                        entries[(j, i)]
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    /// Builds from (M + M^T)/2, discarding numerical asymmetry.
    pub fn symmetrize(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::InvalidInput(format!(
                "cannot symmetrize a {}x{} matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        let sym = (m + m.transpose()).scale(0.5);
        Ok(Self { entries: sym })
    }

    pub fn identity(dim: usize) -> Self {
        Self { entries: DMatrix::identity(dim, dim) }
    }

    pub fn from_diagonal(diag: &DVector<f64>) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(diag))
    }

    pub fn scalar(v: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, v))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    /// Smallest eigenvalue via symmetric eigendecomposition.
    pub fn min_eigenvalue(&self) -> f64 {
        self.entries
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &v| a.min(v))
    }

    /// Condition number max|lambda| / min|lambda| (infinite when singular).
    pub fn condition_number(&self) -> f64 {
        let eig = self.entries.clone().symmetric_eigen();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for &v in eig.eigenvalues.iter() {
            lo = lo.min(v.abs());
            hi = hi.max(v.abs());
        }
        if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// Solves `self * X = rhs` for symmetric positive definite `self`,
    /// guarded by [`MAX_CONDITION_NUMBER`]. Cholesky, never an explicit inverse.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rhs.nrows() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: rhs.nrows() });
        }
        if self.condition_number() > MAX_CONDITION_NUMBER {
            return Err(Error::Conditioning(format!(
                "condition number exceeds {MAX_CONDITION_NUMBER:e}"
            )));
        }
        let chol = self
            .entries
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Decomposition("Cholesky failed (matrix not PD)".into()))?;
        Ok(chol.solve(rhs))
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let m = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
        Ok(DVector::from_column_slice(self.solve(&m)?.as_slice()))
    }
}

/// Smallest eigenvalue of the symmetrized input.
pub fn min_eigenvalue(m: &SymMatrix) -> f64 {
    m.min_eigenvalue()
}

/// Loewner order check: `x >= y` iff `min_eigenvalue(x - y) >= -tol`.
pub fn loewner_geq(x: &SymMatrix, y: &SymMatrix, tol: f64) -> Result<bool> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), got: y.dim() });
    }
    if tol < 0.0 {
        return Err(Error::InvalidInput("tolerance must be >= 0".into()));
    }
    let diff = SymMatrix::symmetrize(&(x.as_matrix() - y.as_matrix()))?;
    Ok(diff.min_eigenvalue() >= -tol)
}

// ---------------------------------------------------------------------------
// RngStream
// ---------------------------------------------------------------------------

/// A reproducible random stream keyed by (seed, stream_id).
///
/// Identical keys reproduce identical draw sequences; distinct stream ids give
/// statistically independent streams. Backed by a counter-based generator so
/// the indexing is stable across thread counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Derives a substream; used to hand independent streams to trials/batches.
    pub fn substream(&self, offset: u64) -> Self {
        Self { seed: self.seed, stream_id: self.stream_id.wrapping_add(offset) }
    }

    /// Instantiates the generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

// ---------------------------------------------------------------------------
// Monte Carlo scaffolding
// ---------------------------------------------------------------------------

/// A scalar Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// Streaming per-entry mean/variance accumulator for matrix-valued samples
/// (Welford). Gives calibrated standard errors for acceptance tolerances.
#[derive(Debug, Clone)]
pub struct MatrixAccumulator {
    n: usize,
    mean: DMatrix<f64>,
    m2: DMatrix<f64>,
}

impl MatrixAccumulator {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { n: 0, mean: DMatrix::zeros(nrows, ncols), m2: DMatrix::zeros(nrows, ncols) }
    }

    pub fn push(&mut self, sample: &DMatrix<f64>) {
        self.n += 1;
        let inv_n = 1.0 / self.n as f64;
        for i in 0..self.mean.nrows() {
            for j in 0..self.mean.ncols() {
                let x = sample[(i, j)];
                let d = x - self.mean[(i, j)];
                self.mean[(i, j)] += d * inv_n;
                self.m2[(i, j)] += d * (x - self.mean[(i, j)]);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn mean(&self) -> &DMatrix<f64> {
        &self.mean
    }

    /// Standard error of the mean, entrywise.
    pub fn std_error(&self) -> DMatrix<f64> {
        let n = self.n as f64;
        if self.n < 2 {
            return DMatrix::from_element(self.mean.nrows(), self.mean.ncols(), f64::NAN);
        }
        self.m2.map(|m2| (m2 / (n * (n - 1.0))).sqrt())
    }
}

/// Neumaier compensated sum; long MC sums must not lose small-scale structure.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

// ---------------------------------------------------------------------------
// Gaussian sampling
// ---------------------------------------------------------------------------

/// Multivariate normal sampler with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: DVector<f64>,
    chol_l: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(mean: DVector<f64>, cov: &SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch { expected: cov.dim(), got: mean.len() });
        }
        let chol = cov
            .as_matrix()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Decomposition("covariance not positive definite".into()))?;
        Ok(Self { mean, chol_l: chol.l() })
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let n = self.mean.len();
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        &self.mean + &self.chol_l * z
    }
}

/// One draw from N(mean, cov) using the given stream's generator.
pub fn sample_gaussian(
    mean: &DVector<f64>,
    cov: &SymMatrix,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<f64>> {
    let sampler = GaussianSampler::new(mean.clone(), cov)?;
    Ok(sampler.draw(rng))
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Central-difference gradient with a fixed step, error O(h^2).
pub fn fd_gradient<F>(f: F, x0: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    if h <= 0.0 {
        return Err(Error::InvalidInput("finite-difference step must be > 0".into()));
    }
    let mut grad = DVector::zeros(x0.len());
    let mut x = x0.clone();
    for k in 0..x0.len() {
        x[k] = x0[k] + h;
        let fp = f(&x)?;
        x[k] = x0[k] - h;
        let fm = f(&x)?;
        x[k] = x0[k];
        let g = (fp - fm) / (2.0 * h);
        if !g.is_finite() {
            return Err(Error::Evaluation(format!("non-finite gradient in coordinate {k}")));
        }
        grad[k] = g;
    }
    Ok(grad)
}

/// Per-coordinate central-difference step: cbrt(machine eps) * max(1, |x|).
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// Central-difference gradient with the per-coordinate default step.
pub fn fd_gradient_auto<F>(f: F, x0: &DVector<f64>) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let mut grad = DVector::zeros(x0.len());
    let mut x = x0.clone();
    for k in 0..x0.len() {
        let h = fd_step(x0[k]);
        x[k] = x0[k] + h;
        let fp = f(&x)?;
        x[k] = x0[k] - h;
        let fm = f(&x)?;
        x[k] = x0[k];
        let g = (fp - fm) / (2.0 * h);
        if !g.is_finite() {
            return Err(Error::Evaluation(format!("non-finite gradient in coordinate {k}")));
        }
        grad[k] = g;
    }
    Ok(grad)
}

/// Central-difference Jacobian of a vector-valued function.
pub fn fd_jacobian<F>(f: F, x0: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    if h <= 0.0 {
        return Err(Error::InvalidInput("finite-difference step must be > 0".into()));
    }
    let f0 = f(x0)?;
    let mut jac = DMatrix::zeros(f0.len(), x0.len());
    let mut x = x0.clone();
    for k in 0..x0.len() {
        x[k] = x0[k] + h;
        let fp = f(&x)?;
        x[k] = x0[k] - h;
        let fm = f(&x)?;
        x[k] = x0[k];
        let col = (fp - fm) / (2.0 * h);
        jac.set_column(k, &col);
    }
    Ok(jac)
}
