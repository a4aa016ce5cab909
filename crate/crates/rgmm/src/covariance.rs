//! Weighted moment estimation, covariance shrinkage, and Gaussian density
//! primitives shared by all fitting code.
//!
//! Every regularizer here blends the empirical covariance with a scaled
//! identity target, `(1 - delta) * S + delta * (tr(S)/d) * I`, and differs
//! only in how the intensity `delta` is chosen: fixed (Shrunk), Ledoit-Wolf,
//! or OAS.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;

/// A symmetric real matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates squareness, finiteness, and symmetry (absolute tolerance 1e-10).
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidParameter(format!(
                "covariance matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "covariance matrix has non-finite entries".into(),
            ));
        }
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidParameter(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self(m))
    }

    /// Wraps a matrix that is symmetric by construction.
    pub(crate) fn new_unchecked(m: DMatrix<f64>) -> Self {
        debug_assert!(m.is_square());
        Self(m)
    }

    pub fn identity(d: usize) -> Self {
        Self(DMatrix::identity(d, d))
    }

    pub fn scaled_identity(d: usize, scale: f64) -> Self {
        Self(DMatrix::identity(d, d) * scale)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_row_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Mean of two matrices, entrywise.
    pub fn average(mats: &[&SymMatrix]) -> Result<SymMatrix> {
        let first = mats
            .first()
            .ok_or_else(|| Error::InvalidParameter("cannot average zero matrices".into()))?;
        let d = first.dim();
        let mut acc = DMatrix::zeros(d, d);
        for m in mats {
            if m.dim() != d {
                return Err(Error::InvalidParameter(
                    "matrices of different dimension".into(),
                ));
            }
            acc += m.matrix();
        }
        acc /= mats.len() as f64;
        Ok(SymMatrix(acc))
    }
}

impl AsRef<DMatrix<f64>> for SymMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Lower-triangular Cholesky factor `L` with `L * L^T = S` and its cached
/// log-determinant of `S`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: DMatrix<f64>,
    log_det: f64,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// `log det S = 2 * sum_i log L_ii`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Solves `L y = b` for one right-hand side.
    pub(crate) fn forward_solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lower
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a strictly positive diagonal")
    }

    /// Solves `L Y = B` for a matrix of right-hand sides.
    pub(crate) fn forward_solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lower
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a strictly positive diagonal")
    }
}

/// Factors a symmetric matrix as `L * L^T`, caching the log-determinant.
pub fn cholesky(cov: &SymMatrix) -> Result<CholeskyFactor> {
    let chol = nalgebra::Cholesky::new(cov.matrix().clone()).ok_or(Error::NotPositiveDefinite)?;
    let lower = chol.unpack();
    let mut log_det = 0.0;
    for i in 0..lower.nrows() {
        let pivot = lower[(i, i)];
        if !pivot.is_finite() || pivot <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        log_det += pivot.ln();
    }
    Ok(CholeskyFactor {
        lower,
        log_det: 2.0 * log_det,
    })
}

/// Makes a covariance usable by the density code: if it has no usable
/// Cholesky factorization, retries with `S + eps * I` for
/// `eps = 1e-6 * max(1, tr(S)/d)`, doubling `eps` up to three times before
/// giving up.
///
/// A factorization counts as failed when its smallest pivot is so close to
/// zero that triangular solves against data-scale vectors would overflow;
/// this catches clusters collapsed onto a single sample, whose covariance is
/// positive definite only in a formal sense.
pub fn ensure_positive_definite(cov: SymMatrix) -> Result<(SymMatrix, CholeskyFactor)> {
    let d = cov.dim();
    let scale = (cov.trace() / d as f64).max(1.0);
    let usable = |chol: &CholeskyFactor| {
        let min_pivot = (0..d)
            .map(|i| chol.lower()[(i, i)])
            .fold(f64::INFINITY, f64::min);
        min_pivot * min_pivot >= 1e-12 * scale
    };
    if let Ok(chol) = cholesky(&cov) {
        if usable(&chol) {
            return Ok((cov, chol));
        }
    }
    let base = 1e-6 * scale;
    let mut eps = base;
    for _ in 0..4 {
        let floored = SymMatrix::new_unchecked(cov.matrix() + DMatrix::<f64>::identity(d, d) * eps);
        if let Ok(chol) = cholesky(&floored) {
            if usable(&chol) {
                return Ok((floored, chol));
            }
        }
        eps *= 2.0;
    }
    Err(Error::DegenerateCluster(format!(
        "covariance not positive definite even after adding {eps:.3e} * I"
    )))
}

/// Covariance post-processing applied after each empirical estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegularizationMethod {
    /// No shrinkage; the empirical matrix is used as-is.
    Empirical,
    /// Fixed shrinkage intensity, `0.1` by default.
    Shrunk(f64),
    /// Closed-form intensity minimizing MSE for arbitrary distributions.
    LedoitWolf,
    /// Oracle Approximating Shrinkage intensity, assuming Gaussian data.
    Oas,
}

pub const DEFAULT_SHRUNK_DELTA: f64 = 0.1;

impl RegularizationMethod {
    pub fn shrunk_default() -> Self {
        RegularizationMethod::Shrunk(DEFAULT_SHRUNK_DELTA)
    }
}

impl std::fmt::Display for RegularizationMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegularizationMethod::Empirical => write!(f, "empirical"),
            RegularizationMethod::Shrunk(delta) => {
                if (delta - DEFAULT_SHRUNK_DELTA).abs() < 1e-12 {
                    write!(f, "shrunk")
                } else {
                    write!(f, "shrunk:{delta}")
                }
            }
            RegularizationMethod::LedoitWolf => write!(f, "ledoit_wolf"),
            RegularizationMethod::Oas => write!(f, "oas"),
        }
    }
}

impl std::str::FromStr for RegularizationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(RegularizationMethod::Empirical),
            "shrunk" => Ok(RegularizationMethod::shrunk_default()),
            "ledoit_wolf" | "lw" => Ok(RegularizationMethod::LedoitWolf),
            "oas" => Ok(RegularizationMethod::Oas),
            other => {
                if let Some(delta) = other.strip_prefix("shrunk:") {
                    let delta: f64 = delta.parse().map_err(|_| {
                        Error::InvalidParameter(format!("invalid shrinkage delta in {other:?}"))
                    })?;
                    if !(0.0..=1.0).contains(&delta) {
                        return Err(Error::InvalidParameter(format!(
                            "shrinkage delta must lie in [0, 1], got {delta}"
                        )));
                    }
                    Ok(RegularizationMethod::Shrunk(delta))
                } else {
                    Err(Error::InvalidParameter(format!(
                        "unknown regularizer {other:?} (expected empirical, shrunk[:delta], ledoit_wolf, oas)"
                    )))
                }
            }
        }
    }
}

impl serde::Serialize for RegularizationMethod {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for RegularizationMethod {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Weighted mean and covariance of the rows of `data`.
///
/// Returns `(mean, cov, n_eff)` where `n_eff = sum(weights)`, the mean is the
/// weight-normalized average, and the covariance is the weight-normalized sum
/// of centered outer products.
pub fn weighted_moments(
    data: &DMatrix<f64>,
    weights: &[f64],
) -> Result<(DVector<f64>, SymMatrix, f64)> {
    let (n, d) = data.shape();
    if weights.len() != n {
        return Err(Error::InvalidParameter(format!(
            "expected {n} weights, got {}",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidParameter(
            "weights must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateCluster("total weight is zero".into()));
    }

    let mut mean = DVector::zeros(d);
    for c in 0..d {
        let col = data.column(c);
        let mut acc = 0.0;
        for i in 0..n {
            acc += weights[i] * col[i];
        }
        mean[c] = acc / total;
    }

    // cov = Z^T diag(w) Z / total, with Z the centered data
    let mut centered = data.clone();
    for c in 0..d {
        let mut col = centered.column_mut(c);
        col.add_scalar_mut(-mean[c]);
    }
    let mut weighted = centered.clone();
    for c in 0..d {
        let mut col = weighted.column_mut(c);
        for i in 0..n {
            col[i] *= weights[i];
        }
    }
    let mut cov = centered.transpose() * weighted;
    cov /= total;
    // gemm round-off can leave the two triangles a few ulps apart
    for i in 0..d {
        for j in (i + 1)..d {
            let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
    }

    Ok((mean, SymMatrix::new_unchecked(cov), total))
}

/// Convex combination of `cov` with the scaled identity sharing its trace:
/// `(1 - delta) * S + delta * (tr(S)/d) * I`.
pub fn shrink(cov: &SymMatrix, delta: f64) -> Result<SymMatrix> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!(
            "shrinkage delta must lie in [0, 1], got {delta}"
        )));
    }
    let d = cov.dim();
    let mu = cov.trace() / d as f64;
    let mut out = cov.matrix() * (1.0 - delta);
    for i in 0..d {
        out[(i, i)] += delta * mu;
    }
    Ok(SymMatrix::new_unchecked(out))
}

/// Oracle Approximating Shrinkage intensity for a covariance estimated from
/// `n_eff` effective samples in dimension `d`.
///
/// A zero matrix (or a non-positive denominator) yields full shrinkage 1.
pub fn oas_delta(cov: &SymMatrix, n_eff: f64, d: usize) -> f64 {
    let d_f = d as f64;
    let tr = cov.trace();
    let tr_sq: f64 = cov.matrix().iter().map(|v| v * v).sum(); // tr(S^2) for symmetric S
    let tr2 = tr * tr;
    if tr_sq + tr2 <= 0.0 {
        return 1.0;
    }
    let num = (1.0 - 2.0 / d_f) * tr_sq + tr2;
    let den = (n_eff + 1.0 - 2.0 / d_f) * (tr_sq + tr2 / d_f);
    if !den.is_finite() || den <= 0.0 {
        return 1.0;
    }
    (num / den).clamp(0.0, 1.0)
}

/// Ledoit-Wolf shrinkage intensity adapted to weighted samples.
///
/// With `m = tr(S)/d`, dispersion `v2 = ||S - m I||_F^2 / d`, and
/// `b2 = min(v2, sum_i w_i ||z_i z_i^T - S||_F^2 / d / n_eff^2)` for centered
/// `z_i`, returns `min(1, b2 / v2)`; a zero-dispersion matrix yields 0.
pub fn lw_delta(data: &DMatrix<f64>, weights: &[f64], mean: &DVector<f64>, cov: &SymMatrix) -> f64 {
    let (n, d) = data.shape();
    debug_assert_eq!(weights.len(), n);
    debug_assert_eq!(mean.len(), d);
    debug_assert_eq!(cov.dim(), d);
    let d_f = d as f64;
    let n_eff: f64 = weights.iter().sum();

    let m = cov.trace() / d_f;
    let mut v2 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { m } else { 0.0 };
            let diff = cov.matrix()[(i, j)] - target;
            v2 += diff * diff;
        }
    }
    v2 /= d_f;
    if v2 <= 0.0 {
        return 0.0;
    }

    let mut b2_bar = 0.0;
    let mut z = DVector::zeros(d);
    for i in 0..n {
        if weights[i] == 0.0 {
            continue;
        }
        for c in 0..d {
            z[c] = data[(i, c)] - mean[c];
        }
        let mut frob = 0.0;
        for a in 0..d {
            for b in 0..d {
                let diff = z[a] * z[b] - cov.matrix()[(a, b)];
                frob += diff * diff;
            }
        }
        b2_bar += weights[i] * frob;
    }
    b2_bar /= d_f * n_eff * n_eff;

    let b2 = b2_bar.min(v2);
    (b2 / v2).min(1.0)
}

/// Applies the selected shrinkage to an empirical covariance and floors the
/// result so it admits a Cholesky factorization.
pub fn regularize(
    cov: SymMatrix,
    method: RegularizationMethod,
    data: &DMatrix<f64>,
    weights: &[f64],
    mean: &DVector<f64>,
) -> Result<SymMatrix> {
    let shrunk = match method {
        RegularizationMethod::Empirical => cov,
        RegularizationMethod::Shrunk(delta) => shrink(&cov, delta)?,
        RegularizationMethod::LedoitWolf => {
            let delta = lw_delta(data, weights, mean, &cov);
            shrink(&cov, delta)?
        }
        RegularizationMethod::Oas => {
            let n_eff: f64 = weights.iter().sum();
            let delta = oas_delta(&cov, n_eff, cov.dim());
            shrink(&cov, delta)?
        }
    };
    let (floored, _) = ensure_positive_definite(shrunk)?;
    Ok(floored)
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log-density of a multivariate Gaussian evaluated via its Cholesky factor:
/// `-(d/2) log(2 pi) - log_det/2 - ||L^{-1}(x - mean)||^2 / 2`.
pub fn log_density(x: &DVector<f64>, mean: &DVector<f64>, chol: &CholeskyFactor) -> f64 {
    let d = chol.dim();
    assert_eq!(x.len(), d, "sample dimension mismatch");
    assert_eq!(mean.len(), d, "mean dimension mismatch");
    let y = chol.forward_solve(&(x - mean));
    -0.5 * (d as f64 * LN_2PI + chol.log_det() + y.norm_squared())
}

/// Mahalanobis distance `sqrt((x - mean)^T S^{-1} (x - mean))` computed with
/// one triangular solve.
pub fn mahalanobis(x: &DVector<f64>, mean: &DVector<f64>, chol: &CholeskyFactor) -> f64 {
    let d = chol.dim();
    assert_eq!(x.len(), d, "sample dimension mismatch");
    assert_eq!(mean.len(), d, "mean dimension mismatch");
    chol.forward_solve(&(x - mean)).norm()
}
