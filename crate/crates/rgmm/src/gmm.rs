//! EM local search for full-covariance Gaussian mixtures with pluggable
//! covariance regularization.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::covariance::{
    self, cholesky, ensure_positive_definite, regularize, CholeskyFactor, RegularizationMethod,
    SymMatrix,
};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A fitted (or in-flight) mixture: weights on the simplex, one mean and
/// covariance per component, cached Cholesky factors, and the total
/// log-likelihood reached on the fitting data.
#[derive(Debug, Clone)]
pub struct MixtureSolution {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<SymMatrix>,
    chols: Vec<CholeskyFactor>,
    fitness: f64,
}

impl MixtureSolution {
    /// Builds a solution from parameters, validating the weight simplex and
    /// factoring every covariance. The fitness is left unevaluated (NaN).
    pub fn new(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<SymMatrix>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || covariances.len() != k {
            return Err(Error::InvalidParameter(
                "weights, means, and covariances must have equal nonzero length".into(),
            ));
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidParameter(
                "mixture weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights must sum to 1, got {total}"
            )));
        }
        let d = means[0].len();
        if means.iter().any(|m| m.len() != d) || covariances.iter().any(|c| c.dim() != d) {
            return Err(Error::InvalidParameter(
                "component dimensions disagree".into(),
            ));
        }
        let chols = covariances
            .iter()
            .map(cholesky)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            weights,
            means,
            covariances,
            chols,
            fitness: f64::NAN,
        })
    }

    pub(crate) fn from_parts(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<SymMatrix>,
        chols: Vec<CholeskyFactor>,
        fitness: f64,
    ) -> Self {
        Self {
            weights,
            means,
            covariances,
            chols,
            fitness,
        }
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, j: usize) -> &DVector<f64> {
        &self.means[j]
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariance(&self, j: usize) -> &SymMatrix {
        &self.covariances[j]
    }

    pub fn chol(&self, j: usize) -> &CholeskyFactor {
        &self.chols[j]
    }

    /// Total log-likelihood on the fitting data; NaN until evaluated.
    pub fn fitness(&self) -> f64 {
        self.fitness
    }

    pub(crate) fn set_fitness(&mut self, fitness: f64) {
        self.fitness = fitness;
    }

    pub(crate) fn replace_component(
        &mut self,
        j: usize,
        mean: DVector<f64>,
        cov: SymMatrix,
        chol: CholeskyFactor,
    ) {
        self.means[j] = mean;
        self.covariances[j] = cov;
        self.chols[j] = chol;
        self.fitness = f64::NAN;
    }

    pub(crate) fn relocate_mean(&mut self, j: usize, mean: DVector<f64>) {
        self.means[j] = mean;
        self.fitness = f64::NAN;
    }
}

/// Row-stochastic ownership matrix: entry `(i, j)` is the posterior
/// probability that sample `i` came from component `j`.
#[derive(Debug, Clone)]
pub struct Responsibilities(DMatrix<f64>);

impl Responsibilities {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.0.column(j).iter().cloned().collect()
    }

    /// Builds responsibilities from an explicit matrix, checking that every
    /// row sums to one.
    pub fn new(gamma: DMatrix<f64>) -> Result<Self> {
        for i in 0..gamma.nrows() {
            let sum: f64 = gamma.row(i).iter().sum();
            if (sum - 1.0).abs() > 1e-10 || gamma.row(i).iter().any(|v| *v < 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "responsibility row {i} does not lie on the simplex"
                )));
            }
        }
        Ok(Self(gamma))
    }
}

/// Convergence knobs for the EM and Lloyd loops.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct FitConfig {
    /// Stop when the absolute change in the objective falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tolerance: 0.1,
            max_iterations: 100,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tolerance < 0.0 || !self.tolerance.is_finite() {
            return Err(Error::InvalidParameter(
                "tolerance must be finite and nonnegative".into(),
            ));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidParameter(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Uniform weights, identity covariances, and means placed on `k` distinct
/// sample rows drawn without replacement.
pub fn init_random<R: Rng>(data: &DMatrix<f64>, k: usize, rng: &mut R) -> Result<MixtureSolution> {
    let (n, d) = data.shape();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds the number of samples {n}"
        )));
    }
    let indices = rand::seq::index::sample(rng, n, k);
    let means: Vec<DVector<f64>> = indices.iter().map(|i| data.row(i).transpose()).collect();
    let covariances = vec![SymMatrix::identity(d); k];
    let chols = covariances
        .iter()
        .map(cholesky)
        .collect::<Result<Vec<_>>>()?;
    Ok(MixtureSolution::from_parts(
        vec![1.0 / k as f64; k],
        means,
        covariances,
        chols,
        f64::NAN,
    ))
}

/// Per-sample, per-component `log(pi_j) + log N(x_i | mu_j, Sigma_j)`.
fn weighted_log_prob(data: &DMatrix<f64>, solution: &MixtureSolution) -> DMatrix<f64> {
    let (n, d) = data.shape();
    assert_eq!(d, solution.dim(), "data dimension mismatch");
    let k = solution.k();
    let data_t = data.transpose();
    let mut lp = DMatrix::zeros(n, k);
    for j in 0..k {
        let chol = solution.chol(j);
        let base = solution.weights[j].ln() - 0.5 * (d as f64 * LN_2PI + chol.log_det());
        let mut centered = data_t.clone();
        for mut col in centered.column_iter_mut() {
            col -= solution.mean(j);
        }
        let solved = chol.forward_solve_matrix(&centered);
        for (i, col) in solved.column_iter().enumerate() {
            lp[(i, j)] = base - 0.5 * col.norm_squared();
        }
    }
    lp
}

fn row_log_sum_exp(m: &DMatrix<f64>, i: usize) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for j in 0..m.ncols() {
        max = max.max(m[(i, j)]);
    }
    if !max.is_finite() {
        return max;
    }
    let mut sum = 0.0;
    for j in 0..m.ncols() {
        sum += (m[(i, j)] - max).exp();
    }
    max + sum.ln()
}

/// Total log-likelihood of `data` under `solution`.
pub(crate) fn loglik(data: &DMatrix<f64>, solution: &MixtureSolution) -> f64 {
    let lp = weighted_log_prob(data, solution);
    (0..lp.nrows()).map(|i| row_log_sum_exp(&lp, i)).sum()
}

/// Expectation step: posterior ownership weights and the total
/// log-likelihood, both computed in log space.
pub fn e_step(data: &DMatrix<f64>, solution: &MixtureSolution) -> (Responsibilities, f64) {
    let lp = weighted_log_prob(data, solution);
    let (n, k) = lp.shape();
    let mut gamma = DMatrix::zeros(n, k);
    let mut total = 0.0;
    for i in 0..n {
        let lse = row_log_sum_exp(&lp, i);
        total += lse;
        for j in 0..k {
            gamma[(i, j)] = (lp[(i, j)] - lse).exp();
        }
    }
    (Responsibilities(gamma), total)
}

/// Maximization step: re-estimates weights, means, and covariances from the
/// ownership matrix, regularizes each covariance, and recomputes the fitness.
///
/// A component whose responsibility column sums below `1e-10 * n` is repaired
/// by relocating its mean to the sample least covered by the surviving
/// components and resetting its covariance to the average of theirs.
pub fn m_step(
    data: &DMatrix<f64>,
    responsibilities: &Responsibilities,
    method: RegularizationMethod,
) -> Result<MixtureSolution> {
    let n = data.nrows();
    let k = responsibilities.k();
    if responsibilities.n() != n {
        return Err(Error::InvalidParameter(
            "responsibility rows do not match the data".into(),
        ));
    }

    let degenerate_floor = 1e-10 * n as f64;
    let column_sums: Vec<f64> = (0..k)
        .map(|j| responsibilities.0.column(j).iter().sum())
        .collect();
    let total: f64 = column_sums.iter().sum();

    let mut weights = vec![0.0; k];
    let mut means: Vec<Option<DVector<f64>>> = vec![None; k];
    let mut covs: Vec<Option<SymMatrix>> = vec![None; k];
    let mut chols: Vec<Option<CholeskyFactor>> = vec![None; k];
    let mut degenerate = Vec::new();

    for j in 0..k {
        if column_sums[j] < degenerate_floor {
            degenerate.push(j);
            continue;
        }
        let w = responsibilities.column(j);
        let (mean, cov, _) = covariance::weighted_moments(data, &w)?;
        let cov = regularize(cov, method, data, &w, &mean)?;
        let chol = cholesky(&cov)?;
        weights[j] = column_sums[j] / total;
        means[j] = Some(mean);
        covs[j] = Some(cov);
        chols[j] = Some(chol);
    }

    if !degenerate.is_empty() {
        if degenerate.len() == k {
            return Err(Error::DegenerateCluster(
                "all responsibility columns vanished".into(),
            ));
        }
        repair_degenerate(
            data,
            &degenerate,
            &mut weights,
            &mut means,
            &mut covs,
            &mut chols,
        )?;
        let sum: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= sum;
        }
    }

    let means: Vec<DVector<f64>> = means.into_iter().map(Option::unwrap).collect();
    let covs: Vec<SymMatrix> = covs.into_iter().map(Option::unwrap).collect();
    let chols: Vec<CholeskyFactor> = chols.into_iter().map(Option::unwrap).collect();

    let mut solution = MixtureSolution::from_parts(weights, means, covs, chols, f64::NAN);
    let fitness = loglik(data, &solution);
    solution.set_fitness(fitness);
    Ok(solution)
}

/// Relocates each empty component onto the sample with the lowest density
/// under the partial mixture of surviving components.
fn repair_degenerate(
    data: &DMatrix<f64>,
    degenerate: &[usize],
    weights: &mut [f64],
    means: &mut [Option<DVector<f64>>],
    covs: &mut [Option<SymMatrix>],
    chols: &mut [Option<CholeskyFactor>],
) -> Result<()> {
    let (n, _) = data.shape();
    let k = weights.len();
    let survivors: Vec<usize> = (0..k).filter(|j| means[*j].is_some()).collect();

    let surviving_total: f64 = survivors.iter().map(|j| weights[*j]).sum();
    let partial_weights: Vec<f64> = survivors
        .iter()
        .map(|j| weights[*j] / surviving_total)
        .collect();
    let partial = MixtureSolution::from_parts(
        partial_weights,
        survivors
            .iter()
            .map(|j| means[*j].clone().unwrap())
            .collect(),
        survivors
            .iter()
            .map(|j| covs[*j].clone().unwrap())
            .collect(),
        survivors
            .iter()
            .map(|j| chols[*j].clone().unwrap())
            .collect(),
        f64::NAN,
    );
    let lp = weighted_log_prob(data, &partial);
    let mut density: Vec<(f64, usize)> = (0..n).map(|i| (row_log_sum_exp(&lp, i), i)).collect();
    density.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let donor_refs: Vec<&SymMatrix> = survivors
        .iter()
        .map(|j| covs[*j].as_ref().unwrap())
        .collect();
    let reset_cov = SymMatrix::average(&donor_refs)?;

    for (slot, &j) in degenerate.iter().enumerate() {
        let sample = density[slot % n].1;
        let (cov, chol) = ensure_positive_definite(reset_cov.clone())?;
        means[j] = Some(data.row(sample).transpose());
        covs[j] = Some(cov);
        chols[j] = Some(chol);
        weights[j] = 1.0 / k as f64;
    }
    Ok(())
}

/// Alternates expectation and maximization until the absolute change in
/// log-likelihood drops below the tolerance or the iteration cap is reached,
/// returning the iterate with the highest observed log-likelihood.
pub fn em_fit(
    data: &DMatrix<f64>,
    init: MixtureSolution,
    method: RegularizationMethod,
    config: &FitConfig,
) -> Result<MixtureSolution> {
    config.validate()?;
    if init.dim() != data.ncols() {
        return Err(Error::InvalidParameter(
            "initial solution dimension does not match the data".into(),
        ));
    }

    let mut current = init;
    let mut prev = loglik(data, &current);
    current.set_fitness(prev);
    let mut best = current.clone();

    for _ in 0..config.max_iterations {
        let (resp, _) = e_step(data, &current);
        let next = m_step(data, &resp, method)?;
        let ll = next.fitness();
        if best.fitness().is_nan() || ll > best.fitness() {
            best = next.clone();
        }
        let delta = (ll - prev).abs();
        prev = ll;
        current = next;
        if delta < config.tolerance {
            break;
        }
    }
    Ok(best)
}

/// Argmax ownership per row; ties go to the lowest index.
pub fn hard_assign(responsibilities: &Responsibilities) -> Vec<usize> {
    let (n, k) = responsibilities.0.shape();
    (0..n)
        .map(|i| {
            let mut best = 0;
            for j in 1..k {
                if responsibilities.0[(i, j)] > responsibilities.0[(i, best)] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
