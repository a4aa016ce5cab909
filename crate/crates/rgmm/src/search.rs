//! Meta-search strategies over pluggable local searches: multi-start,
//! random swap, and a hybrid genetic search whose crossover matches parent
//! clusters through a minimum-cost assignment.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::covariance::{ensure_positive_definite, mahalanobis, RegularizationMethod, SymMatrix};
use crate::error::{Error, Result};
use crate::exec;
use crate::gmm::{self, FitConfig, MixtureSolution};
use crate::kmeans::{self, CentroidSolution};

/// RNG used by every stochastic search component.
pub type SearchRng = ChaCha8Rng;

/// Independent, reproducible RNG for work item `stream` of a seeded run.
///
/// Restarts seeded this way can run in any order (or in parallel) and still
/// produce bit-identical results.
pub fn stream_rng(seed: u64, stream: u64) -> SearchRng {
    // splitmix64 finalizer over the combined words
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    SearchRng::seed_from_u64(z)
}

/// Search budget and population bounds.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SearchConfig {
    /// Iterations without improvement before stopping (and the number of
    /// restarts for multi-start).
    pub n_it: usize,
    pub pi_min: usize,
    pub pi_max: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n_it: 100,
            pi_min: 10,
            pi_max: 20,
            seed: 1,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pi_min == 0 || self.pi_max == 0 {
            return Err(Error::InvalidParameter(
                "population bounds must be positive".into(),
            ));
        }
        if self.pi_min > self.pi_max {
            return Err(Error::InvalidParameter(format!(
                "pi_min {} exceeds pi_max {}",
                self.pi_min, self.pi_max
            )));
        }
        Ok(())
    }
}

/// Strict improvement beyond 1e-9 relative noise.
fn improved(new: f64, old: f64) -> bool {
    new - old > 1e-9 * old.abs().max(1.0)
}

fn same_objective(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Anything a population can rank.
pub trait Fitness {
    fn fitness(&self) -> f64;
}

impl Fitness for MixtureSolution {
    fn fitness(&self) -> f64 {
        MixtureSolution::fitness(self)
    }
}

impl Fitness for CentroidSolution {
    /// Negated SSE, so that higher is better for every strategy.
    fn fitness(&self) -> f64 {
        -self.sse()
    }
}

/// Square cost matrix for matching the clusters of two parents.
#[derive(Debug, Clone)]
pub struct AssignmentMatrix(DMatrix<f64>);

impl AssignmentMatrix {
    pub fn new(costs: DMatrix<f64>) -> Result<Self> {
        if !costs.is_square() || costs.is_empty() {
            return Err(Error::InvalidParameter(
                "cost matrix must be square and nonempty".into(),
            ));
        }
        for i in 0..costs.nrows() {
            for j in 0..costs.ncols() {
                let c = costs[(i, j)];
                if !c.is_finite() || c < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "cost ({i}, {j}) must be finite and nonnegative, got {c}"
                    )));
                }
            }
        }
        Ok(Self(costs))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

/// Minimum-cost assignment for a square cost matrix, solved in O(k^3) with
/// the potentials form of the Hungarian algorithm. Returns `sigma` with row
/// `i` matched to column `sigma[i]`.
pub fn hungarian(costs: &AssignmentMatrix) -> Vec<usize> {
    let n = costs.dim();
    let inf = f64::INFINITY;
    // 1-based potentials over rows (u) and columns (v); p[j] is the row
    // currently assigned to column j, with column 0 as the staging slot.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = costs.get(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

/// Symmetrized Mahalanobis matching cost between the clusters of two
/// mixtures: `c_ij = (maha(mu_i; mu_j, S_j) + maha(mu_j; mu_i, S_i)) / 2`.
pub fn matching_costs(p1: &MixtureSolution, p2: &MixtureSolution) -> Result<AssignmentMatrix> {
    if p1.k() != p2.k() || p1.dim() != p2.dim() {
        return Err(Error::InvalidParameter(
            "parents must share k and dimension".into(),
        ));
    }
    let k = p1.k();
    let costs = DMatrix::from_fn(k, k, |i, j| {
        0.5 * (mahalanobis(p1.mean(i), p2.mean(j), p2.chol(j))
            + mahalanobis(p2.mean(j), p1.mean(i), p1.chol(i)))
    });
    AssignmentMatrix::new(costs)
}

/// Offspring of two mixtures: clusters are paired by minimum-cost matching,
/// each pair contributes one parent's mean and covariance (coin flip) with
/// the averaged mixture weight, and the child's fitness is recomputed on the
/// data.
pub fn crossover(
    data: &DMatrix<f64>,
    p1: &MixtureSolution,
    p2: &MixtureSolution,
    rng: &mut SearchRng,
) -> Result<MixtureSolution> {
    let costs = matching_costs(p1, p2)?;
    let sigma = hungarian(&costs);
    let k = p1.k();

    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    let mut chols = Vec::with_capacity(k);
    for (i, &j) in sigma.iter().enumerate() {
        let take_first = rng.random_bool(0.5);
        let (mean, cov, chol) = if take_first {
            (p1.mean(i), p1.covariance(i), p1.chol(i))
        } else {
            (p2.mean(j), p2.covariance(j), p2.chol(j))
        };
        means.push(mean.clone());
        covs.push(cov.clone());
        chols.push(chol.clone());
        weights.push(0.5 * (p1.weights()[i] + p2.weights()[j]));
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }

    let mut child = MixtureSolution::from_parts(weights, means, covs, chols, f64::NAN);
    let fitness = gmm::loglik(data, &child);
    child.set_fitness(fitness);
    Ok(child)
}

/// Moves one uniformly chosen cluster onto one uniformly chosen sample and
/// resets its covariance to the average of the other clusters' covariances.
/// Weights are kept; the fitness is invalidated until the next local search.
/// With a single cluster the solution is returned unchanged.
pub fn mutate(
    solution: &MixtureSolution,
    data: &DMatrix<f64>,
    rng: &mut SearchRng,
) -> Result<MixtureSolution> {
    let k = solution.k();
    if k < 2 {
        return Ok(solution.clone());
    }
    let j = rng.random_range(0..k);
    let i = rng.random_range(0..data.nrows());

    let donors: Vec<&SymMatrix> = (0..k)
        .filter(|c| *c != j)
        .map(|c| solution.covariance(c))
        .collect();
    let averaged = SymMatrix::average(&donors)?;
    let (cov, chol) = ensure_positive_definite(averaged)?;

    let mut mutated = solution.clone();
    mutated.replace_component(j, data.row(i).transpose(), cov, chol);
    Ok(mutated)
}

/// Bounded multiset of solutions ranked by fitness.
#[derive(Debug, Clone)]
pub struct Population<S> {
    solutions: Vec<S>,
    pi_min: usize,
    pi_max: usize,
}

impl<S: Fitness + Clone> Population<S> {
    pub fn new(pi_min: usize, pi_max: usize) -> Result<Self> {
        if pi_min == 0 || pi_min > pi_max {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= pi_min <= pi_max, got {pi_min}, {pi_max}"
            )));
        }
        Ok(Self {
            solutions: Vec::new(),
            pi_min,
            pi_max,
        })
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn pi_min(&self) -> usize {
        self.pi_min
    }

    pub fn pi_max(&self) -> usize {
        self.pi_max
    }

    pub fn solutions(&self) -> &[S] {
        &self.solutions
    }

    pub fn push(&mut self, solution: S) {
        self.solutions.push(solution);
    }

    pub fn best(&self) -> Option<&S> {
        self.solutions
            .iter()
            .max_by(|a, b| a.fitness().total_cmp(&b.fitness()))
    }

    /// Draws two members uniformly with replacement and returns the fitter
    /// one (the first drawn on ties).
    pub fn binary_tournament(&self, rng: &mut SearchRng) -> Result<&S> {
        if self.solutions.is_empty() {
            return Err(Error::InvalidState("population is empty".into()));
        }
        let a = rng.random_range(0..self.solutions.len());
        let b = rng.random_range(0..self.solutions.len());
        if self.solutions[b].fitness() > self.solutions[a].fitness() {
            Ok(&self.solutions[b])
        } else {
            Ok(&self.solutions[a])
        }
    }

    /// Shrinks the population back to `pi_min`: equal-fitness clones go
    /// first (one representative per group survives), then the lowest-fitness
    /// members, never touching the best solution.
    pub fn survivor_selection(&mut self) {
        let n = self.solutions.len();
        if n <= self.pi_min {
            return;
        }
        // rank best-first; ties keep insertion order
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| {
            self.solutions[*b]
                .fitness()
                .total_cmp(&self.solutions[*a].fitness())
                .then(a.cmp(b))
        });

        // a member is a clone when its fitness matches the previous (better)
        // member in rank order
        let mut is_clone = vec![false; n];
        for rank in 1..n {
            let cur = self.solutions[order[rank]].fitness();
            let prev = self.solutions[order[rank - 1]].fitness();
            if same_objective(cur, prev) {
                is_clone[order[rank]] = true;
            }
        }

        let mut keep = vec![true; n];
        let mut size = n;
        // worst-first over clones, then worst-first over everything
        for &idx in order.iter().rev() {
            if size == self.pi_min {
                break;
            }
            if is_clone[idx] {
                keep[idx] = false;
                size -= 1;
            }
        }
        for &idx in order.iter().rev() {
            if size == self.pi_min {
                break;
            }
            if keep[idx] {
                keep[idx] = false;
                size -= 1;
            }
        }

        let mut iter = keep.iter();
        self.solutions.retain(|_| *iter.next().unwrap());
    }
}

/// A clustering problem a meta-strategy can drive: random construction,
/// local improvement, and the variation operators.
pub trait SearchDomain: Sync {
    type Solution: Fitness + Clone + Send + Sync;

    fn init_random(&self, rng: &mut SearchRng) -> Result<Self::Solution>;
    fn local_search(&self, start: Self::Solution) -> Result<Self::Solution>;
    fn crossover(
        &self,
        a: &Self::Solution,
        b: &Self::Solution,
        rng: &mut SearchRng,
    ) -> Result<Self::Solution>;
    fn mutate(&self, s: &Self::Solution, rng: &mut SearchRng) -> Result<Self::Solution>;
    /// Random-swap perturbation: relocate one cluster onto one sample,
    /// keeping everything else.
    fn relocate(&self, s: &Self::Solution, rng: &mut SearchRng) -> Result<Self::Solution>;
}

/// Gaussian mixture fitting with a fixed regularizer as the local search.
pub struct GmmDomain<'a> {
    pub data: &'a DMatrix<f64>,
    pub k: usize,
    pub method: RegularizationMethod,
    pub fit: FitConfig,
}

impl SearchDomain for GmmDomain<'_> {
    type Solution = MixtureSolution;

    fn init_random(&self, rng: &mut SearchRng) -> Result<MixtureSolution> {
        gmm::init_random(self.data, self.k, rng)
    }

    fn local_search(&self, start: MixtureSolution) -> Result<MixtureSolution> {
        gmm::em_fit(self.data, start, self.method, &self.fit)
    }

    fn crossover(
        &self,
        a: &MixtureSolution,
        b: &MixtureSolution,
        rng: &mut SearchRng,
    ) -> Result<MixtureSolution> {
        crossover(self.data, a, b, rng)
    }

    fn mutate(&self, s: &MixtureSolution, rng: &mut SearchRng) -> Result<MixtureSolution> {
        mutate(s, self.data, rng)
    }

    fn relocate(&self, s: &MixtureSolution, rng: &mut SearchRng) -> Result<MixtureSolution> {
        let k = s.k();
        let j = rng.random_range(0..k);
        let i = rng.random_range(0..self.data.nrows());
        let mut moved = s.clone();
        moved.relocate_mean(j, self.data.row(i).transpose());
        Ok(moved)
    }
}

/// Lloyd's k-means as the local search; matching costs are plain Euclidean
/// distances between centers.
pub struct KmeansDomain<'a> {
    pub data: &'a DMatrix<f64>,
    pub k: usize,
    pub fit: FitConfig,
}

impl SearchDomain for KmeansDomain<'_> {
    type Solution = CentroidSolution;

    fn init_random(&self, rng: &mut SearchRng) -> Result<CentroidSolution> {
        let centers = kmeans::random_centers(self.data, self.k, rng)?;
        Ok(CentroidSolution::with_centers_unscored(centers))
    }

    fn local_search(&self, start: CentroidSolution) -> Result<CentroidSolution> {
        kmeans::lloyd_fit(self.data, start.centers(), &self.fit)
    }

    fn crossover(
        &self,
        a: &CentroidSolution,
        b: &CentroidSolution,
        rng: &mut SearchRng,
    ) -> Result<CentroidSolution> {
        if a.k() != b.k() || a.dim() != b.dim() {
            return Err(Error::InvalidParameter(
                "parents must share k and dimension".into(),
            ));
        }
        let k = a.k();
        let costs = AssignmentMatrix::new(DMatrix::from_fn(k, k, |i, j| {
            (a.center(i) - b.center(j)).norm()
        }))?;
        let sigma = hungarian(&costs);
        let centers: Vec<DVector<f64>> = (0..k)
            .map(|i| {
                if rng.random_bool(0.5) {
                    a.center(i).clone()
                } else {
                    b.center(sigma[i]).clone()
                }
            })
            .collect();
        Ok(CentroidSolution::with_centers_unscored(centers))
    }

    fn mutate(&self, s: &CentroidSolution, rng: &mut SearchRng) -> Result<CentroidSolution> {
        self.relocate(s, rng)
    }

    fn relocate(&self, s: &CentroidSolution, rng: &mut SearchRng) -> Result<CentroidSolution> {
        if s.k() < 2 {
            return Ok(s.clone());
        }
        let j = rng.random_range(0..s.k());
        let i = rng.random_range(0..self.data.nrows());
        let mut centers = s.centers().to_vec();
        centers[j] = self.data.row(i).transpose();
        Ok(CentroidSolution::with_centers_unscored(centers))
    }
}

fn merge_restarts<S: Fitness>(results: Vec<Result<S>>) -> Result<S> {
    let mut best: Option<S> = None;
    let mut first_err: Option<Error> = None;
    for res in results {
        match res {
            Ok(sol) => match &best {
                Some(b) if sol.fitness() <= b.fitness() => {}
                _ => best = Some(sol),
            },
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    best.ok_or_else(|| first_err.expect("no results at all"))
}

/// Runs the local search from `n_it` random starting points and keeps the
/// highest-fitness result. Restarts execute independently (in parallel when
/// enabled) and merge by index, so results do not depend on scheduling.
pub fn multi_start<D: SearchDomain>(domain: &D, config: &SearchConfig) -> Result<D::Solution> {
    config.validate()?;
    if config.n_it == 0 {
        return Err(Error::InvalidParameter(
            "multi-start needs at least one restart".into(),
        ));
    }
    let results = exec::map_indexed(config.n_it, |i| {
        let mut rng = stream_rng(config.seed, 1 + i as u64);
        domain
            .init_random(&mut rng)
            .and_then(|init| domain.local_search(init))
    });
    merge_restarts(results)
}

/// Iterated local search with cluster relocation: perturb the incumbent,
/// re-optimize, keep the result only if it improves, and stop after `n_it`
/// consecutive failures.
pub fn random_swap<D: SearchDomain>(domain: &D, config: &SearchConfig) -> Result<D::Solution> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, 0);
    let init = domain.init_random(&mut rng)?;
    let mut incumbent = domain.local_search(init)?;

    let mut failures = 0;
    while failures < config.n_it {
        let perturbed = domain.relocate(&incumbent, &mut rng)?;
        match domain.local_search(perturbed) {
            Ok(candidate) if improved(candidate.fitness(), incumbent.fitness()) => {
                incumbent = candidate;
                failures = 0;
            }
            _ => failures += 1,
        }
    }
    Ok(incumbent)
}

/// Hybrid genetic search: a population of locally-optimized solutions is
/// evolved by tournament selection, matching-based crossover, mutation, and
/// local improvement, with survivor selection bounding the population.
pub fn hgs<D: SearchDomain>(domain: &D, config: &SearchConfig) -> Result<D::Solution> {
    config.validate()?;
    let seeds = exec::map_indexed(config.pi_max, |i| {
        let mut rng = stream_rng(config.seed, 1 + i as u64);
        domain
            .init_random(&mut rng)
            .and_then(|init| domain.local_search(init))
    });

    let mut population = Population::new(config.pi_min, config.pi_max)?;
    let mut first_err = None;
    for res in seeds {
        match res {
            Ok(sol) => population.push(sol),
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    let mut best = match population.best() {
        Some(b) => b.clone(),
        None => return Err(first_err.expect("initialization produced nothing")),
    };

    let mut rng = stream_rng(config.seed, 0);
    let mut stall = 0;
    while stall < config.n_it {
        let p1 = population.binary_tournament(&mut rng)?.clone();
        let p2 = population.binary_tournament(&mut rng)?.clone();
        let child = domain.crossover(&p1, &p2, &mut rng)?;
        let child = domain.mutate(&child, &mut rng)?;
        let child = match domain.local_search(child) {
            Ok(c) => c,
            Err(_) => {
                // a failed improvement counts as a generation without progress
                stall += 1;
                continue;
            }
        };

        let child_fitness = child.fitness();
        population.push(child);
        if population.len() > population.pi_max() {
            population.survivor_selection();
        }
        if improved(child_fitness, best.fitness()) {
            best = population
                .solutions()
                .iter()
                .max_by(|a, b| a.fitness().total_cmp(&b.fitness()))
                .expect("population is nonempty")
                .clone();
            stall = 0;
        } else {
            stall += 1;
        }
    }
    Ok(best)
}
