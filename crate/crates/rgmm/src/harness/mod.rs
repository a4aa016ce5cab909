//! Experiment orchestration: method x regularizer x seed grids over loaded
//! or generated datasets, with per-run metric records and report emission.

pub mod io;
pub mod report;

use std::collections::BTreeSet;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::RegularizationMethod;
use crate::datagen::{self, DatasetSpec};
use crate::error::{Error, Result};
use crate::exec;
use crate::gmm::{self, FitConfig, MixtureSolution};
use crate::kmeans::{self, CentroidSolution};
use crate::metrics;
use crate::search::{self, stream_rng, GmmDomain, KmeansDomain, SearchConfig};

pub use report::{emit_report, ReportFormat};

/// Clustering algorithm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Kmeans,
    KmeansHg,
    Gmm,
    GmmMs,
    GmmRs,
    GmmHg,
}

impl Algorithm {
    pub fn is_gmm(&self) -> bool {
        matches!(
            self,
            Algorithm::Gmm | Algorithm::GmmMs | Algorithm::GmmRs | Algorithm::GmmHg
        )
    }

    fn name(&self) -> &'static str {
        match self {
            Algorithm::Kmeans => "kmeans",
            Algorithm::KmeansHg => "kmeans_hg",
            Algorithm::Gmm => "gmm",
            Algorithm::GmmMs => "gmm_ms",
            Algorithm::GmmRs => "gmm_rs",
            Algorithm::GmmHg => "gmm_hg",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(Algorithm::Kmeans),
            "kmeans_hg" => Ok(Algorithm::KmeansHg),
            "gmm" => Ok(Algorithm::Gmm),
            "gmm_ms" => Ok(Algorithm::GmmMs),
            "gmm_rs" => Ok(Algorithm::GmmRs),
            "gmm_hg" => Ok(Algorithm::GmmHg),
            other => Err(Error::InvalidParameter(format!(
                "unknown algorithm {other:?} (expected kmeans, kmeans_hg, gmm, gmm_ms, gmm_rs, gmm_hg)"
            ))),
        }
    }
}

/// One column of the comparison tables: an algorithm plus its covariance
/// regularizer (ignored by the k-means variants).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MethodSpec {
    pub algorithm: Algorithm,
    #[serde(default = "default_regularizer")]
    pub regularizer: RegularizationMethod,
}

fn default_regularizer() -> RegularizationMethod {
    RegularizationMethod::Empirical
}

impl MethodSpec {
    /// Stable row label, e.g. `gmm_hg_shrunk`; k-means variants carry no
    /// regularizer suffix.
    pub fn label(&self) -> String {
        if !self.algorithm.is_gmm() {
            return self.algorithm.name().to_string();
        }
        match self.regularizer {
            RegularizationMethod::Empirical => self.algorithm.name().to_string(),
            reg => format!("{}_{}", self.algorithm.name(), reg).replace(':', ""),
        }
    }
}

/// Where the experiment data comes from: a CSV on disk or a generated
/// synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSource {
    Path(String),
    Synthetic(DatasetSpec),
}

/// Population bounds and stall budget shared by every strategy in a grid;
/// the per-run seed comes from the `seeds` list.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SearchParams {
    pub n_it: usize,
    pub pi_min: usize,
    pub pi_max: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        let base = SearchConfig::default();
        Self {
            n_it: base.n_it,
            pi_min: base.pi_min,
            pi_max: base.pi_max,
        }
    }
}

impl SearchParams {
    fn with_seed(&self, seed: u64) -> SearchConfig {
        SearchConfig {
            n_it: self.n_it,
            pi_min: self.pi_min,
            pi_max: self.pi_max,
            seed,
        }
    }
}

/// Full experiment description, mirrored by the JSON config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub has_labels: bool,
    pub k: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Explicit seeds; defaults to `1..=runs`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub standardize: bool,
    pub methods: Vec<MethodSpec>,
    /// Reference method label for pairwise Wilcoxon tests in reports.
    #[serde(default)]
    pub reference: Option<String>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub search: SearchParams,
}

fn default_runs() -> usize {
    10
}

impl ExperimentConfig {
    pub fn seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(seeds) => seeds.clone(),
            None => (1..=self.runs as u64).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidParameter("runs must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one method is required".into(),
            ));
        }
        if self.seeds().is_empty() {
            return Err(Error::InvalidParameter("empty seed list".into()));
        }
        let mut labels = BTreeSet::new();
        for method in &self.methods {
            if !labels.insert(method.label()) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate method {}",
                    method.label()
                )));
            }
        }
        if let Some(reference) = &self.reference {
            if !labels.contains(reference) {
                return Err(Error::InvalidParameter(format!(
                    "reference method {reference:?} is not in the method list"
                )));
            }
        }
        self.fit.validate()?;
        Ok(())
    }
}

/// Outcome of one (method, seed) cell.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub method: String,
    pub seed: u64,
    /// Strategy objective: log-likelihood for GMM variants, negated SSE for
    /// k-means variants. NaN when the run failed.
    pub fitness: f64,
    pub ari: Option<f64>,
    pub nmi: Option<f64>,
    pub ci: Option<usize>,
    pub wall_time_seconds: f64,
    pub failed: bool,
    pub error: Option<String>,
}

/// Fitted model of one run, reduced to what the metrics need.
enum FittedModel {
    Mixture(MixtureSolution),
    Centroids(CentroidSolution),
}

impl FittedModel {
    fn fitness(&self) -> f64 {
        match self {
            FittedModel::Mixture(m) => m.fitness(),
            FittedModel::Centroids(c) => -c.sse(),
        }
    }

    fn labels(&self, data: &DMatrix<f64>) -> Vec<usize> {
        match self {
            FittedModel::Mixture(m) => {
                let (resp, _) = gmm::e_step(data, m);
                gmm::hard_assign(&resp)
            }
            FittedModel::Centroids(c) => c.assign(data),
        }
    }

    fn centers(&self) -> Vec<DVector<f64>> {
        match self {
            FittedModel::Mixture(m) => m.means().to_vec(),
            FittedModel::Centroids(c) => c.centers().to_vec(),
        }
    }
}

fn run_method(
    data: &DMatrix<f64>,
    method: &MethodSpec,
    k: usize,
    seed: u64,
    fit: &FitConfig,
    params: &SearchParams,
) -> Result<FittedModel> {
    let config = params.with_seed(seed);
    match method.algorithm {
        Algorithm::Kmeans => {
            let mut rng = stream_rng(seed, 0);
            let centers = kmeans::random_centers(data, k, &mut rng)?;
            Ok(FittedModel::Centroids(kmeans::lloyd_fit(
                data, &centers, fit,
            )?))
        }
        Algorithm::KmeansHg => {
            let domain = KmeansDomain { data, k, fit: *fit };
            Ok(FittedModel::Centroids(search::hgs(&domain, &config)?))
        }
        Algorithm::Gmm => {
            let mut rng = stream_rng(seed, 0);
            let init = gmm::init_random(data, k, &mut rng)?;
            Ok(FittedModel::Mixture(gmm::em_fit(
                data,
                init,
                method.regularizer,
                fit,
            )?))
        }
        Algorithm::GmmMs | Algorithm::GmmRs | Algorithm::GmmHg => {
            let domain = GmmDomain {
                data,
                k,
                method: method.regularizer,
                fit: *fit,
            };
            let solution = match method.algorithm {
                Algorithm::GmmMs => search::multi_start(&domain, &config)?,
                Algorithm::GmmRs => search::random_swap(&domain, &config)?,
                _ => search::hgs(&domain, &config)?,
            };
            Ok(FittedModel::Mixture(solution))
        }
    }
}

/// Per-class mean vectors, for the centroid index against ground truth.
fn class_centroids(data: &DMatrix<f64>, labels: &[usize]) -> Vec<DVector<f64>> {
    let classes: BTreeSet<usize> = labels.iter().cloned().collect();
    let d = data.ncols();
    classes
        .into_iter()
        .map(|class| {
            let mut sum = DVector::zeros(d);
            let mut count = 0.0;
            for (i, &l) in labels.iter().enumerate() {
                if l == class {
                    sum += data.row(i).transpose();
                    count += 1.0;
                }
            }
            sum / count
        })
        .collect()
}

/// Materializes the dataset named by the config, generating synthetic data
/// on the fly (whose planted labels count as ground truth).
pub fn resolve_dataset(config: &ExperimentConfig) -> Result<(DMatrix<f64>, Option<Vec<usize>>)> {
    let (mut data, labels) = match &config.dataset {
        DatasetSource::Path(path) => io::load_dataset(path, config.has_labels)?,
        DatasetSource::Synthetic(spec) => {
            let (data, truth) = datagen::generate(spec)?;
            (data, Some(truth.labels))
        }
    };
    if config.standardize {
        io::standardize(&mut data);
    }
    Ok((data, labels))
}

/// Runs the full (method, seed) grid. Cells execute independently (in
/// parallel when enabled); failures are recorded without aborting the grid.
/// Records come back sorted by method label, then seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let (data, labels) = resolve_dataset(config)?;
    if config.k > data.nrows() {
        return Err(Error::InvalidParameter(format!(
            "k = {} exceeds the {} samples of the dataset",
            config.k,
            data.nrows()
        )));
    }

    let truth_centers = labels.as_ref().and_then(|labels| {
        let centers = class_centroids(&data, labels);
        (centers.len() == config.k).then_some(centers)
    });

    let seeds = config.seeds();
    let mut cells: Vec<(MethodSpec, u64)> = Vec::new();
    for method in &config.methods {
        for &seed in &seeds {
            cells.push((*method, seed));
        }
    }

    let mut records = exec::map_indexed(cells.len(), |idx| {
        let (method, seed) = &cells[idx];
        let started = Instant::now();
        let outcome = run_method(&data, method, config.k, *seed, &config.fit, &config.search);
        let wall_time_seconds = started.elapsed().as_secs_f64();
        match outcome {
            Ok(model) => {
                let (ari, nmi, ci) = match &labels {
                    Some(truth) => {
                        let predicted = model.labels(&data);
                        let ari = metrics::ari(truth, &predicted).ok();
                        let nmi = metrics::nmi(truth, &predicted).ok();
                        let ci = truth_centers
                            .as_ref()
                            .and_then(|tc| metrics::centroid_index(tc, &model.centers()).ok());
                        (ari, nmi, ci)
                    }
                    None => (None, None, None),
                };
                RunRecord {
                    method: method.label(),
                    seed: *seed,
                    fitness: model.fitness(),
                    ari,
                    nmi,
                    ci,
                    wall_time_seconds,
                    failed: false,
                    error: None,
                }
            }
            Err(err) => RunRecord {
                method: method.label(),
                seed: *seed,
                fitness: f64::NAN,
                ari: None,
                nmi: None,
                ci: None,
                wall_time_seconds,
                failed: true,
                error: Some(err.to_string()),
            },
        }
    });

    records.sort_by(|a, b| a.method.cmp(&b.method).then(a.seed.cmp(&b.seed)));
    Ok(records)
}
