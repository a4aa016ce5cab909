//! Synthetic Gaussian-mixture datasets with controlled cluster separation.
//!
//! Cluster shapes come from uniformly drawn eigenvalue spectra on random
//! orthonormal frames; cluster positions are rescaled by bisection until the
//! minimum pairwise separation index hits the requested level.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::covariance::{cholesky, SymMatrix};
use crate::error::{Error, Result};
use crate::gmm::{self, MixtureSolution};

/// Recipe for one synthetic dataset.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DatasetSpec {
    pub k: usize,
    pub d: usize,
    /// Target minimum pairwise separation index, in (-1, 1).
    pub c: f64,
    /// Total sample count; defaults to `100 * k`.
    #[serde(default)]
    pub n: Option<usize>,
    /// Range of the uniformly drawn covariance eigenvalues.
    #[serde(default = "default_eig_range")]
    pub eig_range: (f64, f64),
    pub seed: u64,
}

fn default_eig_range() -> (f64, f64) {
    (1.0, 200.0)
}

impl DatasetSpec {
    pub fn n(&self) -> usize {
        self.n.unwrap_or(100 * self.k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.d == 0 {
            return Err(Error::InvalidParameter("k and d must be positive".into()));
        }
        if self.n() < self.k {
            return Err(Error::InvalidParameter(format!(
                "n = {} is smaller than k = {}",
                self.n(),
                self.k
            )));
        }
        if !(self.c > -1.0 && self.c < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "separation target must lie in (-1, 1), got {}",
                self.c
            )));
        }
        let (lo, hi) = self.eig_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidParameter(
                "eigenvalue range must be positive and ordered".into(),
            ));
        }
        Ok(())
    }
}

/// Planted labels and mixture parameters for a generated dataset.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub labels: Vec<usize>,
    pub mixture: MixtureSolution,
}

/// Separation index of two Gaussians along their mean-difference direction.
///
/// Projecting on `a = (mu2 - mu1)/||mu2 - mu1||` gives means `m_i` and
/// deviations `s_i = sqrt(a' S_i a)`; with `z` the standard-normal quantile
/// at `1 - alpha/2` the index is the signed gap between the `z`-quantile
/// intervals relative to their span: -1 for full overlap, 0 for touching
/// intervals, approaching 1 with growing distance. Coincident means return
/// -1 by convention.
pub fn separation_index(
    mu1: &DVector<f64>,
    cov1: &SymMatrix,
    mu2: &DVector<f64>,
    cov2: &SymMatrix,
    alpha: f64,
) -> f64 {
    let diff = mu2 - mu1;
    let dist = diff.norm();
    if dist == 0.0 {
        return -1.0;
    }
    let a = diff / dist;
    let s1 = (a.dot(&(cov1.matrix() * &a))).max(0.0).sqrt();
    let s2 = (a.dot(&(cov2.matrix() * &a))).max(0.0).sqrt();
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    // m2 - m1 = dist > 0, so the projected means are already ordered
    (dist - z * (s1 + s2)) / (dist + z * (s1 + s2))
}

/// Quantile level used by the generator when calibrating separation.
pub const DEFAULT_SEPARATION_ALPHA: f64 = 0.05;

fn min_pairwise_separation(means: &[DVector<f64>], covs: &[SymMatrix], scale: f64) -> f64 {
    let k = means.len();
    let mut min = f64::INFINITY;
    for i in 0..k {
        for j in (i + 1)..k {
            let a = means[i].scale(scale);
            let b = means[j].scale(scale);
            min = min.min(separation_index(
                &a,
                &covs[i],
                &b,
                &covs[j],
                DEFAULT_SEPARATION_ALPHA,
            ));
        }
    }
    min
}

/// Random orthonormal frame: QR of a Gaussian matrix with column signs fixed
/// so the factorization is unique.
fn random_orthonormal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..d {
        if r[(c, c)] < 0.0 {
            for i in 0..d {
                q[(i, c)] = -q[(i, c)];
            }
        }
    }
    q
}

fn random_covariance(rng: &mut ChaCha8Rng, d: usize, eig_range: (f64, f64)) -> SymMatrix {
    let eigenvalues: Vec<f64> = (0..d)
        .map(|_| rng.random_range(eig_range.0..=eig_range.1))
        .collect();
    let q = random_orthonormal(rng, d);
    let lambda = DMatrix::from_diagonal(&DVector::from_row_slice(&eigenvalues));
    let mut sigma = &q * lambda * q.transpose();
    for i in 0..d {
        for j in (i + 1)..d {
            let s = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
            sigma[(i, j)] = s;
            sigma[(j, i)] = s;
        }
    }
    SymMatrix::new_unchecked(sigma)
}

const SEPARATION_TOLERANCE: f64 = 0.01;
const BISECTION_RANGE: (f64, f64) = (1e-3, 1e3);
const BISECTION_BUDGET: usize = 100;

/// Global radial factor for the mean configuration such that the minimum
/// pairwise separation index lands within +/-0.01 of the target.
fn calibrate_scale(means: &[DVector<f64>], covs: &[SymMatrix], target: f64) -> Result<f64> {
    let (mut lo, mut hi) = BISECTION_RANGE;
    let f_lo = min_pairwise_separation(means, covs, lo);
    let f_hi = min_pairwise_separation(means, covs, hi);
    if f_lo > target || f_hi < target {
        return Err(Error::GenerationFailure(format!(
            "separation target {target} not bracketed by scales {lo}..{hi} \
             (indices {f_lo:.4}..{f_hi:.4})"
        )));
    }
    for _ in 0..BISECTION_BUDGET {
        let mid = 0.5 * (lo + hi);
        let value = min_pairwise_separation(means, covs, mid);
        if (value - target).abs() <= SEPARATION_TOLERANCE {
            return Ok(mid);
        }
        if value < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::GenerationFailure(format!(
        "bisection did not reach separation {target} within {BISECTION_BUDGET} iterations"
    )))
}

/// Draws a labeled sample of the planted mixture described by `spec`.
///
/// Cluster sizes are as equal as possible; rows are returned shuffled. The
/// returned ground truth carries the planted parameters with their
/// log-likelihood on the generated data.
pub fn generate(spec: &DatasetSpec) -> Result<(DMatrix<f64>, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (k, d, n) = (spec.k, spec.d, spec.n());

    let covs: Vec<SymMatrix> = (0..k)
        .map(|_| random_covariance(&mut rng, d, spec.eig_range))
        .collect();
    let chols = covs.iter().map(cholesky).collect::<Result<Vec<_>>>()?;

    // means i.i.d. standard normal scaled by sqrt(d), then one radial factor
    let sqrt_d = (d as f64).sqrt();
    let raw_means: Vec<DVector<f64>> = (0..k)
        .map(|_| DVector::from_fn(d, |_, _| sqrt_d * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let scale = if k >= 2 {
        calibrate_scale(&raw_means, &covs, spec.c)?
    } else {
        1.0
    };
    let means: Vec<DVector<f64>> = raw_means.iter().map(|m| m.scale(scale)).collect();

    let base = n / k;
    let remainder = n % k;
    let sizes: Vec<usize> = (0..k).map(|j| base + usize::from(j < remainder)).collect();

    let mut rows: Vec<(DVector<f64>, usize)> = Vec::with_capacity(n);
    for j in 0..k {
        for _ in 0..sizes[j] {
            let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &means[j] + chols[j].lower() * z;
            rows.push((x, j));
        }
    }
    rows.shuffle(&mut rng);

    let mut data = DMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for (i, (x, label)) in rows.into_iter().enumerate() {
        data.row_mut(i).copy_from(&x.transpose());
        labels.push(label);
    }

    let weights: Vec<f64> = sizes.iter().map(|s| *s as f64 / n as f64).collect();
    let mut mixture = MixtureSolution::from_parts(weights, means, covs, chols, f64::NAN);
    let fitness = gmm::loglik(&data, &mixture);
    mixture.set_fitness(fitness);

    Ok((data, GroundTruth { labels, mixture }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spherical(d: usize, scale: f64) -> SymMatrix {
        SymMatrix::scaled_identity(d, scale)
    }

    #[test]
    fn separation_identical_gaussians_is_minus_one() {
        let mu = DVector::from_row_slice(&[1.0, 2.0]);
        let cov = spherical(2, 3.0);
        assert_eq!(separation_index(&mu, &cov, &mu, &cov, 0.05), -1.0);
    }

    #[test]
    fn separation_touching_quantile_intervals_is_zero() {
        // distance chosen as z * (s1 + s2) makes the numerator vanish
        let z = Normal::standard().inverse_cdf(0.975);
        let s1 = 1.0;
        let s2 = 2.0;
        let mu1 = DVector::from_row_slice(&[0.0]);
        let mu2 = DVector::from_row_slice(&[z * (s1 + s2)]);
        let value = separation_index(
            &mu1,
            &spherical(1, s1 * s1),
            &mu2,
            &spherical(1, s2 * s2),
            0.05,
        );
        assert_relative_eq!(value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn separation_approaches_one_with_distance() {
        let cov = spherical(2, 1.0);
        let mu1 = DVector::from_row_slice(&[0.0, 0.0]);
        let mu2 = DVector::from_row_slice(&[1e6, 0.0]);
        let value = separation_index(&mu1, &cov, &mu2, &cov, 0.05);
        assert!(value > 0.9999);
    }

    #[test]
    fn separation_is_symmetric_and_monotone_in_distance() {
        let cov1 = spherical(2, 2.0);
        let cov2 = spherical(2, 5.0);
        let mu1 = DVector::from_row_slice(&[0.0, 0.0]);
        let mut prev = -1.0;
        for step in 1..20 {
            let mu2 = DVector::from_row_slice(&[step as f64, 0.5]);
            let forward = separation_index(&mu1, &cov1, &mu2, &cov2, 0.05);
            let backward = separation_index(&mu2, &cov2, &mu1, &cov1, 0.05);
            assert_relative_eq!(forward, backward, max_relative = 1e-12);
            assert!(forward > prev, "index not increasing at step {step}");
            prev = forward;
        }
    }

    #[test]
    fn generate_single_cluster() {
        let spec = DatasetSpec {
            k: 1,
            d: 3,
            c: 0.0,
            n: Some(50),
            eig_range: (1.0, 10.0),
            seed: 5,
        };
        let (data, truth) = generate(&spec).unwrap();
        assert_eq!(data.shape(), (50, 3));
        assert!(truth.labels.iter().all(|l| *l == 0));
        assert_eq!(truth.mixture.k(), 1);
    }

    #[test]
    fn generated_separation_matches_target() {
        for seed in [1, 2, 3] {
            let spec = DatasetSpec {
                k: 3,
                d: 5,
                c: 0.21,
                n: Some(30), // parameters only matter, keep sampling cheap
                eig_range: (1.0, 200.0),
                seed,
            };
            let (_, truth) = generate(&spec).unwrap();
            let m = &truth.mixture;
            let mut min = f64::INFINITY;
            for i in 0..3 {
                for j in (i + 1)..3 {
                    min = min.min(separation_index(
                        m.mean(i),
                        m.covariance(i),
                        m.mean(j),
                        m.covariance(j),
                        0.05,
                    ));
                }
            }
            assert!(
                (min - 0.21).abs() <= 0.01,
                "seed {seed}: separation {min} is off target"
            );
        }
    }

    #[test]
    fn generated_spectra_match_planted_eigenvalues() {
        // with 100 samples per cluster the sample eigenvalues should sit
        // within 20% of the planted ones
        let spec = DatasetSpec {
            k: 2,
            d: 3,
            c: 0.21,
            n: None,
            eig_range: (1.0, 200.0),
            seed: 25,
        };
        let (data, truth) = generate(&spec).unwrap();
        assert_eq!(data.nrows(), 200);
        for j in 0..2 {
            let members: Vec<usize> = (0..data.nrows())
                .filter(|i| truth.labels[*i] == j)
                .collect();
            assert_eq!(members.len(), 100);
            let weights: Vec<f64> = (0..data.nrows())
                .map(|i| if truth.labels[i] == j { 1.0 } else { 0.0 })
                .collect();
            let (_, sample_cov, _) = crate::covariance::weighted_moments(&data, &weights).unwrap();

            let mut planted: Vec<f64> = truth
                .mixture
                .covariance(j)
                .matrix()
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .collect();
            let mut observed: Vec<f64> = sample_cov
                .matrix()
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .collect();
            planted.sort_by(f64::total_cmp);
            observed.sort_by(f64::total_cmp);
            for (p, o) in planted.iter().zip(&observed) {
                assert!(
                    (o - p).abs() <= 0.2 * p,
                    "cluster {j}: eigenvalue {o} vs planted {p}"
                );
            }
        }
    }

    #[test]
    fn cluster_sizes_differ_by_at_most_one() {
        let spec = DatasetSpec {
            k: 3,
            d: 2,
            c: 0.01,
            n: Some(100),
            eig_range: (1.0, 50.0),
            seed: 9,
        };
        let (_, truth) = generate(&spec).unwrap();
        let mut counts = [0usize; 3];
        for &l in &truth.labels {
            counts[l] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), 100);
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn generation_is_bit_reproducible() {
        let spec = DatasetSpec {
            k: 2,
            d: 4,
            c: 0.1,
            n: Some(60),
            eig_range: (1.0, 30.0),
            seed: 77,
        };
        let (a, ta) = generate(&spec).unwrap();
        let (b, tb) = generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta.labels, tb.labels);
        assert_eq!(
            ta.mixture.fitness().to_bits(),
            tb.mixture.fitness().to_bits()
        );
    }

    #[test]
    fn generate_validates_spec() {
        let bad = DatasetSpec {
            k: 0,
            d: 2,
            c: 0.1,
            n: None,
            eig_range: (1.0, 200.0),
            seed: 1,
        };
        assert!(generate(&bad).is_err());
        let bad_c = DatasetSpec {
            k: 2,
            d: 2,
            c: 1.5,
            n: None,
            eig_range: (1.0, 200.0),
            seed: 1,
        };
        assert!(generate(&bad_c).is_err());
    }
}
