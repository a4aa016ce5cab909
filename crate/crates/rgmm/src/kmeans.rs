//! Lloyd's k-means baseline, sharing the convergence knobs and search
//! contract of the mixture code.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gmm::FitConfig;

/// Cluster centers and the sum of squared Euclidean distances of every
/// sample to its nearest center.
#[derive(Debug, Clone)]
pub struct CentroidSolution {
    centers: Vec<DVector<f64>>,
    sse: f64,
}

impl CentroidSolution {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn centers(&self) -> &[DVector<f64>] {
        &self.centers
    }

    pub fn center(&self, j: usize) -> &DVector<f64> {
        &self.centers[j]
    }

    pub fn sse(&self) -> f64 {
        self.sse
    }

    pub(crate) fn with_centers_unscored(centers: Vec<DVector<f64>>) -> Self {
        Self {
            centers,
            sse: f64::NAN,
        }
    }

    /// Nearest-center label per row; ties go to the lowest index.
    pub fn assign(&self, data: &DMatrix<f64>) -> Vec<usize> {
        (0..data.nrows())
            .map(|i| self.nearest(&data.row(i).transpose()).0)
            .collect()
    }

    fn nearest(&self, x: &DVector<f64>) -> (usize, f64) {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (j, c) in self.centers.iter().enumerate() {
            let dist = (x - c).norm_squared();
            if dist < best_dist {
                best_dist = dist;
                best = j;
            }
        }
        (best, best_dist)
    }
}

/// `k` distinct sample rows, drawn without replacement.
pub fn random_centers<R: Rng>(
    data: &DMatrix<f64>,
    k: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let n = data.nrows();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds the number of samples {n}"
        )));
    }
    Ok(rand::seq::index::sample(rng, n, k)
        .iter()
        .map(|i| data.row(i).transpose())
        .collect())
}

/// Lloyd iterations from explicit initial centers.
///
/// Alternates nearest-center assignment and center recomputation until the
/// SSE change falls below the tolerance or the iteration cap is reached.
/// A cluster left empty by the assignment step is relocated to the sample
/// farthest from its own center.
pub fn lloyd_fit(
    data: &DMatrix<f64>,
    init_centers: &[DVector<f64>],
    config: &FitConfig,
) -> Result<CentroidSolution> {
    config.validate()?;
    let (n, d) = data.shape();
    let k = init_centers.len();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= k <= {n}, got k = {k}"
        )));
    }
    if init_centers.iter().any(|c| c.len() != d) {
        return Err(Error::InvalidParameter(
            "center dimension does not match the data".into(),
        ));
    }

    let mut centers: Vec<DVector<f64>> = init_centers.to_vec();
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut prev_sse = f64::INFINITY;
    let mut sse = f64::INFINITY;

    for _ in 0..config.max_iterations {
        // assignment against the current centers
        for i in 0..n {
            let x = data.row(i).transpose();
            let mut best = 0;
            let mut best_dist = f64::INFINITY;
            for (j, c) in centers.iter().enumerate() {
                let dist = (&x - c).norm_squared();
                if dist < best_dist {
                    best_dist = dist;
                    best = j;
                }
            }
            labels[i] = best;
            dists[i] = best_dist;
        }

        // center update
        let mut counts = vec![0usize; k];
        let mut sums = vec![DVector::<f64>::zeros(d); k];
        for i in 0..n {
            counts[labels[i]] += 1;
            sums[labels[i]] += data.row(i).transpose();
        }
        let mut taken: Vec<usize> = Vec::new();
        for j in 0..k {
            if counts[j] == 0 {
                // farthest-point relocation, successive picks distinct
                let far = (0..n)
                    .filter(|i| !taken.contains(i))
                    .max_by(|a, b| dists[*a].total_cmp(&dists[*b]))
                    .expect("more samples than clusters");
                taken.push(far);
                centers[j] = data.row(far).transpose();
            } else {
                centers[j] = &sums[j] / counts[j] as f64;
            }
        }

        // fresh SSE under the updated centers
        sse = 0.0;
        for i in 0..n {
            let x = data.row(i).transpose();
            let mut best = f64::INFINITY;
            for c in &centers {
                best = best.min((&x - c).norm_squared());
            }
            sse += best;
        }
        if (prev_sse - sse).abs() < config.tolerance {
            break;
        }
        prev_sse = sse;
    }

    Ok(CentroidSolution { centers, sse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn data_equal_to_centers_is_a_fixed_point() {
        let data = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 5.0, 5.0, -4.0, 2.0]);
        let centers: Vec<DVector<f64>> = (0..3).map(|i| data.row(i).transpose()).collect();
        let sol = lloyd_fit(&data, &centers, &FitConfig::default()).unwrap();
        assert_eq!(sol.sse(), 0.0);
        for (j, center) in centers.iter().enumerate() {
            assert_eq!(sol.center(j), center);
        }
    }

    #[test]
    fn two_blob_hand_case() {
        let data = DMatrix::from_row_slice(4, 1, &[0.0, 0.1, 10.0, 10.1]);
        let init = vec![
            DVector::from_row_slice(&[0.0]),
            DVector::from_row_slice(&[10.0]),
        ];
        let config = FitConfig {
            tolerance: 1e-12,
            max_iterations: 100,
        };
        let sol = lloyd_fit(&data, &init, &config).unwrap();
        let mut centers: Vec<f64> = sol.centers().iter().map(|c| c[0]).collect();
        centers.sort_by(f64::total_cmp);
        assert_relative_eq!(centers[0], 0.05);
        assert_relative_eq!(centers[1], 10.05);
    }

    #[test]
    fn k_one_finds_grand_mean() {
        let data = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 2.0, 0.0, 0.0, 2.0, 2.0, 2.0]);
        let init = vec![DVector::from_row_slice(&[0.0, 0.0])];
        let sol = lloyd_fit(&data, &init, &FitConfig::default()).unwrap();
        assert_relative_eq!(sol.center(0)[0], 1.0);
        assert_relative_eq!(sol.center(0)[1], 1.0);
    }

    #[test]
    fn rejects_more_clusters_than_samples() {
        let data = DMatrix::zeros(2, 1);
        let init = vec![DVector::zeros(1); 3];
        assert!(matches!(
            lloyd_fit(&data, &init, &FitConfig::default()),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn sse_is_monotone_per_iteration() {
        let mut rng = StdRng::seed_from_u64(8);
        let data = DMatrix::from_fn(60, 2, |_, _| rand::Rng::random_range(&mut rng, -5.0..5.0));
        let init = random_centers(&data, 4, &mut rng).unwrap();
        // run iteration by iteration via max_iterations and check the SSE trace
        let mut prev = f64::INFINITY;
        for iters in 1..15 {
            let config = FitConfig {
                tolerance: 0.0,
                max_iterations: iters,
            };
            let sse = lloyd_fit(&data, &init, &config).unwrap().sse();
            assert!(sse <= prev + 1e-10, "sse increased: {prev} -> {sse}");
            prev = sse;
        }
    }

    #[test]
    fn empty_cluster_is_repaired() {
        // two identical initial centers force an empty cluster on assignment
        let data = DMatrix::from_row_slice(4, 1, &[0.0, 0.2, 9.0, 9.3]);
        let init = vec![
            DVector::from_row_slice(&[0.0]),
            DVector::from_row_slice(&[0.0]),
        ];
        let config = FitConfig {
            tolerance: 1e-9,
            max_iterations: 50,
        };
        let sol = lloyd_fit(&data, &init, &config).unwrap();
        let mut centers: Vec<f64> = sol.centers().iter().map(|c| c[0]).collect();
        centers.sort_by(f64::total_cmp);
        assert_relative_eq!(centers[0], 0.1);
        assert_relative_eq!(centers[1], 9.15);
    }

    #[test]
    fn row_permutation_does_not_change_result() {
        let mut rng = StdRng::seed_from_u64(31);
        let data = DMatrix::from_fn(40, 3, |_, _| rand::Rng::random_range(&mut rng, -3.0..3.0));
        let init = random_centers(&data, 3, &mut rng).unwrap();
        let config = FitConfig {
            tolerance: 1e-10,
            max_iterations: 200,
        };
        let base = lloyd_fit(&data, &init, &config).unwrap();

        let perm: Vec<usize> = (0..40).rev().collect();
        let permuted = DMatrix::from_fn(40, 3, |i, j| data[(perm[i], j)]);
        let shuffled = lloyd_fit(&permuted, &init, &config).unwrap();

        assert_relative_eq!(base.sse(), shuffled.sse(), max_relative = 1e-9);
        for j in 0..3 {
            assert_relative_eq!(
                base.center(j).as_slice(),
                shuffled.center(j).as_slice(),
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn random_centers_are_distinct_rows() {
        let data = DMatrix::from_fn(10, 2, |i, j| (i * 2 + j) as f64);
        let centers = random_centers(&data, 10, &mut StdRng::seed_from_u64(3)).unwrap();
        let mut firsts: Vec<f64> = centers.iter().map(|c| c[0]).collect();
        firsts.sort_by(f64::total_cmp);
        firsts.dedup();
        assert_eq!(firsts.len(), 10);
    }
}
