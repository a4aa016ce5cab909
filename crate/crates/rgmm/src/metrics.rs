//! External cluster-validity measures and the paired significance test used
//! by the benchmark harness.

use std::collections::BTreeMap;

use nalgebra::DVector;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

fn check_equal_length(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidParameter(format!(
            "label vectors differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidParameter("label vectors are empty".into()));
    }
    Ok(())
}

fn contingency(a: &[usize], b: &[usize]) -> BTreeMap<(usize, usize), u64> {
    let mut joint = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0u64) += 1;
    }
    joint
}

fn comb2(n: u64) -> i128 {
    (n as i128) * (n as i128 - 1) / 2
}

/// Adjusted Rand index: pair-counting agreement corrected for chance.
/// 1 for identical partitions, expectation 0 under independent uniform
/// assignment; both-trivial identical partitions score 1 by convention.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    check_equal_length(a, b)?;
    let joint = contingency(a, b);
    let mut row_sums: BTreeMap<usize, u64> = BTreeMap::new();
    let mut col_sums: BTreeMap<usize, u64> = BTreeMap::new();
    for (&(x, y), &count) in &joint {
        *row_sums.entry(x).or_insert(0) += count;
        *col_sums.entry(y).or_insert(0) += count;
    }

    let s: i128 = joint.values().map(|&c| comb2(c)).sum();
    let sum_a: i128 = row_sums.values().map(|&c| comb2(c)).sum();
    let sum_b: i128 = col_sums.values().map(|&c| comb2(c)).sum();
    let pairs = comb2(a.len() as u64);

    // ARI = (S - ab/C) / ((a+b)/2 - ab/C), cleared of denominators so both
    // sides stay in exact integer arithmetic until one final division
    let num = 2 * (pairs * s - sum_a * sum_b);
    let den = pairs * (sum_a + sum_b) - 2 * sum_a * sum_b;
    if den == 0 {
        return Ok(1.0);
    }
    Ok(num as f64 / den as f64)
}

fn entropy(labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with arithmetic-mean normalization:
/// `I(a; b) / ((H(a) + H(b)) / 2)`. Two zero-entropy partitions score 1.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    check_equal_length(a, b)?;
    let n = a.len() as f64;
    let h_a = entropy(a);
    let h_b = entropy(b);
    if h_a == 0.0 && h_b == 0.0 {
        return Ok(1.0);
    }

    let joint = contingency(a, b);
    let mut row_sums: BTreeMap<usize, u64> = BTreeMap::new();
    let mut col_sums: BTreeMap<usize, u64> = BTreeMap::new();
    for (&(x, y), &count) in &joint {
        *row_sums.entry(x).or_insert(0) += count;
        *col_sums.entry(y).or_insert(0) += count;
    }
    let mut mi = 0.0;
    for (&(x, y), &count) in &joint {
        let p_xy = count as f64 / n;
        let p_x = row_sums[&x] as f64 / n;
        let p_y = col_sums[&y] as f64 / n;
        mi += p_xy * (p_xy / (p_x * p_y)).ln();
    }
    let value = mi / (0.5 * (h_a + h_b));
    Ok(value.clamp(0.0, 1.0))
}

fn nearest_center(x: &DVector<f64>, centers: &[DVector<f64>]) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let dist = (x - c).norm_squared();
        if dist < best_dist {
            best_dist = dist;
            best = j;
        }
    }
    best
}

/// Centroid index: maps each center to its Euclidean-nearest counterpart in
/// the other set, in both directions, and counts the larger number of
/// centers left without an incoming mapping. 0 means the two center sets
/// describe the same cluster-level structure.
pub fn centroid_index(centers_a: &[DVector<f64>], centers_b: &[DVector<f64>]) -> Result<usize> {
    if centers_a.len() != centers_b.len() || centers_a.is_empty() {
        return Err(Error::InvalidParameter(
            "center sets must be nonempty and of equal size".into(),
        ));
    }
    let d = centers_a[0].len();
    if centers_a
        .iter()
        .chain(centers_b.iter())
        .any(|c| c.len() != d)
    {
        return Err(Error::InvalidParameter(
            "centers must share one dimension".into(),
        ));
    }
    let orphans = |from: &[DVector<f64>], to: &[DVector<f64>]| {
        let mut received = vec![false; to.len()];
        for x in from {
            received[nearest_center(x, to)] = true;
        }
        received.iter().filter(|r| !**r).count()
    };
    Ok(orphans(centers_a, centers_b).max(orphans(centers_b, centers_a)))
}

/// Two-sided Wilcoxon signed-rank test with tie-averaged ranks, dropped zero
/// differences, and a continuity-corrected normal approximation.
///
/// Needs at least five nonzero differences.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidParameter(format!(
            "sample vectors differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let m = diffs.len();
    if m < 5 {
        return Err(Error::InsufficientData(format!(
            "only {m} nonzero differences (need at least 5)"
        )));
    }

    let ranks = average_ranks(&diffs);
    let w_pos: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();

    let m_f = m as f64;
    let mean = m_f * (m_f + 1.0) / 4.0;
    let mut variance = m_f * (m_f + 1.0) * (2.0 * m_f + 1.0) / 24.0;
    // tie correction over groups of equal |d|
    let mut sorted: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < m {
        let mut j = i + 1;
        while j < m && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        variance -= (t * t * t - t) / 48.0;
        i = j;
    }
    if variance <= 0.0 {
        return Err(Error::InsufficientData(
            "zero variance in rank statistic".into(),
        ));
    }

    let centered = w_pos - mean;
    let z = if centered == 0.0 {
        0.0
    } else {
        (centered - 0.5 * centered.signum()) / variance.sqrt()
    };
    let normal = Normal::standard();
    let p = 2.0 * (1.0 - normal.cdf(z.abs()));
    Ok(p.clamp(f64::MIN_POSITIVE, 1.0))
}

/// Ascending ranks of `|d|` with ties averaged.
fn average_ranks(diffs: &[f64]) -> Vec<f64> {
    let m = diffs.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|a, b| diffs[*a].abs().total_cmp(&diffs[*b].abs()));
    let mut ranks = vec![0.0; m];
    let mut i = 0;
    while i < m {
        let mut j = i + 1;
        while j < m && diffs[order[j]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        let avg = (i + 1..=j).map(|r| r as f64).sum::<f64>() / (j - i) as f64;
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        i = j;
    }
    ranks
}
