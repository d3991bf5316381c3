use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Piecewise-constant fragility estimate: failure fraction per IM cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCurve {
    /// Cluster centres, ascending.
    pub centers: Vec<f64>,
    pub fractions: Vec<f64>,
    pub counts: Vec<usize>,
}

/// One-dimensional k-means (Lloyd's algorithm, k-means++ seeding), best of `restarts` by
/// within-cluster sum of squares. Returns sorted centres.
pub fn kmeans_1d<R: Rng + ?Sized>(values: &[f64], k: usize, restarts: usize, rng: &mut R) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyPool);
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k-means needs k >= 1".into()));
    }
    let k = k.min(values.len());
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..restarts.max(1) {
        let mut centers = seed_plus_plus(values, k, rng);
        for _ in 0..300 {
            centers.sort_by(f64::total_cmp);
            let mut sum = vec![0.0; centers.len()];
            let mut cnt = vec![0usize; centers.len()];
            for &v in values {
                let j = nearest(&centers, v);
                sum[j] += v;
                cnt[j] += 1;
            }
            let next: Vec<f64> =
                centers.iter().enumerate().map(|(j, &c)| if cnt[j] > 0 { sum[j] / cnt[j] as f64 } else { c }).collect();
            let moved = next.iter().zip(&centers).any(|(a, b)| a != b);
            centers = next;
            if !moved {
                break;
            }
        }
        centers.sort_by(f64::total_cmp);
        let sse: f64 = values.iter().map(|&v| (v - centers[nearest(&centers, v)]).powi(2)).sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, centers));
        }
    }
    Ok(best.expect("at least one restart").1)
}

fn seed_plus_plus<R: Rng + ?Sized>(values: &[f64], k: usize, rng: &mut R) -> Vec<f64> {
    let mut centers = vec![values[rng.random_range(0..values.len())]];
    let mut d2: Vec<f64> = values.iter().map(|v| (v - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = values.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            values[pick]
        } else {
            values[rng.random_range(0..values.len())]
        };
        centers.push(next);
        for (d, v) in d2.iter_mut().zip(values) {
            *d = d.min((v - next).powi(2));
        }
    }
    centers
}

/// Index of the nearest centre in a sorted slice.
fn nearest(sorted: &[f64], v: f64) -> usize {
    let i = sorted.partition_point(|&c| c < v);
    if i == 0 {
        0
    } else if i == sorted.len() || v - sorted[i - 1] <= sorted[i] - v {
        i - 1
    } else {
        i
    }
}

/// k-means over the IM values, then the empirical failure fraction in each cluster.
/// Empty clusters are omitted.
pub fn nonparametric_reference<R: Rng + ?Sized>(
    im: &[f64],
    labels: &[bool],
    k: usize,
    restarts: usize,
    rng: &mut R,
) -> Result<ReferenceCurve> {
    if im.len() != labels.len() {
        return Err(Error::InvalidArgument("one label per IM value".into()));
    }
    let centers = kmeans_1d(im, k, restarts, rng)?;
    let mut fails = vec![0usize; centers.len()];
    let mut counts = vec![0usize; centers.len()];
    for (&v, &s) in im.iter().zip(labels) {
        let j = nearest(&centers, v);
        counts[j] += 1;
        fails[j] += s as usize;
    }
    let mut curve = ReferenceCurve { centers: vec![], fractions: vec![], counts: vec![] };
    for j in 0..centers.len() {
        if counts[j] > 0 {
            curve.centers.push(centers[j]);
            curve.fractions.push(fails[j] as f64 / counts[j] as f64);
            curve.counts.push(counts[j]);
        }
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separated_groups() {
        let v: Vec<f64> = (0..30).map(|i| (i / 10) as f64 * 10.0 + (i % 10) as f64 * 0.01).collect();
        let c = kmeans_1d(&v, 3, 5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(c.len(), 3);
        for (j, want) in [0.045, 10.045, 20.045].iter().enumerate() {
            assert!((c[j] - want).abs() < 1e-9, "{c:?}");
        }
    }

    #[test]
    fn fractions() {
        let im: Vec<f64> = (0..200).map(|i| i as f64 / 10.0).collect();
        let zeros = vec![false; im.len()];
        let r = nonparametric_reference(&im, &zeros, 10, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(r.fractions.iter().all(|&f| f == 0.0));
        assert!(r.centers.windows(2).all(|w| w[0] < w[1]));
        let step: Vec<bool> = im.iter().map(|&x| x > 10.0).collect();
        let r = nonparametric_reference(&im, &step, 4, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(r.fractions.first(), Some(&0.0));
        assert_eq!(r.fractions.last(), Some(&1.0));
        assert_eq!(r.counts.iter().sum::<usize>(), 200);
    }
}
