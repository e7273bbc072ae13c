use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ClusterError;

pub const MAX_LLOYD_ITERATIONS: usize = 300;
pub const RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// Renumbered by first appearance, so point 0 is always in cluster 0.
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub sse: f64,
    /// SSE after each Lloyd iteration of the winning restart.
    pub history: Vec<f64>,
    /// Final SSE of every restart.
    pub restart_sse: Vec<f64>,
}

fn d2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    for (c, center) in centers.iter().enumerate().skip(1) {
        if d2(p, center) < d2(p, &centers[best]) {
            best = c;
        }
    }
    best
}

fn sse(points: &[Vec<f64>], centers: &[Vec<f64>], labels: &[usize]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| d2(p, &centers[l])).sum()
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut closest: Vec<f64> = points.iter().map(|p| d2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut idx = points.len() - 1;
            for (i, &w) in closest.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[pick].clone());
        for (c, p) in closest.iter_mut().zip(points) {
            *c = c.min(d2(p, centers.last().unwrap()));
        }
    }
    centers
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>) -> (Vec<usize>, Vec<Vec<f64>>, Vec<f64>) {
    let k = centers.len();
    let dim = points[0].len();
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    let mut history = vec![];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        // an emptied cluster takes over the point worst served by its centre
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| d2(&points[a], &centers[labels[a]]).total_cmp(&d2(&points[b], &centers[labels[b]])).then(b.cmp(&a)));
                if let Some(i) = far {
                    counts[labels[i]] -= 1;
                    counts[c] = 1;
                    labels[i] = c;
                    centers[c] = points[i].clone();
                }
            }
        }
        history.push(sse(points, &centers, &labels));
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    history.push(sse(points, &centers, &labels));
    (labels, centers, history)
}

fn canonical(labels: &[usize], centers: &[Vec<f64>]) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut map = vec![usize::MAX; centers.len()];
    let mut next = 0;
    for &l in labels {
        if map[l] == usize::MAX {
            map[l] = next;
            next += 1;
        }
    }
    for m in map.iter_mut().filter(|m| **m == usize::MAX) {
        *m = next;
        next += 1;
    }
    let mut out = vec![vec![]; centers.len()];
    for (c, &m) in map.iter().enumerate() {
        out[m] = centers[c].clone();
    }
    (labels.iter().map(|&l| map[l]).collect(), out)
}

/// k-means++ seeding and Lloyd iterations, best of [`RESTARTS`].
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans, ClusterError> {
    if k == 0 || points.len() < k {
        return Err(ClusterError::TooFewPoints { need: k.max(1), got: points.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeans> = None;
    let mut restart_sse = Vec::with_capacity(RESTARTS);
    for _ in 0..RESTARTS {
        let init = plus_plus(points, k, &mut rng);
        let (labels, centers, history) = lloyd(points, init);
        let s = *history.last().unwrap();
        restart_sse.push(s);
        if best.as_ref().is_none_or(|b| s < b.sse) {
            let (labels, centers) = canonical(&labels, &centers);
            best = Some(KMeans { labels, centers, sse: s, history, restart_sse: vec![] });
        }
    }
    let mut best = best.unwrap();
    best.restart_sse = restart_sse;
    Ok(best)
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&v| c2(v)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let expected = rows * cols / c2(n as u64);
    let max = 0.5 * (rows + cols);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use rand_distr::{Distribution, Normal};

    fn three_blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.3).unwrap();
        let centers = [[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]];
        let mut pts = vec![];
        let mut labels = vec![];
        for i in 0..60 {
            let c = centers[i % 3];
            pts.push(vec![c[0] + normal.sample(&mut rng), c[1] + normal.sample(&mut rng)]);
            labels.push(i % 3);
        }
        (pts, labels)
    }

    #[test]
    fn recovers_blobs() {
        let (pts, truth) = three_blobs(1);
        let km = kmeans(&pts, 3, 7).unwrap();
        assert_eq!(adjusted_rand_index(&km.labels, &truth), 1.0);
        assert_eq!(km.labels, truth);
    }

    #[test]
    fn one_point_per_cluster() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let km = kmeans(&pts, 5, 3).unwrap();
        assert_eq!(km.sse, 0.0);
        assert_eq!(km.labels, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn too_few_points() {
        assert!(kmeans(&[vec![0.0]], 3, 0).is_err());
    }

    #[test]
    fn best_restart_kept() {
        let (pts, _) = three_blobs(2);
        let km = kmeans(&pts, 5, 4).unwrap();
        assert_eq!(km.restart_sse.len(), RESTARTS);
        assert!(km.restart_sse.iter().all(|&s| km.sse <= s));
        let mut counts = vec![0; 5];
        for &l in &km.labels {
            counts[l] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0));
    }

    #[test]
    fn ari_examples() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) < 0.0);
    }

    proptest! {
        #[test]
        fn sse_never_increases(seed in 0u64..200, k in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
            let km = kmeans(&pts, k, seed).unwrap();
            for w in km.history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
        }

        #[test]
        fn duplicates_share_labels(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pts: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
            pts.push(pts[3].clone());
            pts.push(pts[11].clone());
            let km = kmeans(&pts, 4, seed).unwrap();
            prop_assert_eq!(km.labels[20], km.labels[3]);
            prop_assert_eq!(km.labels[21], km.labels[11]);
        }

        #[test]
        fn partition_ignores_point_order(seed in 0u64..100) {
            let (pts, _) = three_blobs(seed);
            let rev: Vec<Vec<f64>> = pts.iter().rev().cloned().collect();
            let a = kmeans(&pts, 3, seed).unwrap();
            let b = kmeans(&rev, 3, seed).unwrap();
            let b_back: Vec<usize> = b.labels.iter().rev().cloned().collect();
            prop_assert_eq!(adjusted_rand_index(&a.labels, &b_back), 1.0);
        }
    }
}
