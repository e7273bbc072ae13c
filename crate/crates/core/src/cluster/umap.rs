use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ClusterError;

const BISECTION_TOLERANCE: f64 = 1e-5;
const BISECTION_STEPS: usize = 64;
const NEGATIVE_SAMPLES: usize = 5;
const GRAD_CLIP: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct UmapConfig {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for UmapConfig {
    fn default() -> Self {
        Self { n_neighbors: 15, min_dist: 0.1, epochs: 500, seed: 0 }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Exact neighbours of every point, nearest first, ties by index.
pub fn knn(points: &[Vec<f64>], k: usize) -> Vec<Vec<(usize, f64)>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<(usize, f64)> = points.iter().enumerate().filter(|&(j, _)| j != i).map(|(j, q)| (j, dist(p, q))).collect();
            d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            d.truncate(k);
            d
        })
        .collect()
}

/// Per-point `(rho, sigma)` such that the memberships
/// `exp(-(d - rho) / sigma)` over the neighbours sum to `log2(n_neighbors)`.
/// `n_neighbors` counts the point itself, so `neighbors` rows hold one fewer.
pub fn smooth_knn(neighbors: &[Vec<(usize, f64)>], n_neighbors: usize) -> Vec<(f64, f64)> {
    let target = (n_neighbors as f64).log2();
    neighbors
        .iter()
        .map(|nb| {
            let rho = nb.iter().map(|x| x.1).find(|&d| d > 0.0).unwrap_or(0.0);
            let total = |sigma: f64| nb.iter().map(|&(_, d)| (-(d - rho).max(0.0) / sigma).exp()).sum::<f64>();
            let (mut lo, mut hi, mut mid) = (0.0, f64::INFINITY, 1.0);
            for _ in 0..BISECTION_STEPS {
                let s = total(mid);
                if (s - target).abs() < BISECTION_TOLERANCE {
                    break;
                }
                if s > target {
                    hi = mid;
                    mid = 0.5 * (lo + hi);
                } else {
                    lo = mid;
                    mid = if hi.is_infinite() { mid * 2.0 } else { 0.5 * (lo + hi) };
                }
            }
            (rho, mid)
        })
        .collect()
}

/// Symmetric fuzzy graph `a + b - ab` as a dense matrix.
pub fn fuzzy_graph(neighbors: &[Vec<(usize, f64)>], params: &[(f64, f64)]) -> DMatrix<f64> {
    let n = neighbors.len();
    let mut m = DMatrix::zeros(n, n);
    for (i, nb) in neighbors.iter().enumerate() {
        let (rho, sigma) = params[i];
        for &(j, d) in nb {
            m[(i, j)] = (-(d - rho).max(0.0) / sigma).exp();
        }
    }
    let t = m.transpose();
    m.zip_map(&t, |a, b| a + b - a * b)
}

/// Least-squares fit of `1 / (1 + a x^(2b))` to the offset-exponential
/// target that is 1 below `min_dist`, with unit spread.
pub fn fit_ab(min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (1..300).map(|i| 3.0 * i as f64 / 299.0).collect();
    let target: Vec<f64> = xs.iter().map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist)).exp() }).collect();
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut lambda = 1e-3;
    let sse = |a: f64, b: f64| xs.iter().zip(&target).map(|(&x, &y)| (1.0 / (1.0 + a * x.powf(2.0 * b)) - y).powi(2)).sum::<f64>();
    let mut cur = sse(a, b);
    for _ in 0..500 {
        let (mut g00, mut g01, mut g11, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&target) {
            let p = x.powf(2.0 * b);
            let f = 1.0 / (1.0 + a * p);
            let da = -p * f * f;
            let db = -a * p * 2.0 * x.ln() * f * f;
            let r = y - f;
            g00 += da * da;
            g01 += da * db;
            g11 += db * db;
            r0 += da * r;
            r1 += db * r;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let (h00, h11) = (g00 * (1.0 + lambda), g11 * (1.0 + lambda));
            let det = h00 * h11 - g01 * g01;
            let (sa, sb) = ((h11 * r0 - g01 * r1) / det, (h00 * r1 - g01 * r0) / det);
            let (na, nb) = ((a + sa).max(1e-6), (b + sb).max(1e-6));
            let s = sse(na, nb);
            if s < cur {
                improved = (cur - s) > 1e-15 * cur;
                a = na;
                b = nb;
                cur = s;
                lambda *= 0.1;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

fn spectral_init(graph: &DMatrix<f64>) -> Option<Vec<[f64; 2]>> {
    let n = graph.nrows();
    if n < 3 {
        return None;
    }
    let deg: Vec<f64> = (0..n).map(|i| graph.row(i).sum()).collect();
    if deg.iter().any(|&d| d <= 0.0) {
        return None;
    }
    let lap = DMatrix::from_fn(n, n, |i, j| {
        let off = graph[(i, j)] / (deg[i] * deg[j]).sqrt();
        if i == j {
            1.0 - off
        } else {
            -off
        }
    });
    let eig = lap.try_symmetric_eigen(1e-12, 10_000)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let mut coords = vec![[0.0; 2]; n];
    for (axis, &col) in order[1..3].iter().enumerate() {
        let v = eig.eigenvectors.column(col);
        // fix the sign so the largest component is positive
        let pivot = (0..n).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a))).unwrap();
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if scale == 0.0 || !scale.is_finite() {
            return None;
        }
        for i in 0..n {
            coords[i][axis] = 10.0 * sign * v[i] / scale;
        }
    }
    Some(coords)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub coords: Vec<[f64; 2]>,
    pub spectral: bool,
}

/// `points` are rows of equal length.
pub fn umap_embed(points: &[Vec<f64>], config: &UmapConfig) -> Result<Embedding, ClusterError> {
    let n = points.len();
    if n < 3 {
        return Err(ClusterError::TooFewPoints { need: 3, got: n });
    }
    let k = config.n_neighbors.clamp(2, n);
    let neighbors = knn(points, k - 1);
    let params = smooth_knn(&neighbors, k);
    let graph = fuzzy_graph(&neighbors, &params);
    let (a, b) = fit_ab(config.min_dist);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let (mut coords, spectral) = match spectral_init(&graph) {
        Some(c) => (c, true),
        None => {
            let normal = Normal::new(0.0, 10.0).unwrap();
            ((0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect(), false)
        }
    };
    let jitter = Normal::new(0.0, 1e-4).unwrap();
    for c in coords.iter_mut() {
        c[0] += jitter.sample(&mut rng);
        c[1] += jitter.sample(&mut rng);
    }

    let epochs = config.epochs.max(1);
    let max_w = graph.iter().fold(0.0f64, |m, &w| m.max(w));
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let w = graph[(i, j)];
            if i != j && w > 0.0 && w >= max_w / epochs as f64 {
                edges.push((i, j, max_w / w));
            }
        }
    }
    let mut next_sample: Vec<f64> = edges.iter().map(|e| e.2).collect();
    let per_negative: Vec<f64> = edges.iter().map(|e| e.2 / NEGATIVE_SAMPLES as f64).collect();
    let mut next_negative = per_negative.clone();

    for epoch in 0..epochs {
        let alpha = 1.0 - epoch as f64 / epochs as f64;
        let now = epoch as f64;
        for (e, &(i, j, every)) in edges.iter().enumerate() {
            if next_sample[e] > now {
                continue;
            }
            let d2 = (coords[i][0] - coords[j][0]).powi(2) + (coords[i][1] - coords[j][1]).powi(2);
            let coeff = if d2 > 0.0 { -2.0 * a * b * d2.powf(b - 1.0) / (1.0 + a * d2.powf(b)) } else { 0.0 };
            for axis in 0..2 {
                let g = (coeff * (coords[i][axis] - coords[j][axis])).clamp(-GRAD_CLIP, GRAD_CLIP);
                coords[i][axis] += alpha * g;
                coords[j][axis] -= alpha * g;
            }
            next_sample[e] += every;

            let n_neg = ((now - next_negative[e]) / per_negative[e]).floor().max(0.0) as usize;
            for _ in 0..n_neg {
                let other = rng.random_range(0..n);
                if other == i {
                    continue;
                }
                let d2 = (coords[i][0] - coords[other][0]).powi(2) + (coords[i][1] - coords[other][1]).powi(2);
                let coeff = if d2 > 0.0 { 2.0 * b / ((0.001 + d2) * (1.0 + a * d2.powf(b))) } else { 0.0 };
                for axis in 0..2 {
                    let g = if coeff > 0.0 {
                        (coeff * (coords[i][axis] - coords[other][axis])).clamp(-GRAD_CLIP, GRAD_CLIP)
                    } else {
                        GRAD_CLIP
                    };
                    coords[i][axis] += alpha * g;
                }
            }
            next_negative[e] += n_neg as f64 * per_negative[e];
        }
    }
    if coords.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ClusterError::NonFinite);
    }
    Ok(Embedding { coords, spectral })
}

/// Rank-based trustworthiness of `embedded` as a view of `original`.
pub fn trustworthiness(original: &[Vec<f64>], embedded: &[Vec<f64>], k: usize) -> f64 {
    let n = original.len();
    assert!(n > 2 * k + 1, "trustworthiness needs n > 2k + 1");
    let ranks_of = |pts: &[Vec<f64>], i: usize| -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| dist(&pts[i], &pts[a]).total_cmp(&dist(&pts[i], &pts[b])).then(a.cmp(&b)));
        order
    };
    let mut penalty = 0.0;
    for i in 0..n {
        let orig = ranks_of(original, i);
        let mut rank = vec![0usize; n];
        for (r, &j) in orig.iter().enumerate() {
            rank[j] = r + 1;
        }
        for &j in ranks_of(embedded, i).iter().take(k) {
            if rank[j] > k {
                penalty += (rank[j] - k) as f64;
            }
        }
    }
    1.0 - 2.0 / (n as f64 * k as f64 * (2.0 * n as f64 - 3.0 * k as f64 - 1.0)) * penalty
}
