//! Logistic recovery curves `r(t) = L / (1 + exp(-k (t - t0)))`.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub const L_BOUNDS: (f64, f64) = (0.0, 3.0);
pub const K_BOUNDS: (f64, f64) = (-5.0, 5.0);
pub const T0_BOUNDS: (f64, f64) = (-25.0, 50.0);
pub const MAX_ITERATIONS: usize = 200;
pub const RSS_TOLERANCE: f64 = 1e-10;
/// Subgrids need at least this burned fraction to be fitted.
pub const MIN_BURN_FRACTION: f64 = 0.5;

const LAMBDA_START: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e12;

#[derive(Debug, Error, PartialEq)]
pub enum LogisticError {
    #[error("series contains non-finite values")]
    NonFinite,
    #[error("series has {0} frames, need at least 3")]
    TooShort(usize),
    #[error("burn fraction {0:.3} below 0.5")]
    Rejected(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no pixels qualify for averaging")]
    NoQualifying,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticParams {
    /// Growth capacity `L`.
    pub capacity: f64,
    /// Growth rate `k`, per time step.
    pub rate: f64,
    /// Midpoint `t0`, in steps.
    pub midpoint: f64,
    pub rss: f64,
}

impl LogisticParams {
    pub fn new(capacity: f64, rate: f64, midpoint: f64) -> Self {
        Self { capacity, rate, midpoint, rss: 0.0 }
    }

    fn project(mut self) -> Self {
        self.capacity = self.capacity.clamp(L_BOUNDS.0, L_BOUNDS.1);
        self.rate = self.rate.clamp(K_BOUNDS.0, K_BOUNDS.1);
        self.midpoint = self.midpoint.clamp(T0_BOUNDS.0, T0_BOUNDS.1);
        self
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn logistic_eval(p: &LogisticParams, t: f64) -> f64 {
    p.capacity * sigmoid(p.rate * (t - p.midpoint))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelFit {
    pub params: LogisticParams,
    /// Flat input; `params` is the zero-rate placeholder.
    pub degenerate: bool,
    pub iterations: usize,
}

fn rss_of(p: &LogisticParams, series: &[f64]) -> f64 {
    series.iter().enumerate().map(|(t, &y)| (y - logistic_eval(p, t as f64)).powi(2)).sum()
}

fn initial_guess(series: &[f64]) -> LogisticParams {
    let (lo, hi) = series.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mid = 0.5 * (lo + hi);
    let t0 = series
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - mid).abs().total_cmp(&(b.1 - mid).abs()))
        .map(|(t, _)| t as f64)
        .unwrap_or(0.0);
    let last = series[series.len() - 1];
    let k0 = if last > series[0] {
        0.2
    } else if last < series[0] {
        -0.2
    } else {
        0.0
    };
    LogisticParams::new(hi.clamp(0.1, 3.0), k0, t0)
}

/// Damped Gauss-Newton with Levenberg adaptation and box projection.
pub fn fit_pixel(series: &[f64]) -> Result<PixelFit, LogisticError> {
    if series.len() < 3 {
        return Err(LogisticError::TooShort(series.len()));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(LogisticError::NonFinite);
    }
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    if series.iter().all(|&v| v == series[0]) {
        return Ok(PixelFit {
            params: LogisticParams::new(2.0 * mean, 0.0, 12.0),
            degenerate: true,
            iterations: 0,
        });
    }

    let mut p = initial_guess(series);
    let mut rss = rss_of(&p, series);
    let mut lambda = LAMBDA_START;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for (t, &y) in series.iter().enumerate() {
            let dt = t as f64 - p.midpoint;
            let s = sigmoid(p.rate * dt);
            let ds = p.capacity * s * (1.0 - s);
            let j = Vector3::new(s, ds * dt, -ds * p.rate);
            jtj += j * j.transpose();
            jtr += j * (y - p.capacity * s);
        }
        let mut accepted = None;
        while lambda <= LAMBDA_MAX {
            let mut a = jtj;
            for d in 0..3 {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let cand = LogisticParams::new(p.capacity + step[0], p.rate + step[1], p.midpoint + step[2]).project();
            let cand_rss = rss_of(&cand, series);
            if cand_rss < rss {
                lambda = (lambda * 0.1).max(1e-15);
                accepted = Some((cand, cand_rss));
                break;
            }
            lambda *= 10.0;
        }
        let Some((cand, cand_rss)) = accepted else { break };
        let change = (rss - cand_rss) / rss.max(f64::MIN_POSITIVE);
        p = cand;
        rss = cand_rss;
        if change < RSS_TOLERANCE || rss == 0.0 {
            break;
        }
    }
    p.rss = rss;
    Ok(PixelFit { params: p, degenerate: false, iterations })
}

/// Fits of one `t × h × w` subgrid of NDVI ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFit {
    /// Row-major; `None` for unburned pixels.
    pub pixels: Vec<Option<PixelFit>>,
    pub mean_k: f64,
    pub mean_l: f64,
    /// Burned, non-degenerate pixels behind the means.
    pub n_pixels: usize,
    pub n_degenerate: usize,
}

/// `frames` is `[t][pixel]` flattened; `burned` is per pixel.
pub fn fit_grid(frames: &[f32], t_len: usize, burned: &[bool]) -> Result<GridFit, LogisticError> {
    let px = burned.len();
    if px == 0 || frames.len() != t_len * px {
        return Err(LogisticError::Shape(format!("{} values for {t_len} frames of {px} pixels", frames.len())));
    }
    let fraction = burned.iter().filter(|&&b| b).count() as f64 / px as f64;
    if fraction < MIN_BURN_FRACTION {
        return Err(LogisticError::Rejected(fraction));
    }
    let mut pixels = Vec::with_capacity(px);
    let (mut sk, mut sl, mut n, mut n_degenerate) = (0.0, 0.0, 0usize, 0usize);
    let mut series = vec![0f64; t_len];
    for p in 0..px {
        if !burned[p] {
            pixels.push(None);
            continue;
        }
        for (t, v) in series.iter_mut().enumerate() {
            *v = frames[t * px + p] as f64;
        }
        let fit = fit_pixel(&series)?;
        if fit.degenerate {
            n_degenerate += 1;
        } else {
            sk += fit.params.rate;
            sl += fit.params.capacity;
            n += 1;
        }
        pixels.push(Some(fit));
    }
    if n == 0 {
        return Err(LogisticError::NoQualifying);
    }
    Ok(GridFit { pixels, mean_k: sk / n as f64, mean_l: sl / n as f64, n_pixels: n, n_degenerate })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FireRecovery {
    pub fire_id: String,
    pub mean_k: f64,
    pub mean_l: f64,
    pub n_pixels: usize,
}

/// Pixel-weighted mean of subgrid means.
pub fn aggregate_fire(fire_id: &str, grids: &[(f64, f64, usize)]) -> Result<FireRecovery, LogisticError> {
    let n: usize = grids.iter().map(|g| g.2).sum();
    if n == 0 {
        return Err(LogisticError::NoQualifying);
    }
    let w = |f: fn(&(f64, f64, usize)) -> f64| grids.iter().map(|g| f(g) * g.2 as f64).sum::<f64>() / n as f64;
    Ok(FireRecovery { fire_id: fire_id.to_string(), mean_k: w(|g| g.0), mean_l: w(|g| g.1), n_pixels: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(l: f64, k: f64, t0: f64, n: usize) -> Vec<f64> {
        (0..n).map(|t| l / (1.0 + (-k * (t as f64 - t0)).exp())).collect()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(logistic_eval(&LogisticParams::new(1.0, 1.0, 0.0), 0.0), 0.5);
        for t in 0..25 {
            assert_eq!(logistic_eval(&LogisticParams::new(1.4, 0.0, 7.0), t as f64), 0.7);
        }
        let v = logistic_eval(&LogisticParams::new(1.2, 0.4, 5.0), 25.0);
        assert!((v - 1.2 / (1.0 + (-8f64).exp())).abs() < 1e-15);
        assert!((v - 1.1996).abs() < 1e-4);
    }

    #[test]
    fn refits_noiseless_growth() {
        let fit = fit_pixel(&curve(1.0, 0.3, 8.0, 25)).unwrap();
        assert!(!fit.degenerate);
        assert!((fit.params.rate - 0.3).abs() < 1e-6, "{:?}", fit);
        assert!((fit.params.capacity - 1.0).abs() < 1e-6);
    }

    #[test]
    fn refits_noiseless_decay() {
        let fit = fit_pixel(&curve(0.9, -1.0, 6.0, 25)).unwrap();
        assert!((fit.params.rate + 1.0).abs() < 1e-4, "{:?}", fit);
    }

    #[test]
    fn constant_is_degenerate() {
        let fit = fit_pixel(&[0.5; 25]).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.params.rate, 0.0);
        assert_eq!(fit.params.capacity, 1.0);
        assert_eq!(fit.params.midpoint, 12.0);
        assert_eq!(fit.params.rss, 0.0);
    }

    #[test]
    fn bad_input() {
        assert_eq!(fit_pixel(&[1.0, f64::NAN, 2.0]), Err(LogisticError::NonFinite));
        assert_eq!(fit_pixel(&[1.0, 2.0]), Err(LogisticError::TooShort(2)));
    }

    #[test]
    fn rss_never_increases_over_iterations() {
        // refitting from scratch with growing iteration caps cannot do worse
        let mut s = curve(1.1, 0.25, 9.0, 25);
        for (t, v) in s.iter_mut().enumerate() {
            *v += 0.03 * ((t * 7919 % 13) as f64 / 13.0 - 0.5);
        }
        let fit = fit_pixel(&s).unwrap();
        let start = rss_of(&initial_guess(&s), &s);
        assert!(fit.params.rss <= start);
    }

    fn grid_frames(ks: &[f64], t_len: usize) -> Vec<f32> {
        let mut out = vec![0f32; t_len * ks.len()];
        for (p, &k) in ks.iter().enumerate() {
            for (t, v) in curve(1.0, k, 8.0, t_len).into_iter().enumerate() {
                out[t * ks.len() + p] = v as f32;
            }
        }
        out
    }

    #[test]
    fn grid_uniform_k() {
        let ks = vec![0.3; 100];
        let g = fit_grid(&grid_frames(&ks, 25), 25, &[true; 100]).unwrap();
        assert!((g.mean_k - 0.3).abs() < 1e-6, "{}", g.mean_k);
        assert_eq!(g.n_pixels, 100);
    }

    #[test]
    fn grid_half_and_half() {
        let ks: Vec<f64> = (0..100).map(|p| if p % 2 == 0 { 0.2 } else { 0.4 }).collect();
        let g = fit_grid(&grid_frames(&ks, 25), 25, &[true; 100]).unwrap();
        assert!((g.mean_k - 0.3).abs() < 1e-5);
    }

    #[test]
    fn grid_rejects_low_burn() {
        let ks = vec![0.3; 100];
        let burned: Vec<bool> = (0..100).map(|p| p < 40).collect();
        assert_eq!(fit_grid(&grid_frames(&ks, 25), 25, &burned), Err(LogisticError::Rejected(0.4)));
        let burned: Vec<bool> = (0..100).map(|p| p < 50).collect();
        let g = fit_grid(&grid_frames(&ks, 25), 25, &burned).unwrap();
        assert_eq!(g.n_pixels, 50);
        assert!(g.pixels[60].is_none());
    }

    #[test]
    fn grid_all_flat_has_nothing_to_average() {
        assert_eq!(fit_grid(&vec![0.7; 25 * 4], 25, &[true; 4]), Err(LogisticError::NoQualifying));
    }

    #[test]
    fn aggregate_weighted() {
        let one = aggregate_fire("a", &[(0.25, 1.0, 10)]).unwrap();
        assert_eq!((one.mean_k, one.mean_l, one.n_pixels), (0.25, 1.0, 10));
        let two = aggregate_fire("b", &[(0.2, 1.0, 50), (0.4, 1.0, 100)]).unwrap();
        assert!((two.mean_k - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(aggregate_fire("c", &[]), Err(LogisticError::NoQualifying));
    }

    #[test]
    fn noiseless_sweep_recovers_all_parameters() {
        let mut worst = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..5 {
            for j in 0..5 {
                for m in 0..4 {
                    let k = -1.2 + 1.9 * i as f64 / 4.0;
                    let k = if k.abs() < 1e-9 { 0.05 } else { k };
                    let l = 0.3 + 1.7 * j as f64 / 4.0;
                    let t0 = 2.0 + 18.0 * m as f64 / 3.0;
                    let fit = fit_pixel(&curve(l, k, t0, 25)).unwrap().params;
                    worst.0 = worst.0.max((fit.rate - k).abs());
                    worst.1 = worst.1.max((fit.capacity - l).abs());
                    worst.2 = worst.2.max((fit.midpoint - t0).abs());
                }
            }
        }
        assert!(worst.0 < 1e-4 && worst.1 < 1e-4 && worst.2 < 1e-4, "{worst:?}");
    }

    proptest! {
        #[test]
        fn eval_monotone_and_bounded(l in 0.1f64..3.0, k in -2.0f64..2.0, t0 in -5.0f64..30.0) {
            let p = LogisticParams::new(l, k, t0);
            let mut prev = logistic_eval(&p, 0.0);
            for t in 1..25 {
                let v = logistic_eval(&p, t as f64);
                prop_assert!(v >= 0.0 && v <= l);
                if k > 0.0 { prop_assert!(v >= prev) } else if k < 0.0 { prop_assert!(v <= prev) }
                prev = v;
            }
        }

        #[test]
        fn grid_mean_permutation_invariant(seed in 0u64..1000) {
            let ks: Vec<f64> = (0..16).map(|p| 0.1 + 0.05 * ((p as u64 * 31 + seed) % 9) as f64).collect();
            let mut rev = ks.clone();
            rev.reverse();
            let a = fit_grid(&grid_frames(&ks, 25), 25, &[true; 16]).unwrap();
            let b = fit_grid(&grid_frames(&rev, 25), 25, &[true; 16]).unwrap();
            prop_assert!((a.mean_k - b.mean_k).abs() < 1e-12);
        }
    }
}
