//! Synthetic fires with planted logistic recovery parameters.
//!
//! Each burned pixel follows `NDVI(t) = ref[month(t)] * r(t) * (1 + eps)` with
//! `r(t) = L / (1 + exp(-k (t - t0)))` and `eps ~ N(0, sigma)`; unburned
//! pixels carry `(L, k, t0) = (2, 0, 12)`, which makes `r(t) == 1`. The
//! reference NDVI is a monthly sinusoid (mean 0.55, amplitude 0.15) and
//! `month(t) = (start_month + t) mod 12`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::catalog::{FireRecord, YearMonth};
use super::stack::{RasterStack, DEFAULT_CHANNELS, EVI, FIREMASK, INDEX_RANGE, LST, NDVI, PRECIP, QA};
use super::RasterError;
use crate::kv::{KvError, KvMap};
use crate::logistic::{logistic_eval, LogisticParams};

pub const MONTHS: usize = 12;
pub const REF_MEAN: f64 = 0.55;
pub const REF_AMPLITUDE: f64 = 0.15;
/// Observed extremes of fire-averaged growth rates bracket this range.
pub const K_RANGE: (f64, f64) = (-1.2, 0.7);
pub const UNBURNED: LogisticParams = LogisticParams { capacity: 2.0, rate: 0.0, midpoint: 12.0, rss: 0.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_fires: usize,
    pub height: usize,
    pub width: usize,
    pub t_len: usize,
    pub sigma: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { n_fires: 40, height: 50, width: 50, t_len: 25, sigma: 0.05, dropout: 0.1, seed: 7 }
    }
}

impl SynthConfig {
    pub fn from_kv(mut kv: KvMap) -> Result<Self, KvError> {
        let mut c = Self::default();
        kv.take("n_fires", &mut c.n_fires)?;
        kv.take("height", &mut c.height)?;
        kv.take("width", &mut c.width)?;
        kv.take("t_len", &mut c.t_len)?;
        kv.take("sigma", &mut c.sigma)?;
        kv.take("dropout", &mut c.dropout)?;
        kv.take("seed", &mut c.seed)?;
        kv.finish()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), RasterError> {
        if self.n_fires == 0 || self.height == 0 || self.width == 0 || self.t_len == 0 {
            return Err(RasterError::Invalid("synthetic dimensions must be positive".into()));
        }
        if !(self.sigma >= 0.0) {
            return Err(RasterError::Invalid(format!("sigma {} must be >= 0", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(RasterError::Invalid(format!("dropout {} must be in [0, 1]", self.dropout)));
        }
        Ok(())
    }
}

/// Ground truth planted in one synthetic fire. Fields are `[row][col]`
/// unless noted.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    pub fire_id: String,
    pub k_true: Vec<f32>,
    pub l_true: Vec<f32>,
    pub t0_true: Vec<f32>,
    pub burned: Vec<bool>,
    /// `[month][row][col]`, indexed by calendar month (0 = January).
    pub reference: Vec<f32>,
    pub start_month: usize,
    pub sigma: f64,
    pub dropout: f64,
}

impl SynthTruth {
    /// Mean planted `k` over burned pixels.
    pub fn mean_k(&self) -> f64 {
        let (s, n) = self
            .k_true
            .iter()
            .zip(&self.burned)
            .filter(|(_, &b)| b)
            .fold((0.0, 0usize), |(s, n), (&k, _)| (s + k as f64, n + 1));
        s / n.max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct SynthFire {
    pub record: FireRecord,
    /// Post-containment stack with the default six channels.
    pub stack: RasterStack,
    /// The twelve calendar months before the fire, frame `m` = month `m`.
    pub reference: RasterStack,
    pub truth: SynthTruth,
}

pub fn month_of(start_month: usize, t: usize) -> usize {
    (start_month + t) % MONTHS
}

/// Deterministic for a fixed `(config, seed)`; `config.seed` is ignored.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<Vec<SynthFire>, RasterError> {
    config.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..config.n_fires).map(|i| generate_fire(config, i, master.random())).collect()
}

/// Sum of three random plane waves scaled into `[-1, 1]`.
fn smooth_field(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let angle = rng.random_range(0.0..2.0 * PI);
            let wavelength = rng.random_range(25.0..80.0);
            (angle.cos() / wavelength, angle.sin() / wavelength, rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let v: f64 = waves.iter().map(|(a, b, p)| (2.0 * PI * (a * r as f64 + b * c as f64) + p).cos()).sum();
            out.push(v / 3.0);
        }
    }
    out
}

/// Grows a 4-connected blob from the grid centre until it covers `target`
/// of the pixels.
fn burn_blob(h: usize, w: usize, fraction: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let target = ((h * w) as f64 * fraction).round().max(1.0) as usize;
    let mut burned = vec![false; h * w];
    let mut queued = vec![false; h * w];
    let mut frontier = vec![(h / 2) * w + w / 2];
    queued[frontier[0]] = true;
    let mut count = 0;
    while count < target && !frontier.is_empty() {
        let pick = rng.random_range(0..frontier.len());
        let p = frontier.swap_remove(pick);
        burned[p] = true;
        count += 1;
        let (r, c) = (p / w, p % w);
        let mut push = |q: usize| {
            if !queued[q] {
                queued[q] = true;
                frontier.push(q);
            }
        };
        if r > 0 {
            push(p - w);
        }
        if r + 1 < h {
            push(p + w);
        }
        if c > 0 {
            push(p - 1);
        }
        if c + 1 < w {
            push(p + 1);
        }
    }
    burned
}

fn generate_fire(config: &SynthConfig, index: usize, seed: u64) -> Result<SynthFire, RasterError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w, t_len) = (config.height, config.width, config.t_len);
    let px = h * w;

    let containment = YearMonth { year: rng.random_range(2013..=2020), month: rng.random_range(1..=12) };
    let start_month = containment.month_index();
    let record = FireRecord {
        id: format!("F{index:03}"),
        name: format!("Synthetic Fire {index}"),
        lon: rng.random_range(-123.5..-114.5),
        lat: rng.random_range(32.8..41.8),
        containment_month: containment,
        acres: (rng.random_range(3000f64.ln()..300_000f64.ln())).exp().round(),
    };

    // fire-level recovery: mostly regrowth, a quarter still deteriorating
    let k_fire = if rng.random_bool(0.75) { rng.random_range(0.1..0.6) } else { rng.random_range(-1.0..-0.1) };
    let l_fire = rng.random_range(0.7..1.3);
    let t0_fire = rng.random_range(3.0..9.0);
    let k_field = smooth_field(h, w, &mut rng);
    let l_field = smooth_field(h, w, &mut rng);
    let t0_field = smooth_field(h, w, &mut rng);
    let base_field = smooth_field(h, w, &mut rng);
    let lst_field = smooth_field(h, w, &mut rng);
    let rain_field = smooth_field(h, w, &mut rng);
    let burned = burn_blob(h, w, rng.random_range(0.4..0.9), &mut rng);

    let mut params = Vec::with_capacity(px);
    for p in 0..px {
        params.push(if burned[p] {
            LogisticParams {
                capacity: (l_fire + 0.05 * l_field[p]).clamp(0.3, 1.3),
                rate: (k_fire + 0.05 * k_field[p]).clamp(K_RANGE.0, K_RANGE.1),
                midpoint: t0_fire + 0.5 * t0_field[p],
                rss: 0.0,
            }
        } else {
            UNBURNED
        });
    }

    let phase = rng.random_range(0.0..MONTHS as f64);
    let mut reference = vec![0f32; MONTHS * px];
    for m in 0..MONTHS {
        let season = REF_AMPLITUDE * (2.0 * PI * (m as f64 + phase) / MONTHS as f64).sin();
        for p in 0..px {
            reference[m * px + p] = (REF_MEAN + season + 0.05 * base_field[p]) as f32;
        }
    }
    let lst_phase = rng.random_range(-1.0..1.0);
    let rain_level = rng.random_range(0.5..3.0);
    let lst_at = |m: usize, p: usize| 290.0 + 12.0 * (2.0 * PI * (m as f64 - 3.5 + lst_phase) / 12.0).sin() + 3.0 * lst_field[p];
    let rain_at = |m: usize, p: usize| {
        (rain_level * (1.0 + 0.9 * (2.0 * PI * m as f64 / 12.0).cos()) * (1.0 + 0.2 * rain_field[p])).max(0.0)
    };

    let noise = Normal::new(0.0, config.sigma.max(f64::MIN_POSITIVE)).map_err(|e| RasterError::Invalid(e.to_string()))?;
    let mut stack = RasterStack::new(t_len, h, w, &DEFAULT_CHANNELS);
    let ch = |name| stack.channel_index(name).unwrap();
    let (c_ndvi, c_evi, c_lst, c_fire, c_rain, c_qa) = (ch(NDVI), ch(EVI), ch(LST), ch(FIREMASK), ch(PRECIP), ch(QA));
    for t in 0..t_len {
        let m = month_of(start_month, t);
        for p in 0..px {
            let (r, c) = (p / w, p % w);
            let ratio = logistic_eval(&params[p], t as f64);
            let eps = if config.sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let mut ndvi = (reference[m * px + p] as f64 * ratio * (1.0 + eps)) as f32;
            let unreliable = config.dropout > 0.0 && rng.random_bool(config.dropout);
            let qa = if unreliable {
                // clouds depress the recorded index
                ndvi *= rng.random_range(0.1f32..0.5);
                if rng.random_bool(0.5) { 2.0 } else { 3.0 }
            } else if rng.random_bool(0.5) {
                0.0
            } else {
                1.0
            };
            ndvi = ndvi.clamp(INDEX_RANGE.0, INDEX_RANGE.1);
            stack.set(t, r, c, c_ndvi, ndvi);
            stack.set(t, r, c, c_evi, 0.9 * ndvi);
            stack.set(t, r, c, c_lst, (lst_at(m, p) + if burned[p] { 4.0 * (-(t as f64) / 6.0).exp() } else { 0.0 }) as f32);
            stack.set(t, r, c, c_fire, if burned[p] { 1.0 } else { 0.0 });
            stack.set(t, r, c, c_rain, rain_at(m, p) as f32);
            stack.set(t, r, c, c_qa, qa);
        }
    }

    let mut ref_stack = RasterStack::new(MONTHS, h, w, &DEFAULT_CHANNELS);
    for m in 0..MONTHS {
        for p in 0..px {
            let (r, c) = (p / w, p % w);
            let v = reference[m * px + p];
            ref_stack.set(m, r, c, c_ndvi, v);
            ref_stack.set(m, r, c, c_evi, 0.9 * v);
            ref_stack.set(m, r, c, c_lst, lst_at(m, p) as f32);
            ref_stack.set(m, r, c, c_rain, rain_at(m, p) as f32);
        }
    }

    let truth = SynthTruth {
        fire_id: record.id.clone(),
        k_true: params.iter().map(|p| p.rate as f32).collect(),
        l_true: params.iter().map(|p| p.capacity as f32).collect(),
        t0_true: params.iter().map(|p| p.midpoint as f32).collect(),
        burned,
        reference,
        start_month,
        sigma: config.sigma,
        dropout: config.dropout,
    };
    Ok(SynthFire { record, stack, reference: ref_stack, truth })
}
