//! From raw six-channel stacks to five-channel ratio samples.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::raster::{month_of, RasterError, RasterStack, EVI, FIREMASK, LST, MONTHS, NDVI, PRECIP, QA};

pub const DEFAULT_KNN_K: usize = 8;
/// Reference NDVI below this magnitude makes the ratio meaningless.
pub const REFERENCE_GUARD: f32 = 0.05;
pub const SUBGRID: usize = 10;
pub const SAMPLE_CHANNELS: [&str; 5] = [NDVI, EVI, LST, FIREMASK, PRECIP];
pub const LST_RANGE: (f32, f32) = (240.0, 330.0);

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("channel {0} has no observed values to impute from")]
    NothingObserved(String),
    #[error("reference stack has {0} frames, need 12")]
    Reference(usize),
    #[error("grid {height}x{width} does not tile into {SUBGRID}x{SUBGRID} subgrids")]
    Tiling { height: usize, width: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Marks NDVI and EVI missing where QA is 2 or 3 and drops the QA channel.
pub fn mask_unreliable(stack: &RasterStack) -> Result<RasterStack, PreprocessError> {
    let qa = stack.require_channel(QA)?;
    let keep: Vec<&str> = stack.channels().iter().map(String::as_str).filter(|&c| c != QA).collect();
    let mut out = stack.select_channels(&keep)?;
    let targets: Vec<usize> = [NDVI, EVI].iter().filter_map(|c| out.channel_index(c)).collect();
    for t in 0..stack.t_len() {
        for r in 0..stack.height() {
            for c in 0..stack.width() {
                let q = stack.get(t, r, c, qa);
                if q == 2.0 || q == 3.0 {
                    for &ch in &targets {
                        out.set_missing(t, r, c, ch, true);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse-distance-weighted mean of the `k` nearest observed cells in
/// `(t, row, col)` space, one channel at a time.
pub fn knn_impute(stack: &RasterStack, k: usize) -> Result<RasterStack, PreprocessError> {
    if k == 0 {
        return Err(PreprocessError::Invalid("knn k must be positive".into()));
    }
    let mut out = stack.clone();
    let (tl, h, w) = (stack.t_len() as isize, stack.height() as isize, stack.width() as isize);
    let max_radius = tl.max(h).max(w);
    let mut found: Vec<(i64, isize, isize, isize)> = Vec::new();
    for ch in 0..stack.n_channels() {
        let mut any_missing = false;
        let mut any_observed = false;
        for t in 0..tl {
            for r in 0..h {
                for c in 0..w {
                    if stack.is_missing(t as usize, r as usize, c as usize, ch) {
                        any_missing = true;
                    } else {
                        any_observed = true;
                    }
                }
            }
        }
        if !any_missing {
            continue;
        }
        if !any_observed {
            return Err(PreprocessError::NothingObserved(stack.channels()[ch].clone()));
        }
        for t in 0..tl {
            for r in 0..h {
                for c in 0..w {
                    if !stack.is_missing(t as usize, r as usize, c as usize, ch) {
                        continue;
                    }
                    // grow a cube shell by shell; every cell outside the cube
                    // is farther than its radius
                    found.clear();
                    let mut radius: isize = 0;
                    loop {
                        radius += 1;
                        for dt in -radius..=radius {
                            for dr in -radius..=radius {
                                for dc in -radius..=radius {
                                    if dt.abs().max(dr.abs()).max(dc.abs()) != radius {
                                        continue;
                                    }
                                    let (tt, rr, cc) = (t + dt, r + dr, c + dc);
                                    if tt < 0 || rr < 0 || cc < 0 || tt >= tl || rr >= h || cc >= w {
                                        continue;
                                    }
                                    if stack.is_missing(tt as usize, rr as usize, cc as usize, ch) {
                                        continue;
                                    }
                                    let d2 = (dt * dt + dr * dr + dc * dc) as i64;
                                    found.push((d2, tt, rr, cc));
                                }
                            }
                        }
                        let inside = found.iter().filter(|f| f.0 <= (radius * radius) as i64).count();
                        if inside >= k || radius >= max_radius {
                            break;
                        }
                    }
                    found.sort_unstable();
                    let (mut num, mut den) = (0f64, 0f64);
                    for &(d2, tt, rr, cc) in found.iter().take(k) {
                        let wgt = 1.0 / (d2 as f64).sqrt();
                        num += wgt * stack.get(tt as usize, rr as usize, cc as usize, ch) as f64;
                        den += wgt;
                    }
                    let (tu, ru, cu) = (t as usize, r as usize, c as usize);
                    out.set(tu, ru, cu, ch, (num / den) as f32);
                    out.set_missing(tu, ru, cu, ch, false);
                }
            }
        }
    }
    Ok(out)
}

/// Replaces NDVI by its ratio to the same-calendar-month reference frame.
/// `reference` holds twelve frames, frame `m` being calendar month `m`.
pub fn deseasonalize(post: &RasterStack, reference: &RasterStack, start_month: usize) -> Result<RasterStack, PreprocessError> {
    if reference.t_len() != MONTHS {
        return Err(PreprocessError::Reference(reference.t_len()));
    }
    if reference.height() != post.height() || reference.width() != post.width() {
        return Err(PreprocessError::Invalid("reference grid differs from post-fire grid".into()));
    }
    let ch = post.require_channel(NDVI)?;
    let rch = reference.require_channel(NDVI)?;
    let mut out = post.clone();
    for t in 0..post.t_len() {
        let m = month_of(start_month, t);
        for r in 0..post.height() {
            for c in 0..post.width() {
                let reference_value = reference.get(m, r, c, rch);
                if reference.is_missing(m, r, c, rch) || reference_value.abs() < REFERENCE_GUARD {
                    out.set_missing(t, r, c, ch, true);
                    continue;
                }
                out.set(t, r, c, ch, post.get(t, r, c, ch) / reference_value);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Identity,
    /// `(x - offset) / scale`, clamped to `[0, 1]`.
    Affine { offset: f32, scale: f32 },
    /// `(ln(1 + x) - offset) / scale`, clamped to `[0, 1]`.
    LogAffine { offset: f32, scale: f32 },
    /// 1 where `x > 0.5`.
    Binarize,
}

impl Transform {
    pub fn apply(&self, x: f32) -> f32 {
        match *self {
            Transform::Identity => x,
            Transform::Affine { offset, scale } => ((x - offset) / scale).clamp(0.0, 1.0),
            Transform::LogAffine { offset, scale } => ((x.max(0.0).ln_1p() - offset) / scale).clamp(0.0, 1.0),
            Transform::Binarize => {
                if x > 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Inverse on the unclamped range.
    pub fn invert(&self, y: f32) -> f32 {
        match *self {
            Transform::Identity | Transform::Binarize => y,
            Transform::Affine { offset, scale } => y * scale + offset,
            Transform::LogAffine { offset, scale } => (y * scale + offset).exp_m1(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelScaling {
    pub transforms: Vec<(String, Transform)>,
}

impl ChannelScaling {
    /// LST to `[0, 1]` over 240-330 K, PRECIP log-then-min-max over the
    /// stack, FIREMASK binarized, everything else untouched.
    pub fn fit(stack: &RasterStack) -> Self {
        let transforms = stack
            .channels()
            .iter()
            .enumerate()
            .map(|(ch, name)| {
                let t = match name.as_str() {
                    LST => Transform::Affine { offset: LST_RANGE.0, scale: LST_RANGE.1 - LST_RANGE.0 },
                    FIREMASK => Transform::Binarize,
                    PRECIP => {
                        let (lo, hi) = stack
                            .channel(ch)
                            .iter()
                            .map(|v| v.max(0.0).ln_1p())
                            .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                        let lo = if lo.is_finite() { lo } else { 0.0 };
                        let span = hi - lo;
                        Transform::LogAffine { offset: lo, scale: if span > 1e-6 { span } else { 1.0 } }
                    }
                    _ => Transform::Identity,
                };
                (name.clone(), t)
            })
            .collect();
        Self { transforms }
    }

    pub fn get(&self, channel: &str) -> Option<Transform> {
        self.transforms.iter().find(|(n, _)| n == channel).map(|(_, t)| *t)
    }
}

pub fn scale_channels(stack: &RasterStack, scaling: &ChannelScaling) -> Result<RasterStack, PreprocessError> {
    let mut out = stack.clone();
    let n = stack.n_channels();
    let plan: Vec<Transform> = stack
        .channels()
        .iter()
        .map(|name| {
            scaling.get(name).ok_or_else(|| PreprocessError::Invalid(format!("no scaling for channel {name}")))
        })
        .collect::<Result<_, _>>()?;
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v = plan[i % n].apply(*v);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subgrid {
    pub row0: usize,
    pub col0: usize,
    pub stack: RasterStack,
    pub burn_fraction: f32,
}

impl Subgrid {
    /// Pixels burned in the first frame, row-major.
    pub fn burned(&self) -> Result<Vec<bool>, PreprocessError> {
        let ch = self.stack.require_channel(FIREMASK)?;
        let (h, w) = (self.stack.height(), self.stack.width());
        Ok((0..h * w).map(|p| self.stack.get(0, p / w, p % w, ch) > 0.5).collect())
    }
}

/// Row-major tiling into `SUBGRID`-sided windows.
pub fn partition_subgrids(stack: &RasterStack) -> Result<Vec<Subgrid>, PreprocessError> {
    let (h, w) = (stack.height(), stack.width());
    if h == 0 || w == 0 || h % SUBGRID != 0 || w % SUBGRID != 0 {
        return Err(PreprocessError::Tiling { height: h, width: w });
    }
    let fire = stack.require_channel(FIREMASK)?;
    let mut out = Vec::with_capacity((h / SUBGRID) * (w / SUBGRID));
    for row0 in (0..h).step_by(SUBGRID) {
        for col0 in (0..w).step_by(SUBGRID) {
            let sub = stack.window(row0, col0, SUBGRID, SUBGRID)?;
            let mask = sub.channel(fire);
            let burned = mask.iter().filter(|&&v| v > 0.5).count();
            out.push(Subgrid { row0, col0, burn_fraction: burned as f32 / mask.len() as f32, stack: sub });
        }
    }
    Ok(out)
}

pub fn reassemble(parts: &[Subgrid], height: usize, width: usize) -> Result<RasterStack, PreprocessError> {
    let first = parts.first().ok_or_else(|| PreprocessError::Invalid("no subgrids".into()))?;
    let names: Vec<&str> = first.stack.channels().iter().map(String::as_str).collect();
    let mut out = RasterStack::new(first.stack.t_len(), height, width, &names);
    for p in parts {
        out.paste(&p.stack, p.row0, p.col0)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErraticRule {
    pub max_step: f64,
    pub max_mean: f64,
    pub min_mean: f64,
}

impl Default for ErraticRule {
    fn default() -> Self {
        Self { max_step: 0.5, max_mean: 3.0, min_mean: 0.0 }
    }
}

impl ErraticRule {
    /// Why a series of spatial-mean ratios is erratic, if it is.
    pub fn violation(&self, means: &[f64]) -> Option<String> {
        for (t, &m) in means.iter().enumerate() {
            if m > self.max_mean {
                return Some(format!("mean ratio {m:.3} above {} at t={t}", self.max_mean));
            }
            if m < self.min_mean {
                return Some(format!("mean ratio {m:.3} below {} at t={t}", self.min_mean));
            }
        }
        for (t, pair) in means.windows(2).enumerate() {
            let step = pair[1] - pair[0];
            if step.abs() > self.max_step {
                return Some(format!("mean ratio changed by {step:+.3} between t={t} and t={}", t + 1));
            }
        }
        None
    }
}

pub fn mean_ratio_series(stack: &RasterStack) -> Result<Vec<f64>, PreprocessError> {
    let ch = stack.require_channel(NDVI)?;
    (0..stack.t_len())
        .map(|t| stack.frame_mean(t, ch).ok_or_else(|| PreprocessError::Invalid(format!("frame {t} has no NDVI"))))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub included: Vec<String>,
    pub excluded: Vec<(String, String)>,
}

pub fn filter_erratic(fires: &[(String, &RasterStack)], rule: &ErraticRule) -> Result<FilterOutcome, PreprocessError> {
    let mut out = FilterOutcome { included: vec![], excluded: vec![] };
    for (id, stack) in fires {
        match rule.violation(&mean_ratio_series(stack)?) {
            Some(why) => out.excluded.push((id.clone(), why)),
            None => out.included.push(id.clone()),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub warning: Option<String>,
}

/// Fire-level split; ids come back in their original relative order.
pub fn split_train_val(fire_ids: &[String], fraction: f64, seed: u64) -> Result<Split, PreprocessError> {
    if fire_ids.len() < 2 {
        return Err(PreprocessError::Invalid(format!("need at least 2 fires to split, got {}", fire_ids.len())));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(PreprocessError::Invalid(format!("split fraction {fraction} outside [0, 1]")));
    }
    let mut order: Vec<usize> = (0..fire_ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (fraction * fire_ids.len() as f64).round() as usize;
    let mut in_train = vec![false; fire_ids.len()];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let pick = |want: bool| fire_ids.iter().zip(&in_train).filter(|(_, &t)| t == want).map(|(id, _)| id.clone()).collect::<Vec<_>>();
    let (train, val) = (pick(true), pick(false));
    let warning = match (train.is_empty(), val.is_empty()) {
        (_, true) => Some("validation set is empty".to_string()),
        (true, _) => Some("training set is empty".to_string()),
        _ => None,
    };
    Ok(Split { train, val, warning })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub fire_id: String,
    pub row0: usize,
    pub col0: usize,
}

/// Samples laid out `[sample][t][row][col][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTensor {
    pub t_len: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
    pub provenance: Vec<Provenance>,
    pub burn_fraction: Vec<f32>,
}

impl SampleTensor {
    pub fn new(t_len: usize, height: usize, width: usize, channels: usize) -> Self {
        Self { t_len, height, width, channels, data: vec![], provenance: vec![], burn_fraction: vec![] }
    }

    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.t_len * self.height * self.width * self.channels
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.data[i * n..(i + 1) * n]
    }

    /// Appends a subgrid; it must carry exactly the five sample channels in
    /// order and no missing cells.
    pub fn push(&mut self, fire_id: &str, sub: &Subgrid) -> Result<(), PreprocessError> {
        let s = &sub.stack;
        if (s.t_len(), s.height(), s.width(), s.n_channels()) != (self.t_len, self.height, self.width, self.channels) {
            return Err(PreprocessError::Invalid(format!(
                "subgrid {}x{}x{}x{} does not match sample shape {}x{}x{}x{}",
                s.t_len(),
                s.height(),
                s.width(),
                s.n_channels(),
                self.t_len,
                self.height,
                self.width,
                self.channels
            )));
        }
        if s.channels().iter().map(String::as_str).ne(SAMPLE_CHANNELS.iter().copied()) {
            return Err(PreprocessError::Invalid(format!("sample channels must be {}", SAMPLE_CHANNELS.join(","))));
        }
        if s.missing().iter().any(|&m| m) {
            return Err(PreprocessError::Invalid(format!("subgrid of {fire_id} still has missing cells")));
        }
        self.data.extend_from_slice(s.data());
        self.provenance.push(Provenance { fire_id: fire_id.to_string(), row0: sub.row0, col0: sub.col0 });
        self.burn_fraction.push(sub.burn_fraction);
        Ok(())
    }

    /// NDVI ratio frames of sample `i`, `[t][pixel]`.
    pub fn ratio_frames(&self, i: usize) -> Vec<f32> {
        self.sample(i).iter().step_by(self.channels).copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepConfig {
    pub knn_k: usize,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self { knn_k: DEFAULT_KNN_K }
    }
}

#[derive(Debug, Clone)]
pub struct PreparedFire {
    /// Ratio NDVI plus scaled covariates, channels as [`SAMPLE_CHANNELS`].
    pub stack: RasterStack,
    pub scaling: ChannelScaling,
    /// Cells re-imputed because their reference value was too small.
    pub guarded: usize,
}

/// Masking, imputation, ratio transform and scaling for one fire.
pub fn prepare_fire(
    raw: &RasterStack,
    reference: &RasterStack,
    start_month: usize,
    config: &PrepConfig,
) -> Result<PreparedFire, PreprocessError> {
    let masked = mask_unreliable(raw)?.select_channels(&SAMPLE_CHANNELS)?;
    let filled = knn_impute(&masked, config.knn_k)?;
    let ratio = deseasonalize(&filled, reference, start_month)?;
    let guarded = ratio.missing().iter().filter(|&&m| m).count();
    let ratio = if guarded > 0 { knn_impute(&ratio, config.knn_k)? } else { ratio };
    let scaling = ChannelScaling::fit(&ratio);
    let stack = scale_channels(&ratio, &scaling)?;
    Ok(PreparedFire { stack, scaling, guarded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::DEFAULT_CHANNELS;
    use proptest::prelude::*;

    fn one_channel(t: usize, h: usize, w: usize, f: impl Fn(usize, usize, usize) -> f32) -> RasterStack {
        let mut s = RasterStack::new(t, h, w, &[NDVI]);
        for tt in 0..t {
            for r in 0..h {
                for c in 0..w {
                    s.set(tt, r, c, 0, f(tt, r, c));
                }
            }
        }
        s
    }

    #[test]
    fn mask_identity_when_all_reliable() {
        let s = RasterStack::new(2, 3, 3, &DEFAULT_CHANNELS);
        let m = mask_unreliable(&s).unwrap();
        assert_eq!(m.n_channels(), 5);
        assert!(m.missing().iter().all(|&x| !x));
    }

    #[test]
    fn mask_flags_ndvi_and_evi() {
        let mut s = RasterStack::new(5, 3, 3, &DEFAULT_CHANNELS);
        s.set(3, 1, 1, 5, 2.0);
        let m = mask_unreliable(&s).unwrap();
        assert!(m.is_missing(3, 1, 1, 0) && m.is_missing(3, 1, 1, 1));
        assert!(!m.is_missing(3, 1, 1, 2));
        assert_eq!(m.missing().iter().filter(|&&x| x).count(), 2);
    }

    #[test]
    fn all_bad_qa_cannot_be_imputed() {
        let mut s = RasterStack::new(2, 2, 2, &DEFAULT_CHANNELS);
        for t in 0..2 {
            for p in 0..4 {
                s.set(t, p / 2, p % 2, 5, 3.0);
            }
        }
        let m = mask_unreliable(&s).unwrap();
        assert!((0..8).all(|i| m.is_missing(i / 4, (i / 2) % 2, i % 2, 0)));
        assert!(matches!(knn_impute(&m, 8), Err(PreprocessError::NothingObserved(c)) if c == NDVI));
        let no_qa = RasterStack::new(1, 1, 1, &[NDVI]);
        assert!(matches!(mask_unreliable(&no_qa), Err(PreprocessError::Raster(RasterError::MissingChannel(_)))));
    }

    #[test]
    fn impute_constant_neighbourhood() {
        let mut s = one_channel(1, 3, 3, |_, _, _| 0.6);
        s.set(0, 1, 1, 0, 99.0);
        s.set_missing(0, 1, 1, 0, true);
        let out = knn_impute(&s, 8).unwrap();
        assert!((out.get(0, 1, 1, 0) - 0.6).abs() < 1e-6);
        assert!(out.missing().iter().all(|&m| !m));
    }

    #[test]
    fn impute_no_missing_is_identity() {
        let s = one_channel(3, 4, 4, |t, r, c| (t * 16 + r * 4 + c) as f32);
        assert_eq!(knn_impute(&s, 8).unwrap(), s);
    }

    #[test]
    fn impute_matches_brute_force() {
        let mut s = one_channel(4, 6, 5, |t, r, c| ((t * 7 + r * 3 + c * 11) % 13) as f32 / 13.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cells: Vec<usize> = (0..4 * 6 * 5).collect();
        cells.shuffle(&mut rng);
        for &i in &cells[..40] {
            s.set_missing(i / 30, (i / 5) % 6, i % 5, 0, true);
        }
        let out = knn_impute(&s, 8).unwrap();
        for &i in &cells[..40] {
            let (t, r, c) = (i / 30, (i / 5) % 6, i % 5);
            let mut cand = vec![];
            for j in 0..120 {
                let (t2, r2, c2) = (j / 30, (j / 5) % 6, j % 5);
                if !s.is_missing(t2, r2, c2, 0) {
                    let d2 = (t2 as i64 - t as i64).pow(2) + (r2 as i64 - r as i64).pow(2) + (c2 as i64 - c as i64).pow(2);
                    cand.push((d2, t2, r2, c2));
                }
            }
            cand.sort();
            let (mut num, mut den) = (0.0, 0.0);
            for &(d2, t2, r2, c2) in &cand[..8] {
                let w = 1.0 / (d2 as f64).sqrt();
                num += w * s.get(t2, r2, c2, 0) as f64;
                den += w;
            }
            assert!((out.get(t, r, c, 0) as f64 - num / den).abs() < 1e-6);
        }
    }

    #[test]
    fn impute_is_idempotent() {
        let mut s = one_channel(2, 8, 8, |t, r, c| (r as f32 * 0.1).sin() + (c + t) as f32 * 0.01);
        for i in (0..128).step_by(7) {
            s.set_missing(i / 64, (i / 8) % 8, i % 8, 0, true);
        }
        let once = knn_impute(&s, 8).unwrap();
        assert_eq!(knn_impute(&once, 8).unwrap(), once);
    }

    pub(crate) fn smooth_field_rmse(t_len: usize, seed: u64) -> f64 {
        let truth = one_channel(t_len, 50, 50, |_, r, c| (r as f32 / 5.0).sin() * (c as f32 / 5.0).cos());
        let mut s = truth.clone();
        let n = t_len * 2500;
        let mut cells: Vec<usize> = (0..n).collect();
        cells.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let masked = &cells[..n / 5];
        let at = |i: usize| (i / 2500, (i / 50) % 50, i % 50);
        for &i in masked {
            let (t, r, c) = at(i);
            s.set(t, r, c, 0, f32::NAN);
            s.set_missing(t, r, c, 0, true);
        }
        let out = knn_impute(&s, 8).unwrap();
        let mse: f64 = masked
            .iter()
            .map(|&i| {
                let (t, r, c) = at(i);
                (out.get(t, r, c, 0) as f64 - truth.get(t, r, c, 0) as f64).powi(2)
            })
            .sum::<f64>()
            / masked.len() as f64;
        mse.sqrt()
    }

    #[test]
    fn smooth_field_imputation_error() {
        let pooled = (0..4).map(|s| smooth_field_rmse(25, s).powi(2)).sum::<f64>() / 4.0;
        assert!(pooled.sqrt() < 0.025, "rmse {}", pooled.sqrt());
        assert!(smooth_field_rmse(1, 0) < 0.06);
    }

    fn reference(h: usize, w: usize, f: impl Fn(usize, usize, usize) -> f32) -> RasterStack {
        one_channel(12, h, w, f)
    }

    #[test]
    fn ratio_of_reference_is_one() {
        let re = reference(4, 4, |m, r, c| 0.3 + 0.05 * m as f32 + 0.01 * (r + c) as f32);
        let post = one_channel(25, 4, 4, |t, r, c| re.get((t + 5) % 12, r, c, 0));
        let out = deseasonalize(&post, &re, 5).unwrap();
        assert!(out.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn ratio_division_and_guard() {
        let mut re = reference(2, 2, |_, _, _| 0.6);
        re.set(0, 1, 1, 0, 0.01);
        let post = one_channel(1, 2, 2, |_, _, _| 0.3);
        let out = deseasonalize(&post, &re, 0).unwrap();
        assert_eq!(out.get(0, 0, 0, 0), 0.5);
        assert!(out.is_missing(0, 1, 1, 0));
        let filled = knn_impute(&out, 8).unwrap();
        assert!((0.0..=3.0).contains(&filled.get(0, 1, 1, 0)));
        assert!(matches!(deseasonalize(&post, &one_channel(11, 2, 2, |_, _, _| 0.5), 0), Err(PreprocessError::Reference(11))));
    }

    #[test]
    fn scaling_endpoints() {
        let mut s = RasterStack::new(3, 1, 1, &SAMPLE_CHANNELS);
        for (t, v) in [240.0, 285.0, 330.0].into_iter().enumerate() {
            s.set(t, 0, 0, 2, v);
            s.set(t, 0, 0, 0, 1.7);
            s.set(t, 0, 0, 3, 0.8);
        }
        let sc = ChannelScaling::fit(&s);
        let out = scale_channels(&s, &sc).unwrap();
        assert_eq!([out.get(0, 0, 0, 2), out.get(1, 0, 0, 2), out.get(2, 0, 0, 2)], [0.0, 0.5, 1.0]);
        assert!(out.channel(4).iter().all(|&v| v == 0.0));
        assert!(out.channel(0).iter().all(|&v| v == 1.7));
        assert!(out.channel(3).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn precip_log_min_max() {
        let mut s = RasterStack::new(3, 1, 1, &SAMPLE_CHANNELS);
        for (t, v) in [0.0, 1.0, 9.0].into_iter().enumerate() {
            s.set(t, 0, 0, 4, v);
        }
        let sc = ChannelScaling::fit(&s);
        let out = scale_channels(&s, &sc).unwrap();
        assert_eq!(out.get(0, 0, 0, 4), 0.0);
        assert!((out.get(1, 0, 0, 4) - 2f32.ln() / 10f32.ln()).abs() < 1e-6);
        assert_eq!(out.get(2, 0, 0, 4), 1.0);
        let t = sc.get(PRECIP).unwrap();
        assert!((t.invert(t.apply(1.0)) - 1.0).abs() < 1e-5);
    }

    fn fire_stack(h: usize, w: usize) -> RasterStack {
        let mut s = RasterStack::new(2, h, w, &SAMPLE_CHANNELS);
        for (i, v) in s.data_mut().iter_mut().enumerate() {
            *v = i as f32;
        }
        s
    }

    #[test]
    fn partition_counts_and_corner() {
        let s = fire_stack(50, 50);
        let parts = partition_subgrids(&s).unwrap();
        assert_eq!(parts.len(), 25);
        assert_eq!((parts[1].row0, parts[1].col0, parts[5].row0), (0, 10, 10));
        for r in 0..10 {
            for c in 0..10 {
                assert_eq!(parts[0].stack.get(1, r, c, 2), s.get(1, r, c, 2));
            }
        }
        assert_eq!(reassemble(&parts, 50, 50).unwrap(), s);
        assert!(matches!(partition_subgrids(&fire_stack(45, 50)), Err(PreprocessError::Tiling { .. })));
    }

    #[test]
    fn burn_fraction_from_mask() {
        let mut s = RasterStack::new(1, 20, 20, &SAMPLE_CHANNELS);
        for r in 0..20 {
            for c in 0..20 {
                s.set(0, r, c, 3, if r < 10 || c < 5 { 1.0 } else { 0.0 });
            }
        }
        let parts = partition_subgrids(&s).unwrap();
        let f: Vec<f32> = parts.iter().map(|p| p.burn_fraction).collect();
        assert_eq!(f, vec![1.0, 1.0, 0.5, 0.0]);
        assert_eq!(parts[2].burned().unwrap().iter().filter(|&&b| b).count(), 50);
    }

    #[test]
    fn erratic_rule_examples() {
        let rule = ErraticRule::default();
        assert!(rule.violation(&[1.0; 25]).is_none());
        assert!(rule.violation(&[0.5, 0.5, 3.0]).is_some());
        let rise: Vec<f64> = (0..25).map(|t| 0.6 + 0.4 * t as f64 / 24.0).collect();
        assert!(rule.violation(&rise).is_none());
        assert!(rule.violation(&[0.4, -0.1]).is_some());
        assert!(rule.violation(&[3.1]).is_some());
    }

    #[test]
    fn erratic_filter_reports_reasons() {
        let calm = one_channel(3, 2, 2, |_, _, _| 1.0);
        let wild = one_channel(3, 2, 2, |t, _, _| if t == 2 { 3.0 } else { 0.5 });
        let out = filter_erratic(&[("a".into(), &calm), ("b".into(), &wild)], &ErraticRule::default()).unwrap();
        assert_eq!(out.included, vec!["a".to_string()]);
        assert_eq!(out.excluded[0].0, "b");
    }

    #[test]
    fn noiseless_logistic_fires_pass_filter() {
        use crate::logistic::{logistic_eval, LogisticParams};
        let rule = ErraticRule::default();
        // capacities as the generator clips them
        for i in 0..20 {
            for j in 0..10 {
                for t0 in [-5.0, 2.0, 8.0, 20.0] {
                    let p = LogisticParams::new(0.3 + 1.0 * j as f64 / 9.0, -1.2 + 1.9 * i as f64 / 19.0, t0);
                    let means: Vec<f64> = (0..25).map(|t| logistic_eval(&p, t as f64)).collect();
                    assert!(rule.violation(&means).is_none(), "{p:?}");
                }
            }
        }
        let steep = LogisticParams::new(2.0, -1.2, 8.5);
        let means: Vec<f64> = (0..25).map(|t| logistic_eval(&steep, t as f64)).collect();
        assert!(rule.violation(&means).is_some());
    }

    #[test]
    fn split_by_fire() {
        let ids: Vec<String> = (0..10).map(|i| format!("F{i}")).collect();
        let a = split_train_val(&ids, 0.8, 4).unwrap();
        assert_eq!((a.train.len(), a.val.len()), (8, 2));
        assert!(a.val.iter().all(|v| !a.train.contains(v)));
        assert_eq!(split_train_val(&ids, 0.8, 4).unwrap(), a);
        let all = split_train_val(&ids, 1.0, 4).unwrap();
        assert!(all.val.is_empty() && all.warning.is_some());
        assert!(split_train_val(&ids[..1], 0.8, 4).is_err());
    }

    #[test]
    fn sample_tensor_layout() {
        let mut s = RasterStack::new(25, 10, 10, &SAMPLE_CHANNELS);
        for (i, v) in s.data_mut().iter_mut().enumerate() {
            *v = i as f32;
        }
        let sub = Subgrid { row0: 10, col0: 20, stack: s.clone(), burn_fraction: 0.7 };
        let mut st = SampleTensor::new(25, 10, 10, 5);
        st.push("F1", &sub).unwrap();
        st.push("F2", &sub).unwrap();
        assert_eq!(st.len(), 2);
        assert_eq!(st.sample(1), s.data());
        assert_eq!(st.ratio_frames(0)[3], 15.0);
        let mut bad = sub.clone();
        bad.stack.set_missing(0, 0, 0, 0, true);
        assert!(st.push("F3", &bad).is_err());
    }

    #[test]
    fn prepared_noiseless_fire_is_the_curve() {
        use crate::raster::{synth_generate, SynthConfig};
        let cfg = SynthConfig { n_fires: 1, height: 20, width: 20, t_len: 25, sigma: 0.0, dropout: 0.0, seed: 0 };
        let f = &synth_generate(&cfg, 5).unwrap()[0];
        let prep = prepare_fire(&f.stack, &f.reference, f.truth.start_month, &PrepConfig::default()).unwrap();
        assert_eq!(prep.guarded, 0);
        let s = &prep.stack;
        for t in 0..25 {
            for p in 0..400 {
                let want = crate::logistic::logistic_eval(
                    &crate::logistic::LogisticParams::new(
                        f.truth.l_true[p] as f64,
                        f.truth.k_true[p] as f64,
                        f.truth.t0_true[p] as f64,
                    ),
                    t as f64,
                );
                assert!((s.get(t, p / 20, p % 20, 0) as f64 - want).abs() < 1e-6 * want.max(1.0));
            }
        }
        assert!(s.data().iter().all(|v| v.is_finite()));
        for ch in 2..5 {
            assert!(s.channel(ch).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    proptest! {
        #[test]
        fn deseasonalize_inverts_multiplication(vals in proptest::collection::vec(0.05f32..1.0, 12 * 4), ratio in proptest::collection::vec(0.0f32..2.0, 6 * 4), start in 0usize..12) {
            let re = reference(2, 2, |m, r, c| vals[m * 4 + r * 2 + c]);
            let post = one_channel(6, 2, 2, |t, r, c| re.get((start + t) % 12, r, c, 0));
            let out = deseasonalize(&post, &re, start).unwrap();
            prop_assert!(out.data().iter().all(|&v| v == 1.0));
            let post = one_channel(6, 2, 2, |t, r, c| re.get((start + t) % 12, r, c, 0) * ratio[t * 4 + r * 2 + c]);
            let out = deseasonalize(&post, &re, start).unwrap();
            for (i, &v) in out.data().iter().enumerate() {
                prop_assert!((v - ratio[i]).abs() <= 1e-6 * ratio[i].max(1.0));
            }
        }

        #[test]
        fn partition_is_a_bijection(seed in 0u64..500) {
            let mut s = RasterStack::new(2, 20, 30, &SAMPLE_CHANNELS);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for v in s.data_mut() { *v = rand::Rng::random(&mut rng); }
            let parts = partition_subgrids(&s).unwrap();
            prop_assert_eq!(parts.len(), 6);
            prop_assert_eq!(reassemble(&parts, 20, 30).unwrap(), s);
        }
    }
}
