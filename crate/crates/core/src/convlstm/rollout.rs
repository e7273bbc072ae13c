use thiserror::Error;

use super::model::{ConvLstmModel, StepState, INPUT_CHANNELS};
use crate::nn::{Grid, NnError};
use crate::preprocess::ChannelScaling;
use crate::raster::{month_of, RasterStack, LST, NDVI, PRECIP};

pub const OBSERVED_FRAMES: usize = 5;
pub const FORECAST_FRAMES: usize = 20;
pub const EVI_PER_NDVI: f32 = 0.9;
/// Values per pixel and step in a seasonal covariate table.
pub const SEASON_FIELDS: usize = 3;

// positions within a sample frame
const NDVI_CH: usize = 0;
const EVI_CH: usize = 1;
const LST_CH: usize = 2;
const PRECIP_CH: usize = 4;

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("need at least {OBSERVED_FRAMES} observed frames, got {0}")]
    TooFewObserved(usize),
    #[error("rollout shape: {0}")]
    Shape(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Anything that turns a stream of frames into next-frame NDVI forecasts.
pub trait StepModel {
    type State;
    fn begin(&self, grid: Grid) -> Self::State;
    /// Consumes one `grid.pixels() x 5` frame, returns `grid.pixels()` forecasts.
    fn advance(&mut self, state: &mut Self::State, frame: &[f32]) -> Result<Vec<f32>, NnError>;
}

impl StepModel for ConvLstmModel<f32> {
    type State = StepState<f32>;

    fn begin(&self, grid: Grid) -> StepState<f32> {
        self.start(grid)
    }

    fn advance(&mut self, state: &mut StepState<f32>, frame: &[f32]) -> Result<Vec<f32>, NnError> {
        self.step(state, frame)
    }
}

/// How the non-NDVI channels evolve once the observations run out.
#[derive(Debug, Clone, PartialEq)]
pub enum ExogenousPolicy {
    /// `season` is `[step][pixel][reference NDVI, LST, PRECIP]` with LST and
    /// PRECIP already scaled. EVI follows the predicted NDVI turned back into
    /// index units with the reference, LST and PRECIP are copied and
    /// FIREMASK is held.
    PersistenceSeason { season: Vec<f32> },
    /// Every covariate keeps its last observed value.
    Persistence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub grid: Grid,
    /// `[t][pixel][channel]` as fed to the model.
    pub observed: Vec<f32>,
    /// Forecast NDVI ratio, `[step][pixel]`.
    pub predicted: Vec<f32>,
    /// Mean absolute error of each forecast step, when the truth is known.
    pub frame_mae: Option<Vec<f64>>,
}

impl ForecastResult {
    pub fn horizon(&self) -> usize {
        self.predicted.len() / self.grid.pixels()
    }

    /// Observed NDVI followed by the forecast, `[t][pixel]`.
    pub fn ratio_series(&self) -> Vec<f32> {
        let mut out: Vec<f32> = self.observed.iter().skip(NDVI_CH).step_by(INPUT_CHANNELS).copied().collect();
        out.extend_from_slice(&self.predicted);
        out
    }

    /// Scores the forecast against the true NDVI of the forecast steps,
    /// `[step][pixel]`.
    pub fn score(&mut self, actual: &[f32]) -> Result<&[f64], RolloutError> {
        if actual.len() != self.predicted.len() {
            return Err(RolloutError::Shape(format!("{} truth values for {} forecasts", actual.len(), self.predicted.len())));
        }
        let n = self.grid.pixels();
        let mae = self
            .predicted
            .chunks(n)
            .zip(actual.chunks(n))
            .map(|(p, a)| p.iter().zip(a).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / n as f64)
            .collect();
        Ok(self.frame_mae.insert(mae))
    }
}

/// Warms the model up on the observed frames (`[t][pixel][channel]`), then
/// feeds each NDVI forecast back as the next input for `horizon` steps.
pub fn rollout_forecast<M: StepModel>(
    model: &mut M,
    observed: &[f32],
    grid: Grid,
    policy: &ExogenousPolicy,
    horizon: usize,
) -> Result<ForecastResult, RolloutError> {
    let n = grid.pixels();
    let frame = n * INPUT_CHANNELS;
    if frame == 0 || observed.len() % frame != 0 {
        return Err(RolloutError::Shape(format!("{} observed values for {n} pixels x {INPUT_CHANNELS} channels", observed.len())));
    }
    let n_obs = observed.len() / frame;
    if n_obs < OBSERVED_FRAMES {
        return Err(RolloutError::TooFewObserved(n_obs));
    }
    if let ExogenousPolicy::PersistenceSeason { season } = policy {
        if season.len() != horizon * n * SEASON_FIELDS {
            return Err(RolloutError::Shape(format!("season has {} values, need {}", season.len(), horizon * n * SEASON_FIELDS)));
        }
    }

    let mut state = model.begin(grid);
    let mut next = Vec::new();
    for f in observed.chunks(frame) {
        next = model.advance(&mut state, f)?;
    }
    let mut current = observed[observed.len() - frame..].to_vec();
    let mut predicted = Vec::with_capacity(horizon * n);
    for step in 0..horizon {
        predicted.extend_from_slice(&next);
        if step + 1 == horizon {
            break;
        }
        for (p, &v) in next.iter().enumerate() {
            let px = &mut current[p * INPUT_CHANNELS..(p + 1) * INPUT_CHANNELS];
            px[NDVI_CH] = v;
            if let ExogenousPolicy::PersistenceSeason { season } = policy {
                let s = &season[(step * n + p) * SEASON_FIELDS..][..SEASON_FIELDS];
                px[EVI_CH] = EVI_PER_NDVI * v * s[0];
                px[LST_CH] = s[1];
                px[PRECIP_CH] = s[2];
            }
        }
        next = model.advance(&mut state, &current)?;
    }
    Ok(ForecastResult { grid, observed: observed.to_vec(), predicted, frame_mae: None })
}

/// Reference NDVI with scaled LST and PRECIP for absolute steps `from..from + horizon`, taken
/// from the reference year's frame of the same calendar month. `windows`
/// lists the `(row0, col0)` of each `size x size` tile in batch order.
pub fn seasonal_covariates(
    reference: &RasterStack,
    scaling: &ChannelScaling,
    start_month: usize,
    from: usize,
    horizon: usize,
    windows: &[(usize, usize)],
    size: usize,
) -> Result<Vec<f32>, RolloutError> {
    let missing = |what: &str| RolloutError::Shape(format!("reference or scaling lacks {what}"));
    let ndvi = reference.channel_index(NDVI).ok_or_else(|| missing(NDVI))?;
    let lst = reference.channel_index(LST).ok_or_else(|| missing(LST))?;
    let rain = reference.channel_index(PRECIP).ok_or_else(|| missing(PRECIP))?;
    let lst_t = scaling.get(LST).ok_or_else(|| missing(LST))?;
    let rain_t = scaling.get(PRECIP).ok_or_else(|| missing(PRECIP))?;
    if reference.t_len() < 12 {
        return Err(RolloutError::Shape(format!("reference has {} months", reference.t_len())));
    }
    for &(r0, c0) in windows {
        if r0 + size > reference.height() || c0 + size > reference.width() {
            return Err(RolloutError::Shape(format!("window ({r0},{c0}) outside the reference grid")));
        }
    }
    let mut out = Vec::with_capacity(horizon * windows.len() * size * size * SEASON_FIELDS);
    for step in 0..horizon {
        let m = month_of(start_month, from + step);
        for &(r0, c0) in windows {
            for r in r0..r0 + size {
                for c in c0..c0 + size {
                    out.push(reference.get(m, r, c, ndvi));
                    out.push(lst_t.apply(reference.get(m, r, c, lst)));
                    out.push(rain_t.apply(reference.get(m, r, c, rain)));
                }
            }
        }
    }
    Ok(out)
}
