//! Glue between the stages: per-fire logistic targets, Tucker training
//! pairs and the forecast-then-regress prediction of `(k, L)`.

use thiserror::Error;

use crate::convlstm::{rollout_forecast, seasonal_covariates, ConvLstmModel, ExogenousPolicy, ForecastResult, RolloutError};
use crate::logistic::{aggregate_fire, fit_grid, FireRecovery, GridFit, LogisticError, MIN_BURN_FRACTION};
use crate::nn::{Checkpoint, Grid};
use crate::preprocess::{partition_subgrids, ChannelScaling, PreprocessError, Subgrid, SUBGRID};
use crate::raster::{RasterStack, NDVI};
use crate::tucker::{tucker_fit, TuckerConfig, TuckerError, TuckerWeights};

/// Prefixes of the two regressors inside a checkpoint.
pub const TUCKER_K: &str = "tucker_k";
pub const TUCKER_L: &str = "tucker_L";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("fire {0} has no subgrid with at least half its area burned")]
    NoQualifying(String),
    #[error("series length {got}, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Logistic(#[from] LogisticError),
    #[error(transparent)]
    Tucker(#[from] TuckerError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
}

/// Subgrids that take part in regression and prediction.
pub fn qualifying(subgrids: &[Subgrid]) -> Vec<&Subgrid> {
    subgrids.iter().filter(|s| s.burn_fraction as f64 >= MIN_BURN_FRACTION).collect()
}

/// NDVI ratio of one tile, `[t][row][col]`.
pub fn tile_series(sub: &Subgrid) -> Result<Vec<f32>, PreprocessError> {
    let ch = sub.stack.require_channel(NDVI)?;
    let (h, w) = (sub.stack.height(), sub.stack.width());
    let mut out = Vec::with_capacity(sub.stack.t_len() * h * w);
    for t in 0..sub.stack.t_len() {
        for r in 0..h {
            for c in 0..w {
                out.push(sub.stack.get(t, r, c, ch));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TileFit {
    pub row0: usize,
    pub col0: usize,
    /// The tile's actual ratio frames, `[t][row][col]`.
    pub series: Vec<f32>,
    pub fit: GridFit,
}

#[derive(Debug, Clone)]
pub struct FireFit {
    pub tiles: Vec<TileFit>,
    pub recovery: FireRecovery,
}

/// Logistic fits of every qualifying tile of a prepared fire and their
/// pixel-weighted fire average. Tiles whose pixels are all flat are skipped.
pub fn fit_fire(fire_id: &str, prepared: &RasterStack) -> Result<FireFit, PipelineError> {
    let subgrids = partition_subgrids(prepared)?;
    let mut tiles = vec![];
    for sub in qualifying(&subgrids) {
        let series = tile_series(sub)?;
        match fit_grid(&series, sub.stack.t_len(), &sub.burned()?) {
            Ok(fit) => tiles.push(TileFit { row0: sub.row0, col0: sub.col0, series, fit }),
            Err(LogisticError::NoQualifying | LogisticError::Rejected(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    if tiles.is_empty() {
        return Err(PipelineError::NoQualifying(fire_id.to_string()));
    }
    let parts: Vec<(f64, f64, usize)> = tiles.iter().map(|t| (t.fit.mean_k, t.fit.mean_l, t.fit.n_pixels)).collect();
    let recovery = aggregate_fire(fire_id, &parts)?;
    Ok(FireFit { tiles, recovery })
}

/// One regressor per target.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressors {
    pub k: TuckerWeights,
    pub l: TuckerWeights,
}

impl Regressors {
    /// Fits both targets on the actual frames of the given tiles.
    pub fn fit(tiles: &[&TileFit], config: &TuckerConfig) -> Result<(Self, [Vec<f64>; 2]), PipelineError> {
        let series: Vec<&[f32]> = tiles.iter().map(|t| t.series.as_slice()).collect();
        let targets: Vec<(f64, f64)> = tiles.iter().map(|t| (t.fit.mean_k, t.fit.mean_l)).collect();
        Self::fit_series(&series, &targets, config)
    }

    /// Fits on `[t][row][col]` tile series paired with their `(k, L)` targets.
    pub fn fit_series(series: &[&[f32]], targets: &[(f64, f64)], config: &TuckerConfig) -> Result<(Self, [Vec<f64>; 2]), PipelineError> {
        let t_len = series.first().map_or(0, |s| s.len() / (SUBGRID * SUBGRID));
        let dims = [t_len, SUBGRID, SUBGRID];
        if let Some(s) = series.iter().find(|s| s.len() != t_len * SUBGRID * SUBGRID) {
            return Err(PipelineError::Length { got: s.len(), expected: t_len * SUBGRID * SUBGRID });
        }
        let x: Vec<f64> = series.iter().flat_map(|s| s.iter().map(|&v| v as f64)).collect();
        let yk: Vec<f64> = targets.iter().map(|t| t.0).collect();
        let yl: Vec<f64> = targets.iter().map(|t| t.1).collect();
        let k = tucker_fit(&x, &yk, dims, config)?;
        let l = tucker_fit(&x, &yl, dims, config)?;
        Ok((Self { k: k.weights, l: l.weights }, [k.objective, l.objective]))
    }

    /// `(k, L)` for one `[t][row][col]` series.
    pub fn predict(&self, series: &[f32]) -> Result<(f64, f64), PipelineError> {
        if series.len() != self.k.input_len() {
            return Err(PipelineError::Length { got: series.len(), expected: self.k.input_len() });
        }
        let x: Vec<f64> = series.iter().map(|&v| v as f64).collect();
        Ok((self.k.predict(&x)?, self.l.predict(&x)?))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        self.k.to_checkpoint(TUCKER_K, &mut ck);
        self.l.to_checkpoint(TUCKER_L, &mut ck);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, PipelineError> {
        Ok(Self { k: TuckerWeights::from_checkpoint(TUCKER_K, ck)?, l: TuckerWeights::from_checkpoint(TUCKER_L, ck)? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TilePrediction {
    pub row0: usize,
    pub col0: usize,
    pub k: f64,
    pub l: f64,
    /// Burned pixels in the tile, the weight of this tile in the fire mean.
    pub n_pixels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirePrediction {
    pub fire_id: String,
    pub k_hat: f64,
    pub l_hat: f64,
    pub n_pixels: usize,
    pub tiles: Vec<TilePrediction>,
}

/// Pixel-weighted fire mean of tile predictions.
pub fn combine(fire_id: &str, tiles: Vec<TilePrediction>) -> Result<FirePrediction, PipelineError> {
    let n: usize = tiles.iter().map(|t| t.n_pixels).sum();
    if n == 0 {
        return Err(PipelineError::NoQualifying(fire_id.to_string()));
    }
    let k_hat = tiles.iter().map(|t| t.k * t.n_pixels as f64).sum::<f64>() / n as f64;
    let l_hat = tiles.iter().map(|t| t.l * t.n_pixels as f64).sum::<f64>() / n as f64;
    Ok(FirePrediction { fire_id: fire_id.to_string(), k_hat, l_hat, n_pixels: n, tiles })
}

/// Everything a rollout needs about one prepared fire.
pub struct FireInputs<'a> {
    pub fire_id: &'a str,
    /// Scaled, imputed ratio stack with the five sample channels.
    pub prepared: &'a RasterStack,
    /// Raw reference year, frame `m` = calendar month `m`.
    pub reference: &'a RasterStack,
    pub scaling: &'a ChannelScaling,
    pub start_month: usize,
}

/// Forecast of every qualifying tile, batched: returns the tiles in batch
/// order and the rollout over a `Grid` with one batch entry per tile.
pub fn forecast_fire(
    model: &mut ConvLstmModel<f32>,
    fire: &FireInputs,
    observed: usize,
) -> Result<(Vec<Subgrid>, ForecastResult), PipelineError> {
    let tiles: Vec<Subgrid> = qualifying(&partition_subgrids(fire.prepared)?).into_iter().cloned().collect();
    if tiles.is_empty() {
        return Err(PipelineError::NoQualifying(fire.fire_id.to_string()));
    }
    let t_len = fire.prepared.t_len();
    if t_len <= observed {
        return Err(PipelineError::Length { got: t_len, expected: observed + 1 });
    }
    let horizon = t_len - observed;
    let grid = Grid::new(tiles.len(), SUBGRID, SUBGRID);
    let frame = SUBGRID * SUBGRID * fire.prepared.n_channels();
    let mut frames = Vec::with_capacity(observed * tiles.len() * frame);
    for t in 0..observed {
        for tile in &tiles {
            frames.extend_from_slice(&tile.stack.data()[t * frame..(t + 1) * frame]);
        }
    }
    let windows: Vec<(usize, usize)> = tiles.iter().map(|s| (s.row0, s.col0)).collect();
    let season = seasonal_covariates(fire.reference, fire.scaling, fire.start_month, observed, horizon, &windows, SUBGRID)?;
    let mut result = rollout_forecast(model, &frames, grid, &ExogenousPolicy::PersistenceSeason { season }, horizon)?;

    let px = SUBGRID * SUBGRID;
    let mut actual = Vec::with_capacity(horizon * tiles.len() * px);
    for t in observed..t_len {
        for tile in &tiles {
            actual.extend(tile.stack.data()[t * frame..(t + 1) * frame].iter().step_by(fire.prepared.n_channels()).copied());
        }
    }
    result.score(&actual)?;
    Ok((tiles, result))
}

/// The `[t][row][col]` series of batch entry `b` from a forecast.
pub fn forecast_series(result: &ForecastResult, b: usize) -> Vec<f32> {
    let px = result.grid.height * result.grid.width;
    result.ratio_series().chunks(result.grid.pixels()).flat_map(|f| f[b * px..(b + 1) * px].to_vec()).collect()
}

/// Forecast 20 frames from the first five, then regress `(k, L)` on the
/// observed-plus-forecast series of each qualifying tile.
pub fn convlstmtr_predict(
    model: &mut ConvLstmModel<f32>,
    regressors: &Regressors,
    fire: &FireInputs,
    observed: usize,
) -> Result<(FirePrediction, ForecastResult), PipelineError> {
    let (tiles, result) = forecast_fire(model, fire, observed)?;
    let mut preds = Vec::with_capacity(tiles.len());
    for (b, tile) in tiles.iter().enumerate() {
        let (k, l) = regressors.predict(&forecast_series(&result, b))?;
        let n_pixels = tile.burned()?.iter().filter(|&&x| x).count();
        preds.push(TilePrediction { row0: tile.row0, col0: tile.col0, k, l, n_pixels });
    }
    Ok((combine(fire.fire_id, preds)?, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convlstm::ModelConfig;
    use crate::preprocess::{prepare_fire, PrepConfig};
    use crate::raster::{synth_generate, SynthConfig};

    fn fires(sigma: f64) -> Vec<crate::raster::SynthFire> {
        let cfg = SynthConfig { n_fires: 3, height: 20, width: 20, t_len: 25, sigma, dropout: 0.0, seed: 0 };
        synth_generate(&cfg, 11).unwrap()
    }

    #[test]
    fn noiseless_fire_fit_recovers_planted_mean() {
        for f in fires(0.0) {
            let prep = prepare_fire(&f.stack, &f.reference, f.truth.start_month, &PrepConfig::default()).unwrap();
            let fit = fit_fire(&f.truth.fire_id, &prep.stack).unwrap();
            // the fire average covers qualifying tiles only, so compare on those pixels
            let (mut s, mut n) = (0.0, 0);
            for t in &fit.tiles {
                for (p, px) in t.fit.pixels.iter().enumerate() {
                    if px.as_ref().is_some_and(|x| !x.degenerate) {
                        let (r, c) = (t.row0 + p / 10, t.col0 + p % 10);
                        s += f.truth.k_true[r * 20 + c] as f64;
                        n += 1;
                    }
                }
            }
            assert!((fit.recovery.mean_k - s / n as f64).abs() < 1e-3, "{} vs {}", fit.recovery.mean_k, s / n as f64);
        }
    }

    #[test]
    fn combine_weights_by_pixels() {
        let t = |k: f64, n: usize| TilePrediction { row0: 0, col0: 0, k, l: 1.0, n_pixels: n };
        let p = combine("F", vec![t(0.2, 50), t(0.4, 100)]).unwrap();
        assert!((p.k_hat - 1.0 / 3.0).abs() < 1e-12);
        let single = combine("F", vec![t(-0.7, 60)]).unwrap();
        assert_eq!(single.k_hat, -0.7);
        assert!(combine("F", vec![]).is_err());
    }

    #[test]
    fn regressors_round_trip_and_predict_in_sample() {
        let fits: Vec<FireFit> = fires(0.0)
            .iter()
            .map(|f| {
                let prep = prepare_fire(&f.stack, &f.reference, f.truth.start_month, &PrepConfig::default()).unwrap();
                fit_fire(&f.truth.fire_id, &prep.stack).unwrap()
            })
            .collect();
        let tiles: Vec<&TileFit> = fits.iter().flat_map(|f| &f.tiles).collect();
        let cfg = TuckerConfig { ranks: [2, 1, 1], ..Default::default() };
        let (regs, _) = Regressors::fit(&tiles, &cfg).unwrap();
        for t in &tiles {
            let (k, _) = regs.predict(&t.series).unwrap();
            assert!((k - t.fit.mean_k).abs() < 0.05, "{k} vs {}", t.fit.mean_k);
        }
        let back = Regressors::from_checkpoint(&Checkpoint::from_bytes(&regs.to_checkpoint().to_bytes().unwrap()).unwrap()).unwrap();
        let x = &tiles[0].series;
        let (a, b) = (regs.predict(x).unwrap(), back.predict(x).unwrap());
        assert!((a.0 - b.0).abs() < 1e-5 && (a.1 - b.1).abs() < 1e-5);
    }

    #[test]
    fn prediction_covers_qualifying_tiles() {
        let all = fires(0.05);
        let preps: Vec<_> =
            all.iter().map(|f| prepare_fire(&f.stack, &f.reference, f.truth.start_month, &PrepConfig::default()).unwrap()).collect();
        let fits: Vec<FireFit> = preps.iter().map(|p| fit_fire("F", &p.stack).unwrap()).collect();
        let tiles: Vec<&TileFit> = fits.iter().flat_map(|f| &f.tiles).collect();
        let (f, prep) = (&all[0], &preps[0]);
        let cfg = TuckerConfig { ranks: [1, 1, 1], ..Default::default() };
        let (regs, _) = Regressors::fit(&tiles, &cfg).unwrap();
        let mut model = ConvLstmModel::<f32>::new(ModelConfig { in_channels: 5, filters: [2, 2, 2] }, 0);
        let inputs = FireInputs {
            fire_id: "F",
            prepared: &prep.stack,
            reference: &f.reference,
            scaling: &prep.scaling,
            start_month: f.truth.start_month,
        };
        let (pred, result) = convlstmtr_predict(&mut model, &regs, &inputs, 5).unwrap();
        assert_eq!(pred.tiles.len(), qualifying(&partition_subgrids(&prep.stack).unwrap()).len());
        assert_eq!(result.horizon(), 20);
        assert_eq!(result.frame_mae.as_ref().unwrap().len(), 20);
        assert!(pred.k_hat.is_finite() && pred.l_hat.is_finite());
        // the observed part of each series is the tile's own data
        let parts = partition_subgrids(&prep.stack).unwrap();
        let tile0 = parts.iter().find(|t| (t.row0, t.col0) == (pred.tiles[0].row0, pred.tiles[0].col0)).unwrap();
        assert_eq!(&forecast_series(&result, 0)[..500], &tile_series(tile0).unwrap()[..500]);
    }
}
