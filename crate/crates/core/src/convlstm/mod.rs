//! Convolutional LSTM forecaster: cell, three-layer model, training loop and
//! autoregressive rollout.

pub mod cell;
pub mod model;
pub mod rollout;
pub mod train;

pub use cell::{CellState, ConvLstmCell};
pub use model::{ConvLstmModel, ForwardCache, ModelConfig, StepState, DEFAULT_FILTERS, INPUT_CHANNELS, TARGET_CHANNEL};
pub use rollout::{
    rollout_forecast, seasonal_covariates, ExogenousPolicy, ForecastResult, RolloutError, StepModel, FORECAST_FRAMES,
    OBSERVED_FRAMES,
};
pub use train::{evaluate, log_csv, train, EpochLog, TrainConfig, TrainError, TrainOutcome};
