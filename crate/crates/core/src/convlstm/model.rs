use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cell::{CellState, ConvLstmCell, SequenceCache};
use crate::nn::act::relu;
use crate::nn::conv::{col2im_3x3x3_add, im2col_3x3, im2col_3x3x3, Grid, TimePadding};
use crate::nn::norm::NormCache;
use crate::nn::{BatchNorm, Checkpoint, NnError, NormMode, Param, Real, Tensor};

/// Layer widths. The published architecture is `[32, 128, 64]`.
pub const DEFAULT_FILTERS: [usize; 3] = [32, 128, 64];

/// Input channels of a training sample: NDVI ratio, EVI, LST, FIREMASK, PRECIP.
pub const INPUT_CHANNELS: usize = 5;

/// The channel the model forecasts (NDVI ratio).
pub const TARGET_CHANNEL: usize = 0;

/// The output head never looks ahead in time, so one-step-ahead training
/// cannot leak the target frame.
pub const HEAD_PADDING: TimePadding = TimePadding::Causal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub filters: [usize; 3],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { in_channels: INPUT_CHANNELS, filters: DEFAULT_FILTERS }
    }
}

/// Three ConvLSTM layers, batch norm + ReLU after the first two, and a
/// single-filter 3x3x3 convolution head with linear output.
#[derive(Debug, Clone)]
pub struct ConvLstmModel<T> {
    pub cells: [ConvLstmCell<T>; 3],
    pub norms: [BatchNorm<T>; 2],
    /// `[3, 3, 3, F3, 1]`
    pub head_kernel: Param<T>,
    /// `[1]`
    pub head_bias: Param<T>,
}

/// Activations from a training-mode forward pass.
#[derive(Debug)]
pub struct ForwardCache<T> {
    t_len: usize,
    grid: Grid,
    inputs: Vec<T>,
    layers: [SequenceCache<T>; 3],
    /// Post-norm, pre-ReLU values of layers 1 and 2.
    normed: [Vec<T>; 2],
    /// ReLU outputs fed to layers 2 and 3.
    activated: [Vec<T>; 2],
    norm_caches: [Option<NormCache<T>>; 2],
    consumed: bool,
}

impl<T: Real> ConvLstmModel<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [f1, f2, f3] = config.filters;
        let cells = [
            ConvLstmCell::new("lstm1", config.in_channels, f1, &mut rng),
            ConvLstmCell::new("lstm2", f1, f2, &mut rng),
            ConvLstmCell::new("lstm3", f2, f3, &mut rng),
        ];
        let limit = (6.0 / (27 * f3 + 27) as f64).sqrt();
        let head = (0..27 * f3).map(|_| T::lit(rng.random_range(-limit..limit))).collect();
        Self {
            cells,
            norms: [BatchNorm::new("bn1", f1), BatchNorm::new("bn2", f2)],
            head_kernel: Param::new("head/kernel", Tensor::from_vec(&[3, 3, 3, f3, 1], head).unwrap()),
            head_bias: Param::new("head/bias", Tensor::zeros(&[1])),
        }
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            in_channels: self.cells[0].in_channels(),
            filters: [self.cells[0].filters(), self.cells[1].filters(), self.cells[2].filters()],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let [c1, c2, c3] = &mut self.cells;
        let [n1, n2] = &mut self.norms;
        let mut out: Vec<&mut Param<T>> = Vec::with_capacity(14);
        out.extend(c1.params_mut());
        out.extend([&mut n1.gain, &mut n1.offset]);
        out.extend(c2.params_mut());
        out.extend([&mut n2.gain, &mut n2.offset]);
        out.extend(c3.params_mut());
        out.extend([&mut self.head_kernel, &mut self.head_bias]);
        out
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out: Vec<&Param<T>> = Vec::with_capacity(14);
        out.extend(self.cells[0].params());
        out.extend([&self.norms[0].gain, &self.norms[0].offset]);
        out.extend(self.cells[1].params());
        out.extend([&self.norms[1].gain, &self.norms[1].offset]);
        out.extend(self.cells[2].params());
        out.extend([&self.head_kernel, &self.head_bias]);
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn cast<U: Real>(&self) -> ConvLstmModel<U> {
        let cast_norm = |n: &BatchNorm<T>| BatchNorm {
            gain: n.gain.cast(),
            offset: n.offset.cast(),
            running_mean: n.running_mean.iter().map(|v| U::lit(v.as_f64())).collect(),
            running_var: n.running_var.iter().map(|v| U::lit(v.as_f64())).collect(),
        };
        ConvLstmModel {
            cells: [self.cells[0].cast(), self.cells[1].cast(), self.cells[2].cast()],
            norms: [cast_norm(&self.norms[0]), cast_norm(&self.norms[1])],
            head_kernel: self.head_kernel.cast(),
            head_bias: self.head_bias.cast(),
        }
    }

    /// Runs a `[B, T, H, W, C]` batch and returns `[B, T-1, H, W, 1]`:
    /// output `t` is the forecast of frame `t + 1` from frames `0..=t`.
    pub fn forward_sequence(&mut self, batch: &Tensor<T>, mode: NormMode) -> Result<(Tensor<T>, ForwardCache<T>), NnError> {
        let [b, t_full, h, w, c] = *batch.shape() else {
            return Err(NnError::Shape(format!("expected [B,T,H,W,C], got {:?}", batch.shape())));
        };
        if t_full < 2 {
            return Err(NnError::Shape(format!("need at least 2 timesteps, got {t_full}")));
        }
        if c != self.cells[0].in_channels() {
            return Err(NnError::ChannelMismatch { expected: self.cells[0].in_channels(), got: c });
        }
        if b == 0 {
            return Err(NnError::EmptyBatch);
        }
        let t_len = t_full - 1;
        let grid = Grid::new(b, h, w);
        let inputs = to_time_major(batch.data(), b, t_full, h * w * c, t_len);
        let (out, cache) = self.forward_time_major(inputs, t_len, grid, mode)?;
        let y = from_time_major(&out, b, t_len, h * w);
        Ok((Tensor::from_vec(&[b, t_len, h, w, 1], y)?, cache))
    }

    fn forward_time_major(
        &mut self,
        inputs: Vec<T>,
        t_len: usize,
        grid: Grid,
        mode: NormMode,
    ) -> Result<(Vec<T>, ForwardCache<T>), NnError> {
        let l1 = self.cells[0].forward_sequence(&inputs, t_len, grid)?;
        let mut z1 = l1.hidden.clone();
        let n1 = self.norms[0].forward_rows(&mut z1, mode)?;
        let a1: Vec<T> = z1.iter().map(|&v| relu(v)).collect();
        let l2 = self.cells[1].forward_sequence(&a1, t_len, grid)?;
        let mut z2 = l2.hidden.clone();
        let n2 = self.norms[1].forward_rows(&mut z2, mode)?;
        let a2: Vec<T> = z2.iter().map(|&v| relu(v)).collect();
        let l3 = self.cells[2].forward_sequence(&a2, t_len, grid)?;
        let out = self.head_forward(&l3.hidden, t_len, grid);
        let cache = ForwardCache {
            t_len,
            grid,
            inputs,
            layers: [l1, l2, l3],
            normed: [z1, z2],
            activated: [a1, a2],
            norm_caches: [n1, n2],
            consumed: false,
        };
        Ok((out, cache))
    }

    fn head_forward(&self, hidden: &[T], t_len: usize, grid: Grid) -> Vec<T> {
        let f3 = self.cells[2].filters();
        let rows = t_len * grid.pixels();
        let mut cols = vec![T::zero(); rows * 27 * f3];
        im2col_3x3x3(hidden, t_len, grid, f3, HEAD_PADDING, &mut cols);
        let mut out = vec![self.head_bias.value.data()[0]; rows];
        T::gemm(rows, 27 * f3, 1, T::one(), &cols, false, self.head_kernel.value.data(), false, T::one(), &mut out);
        out
    }

    /// Accumulates parameter gradients for `grad_out` (shape of the forward
    /// output). The cache must come from a train-mode forward and is spent.
    pub fn backward(&mut self, cache: &mut ForwardCache<T>, grad_out: &Tensor<T>) -> Result<(), NnError> {
        if cache.consumed {
            return Err(NnError::GraphReused);
        }
        let ForwardCache { t_len, grid, .. } = *cache;
        let b = grid.batch;
        let hw = grid.height * grid.width;
        if grad_out.shape() != [b, t_len, grid.height, grid.width, 1] {
            return Err(NnError::Shape(format!("grad_out {:?}", grad_out.shape())));
        }
        let (Some(nc1), Some(nc2)) = (&cache.norm_caches[0], &cache.norm_caches[1]) else {
            return Err(NnError::Shape("backward needs a train-mode forward cache".into()));
        };
        cache.consumed = true;
        let dy = to_time_major(grad_out.data(), b, t_len, hw, t_len);

        // head
        let f3 = self.cells[2].filters();
        let rows = t_len * grid.pixels();
        let mut cols = vec![T::zero(); rows * 27 * f3];
        im2col_3x3x3(&cache.layers[2].hidden, t_len, grid, f3, HEAD_PADDING, &mut cols);
        T::gemm(27 * f3, rows, 1, T::one(), &cols, true, &dy, false, T::one(), self.head_kernel.grad.data_mut());
        self.head_bias.grad.data_mut()[0] += dy.iter().copied().sum::<T>();
        T::gemm(rows, 1, 27 * f3, T::one(), &dy, false, self.head_kernel.value.data(), true, T::zero(), &mut cols);
        let mut dh3 = vec![T::zero(); rows * f3];
        col2im_3x3x3_add(&cols, t_len, grid, f3, HEAD_PADDING, &mut dh3);
        drop(cols);

        let mut da2 = self.cells[2].backward_sequence(&cache.activated[1], &cache.layers[2], &dh3);
        relu_backward(&cache.normed[1], &mut da2);
        self.norms[1].backward_rows(nc2, &mut da2);
        let mut da1 = self.cells[1].backward_sequence(&cache.activated[0], &cache.layers[1], &da2);
        relu_backward(&cache.normed[0], &mut da1);
        self.norms[0].backward_rows(nc1, &mut da1);
        self.cells[0].backward_sequence(&cache.inputs, &cache.layers[0], &da1);
        Ok(())
    }

    /// Fresh recurrent state for step-wise (inference-mode) evaluation.
    pub fn start(&self, grid: Grid) -> StepState<T> {
        StepState {
            grid,
            cells: [
                CellState::zeros(grid, self.cells[0].filters()),
                CellState::zeros(grid, self.cells[1].filters()),
                CellState::zeros(grid, self.cells[2].filters()),
            ],
            recent: Vec::new(),
        }
    }

    /// Feeds one frame (`grid.pixels() x C`, pixel-major) and returns the
    /// forecast of the next frame's target channel (`grid.pixels()` values).
    /// Batch norm uses running statistics.
    pub fn step(&mut self, state: &mut StepState<T>, frame: &[T]) -> Result<Vec<T>, NnError> {
        let grid = state.grid;
        self.cells[0].step_in_place(frame, grid, &mut state.cells[0])?;
        let mut a1 = state.cells[0].hidden.clone();
        self.norms[0].forward_rows(&mut a1, NormMode::Infer)?;
        a1.iter_mut().for_each(|v| *v = relu(*v));
        self.cells[1].step_in_place(&a1, grid, &mut state.cells[1])?;
        let mut a2 = state.cells[1].hidden.clone();
        self.norms[1].forward_rows(&mut a2, NormMode::Infer)?;
        a2.iter_mut().for_each(|v| *v = relu(*v));
        self.cells[2].step_in_place(&a2, grid, &mut state.cells[2])?;
        state.recent.push(state.cells[2].hidden.clone());
        if state.recent.len() > 3 {
            state.recent.remove(0);
        }

        // causal head: taps dt = 0, 1, 2 see frames t-2, t-1, t
        let f3 = self.cells[2].filters();
        let n = grid.pixels();
        let tap = 9 * f3;
        let mut out = vec![self.head_bias.value.data()[0]; n];
        let mut cols = vec![T::zero(); n * tap];
        let have = state.recent.len();
        for (k, hidden) in state.recent.iter().enumerate() {
            let dt = 3 - have + k;
            im2col_3x3(hidden, grid, f3, &mut cols);
            let kernel = &self.head_kernel.value.data()[dt * tap..(dt + 1) * tap];
            T::gemm(n, tap, 1, T::one(), &cols, false, kernel, false, T::one(), &mut out);
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self, with_optimizer: bool) -> Checkpoint {
        let mut ck = Checkpoint::new();
        for p in self.params() {
            ck.put(&p.name, &p.value);
            if with_optimizer {
                ck.put(&format!("{}/adam_m", p.name), &p.first_moment);
                ck.put(&format!("{}/adam_v", p.name), &p.second_moment);
            }
        }
        for n in &self.norms {
            let name = n.gain.name.trim_end_matches("/gain");
            let c = n.channels();
            ck.put(&format!("{name}/running_mean"), &Tensor::from_vec(&[c], n.running_mean.clone()).unwrap());
            ck.put(&format!("{name}/running_var"), &Tensor::from_vec(&[c], n.running_var.clone()).unwrap());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        let cell = |name: &str| -> Result<ConvLstmCell<T>, NnError> {
            ConvLstmCell::from_parts(
                name,
                ck.tensor(&format!("{name}/input_kernel"))?,
                ck.tensor(&format!("{name}/hidden_kernel"))?,
                ck.tensor(&format!("{name}/bias"))?,
            )
        };
        let cells = [cell("lstm1")?, cell("lstm2")?, cell("lstm3")?];
        if cells[1].in_channels() != cells[0].filters() || cells[2].in_channels() != cells[1].filters() {
            return Err(NnError::Format("layer widths do not chain".into()));
        }
        let norm = |name: &str, c: usize| -> Result<BatchNorm<T>, NnError> {
            let mut n = BatchNorm::new(name, c);
            n.gain.value = ck.tensor(&format!("{name}/gain"))?;
            n.offset.value = ck.tensor(&format!("{name}/offset"))?;
            n.running_mean = ck.tensor::<T>(&format!("{name}/running_mean"))?.into_data();
            n.running_var = ck.tensor::<T>(&format!("{name}/running_var"))?.into_data();
            if n.gain.value.len() != c || n.running_mean.len() != c || n.running_var.len() != c {
                return Err(NnError::Format(format!("{name} width mismatch")));
            }
            Ok(n)
        };
        let norms = [norm("bn1", cells[0].filters())?, norm("bn2", cells[1].filters())?];
        let f3 = cells[2].filters();
        let head_kernel: Tensor<T> = ck.tensor("head/kernel")?;
        if head_kernel.shape() != [3, 3, 3, f3, 1] {
            return Err(NnError::Format(format!("head kernel {:?}", head_kernel.shape())));
        }
        let mut model = Self {
            cells,
            norms,
            head_kernel: Param::new("head/kernel", head_kernel),
            head_bias: Param::new("head/bias", ck.tensor("head/bias")?),
        };
        for p in model.params_mut() {
            if let (Ok(m), Ok(v)) = (ck.tensor(&format!("{}/adam_m", p.name)), ck.tensor(&format!("{}/adam_v", p.name))) {
                p.first_moment = m;
                p.second_moment = v;
            }
        }
        Ok(model)
    }
}

/// Recurrent state for step-wise evaluation.
#[derive(Debug, Clone)]
pub struct StepState<T> {
    grid: Grid,
    cells: [CellState<T>; 3],
    /// Up to the last three layer-3 hidden frames, oldest first.
    recent: Vec<Vec<T>>,
}

fn relu_backward<T: Real>(pre: &[T], grad: &mut [T]) {
    for (g, &z) in grad.iter_mut().zip(pre) {
        if z <= T::zero() {
            *g = T::zero();
        }
    }
}

/// `[B][T_src][frame]` -> `[T][B][frame]` keeping the first `t_len` frames.
fn to_time_major<T: Real>(data: &[T], b: usize, t_src: usize, frame: usize, t_len: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(t_len * b * frame);
    for t in 0..t_len {
        for s in 0..b {
            out.extend_from_slice(&data[(s * t_src + t) * frame..][..frame]);
        }
    }
    out
}

fn from_time_major<T: Real>(data: &[T], b: usize, t_len: usize, frame: usize) -> Vec<T> {
    let mut out = vec![T::zero(); data.len()];
    for t in 0..t_len {
        for s in 0..b {
            out[(s * t_len + t) * frame..][..frame].copy_from_slice(&data[(t * b + s) * frame..][..frame]);
        }
    }
    out
}
