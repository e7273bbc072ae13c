use rand::Rng;

use crate::nn::act::sigmoid;
use crate::nn::conv::{col2im_3x3_add, im2col_3x3, Grid};
use crate::nn::{NnError, Param, Real, Tensor};

/// Gate blocks inside the `4F` pre-activation columns.
const GATE_I: usize = 0;
const GATE_F: usize = 1;
const GATE_G: usize = 2;
const GATE_O: usize = 3;

/// One convolutional LSTM layer. Gate columns are ordered `(i, f, g, o)`.
#[derive(Debug, Clone)]
pub struct ConvLstmCell<T> {
    /// `[3, 3, cin, 4F]`
    pub input_kernel: Param<T>,
    /// `[3, 3, F, 4F]`
    pub hidden_kernel: Param<T>,
    /// `[4F]`
    pub bias: Param<T>,
    in_channels: usize,
    filters: usize,
}

/// Per-step activations of a whole sequence, kept for backpropagation.
/// All buffers are time-major with `grid.pixels()` rows per frame.
#[derive(Debug, Clone)]
pub struct SequenceCache<T> {
    pub t_len: usize,
    pub grid: Grid,
    /// Activated gates, `[T][N][4F]`.
    gates: Vec<T>,
    /// Cell states, `[T][N][F]`.
    cell: Vec<T>,
    /// Hidden states (the layer output), `[T][N][F]`.
    pub hidden: Vec<T>,
}

/// Hidden and cell state carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState<T> {
    pub hidden: Vec<T>,
    pub cell: Vec<T>,
}

impl<T: Real> CellState<T> {
    pub fn zeros(grid: Grid, filters: usize) -> Self {
        let n = grid.pixels() * filters;
        Self { hidden: vec![T::zero(); n], cell: vec![T::zero(); n] }
    }
}

fn glorot<T: Real, R: Rng>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| T::lit(rng.random_range(-limit..limit))).collect())
        .expect("shape product matches")
}

impl<T: Real> ConvLstmCell<T> {
    /// Glorot-uniform kernels, zero biases except the forget gate at 1.0.
    pub fn new<R: Rng>(name: &str, in_channels: usize, filters: usize, rng: &mut R) -> Self {
        let g = 4 * filters;
        let input_kernel = glorot(&[3, 3, in_channels, g], 9 * in_channels, 9 * g, rng);
        let hidden_kernel = glorot(&[3, 3, filters, g], 9 * filters, 9 * g, rng);
        let mut bias = Tensor::zeros(&[g]);
        bias.data_mut()[GATE_F * filters..(GATE_F + 1) * filters].fill(T::one());
        Self::from_parts(name, input_kernel, hidden_kernel, bias).expect("consistent shapes")
    }

    pub fn from_parts(
        name: &str,
        input_kernel: Tensor<T>,
        hidden_kernel: Tensor<T>,
        bias: Tensor<T>,
    ) -> Result<Self, NnError> {
        let [3, 3, cin, g] = *input_kernel.shape() else {
            return Err(NnError::Shape(format!("input kernel {:?}", input_kernel.shape())));
        };
        if g % 4 != 0 {
            return Err(NnError::Shape(format!("gate width {g} not divisible by 4")));
        }
        let filters = g / 4;
        if hidden_kernel.shape() != [3, 3, filters, g] || bias.shape() != [g] {
            return Err(NnError::Shape(format!(
                "hidden kernel {:?} / bias {:?} inconsistent with {filters} filters",
                hidden_kernel.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            input_kernel: Param::new(&format!("{name}/input_kernel"), input_kernel),
            hidden_kernel: Param::new(&format!("{name}/hidden_kernel"), hidden_kernel),
            bias: Param::new(&format!("{name}/bias"), bias),
            in_channels: cin,
            filters,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 3] {
        [&mut self.input_kernel, &mut self.hidden_kernel, &mut self.bias]
    }

    pub fn params(&self) -> [&Param<T>; 3] {
        [&self.input_kernel, &self.hidden_kernel, &self.bias]
    }

    pub fn cast<U: Real>(&self) -> ConvLstmCell<U> {
        ConvLstmCell {
            input_kernel: self.input_kernel.cast(),
            hidden_kernel: self.hidden_kernel.cast(),
            bias: self.bias.cast(),
            in_channels: self.in_channels,
            filters: self.filters,
        }
    }

    /// Adds `conv(h; W_h)` to `pre` (`N x 4F`).
    fn add_hidden_projection(&self, hidden: &[T], grid: Grid, pre: &mut [T], scratch: &mut Vec<T>) {
        let f = self.filters;
        scratch.resize(grid.pixels() * 9 * f, T::zero());
        im2col_3x3(hidden, grid, f, scratch);
        T::gemm(grid.pixels(), 9 * f, 4 * f, T::one(), scratch, false, self.hidden_kernel.value.data(), false, T::one(), pre);
    }

    /// Turns pre-activations into gates in place and advances the state.
    fn apply_gates(&self, pre: &mut [T], state: &mut CellState<T>) {
        let f = self.filters;
        for (n, row) in pre.chunks_exact_mut(4 * f).enumerate() {
            for j in 0..f {
                let i = sigmoid(row[GATE_I * f + j]);
                let fg = sigmoid(row[GATE_F * f + j]);
                let g = row[GATE_G * f + j].tanh();
                let o = sigmoid(row[GATE_O * f + j]);
                row[GATE_I * f + j] = i;
                row[GATE_F * f + j] = fg;
                row[GATE_G * f + j] = g;
                row[GATE_O * f + j] = o;
                let idx = n * f + j;
                let c = fg * state.cell[idx] + i * g;
                state.cell[idx] = c;
                state.hidden[idx] = o * c.tanh();
            }
        }
    }

    fn input_projection(&self, x: &[T], frames: usize, grid: Grid) -> Result<Vec<T>, NnError> {
        let cin = self.in_channels;
        let per_frame = grid.pixels() * cin;
        if x.len() != frames * per_frame {
            return Err(NnError::ChannelMismatch { expected: cin, got: x.len() / (frames * grid.pixels()).max(1) });
        }
        let rows = frames * grid.pixels();
        let g = 4 * self.filters;
        let mut cols = vec![T::zero(); rows * 9 * cin];
        let all = Grid::new(frames * grid.batch, grid.height, grid.width);
        im2col_3x3(x, all, cin, &mut cols);
        let mut pre = vec![T::zero(); rows * g];
        for row in pre.chunks_exact_mut(g) {
            row.copy_from_slice(self.bias.value.data());
        }
        T::gemm(rows, 9 * cin, g, T::one(), &cols, false, self.input_kernel.value.data(), false, T::one(), &mut pre);
        Ok(pre)
    }

    /// Advances `state` by one frame `x` (`grid.pixels() x cin`).
    pub fn step_in_place(&self, x: &[T], grid: Grid, state: &mut CellState<T>) -> Result<(), NnError> {
        let mut pre = self.input_projection(x, 1, grid)?;
        let mut scratch = Vec::new();
        self.add_hidden_projection(&state.hidden, grid, &mut pre, &mut scratch);
        self.apply_gates(&mut pre, state);
        Ok(())
    }

    /// One cell update on `[H,W,C]` or `[B,H,W,C]` tensors; returns `(h_t, c_t)`.
    pub fn step(&self, x: &Tensor<T>, h_prev: &Tensor<T>, c_prev: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>), NnError> {
        let (grid, cin) = match *x.shape() {
            [h, w, c] => (Grid::new(1, h, w), c),
            [b, h, w, c] => (Grid::new(b, h, w), c),
            _ => return Err(NnError::Shape(format!("input {:?}", x.shape()))),
        };
        if cin != self.in_channels {
            return Err(NnError::ChannelMismatch { expected: self.in_channels, got: cin });
        }
        let mut state_shape = x.shape().to_vec();
        *state_shape.last_mut().unwrap() = self.filters;
        if h_prev.shape() != state_shape.as_slice() || c_prev.shape() != state_shape.as_slice() {
            return Err(NnError::Shape(format!("state {:?}, expected {state_shape:?}", h_prev.shape())));
        }
        let mut state = CellState { hidden: h_prev.data().to_vec(), cell: c_prev.data().to_vec() };
        self.step_in_place(x.data(), grid, &mut state)?;
        Ok((
            Tensor::from_vec(&state_shape, state.hidden)?,
            Tensor::from_vec(&state_shape, state.cell)?,
        ))
    }

    /// Runs the whole time-major sequence `x` (`[T][N][cin]`) from zero state.
    pub fn forward_sequence(&self, x: &[T], t_len: usize, grid: Grid) -> Result<SequenceCache<T>, NnError> {
        let f = self.filters;
        let n = grid.pixels();
        let mut gates = self.input_projection(x, t_len, grid)?;
        let mut cell = vec![T::zero(); t_len * n * f];
        let mut hidden = vec![T::zero(); t_len * n * f];
        let mut state = CellState::zeros(grid, f);
        let mut scratch = Vec::new();
        for t in 0..t_len {
            let pre = &mut gates[t * n * 4 * f..(t + 1) * n * 4 * f];
            if t > 0 {
                self.add_hidden_projection(&state.hidden, grid, pre, &mut scratch);
            }
            self.apply_gates(pre, &mut state);
            cell[t * n * f..(t + 1) * n * f].copy_from_slice(&state.cell);
            hidden[t * n * f..(t + 1) * n * f].copy_from_slice(&state.hidden);
        }
        Ok(SequenceCache { t_len, grid, gates, cell, hidden })
    }

    /// Backpropagation through time. `grad_hidden` (`[T][N][F]`) is the loss
    /// gradient with respect to every emitted hidden state; parameter
    /// gradients are accumulated and the gradient with respect to `x` is
    /// returned.
    pub fn backward_sequence(&mut self, x: &[T], cache: &SequenceCache<T>, grad_hidden: &[T]) -> Vec<T> {
        let f = self.filters;
        let g4 = 4 * f;
        let cin = self.in_channels;
        let SequenceCache { t_len, grid, .. } = *cache;
        let n = grid.pixels();
        let frame = n * f;
        let mut dpre = vec![T::zero(); t_len * n * g4];
        let mut dh_rec = vec![T::zero(); frame];
        let mut dc_rec = vec![T::zero(); frame];
        let mut dcols = vec![T::zero(); n * 9 * f];
        let one = T::one();
        for t in (0..t_len).rev() {
            let gates = &cache.gates[t * n * g4..(t + 1) * n * g4];
            let cell = &cache.cell[t * frame..(t + 1) * frame];
            let dp = &mut dpre[t * n * g4..(t + 1) * n * g4];
            for p in 0..n {
                for j in 0..f {
                    let idx = p * f + j;
                    let row = p * g4;
                    let i = gates[row + GATE_I * f + j];
                    let fg = gates[row + GATE_F * f + j];
                    let g = gates[row + GATE_G * f + j];
                    let o = gates[row + GATE_O * f + j];
                    let c = cell[idx];
                    let c_prev = if t > 0 { cache.cell[(t - 1) * frame + idx] } else { T::zero() };
                    let tc = c.tanh();
                    let dh = grad_hidden[t * frame + idx] + dh_rec[idx];
                    let dc = dc_rec[idx] + dh * o * (one - tc * tc);
                    dp[row + GATE_I * f + j] = dc * g * i * (one - i);
                    dp[row + GATE_F * f + j] = dc * c_prev * fg * (one - fg);
                    dp[row + GATE_G * f + j] = dc * i * (one - g * g);
                    dp[row + GATE_O * f + j] = dh * tc * o * (one - o);
                    dc_rec[idx] = dc * fg;
                }
            }
            dh_rec.fill(T::zero());
            if t > 0 {
                T::gemm(n, g4, 9 * f, one, dp, false, self.hidden_kernel.value.data(), true, T::zero(), &mut dcols);
                col2im_3x3_add(&dcols, grid, f, &mut dh_rec);
            }
        }

        // hidden kernel: sum over t >= 1 of cols(h_{t-1})^T dpre_t, as one GEMM
        if t_len > 1 {
            let frames = t_len - 1;
            let shifted = Grid::new(frames * grid.batch, grid.height, grid.width);
            let mut cols = vec![T::zero(); frames * n * 9 * f];
            im2col_3x3(&cache.hidden[..frames * frame], shifted, f, &mut cols);
            T::gemm(9 * f, frames * n, g4, one, &cols, true, &dpre[n * g4..], false, one, self.hidden_kernel.grad.data_mut());
        }
        for row in dpre.chunks_exact(g4) {
            for (b, &d) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *b += d;
            }
        }
        let all = Grid::new(t_len * grid.batch, grid.height, grid.width);
        let rows = t_len * n;
        let mut cols = vec![T::zero(); rows * 9 * cin];
        im2col_3x3(x, all, cin, &mut cols);
        T::gemm(9 * cin, rows, g4, one, &cols, true, &dpre, false, one, self.input_kernel.grad.data_mut());
        T::gemm(rows, g4, 9 * cin, one, &dpre, false, self.input_kernel.value.data(), true, T::zero(), &mut cols);
        let mut dx = vec![T::zero(); x.len()];
        col2im_3x3_add(&cols, all, cin, &mut dx);
        dx
    }
}
