//! "Same" 3x3 (and 3x3x3) convolutions with zero padding and unit stride,
//! lowered to GEMM through an im2col buffer.
//!
//! Activations are channel-last. Spatial batches are `[batch][row][col][ch]`;
//! sequences are time-major, `[time][batch][row][col][ch]`. Kernels are
//! `[dr][dc][cin][cout]` (2D) and `[dt][dr][dc][cin][cout]` (3D), so a kernel
//! viewed as a `(taps * cin) x cout` matrix multiplies the im2col rows directly.

use super::tensor::{Real, Tensor};
use super::NnError;

pub const KERNEL: usize = 3;
const TAPS_2D: usize = KERNEL * KERNEL;
const TAPS_3D: usize = KERNEL * KERNEL * KERNEL;

/// Spatial extents shared by every frame of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
}

impl Grid {
    pub fn new(batch: usize, height: usize, width: usize) -> Self {
        Self { batch, height, width }
    }

    /// Number of pixel rows in an im2col matrix (one per output location).
    pub fn pixels(&self) -> usize {
        self.batch * self.height * self.width
    }
}

/// How the time axis of a 3D convolution is padded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimePadding {
    /// Output frame `t` sees input frames `t-1, t, t+1`.
    Same,
    /// Output frame `t` sees input frames `t-2, t-1, t`; no look-ahead.
    Causal,
}

impl TimePadding {
    #[inline]
    fn offset(self, dt: usize) -> isize {
        match self {
            TimePadding::Same => dt as isize - 1,
            TimePadding::Causal => dt as isize - 2,
        }
    }
}

/// Fills `cols` (`grid.pixels() x 9c`) from an NHWC batch.
pub fn im2col_3x3<T: Real>(x: &[T], grid: Grid, c: usize, cols: &mut [T]) {
    let Grid { batch, height: h, width: w } = grid;
    let row_len = TAPS_2D * c;
    debug_assert_eq!(x.len(), grid.pixels() * c);
    debug_assert_eq!(cols.len(), grid.pixels() * row_len);
    for b in 0..batch {
        for r in 0..h {
            for col in 0..w {
                let row = ((b * h + r) * w + col) * row_len;
                for dr in 0..KERNEL {
                    let rr = r as isize + dr as isize - 1;
                    for dc in 0..KERNEL {
                        let cc = col as isize + dc as isize - 1;
                        let dst = &mut cols[row + (dr * KERNEL + dc) * c..][..c];
                        if rr < 0 || rr >= h as isize || cc < 0 || cc >= w as isize {
                            dst.fill(T::zero());
                        } else {
                            let src = ((b * h + rr as usize) * w + cc as usize) * c;
                            dst.copy_from_slice(&x[src..src + c]);
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col_3x3`]: scatters-adds `cols` back into `dx`.
pub fn col2im_3x3_add<T: Real>(cols: &[T], grid: Grid, c: usize, dx: &mut [T]) {
    let Grid { batch, height: h, width: w } = grid;
    let row_len = TAPS_2D * c;
    for b in 0..batch {
        for r in 0..h {
            for col in 0..w {
                let row = ((b * h + r) * w + col) * row_len;
                for dr in 0..KERNEL {
                    let rr = r as isize + dr as isize - 1;
                    if rr < 0 || rr >= h as isize {
                        continue;
                    }
                    for dc in 0..KERNEL {
                        let cc = col as isize + dc as isize - 1;
                        if cc < 0 || cc >= w as isize {
                            continue;
                        }
                        let src = &cols[row + (dr * KERNEL + dc) * c..][..c];
                        let dst = ((b * h + rr as usize) * w + cc as usize) * c;
                        for (d, &s) in dx[dst..dst + c].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

/// Fills `cols` (`t_len * grid.pixels() x 27c`) from a time-major sequence.
pub fn im2col_3x3x3<T: Real>(x: &[T], t_len: usize, grid: Grid, c: usize, pad: TimePadding, cols: &mut [T]) {
    let frame = grid.pixels() * c;
    let row_len = TAPS_3D * c;
    let rows_per_frame = grid.pixels();
    debug_assert_eq!(x.len(), t_len * frame);
    let mut plane = vec![T::zero(); rows_per_frame * TAPS_2D * c];
    let zero_plane = vec![T::zero(); frame];
    for t in 0..t_len {
        for dt in 0..KERNEL {
            let src_t = t as isize + pad.offset(dt);
            let src = if src_t < 0 || src_t >= t_len as isize {
                &zero_plane[..]
            } else {
                &x[src_t as usize * frame..][..frame]
            };
            im2col_3x3(src, grid, c, &mut plane);
            for p in 0..rows_per_frame {
                let dst = (t * rows_per_frame + p) * row_len + dt * TAPS_2D * c;
                cols[dst..dst + TAPS_2D * c].copy_from_slice(&plane[p * TAPS_2D * c..][..TAPS_2D * c]);
            }
        }
    }
}

/// Adjoint of [`im2col_3x3x3`].
pub fn col2im_3x3x3_add<T: Real>(cols: &[T], t_len: usize, grid: Grid, c: usize, pad: TimePadding, dx: &mut [T]) {
    let frame = grid.pixels() * c;
    let row_len = TAPS_3D * c;
    let rows_per_frame = grid.pixels();
    let mut plane = vec![T::zero(); rows_per_frame * TAPS_2D * c];
    for t in 0..t_len {
        for dt in 0..KERNEL {
            let src_t = t as isize + pad.offset(dt);
            if src_t < 0 || src_t >= t_len as isize {
                continue;
            }
            for p in 0..rows_per_frame {
                let src = (t * rows_per_frame + p) * row_len + dt * TAPS_2D * c;
                plane[p * TAPS_2D * c..][..TAPS_2D * c].copy_from_slice(&cols[src..src + TAPS_2D * c]);
            }
            col2im_3x3_add(&plane, grid, c, &mut dx[src_t as usize * frame..][..frame]);
        }
    }
}

/// `out = cols * kernel + bias`, with `cols` being `rows x k` and `kernel`
/// `k x cout`.
pub fn affine_rows<T: Real>(cols: &[T], rows: usize, kernel: &[T], cout: usize, bias: Option<&[T]>, out: &mut [T]) {
    let k = kernel.len() / cout;
    match bias {
        Some(bias) => {
            for row in out.chunks_exact_mut(cout).take(rows) {
                row.copy_from_slice(bias);
            }
            T::gemm(rows, k, cout, T::one(), cols, false, kernel, false, T::one(), out);
        }
        None => T::gemm(rows, k, cout, T::one(), cols, false, kernel, false, T::zero(), out),
    }
}

fn spatial_dims(shape: &[usize]) -> Result<(Grid, usize), NnError> {
    match *shape {
        [h, w, c] => Ok((Grid::new(1, h, w), c)),
        [b, h, w, c] => Ok((Grid::new(b, h, w), c)),
        _ => Err(NnError::Shape(format!("expected [H,W,C] or [B,H,W,C], got {shape:?}"))),
    }
}

fn check_kernel(kernel: &[usize], lead: usize, cin: usize) -> Result<usize, NnError> {
    if kernel.len() != lead + 2 || kernel[..lead].iter().any(|&k| k != KERNEL) {
        return Err(NnError::Shape(format!("kernel must be 3-wide on every spatial axis, got {kernel:?}")));
    }
    if kernel[lead] != cin {
        return Err(NnError::ChannelMismatch { expected: kernel[lead], got: cin });
    }
    Ok(kernel[lead + 1])
}

fn out_shape(shape: &[usize], cout: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    *s.last_mut().unwrap() = cout;
    s
}

/// Same-size 3x3 convolution of an `[H,W,Cin]` or `[B,H,W,Cin]` input.
pub fn conv2d<T: Real>(input: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (grid, cin) = spatial_dims(input.shape())?;
    let cout = check_kernel(kernel.shape(), 2, cin)?;
    if bias.len() != cout {
        return Err(NnError::Shape(format!("bias has {} entries for {cout} outputs", bias.len())));
    }
    let mut cols = vec![T::zero(); grid.pixels() * TAPS_2D * cin];
    im2col_3x3(input.data(), grid, cin, &mut cols);
    let mut out = Tensor::zeros(&out_shape(input.shape(), cout));
    affine_rows(&cols, grid.pixels(), kernel.data(), cout, Some(bias.data()), out.data_mut());
    Ok(out)
}

/// Gradients of a convolution with respect to its input, kernel and bias.
#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>, NnError> {
    let (grid, cin) = spatial_dims(input.shape())?;
    let cout = check_kernel(kernel.shape(), 2, cin)?;
    if grad_out.shape() != out_shape(input.shape(), cout).as_slice() {
        return Err(NnError::Shape(format!("grad_out shape {:?}", grad_out.shape())));
    }
    let rows = grid.pixels();
    let k = TAPS_2D * cin;
    let mut cols = vec![T::zero(); rows * k];
    im2col_3x3(input.data(), grid, cin, &mut cols);
    let mut gk = Tensor::zeros(kernel.shape());
    T::gemm(k, rows, cout, T::one(), &cols, true, grad_out.data(), false, T::zero(), gk.data_mut());
    let mut gb = Tensor::zeros(&[cout]);
    for row in grad_out.data().chunks_exact(cout) {
        for (b, &g) in gb.data_mut().iter_mut().zip(row) {
            *b += g;
        }
    }
    T::gemm(rows, cout, k, T::one(), grad_out.data(), false, kernel.data(), true, T::zero(), &mut cols);
    let mut gi = Tensor::zeros(input.shape());
    col2im_3x3_add(&cols, grid, cin, gi.data_mut());
    Ok(ConvGrads { input: gi, kernel: gk, bias: gb })
}

/// Same-size 3x3x3 convolution of a `[T,H,W,Cin]` sequence.
pub fn conv3d<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    pad: TimePadding,
) -> Result<Tensor<T>, NnError> {
    let [t_len, h, w, cin] = *input.shape() else {
        return Err(NnError::Shape(format!("expected [T,H,W,C], got {:?}", input.shape())));
    };
    let cout = check_kernel(kernel.shape(), 3, cin)?;
    if bias.len() != cout {
        return Err(NnError::Shape(format!("bias has {} entries for {cout} outputs", bias.len())));
    }
    let grid = Grid::new(1, h, w);
    let rows = t_len * grid.pixels();
    let mut cols = vec![T::zero(); rows * TAPS_3D * cin];
    im2col_3x3x3(input.data(), t_len, grid, cin, pad, &mut cols);
    let mut out = Tensor::zeros(&[t_len, h, w, cout]);
    affine_rows(&cols, rows, kernel.data(), cout, Some(bias.data()), out.data_mut());
    Ok(out)
}

pub fn conv3d_backward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    pad: TimePadding,
) -> Result<ConvGrads<T>, NnError> {
    let [t_len, h, w, cin] = *input.shape() else {
        return Err(NnError::Shape(format!("expected [T,H,W,C], got {:?}", input.shape())));
    };
    let cout = check_kernel(kernel.shape(), 3, cin)?;
    let grid = Grid::new(1, h, w);
    let rows = t_len * grid.pixels();
    let k = TAPS_3D * cin;
    let mut cols = vec![T::zero(); rows * k];
    im2col_3x3x3(input.data(), t_len, grid, cin, pad, &mut cols);
    let mut gk = Tensor::zeros(kernel.shape());
    T::gemm(k, rows, cout, T::one(), &cols, true, grad_out.data(), false, T::zero(), gk.data_mut());
    let mut gb = Tensor::zeros(&[cout]);
    for row in grad_out.data().chunks_exact(cout) {
        for (b, &g) in gb.data_mut().iter_mut().zip(row) {
            *b += g;
        }
    }
    T::gemm(rows, cout, k, T::one(), grad_out.data(), false, kernel.data(), true, T::zero(), &mut cols);
    let mut gi = Tensor::zeros(input.shape());
    col2im_3x3x3_add(&cols, t_len, grid, cin, pad, gi.data_mut());
    Ok(ConvGrads { input: gi, kernel: gk, bias: gb })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    // Direct six-loop summation.
    fn conv2d_loops(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
        let [h, w, cin] = *x.shape() else { panic!() };
        let cout = k.shape()[3];
        let mut out = vec![0.0; h * w * cout];
        for r in 0..h {
            for c in 0..w {
                for o in 0..cout {
                    let mut acc = b.data()[o];
                    for dr in 0..3 {
                        for dc in 0..3 {
                            for i in 0..cin {
                                let rr = r as isize + dr as isize - 1;
                                let cc = c as isize + dc as isize - 1;
                                if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                                    continue;
                                }
                                let xv = x.data()[(rr as usize * w + cc as usize) * cin + i];
                                acc += xv * k.data()[((dr * 3 + dc) * cin + i) * cout + o];
                            }
                        }
                    }
                    out[(r * w + c) * cout + o] = acc;
                }
            }
        }
        out
    }

    // Direct eight-loop summation.
    fn conv3d_loops(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>, pad: TimePadding) -> Vec<f64> {
        let [tl, h, w, cin] = *x.shape() else { panic!() };
        let cout = k.shape()[4];
        let shift = if pad == TimePadding::Same { 1 } else { 2 };
        let mut out = vec![0.0; tl * h * w * cout];
        for t in 0..tl {
            for r in 0..h {
                for c in 0..w {
                    for o in 0..cout {
                        let mut acc = b.data()[o];
                        for dt in 0..3 {
                            for dr in 0..3 {
                                for dc in 0..3 {
                                    for i in 0..cin {
                                        let tt = t as isize + dt as isize - shift;
                                        let rr = r as isize + dr as isize - 1;
                                        let cc = c as isize + dc as isize - 1;
                                        if tt < 0
                                            || rr < 0
                                            || cc < 0
                                            || tt >= tl as isize
                                            || rr >= h as isize
                                            || cc >= w as isize
                                        {
                                            continue;
                                        }
                                        let xv = x.data()
                                            [((tt as usize * h + rr as usize) * w + cc as usize) * cin + i];
                                        acc += xv * k.data()[(((dt * 3 + dr) * 3 + dc) * cin + i) * cout + o];
                                    }
                                }
                            }
                        }
                        out[((t * h + r) * w + c) * cout + o] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[4, 5, 1], &mut rng);
        let mut k = Tensor::zeros(&[3, 3, 1, 1]);
        k.data_mut()[4] = 1.0;
        let y = conv2d(&x, &k, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn ones_kernel_counts_padding() {
        let v = 0.7f64;
        let x = Tensor::full(&[5, 5, 1], v);
        let k = Tensor::full(&[3, 3, 1, 1], 1.0);
        let y = conv2d(&x, &k, &Tensor::zeros(&[1])).unwrap();
        assert!((y.data()[2 * 5 + 2] - 9.0 * v).abs() < 1e-12);
        assert!((y.data()[0] - 4.0 * v).abs() < 1e-12);
        assert!((y.data()[2] - 6.0 * v).abs() < 1e-12);
    }

    #[test]
    fn conv2d_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&[5, 5, 2], &mut rng);
        let k = random(&[3, 3, 2, 3], &mut rng);
        let b = random(&[3], &mut rng);
        let y = conv2d(&x, &k, &b).unwrap();
        for (a, e) in y.data().iter().zip(conv2d_loops(&x, &k, &b)) {
            assert!((a - e).abs() < 1e-6);
        }
    }

    #[test]
    fn conv2d_rejects_channel_mismatch() {
        let x = Tensor::<f32>::zeros(&[4, 4, 2]);
        let k = Tensor::zeros(&[3, 3, 3, 1]);
        let err = conv2d(&x, &k, &Tensor::zeros(&[1])).unwrap_err();
        assert!(matches!(err, NnError::ChannelMismatch { expected: 3, got: 2 }));
    }

    #[test]
    fn conv3d_identity_and_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[4, 3, 3, 2], &mut rng);
        // centre tap of each input channel summed into the single output
        let mut k = Tensor::zeros(&[3, 3, 3, 2, 1]);
        k.data_mut()[13 * 2] = 1.0;
        k.data_mut()[13 * 2 + 1] = 1.0;
        let y = conv3d(&x, &k, &Tensor::zeros(&[1]), TimePadding::Same).unwrap();
        for (o, pair) in y.data().iter().zip(x.data().chunks(2)) {
            assert!((o - (pair[0] + pair[1])).abs() < 1e-12);
        }

        let v = 0.3f64;
        let x = Tensor::full(&[3, 3, 3, 2], v);
        let k = Tensor::full(&[3, 3, 3, 2, 1], 1.0);
        let y = conv3d(&x, &k, &Tensor::zeros(&[1]), TimePadding::Same).unwrap();
        let centre = (3 + 1) * 3 + 1;
        assert!((y.data()[centre] - 27.0 * v * 2.0).abs() < 1e-12);
    }

    #[test]
    fn conv3d_matches_loop_oracle_both_paddings() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&[4, 5, 5, 2], &mut rng);
        let k = random(&[3, 3, 3, 2, 1], &mut rng);
        let b = random(&[1], &mut rng);
        for pad in [TimePadding::Same, TimePadding::Causal] {
            let y = conv3d(&x, &k, &b, pad).unwrap();
            for (a, e) in y.data().iter().zip(conv3d_loops(&x, &k, &b, pad)) {
                assert!((a - e).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn causal_padding_ignores_future_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&[5, 3, 3, 1], &mut rng);
        let k = random(&[3, 3, 3, 1, 1], &mut rng);
        let b = Tensor::zeros(&[1]);
        let y = conv3d(&x, &k, &b, TimePadding::Causal).unwrap();
        let mut x2 = x.clone();
        for v in &mut x2.data_mut()[4 * 9..] {
            *v += 10.0;
        }
        let y2 = conv3d(&x2, &k, &b, TimePadding::Causal).unwrap();
        assert_eq!(&y.data()[..4 * 9], &y2.data()[..4 * 9]);
    }

    fn fd_check(f: impl Fn(&Tensor<f64>) -> f64, x: &Tensor<f64>, analytic: &Tensor<f64>) {
        let h = 1e-5;
        for i in 0..x.len() {
            let mut p = x.clone();
            p.data_mut()[i] += h;
            let mut m = x.clone();
            m.data_mut()[i] -= h;
            let num = (f(&p) - f(&m)) / (2.0 * h);
            let a = analytic.data()[i];
            let rel = (a - num).abs() / (a.abs() + num.abs()).max(1e-8);
            assert!(rel < 1e-4, "index {i}: analytic {a} numeric {num}");
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random(&[2, 4, 3, 2], &mut rng);
        let k = random(&[3, 3, 2, 3], &mut rng);
        let b = random(&[3], &mut rng);
        let weights = random(&[2, 4, 3, 3], &mut rng);
        let loss = |x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
            let y = conv2d(x, k, b).unwrap();
            y.data().iter().zip(weights.data()).map(|(a, w)| a * w).sum()
        };
        let g = conv2d_backward(&x, &k, &weights).unwrap();
        fd_check(|x| loss(x, &k, &b), &x, &g.input);
        fd_check(|k| loss(&x, k, &b), &k, &g.kernel);
        fd_check(|b| loss(&x, &k, b), &b, &g.bias);

        let x = random(&[3, 3, 4, 2], &mut rng);
        let k = random(&[3, 3, 3, 2, 1], &mut rng);
        let b = random(&[1], &mut rng);
        let weights = random(&[3, 3, 4, 1], &mut rng);
        for pad in [TimePadding::Same, TimePadding::Causal] {
            let loss = |x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
                let y = conv3d(x, k, b, pad).unwrap();
                y.data().iter().zip(weights.data()).map(|(a, w)| a * w).sum()
            };
            let g = conv3d_backward(&x, &k, &weights, pad).unwrap();
            fd_check(|x| loss(x, &k, &b), &x, &g.input);
            fd_check(|k| loss(&x, k, &b), &k, &g.kernel);
            fd_check(|b| loss(&x, &k, b), &b, &g.bias);
        }
    }

    proptest::proptest! {
        #[test]
        fn conv2d_is_linear_in_input(seed in 0u64..500, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(&[4, 4, 2], &mut rng);
            let y = random(&[4, 4, 2], &mut rng);
            let k = random(&[3, 3, 2, 2], &mut rng);
            let zero = Tensor::zeros(&[2]);
            let mix = Tensor::from_vec(&[4, 4, 2],
                x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect()).unwrap();
            let lhs = conv2d(&mix, &k, &zero).unwrap();
            let fx = conv2d(&x, &k, &zero).unwrap();
            let fy = conv2d(&y, &k, &zero).unwrap();
            for i in 0..lhs.len() {
                let rhs = a * fx.data()[i] + b * fy.data()[i];
                proptest::prop_assert!((lhs.data()[i] - rhs).abs() < 1e-10);
            }
        }

        #[test]
        fn conv3d_is_linear_in_input(seed in 0u64..200, a in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(&[3, 3, 3, 2], &mut rng);
            let y = random(&[3, 3, 3, 2], &mut rng);
            let k = random(&[3, 3, 3, 2, 1], &mut rng);
            let zero = Tensor::zeros(&[1]);
            let mix = Tensor::from_vec(&[3, 3, 3, 2],
                x.data().iter().zip(y.data()).map(|(p, q)| a * p + q).collect()).unwrap();
            let lhs = conv3d(&mix, &k, &zero, TimePadding::Same).unwrap();
            let fx = conv3d(&x, &k, &zero, TimePadding::Same).unwrap();
            let fy = conv3d(&y, &k, &zero, TimePadding::Same).unwrap();
            for i in 0..lhs.len() {
                proptest::prop_assert!((lhs.data()[i] - (a * fx.data()[i] + fy.data()[i])).abs() < 1e-10);
            }
        }
    }
}
