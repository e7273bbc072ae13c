use super::optim::Param;
use super::tensor::{Real, Tensor};
use super::NnError;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Normalize with batch statistics and update the running averages.
    Train,
    /// Normalize with the running averages; a fixed per-channel affine map.
    Infer,
}

/// Per-channel batch normalization over channel-last rows.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub gain: Param<T>,
    pub offset: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

/// What the backward pass needs from a train-mode forward.
#[derive(Debug, Clone)]
pub struct NormCache<T> {
    normalized: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gain: Param::new(&format!("{name}/gain"), Tensor::full(&[channels], T::one())),
            offset: Param::new(&format!("{name}/offset"), Tensor::zeros(&[channels])),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    /// Normalizes `x` (rows of `channels` values) in place.
    pub fn forward_rows(&mut self, x: &mut [T], mode: NormMode) -> Result<Option<NormCache<T>>, NnError> {
        let c = self.channels();
        if x.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        if x.len() % c != 0 {
            return Err(NnError::Shape(format!("{} values do not split into {c} channels", x.len())));
        }
        let gain = self.gain.value.data();
        let offset = self.offset.value.data();
        let eps = T::lit(BN_EPS);
        match mode {
            NormMode::Infer => {
                let scale: Vec<T> =
                    (0..c).map(|j| gain[j] / (self.running_var[j] + eps).sqrt()).collect();
                for row in x.chunks_exact_mut(c) {
                    for j in 0..c {
                        row[j] = (row[j] - self.running_mean[j]) * scale[j] + offset[j];
                    }
                }
                Ok(None)
            }
            NormMode::Train => {
                let n = T::lit((x.len() / c) as f64);
                let mut mean = vec![T::zero(); c];
                for row in x.chunks_exact(c) {
                    for j in 0..c {
                        mean[j] += row[j];
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![T::zero(); c];
                for row in x.chunks_exact(c) {
                    for j in 0..c {
                        let d = row[j] - mean[j];
                        var[j] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= n);
                let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                let mut normalized = vec![T::zero(); x.len()];
                for (row, nrow) in x.chunks_exact_mut(c).zip(normalized.chunks_exact_mut(c)) {
                    for j in 0..c {
                        let z = (row[j] - mean[j]) * inv_std[j];
                        nrow[j] = z;
                        row[j] = z * gain[j] + offset[j];
                    }
                }
                let m = T::lit(BN_MOMENTUM);
                for j in 0..c {
                    self.running_mean[j] = m * self.running_mean[j] + (T::one() - m) * mean[j];
                    self.running_var[j] = m * self.running_var[j] + (T::one() - m) * var[j];
                }
                Ok(Some(NormCache { normalized, inv_std }))
            }
        }
    }

    /// Tensor-level entry point; the last axis is the channel axis.
    pub fn forward(&mut self, x: &Tensor<T>, mode: NormMode) -> Result<(Tensor<T>, Option<NormCache<T>>), NnError> {
        if x.shape().last() != Some(&self.channels()) {
            return Err(NnError::ChannelMismatch { expected: self.channels(), got: *x.shape().last().unwrap_or(&0) });
        }
        let mut y = x.clone();
        let cache = self.forward_rows(y.data_mut(), mode)?;
        Ok((y, cache))
    }

    /// Accumulates gain/offset gradients and overwrites `grad` with the
    /// gradient with respect to the layer input.
    pub fn backward_rows(&mut self, cache: &NormCache<T>, grad: &mut [T]) {
        let c = self.channels();
        let n = T::lit((grad.len() / c) as f64);
        let gain = self.gain.value.data().to_vec();
        let mut sum_dy = vec![T::zero(); c];
        let mut sum_dy_z = vec![T::zero(); c];
        for (g, z) in grad.chunks_exact(c).zip(cache.normalized.chunks_exact(c)) {
            for j in 0..c {
                sum_dy[j] += g[j];
                sum_dy_z[j] += g[j] * z[j];
            }
        }
        for j in 0..c {
            self.offset.grad.data_mut()[j] += sum_dy[j];
            self.gain.grad.data_mut()[j] += sum_dy_z[j];
        }
        for (g, z) in grad.chunks_exact_mut(c).zip(cache.normalized.chunks_exact(c)) {
            for j in 0..c {
                let dz = g[j] * gain[j];
                let mean_dz = sum_dy[j] * gain[j] / n;
                let mean_dz_z = sum_dy_z[j] * gain[j] / n;
                g[j] = cache.inv_std[j] * (dz - mean_dz - z[j] * mean_dz_z);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn channel_stats(y: &[f64], c: usize) -> Vec<(f64, f64)> {
        (0..c)
            .map(|j| {
                let vals: Vec<f64> = y.chunks(c).map(|r| r[j]).collect();
                let n = vals.len() as f64;
                let m = vals.iter().sum::<f64>() / n;
                let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
                (m, v.sqrt())
            })
            .collect()
    }

    #[test]
    fn standardized_batch_is_nearly_unchanged() {
        // two rows per channel at +-1: mean 0, sd 1
        let x = Tensor::from_vec(&[2, 2], vec![1.0f64, -1.0, -1.0, 1.0]).unwrap();
        let mut bn = BatchNorm::new("bn", 2);
        let (y, _) = bn.forward(&x, NormMode::Train).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn constant_channel_maps_to_offset() {
        let x = Tensor::full(&[6, 1], 3.25f64);
        let mut bn = BatchNorm::new("bn", 1);
        bn.offset.value.data_mut()[0] = 0.4;
        let (y, _) = bn.forward(&x, NormMode::Train).unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn random_batch_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = 3;
        let data: Vec<f64> = (0..200 * c).map(|i| rng.random_range(-4.0..9.0) * (1 + i % c) as f64).collect();
        let x = Tensor::from_vec(&[200, c], data).unwrap();
        let mut bn = BatchNorm::new("bn", c);
        let (y, _) = bn.forward(&x, NormMode::Train).unwrap();
        for (m, sd) in channel_stats(y.data(), c) {
            assert!(m.abs() < 1e-6);
            assert!((sd - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let mut bn = BatchNorm::<f32>::new("bn", 2);
        assert!(matches!(bn.forward_rows(&mut [], NormMode::Train), Err(NnError::EmptyBatch)));
    }

    #[test]
    fn running_averages_and_infer_affinity() {
        let mut bn = BatchNorm::new("bn", 1);
        let x = Tensor::from_vec(&[4, 1], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        bn.forward(&x, NormMode::Train).unwrap();
        assert!((bn.running_mean[0] - 0.25).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.9 + 0.1 * 1.25)).abs() < 1e-12);
        let (y1, _) = bn.forward(&x, NormMode::Infer).unwrap();
        let (y2, _) = bn.forward(&x, NormMode::Infer).unwrap();
        assert_eq!(y1, y2);
        // affine: equal spacing in, equal spacing out
        let d: Vec<f64> = y1.data().windows(2).map(|w| w[1] - w[0]).collect();
        assert!(d.iter().all(|v| (v - d[0]).abs() < 1e-12));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c = 2;
        let x: Vec<f64> = (0..10 * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..10 * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut bn = BatchNorm::new("bn", c);
        bn.gain.value.data_mut().copy_from_slice(&[1.3, 0.7]);
        bn.offset.value.data_mut().copy_from_slice(&[0.1, -0.2]);
        let loss = |bn: &BatchNorm<f64>, x: &[f64]| -> f64 {
            let mut b = bn.clone();
            let mut y = x.to_vec();
            b.forward_rows(&mut y, NormMode::Train).unwrap();
            y.iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let mut y = x.clone();
        let mut trained = bn.clone();
        let cache = trained.forward_rows(&mut y, NormMode::Train).unwrap().unwrap();
        let mut g = w.clone();
        trained.backward_rows(&cache, &mut g);
        let h = 1e-5;
        for i in 0..x.len() {
            let mut p = x.clone();
            p[i] += h;
            let mut m = x.clone();
            m[i] -= h;
            let num = (loss(&bn, &p) - loss(&bn, &m)) / (2.0 * h);
            assert!((num - g[i]).abs() / (num.abs() + g[i].abs()).max(1e-8) < 1e-4);
        }
        for j in 0..c {
            let mut p = bn.clone();
            p.gain.value.data_mut()[j] += h;
            let mut m = bn.clone();
            m.gain.value.data_mut()[j] -= h;
            let num = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
            let a = trained.gain.grad.data()[j];
            assert!((num - a).abs() / (num.abs() + a.abs()).max(1e-8) < 1e-4);
        }
    }
}
