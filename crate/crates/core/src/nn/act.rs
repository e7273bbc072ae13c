use super::tensor::{Real, Tensor};

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    // split on sign so exp never overflows
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn relu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

pub fn relu_tensor<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(relu)
}

pub fn sigmoid_tensor<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid)
}

pub fn tanh_tensor<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.tanh())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_points() {
        assert_eq!(relu(-1.0f32), 0.0);
        assert_eq!(relu(2.5f32), 2.5);
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert_eq!(0.0f64.tanh(), 0.0);
        assert!(sigmoid(-800.0f64).is_finite());
        assert!((sigmoid(800.0f64) - 1.0).abs() < 1e-15);
        let t = Tensor::from_vec(&[3], vec![-1.0f32, 0.0, 1.0]).unwrap();
        assert_eq!(relu_tensor(&t).data(), &[0.0, 0.0, 1.0]);
        assert_eq!(sigmoid_tensor(&t).data()[1], 0.5);
        assert_eq!(tanh_tensor(&t).data()[1], 0.0);
    }
}
