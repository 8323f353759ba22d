//! Batch normalization with running statistics.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{Mode, Param, StateRef, Value};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel standardization by batch mean/variance (biased, divided by the
/// element count) with learnable scale and shift.
///
/// Rank-4 inputs normalize per channel over batch and space; rank-2 inputs
/// normalize per feature over the batch. Running statistics update as
/// `running = (1−m)·running + m·batch` with m = 0.1 and serve eval mode.
#[derive(Debug)]
pub struct BatchNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub epsilon: f64,
    pub momentum: f64,
    channels: usize,
    steps_seen: u64,
    cache: Option<BnCache<T>>,
}

#[derive(Debug)]
struct BnCache<T> {
    x_hat: Tensor<T>,
    inv_std: Vec<T>,
    was_image: bool,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: Param::new(Tensor::filled(vec![channels], T::one())?),
            beta: Param::new(Tensor::zeros(vec![channels])?),
            running_mean: Tensor::zeros(vec![channels])?,
            running_var: Tensor::filled(vec![channels], T::one())?,
            epsilon: BN_EPSILON,
            momentum: BN_MOMENTUM,
            channels,
            steps_seen: 0,
            cache: None,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn steps_seen(&self) -> u64 {
        self.steps_seen
    }

    /// Iterate the (start, len, stride-1 contiguous runs) of one channel.
    /// For images a channel is B runs of H·W; for matrices it is B strided
    /// single elements, handled by the callers directly.
    pub fn forward(&mut self, v: Value<T>, mode: Mode) -> Result<Value<T>> {
        match v {
            Value::Image(t) => Ok(Value::Image(self.forward_tensor(t, mode, true)?)),
            Value::Matrix(t) => Ok(Value::Matrix(self.forward_tensor(t, mode, false)?)),
        }
    }

    fn forward_tensor(&mut self, x: Tensor<T>, mode: Mode, image: bool) -> Result<Tensor<T>> {
        let c = self.channels;
        if image {
            let (_, xc, _, _) = x.dims4("batchnorm")?;
            if xc != c {
                return Err(Error::ShapeMismatch {
                    op: "batchnorm",
                    left: x.shape().to_vec(),
                    right: vec![c],
                });
            }
        } else {
            let (_, xf) = x.dims2("batchnorm")?;
            if xf != c {
                return Err(Error::ShapeMismatch {
                    op: "batchnorm",
                    left: x.shape().to_vec(),
                    right: vec![c],
                });
            }
        }

        match mode {
            Mode::Train => {
                let (mean, var) = channel_moments(&x, c, image)?;
                let eps = T::from_f64(self.epsilon);
                let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                let mut x_hat = x;
                normalize_channels(&mut x_hat, &mean, &inv_std, c, image);
                let mut out = x_hat.clone();
                affine_channels(&mut out, self.gamma.value.data(), self.beta.value.data(), c, image);

                let m = T::from_f64(self.momentum);
                let keep = T::one() - m;
                for (r, &b) in self.running_mean.data_mut().iter_mut().zip(mean.iter()) {
                    *r = keep * *r + m * b;
                }
                for (r, &b) in self.running_var.data_mut().iter_mut().zip(var.iter()) {
                    *r = keep * *r + m * b;
                }
                self.steps_seen += 1;
                self.cache = Some(BnCache { x_hat, inv_std, was_image: image });
                Ok(out)
            }
            Mode::Eval => {
                if self.steps_seen == 0 {
                    return Err(Error::UninitializedStats {
                        layer: format!("batchnorm({c})"),
                    });
                }
                let eps = T::from_f64(self.epsilon);
                let inv_std: Vec<T> = self
                    .running_var
                    .data()
                    .iter()
                    .map(|&v| T::one() / (v + eps).sqrt())
                    .collect();
                let mean = self.running_mean.data().to_vec();
                let mut out = x;
                normalize_channels(&mut out, &mean, &inv_std, c, image);
                affine_channels(&mut out, self.gamma.value.data(), self.beta.value.data(), c, image);
                Ok(out)
            }
        }
    }

    pub fn backward(&mut self, grad: Value<T>) -> Result<Value<T>> {
        let cache = self.cache.take().ok_or(Error::NoForwardPass)?;
        let (g, image) = match grad {
            Value::Image(t) => (t, true),
            Value::Matrix(t) => (t, false),
        };
        if image != cache.was_image {
            return Err(Error::RankMismatch {
                op: "batchnorm backward",
                expected: if cache.was_image { 4 } else { 2 },
                shape: g.shape().to_vec(),
            });
        }
        let c = self.channels;
        let count = g.len() / c; // elements per channel
        let m = T::from_usize(count);

        // Channel-wise sums of dy and dy·x̂.
        let mut sum_dy = vec![T::zero(); c];
        let mut sum_dy_xhat = vec![T::zero(); c];
        for_each_channel(&g, c, image, |ch, idx, v| {
            sum_dy[ch] += v;
            sum_dy_xhat[ch] += v * cache.x_hat.data()[idx];
        });

        for (ch, ((&sdy, &sdyx), gamma)) in sum_dy
            .iter()
            .zip(sum_dy_xhat.iter())
            .zip(self.gamma.value.data().iter())
            .enumerate()
        {
            self.beta.grad.data_mut()[ch] = sdy;
            self.gamma.grad.data_mut()[ch] = sdyx;
            let _ = gamma;
        }

        let mut gx = g;
        {
            let gamma = self.gamma.value.data().to_vec();
            let x_hat = cache.x_hat.data();
            let inv_std = &cache.inv_std;
            let data = gx.data_mut();
            // dx = γ·istd/M · (M·dy − Σdy − x̂·Σ(dy·x̂))
            if image {
                let shape = cache.x_hat.shape();
                let (b, _, h, w) = (shape[0], shape[1], shape[2], shape[3]);
                let plane = h * w;
                for bi in 0..b {
                    for ch in 0..c {
                        let base = (bi * c + ch) * plane;
                        let scale = gamma[ch] * inv_std[ch] / m;
                        for i in base..base + plane {
                            data[i] = scale * (m * data[i] - sum_dy[ch] - x_hat[i] * sum_dy_xhat[ch]);
                        }
                    }
                }
            } else {
                for (i, v) in data.iter_mut().enumerate() {
                    let ch = i % c;
                    let scale = gamma[ch] * inv_std[ch] / m;
                    *v = scale * (m * *v - sum_dy[ch] - x_hat[i] * sum_dy_xhat[ch]);
                }
            }
        }
        Ok(if image { Value::Image(gx) } else { Value::Matrix(gx) })
    }

    pub fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &mut Param<T>) -> Result<()>,
    ) -> Result<()> {
        f(&format!("{prefix}.gamma"), &mut self.gamma)?;
        f(&format!("{prefix}.beta"), &mut self.beta)
    }

    pub fn visit_state(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, StateRef<'_, T>) -> Result<()>,
    ) -> Result<()> {
        f(format!("{prefix}.gamma"), StateRef::Param(&mut self.gamma.value))?;
        f(format!("{prefix}.beta"), StateRef::Param(&mut self.beta.value))?;
        f(format!("{prefix}.running_mean"), StateRef::Buffer(&mut self.running_mean))?;
        f(format!("{prefix}.running_var"), StateRef::Buffer(&mut self.running_var))?;
        f(format!("{prefix}.steps_seen"), StateRef::Counter(&mut self.steps_seen))
    }
}

fn for_each_channel<T: Scalar>(t: &Tensor<T>, c: usize, image: bool, mut f: impl FnMut(usize, usize, T)) {
    if image {
        let shape = t.shape();
        let (b, _, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let plane = h * w;
        for bi in 0..b {
            for ch in 0..c {
                let base = (bi * c + ch) * plane;
                for i in base..base + plane {
                    f(ch, i, t.data()[i]);
                }
            }
        }
    } else {
        for (i, &v) in t.data().iter().enumerate() {
            f(i % c, i, v);
        }
    }
}

/// Biased per-channel mean and variance.
fn channel_moments<T: Scalar>(x: &Tensor<T>, c: usize, image: bool) -> Result<(Vec<T>, Vec<T>)> {
    let count = x.len() / c;
    let m = T::from_usize(count);
    let mut mean = vec![T::zero(); c];
    for_each_channel(x, c, image, |ch, _, v| mean[ch] += v);
    for v in &mut mean {
        *v = *v / m;
    }
    let mut var = vec![T::zero(); c];
    for_each_channel(x, c, image, |ch, _, v| {
        let d = v - mean[ch];
        var[ch] += d * d;
    });
    for v in &mut var {
        *v = *v / m;
    }
    Ok((mean, var))
}

fn normalize_channels<T: Scalar>(x: &mut Tensor<T>, mean: &[T], inv_std: &[T], c: usize, image: bool) {
    if image {
        let shape = x.shape().to_vec();
        let (b, _, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let plane = h * w;
        let data = x.data_mut();
        for bi in 0..b {
            for ch in 0..c {
                let base = (bi * c + ch) * plane;
                for v in &mut data[base..base + plane] {
                    *v = (*v - mean[ch]) * inv_std[ch];
                }
            }
        }
    } else {
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            let ch = i % c;
            *v = (*v - mean[ch]) * inv_std[ch];
        }
    }
}

fn affine_channels<T: Scalar>(x: &mut Tensor<T>, gamma: &[T], beta: &[T], c: usize, image: bool) {
    if image {
        let shape = x.shape().to_vec();
        let (b, _, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let plane = h * w;
        let data = x.data_mut();
        for bi in 0..b {
            for ch in 0..c {
                let base = (bi * c + ch) * plane;
                for v in &mut data[base..base + plane] {
                    *v = *v * gamma[ch] + beta[ch];
                }
            }
        }
    } else {
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            let ch = i % c;
            *v = *v * gamma[ch] + beta[ch];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn closed_form_three_values() {
        // Channel [1,2,3]: biased variance 2/3, so outputs ±sqrt(1.5) and 0.
        let mut bn = BatchNorm::<f64>::new(1).unwrap();
        bn.epsilon = 0.0;
        let x = Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let y = bn.forward(Value::Matrix(x), Mode::Train).unwrap();
        let want = 1.5f64.sqrt(); // ≈ 1.2247
        let got = y.tensor().data();
        assert!((got[0] + want).abs() < 1e-12);
        assert!(got[1].abs() < 1e-12);
        assert!((got[2] - want).abs() < 1e-12);
    }

    #[test]
    fn constant_input_maps_to_zero_without_nan() {
        let mut bn = BatchNorm::<f64>::new(2).unwrap();
        let x = Tensor::filled(vec![4, 2, 3, 3], 5.0).unwrap();
        let y = bn.forward(Value::Image(x), Mode::Train).unwrap();
        for &v in y.tensor().data() {
            assert!(v.is_finite());
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn output_moments_are_standardized() {
        let mut bn = BatchNorm::<f64>::new(3).unwrap();
        bn.epsilon = 1e-12;
        let mut rng = Rng::new(60);
        let mut x = Tensor::<f64>::randn(vec![16, 3, 8, 8], &mut rng).unwrap();
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            *v = *v * 3.0 + (i % 3) as f64; // non-unit scale, non-zero mean
        }
        let y = bn.forward(Value::Image(x), Mode::Train).unwrap();
        let t = y.tensor();
        let (mean, var) = channel_moments(t, 3, true).unwrap();
        for ch in 0..3 {
            assert!(mean[ch].abs() < 1e-6, "channel {ch} mean {}", mean[ch]);
            assert!((var[ch] - 1.0).abs() < 1e-6, "channel {ch} var {}", var[ch]);
        }
    }

    #[test]
    fn eval_before_any_training_step_errors() {
        let mut bn = BatchNorm::<f64>::new(2).unwrap();
        let x = Tensor::zeros(vec![3, 2]).unwrap();
        assert!(matches!(
            bn.forward(Value::Matrix(x), Mode::Eval),
            Err(Error::UninitializedStats { .. })
        ));
    }

    #[test]
    fn eval_uses_running_statistics() {
        let mut bn = BatchNorm::<f64>::new(1).unwrap();
        let mut rng = Rng::new(61);
        for _ in 0..200 {
            let mut x = Tensor::<f64>::randn(vec![64, 1], &mut rng).unwrap();
            for v in x.data_mut() {
                *v = *v * 2.0 + 3.0;
            }
            bn.forward(Value::Matrix(x), Mode::Train).unwrap();
        }
        // Running stats should be close to (3, 4).
        assert!((bn.running_mean.data()[0] - 3.0).abs() < 0.3);
        assert!((bn.running_var.data()[0] - 4.0).abs() < 0.8);
        let x = Tensor::new(vec![2, 1], vec![3.0, 5.0]).unwrap();
        let y = bn.forward(Value::Matrix(x), Mode::Eval).unwrap();
        // (3-μ)/σ ≈ 0, (5-μ)/σ ≈ 1
        assert!(y.tensor().data()[0].abs() < 0.2);
        assert!((y.tensor().data()[1] - 1.0).abs() < 0.25);
    }
}
