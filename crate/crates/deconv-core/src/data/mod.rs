//! Dataset ingestion, deterministic sampling, and synthetic test data.

mod cifar;
mod sampler;
mod synth;

pub use cifar::{
    load_cifar10, load_cifar100, parse_cifar10_records, parse_cifar100_records, verify_cifar10,
    verify_cifar100, VerifyReport, CIFAR100_TEST_FILE, CIFAR100_TRAIN_FILE, CIFAR10_TEST_FILE,
    CIFAR10_TRAIN_FILES,
};
pub use sampler::{batches, hflip_image, subset, BatchIter};
pub use synth::{correlated_images, synth_dataset, SynthKind, CORRELATED_CHANNEL_COV};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const IMAGE_CHANNELS: usize = 3;
pub const IMAGE_SIDE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// N images of shape 3×32×32 with integer labels.
///
/// Loaders produce pixel values scaled to [0, 1]; per-channel normalization
/// is applied explicitly afterwards with statistics computed from the
/// training split actually in use (see [`ChannelStats`]).
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub images: Tensor<T>,
    pub labels: Vec<u32>,
    pub class_count: usize,
    pub split: Split,
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[T] {
        let stride = IMAGE_CHANNELS * IMAGE_SIDE * IMAGE_SIDE;
        &self.images.data()[i * stride..(i + 1) * stride]
    }

    /// Per-class example counts.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0usize; self.class_count];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }

    fn from_parts(images: Vec<T>, labels: Vec<u32>, class_count: usize, split: Split) -> Result<Self> {
        let n = labels.len();
        for (i, &l) in labels.iter().enumerate() {
            if l as usize >= class_count {
                return Err(Error::CorruptRecord {
                    path: "<memory>".into(),
                    index: i,
                    detail: format!("label {l} out of range for {class_count} classes"),
                });
            }
        }
        Ok(Dataset {
            images: Tensor::new(vec![n, IMAGE_CHANNELS, IMAGE_SIDE, IMAGE_SIDE], images)?,
            labels,
            class_count,
            split,
        })
    }
}

/// Per-channel mean and standard deviation of a training split, recorded in
/// the run manifest of every experiment that used them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; IMAGE_CHANNELS],
    pub std: [f64; IMAGE_CHANNELS],
}

pub fn compute_channel_stats<T: Scalar>(ds: &Dataset<T>) -> ChannelStats {
    let plane = IMAGE_SIDE * IMAGE_SIDE;
    let stride = IMAGE_CHANNELS * plane;
    let n = ds.len() * plane;
    let mut mean = [0.0f64; IMAGE_CHANNELS];
    for img in ds.images.data().chunks_exact(stride) {
        for (c, m) in mean.iter_mut().enumerate() {
            *m += img[c * plane..(c + 1) * plane]
                .iter()
                .map(|v| v.as_f64())
                .sum::<f64>();
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = [0.0f64; IMAGE_CHANNELS];
    for img in ds.images.data().chunks_exact(stride) {
        for (c, v) in var.iter_mut().enumerate() {
            *v += img[c * plane..(c + 1) * plane]
                .iter()
                .map(|x| {
                    let d = x.as_f64() - mean[c];
                    d * d
                })
                .sum::<f64>();
        }
    }
    let mut std = [0.0f64; IMAGE_CHANNELS];
    for (s, v) in std.iter_mut().zip(var.iter()) {
        *s = (v / n as f64).sqrt().max(1e-8);
    }
    ChannelStats { mean, std }
}

/// `(x − mean)/std` per channel, in place.
pub fn normalize<T: Scalar>(ds: &mut Dataset<T>, stats: &ChannelStats) {
    let plane = IMAGE_SIDE * IMAGE_SIDE;
    let stride = IMAGE_CHANNELS * plane;
    let mean: Vec<T> = stats.mean.iter().map(|&m| T::from_f64(m)).collect();
    let inv_std: Vec<T> = stats.std.iter().map(|&s| T::from_f64(1.0 / s)).collect();
    for img in ds.images.data_mut().chunks_exact_mut(stride) {
        for c in 0..IMAGE_CHANNELS {
            for v in &mut img[c * plane..(c + 1) * plane] {
                *v = (*v - mean[c]) * inv_std[c];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn normalization_standardizes_channels() {
        let mut rng = Rng::new(90);
        let mut ds = synth_dataset::<f64>(SynthKind::TwoGaussians, 200, &mut rng).unwrap();
        let stats = compute_channel_stats(&ds);
        normalize(&mut ds, &stats);
        let after = compute_channel_stats(&ds);
        for c in 0..IMAGE_CHANNELS {
            assert!(after.mean[c].abs() < 1e-10);
            assert!((after.std[c] - 1.0).abs() < 1e-10);
        }
    }
}
