//! Deterministic subsetting, shuffling, and train-time augmentation.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{Dataset, IMAGE_CHANNELS, IMAGE_SIDE};

const PAD: usize = 4;

/// Stratified sample with exactly `per_class` examples of every class, in an
/// order shuffled by `rng`.
pub fn subset<T: Scalar>(ds: &Dataset<T>, per_class: usize, rng: &mut Rng) -> Result<Dataset<T>> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let mut chosen = Vec::with_capacity(per_class * ds.class_count);
    for (class, indices) in by_class.iter_mut().enumerate() {
        if indices.len() < per_class {
            return Err(Error::InvalidConfig(format!(
                "class {class} has {} examples, {per_class} requested",
                indices.len()
            )));
        }
        rng.shuffle(indices);
        chosen.extend_from_slice(&indices[..per_class]);
    }
    rng.shuffle(&mut chosen);

    let stride = IMAGE_CHANNELS * IMAGE_SIDE * IMAGE_SIDE;
    let mut images = Vec::with_capacity(chosen.len() * stride);
    let mut labels = Vec::with_capacity(chosen.len());
    for &i in &chosen {
        images.extend_from_slice(ds.image(i));
        labels.push(ds.labels[i]);
    }
    Ok(Dataset {
        images: Tensor::new(vec![chosen.len(), IMAGE_CHANNELS, IMAGE_SIDE, IMAGE_SIDE], images)?,
        labels,
        class_count: ds.class_count,
        split: ds.split,
    })
}

/// One reshuffled pass over the dataset in batches; the final short batch is
/// kept. With `augment` each image gets a pad-4 random crop and a coin-flip
/// horizontal mirror (draw order per image: crop dy, crop dx, flip).
pub fn batches<'a, T: Scalar>(
    ds: &'a Dataset<T>,
    batch_size: usize,
    rng: &mut Rng,
    augment: bool,
) -> Result<BatchIter<'a, T>> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    rng.shuffle(&mut order);
    Ok(BatchIter {
        ds,
        order,
        pos: 0,
        batch_size,
        augment,
        rng: rng.split(),
    })
}

pub struct BatchIter<'a, T> {
    ds: &'a Dataset<T>,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    augment: bool,
    rng: Rng,
}

impl<T: Scalar> Iterator for BatchIter<'_, T> {
    type Item = (Tensor<T>, Vec<u32>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = self.order.len().min(self.pos + self.batch_size);
        let indices = &self.order[self.pos..end];
        self.pos = end;

        let stride = IMAGE_CHANNELS * IMAGE_SIDE * IMAGE_SIDE;
        let mut images = Vec::with_capacity(indices.len() * stride);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let src = self.ds.image(i);
            if self.augment {
                let dy = self.rng.next_below(2 * PAD + 1);
                let dx = self.rng.next_below(2 * PAD + 1);
                let flip = self.rng.next_bool();
                let start = images.len();
                images.resize(start + stride, T::zero());
                crop_from_padded(src, &mut images[start..], dy, dx);
                if flip {
                    hflip_image(&mut images[start..]);
                }
            } else {
                images.extend_from_slice(src);
            }
            labels.push(self.ds.labels[i]);
        }
        let batch = Tensor::new(
            vec![indices.len(), IMAGE_CHANNELS, IMAGE_SIDE, IMAGE_SIDE],
            images,
        )
        .expect("batch shape");
        Some((batch, labels))
    }
}

/// Copy the 32×32 window at offset (dy, dx) out of the image zero-padded by
/// 4 on every side. (dy, dx) = (4, 4) reproduces the original image.
fn crop_from_padded<T: Scalar>(src: &[T], dst: &mut [T], dy: usize, dx: usize) {
    let side = IMAGE_SIDE;
    for c in 0..IMAGE_CHANNELS {
        for y in 0..side {
            let sy = (y + dy) as isize - PAD as isize;
            if sy < 0 || sy >= side as isize {
                continue; // rows in the padding stay zero
            }
            for x in 0..side {
                let sx = (x + dx) as isize - PAD as isize;
                if sx < 0 || sx >= side as isize {
                    continue;
                }
                dst[(c * side + y) * side + x] = src[(c * side + sy as usize) * side + sx as usize];
            }
        }
    }
}

/// Mirror one 3×32×32 image about its vertical axis, in place.
pub fn hflip_image<T: Scalar>(img: &mut [T]) {
    let side = IMAGE_SIDE;
    for c in 0..IMAGE_CHANNELS {
        for y in 0..side {
            let row = &mut img[(c * side + y) * side..(c * side + y + 1) * side];
            row.reverse();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthKind};

    fn tiny_dataset(n: usize) -> Dataset<f64> {
        let mut rng = Rng::new(5);
        let mut ds = synth_dataset::<f64>(SynthKind::TwoGaussians, n, &mut rng).unwrap();
        // Deterministic labels for histogram checks.
        for (i, l) in ds.labels.iter_mut().enumerate() {
            *l = (i % 2) as u32;
        }
        ds
    }

    #[test]
    fn batch_sizes_keep_the_short_tail() {
        let ds = tiny_dataset(10);
        let mut rng = Rng::new(1);
        let sizes: Vec<usize> = batches(&ds, 3, &mut rng, false)
            .unwrap()
            .map(|(t, _)| t.shape()[0])
            .collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
    }

    #[test]
    fn unaugmented_stream_is_bit_identical_for_a_seed() {
        let ds = tiny_dataset(16);
        let collect = |seed: u64| -> Vec<(Tensor<f64>, Vec<u32>)> {
            let mut rng = Rng::new(seed);
            batches(&ds, 5, &mut rng, false).unwrap().collect()
        };
        let a = collect(7);
        let b = collect(7);
        assert_eq!(a.len(), b.len());
        for ((ta, la), (tb, lb)) in a.iter().zip(b.iter()) {
            assert_eq!(ta, tb);
            assert_eq!(la, lb);
        }
        let c = collect(8);
        assert!(a.iter().zip(c.iter()).any(|((ta, _), (tc, _))| ta != tc));
    }

    #[test]
    fn augmented_stream_is_deterministic_too() {
        let ds = tiny_dataset(12);
        let collect = |_| {
            let mut rng = Rng::new(9);
            batches(&ds, 4, &mut rng, true)
                .unwrap()
                .map(|(t, _)| t)
                .collect::<Vec<_>>()
        };
        assert_eq!(collect(()), collect(()));
    }

    #[test]
    fn hflip_mirrors_documented_coordinates() {
        // Asymmetric fixture: pixel value encodes (c, y, x).
        let mut img = vec![0.0f64; IMAGE_CHANNELS * IMAGE_SIDE * IMAGE_SIDE];
        for c in 0..IMAGE_CHANNELS {
            for y in 0..IMAGE_SIDE {
                for x in 0..IMAGE_SIDE {
                    img[(c * IMAGE_SIDE + y) * IMAGE_SIDE + x] = (c * 10000 + y * 100 + x) as f64;
                }
            }
        }
        hflip_image(&mut img);
        // (c=1, y=2, x=0) now holds the value that was at x=31.
        assert_eq!(img[(IMAGE_SIDE + 2) * IMAGE_SIDE], (10000 + 200 + 31) as f64);
        assert_eq!(img[(IMAGE_SIDE + 2) * IMAGE_SIDE + 31], (10000 + 200) as f64);
    }

    #[test]
    fn centered_crop_is_the_identity() {
        let ds = tiny_dataset(1);
        let src = ds.image(0);
        let mut dst = vec![0.0f64; src.len()];
        crop_from_padded(src, &mut dst, PAD, PAD);
        assert_eq!(src, &dst[..]);
    }

    #[test]
    fn subset_is_stratified_and_deterministic() {
        let ds = tiny_dataset(40);
        let s1 = subset(&ds, 5, &mut Rng::new(3)).unwrap();
        assert_eq!(s1.len(), 10);
        assert_eq!(s1.histogram(), vec![5, 5]);
        let s2 = subset(&ds, 5, &mut Rng::new(3)).unwrap();
        assert_eq!(s1.images, s2.images);
        assert_eq!(s1.labels, s2.labels);
        assert!(subset(&ds, 25, &mut Rng::new(3)).is_err());
    }

    #[test]
    fn full_size_subset_is_a_permutation() {
        let ds = tiny_dataset(20);
        let s = subset(&ds, 10, &mut Rng::new(4)).unwrap();
        assert_eq!(s.len(), 20);
        assert_eq!(s.histogram(), ds.histogram());
        // Same multiset of images: compare sorted per-image checksums.
        let sum = |d: &Dataset<f64>| {
            let mut sums: Vec<f64> = (0..d.len()).map(|i| d.image(i).iter().sum()).collect();
            sums.sort_by(f64::total_cmp);
            sums
        };
        assert_eq!(sum(&ds), sum(&s));
    }
}
