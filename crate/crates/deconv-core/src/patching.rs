//! Patch extraction: turning a 4-D activation into the N×d matrices the
//! whitening module consumes.
//!
//! Rows of a patch matrix are ordered batch-major, then output row, then
//! output column; columns are channel-major, i.e. column `(c·kh + ki)·kw + kj`
//! holds kernel offset `(ki, kj)` of channel `c`. Channel-major columns make
//! a channel block a contiguous column range.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Knobs of the deconvolution operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeconvConfig {
    /// Channels whitened jointly per covariance group.
    pub block_size: usize,
    /// Keep every `sampling_stride`-th patch row when estimating covariance.
    pub sampling_stride: usize,
    /// Ridge coefficient relative to the mean eigenvalue of the covariance:
    /// the ridge added is `epsilon · trace(Cov)/d`.
    pub epsilon: f64,
    /// Newton–Schulz iterations per covariance block.
    pub newton_iterations: usize,
    /// Exponential-moving-average momentum for the eval-mode buffers.
    pub running_momentum: f64,
}

impl Default for DeconvConfig {
    fn default() -> Self {
        DeconvConfig {
            block_size: 64,
            sampling_stride: 3,
            epsilon: 1e-5,
            newton_iterations: 5,
            running_momentum: 0.1,
        }
    }
}

impl DeconvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 {
            return Err(Error::InvalidConfig("block_size must be >= 1".into()));
        }
        if self.sampling_stride == 0 {
            return Err(Error::InvalidConfig("sampling_stride must be >= 1".into()));
        }
        if self.newton_iterations == 0 {
            return Err(Error::InvalidConfig("newton_iterations must be >= 1".into()));
        }
        if self.epsilon < 0.0 {
            return Err(Error::InvalidConfig("epsilon must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.running_momentum) {
            return Err(Error::InvalidConfig("running_momentum must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Extraction geometry recorded alongside a patch matrix so it can be
/// reassembled or split further.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGeometry {
    pub batch: usize,
    /// Channels represented by the columns (zero-padded channels included).
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub conv_stride: usize,
    pub padding: usize,
    /// Which channel block this matrix is, if it was split.
    pub block_index: Option<usize>,
}

impl PatchGeometry {
    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.padding - self.kh) / self.conv_stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.padding - self.kw) / self.conv_stride + 1
    }

    /// Patch rows produced by a full extraction.
    pub fn rows(&self) -> usize {
        self.batch * self.out_h() * self.out_w()
    }

    /// Columns per patch row.
    pub fn cols(&self) -> usize {
        self.channels * self.kh * self.kw
    }
}

/// An N×d matrix of flattened receptive fields plus the geometry that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix<T> {
    pub data: Tensor<T>,
    pub geometry: PatchGeometry,
}

fn check_geometry(height: usize, width: usize, kh: usize, kw: usize, stride: usize, padding: usize) -> Result<()> {
    let bad = stride == 0
        || kh == 0
        || kw == 0
        || kh > height + 2 * padding
        || kw > width + 2 * padding
        || (height + 2 * padding - kh) % stride != 0
        || (width + 2 * padding - kw) % stride != 0;
    if bad {
        return Err(Error::Geometry {
            height,
            width,
            kh,
            kw,
            stride,
            padding,
        });
    }
    Ok(())
}

/// Unroll the receptive fields of `x` (shape B×C×H×W) into a patch matrix.
/// Positions outside the border read as zero.
pub fn im2col<T: Scalar>(
    x: &Tensor<T>,
    kh: usize,
    kw: usize,
    conv_stride: usize,
    padding: usize,
) -> Result<PatchMatrix<T>> {
    let (batch, channels, height, width) = x.dims4("im2col")?;
    check_geometry(height, width, kh, kw, conv_stride, padding)?;
    let geometry = PatchGeometry {
        batch,
        channels,
        height,
        width,
        kh,
        kw,
        conv_stride,
        padding,
        block_index: None,
    };
    let out_h = geometry.out_h();
    let out_w = geometry.out_w();
    let cols = geometry.cols();
    let rows_per_image = out_h * out_w;

    let mut data = vec![T::zero(); geometry.rows() * cols];
    data.par_chunks_mut(rows_per_image * cols)
        .zip(x.data().par_chunks(channels * height * width))
        .for_each(|(out_block, image)| {
            for oh in 0..out_h {
                for ow in 0..out_w {
                    let row = &mut out_block[(oh * out_w + ow) * cols..][..cols];
                    let mut col = 0;
                    for c in 0..channels {
                        let plane = &image[c * height * width..][..height * width];
                        for ki in 0..kh {
                            let ih = (oh * conv_stride + ki) as isize - padding as isize;
                            if ih < 0 || ih >= height as isize {
                                col += kw;
                                continue;
                            }
                            let line = &plane[ih as usize * width..][..width];
                            for kj in 0..kw {
                                let iw = (ow * conv_stride + kj) as isize - padding as isize;
                                if iw >= 0 && iw < width as isize {
                                    row[col] = line[iw as usize];
                                }
                                col += 1;
                            }
                        }
                    }
                }
            }
        });

    Ok(PatchMatrix {
        data: Tensor::new(vec![geometry.rows(), cols], data)?,
        geometry,
    })
}

/// Reassemble an image tensor from a full patch matrix, dividing each pixel
/// by the number of patches that cover it. Pixels no patch touches stay zero.
pub fn col2im<T: Scalar>(p: &PatchMatrix<T>) -> Result<Tensor<T>> {
    let mut out = col2im_sum(p)?;
    let g = &p.geometry;
    let counts = coverage_counts(g);
    let plane = g.height * g.width;
    for image in out.data_mut().chunks_exact_mut(g.channels * plane) {
        for ch in image.chunks_exact_mut(plane) {
            for (v, &cnt) in ch.iter_mut().zip(counts.iter()) {
                if cnt > 0 {
                    *v = *v / T::from_usize(cnt);
                }
            }
        }
    }
    Ok(out)
}

/// Scatter-add a patch matrix back onto the image grid (the adjoint of
/// [`im2col`], used for gradients).
pub fn col2im_sum<T: Scalar>(p: &PatchMatrix<T>) -> Result<Tensor<T>> {
    let g = &p.geometry;
    let (rows, cols) = p.data.dims2("col2im_sum")?;
    if rows != g.rows() || cols != g.cols() {
        return Err(Error::ShapeMismatch {
            op: "col2im_sum",
            left: vec![rows, cols],
            right: vec![g.rows(), g.cols()],
        });
    }
    let out_h = g.out_h();
    let out_w = g.out_w();
    let rows_per_image = out_h * out_w;
    let plane = g.height * g.width;

    let mut out = vec![T::zero(); g.batch * g.channels * plane];
    out.par_chunks_mut(g.channels * plane)
        .zip(p.data.data().par_chunks(rows_per_image * cols))
        .for_each(|(image, patch_block)| {
            for oh in 0..out_h {
                for ow in 0..out_w {
                    let row = &patch_block[(oh * out_w + ow) * cols..][..cols];
                    let mut col = 0;
                    for c in 0..g.channels {
                        let ch = &mut image[c * plane..][..plane];
                        for ki in 0..g.kh {
                            let ih = (oh * g.conv_stride + ki) as isize - g.padding as isize;
                            if ih < 0 || ih >= g.height as isize {
                                col += g.kw;
                                continue;
                            }
                            let line = &mut ch[ih as usize * g.width..][..g.width];
                            for kj in 0..g.kw {
                                let iw = (ow * g.conv_stride + kj) as isize - g.padding as isize;
                                if iw >= 0 && iw < g.width as isize {
                                    line[iw as usize] += row[col];
                                }
                                col += 1;
                            }
                        }
                    }
                }
            }
        });

    Tensor::new(vec![g.batch, g.channels, g.height, g.width], out)
}

/// How many patches cover each spatial position (same for every channel and
/// batch item).
fn coverage_counts(g: &PatchGeometry) -> Vec<usize> {
    let mut counts = vec![0usize; g.height * g.width];
    for oh in 0..g.out_h() {
        for ow in 0..g.out_w() {
            for ki in 0..g.kh {
                let ih = (oh * g.conv_stride + ki) as isize - g.padding as isize;
                if ih < 0 || ih >= g.height as isize {
                    continue;
                }
                for kj in 0..g.kw {
                    let iw = (ow * g.conv_stride + kj) as isize - g.padding as isize;
                    if iw >= 0 && iw < g.width as isize {
                        counts[ih as usize * g.width + iw as usize] += 1;
                    }
                }
            }
        }
    }
    counts
}

/// Keep rows 0, s, 2s, … of a patch matrix; the geometry is carried along
/// unchanged so callers can still see where the rows came from.
pub fn subsample_rows<T: Scalar>(p: &PatchMatrix<T>, sampling_stride: usize) -> Result<PatchMatrix<T>> {
    if sampling_stride == 0 {
        return Err(Error::InvalidConfig("sampling_stride must be >= 1".into()));
    }
    if sampling_stride == 1 {
        return Ok(p.clone());
    }
    let (rows, cols) = p.data.dims2("subsample_rows")?;
    let kept = rows.div_ceil(sampling_stride);
    let mut data = Vec::with_capacity(kept * cols);
    for r in (0..rows).step_by(sampling_stride) {
        data.extend_from_slice(p.data.row(r));
    }
    Ok(PatchMatrix {
        data: Tensor::new(vec![kept, cols], data)?,
        geometry: p.geometry,
    })
}

/// Split the columns into channel groups of `block_size` channels each,
/// zero-padding the final group. Block `i` holds channels
/// `[i·block_size, (i+1)·block_size)` with all kernel offsets.
pub fn split_channel_blocks<T: Scalar>(p: &PatchMatrix<T>, block_size: usize) -> Result<Vec<PatchMatrix<T>>> {
    if block_size == 0 {
        return Err(Error::InvalidConfig("block_size must be >= 1".into()));
    }
    let g = &p.geometry;
    let (rows, cols) = p.data.dims2("split_channel_blocks")?;
    let per_channel = g.kh * g.kw;
    debug_assert_eq!(cols, g.channels * per_channel);
    let block_count = g.channels.div_ceil(block_size);
    let block_cols = block_size * per_channel;

    let mut blocks = Vec::with_capacity(block_count);
    for b in 0..block_count {
        let src_lo = (b * block_cols).min(cols);
        let src_hi = cols.min((b + 1) * block_cols);
        let copied = src_hi - src_lo;
        let mut data = vec![T::zero(); rows * block_cols];
        for (dst, src) in data
            .chunks_exact_mut(block_cols)
            .zip(p.data.data().chunks_exact(cols))
        {
            dst[..copied].copy_from_slice(&src[src_lo..src_hi]);
        }
        blocks.push(PatchMatrix {
            data: Tensor::new(vec![rows, block_cols], data)?,
            geometry: PatchGeometry {
                channels: block_size,
                block_index: Some(b),
                ..*g
            },
        });
    }
    Ok(blocks)
}

/// Inverse of [`split_channel_blocks`]: concatenate blocks and drop the zero
/// padding, restoring a matrix over `original_channels` channels.
pub fn concat_channel_blocks<T: Scalar>(
    blocks: &[PatchMatrix<T>],
    original_channels: usize,
) -> Result<PatchMatrix<T>> {
    let first = blocks.first().ok_or_else(|| {
        Error::InvalidConfig("concat_channel_blocks needs at least one block".into())
    })?;
    let g = &first.geometry;
    let per_channel = g.kh * g.kw;
    let block_size = g.channels;
    let (rows, block_cols) = first.data.dims2("concat_channel_blocks")?;
    if blocks.len() * block_size < original_channels {
        return Err(Error::InvalidConfig(format!(
            "{} blocks of {} channels cannot cover {} channels",
            blocks.len(),
            block_size,
            original_channels
        )));
    }
    let cols = original_channels * per_channel;
    let mut data = vec![T::zero(); rows * cols];
    for (i, block) in blocks.iter().enumerate() {
        let (brows, bcols) = block.data.dims2("concat_channel_blocks")?;
        if brows != rows || bcols != block_cols || block.geometry.block_index != Some(i) {
            return Err(Error::InvalidConfig(format!(
                "block {i} does not match the split layout"
            )));
        }
        let dst_lo = i * block_cols;
        if dst_lo >= cols {
            continue;
        }
        let copied = block_cols.min(cols - dst_lo);
        for (dst, src) in data
            .chunks_exact_mut(cols)
            .zip(block.data.data().chunks_exact(block_cols))
        {
            dst[dst_lo..dst_lo + copied].copy_from_slice(&src[..copied]);
        }
    }
    Ok(PatchMatrix {
        data: Tensor::new(vec![rows, cols], data)?,
        geometry: PatchGeometry {
            channels: original_channels,
            block_index: None,
            ..*g
        },
    })
}
