//! The deconvolution layer: per-block whitening of a patch matrix.

use crate::error::{Error, Result};
use crate::patching::{
    concat_channel_blocks, split_channel_blocks, subsample_rows, DeconvConfig, PatchMatrix,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::whitening::{covariance_with_relative_epsilon, inverse_sqrt_newton};

use super::Mode;

/// Running whitening state for one channel block.
#[derive(Debug, Clone)]
struct BlockState<T> {
    running_mean: Tensor<T>,
    running_matrix: Tensor<T>,
}

/// The affine whitening transform of one channel block: `(x − mean)·matrix`.
#[derive(Debug, Clone)]
pub struct BlockTransform<T> {
    pub mean: Tensor<T>,
    pub matrix: Tensor<T>,
}

/// Whitens the im2col patches of the convolution or fully-connected layer it
/// is attached to.
///
/// Training mode estimates the covariance of every channel block on a
/// subsampled set of patch rows, runs the Newton–Schulz inverse square root,
/// decorrelates the full rows, and folds the batch mean and whitening matrix
/// into exponential running averages. Eval mode applies the running buffers
/// and mutates nothing.
#[derive(Debug)]
pub struct Deconv<T> {
    pub config: DeconvConfig,
    /// Channels of the incoming activation (before zero padding to a block
    /// multiple).
    pub in_channels: usize,
    /// Kernel footprint of the following operation (1×1 for fully-connected).
    pub kh: usize,
    pub kw: usize,
    blocks: Vec<BlockState<T>>,
    steps_seen: u64,
    /// Sticky flag: some block's Newton iteration exceeded the residual
    /// threshold during training.
    pub convergence_warning: bool,
    cache: Option<Vec<Tensor<T>>>,
}

impl<T: Scalar> Deconv<T> {
    pub fn new(config: DeconvConfig, in_channels: usize, kh: usize, kw: usize) -> Result<Self> {
        config.validate()?;
        if in_channels == 0 || kh == 0 || kw == 0 {
            return Err(Error::InvalidConfig("deconv geometry must be positive".into()));
        }
        // A block never spans more channels than exist; this keeps the
        // covariance of thin layers small instead of padding 3 channels up to
        // a 64-channel block.
        let eff = config.block_size.min(in_channels);
        let block_count = in_channels.div_ceil(eff);
        let dim = eff * kh * kw;
        let blocks = (0..block_count)
            .map(|_| {
                Ok(BlockState {
                    running_mean: Tensor::zeros(vec![dim])?,
                    running_matrix: Tensor::identity(dim),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Deconv {
            config,
            in_channels,
            kh,
            kw,
            blocks,
            steps_seen: 0,
            convergence_warning: false,
            cache: None,
        })
    }

    pub fn effective_block_size(&self) -> usize {
        self.config.block_size.min(self.in_channels)
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn steps_seen(&self) -> u64 {
        self.steps_seen
    }

    /// Compute the per-block whitening transforms for a patch matrix without
    /// applying them. Training mode estimates them from the subsampled rows,
    /// updates the running buffers, and caches the matrices for backward;
    /// eval mode returns the running transforms and mutates nothing.
    pub fn transforms(&mut self, patches: &PatchMatrix<T>, mode: Mode) -> Result<Vec<BlockTransform<T>>> {
        let eff = self.effective_block_size();
        match mode {
            Mode::Train => {
                // Covariance needs at least two rows; for tiny batches the
                // subsampling stride would leave fewer, so fall back to the
                // full row set.
                let mut sampled = subsample_rows(patches, self.config.sampling_stride)?;
                if sampled.data.shape()[0] < 2 {
                    sampled = patches.clone();
                }
                let sampled_blocks = split_channel_blocks(&sampled, eff)?;
                if sampled_blocks.len() != self.blocks.len() {
                    return Err(Error::InvalidConfig(format!(
                        "deconv built for {} blocks, input splits into {}",
                        self.blocks.len(),
                        sampled_blocks.len()
                    )));
                }
                let momentum = T::from_f64(self.config.running_momentum);
                let keep = T::one() - momentum;
                let mut out = Vec::with_capacity(sampled_blocks.len());
                for (i, sub) in sampled_blocks.iter().enumerate() {
                    let stats =
                        covariance_with_relative_epsilon(&sub.data, T::from_f64(self.config.epsilon))?;
                    let dm = inverse_sqrt_newton(&stats, self.config.newton_iterations)?;
                    if !dm.converged {
                        self.convergence_warning = true;
                    }
                    let state = &mut self.blocks[i];
                    state.running_mean.scale_assign(keep);
                    state.running_mean.axpy_assign(momentum, &stats.mean)?;
                    state.running_matrix.scale_assign(keep);
                    state.running_matrix.axpy_assign(momentum, &dm.matrix)?;
                    out.push(BlockTransform { mean: stats.mean, matrix: dm.matrix });
                }
                self.steps_seen += 1;
                self.cache = Some(out.iter().map(|t| t.matrix.clone()).collect());
                Ok(out)
            }
            Mode::Eval => {
                if self.steps_seen == 0 {
                    return Err(Error::UninitializedStats {
                        layer: format!("deconv({}ch,{}x{})", self.in_channels, self.kh, self.kw),
                    });
                }
                Ok(self
                    .blocks
                    .iter()
                    .map(|s| BlockTransform {
                        mean: s.running_mean.clone(),
                        matrix: s.running_matrix.clone(),
                    })
                    .collect())
            }
        }
    }

    /// Whiten a patch matrix: split into channel blocks, apply each block's
    /// transform to the full (unsubsampled) rows, and reassemble. In training
    /// mode the per-block batch statistics also update the running buffers.
    pub fn forward(&mut self, patches: &PatchMatrix<T>, mode: Mode) -> Result<PatchMatrix<T>> {
        let transforms = self.transforms(patches, mode)?;
        let eff = self.effective_block_size();
        let full_blocks = split_channel_blocks(patches, eff)?;
        let mut outs = Vec::with_capacity(full_blocks.len());
        for (full, tf) in full_blocks.iter().zip(transforms.iter()) {
            let out = whiten_with(&full.data, &tf.mean, &tf.matrix)?;
            outs.push(PatchMatrix { data: out, geometry: full.geometry });
        }
        concat_channel_blocks(&outs, patches.geometry.channels)
    }

    /// Gradient with respect to the raw patches: the whitening matrix and
    /// mean are constants, so per block this is `g · Dᵀ`.
    pub fn backward(&mut self, grad: &PatchMatrix<T>) -> Result<PatchMatrix<T>> {
        let matrices = self.cache.take().ok_or(Error::NoForwardPass)?;
        let eff = self.effective_block_size();
        let grad_blocks = split_channel_blocks(grad, eff)?;
        let mut outs = Vec::with_capacity(grad_blocks.len());
        for (g, d) in grad_blocks.iter().zip(matrices.iter()) {
            let dt = d.transpose()?;
            outs.push(PatchMatrix {
                data: g.data.matmul(&dt)?,
                geometry: g.geometry,
            });
        }
        concat_channel_blocks(&outs, grad.geometry.channels)
    }

    pub fn visit_buffers(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, super::StateRef<'_, T>) -> Result<()>,
    ) -> Result<()> {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            f(format!("{prefix}.block{i}.running_mean"), super::StateRef::Buffer(&mut b.running_mean))?;
            f(format!("{prefix}.block{i}.running_matrix"), super::StateRef::Buffer(&mut b.running_matrix))?;
        }
        f(format!("{prefix}.steps_seen"), super::StateRef::Counter(&mut self.steps_seen))
    }
}

/// `(x − mean) · matrix` with the mean broadcast across rows. Shared by the
/// batch path and the running-buffer path so both apply the identical affine
/// form.
fn whiten_with<T: Scalar>(x: &Tensor<T>, mean: &Tensor<T>, matrix: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, d) = x.dims2("whiten_with")?;
    if mean.len() != d || matrix.shape() != [d, d] {
        return Err(Error::ShapeMismatch {
            op: "whiten_with",
            left: x.shape().to_vec(),
            right: matrix.shape().to_vec(),
        });
    }
    let mut centered = x.clone();
    let m = mean.data();
    for row in centered.data_mut().chunks_exact_mut(d) {
        for (v, &mu) in row.iter_mut().zip(m.iter()) {
            *v = *v - mu;
        }
    }
    centered.matmul(matrix)
}
