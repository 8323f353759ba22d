//! The two desk-scale architectures and their builder.

use crate::error::{Error, Result};
use crate::patching::DeconvConfig;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{
    AvgPool2d, BatchNorm, Conv2d, Deconv, Flatten, Layer, Linear, MaxPool2d, Network, Relu,
    ResidualBlock,
};

/// Normalization regime applied uniformly to a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Batch normalization after every convolution and no patch whitening.
    BatchNorm,
    /// Patch whitening before every convolution/fully-connected layer and no
    /// affine normalization layers.
    Deconv,
    /// Neither.
    None,
}

impl NormMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NormMode::BatchNorm => "batchnorm",
            NormMode::Deconv => "deconv",
            NormMode::None => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "batchnorm" => Ok(NormMode::BatchNorm),
            "deconv" => Ok(NormMode::Deconv),
            "none" => Ok(NormMode::None),
            other => Err(Error::InvalidConfig(format!("unknown norm mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    VggMini,
    ResNetMini,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::VggMini => "vgg-mini",
            Architecture::ResNetMini => "resnet-mini",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "vgg-mini" => Ok(Architecture::VggMini),
            "resnet-mini" => Ok(Architecture::ResNetMini),
            other => Err(Error::InvalidConfig(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Declarative model description. Input is fixed at 3×32×32.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub norm: NormMode,
    pub class_count: usize,
}

/// Builder state threading the rng, norm mode, and deconv knobs through the
/// layer constructors.
struct Builder<'a, T> {
    norm: NormMode,
    deconv: &'a DeconvConfig,
    rng: &'a mut Rng,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> Builder<'_, T> {
    /// Kaiming-scaled normal: std = sqrt(2 / fan_in), the ReLU gain.
    fn kaiming(&mut self, rows: usize, fan_in: usize) -> Result<Tensor<T>> {
        let std = (2.0 / fan_in as f64).sqrt();
        let mut w = Tensor::randn(vec![rows, fan_in], self.rng)?;
        w.scale_assign(T::from_f64(std));
        Ok(w)
    }

    fn conv(
        &mut self,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Layer<T>> {
        let fan_in = in_c * k * k;
        let weight = self.kaiming(out_c, fan_in)?;
        let bias = Tensor::zeros(vec![out_c])?;
        let deconv = match self.norm {
            NormMode::Deconv => Some(Deconv::new(*self.deconv, in_c, k, k)?),
            _ => None,
        };
        Ok(Layer::Conv(Conv2d::new(
            weight, bias, in_c, out_c, k, k, stride, padding, deconv,
        )?))
    }

    fn fc(&mut self, in_f: usize, out_f: usize) -> Result<Layer<T>> {
        let weight = self.kaiming(out_f, in_f)?;
        let bias = Tensor::zeros(vec![out_f])?;
        let deconv = match self.norm {
            NormMode::Deconv => Some(Deconv::new(*self.deconv, in_f, 1, 1)?),
            _ => None,
        };
        Ok(Layer::Fc(Linear::new(weight, bias, in_f, out_f, deconv)?))
    }

    /// conv → (bn) → relu
    fn conv_block(
        &mut self,
        layers: &mut Vec<Layer<T>>,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        padding: usize,
    ) -> Result<()> {
        layers.push(self.conv(in_c, out_c, k, stride, padding)?);
        if self.norm == NormMode::BatchNorm {
            layers.push(Layer::BatchNorm(BatchNorm::new(out_c)?));
        }
        layers.push(Layer::Relu(Relu::new()));
        Ok(())
    }

    /// Two-conv residual block; downsampling blocks use 2×2/s2 kernels so the
    /// output extent divides exactly, and a matching projection shortcut.
    fn residual(&mut self, in_c: usize, out_c: usize, downsample: bool) -> Result<Layer<T>> {
        let mut body = Vec::new();
        if downsample {
            body.push(self.conv(in_c, out_c, 2, 2, 0)?);
        } else {
            body.push(self.conv(in_c, out_c, 3, 1, 1)?);
        }
        if self.norm == NormMode::BatchNorm {
            body.push(Layer::BatchNorm(BatchNorm::new(out_c)?));
        }
        body.push(Layer::Relu(Relu::new()));
        body.push(self.conv(out_c, out_c, 3, 1, 1)?);
        if self.norm == NormMode::BatchNorm {
            body.push(Layer::BatchNorm(BatchNorm::new(out_c)?));
        }

        let mut shortcut = Vec::new();
        if downsample || in_c != out_c {
            let (k, s, p) = if downsample { (2, 2, 0) } else { (1, 1, 0) };
            shortcut.push(self.conv(in_c, out_c, k, s, p)?);
            if self.norm == NormMode::BatchNorm {
                shortcut.push(Layer::BatchNorm(BatchNorm::new(out_c)?));
            }
        }
        Ok(Layer::Residual(ResidualBlock::new(body, shortcut)))
    }
}

/// Instantiate a model with seeded Kaiming initialization.
pub fn build_model<T: Scalar>(
    spec: &ModelSpec,
    deconv: &DeconvConfig,
    rng: &mut Rng,
) -> Result<Network<T>> {
    if spec.class_count < 2 {
        return Err(Error::InvalidConfig("class_count must be >= 2".into()));
    }
    deconv.validate()?;
    let mut b = Builder::<T> {
        norm: spec.norm,
        deconv,
        rng,
        _marker: std::marker::PhantomData,
    };
    let mut layers = Vec::new();
    match spec.architecture {
        Architecture::VggMini => {
            b.conv_block(&mut layers, 3, 32, 3, 1, 1)?;
            b.conv_block(&mut layers, 32, 64, 3, 1, 1)?;
            layers.push(Layer::MaxPool(MaxPool2d::new(2, 2, 2)));
            b.conv_block(&mut layers, 64, 128, 3, 1, 1)?;
            b.conv_block(&mut layers, 128, 128, 3, 1, 1)?;
            layers.push(Layer::MaxPool(MaxPool2d::new(2, 2, 2)));
            layers.push(Layer::Flatten(Flatten::new()));
            layers.push(b.fc(128 * 8 * 8, spec.class_count)?);
        }
        Architecture::ResNetMini => {
            b.conv_block(&mut layers, 3, 32, 3, 1, 1)?;
            layers.push(b.residual(32, 32, false)?);
            layers.push(b.residual(32, 32, false)?);
            layers.push(b.residual(32, 64, true)?);
            layers.push(b.residual(64, 64, false)?);
            layers.push(Layer::AvgPool(AvgPool2d::global(16, 16)));
            layers.push(Layer::Flatten(Flatten::new()));
            layers.push(b.fc(64, spec.class_count)?);
        }
    }
    Ok(Network::new(layers))
}
