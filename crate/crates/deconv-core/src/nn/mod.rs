//! Layers, loss, backpropagation, and SGD for the two desk-scale
//! architectures.
//!
//! A network is an ordered list of layers; values flowing between layers are
//! either rank-4 images or rank-2 feature matrices. Training-mode forward
//! passes record what backward needs; eval-mode passes touch no state except
//! reads of the running buffers.
//!
//! Deconvolution is attached to the convolution or fully-connected layer it
//! precedes: the layer extracts its im2col patches, the attached [`Deconv`]
//! whitens them per channel block, and the matmul consumes the whitened patch
//! matrix directly. The whitening matrix and mean are constants with respect
//! to differentiation; gradients flow only through the affine application.

mod batchnorm;
mod checkpoint;
mod deconv;
mod layers;
mod loss;
mod model;
mod sgd;

pub use batchnorm::BatchNorm;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use deconv::Deconv;
pub use layers::{AvgPool2d, Conv2d, Flatten, Linear, MaxPool2d, Relu, ResidualBlock};
pub use loss::{accuracy_percent, softmax_xent};
pub use model::{build_model, Architecture, ModelSpec, NormMode};
pub use sgd::{LrSchedule, Sgd, TrainConfig};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Value passed between layers.
#[derive(Debug, Clone)]
pub enum Value<T> {
    /// B×C×H×W activation.
    Image(Tensor<T>),
    /// B×F feature matrix.
    Matrix(Tensor<T>),
}

impl<T: Scalar> Value<T> {
    pub fn tensor(&self) -> &Tensor<T> {
        match self {
            Value::Image(t) | Value::Matrix(t) => t,
        }
    }

    pub fn into_tensor(self) -> Tensor<T> {
        match self {
            Value::Image(t) | Value::Matrix(t) => t,
        }
    }

    fn expect_image(self, op: &'static str) -> Result<Tensor<T>> {
        match self {
            Value::Image(t) => Ok(t),
            Value::Matrix(t) => Err(Error::RankMismatch {
                op,
                expected: 4,
                shape: t.shape().to_vec(),
            }),
        }
    }

    fn expect_matrix(self, op: &'static str) -> Result<Tensor<T>> {
        match self {
            Value::Matrix(t) => Ok(t),
            Value::Image(t) => Err(Error::RankMismatch {
                op,
                expected: 2,
                shape: t.shape().to_vec(),
            }),
        }
    }
}

/// A learnable tensor and its gradient slot.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec()).expect("param shape");
        Param { value, grad }
    }
}

/// Mutable view of one piece of persistent layer state.
pub enum StateRef<'a, T> {
    Param(&'a mut Tensor<T>),
    Buffer(&'a mut Tensor<T>),
    Counter(&'a mut u64),
}

#[derive(Debug)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    Fc(Linear<T>),
    Relu(Relu),
    MaxPool(MaxPool2d),
    AvgPool(AvgPool2d),
    BatchNorm(BatchNorm<T>),
    Flatten(Flatten),
    Residual(ResidualBlock<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn forward(&mut self, input: Value<T>, mode: Mode) -> Result<Value<T>> {
        match self {
            Layer::Conv(l) => Ok(Value::Image(l.forward(input.expect_image("conv")?, mode)?)),
            Layer::Fc(l) => Ok(Value::Matrix(l.forward(input.expect_matrix("fc")?, mode)?)),
            Layer::Relu(l) => l.forward(input, mode),
            Layer::MaxPool(l) => Ok(Value::Image(l.forward(input.expect_image("maxpool")?, mode)?)),
            Layer::AvgPool(l) => Ok(Value::Image(l.forward(input.expect_image("avgpool")?, mode)?)),
            Layer::BatchNorm(l) => l.forward(input, mode),
            Layer::Flatten(l) => Ok(Value::Matrix(l.forward(input.expect_image("flatten")?, mode)?)),
            Layer::Residual(l) => Ok(Value::Image(l.forward(input.expect_image("residual")?, mode)?)),
        }
    }

    pub fn backward(&mut self, grad: Value<T>) -> Result<Value<T>> {
        match self {
            Layer::Conv(l) => Ok(Value::Image(l.backward(grad.expect_image("conv backward")?)?)),
            Layer::Fc(l) => Ok(Value::Matrix(l.backward(grad.expect_matrix("fc backward")?)?)),
            Layer::Relu(l) => l.backward(grad),
            Layer::MaxPool(l) => Ok(Value::Image(l.backward(grad.expect_image("maxpool backward")?)?)),
            Layer::AvgPool(l) => Ok(Value::Image(l.backward(grad.expect_image("avgpool backward")?)?)),
            Layer::BatchNorm(l) => l.backward(grad),
            Layer::Flatten(l) => Ok(Value::Image(l.backward(grad.expect_matrix("flatten backward")?)?)),
            Layer::Residual(l) => Ok(Value::Image(l.backward(grad.expect_image("residual backward")?)?)),
        }
    }

    /// Short structural description, e.g. `deconv+conv3x3(3->32)/s1`.
    pub fn describe(&self) -> String {
        match self {
            Layer::Conv(l) => l.describe(),
            Layer::Fc(l) => l.describe(),
            Layer::Relu(_) => "relu".into(),
            Layer::MaxPool(l) => format!("maxpool{}x{}/s{}", l.kh, l.kw, l.stride),
            Layer::AvgPool(l) => format!("avgpool{}x{}/s{}", l.kh, l.kw, l.stride),
            Layer::BatchNorm(l) => format!("batchnorm({})", l.channels()),
            Layer::Flatten(_) => "flatten".into(),
            Layer::Residual(l) => l.describe(),
        }
    }

    pub fn visit_state(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, StateRef<'_, T>) -> Result<()>,
    ) -> Result<()> {
        match self {
            Layer::Conv(l) => l.visit_state(prefix, f),
            Layer::Fc(l) => l.visit_state(prefix, f),
            Layer::BatchNorm(l) => l.visit_state(prefix, f),
            Layer::Residual(l) => l.visit_state(prefix, f),
            _ => Ok(()),
        }
    }

    /// Visit every learnable parameter together with its gradient.
    pub fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &mut Param<T>) -> Result<()>,
    ) -> Result<()> {
        match self {
            Layer::Conv(l) => l.visit_params(prefix, f),
            Layer::Fc(l) => l.visit_params(prefix, f),
            Layer::BatchNorm(l) => l.visit_params(prefix, f),
            Layer::Residual(l) => l.visit_params(prefix, f),
            _ => Ok(()),
        }
    }

    /// True when an attached deconvolution failed to converge during a
    /// training step.
    pub fn convergence_warning(&self) -> bool {
        match self {
            Layer::Conv(l) => l.deconv.as_ref().is_some_and(|d| d.convergence_warning),
            Layer::Fc(l) => l.deconv.as_ref().is_some_and(|d| d.convergence_warning),
            Layer::Residual(l) => l.convergence_warning(),
            _ => false,
        }
    }
}

/// An ordered stack of layers producing logits.
#[derive(Debug)]
pub struct Network<T> {
    pub layers: Vec<Layer<T>>,
    recorded: bool,
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Network {
            layers,
            recorded: false,
        }
    }

    /// Run the stack. `Train` records what backward needs; `Eval` reads
    /// running statistics and records nothing.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut v = Value::Image(x.clone());
        for layer in &mut self.layers {
            v = layer.forward(v, mode)?;
        }
        if mode == Mode::Train {
            self.recorded = true;
        }
        Ok(v.into_tensor())
    }

    /// Backpropagate from the logits gradient; fills every parameter's `grad`
    /// and returns the gradient with respect to the network input.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<Tensor<T>> {
        if !self.recorded {
            return Err(Error::NoForwardPass);
        }
        self.recorded = false;
        let mut g = Value::Matrix(grad_logits.clone());
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(g)?;
        }
        Ok(g.into_tensor())
    }

    pub fn structure(&self) -> Vec<String> {
        self.layers.iter().map(Layer::describe).collect()
    }

    pub fn visit_params(
        &mut self,
        f: &mut dyn FnMut(&str, &mut Param<T>) -> Result<()>,
    ) -> Result<()> {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_params(&format!("layer{i}"), f)?;
        }
        Ok(())
    }

    pub fn visit_state(
        &mut self,
        f: &mut dyn FnMut(String, StateRef<'_, T>) -> Result<()>,
    ) -> Result<()> {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_state(&format!("layer{i}"), f)?;
        }
        Ok(())
    }

    pub fn convergence_warning(&self) -> bool {
        self.layers.iter().any(Layer::convergence_warning)
    }
}
