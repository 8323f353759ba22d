//! Convolution, fully-connected, activation, pooling, and residual layers.

use crate::error::{Error, Result};
use crate::patching::{col2im_sum, im2col, PatchGeometry, PatchMatrix};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::deconv::BlockTransform;
use super::{Deconv, Mode, Param, StateRef, Value};

/// Fold per-block whitening into the weight: with `W` of shape [out, d] and
/// block transforms `(μ_i, D_i)`, the whitened matmul
/// `((p − μ)·D)·Wᵀ` equals `p·A + shift` with `A = stack_i(D_i·W_iᵀ)`
/// restricted to the real (non-padded) block rows and `shift = −μ·A`.
/// Centered zero-padded columns are exactly zero, so dropping the padded
/// rows of each `D_i·W_iᵀ` loses nothing.
fn fold_whitening<T: Scalar>(
    weight: &Tensor<T>,
    transforms: &[BlockTransform<T>],
) -> Result<(Tensor<T>, Vec<T>)> {
    let (out_c, d) = weight.dims2("fold_whitening")?;
    let bc = transforms[0].matrix.shape()[0];
    let mut a = vec![T::zero(); d * out_c];
    for (i, tf) in transforms.iter().enumerate() {
        let lo = i * bc;
        let hi = d.min(lo + bc);
        let real = hi - lo;
        let mut wb = vec![T::zero(); out_c * bc];
        for o in 0..out_c {
            wb[o * bc..o * bc + real].copy_from_slice(&weight.data()[o * d + lo..o * d + hi]);
        }
        let wb = Tensor::new(vec![out_c, bc], wb)?;
        let ai = tf.matrix.matmul(&wb.transpose()?)?; // [bc × out_c]
        for r in 0..real {
            a[(lo + r) * out_c..(lo + r + 1) * out_c].copy_from_slice(ai.row(r));
        }
    }
    let a = Tensor::new(vec![d, out_c], a)?;
    let mut shift = vec![T::zero(); out_c];
    for (i, tf) in transforms.iter().enumerate() {
        let lo = i * bc;
        let real = d.min(lo + bc) - lo;
        for r in 0..real {
            let mu = tf.mean.data()[r];
            for (o, sh) in shift.iter_mut().enumerate() {
                *sh = *sh - mu * a.data()[(lo + r) * out_c + o];
            }
        }
    }
    Ok((a, shift))
}

/// Weight gradient through the frozen whitening transform: per block,
/// `dW_i = (G_i − s ⊗ μ_i)·D_i` with `G = grad_outᵀ·p_raw` and `s` the
/// column sums of the output gradient.
fn whitened_weight_grad<T: Scalar>(
    g: &Tensor<T>,
    s: &Tensor<T>,
    transforms: &[BlockTransform<T>],
) -> Result<Tensor<T>> {
    let (out_c, d) = g.dims2("whitened_weight_grad")?;
    let bc = transforms[0].matrix.shape()[0];
    let mut dw = vec![T::zero(); out_c * d];
    for (i, tf) in transforms.iter().enumerate() {
        let lo = i * bc;
        let hi = d.min(lo + bc);
        let real = hi - lo;
        let mut m = vec![T::zero(); out_c * bc];
        for o in 0..out_c {
            m[o * bc..o * bc + real].copy_from_slice(&g.data()[o * d + lo..o * d + hi]);
            let so = s.data()[o];
            for (v, &mu) in m[o * bc..(o + 1) * bc].iter_mut().zip(tf.mean.data().iter()) {
                *v = *v - so * mu;
            }
        }
        let m = Tensor::new(vec![out_c, bc], m)?;
        let dwb = m.matmul(&tf.matrix)?;
        for o in 0..out_c {
            dw[o * d + lo..o * d + hi].copy_from_slice(&dwb.row(o)[..real]);
        }
    }
    Tensor::new(vec![out_c, d], dw)
}

/// Convolution realized as `matmul(im2col(x), Wᵀ) + b`.
///
/// Weights are stored flattened as `[out_channels, in_channels·kh·kw]` with
/// the same channel-major column order the patch matrix uses.
#[derive(Debug)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub deconv: Option<Deconv<T>>,
    cache: Option<ConvCache<T>>,
}

#[derive(Debug)]
struct ConvCache<T> {
    /// Raw im2col patches (never whitened; whitening is folded into the
    /// effective weight).
    patches: PatchMatrix<T>,
    /// Folded effective weight and the block transforms that built it, when
    /// deconv is attached.
    folded: Option<(Tensor<T>, Vec<BlockTransform<T>>)>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        weight: Tensor<T>,
        bias: Tensor<T>,
        in_channels: usize,
        out_channels: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: usize,
        deconv: Option<Deconv<T>>,
    ) -> Result<Self> {
        let d = in_channels * kh * kw;
        if weight.shape() != [out_channels, d] || bias.shape() != [out_channels] {
            return Err(Error::ShapeMismatch {
                op: "Conv2d::new",
                left: weight.shape().to_vec(),
                right: vec![out_channels, d],
            });
        }
        Ok(Conv2d {
            weight: Param::new(weight),
            bias: Param::new(bias),
            in_channels,
            out_channels,
            kh,
            kw,
            stride,
            padding,
            deconv,
            cache: None,
        })
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (b, c, _, _) = x.dims4("conv forward")?;
        if c != self.in_channels {
            return Err(Error::ShapeMismatch {
                op: "conv forward",
                left: x.shape().to_vec(),
                right: vec![b, self.in_channels, 0, 0],
            });
        }
        let patches = im2col(&x, self.kh, self.kw, self.stride, self.padding)?;
        let (mut out_mat, folded) = match &mut self.deconv {
            Some(dc) => {
                let transforms = dc.transforms(&patches, mode)?;
                let (a, shift) = fold_whitening(&self.weight.value, &transforms)?;
                let mut out = patches.data.matmul(&a)?;
                for row in out.data_mut().chunks_exact_mut(self.out_channels) {
                    for (v, sh) in row.iter_mut().zip(shift.iter()) {
                        *v += *sh;
                    }
                }
                (out, Some((a, transforms)))
            }
            None => (patches.data.matmul(&self.weight.value.transpose()?)?, None),
        };
        add_row_bias(&mut out_mat, &self.bias.value);
        let out = rows_to_image(
            &out_mat,
            b,
            self.out_channels,
            patches.geometry.out_h(),
            patches.geometry.out_w(),
        )?;
        if mode == Mode::Train {
            self.cache = Some(ConvCache { patches, folded });
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or(Error::NoForwardPass)?;
        let grad_mat = image_to_rows(&grad_out)?;
        self.bias.grad = grad_mat.col_sums()?;
        let grad_patches = match &cache.folded {
            Some((a, transforms)) => {
                let g = grad_mat.matmul_tn(&cache.patches.data)?;
                self.weight.grad = whitened_weight_grad(&g, &self.bias.grad, transforms)?;
                PatchMatrix {
                    data: grad_mat.matmul(&a.transpose()?)?,
                    geometry: cache.patches.geometry,
                }
            }
            None => {
                self.weight.grad = grad_mat.matmul_tn(&cache.patches.data)?;
                PatchMatrix {
                    data: grad_mat.matmul(&self.weight.value)?,
                    geometry: cache.patches.geometry,
                }
            }
        };
        col2im_sum(&grad_patches)
    }

    pub fn describe(&self) -> String {
        let tag = if self.deconv.is_some() { "deconv+" } else { "" };
        format!(
            "{tag}conv{}x{}({}->{})/s{}",
            self.kh, self.kw, self.in_channels, self.out_channels, self.stride
        )
    }

    pub fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &mut Param<T>) -> Result<()>,
    ) -> Result<()> {
        f(&format!("{prefix}.weight"), &mut self.weight)?;
        f(&format!("{prefix}.bias"), &mut self.bias)
    }

    pub fn visit_state(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, StateRef<'_, T>) -> Result<()>,
    ) -> Result<()> {
        f(format!("{prefix}.weight"), StateRef::Param(&mut self.weight.value))?;
        f(format!("{prefix}.bias"), StateRef::Param(&mut self.bias.value))?;
        if let Some(dc) = &mut self.deconv {
            dc.visit_buffers(&format!("{prefix}.deconv"), f)?;
        }
        Ok(())
    }
}

/// Fully-connected layer `x·Wᵀ + b` over row vectors.
#[derive(Debug)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub in_features: usize,
    pub out_features: usize,
    pub deconv: Option<Deconv<T>>,
    cache: Option<(Tensor<T>, Option<(Tensor<T>, Vec<BlockTransform<T>>)>)>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(
        weight: Tensor<T>,
        bias: Tensor<T>,
        in_features: usize,
        out_features: usize,
        deconv: Option<Deconv<T>>,
    ) -> Result<Self> {
        if weight.shape() != [out_features, in_features] || bias.shape() != [out_features] {
            return Err(Error::ShapeMismatch {
                op: "Linear::new",
                left: weight.shape().to_vec(),
                right: vec![out_features, in_features],
            });
        }
        Ok(Linear {
            weight: Param::new(weight),
            bias: Param::new(bias),
            in_features,
            out_features,
            deconv,
            cache: None,
        })
    }

    fn feature_geometry(&self, rows: usize) -> PatchGeometry {
        PatchGeometry {
            batch: rows,
            channels: self.in_features,
            height: 1,
            width: 1,
            kh: 1,
            kw: 1,
            conv_stride: 1,
            padding: 0,
            block_index: None,
        }
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (rows, cols) = x.dims2("fc forward")?;
        if cols != self.in_features {
            return Err(Error::ShapeMismatch {
                op: "fc forward",
                left: x.shape().to_vec(),
                right: vec![rows, self.in_features],
            });
        }
        let geometry = self.feature_geometry(rows);
        let (mut out, folded) = match &mut self.deconv {
            Some(dc) => {
                let p = PatchMatrix { data: x, geometry };
                let transforms = dc.transforms(&p, mode)?;
                let (a, shift) = fold_whitening(&self.weight.value, &transforms)?;
                let mut out = p.data.matmul(&a)?;
                for row in out.data_mut().chunks_exact_mut(self.out_features) {
                    for (v, sh) in row.iter_mut().zip(shift.iter()) {
                        *v += *sh;
                    }
                }
                if mode == Mode::Train {
                    self.cache = Some((p.data, Some((a, transforms))));
                }
                (out, true)
            }
            None => {
                let out = x.matmul(&self.weight.value.transpose()?)?;
                if mode == Mode::Train {
                    self.cache = Some((x, None));
                }
                (out, false)
            }
        };
        let _ = folded;
        add_row_bias(&mut out, &self.bias.value);
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: Tensor<T>) -> Result<Tensor<T>> {
        let (features, folded) = self.cache.take().ok_or(Error::NoForwardPass)?;
        self.bias.grad = grad_out.col_sums()?;
        match folded {
            Some((a, transforms)) => {
                let g = grad_out.matmul_tn(&features)?;
                self.weight.grad = whitened_weight_grad(&g, &self.bias.grad, &transforms)?;
                grad_out.matmul(&a.transpose()?)
            }
            None => {
                self.weight.grad = grad_out.matmul_tn(&features)?;
                grad_out.matmul(&self.weight.value)
            }
        }
    }

    pub fn describe(&self) -> String {
        let tag = if self.deconv.is_some() { "deconv+" } else { "" };
        format!("{tag}fc({}->{})", self.in_features, self.out_features)
    }

    pub fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &mut Param<T>) -> Result<()>,
    ) -> Result<()> {
        f(&format!("{prefix}.weight"), &mut self.weight)?;
        f(&format!("{prefix}.bias"), &mut self.bias)
    }

    pub fn visit_state(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, StateRef<'_, T>) -> Result<()>,
    ) -> Result<()> {
        f(format!("{prefix}.weight"), StateRef::Param(&mut self.weight.value))?;
        f(format!("{prefix}.bias"), StateRef::Param(&mut self.bias.value))?;
        if let Some(dc) = &mut self.deconv {
            dc.visit_buffers(&format!("{prefix}.deconv"), f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Relu { mask: None }
    }

    pub fn forward<T: Scalar>(&mut self, v: Value<T>, mode: Mode) -> Result<Value<T>> {
        let apply = |t: &mut Tensor<T>| -> Vec<bool> {
            let mut mask = Vec::with_capacity(t.len());
            for x in t.data_mut() {
                let on = *x > T::zero();
                mask.push(on);
                if !on {
                    *x = T::zero();
                }
            }
            mask
        };
        match v {
            Value::Image(mut t) => {
                let mask = apply(&mut t);
                if mode == Mode::Train {
                    self.mask = Some(mask);
                }
                Ok(Value::Image(t))
            }
            Value::Matrix(mut t) => {
                let mask = apply(&mut t);
                if mode == Mode::Train {
                    self.mask = Some(mask);
                }
                Ok(Value::Matrix(t))
            }
        }
    }

    pub fn backward<T: Scalar>(&mut self, grad: Value<T>) -> Result<Value<T>> {
        let mask = self.mask.take().ok_or(Error::NoForwardPass)?;
        let zero_off = |t: &mut Tensor<T>| {
            for (g, &on) in t.data_mut().iter_mut().zip(mask.iter()) {
                if !on {
                    *g = T::zero();
                }
            }
        };
        match grad {
            Value::Image(mut t) => {
                zero_off(&mut t);
                Ok(Value::Image(t))
            }
            Value::Matrix(mut t) => {
                zero_off(&mut t);
                Ok(Value::Matrix(t))
            }
        }
    }
}

#[derive(Debug)]
pub struct MaxPool2d {
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>, // argmax flat indices, input shape
}

impl MaxPool2d {
    pub fn new(kh: usize, kw: usize, stride: usize) -> Self {
        MaxPool2d { kh, kw, stride, cache: None }
    }

    pub fn forward<T: Scalar>(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (b, c, h, w) = x.dims4("maxpool")?;
        pool_geometry(h, w, self.kh, self.kw, self.stride)?;
        let oh = (h - self.kh) / self.stride + 1;
        let ow = (w - self.kw) / self.stride + 1;
        let mut out = vec![T::zero(); b * c * oh * ow];
        let mut argmax = vec![0usize; out.len()];
        for bc in 0..b * c {
            let plane = &x.data()[bc * h * w..][..h * w];
            for y in 0..oh {
                for xo in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_idx = 0;
                    for ki in 0..self.kh {
                        let ih = y * self.stride + ki;
                        for kj in 0..self.kw {
                            let iw = xo * self.stride + kj;
                            let v = plane[ih * w + iw];
                            if v > best {
                                best = v;
                                best_idx = bc * h * w + ih * w + iw;
                            }
                        }
                    }
                    let o = (bc * oh + y) * ow + xo;
                    out[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
        if mode == Mode::Train {
            self.cache = Some((argmax, x.shape().to_vec()));
        }
        Tensor::new(vec![b, c, oh, ow], out)
    }

    pub fn backward<T: Scalar>(&mut self, grad_out: Tensor<T>) -> Result<Tensor<T>> {
        let (argmax, shape) = self.cache.take().ok_or(Error::NoForwardPass)?;
        let mut grad = Tensor::zeros(shape)?;
        for (&idx, &g) in argmax.iter().zip(grad_out.data().iter()) {
            grad.data_mut()[idx] += g;
        }
        Ok(grad)
    }
}

#[derive(Debug)]
pub struct AvgPool2d {
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    cache: Option<Vec<usize>>, // input shape
}

impl AvgPool2d {
    pub fn new(kh: usize, kw: usize, stride: usize) -> Self {
        AvgPool2d { kh, kw, stride, cache: None }
    }

    /// Pool that collapses the full spatial extent to 1×1.
    pub fn global(h: usize, w: usize) -> Self {
        AvgPool2d::new(h, w, h.max(w))
    }

    pub fn forward<T: Scalar>(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (b, c, h, w) = x.dims4("avgpool")?;
        pool_geometry(h, w, self.kh, self.kw, self.stride)?;
        let oh = (h - self.kh) / self.stride + 1;
        let ow = (w - self.kw) / self.stride + 1;
        let inv = T::one() / T::from_usize(self.kh * self.kw);
        let mut out = vec![T::zero(); b * c * oh * ow];
        for bc in 0..b * c {
            let plane = &x.data()[bc * h * w..][..h * w];
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = T::zero();
                    for ki in 0..self.kh {
                        let ih = y * self.stride + ki;
                        for kj in 0..self.kw {
                            acc += plane[ih * w + xo * self.stride + kj];
                        }
                    }
                    out[(bc * oh + y) * ow + xo] = acc * inv;
                }
            }
        }
        if mode == Mode::Train {
            self.cache = Some(x.shape().to_vec());
        }
        Tensor::new(vec![b, c, oh, ow], out)
    }

    pub fn backward<T: Scalar>(&mut self, grad_out: Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.cache.take().ok_or(Error::NoForwardPass)?;
        let (h, w) = (shape[2], shape[3]);
        let (b, c, oh, ow) = grad_out.dims4("avgpool backward")?;
        let inv = T::one() / T::from_usize(self.kh * self.kw);
        let mut grad = Tensor::zeros(shape)?;
        for bc in 0..b * c {
            for y in 0..oh {
                for xo in 0..ow {
                    let g = grad_out.data()[(bc * oh + y) * ow + xo] * inv;
                    for ki in 0..self.kh {
                        let ih = y * self.stride + ki;
                        for kj in 0..self.kw {
                            grad.data_mut()[bc * h * w + ih * w + xo * self.stride + kj] += g;
                        }
                    }
                }
            }
        }
        Ok(grad)
    }
}

fn pool_geometry(h: usize, w: usize, kh: usize, kw: usize, stride: usize) -> Result<()> {
    let bad = stride == 0
        || kh == 0
        || kw == 0
        || kh > h
        || kw > w
        || (h - kh) % stride != 0
        || (w - kw) % stride != 0;
    if bad {
        return Err(Error::Geometry { height: h, width: w, kh, kw, stride, padding: 0 });
    }
    Ok(())
}

/// Image → feature-matrix reshape.
#[derive(Debug, Default)]
pub struct Flatten {
    cache: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Flatten { cache: None }
    }

    pub fn forward<T: Scalar>(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (b, c, h, w) = x.dims4("flatten")?;
        if mode == Mode::Train {
            self.cache = Some(x.shape().to_vec());
        }
        x.reshape(vec![b, c * h * w])
    }

    pub fn backward<T: Scalar>(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.cache.take().ok_or(Error::NoForwardPass)?;
        grad.reshape(shape)
    }
}

/// `relu(body(x) + shortcut(x))`, with an identity shortcut when the list is
/// empty.
#[derive(Debug)]
pub struct ResidualBlock<T> {
    pub body: Vec<super::Layer<T>>,
    pub shortcut: Vec<super::Layer<T>>,
    mask: Option<Vec<bool>>,
}

impl<T: Scalar> ResidualBlock<T> {
    pub fn new(body: Vec<super::Layer<T>>, shortcut: Vec<super::Layer<T>>) -> Self {
        ResidualBlock { body, shortcut, mask: None }
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut b = Value::Image(x.clone());
        for layer in &mut self.body {
            b = layer.forward(b, mode)?;
        }
        let mut s = Value::Image(x);
        for layer in &mut self.shortcut {
            s = layer.forward(s, mode)?;
        }
        let mut sum = b.into_tensor();
        sum.add_assign(s.tensor())?;
        let mut mask = Vec::with_capacity(sum.len());
        for v in sum.data_mut() {
            let on = *v > T::zero();
            mask.push(on);
            if !on {
                *v = T::zero();
            }
        }
        if mode == Mode::Train {
            self.mask = Some(mask);
        }
        Ok(sum)
    }

    pub fn backward(&mut self, mut grad: Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.take().ok_or(Error::NoForwardPass)?;
        for (g, &on) in grad.data_mut().iter_mut().zip(mask.iter()) {
            if !on {
                *g = T::zero();
            }
        }
        let mut gb = Value::Image(grad.clone());
        for layer in self.body.iter_mut().rev() {
            gb = layer.backward(gb)?;
        }
        let mut gs = Value::Image(grad);
        for layer in self.shortcut.iter_mut().rev() {
            gs = layer.backward(gs)?;
        }
        let mut out = gb.into_tensor();
        out.add_assign(gs.tensor())?;
        Ok(out)
    }

    pub fn describe(&self) -> String {
        let body: Vec<String> = self.body.iter().map(super::Layer::describe).collect();
        let short: Vec<String> = self.shortcut.iter().map(super::Layer::describe).collect();
        if short.is_empty() {
            format!("residual{{{}}}", body.join(" "))
        } else {
            format!("residual{{{} | {}}}", body.join(" "), short.join(" "))
        }
    }

    pub fn convergence_warning(&self) -> bool {
        self.body.iter().chain(self.shortcut.iter()).any(super::Layer::convergence_warning)
    }

    pub fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &mut Param<T>) -> Result<()>,
    ) -> Result<()> {
        for (i, layer) in self.body.iter_mut().enumerate() {
            layer.visit_params(&format!("{prefix}.body{i}"), f)?;
        }
        for (i, layer) in self.shortcut.iter_mut().enumerate() {
            layer.visit_params(&format!("{prefix}.shortcut{i}"), f)?;
        }
        Ok(())
    }

    pub fn visit_state(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, StateRef<'_, T>) -> Result<()>,
    ) -> Result<()> {
        for (i, layer) in self.body.iter_mut().enumerate() {
            layer.visit_state(&format!("{prefix}.body{i}"), f)?;
        }
        for (i, layer) in self.shortcut.iter_mut().enumerate() {
            layer.visit_state(&format!("{prefix}.shortcut{i}"), f)?;
        }
        Ok(())
    }
}

fn add_row_bias<T: Scalar>(mat: &mut Tensor<T>, bias: &Tensor<T>) {
    let n = bias.len();
    for row in mat.data_mut().chunks_exact_mut(n) {
        for (v, &b) in row.iter_mut().zip(bias.data().iter()) {
            *v += b;
        }
    }
}

/// `[N=(b,oh,ow)] × oc` row matrix → `[b, oc, oh, ow]` image.
pub(crate) fn rows_to_image<T: Scalar>(
    mat: &Tensor<T>,
    b: usize,
    oc: usize,
    oh: usize,
    ow: usize,
) -> Result<Tensor<T>> {
    let spatial = oh * ow;
    let mut out = vec![T::zero(); b * oc * spatial];
    for bi in 0..b {
        for s in 0..spatial {
            let row = &mat.data()[(bi * spatial + s) * oc..][..oc];
            for (co, &v) in row.iter().enumerate() {
                out[(bi * oc + co) * spatial + s] = v;
            }
        }
    }
    Tensor::new(vec![b, oc, oh, ow], out)
}

/// Inverse of [`rows_to_image`].
pub(crate) fn image_to_rows<T: Scalar>(img: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, oc, oh, ow) = img.dims4("image_to_rows")?;
    let spatial = oh * ow;
    let mut out = vec![T::zero(); b * spatial * oc];
    for bi in 0..b {
        for co in 0..oc {
            let plane = &img.data()[(bi * oc + co) * spatial..][..spatial];
            for (s, &v) in plane.iter().enumerate() {
                out[(bi * spatial + s) * oc + co] = v;
            }
        }
    }
    Tensor::new(vec![b * spatial, oc], out)
}
