use std::fmt;

use rand::Rng;

use crate::nn::ops::{self, ConvCache};
use crate::nn::param::{gaussian, ParamId, ParamStore};
use crate::nn::{GradientTape, Tensor};
use crate::{Result, Scalar};

/// Layer kinds a detector graph is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    Conv { k: usize, stride: usize, pad: usize },
    Relu,
    MaxPool2x2,
    FullyConnected,
    Softmax,
    ConcatChannels,
    /// Channel-mixing 1×1 convolution.
    Nin,
    RoiPool { out_h: usize, out_w: usize, spatial_scale: f64 },
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerKind::Conv { k, stride, pad } => write!(f, "conv k={k} stride={stride} pad={pad}"),
            LayerKind::Relu => f.write_str("relu"),
            LayerKind::MaxPool2x2 => f.write_str("maxpool2x2"),
            LayerKind::FullyConnected => f.write_str("fully_connected"),
            LayerKind::Softmax => f.write_str("softmax"),
            LayerKind::ConcatChannels => f.write_str("concat_channels"),
            LayerKind::Nin => f.write_str("nin k=1 stride=1 pad=0"),
            LayerKind::RoiPool { out_h, out_w, spatial_scale } => {
                write!(f, "roi_pool out={out_h}x{out_w} scale={spatial_scale}")
            }
        }
    }
}

/// Convolution with its parameters registered in a store. A NIN layer is
/// the `k = 1` case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn register<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.insert(format!("{name}.weight"), gaussian([c_out, c_in, k, k], std, rng))?;
        let bias = store.insert(format!("{name}.bias"), Tensor::zeros([c_out, 1, 1, 1]))?;
        Ok(Conv2d { weight, bias, c_in, c_out, k, stride, pad })
    }

    /// 1×1 convolution mixing `c_in` channels down to `c_out`.
    pub fn register_nin<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Self::register(store, name, c_in, c_out, 1, 1, 0, std, rng)
    }

    pub fn kind(&self) -> LayerKind {
        if self.k == 1 && self.stride == 1 && self.pad == 0 {
            LayerKind::Nin
        } else {
            LayerKind::Conv { k: self.k, stride: self.stride, pad: self.pad }
        }
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        ops::conv2d_forward(x, store.get(self.weight), store.get(self.bias).data(), self.stride, self.pad)
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        cache: &ConvCache<T>,
        dy: &Tensor<T>,
        tape: &mut GradientTape<T>,
    ) -> Result<Tensor<T>> {
        let (dx, dw, db) = ops::conv2d_backward(cache, store.get(self.weight), dy)?;
        tape.accumulate(self.weight, dw)?;
        tape.accumulate_slice(self.bias, [self.c_out, 1, 1, 1], db)?;
        Ok(dx)
    }
}

/// Fully-connected layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn register<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.insert(format!("{name}.weight"), gaussian([d_out, d_in, 1, 1], std, rng))?;
        let bias = store.insert(format!("{name}.bias"), Tensor::zeros([d_out, 1, 1, 1]))?;
        Ok(Linear { weight, bias, d_in, d_out })
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::fully_connected(x, store.get(self.weight), store.get(self.bias).data())
    }

    /// `x` is the forward input.
    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        tape: &mut GradientTape<T>,
    ) -> Result<Tensor<T>> {
        let (dx, dw, db) = ops::fully_connected_backward(x, store.get(self.weight), dy);
        tape.accumulate(self.weight, dw)?;
        tape.accumulate_slice(self.bias, [self.d_out, 1, 1, 1], db)?;
        Ok(dx)
    }
}
