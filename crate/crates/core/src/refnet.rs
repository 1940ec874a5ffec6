//! Minimal analytically differentiable network: one 3×3 valid convolution
//! over 3 input channels, relu, global average pooling and a 2-class linear
//! head. It produces [`FeatureMapBundle`]s with exact gradients.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcampp::FeatureMapBundle;
use crate::rng::{streams, Rng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const IN_CHANNELS: usize = 3;
pub const KERNEL: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct RefNetParams<T> {
    /// K×3×3×3 kernels.
    pub conv: Tensor<T>,
    pub conv_bias: Vec<T>,
    /// 2×K.
    pub head: Tensor<T>,
    pub head_bias: [T; 2],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    /// K×(H−2)×(W−2) post-relu feature maps.
    pub activations: Tensor<T>,
    pub scores: [T; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamsMeta {
    channels: usize,
    seed: u64,
}

impl<T: Scalar> RefNetParams<T> {
    /// Parameters drawn uniformly from `[-0.5, 0.5]`, rounded to `f32` so
    /// that the TSR1 files reload them exactly.
    pub fn init(channels: usize, seed: u64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("refnet needs at least one channel"));
        }
        let mut rng = Rng::derive(seed, streams::REFNET_INIT, channels as u64);
        let mut draw = || T::lit(f64::from(rng.random_range(-0.5..=0.5) as f32));
        let conv = Tensor::from_fn(vec![channels, IN_CHANNELS, KERNEL, KERNEL], |_| draw())?;
        let conv_bias = (0..channels).map(|_| draw()).collect();
        let head = Tensor::from_fn(vec![2, channels], |_| draw())?;
        let head_bias = [draw(), draw()];
        Ok(Self {
            conv,
            conv_bias,
            head,
            head_bias,
            seed,
        })
    }

    pub fn channels(&self) -> usize {
        self.conv.dims()[0]
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.channels();
        if self.conv.dims() != [k, IN_CHANNELS, KERNEL, KERNEL]
            || self.conv_bias.len() != k
            || self.head.dims() != [2, k]
        {
            return Err(Error::invalid("refnet parameter shapes are inconsistent"));
        }
        let finite = self.conv.first_non_finite().is_none()
            && self.head.first_non_finite().is_none()
            && self.conv_bias.iter().chain(&self.head_bias).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("refnet parameters"));
        }
        Ok(())
    }

    pub fn head_weight(&self, class: usize, channel: usize) -> T {
        self.head.data()[class * self.channels() + channel]
    }

    /// Writes `conv.tsr`, `conv_bias.tsr`, `head.tsr`, `head_bias.tsr` and `meta.json`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.conv.cast::<f32>().write_tsr1(dir.join("conv.tsr"))?;
        Tensor::new(vec![self.channels()], self.conv_bias.clone())?
            .cast::<f32>()
            .write_tsr1(dir.join("conv_bias.tsr"))?;
        self.head.cast::<f32>().write_tsr1(dir.join("head.tsr"))?;
        Tensor::new(vec![2], self.head_bias.to_vec())?
            .cast::<f32>()
            .write_tsr1(dir.join("head_bias.tsr"))?;
        let meta = ParamsMeta {
            channels: self.channels(),
            seed: self.seed,
        };
        let path = dir.join("meta.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("meta.json");
        let meta: ParamsMeta = serde_json::from_slice(&std::fs::read(&path).map_err(|e| Error::io(&path, e))?)?;
        let conv_bias: Tensor<T> = Tensor::read_tsr1(dir.join("conv_bias.tsr"))?.cast();
        let head_bias: Tensor<T> = Tensor::read_tsr1(dir.join("head_bias.tsr"))?.cast();
        if head_bias.len() != 2 {
            return Err(Error::invalid("head_bias must hold 2 values"));
        }
        let params = Self {
            conv: Tensor::read_tsr1(dir.join("conv.tsr"))?.cast(),
            conv_bias: conv_bias.into_data(),
            head: Tensor::read_tsr1(dir.join("head.tsr"))?.cast(),
            head_bias: [head_bias.data()[0], head_bias.data()[1]],
            seed: meta.seed,
        };
        if params.channels() != meta.channels {
            return Err(Error::invalid("meta.json channel count disagrees with conv.tsr"));
        }
        params.validate()?;
        Ok(params)
    }
}

/// Class scores from feature maps: `S_c = sum_k head[c][k] mean(A_k) + bias[c]`.
pub fn scores_from_features<T: Scalar>(params: &RefNetParams<T>, activations: &Tensor<T>) -> [T; 2] {
    let plane = activations.dims()[1] * activations.dims()[2];
    let n = T::from_usize_lossy(plane);
    let means: Vec<T> = activations
        .data()
        .chunks_exact(plane)
        .map(|m| m.iter().copied().sum::<T>() / n)
        .collect();
    [0, 1].map(|c| {
        means
            .iter()
            .enumerate()
            .map(|(k, &m)| params.head_weight(c, k) * m)
            .sum::<T>()
            + params.head_bias[c]
    })
}

pub fn forward<T: Scalar>(params: &RefNetParams<T>, input: &Tensor<T>) -> Result<ForwardOutput<T>> {
    params.validate()?;
    let d = input.dims();
    if d.len() != 3 || d[0] != IN_CHANNELS {
        return Err(Error::invalid(format!("refnet input must be 3×H×W, got {d:?}")));
    }
    let (h, w) = (d[1], d[2]);
    if h < KERNEL || w < KERNEL {
        return Err(Error::invalid(format!("refnet input {h}×{w} smaller than 3×3")));
    }
    let (oh, ow) = (h - 2, w - 2);
    let k = params.channels();
    let x = input.data();
    let kern = params.conv.data();
    let mut out = vec![T::zero(); k * oh * ow];
    for ch in 0..k {
        let kbase = ch * IN_CHANNELS * KERNEL * KERNEL;
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = params.conv_bias[ch];
                for c in 0..IN_CHANNELS {
                    for di in 0..KERNEL {
                        let row = &x[(c * h + i + di) * w + j..][..KERNEL];
                        let taps = &kern[kbase + (c * KERNEL + di) * KERNEL..][..KERNEL];
                        for (a, b) in row.iter().zip(taps) {
                            acc += *a * *b;
                        }
                    }
                }
                out[(ch * oh + i) * ow + j] = acc.max(T::zero());
            }
        }
    }
    let activations = Tensor::new(vec![k, oh, ow], out)?;
    let scores = scores_from_features(params, &activations);
    Ok(ForwardOutput { activations, scores })
}

/// `dS_c / dA_k(i,j) = head[c][k] / (H' W')`, constant per channel.
pub fn backward_feature_grad<T: Scalar>(
    params: &RefNetParams<T>,
    activations: &Tensor<T>,
    class_index: u8,
) -> Result<Tensor<T>> {
    let d = activations.dims();
    if d.len() != 3 || d[0] != params.channels() {
        return Err(Error::invalid(format!("feature maps {d:?} do not match refnet")));
    }
    if class_index > 1 {
        return Err(Error::invalid(format!("class index {class_index}")));
    }
    let plane = d[1] * d[2];
    let n = T::from_usize_lossy(plane);
    Ok(Tensor::from_fn(d.to_vec(), |i| {
        params.head_weight(class_index as usize, i / plane) / n
    })?)
}

/// Forward and backward pass packaged for Grad-CAM++.
pub fn to_bundle<T: Scalar>(
    params: &RefNetParams<T>,
    input: &Tensor<T>,
    class_index: u8,
) -> Result<FeatureMapBundle<T>> {
    let fwd = forward(params, input)?;
    let grads = backward_feature_grad(params, &fwd.activations, class_index)?;
    FeatureMapBundle::new(fwd.activations, grads, fwd.scores[class_index as usize], class_index)
}
