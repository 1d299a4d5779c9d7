//! Parameterised layers on top of [`Tensor`].

use rand::Rng as _;

use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Uniform Glorot initialisation, `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::param(shape, data).expect("glorot shape")
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    /// `k×k` convolution with "same" padding at stride 1.
    pub fn new(in_ch: usize, out_ch: usize, k: usize, stride: usize, rng: &mut Rng) -> Self {
        let weight = glorot(vec![out_ch, in_ch, k, k], in_ch * k * k, out_ch * k * k, rng);
        let bias = Tensor::param(vec![out_ch], vec![0.0; out_ch]).expect("bias shape");
        Conv2d { weight, bias, stride, padding: k / 2 }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.conv2d(&self.weight, Some(&self.bias), self.stride, self.padding)
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        vec![self.weight.clone(), self.bias.clone()]
    }

    pub(crate) fn named(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }
}

/// `y = x·W + b` on `[B, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(in_features: usize, out_features: usize, rng: &mut Rng) -> Self {
        let weight = glorot(vec![in_features, out_features], in_features, out_features, rng);
        let bias = Tensor::param(vec![1, out_features], vec![0.0; out_features]).expect("bias shape");
        Linear { weight, bias }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.weight)?.add(&self.bias)
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        vec![self.weight.clone(), self.bias.clone()]
    }

    pub(crate) fn named(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }
}

/// Order-sensitive checksum of parameter values, for "did this change" checks.
pub fn checksum(params: &[Tensor]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in params {
        for v in p.data().iter() {
            h ^= v.to_bits();
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}
