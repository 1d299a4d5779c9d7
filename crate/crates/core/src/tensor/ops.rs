use super::{gemm, numel, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Sigmoid,
    Relu,
    Log,
    Exp,
}

/// Right-aligned broadcast of two shapes; extents must match or be 1.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For every flat output index, the flat index of the broadcast operand.
fn broadcast_index(src: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let offset = rank - src.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..src.len()).rev() {
        strides[i + offset] = if src[i] == 1 { 0 } else { acc };
        acc *= src[i];
    }
    let total = numel(out);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut flat = 0usize;
    for _ in 0..total {
        map.push(flat);
        for d in (0..rank).rev() {
            idx[d] += 1;
            flat += strides[d];
            if idx[d] < out[d] {
                break;
            }
            flat -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    map
}

fn reduce_to(src_len: usize, map: &Option<Vec<usize>>, g: impl Iterator<Item = f64>) -> Vec<f64> {
    match map {
        None => g.collect(),
        Some(m) => {
            let mut out = vec![0.0; src_len];
            for (i, v) in g.enumerate() {
                out[m[i]] += v;
            }
            out
        }
    }
}

impl Tensor {
    pub fn binary(&self, other: &Tensor, op: BinaryOp) -> Result<Tensor> {
        let shape = broadcast_shape(self.shape(), other.shape()).ok_or_else(|| {
            Error::shape(format!(
                "cannot broadcast {:?} with {:?} for {:?}",
                self.shape(),
                other.shape(),
                op
            ))
        })?;
        let map_a = (self.shape() != shape.as_slice()).then(|| broadcast_index(self.shape(), &shape));
        let map_b = (other.shape() != shape.as_slice()).then(|| broadcast_index(other.shape(), &shape));
        let a = self.to_vec();
        let b = other.to_vec();
        let n = numel(&shape);
        let ia = |i: usize| map_a.as_ref().map_or(i, |m| m[i]);
        let ib = |i: usize| map_b.as_ref().map_or(i, |m| m[i]);
        let data: Vec<f64> = (0..n)
            .map(|i| {
                let (x, y) = (a[ia(i)], b[ib(i)]);
                match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                }
            })
            .collect();
        let (la, lb) = (a.len(), b.len());
        let tag = match op {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
        };
        Ok(Tensor::from_op(tag, shape, data, &[self, other], move |g, needs| {
            let ia = |i: usize| map_a.as_ref().map_or(i, |m| m[i]);
            let ib = |i: usize| map_b.as_ref().map_or(i, |m| m[i]);
            let ga = needs[0].then(|| match op {
                BinaryOp::Add | BinaryOp::Sub => reduce_to(la, &map_a, g.iter().copied()),
                BinaryOp::Mul => reduce_to(la, &map_a, g.iter().enumerate().map(|(i, v)| v * b[ib(i)])),
            });
            let gb = needs[1].then(|| match op {
                BinaryOp::Add => reduce_to(lb, &map_b, g.iter().copied()),
                BinaryOp::Sub => reduce_to(lb, &map_b, g.iter().map(|v| -v)),
                BinaryOp::Mul => reduce_to(lb, &map_b, g.iter().enumerate().map(|(i, v)| v * a[ia(i)])),
            });
            vec![ga, gb]
        }))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, BinaryOp::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, BinaryOp::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, BinaryOp::Mul)
    }

    pub fn unary(&self, op: UnaryOp) -> Tensor {
        let x = self.to_vec();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| match op {
                UnaryOp::Sigmoid => sigmoid(v),
                UnaryOp::Relu => v.max(0.0),
                UnaryOp::Log => v.ln(),
                UnaryOp::Exp => v.exp(),
            })
            .collect();
        let saved_out = matches!(op, UnaryOp::Sigmoid | UnaryOp::Exp).then(|| y.clone());
        let tag = match op {
            UnaryOp::Sigmoid => "sigmoid",
            UnaryOp::Relu => "relu",
            UnaryOp::Log => "log",
            UnaryOp::Exp => "exp",
        };
        Tensor::from_op(tag, self.shape().to_vec(), y, &[self], move |g, _| {
            let gx: Vec<f64> = match op {
                UnaryOp::Sigmoid => {
                    let s = saved_out.as_ref().unwrap();
                    g.iter().zip(s).map(|(g, s)| g * s * (1.0 - s)).collect()
                }
                UnaryOp::Exp => {
                    let e = saved_out.as_ref().unwrap();
                    g.iter().zip(e).map(|(g, e)| g * e).collect()
                }
                UnaryOp::Relu => g.iter().zip(&x).map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }).collect(),
                UnaryOp::Log => g.iter().zip(&x).map(|(g, v)| g / v).collect(),
            };
            vec![Some(gx)]
        })
    }

    pub fn sigmoid(&self) -> Tensor {
        self.unary(UnaryOp::Sigmoid)
    }

    pub fn relu(&self) -> Tensor {
        self.unary(UnaryOp::Relu)
    }

    pub fn log(&self) -> Tensor {
        self.unary(UnaryOp::Log)
    }

    pub fn exp(&self) -> Tensor {
        self.unary(UnaryOp::Exp)
    }

    /// `s·x + c` elementwise.
    pub fn affine(&self, scale: f64, shift: f64) -> Tensor {
        let data = self.data().iter().map(|v| scale * v + shift).collect();
        Tensor::from_op("affine", self.shape().to_vec(), data, &[self], move |g, _| {
            vec![Some(g.iter().map(|v| v * scale).collect())]
        })
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.affine(s, 0.0)
    }

    pub fn neg(&self) -> Tensor {
        self.affine(-1.0, 0.0)
    }

    /// Clamp into `[lo, hi]`; the gradient is zero where the bound is active.
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        let x = self.to_vec();
        let y = x.iter().map(|v| v.clamp(lo, hi)).collect();
        Tensor::from_op("clamp", self.shape().to_vec(), y, &[self], move |g, _| {
            vec![Some(
                g.iter()
                    .zip(&x)
                    .map(|(g, &v)| if (lo..=hi).contains(&v) { *g } else { 0.0 })
                    .collect(),
            )]
        })
    }

    pub fn sum(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op("sum", vec![], vec![s], &[self], move |g, _| vec![Some(vec![g[0]; n])])
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel();
        self.sum().scale(1.0 / n as f64)
    }

    /// Sum over every axis but the first: `[B, ...] -> [B]`.
    pub fn sum_per_sample(&self) -> Result<Tensor> {
        let b = *self
            .shape()
            .first()
            .ok_or_else(|| Error::shape("sum_per_sample on a scalar"))?;
        let per = self.numel() / b.max(1);
        let data: Vec<f64> = self.data().chunks(per.max(1)).map(|c| c.iter().sum()).collect();
        Ok(Tensor::from_op("sum_per_sample", vec![b], data, &[self], move |g, _| {
            vec![Some(g.iter().flat_map(|&v| std::iter::repeat(v).take(per)).collect())]
        }))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        if numel(&shape) != self.numel() {
            return Err(Error::shape(format!("cannot reshape {:?} into {:?}", self.shape(), shape)));
        }
        Ok(Tensor::from_op("reshape", shape, self.to_vec(), &[self], |g, _| vec![Some(g.to_vec())]))
    }

    /// Matrix product of `[M, K]` and `[K, N]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (&[m, k], &[k2, n]) = (self.shape(), other.shape()) else {
            return Err(Error::shape(format!(
                "matmul needs 2-D operands, got {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        };
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner dimensions differ: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let a = self.to_vec();
        let b = other.to_vec();
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, &a, k, 1, &b, n, 1, 0.0, &mut c);
        Ok(Tensor::from_op("matmul", vec![m, n], c, &[self, other], move |g, needs| {
            // grad_a = g · bᵀ, grad_b = aᵀ · g
            let ga = needs[0].then(|| {
                let mut ga = vec![0.0; m * k];
                gemm(m, n, k, g, n, 1, &b, 1, n, 0.0, &mut ga);
                ga
            });
            let gb = needs[1].then(|| {
                let mut gb = vec![0.0; k * n];
                gemm(k, m, n, &a, 1, k, g, n, 1, 0.0, &mut gb);
                gb
            });
            vec![ga, gb]
        }))
    }

    /// Concatenate 4-D tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::usage("concat of zero tensors"))?;
        let &[b, _, h, w] = first.shape() else {
            return Err(Error::shape(format!("concat_channels needs 4-D input, got {:?}", first.shape())));
        };
        let mut channels = Vec::with_capacity(parts.len());
        for p in parts {
            match p.shape() {
                &[pb, pc, ph, pw] if pb == b && ph == h && pw == w => channels.push(pc),
                other => {
                    return Err(Error::shape(format!(
                        "concat_channels: {:?} incompatible with {:?}",
                        other,
                        first.shape()
                    )))
                }
            }
        }
        let total: usize = channels.iter().sum();
        let plane = h * w;
        let mut data = Vec::with_capacity(b * total * plane);
        let datas: Vec<_> = parts.iter().map(|p| p.data()).collect();
        for bi in 0..b {
            for (d, &c) in datas.iter().zip(&channels) {
                data.extend_from_slice(&d[bi * c * plane..(bi + 1) * c * plane]);
            }
        }
        drop(datas);
        let chans = channels.clone();
        Ok(Tensor::from_op("concat_channels", vec![b, total, h, w], data, parts, move |g, needs| {
            let mut offset = 0;
            let mut out = Vec::with_capacity(chans.len());
            for (&c, &need) in chans.iter().zip(needs) {
                if need {
                    let mut gi = Vec::with_capacity(b * c * plane);
                    for bi in 0..b {
                        let start = bi * total * plane + offset * plane;
                        gi.extend_from_slice(&g[start..start + c * plane]);
                    }
                    out.push(Some(gi));
                } else {
                    out.push(None);
                }
                offset += c;
            }
            out
        }))
    }

    /// `[B, C, H, W] -> [B, C]` spatial mean.
    pub fn global_avg_pool(&self) -> Result<Tensor> {
        let &[b, c, h, w] = self.shape() else {
            return Err(Error::shape(format!("global_avg_pool needs 4-D input, got {:?}", self.shape())));
        };
        let plane = h * w;
        let inv = 1.0 / plane as f64;
        let data: Vec<f64> = self.data().chunks(plane).map(|p| p.iter().sum::<f64>() * inv).collect();
        Ok(Tensor::from_op("global_avg_pool", vec![b, c], data, &[self], move |g, _| {
            vec![Some(g.iter().flat_map(|&v| std::iter::repeat(v * inv).take(plane)).collect())]
        }))
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_identities() {
        assert_eq!(Tensor::scalar(0.0).sigmoid().item(), 0.5);
        assert_eq!(Tensor::scalar(1.0).log().item(), 0.0);
        assert_eq!(Tensor::scalar(0.0).exp().item(), 1.0);
        assert_eq!(Tensor::scalar(-3.0).relu().item(), 0.0);
    }

    #[test]
    fn power_rule() {
        let x = Tensor::param(vec![], vec![3.0]).unwrap();
        x.mul(&x).unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![6.0]);
    }

    #[test]
    fn matmul_by_hand() {
        let a = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().to_vec(), vec![3.0, 7.0]);
    }

    #[test]
    fn matmul_identity() {
        let eye = Tensor::new(vec![3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let x = Tensor::new(vec![3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(eye.matmul(&x).unwrap().to_vec(), x.to_vec());
    }

    #[test]
    fn matmul_mismatch_is_shape_error() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![2, 3]);
        assert!(matches!(a.matmul(&b), Err(Error::Shape(_))));
    }

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shape(&[2, 3, 4, 5], &[1, 3, 1, 1]), Some(vec![2, 3, 4, 5]));
        assert_eq!(broadcast_shape(&[4, 5], &[5]), Some(vec![4, 5]));
        assert_eq!(broadcast_shape(&[2, 3], &[3, 2]), None);
        let err = Tensor::zeros(vec![2, 3]).add(&Tensor::zeros(vec![3, 2])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");
    }

    #[test]
    fn broadcast_grad_has_param_shape() {
        let x = Tensor::param(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let bias = Tensor::param(vec![1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        x.add(&bias).unwrap().mul(&x).unwrap().sum().backward().unwrap();
        let gb = bias.grad().unwrap();
        assert_eq!(gb.len(), 3);
        assert_eq!(gb, vec![1.0 + 4.0, 2.0 + 5.0, 3.0 + 6.0]);
    }

    #[test]
    fn clamp_blocks_gradient_outside_range() {
        let x = Tensor::param(vec![3], vec![-1.0, 0.5, 2.0]).unwrap();
        x.clamp(0.0, 1.0).sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn concat_and_split_grads() {
        let a = Tensor::param(vec![1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::param(vec![1, 2, 1, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = Tensor::concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[1, 3, 1, 2]);
        assert_eq!(c.to_vec(), vec![1., 2., 3., 4., 5., 6.]);
        let w = Tensor::new(vec![1, 3, 1, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        c.mul(&w).unwrap().sum().backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![1., 2.]);
        assert_eq!(b.grad().unwrap(), vec![3., 4., 5., 6.]);
    }
}
