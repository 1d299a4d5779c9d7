//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use freqalign::adversarial::{adl_losses, Discriminator, Generator, GeneratorObjective};
use freqalign::network::{seg_loss, SegmentationNet};
use freqalign::rng::{substream, Rng, Stream};
use freqalign::tensor::Tensor;
use rand::Rng as _;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> Rng {
    substream(seed, Stream::Data)
}

pub fn uniform_vec(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn uniform(rng: &mut Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, uniform_vec(rng, n, lo, hi)).unwrap()
}

pub fn uniform_param(rng: &mut Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::param(shape, uniform_vec(rng, n, lo, hi)).unwrap()
}

pub fn binary_mask(rng: &mut Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 }).collect()).unwrap()
}

/// `|a − n| / max(|a|, |n|)`, with the denominator floored at 1e-6 so two
/// vanishing gradients do not divide zero by zero.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central difference of `loss` in element `i` of `t`.
pub fn numeric_grad(t: &Tensor, i: usize, loss: &dyn Fn() -> f64) -> f64 {
    let orig = t.data()[i];
    t.update(|d| d[i] = orig + FD_STEP);
    let up = loss();
    t.update(|d| d[i] = orig - FD_STEP);
    let down = loss();
    t.update(|d| d[i] = orig);
    (up - down) / (2.0 * FD_STEP)
}

/// Worst relative error over every element of every input.
pub fn check_all(inputs: &[Tensor], loss: &dyn Fn() -> Tensor) -> f64 {
    let probes: Vec<(Tensor, usize)> =
        inputs.iter().flat_map(|t| (0..t.numel()).map(move |i| (t.clone(), i))).collect();
    check_probes(inputs, &probes, loss)
}

/// Worst relative error over the listed `(tensor, element)` probes.
/// `params` are the leaves whose gradients get reset before the backward pass.
pub fn check_probes(params: &[Tensor], probes: &[(Tensor, usize)], loss: &dyn Fn() -> Tensor) -> f64 {
    params.iter().for_each(Tensor::zero_grad);
    loss().backward().unwrap();
    let scalar = || loss().item();
    let mut worst = 0.0f64;
    for (t, i) in probes {
        let analytic = t.grad().expect("probe received no gradient")[*i];
        let numeric = numeric_grad(t, *i, &scalar);
        worst = worst.max(rel_err(analytic, numeric));
    }
    params.iter().for_each(Tensor::zero_grad);
    worst
}

/// `Σ out ⊙ r` for a fixed random `r`, which gives every output element its
/// own weight in the loss.
pub fn project(out: &Tensor, seed: u64) -> Tensor {
    let mut r = rng(seed ^ 0x5eed);
    let w = uniform(&mut r, out.shape().to_vec(), -1.0, 1.0);
    out.mul(&w).unwrap().sum()
}

/// `k` random `(tensor, element)` probes drawn from `params`.
pub fn pick_probes(params: &[Tensor], k: usize, rng: &mut Rng) -> Vec<(Tensor, usize)> {
    let total: usize = params.iter().map(Tensor::numel).sum();
    (0..k)
        .map(|_| {
            let mut flat = rng.gen_range(0..total);
            for p in params {
                if flat < p.numel() {
                    return (p.clone(), flat);
                }
                flat -= p.numel();
            }
            unreachable!()
        })
        .collect()
}

/// Per-module worst relative error of finite differences through the full
/// network with every branch active, plus the two adversarial networks.
pub fn end_to_end_errors(seed: u64, probes_per_module: usize) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let net = SegmentationNet::new(1, true, seed);
    let images = uniform(&mut r, vec![2, 1, 16, 16], 0.0, 1.0);
    let mask = binary_mask(&mut r, vec![2, 1, 16, 16]);
    let all = net.parameters();
    let seg = || seg_loss(&net.forward(&images).unwrap().logits, &mask).unwrap();

    let modules: Vec<(&'static str, Vec<Tensor>)> = vec![
        ("spatial encoder", net.spatial.parameters()),
        ("frequency encoder", net.frequency.parameters()),
        ("decoder", net.decoder.parameters()),
        ("head", net.head.parameters()),
        ("attention", net.attention.parameters()),
    ];
    let mut out = Vec::new();
    for (name, params) in modules {
        let probes = pick_probes(&params, probes_per_module, &mut r);
        out.push((name, check_probes(&all, &probes, &seg)));
    }

    let mut init = substream(seed, Stream::Init);
    let gen = Generator::new(1, &mut init);
    let disc = Discriminator::new(1, &mut init);
    // move G off its identity start so its gradients are not trivially zero
    for p in gen.parameters() {
        let noise = uniform_vec(&mut r, p.numel(), -0.3, 0.3);
        p.update(|d| d.iter_mut().zip(&noise).for_each(|(v, n)| *v += n));
    }
    let a_s = uniform(&mut r, vec![2, 1, 8, 8], 0.0, 1.0);
    let a_t = uniform(&mut r, vec![2, 1, 8, 8], 0.0, 1.0);
    let adv: Vec<Tensor> = gen.parameters().into_iter().chain(disc.parameters()).collect();
    let d_loss = || adl_losses(&disc, &gen, &a_s, &a_t, GeneratorObjective::NonSaturating).unwrap().d_loss;
    let g_loss = || adl_losses(&disc, &gen, &a_s, &a_t, GeneratorObjective::NonSaturating).unwrap().g_loss;
    let probes = pick_probes(&disc.parameters(), probes_per_module, &mut r);
    out.push(("discriminator", check_probes(&adv, &probes, &d_loss)));
    let probes = pick_probes(&gen.parameters(), probes_per_module, &mut r);
    out.push(("generator", check_probes(&adv, &probes, &g_loss)));
    out
}

/// Worst relative error per primitive op on random inputs in [−2, 2].
pub fn primitive_op_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    let mut check = |name: &'static str, inputs: Vec<Tensor>, f: &dyn Fn(&[Tensor]) -> Tensor| {
        let loss = || f(&inputs);
        out.push((name, check_all(&inputs, &loss)));
    };

    let a = uniform_param(&mut r, vec![2, 3, 4], -2.0, 2.0);
    let b = uniform_param(&mut r, vec![2, 3, 4], -2.0, 2.0);
    let row = uniform_param(&mut r, vec![3, 1], -2.0, 2.0);
    check("add", vec![a.clone(), b.clone()], &|t| project(&t[0].add(&t[1]).unwrap(), 1));
    check("sub", vec![a.clone(), b.clone()], &|t| project(&t[0].sub(&t[1]).unwrap(), 2));
    check("mul", vec![a.clone(), b.clone()], &|t| project(&t[0].mul(&t[1]).unwrap(), 3));
    check("add (broadcast)", vec![a.clone(), row.clone()], &|t| project(&t[0].add(&t[1]).unwrap(), 4));
    check("mul (broadcast)", vec![a.clone(), row.clone()], &|t| project(&t[0].mul(&t[1]).unwrap(), 5));
    check("sigmoid", vec![a.clone()], &|t| project(&t[0].sigmoid(), 6));
    check("relu", vec![a.clone()], &|t| project(&t[0].relu(), 7));
    check("exp", vec![a.clone()], &|t| project(&t[0].exp(), 8));
    let pos = uniform_param(&mut r, vec![2, 3, 4], 0.1, 2.0);
    check("log", vec![pos], &|t| project(&t[0].log(), 9));
    check("affine", vec![a.clone()], &|t| project(&t[0].affine(-1.5, 0.25), 10));
    check("clamp", vec![a.clone()], &|t| project(&t[0].clamp(-1.0, 1.0), 11));
    check("sum", vec![a.clone()], &|t| t[0].mul(&t[0]).unwrap().sum());
    check("mean", vec![a.clone()], &|t| t[0].mul(&t[0]).unwrap().mean());
    check("sum_per_sample", vec![a.clone()], &|t| project(&t[0].sum_per_sample().unwrap(), 12));
    check("reshape", vec![a.clone()], &|t| project(&t[0].reshape(vec![4, 6]).unwrap(), 13));
    let m1 = uniform_param(&mut r, vec![3, 5], -2.0, 2.0);
    let m2 = uniform_param(&mut r, vec![5, 4], -2.0, 2.0);
    check("matmul", vec![m1, m2], &|t| project(&t[0].matmul(&t[1]).unwrap(), 14));

    let x = uniform_param(&mut r, vec![2, 3, 6, 5], -2.0, 2.0);
    let y = uniform_param(&mut r, vec![2, 2, 6, 5], -2.0, 2.0);
    check("concat_channels", vec![x.clone(), y], &|t| {
        project(&Tensor::concat_channels(&[&t[0], &t[1]]).unwrap(), 15)
    });
    check("global_avg_pool", vec![x.clone()], &|t| project(&t[0].global_avg_pool().unwrap(), 16));
    let k3 = uniform_param(&mut r, vec![4, 3, 3, 3], -2.0, 2.0);
    let k1 = uniform_param(&mut r, vec![4, 3, 1, 1], -2.0, 2.0);
    let bias = uniform_param(&mut r, vec![4], -2.0, 2.0);
    check("conv2d 3x3 pad 1", vec![x.clone(), k3.clone(), bias.clone()], &|t| {
        project(&t[0].conv2d(&t[1], Some(&t[2]), 1, 1).unwrap(), 17)
    });
    check("conv2d 3x3 stride 2", vec![x.clone(), k3.clone(), bias.clone()], &|t| {
        project(&t[0].conv2d(&t[1], Some(&t[2]), 2, 1).unwrap(), 18)
    });
    check("conv2d 3x3 no pad, no bias", vec![x.clone(), k3], &|t| {
        project(&t[0].conv2d(&t[1], None, 1, 0).unwrap(), 19)
    });
    check("conv2d 1x1", vec![x.clone(), k1, bias], &|t| project(&t[0].conv2d(&t[1], Some(&t[2]), 1, 0).unwrap(), 20));
    check("bilinear up", vec![x.clone()], &|t| project(&t[0].bilinear_resample(11, 9).unwrap(), 21));
    check("bilinear down", vec![x], &|t| project(&t[0].bilinear_resample(4, 3).unwrap(), 22));
    out
}

/// Independent 2-D DFT of one `h×w` plane by the defining double sum,
/// returned as `(re, im)` pairs in natural layout.
pub fn reference_dft(plane: &[f64], h: usize, w: usize) -> Vec<(f64, f64)> {
    let tau = std::f64::consts::TAU;
    let mut out = Vec::with_capacity(h * w);
    for u in 0..h {
        for v in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let ang = -tau * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                    re += plane[y * w + x] * ang.cos();
                    im += plane[y * w + x] * ang.sin();
                }
            }
            out.push((re, im));
        }
    }
    out
}

/// Random `[C, H, W]` image in `[0, 1)`.
pub fn random_image(rng: &mut Rng, c: usize, h: usize, w: usize) -> Tensor {
    uniform(rng, vec![c, h, w], 0.0, 1.0)
}
