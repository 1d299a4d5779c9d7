mod common;

use common::*;
use freqalign::config::RunConfig;
use freqalign::network::{AblationFlags, SegmentationNet};
use freqalign::nn::Conv2d;
use freqalign::tensor::Tensor;
use freqalign::train::{Trainer, TrainData};

fn conv(layer: &Conv2d, x: &Tensor) -> Tensor {
    x.conv2d(&layer.weight, Some(&layer.bias), layer.stride, layer.padding).unwrap()
}

/// Plain encoder-decoder written out op by op from the network's weights.
fn reference_forward(net: &SegmentationNet, x: &Tensor) -> Tensor {
    let mut skips = Vec::new();
    let mut h = x.clone();
    for stage in &net.spatial.stages {
        h = conv(stage, &h).relu();
        skips.push(h.clone());
    }
    let mut y = conv(&net.decoder.lateral, &skips[3]).relu();
    for (k, block) in net.decoder.blocks.iter().enumerate() {
        let skip = &skips[2 - k];
        let up = y.bilinear_resample(skip.shape()[2], skip.shape()[3]).unwrap();
        y = conv(block, &Tensor::concat_channels(&[&up, skip]).unwrap());
        if k < 2 {
            y = y.relu();
        }
    }
    let y = y.bilinear_resample(x.shape()[2], x.shape()[3]).unwrap();
    conv(&net.head, &y)
}

#[test]
fn spatial_only_network_equals_reference_bitwise() {
    for (seed, c) in [(0, 1), (5, 3)] {
        let net = SegmentationNet::new(c, false, seed);
        let x = uniform(&mut rng(seed), vec![2, c, 32, 48], 0.0, 1.0);
        let out = net.forward(&x).unwrap();
        let reference = reference_forward(&net, &x);
        let bits = |t: &Tensor| t.to_vec().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&out.logits), bits(&reference));
        assert!(out.attention.data().iter().all(|&a| a == 1.0));
    }
}

#[test]
fn spatial_weights_do_not_depend_on_the_flags() {
    let a = SegmentationNet::new(1, false, 2);
    let b = SegmentationNet::new(1, true, 2);
    for (p, q) in a.spatial.parameters().iter().zip(b.spatial.parameters()) {
        assert_eq!(p.to_vec(), q.to_vec());
    }
}

fn tiny(flags: &str) -> RunConfig {
    let mut cfg = RunConfig { flags: AblationFlags::parse(flags).unwrap(), ..RunConfig::default() };
    for (k, v) in [
        ("image_size", "16"),
        ("synth_size", "16"),
        ("synth_n_source", "6"),
        ("synth_n_target", "4"),
        ("synth_n_val", "3"),
        ("batch_size", "4"),
        ("epochs", "2"),
        ("seed", "8"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg
}

#[test]
fn same_seed_gives_identical_epoch_reports() {
    for flags in ["none", "all"] {
        let cfg = tiny(flags);
        let data = TrainData::from_config(&cfg).unwrap();
        let rows = |cfg: &RunConfig| {
            let mut t = Trainer::new(cfg.clone(), data.channels()).unwrap();
            (0..2).map(|_| t.train_epoch(&data).unwrap().csv_row()).collect::<Vec<_>>()
        };
        assert_eq!(rows(&cfg), rows(&cfg), "{flags}");
    }
}

#[test]
fn training_moves_only_the_enabled_modules() {
    use freqalign::nn::checksum;
    let cfg = tiny("stff");
    let data = TrainData::from_config(&cfg).unwrap();
    let mut t = Trainer::new(cfg, data.channels()).unwrap();
    let frozen = |t: &Trainer| {
        (
            checksum(&t.net.frequency.parameters()),
            checksum(&t.net.attention.parameters()),
            checksum(&t.adversarial.generator.parameters()),
            checksum(&t.adversarial.discriminator.parameters()),
        )
    };
    let before = frozen(&t);
    let spatial = checksum(&t.net.spatial.parameters());
    t.train_epoch(&data).unwrap();
    assert_eq!(frozen(&t), before);
    assert_ne!(checksum(&t.net.spatial.parameters()), spatial);
}
