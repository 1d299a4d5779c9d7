mod common;

use common::*;
use freqalign::tensor::Tensor;

#[test]
fn every_primitive_op_matches_central_differences() {
    for seed in 0..3 {
        for (name, err) in primitive_op_errors(seed) {
            assert!(err < 1e-4, "{name} (seed {seed}): relative error {err:e}");
        }
    }
}

#[test]
fn full_network_matches_central_differences() {
    for (name, err) in end_to_end_errors(11, 6) {
        assert!(err < 1e-3, "{name}: relative error {err:e}");
    }
}

#[test]
fn broadcast_gradient_has_parameter_shape() {
    let mut r = rng(3);
    let x = uniform_param(&mut r, vec![2, 3, 4], -2.0, 2.0);
    for shape in [vec![4], vec![3, 1], vec![1, 3, 4], vec![2, 1, 1], vec![]] {
        let n = shape.iter().product();
        let b = Tensor::param(shape.clone(), uniform_vec(&mut r, n, -2.0, 2.0)).unwrap();
        b.zero_grad();
        x.mul(&b).unwrap().sum().backward().unwrap();
        assert_eq!(b.grad().unwrap().len(), n, "shape {shape:?}");
        // oracle: d/db Σ x·b sums x over every broadcast axis
        let xs = x.to_vec();
        let mut expect = vec![0.0; n];
        let rank = 3;
        let off = rank - shape.len();
        for (flat, v) in xs.iter().enumerate() {
            let idx = [flat / 12, (flat / 4) % 3, flat % 4];
            let mut bi = 0;
            for (d, &ext) in shape.iter().enumerate() {
                bi = bi * ext + if ext == 1 { 0 } else { idx[d + off] };
            }
            expect[bi] += v;
        }
        for (g, e) in b.grad().unwrap().iter().zip(&expect) {
            assert!((g - e).abs() < 1e-12);
        }
    }
}

#[test]
fn shared_subexpressions_accumulate() {
    let x = Tensor::param(vec![3], vec![-1.5, 0.25, 2.0]).unwrap();
    let xx = x.mul(&x).unwrap();
    let f = xx.add(&xx).unwrap().sum();
    f.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![-6.0, 1.0, 8.0]);
}

#[test]
fn gradients_add_up_until_cleared() {
    let x = Tensor::param(vec![2], vec![1.0, 2.0]).unwrap();
    x.scale(3.0).sum().backward().unwrap();
    x.scale(3.0).sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![6.0, 6.0]);
    x.zero_grad();
    assert!(x.grad().is_none());
}
