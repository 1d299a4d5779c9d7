//! IoU and Dice on a few hand-made masks, including the pooled score over
//! several images and the empty-versus-empty convention.

use freqalign::metrics::{binarize, iou_dice, SegMetrics};

fn square(n: usize, y0: usize, x0: usize, side: usize) -> Vec<f64> {
    (0..n * n)
        .map(|i| {
            let (y, x) = (i / n, i % n);
            (y >= y0 && y < y0 + side && x >= x0 && x < x0 + side) as u8 as f64
        })
        .collect()
}

fn show(name: &str, m: &SegMetrics) {
    println!("{name:<24} tp {:3} fp {:3} fn {:3}   IoU {:.4}  Dice {:.4}", m.tp, m.fp, m.fn_, m.iou, m.dice);
}

fn main() -> freqalign::Result<()> {
    let gt = square(8, 2, 2, 4);
    let shifted = square(8, 2, 3, 4);
    let probs: Vec<f64> = shifted.iter().map(|&v| if v > 0.0 { 0.7 } else { 0.2 }).collect();
    let pred = binarize(&probs, 0.5)?;

    let a = iou_dice(&gt, &gt)?;
    let b = iou_dice(&pred, &gt)?;
    let c = iou_dice(&square(8, 0, 0, 2), &square(8, 6, 6, 2))?;
    let empty = iou_dice(&[0.0; 64], &[0.0; 64])?;
    show("identical", &a);
    show("shifted by one column", &b);
    show("disjoint", &c);
    show("both empty", &empty);
    show("pooled (shift+disjoint)", &b.merge(&c));
    println!("dice = 2·iou/(1+iou): {:.12} vs {:.12}", b.dice, 2.0 * b.iou / (1.0 + b.iou));
    Ok(())
}
