//! Overlap metrics for binary segmentation.

use crate::error::{Error, Result};

/// IoU and Dice plus the pixel counts they were computed from.
///
/// When prediction and ground truth are both empty the overlap is perfect by
/// convention: `iou = dice = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SegMetrics {
    pub iou: f64,
    pub dice: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl SegMetrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        if tp + fp + fn_ == 0 {
            return SegMetrics { iou: 1.0, dice: 1.0, tp, fp, fn_ };
        }
        let (t, p, n) = (tp as f64, fp as f64, fn_ as f64);
        SegMetrics {
            iou: t / (t + p + n),
            dice: 2.0 * t / (2.0 * t + p + n),
            tp,
            fp,
            fn_,
        }
    }

    /// Pool the counts of several evaluations.
    pub fn merge(&self, other: &SegMetrics) -> SegMetrics {
        SegMetrics::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_)
    }
}

fn is_binary(v: f64) -> bool {
    v == 0.0 || v == 1.0
}

/// IoU/Dice between two binary masks of identical length.
pub fn iou_dice(pred: &[f64], gt: &[f64]) -> Result<SegMetrics> {
    if pred.len() != gt.len() {
        return Err(Error::shape(format!(
            "prediction has {} pixels, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&p, &g) in pred.iter().zip(gt) {
        if !is_binary(p) || !is_binary(g) {
            return Err(Error::contract(format!("metric inputs must be binary, saw {p} / {g}")));
        }
        match (p == 1.0, g == 1.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(SegMetrics::from_counts(tp, fp, fn_))
}

/// `p ≥ threshold → 1`, else `0`. Ties go to foreground.
pub fn binarize(probabilities: &[f64], threshold: f64) -> Result<Vec<f64>> {
    probabilities
        .iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                Err(Error::contract(format!("probability {p} outside [0, 1]")))
            } else {
                Ok(if p >= threshold { 1.0 } else { 0.0 })
            }
        })
        .collect()
}
