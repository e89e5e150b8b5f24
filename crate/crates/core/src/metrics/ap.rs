//! Average precision of cell boxes with greedy matching and 101-point
//! interpolated precision.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{iou, BBox};

/// Predicted boxes of one image with optional confidences.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSet {
    boxes: Vec<BBox>,
    scores: Option<Vec<f64>>,
}

impl DetectionSet {
    /// Boxes without confidences; every box scores 1.0.
    pub fn unscored(boxes: Vec<BBox>) -> Self {
        DetectionSet {
            boxes,
            scores: None,
        }
    }

    /// `None` when the score list does not align with the boxes.
    pub fn scored(boxes: Vec<BBox>, scores: Vec<f64>) -> Option<Self> {
        (boxes.len() == scores.len()).then_some(DetectionSet {
            boxes,
            scores: Some(scores),
        })
    }

    pub fn boxes(&self) -> &[BBox] {
        &self.boxes
    }

    pub fn score(&self, i: usize) -> f64 {
        self.scores.as_ref().map_or(1.0, |s| s[i])
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// AP at IoU 0.5.
pub fn ap50(preds: &[DetectionSet], gts: &[Vec<BBox>]) -> f64 {
    average_precision(preds, gts, 0.5)
}

/// Detection AP at the given IoU threshold.
///
/// Predictions from all images are ranked by score (ties by image, then by
/// index). Each is matched to the highest-IoU unmatched ground truth of its
/// image with IoU at least `threshold`. AP is the mean interpolated precision
/// at recall 0.00, 0.01, ..., 1.00. With no ground truth at all the result is
/// 1.0 if there are also no predictions and 0.0 otherwise.
pub fn average_precision(preds: &[DetectionSet], gts: &[Vec<BBox>], threshold: f64) -> f64 {
    let empty = Vec::new();
    let n_images = preds.len().max(gts.len());
    let gt_of = |img: usize| gts.get(img).unwrap_or(&empty);
    let n_gt: usize = gts.iter().map(Vec::len).sum();

    let mut order: Vec<(f64, usize, usize)> = preds
        .iter()
        .enumerate()
        .flat_map(|(img, set)| (0..set.len()).map(move |i| (set.score(i), img, i)))
        .collect();
    if n_gt == 0 {
        return if order.is_empty() { 1.0 } else { 0.0 };
    }
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut matched: Vec<Vec<bool>> = (0..n_images).map(|img| vec![false; gt_of(img).len()]).collect();
    let mut precision = Vec::with_capacity(order.len());
    let mut recall = Vec::with_capacity(order.len());
    let mut tp = 0usize;
    for (rank, &(_, img, i)) in order.iter().enumerate() {
        let pred = &preds[img].boxes[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gt_of(img).iter().enumerate() {
            if matched[img][j] {
                continue;
            }
            let v = iou(pred, g);
            if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        if let Some((j, _)) = best {
            matched[img][j] = true;
            tp += 1;
        }
        precision.push(tp as f64 / (rank + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    // precision envelope, non-increasing in rank
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut sum = 0.0;
    for t in 0..=100 {
        let r = t as f64 / 100.0;
        let k = recall.partition_point(|&x| x < r);
        if k < precision.len() {
            sum += precision[k];
        }
    }
    sum / 101.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2)
    }

    #[test]
    fn perfect_predictions() {
        let gts = vec![vec![b(0.0, 0.0, 0.5, 0.5), b(0.5, 0.5, 1.0, 1.0)], vec![b(0.1, 0.1, 0.2, 0.2)]];
        let preds: Vec<DetectionSet> = gts.iter().cloned().map(DetectionSet::unscored).collect();
        assert_eq!(ap50(&preds, &gts), 1.0);
    }

    #[test]
    fn no_predictions() {
        let gts = vec![vec![b(0.0, 0.0, 0.5, 0.5)]];
        assert_eq!(ap50(&[DetectionSet::default()], &gts), 0.0);
        assert_eq!(ap50(&[], &gts), 0.0);
    }

    #[test]
    fn one_hit_one_miss() {
        // gt A matched at IoU 0.6 by the top-ranked prediction, the second misses
        let gts = vec![vec![b(0.0, 0.0, 0.5, 1.0), b(0.5, 0.0, 1.0, 1.0)]];
        let hit = b(0.0, 0.0, 0.3, 1.0); // iou = 0.3/0.5 = 0.6
        let miss = b(0.0, 0.0, 0.1, 0.1);
        assert!((iou(&hit, &gts[0][0]) - 0.6).abs() < 1e-12);
        let preds = vec![DetectionSet::scored(vec![hit, miss], vec![0.9, 0.8]).unwrap()];
        // recall 0.5 reached at rank 1 with precision 1; recall never reaches above 0.5
        assert!((ap50(&preds, &gts) - 51.0 / 101.0).abs() < 1e-12);
        let swapped = vec![DetectionSet::scored(vec![hit, miss], vec![0.8, 0.9]).unwrap()];
        assert!((ap50(&swapped, &gts) - 0.5 * 51.0 / 101.0).abs() < 1e-12);
    }

    #[test]
    fn empty_ground_truth() {
        assert_eq!(ap50(&[DetectionSet::default()], &[vec![]]), 1.0);
        assert_eq!(ap50(&[DetectionSet::unscored(vec![BBox::UNIT])], &[vec![]]), 0.0);
    }

    #[test]
    fn scores_must_align() {
        assert!(DetectionSet::scored(vec![BBox::UNIT], vec![]).is_none());
    }
}
