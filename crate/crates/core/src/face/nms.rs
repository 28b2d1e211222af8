use super::{BBox, FaceObservation};

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Greedy non-maximum suppression. Candidates are visited by descending score
/// (input order among equal scores); a candidate survives unless it overlaps
/// an earlier survivor by more than `iou_threshold`.
pub fn nms(candidates: &[FaceObservation], iou_threshold: f64) -> Vec<FaceObservation> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| candidates[j].score.total_cmp(&candidates[i].score).then(i.cmp(&j)));
    let mut kept: Vec<FaceObservation> = Vec::new();
    for i in order {
        let c = &candidates[i];
        if kept.iter().all(|k| iou(&k.bbox, &c.bbox) <= iou_threshold) {
            kept.push(c.clone());
        }
    }
    kept
}
