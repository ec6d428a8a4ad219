use std::collections::BTreeMap;

use super::MetricsError;

/// `0.50, 0.55, ..., 0.95`.
pub const IOU_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// Sorted pixel indices covered by an instance.
pub type Mask = Vec<u32>;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthInstance {
    pub mask: Mask,
    pub class_id: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub mask: Mask,
    pub class_id: u16,
    pub score: f64,
}

fn mask_iou(a: &Mask, b: &Mask) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ClassTally {
    gt: usize,
    /// Per threshold: `(score, true positive)` of every detection.
    hits: Vec<Vec<(f64, bool)>>,
}

/// Score-ranked detection outcomes per class, mergeable across images.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ApAccumulator {
    classes: BTreeMap<u16, ClassTally>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApReport {
    /// Classes with at least one ground-truth instance.
    pub per_class: Vec<(u16, f64)>,
    pub mean: f64,
}

impl ApAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    fn tally(&mut self, class: u16) -> &mut ClassTally {
        self.classes.entry(class).or_insert_with(|| ClassTally {
            gt: 0,
            hits: vec![vec![]; IOU_THRESHOLDS.len()],
        })
    }

    /// Greedy matching per threshold: detections in descending score take the
    /// unmatched same-class ground truth of highest IoU, when at least the threshold.
    pub fn add_image(&mut self, gt: &[GroundTruthInstance], detections: &[Detection]) -> Result<(), MetricsError> {
        if let Some(d) = detections.iter().find(|d| !d.score.is_finite()) {
            return Err(MetricsError::NotNormalized(d.score));
        }
        let mut classes: Vec<u16> = gt.iter().map(|g| g.class_id).chain(detections.iter().map(|d| d.class_id)).collect();
        classes.sort_unstable();
        classes.dedup();
        for class in classes {
            let gts: Vec<&GroundTruthInstance> = gt.iter().filter(|g| g.class_id == class).collect();
            let mut dets: Vec<&Detection> = detections.iter().filter(|d| d.class_id == class).collect();
            dets.sort_by(|a, b| b.score.total_cmp(&a.score));
            let iou: Vec<Vec<f64>> = dets.iter().map(|d| gts.iter().map(|g| mask_iou(&d.mask, &g.mask)).collect()).collect();
            let tally = self.tally(class);
            tally.gt += gts.len();
            for (t, &threshold) in IOU_THRESHOLDS.iter().enumerate() {
                let mut taken = vec![false; gts.len()];
                for (k, d) in dets.iter().enumerate() {
                    let best = (0..gts.len())
                        .filter(|&j| !taken[j] && iou[k][j] >= threshold)
                        .max_by(|&a, &b| iou[k][a].total_cmp(&iou[k][b]).then(b.cmp(&a)));
                    if let Some(j) = best {
                        taken[j] = true;
                    }
                    tally.hits[t].push((d.score, best.is_some()));
                }
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ApAccumulator) {
        for (&c, theirs) in &other.classes {
            let mine = self.tally(c);
            mine.gt += theirs.gt;
            for (m, t) in mine.hits.iter_mut().zip(&theirs.hits) {
                m.extend_from_slice(t);
            }
        }
    }

    pub fn report(&self) -> ApReport {
        let per_class: Vec<(u16, f64)> = self
            .classes
            .iter()
            .filter(|(_, t)| t.gt > 0)
            .map(|(&c, t)| {
                let ap = t.hits.iter().map(|h| average_precision(h, t.gt)).sum::<f64>() / IOU_THRESHOLDS.len() as f64;
                (c, ap)
            })
            .collect();
        let mean = if per_class.is_empty() {
            0.0
        } else {
            per_class.iter().map(|(_, v)| v).sum::<f64>() / per_class.len() as f64
        };
        ApReport { per_class, mean }
    }
}

/// Area under the interpolated precision-recall curve: precision is
/// replaced by its running maximum from the right and summed over recall steps.
fn average_precision(hits: &[(f64, bool)], gt: usize) -> f64 {
    let mut ranked = hits.to_vec();
    // equal scores list true positives first, so the result ignores input order
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = Vec::with_capacity(ranked.len());
    for (_, hit) in ranked {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        points.push((tp as f64 / gt as f64, tp as f64 / (tp + fp) as f64));
    }
    for k in (0..points.len().saturating_sub(1)).rev() {
        points[k].1 = points[k].1.max(points[k + 1].1);
    }
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (r, p) in points {
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    ap
}

/// AP per class averaged over the ten IoU thresholds, over a stream of
/// `(ground truth, detections)` images.
pub fn instance_ap<'a>(
    images: impl IntoIterator<Item = (&'a [GroundTruthInstance], &'a [Detection])>,
) -> Result<ApReport, MetricsError> {
    let mut acc = ApAccumulator::new();
    for (gt, det) in images {
        acc.add_image(gt, det)?;
    }
    Ok(acc.report())
}
