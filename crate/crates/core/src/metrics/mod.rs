//! Benchmark measures: segmentation IoU, instance AP, flow WAUC, odometry
//! drift and distribution divergence.

mod ap;
mod flow;
mod odometry;

use std::collections::BTreeMap;

use thiserror::Error;

pub use ap::{instance_ap, ApAccumulator, ApReport, Detection, GroundTruthInstance, Mask, IOU_THRESHOLDS};
pub use flow::{wauc_flow, WaucAccumulator, WAUC_STEPS, WAUC_STEP_PX};
pub use odometry::{rotation_error, OdometryReport, TrajectoryPair, DEFAULT_SEGMENT_LENGTHS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("no valid pixels to evaluate")]
    NoValidPixels,
    #[error("trajectory too short for any segment length")]
    TrajectoryTooShort,
    #[error("distribution does not sum to 1 (sum {0})")]
    NotNormalized(f64),
    #[error("distribution has negative mass")]
    NegativeMass,
}

/// Per-class pixel intersections and unions over a stream of label images.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfusionAccumulator {
    pub classes: Vec<u16>,
    pub intersection: BTreeMap<u16, u64>,
    pub union: BTreeMap<u16, u64>,
    pub gt_pixels: BTreeMap<u16, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IouReport {
    /// Classes with a non-empty union only.
    pub per_class: Vec<(u16, f64)>,
    pub mean: f64,
}

impl ConfusionAccumulator {
    pub fn new(classes: &[u16]) -> Self {
        let zero = || classes.iter().map(|&c| (c, 0)).collect();
        ConfusionAccumulator {
            classes: classes.to_vec(),
            intersection: zero(),
            union: zero(),
            gt_pixels: zero(),
        }
    }

    pub fn add(&mut self, pred: &[u16], gt: &[u16]) -> Result<(), MetricsError> {
        if pred.len() != gt.len() {
            return Err(MetricsError::DimensionMismatch(pred.len(), gt.len()));
        }
        for (&p, &g) in pred.iter().zip(gt) {
            if p == g {
                if let Some(n) = self.intersection.get_mut(&p) {
                    *n += 1;
                    *self.union.get_mut(&p).unwrap() += 1;
                }
            } else {
                for c in [p, g] {
                    if let Some(n) = self.union.get_mut(&c) {
                        *n += 1;
                    }
                }
            }
            if let Some(n) = self.gt_pixels.get_mut(&g) {
                *n += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionAccumulator) {
        for (map, theirs) in [
            (&mut self.intersection, &other.intersection),
            (&mut self.union, &other.union),
            (&mut self.gt_pixels, &other.gt_pixels),
        ] {
            for (c, n) in theirs {
                *map.entry(*c).or_default() += n;
            }
        }
        for c in &other.classes {
            if !self.classes.contains(c) {
                self.classes.push(*c);
            }
        }
    }

    pub fn report(&self) -> IouReport {
        let per_class: Vec<(u16, f64)> = self
            .union
            .iter()
            .filter(|(_, &u)| u > 0)
            .map(|(&c, &u)| (c, self.intersection[&c] as f64 / u as f64))
            .collect();
        let mean = if per_class.is_empty() {
            0.0
        } else {
            per_class.iter().map(|(_, v)| v).sum::<f64>() / per_class.len() as f64
        };
        IouReport { per_class, mean }
    }
}

/// IoU per class over paired label images; classes never predicted nor
/// present are left out of the mean.
pub fn mean_iou(pred: &[Vec<u16>], gt: &[Vec<u16>], classes: &[u16]) -> Result<IouReport, MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::DimensionMismatch(pred.len(), gt.len()));
    }
    let mut acc = ConfusionAccumulator::new(classes);
    for (p, g) in pred.iter().zip(gt) {
        acc.add(p, g)?;
    }
    Ok(acc.report())
}

fn check_distribution(p: &[f64]) -> Result<(), MetricsError> {
    if p.iter().any(|&x| x < 0.0 || x.is_nan()) {
        return Err(MetricsError::NegativeMass);
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(MetricsError::NotNormalized(sum));
    }
    Ok(())
}

/// Jensen-Shannon divergence in bits.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64, MetricsError> {
    if p.len() != q.len() {
        return Err(MetricsError::DimensionMismatch(p.len(), q.len()));
    }
    check_distribution(p)?;
    check_distribution(q)?;
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        // summing the two terms in a fixed order keeps jsd(p, q) == jsd(q, p)
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        let term = |v: f64| if v > 0.0 { v * (v / m).log2() } else { 0.0 };
        total += term(x) + term(y);
    }
    Ok((0.5 * total).clamp(0.0, 1.0))
}
