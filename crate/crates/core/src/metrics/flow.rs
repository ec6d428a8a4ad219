use crate::correspondence::{FlowField, FlowStatus};

use super::MetricsError;

pub const WAUC_STEPS: usize = 100;
pub const WAUC_STEP_PX: f64 = 0.05;

fn threshold(k: usize) -> f64 {
    (k + 1) as f64 * WAUC_STEP_PX
}

/// Inlier counts per threshold over ground-truth-valid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct WaucAccumulator {
    pub pixels: u64,
    pub inliers: Vec<u64>,
}

impl Default for WaucAccumulator {
    fn default() -> Self {
        WaucAccumulator {
            pixels: 0,
            inliers: vec![0; WAUC_STEPS],
        }
    }
}

impl WaucAccumulator {
    pub fn add(&mut self, pred: &FlowField, gt: &FlowField) -> Result<(), MetricsError> {
        if pred.len() != gt.len() || pred.width != gt.width {
            return Err(MetricsError::DimensionMismatch(pred.len(), gt.len()));
        }
        for i in (0..gt.len()).filter(|&i| gt.status[i] == FlowStatus::Valid) {
            let e = pred.endpoint_error(gt, i);
            self.pixels += 1;
            // thresholds are ascending, so inliers form a suffix
            let first = (0..WAUC_STEPS).position(|k| e <= threshold(k));
            if let Some(first) = first {
                for n in &mut self.inliers[first..] {
                    *n += 1;
                }
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &WaucAccumulator) {
        self.pixels += other.pixels;
        for (a, b) in self.inliers.iter_mut().zip(&other.inliers) {
            *a += b;
        }
    }

    /// Percentage in `[0, 100]`: inlier rates at thresholds `0.05 k` px,
    /// `k = 1..100`, averaged with weights `1 / t`.
    pub fn value(&self) -> Result<f64, MetricsError> {
        if self.pixels == 0 {
            return Err(MetricsError::NoValidPixels);
        }
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..WAUC_STEPS {
            let w = 1.0 / threshold(k);
            num += w * self.inliers[k] as f64 / self.pixels as f64;
            den += w;
        }
        Ok(100.0 * num / den)
    }
}

pub fn wauc_flow(pred: &FlowField, gt: &FlowField) -> Result<f64, MetricsError> {
    let mut acc = WaucAccumulator::default();
    acc.add(pred, gt)?;
    acc.value()
}
