use crate::math::{self, Mat4};

use super::MetricsError;

/// Segment lengths in world units. Scripted trajectories are a few units long.
pub const DEFAULT_SEGMENT_LENGTHS: [f64; 3] = [1.0, 2.0, 4.0];

/// Slack on segment-length comparisons so evenly spaced frames that land
/// exactly on a length are not shifted by rounding.
const LENGTH_SLACK: f64 = 1e-9;

/// Camera-to-world poses aligned by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPair {
    pub predicted: Vec<Mat4>,
    pub ground_truth: Vec<Mat4>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdometryReport {
    /// `(length, mean rotation error in deg/unit, segment count)` for every
    /// length with at least one segment.
    pub per_length: Vec<(f64, f64, usize)>,
    /// Mean over all segments, deg per unit length.
    pub rotation: f64,
    /// Extra output: mean relative translation error over all segments, percent.
    pub translation_percent: f64,
}

impl TrajectoryPair {
    /// Cumulative ground-truth path length per frame.
    pub fn path_lengths(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.ground_truth.len());
        let mut acc = 0.0;
        for (k, p) in self.ground_truth.iter().enumerate() {
            if k > 0 {
                acc += (math::translation_part(p) - math::translation_part(&self.ground_truth[k - 1])).norm();
            }
            out.push(acc);
        }
        out
    }
}

/// Relative-pose rotation error over every start frame and segment length,
/// divided by the nominal length.
pub fn rotation_error(traj: &TrajectoryPair, lengths: &[f64]) -> Result<OdometryReport, MetricsError> {
    let n = traj.ground_truth.len();
    if traj.predicted.len() != n {
        return Err(MetricsError::DimensionMismatch(traj.predicted.len(), n));
    }
    let dist = traj.path_lengths();
    let (mut rot_sum, mut trans_sum, mut count) = (0.0, 0.0, 0usize);
    let mut per_length = Vec::new();
    for &len in lengths {
        let (mut sum, mut k) = (0.0, 0usize);
        for i in 0..n {
            let Some(j) = (i..n).find(|&j| dist[j] >= dist[i] + len - LENGTH_SLACK) else {
                break;
            };
            let gt_rel = math::rigid_inverse(&traj.ground_truth[i]) * traj.ground_truth[j];
            let pred_rel = math::rigid_inverse(&traj.predicted[i]) * traj.predicted[j];
            let delta = math::rigid_inverse(&gt_rel) * pred_rel;
            let r = math::rotation_angle(&math::rotation_part(&delta)).to_degrees() / len;
            sum += r;
            rot_sum += r;
            trans_sum += 100.0 * math::translation_part(&delta).norm() / len;
            k += 1;
        }
        if k > 0 {
            per_length.push((len, sum / k as f64, k));
            count += k;
        }
    }
    if count == 0 {
        return Err(MetricsError::TrajectoryTooShort);
    }
    Ok(OdometryReport {
        per_length,
        rotation: rot_sum / count as f64,
        translation_percent: trans_sum / count as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;

    fn line(n: usize, step: f64) -> Vec<Mat4> {
        (0..n).map(|k| math::translation(Vec3::new(0.0, 0.0, -(k as f64) * step))).collect()
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let gt = line(20, 0.25);
        let r = rotation_error(
            &TrajectoryPair {
                predicted: gt.clone(),
                ground_truth: gt,
            },
            &DEFAULT_SEGMENT_LENGTHS,
        )
        .unwrap();
        assert_eq!(r.rotation, 0.0);
        assert_eq!(r.translation_percent, 0.0);
        assert_eq!(r.per_length.len(), 3);
    }

    #[test]
    fn yaw_bias_of_one_degree_per_unit() {
        let step = 0.25;
        let gt = line(33, step);
        let predicted = gt
            .iter()
            .enumerate()
            .map(|(k, p)| p * math::rigid_yaw_pitch(Vec3::zeros(), k as f64 * step, 0.0))
            .collect();
        let r = rotation_error(
            &TrajectoryPair {
                predicted,
                ground_truth: gt,
            },
            &DEFAULT_SEGMENT_LENGTHS,
        )
        .unwrap();
        assert!((r.rotation - 1.0).abs() < 1e-6, "{}", r.rotation);
        for (_, e, _) in r.per_length {
            assert!((e - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn invariant_to_a_global_rigid_transform() {
        let gt = line(20, 0.25);
        let predicted: Vec<Mat4> = gt
            .iter()
            .enumerate()
            .map(|(k, p)| p * math::rigid_yaw_pitch(Vec3::new(0.01 * k as f64, 0.0, 0.0), 0.3 * k as f64, 0.1))
            .collect();
        let pair = TrajectoryPair {
            predicted: predicted.clone(),
            ground_truth: gt.clone(),
        };
        let g = math::rigid_yaw_pitch(Vec3::new(3.0, -1.0, 2.0), 70.0, 20.0);
        let moved = TrajectoryPair {
            predicted: predicted.iter().map(|p| g * p).collect(),
            ground_truth: gt.iter().map(|p| g * p).collect(),
        };
        let a = rotation_error(&pair, &DEFAULT_SEGMENT_LENGTHS).unwrap();
        let b = rotation_error(&moved, &DEFAULT_SEGMENT_LENGTHS).unwrap();
        assert!((a.rotation - b.rotation).abs() < 1e-9, "{} {}", a.rotation, b.rotation);
    }

    #[test]
    fn too_short() {
        let gt = line(3, 0.1);
        let pair = TrajectoryPair {
            predicted: gt.clone(),
            ground_truth: gt,
        };
        assert_eq!(rotation_error(&pair, &[1.0]), Err(MetricsError::TrajectoryTooShort));
    }
}
