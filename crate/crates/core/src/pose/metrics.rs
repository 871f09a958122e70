use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::PoseError;
use crate::geometry::RigidTransform;
use crate::scalar::Real;

/// Chamfer threshold for part accuracy, in meters.
pub const DEFAULT_PA_THRESHOLD: f64 = 0.01;

/// Per-part averaged pose-quality metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseMetrics {
    /// Mean geodesic rotation distance, radians.
    pub gd: f64,
    /// Mean over parts of the per-part RMS point error, meters.
    pub rmse: f64,
    /// Mean symmetric Chamfer distance, meters.
    pub cd: f64,
    /// Fraction of parts with Chamfer distance below the threshold.
    pub pa: f64,
}

/// Compares predicted and ground-truth part poses using each part's sampled
/// attachment-point cloud (in the part frame).
///
/// Chamfer distance is the symmetric average of mean nearest-neighbour
/// Euclidean (not squared) distances.
pub fn pose_metrics<T: Real>(
    predicted: &[RigidTransform<T>],
    truth: &[RigidTransform<T>],
    clouds: &[Vec<Vector3<T>>],
    pa_threshold: T,
) -> Result<PoseMetrics, PoseError> {
    if predicted.len() != truth.len() || truth.len() != clouds.len() || clouds.is_empty() {
        return Err(PoseError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
            clouds: clouds.len(),
        });
    }
    if let Some((index, cloud)) = clouds.iter().enumerate().find(|(_, c)| c.len() < 3) {
        return Err(PoseError::SparseCloud {
            index,
            len: cloud.len(),
        });
    }

    let parts = T::from_usize(clouds.len()).expect("part count fits the scalar type");
    let mut gd = T::zero();
    let mut rmse = T::zero();
    let mut cd = T::zero();
    let mut accurate = 0usize;
    for ((p, t), cloud) in predicted.iter().zip(truth).zip(clouds) {
        gd += p.rotation_distance(t);
        let moved_p: Vec<_> = cloud.iter().map(|x| p.apply_point(x)).collect();
        let moved_t: Vec<_> = cloud.iter().map(|x| t.apply_point(x)).collect();
        let n = T::from_usize(cloud.len()).expect("cloud size fits the scalar type");
        let sq = moved_p
            .iter()
            .zip(&moved_t)
            .fold(T::zero(), |acc, (a, b)| acc + (a - b).norm_squared());
        rmse += (sq / n).sqrt();
        let chamfer = chamfer_distance(&moved_p, &moved_t);
        if chamfer < pa_threshold {
            accurate += 1;
        }
        cd += chamfer;
    }
    Ok(PoseMetrics {
        gd: (gd / parts).to_f64_lossy(),
        rmse: (rmse / parts).to_f64_lossy(),
        cd: (cd / parts).to_f64_lossy(),
        pa: accurate as f64 / clouds.len() as f64,
    })
}

fn chamfer_distance<T: Real>(a: &[Vector3<T>], b: &[Vector3<T>]) -> T {
    let one_way = |from: &[Vector3<T>], to: &[Vector3<T>]| {
        let total = from.iter().fold(T::zero(), |acc, x| {
            let nearest = to
                .iter()
                .map(|y| (x - y).norm())
                .fold(T::max_value().unwrap_or_else(T::one), |m, d| m.min(d));
            acc + nearest
        });
        total / T::from_usize(from.len()).expect("cloud size fits the scalar type")
    };
    (one_way(a, b) + one_way(b, a)) / T::lit(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn square_cloud() -> Vec<Vector3<f64>> {
        vec![
            Vector3::new(0.1, 0.0, 0.0),
            Vector3::new(0.0, 0.1, 0.0),
            Vector3::new(-0.1, 0.0, 0.0),
            Vector3::new(0.0, -0.1, 0.05),
        ]
    }

    #[test]
    fn exact_prediction_scores_perfectly() {
        let t = vec![RigidTransform::identity(), RigidTransform::from_translation(Vector3::new(0.2, 0.0, 0.0))];
        let m = pose_metrics(&t, &t, &[square_cloud(), square_cloud()], DEFAULT_PA_THRESHOLD).unwrap();
        assert_eq!(m, PoseMetrics { gd: 0.0, rmse: 0.0, cd: 0.0, pa: 1.0 });
    }

    #[test]
    fn quarter_turn_on_one_part_halves_accuracy() {
        let truth = vec![RigidTransform::identity(), RigidTransform::identity()];
        let rotated = RigidTransform::from_axis_angle(&Vector3::z(), FRAC_PI_2, Vector3::zeros());
        let pred = vec![rotated, RigidTransform::identity()];
        // Off-plane point of the square cloud moves by 0.1·√2 under the turn.
        let m = pose_metrics(&pred, &truth, &[square_cloud(), square_cloud()], 1e-6).unwrap();
        assert_relative_eq!(m.gd, FRAC_PI_4, epsilon = 1e-12);
        assert_eq!(m.pa, 0.5);
        assert!(m.rmse > 0.0 && m.cd > 0.0);
    }

    #[test]
    fn rmse_matches_hand_value_for_translation() {
        let truth = vec![RigidTransform::identity()];
        let pred = vec![RigidTransform::from_translation(Vector3::new(0.003, 0.004, 0.0))];
        let m = pose_metrics(&pred, &truth, &[square_cloud()], DEFAULT_PA_THRESHOLD).unwrap();
        assert_relative_eq!(m.rmse, 0.005, epsilon = 1e-15);
        assert_eq!(m.gd, 0.0);
    }

    #[test]
    fn length_mismatch_and_sparse_clouds() {
        let one = vec![RigidTransform::<f64>::identity()];
        assert!(matches!(
            pose_metrics(&one, &[], &[square_cloud()], 0.01),
            Err(PoseError::LengthMismatch { .. })
        ));
        assert!(matches!(
            pose_metrics(&one, &one, &[vec![Vector3::zeros(); 2]], 0.01),
            Err(PoseError::SparseCloud { index: 0, len: 2 })
        ));
    }
}
