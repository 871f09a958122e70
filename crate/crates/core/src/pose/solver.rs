use nalgebra::{Matrix3, Vector3, SVD};
use serde::{Deserialize, Serialize};

use super::PoseError;
use crate::geometry::{minimal_rotation, AttachmentFeature, RigidTransform};
use crate::scalar::Real;

/// Default weight of the normal term, in m².
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Matched attachment features between part `a` (moving) and part `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPairs<T: Real> {
    pub pairs: Vec<(AttachmentFeature<T>, AttachmentFeature<T>)>,
    pub alpha: T,
}

impl<T: Real> MatchedPairs<T> {
    pub fn new(pairs: Vec<(AttachmentFeature<T>, AttachmentFeature<T>)>) -> Self {
        Self {
            pairs,
            alpha: T::lit(DEFAULT_ALPHA),
        }
    }

    pub fn with_alpha(mut self, alpha: T) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<(), PoseError> {
        if self.pairs.is_empty() {
            return Err(PoseError::Empty);
        }
        let alpha = self.alpha.to_f64_lossy();
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(PoseError::InvalidAlpha(alpha));
        }
        for (index, (a, b)) in self.pairs.iter().enumerate() {
            a.check().map_err(|source| PoseError::Feature { index, source })?;
            b.check().map_err(|source| PoseError::Feature { index, source })?;
        }
        Ok(())
    }

    /// Σᵢ ‖R·xaᵢ + t − xbᵢ‖² + α‖R·naᵢ + nbᵢ‖².
    pub fn objective(&self, transform: &RigidTransform<T>) -> T {
        self.pairs.iter().fold(T::zero(), |acc, (a, b)| {
            let dp = transform.apply_point(&a.position) - b.position;
            let dn = transform.apply_vector(&a.normal) + b.normal;
            acc + dp.norm_squared() + self.alpha * dn.norm_squared()
        })
    }
}

/// Rank of the correlation matrix that fixes the rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    /// Rank 3: rotation uniquely determined.
    Full,
    /// Rank 2: still unique; the third axis follows from `det R = +1`.
    Planar,
    /// Rank 1: free spin about one axis; the minimal-angle rotation is returned.
    AxisFree,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentResult<T: Real> {
    pub transform: RigidTransform<T>,
    pub residual: T,
    pub degeneracy: Degeneracy,
}

/// Closed-form global minimizer of the weighted position/normal alignment
/// objective over proper rigid motions taking part `a` onto part `b`.
pub fn solve_alignment<T: Real>(m: &MatchedPairs<T>) -> Result<AlignmentResult<T>, PoseError> {
    m.validate()?;
    let k = T::from_usize(m.pairs.len()).expect("pair count fits the scalar type");
    let (sum_a, sum_b) = m.pairs.iter().fold(
        (Vector3::zeros(), Vector3::zeros()),
        |(sa, sb): (Vector3<T>, Vector3<T>), (a, b)| (sa + a.position, sb + b.position),
    );
    let centroid_a = sum_a / k;
    let centroid_b = sum_b / k;

    // Correlation M with tr(Rᵀ·M) as the rotation-dependent part of the
    // objective (up to sign and constants).
    let mut corr = Matrix3::zeros();
    let mut scale = T::zero();
    for (a, b) in &m.pairs {
        let pa = a.position - centroid_a;
        let pb = b.position - centroid_b;
        corr += pb * pa.transpose();
        corr -= (b.normal * a.normal.transpose()) * m.alpha;
        scale += pa.norm() * pb.norm() + m.alpha;
    }

    let svd = SVD::new(corr, true, true);
    let u = svd.u.expect("U requested");
    let v_t = svd.v_t.expect("Vᵀ requested");
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let s = order.map(|i| svd.singular_values[i]);

    let floor = T::default_epsilon() * T::lit(64.0) * (T::one() + scale);
    if s[0] <= floor {
        return Err(PoseError::DegenerateInput);
    }
    let cutoff = T::rank_tolerance() * s[0];
    let rank = s.iter().filter(|&&sv| sv > cutoff).count();

    let u_cols = order.map(|i| u.column(i).into_owned());
    let v_cols = order.map(|i| v_t.row(i).transpose());

    let (rotation, degeneracy) = if rank <= 1 {
        (minimal_rotation(&v_cols[0], &u_cols[0]), Degeneracy::AxisFree)
    } else {
        let u_sorted = Matrix3::from_columns(&u_cols);
        let v_sorted = Matrix3::from_columns(&v_cols);
        let d = (u_sorted * v_sorted.transpose()).determinant().signum();
        let diag = Matrix3::from_diagonal(&Vector3::new(T::one(), T::one(), d));
        let degeneracy = if rank == 3 {
            Degeneracy::Full
        } else {
            Degeneracy::Planar
        };
        (u_sorted * diag * v_sorted.transpose(), degeneracy)
    };

    let translation = centroid_b - rotation * centroid_a;
    let transform = RigidTransform {
        rotation,
        translation,
    };
    let residual = m.objective(&transform).max(T::zero());
    Ok(AlignmentResult {
        transform,
        residual,
        degeneracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::random_rotation;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn feature(p: [f64; 3], n: [f64; 3]) -> AttachmentFeature<f64> {
        AttachmentFeature::normalized(Vector3::from(p), Vector3::from(n))
    }

    fn consistent_pairs(rng: &mut ChaCha8Rng, k: usize, truth: &RigidTransform<f64>) -> MatchedPairs<f64> {
        let pairs = (0..k)
            .map(|_| {
                let x = Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
                let n = random_rotation::<f64, _>(rng) * Vector3::z();
                let a = AttachmentFeature { position: x, normal: n };
                let b = AttachmentFeature {
                    position: truth.apply_point(&x),
                    normal: -truth.apply_vector(&n),
                };
                (a, b)
            })
            .collect();
        MatchedPairs::new(pairs)
    }

    #[test]
    fn identical_frames_give_identity() {
        let m = MatchedPairs::new(vec![
            (feature([0.1, 0.0, 0.0], [1.0, 0.0, 0.0]), feature([0.1, 0.0, 0.0], [-1.0, 0.0, 0.0])),
            (feature([0.0, 0.2, 0.0], [0.0, 0.0, 1.0]), feature([0.0, 0.2, 0.0], [0.0, 0.0, -1.0])),
        ]);
        let r = solve_alignment(&m).unwrap();
        assert_relative_eq!(r.transform.rotation, Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(r.transform.translation, Vector3::zeros(), epsilon = 1e-12);
        assert!(r.residual < 1e-24);
    }

    #[test]
    fn single_pair_flips_normal_about_lexicographic_axis() {
        let m = MatchedPairs::new(vec![(feature([0.0; 3], [0.0, 0.0, 1.0]), feature([0.0; 3], [0.0, 0.0, 1.0]))]);
        let r = solve_alignment(&m).unwrap();
        assert_eq!(r.degeneracy, Degeneracy::AxisFree);
        assert_relative_eq!(
            r.transform.rotation,
            Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0)),
            epsilon = 1e-12
        );
        assert_relative_eq!(r.transform.translation, Vector3::zeros(), epsilon = 1e-12);
        assert!(r.residual < 1e-24);
    }

    #[test]
    fn single_pair_generic_is_minimal_geodesic() {
        let na: Vector3<f64> = Vector3::new(0.3, -0.4, 0.5).normalize();
        let nb: Vector3<f64> = Vector3::new(-0.1, 0.9, 0.2).normalize();
        let m = MatchedPairs::new(vec![(
            AttachmentFeature { position: Vector3::new(0.1, 0.2, 0.3), normal: na },
            AttachmentFeature { position: Vector3::new(-0.5, 0.0, 0.1), normal: nb },
        )]);
        let r = solve_alignment(&m).unwrap();
        assert_eq!(r.degeneracy, Degeneracy::AxisFree);
        assert_relative_eq!(r.transform.rotation * na, -nb, epsilon = 1e-12);
        let angle = crate::geometry::geodesic_angle(&r.transform.rotation);
        assert_relative_eq!(angle, na.dot(&-nb).acos(), epsilon = 1e-9);
        r.transform.check().unwrap();
    }

    #[test]
    fn recovers_ground_truth_generic_k3() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let truth = RigidTransform::new(random_rotation(&mut rng), Vector3::new(0.2, -0.1, 0.4)).unwrap();
            let m = consistent_pairs(&mut rng, 3, &truth);
            let r = solve_alignment(&m).unwrap();
            assert_eq!(r.degeneracy, Degeneracy::Full);
            assert_relative_eq!(r.transform.rotation, truth.rotation, epsilon = 1e-9);
            assert_relative_eq!(r.transform.translation, truth.translation, epsilon = 1e-9);
            assert!(r.residual < 1e-18, "residual {}", r.residual);
        }
    }

    #[test]
    fn two_coaxial_dowels_are_planar_and_exact() {
        // Two dowels on one face: positions span a line, normals are parallel.
        let truth = RigidTransform::from_axis_angle(&Vector3::new(1.0, 1.0, 0.0), 0.7, Vector3::new(0.0, 0.1, 0.0));
        let n = Vector3::z();
        let xs = [Vector3::new(-0.05, 0.0, 0.0), Vector3::new(0.05, 0.0, 0.0)];
        let pairs = xs
            .iter()
            .map(|x| {
                (
                    AttachmentFeature { position: *x, normal: n },
                    AttachmentFeature { position: truth.apply_point(x), normal: -truth.apply_vector(&n) },
                )
            })
            .collect();
        let r = solve_alignment(&MatchedPairs::new(pairs)).unwrap();
        assert_eq!(r.degeneracy, Degeneracy::Planar);
        assert_relative_eq!(r.transform.rotation, truth.rotation, epsilon = 1e-9);
    }

    #[test]
    fn coincident_positions_without_normal_term_is_degenerate() {
        let m = MatchedPairs::new(vec![
            (feature([0.1, 0.1, 0.1], [0.0, 0.0, 1.0]), feature([0.0; 3], [0.0, 0.0, 1.0])),
            (feature([0.1, 0.1, 0.1], [1.0, 0.0, 0.0]), feature([0.0; 3], [0.0, 1.0, 0.0])),
        ])
        .with_alpha(0.0);
        assert_eq!(solve_alignment(&m), Err(PoseError::DegenerateInput));
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(solve_alignment(&MatchedPairs::<f64>::new(vec![])), Err(PoseError::Empty));
        let bad = MatchedPairs::new(vec![(
            AttachmentFeature { position: Vector3::zeros(), normal: Vector3::new(0.0, 0.0, 2.0) },
            feature([0.0; 3], [0.0, 0.0, 1.0]),
        )]);
        assert!(matches!(solve_alignment(&bad), Err(PoseError::Feature { index: 0, .. })));
        let neg = MatchedPairs::new(vec![(feature([0.0; 3], [0.0, 0.0, 1.0]), feature([0.0; 3], [0.0, 0.0, 1.0]))]).with_alpha(-1.0);
        assert!(matches!(solve_alignment(&neg), Err(PoseError::InvalidAlpha(_))));
    }

    #[test]
    fn single_precision_instantiation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = RigidTransform::new(random_rotation(&mut rng), Vector3::new(0.1, 0.0, -0.2)).unwrap();
        let m64 = consistent_pairs(&mut rng, 4, &truth);
        let pairs = m64
            .pairs
            .iter()
            .map(|(a, b)| {
                (
                    AttachmentFeature::<f32>::normalized(a.position.cast(), a.normal.cast()),
                    AttachmentFeature::<f32>::normalized(b.position.cast(), b.normal.cast()),
                )
            })
            .collect();
        let r = solve_alignment(&MatchedPairs::<f32>::new(pairs)).unwrap();
        let t32: RigidTransform<f32> = truth.cast();
        assert_relative_eq!(r.transform.rotation, t32.rotation, epsilon = 1e-4);
        r.transform.check().unwrap();
    }
}
