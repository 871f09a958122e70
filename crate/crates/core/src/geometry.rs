//! Rigid transforms and attachment features.

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("normal has norm {norm}, expected 1")]
    NonUnitNormal { norm: f64 },
    #[error("rotation is not proper: orthogonality defect {orthogonality}, determinant {determinant}")]
    ImproperRotation { orthogonality: f64, determinant: f64 },
    #[error("non-finite component")]
    NonFinite,
}

/// Position and outward unit normal of an attachment point in its part's
/// local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttachmentFeature<T: Real> {
    pub position: Vector3<T>,
    pub normal: Vector3<T>,
}

impl<T: Real> AttachmentFeature<T> {
    /// Builds a feature, rejecting normals that are not unit length.
    pub fn new(position: Vector3<T>, normal: Vector3<T>) -> Result<Self, GeometryError> {
        let feature = Self { position, normal };
        feature.check()?;
        Ok(feature)
    }

    /// Builds a feature after normalizing `normal`.
    pub fn normalized(position: Vector3<T>, normal: Vector3<T>) -> Self {
        Self {
            position,
            normal: normal.normalize(),
        }
    }

    pub fn check(&self) -> Result<(), GeometryError> {
        if !all_finite(&self.position) || !all_finite(&self.normal) {
            return Err(GeometryError::NonFinite);
        }
        let norm = self.normal.norm();
        if (norm - T::one()).abs() > T::unit_tolerance() {
            return Err(GeometryError::NonUnitNormal {
                norm: norm.to_f64_lossy(),
            });
        }
        Ok(())
    }

    /// Expresses the feature in another frame.
    pub fn transformed(&self, transform: &RigidTransform<T>) -> Self {
        Self {
            position: transform.apply_point(&self.position),
            normal: transform.apply_vector(&self.normal),
        }
    }
}

fn all_finite<T: Real>(v: &Vector3<T>) -> bool {
    v.iter().all(|c| c.to_f64_lossy().is_finite())
}

/// Proper rigid motion `x ↦ R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform<T: Real> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> Default for RigidTransform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> RigidTransform<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, checking `RᵀR = I` and `det R = +1`.
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self, GeometryError> {
        let transform = Self {
            rotation,
            translation,
        };
        transform.check()?;
        Ok(transform)
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_axis_angle(axis: &Vector3<T>, angle: T, translation: Vector3<T>) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self {
            rotation: rotation.into_inner(),
            translation,
        }
    }

    pub fn check(&self) -> Result<(), GeometryError> {
        if self.rotation.iter().chain(self.translation.iter()).any(|c| !c.to_f64_lossy().is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let defect = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        let det = self.rotation.determinant();
        let tol = T::unit_tolerance();
        if defect > tol || (det - T::one()).abs() > tol {
            return Err(GeometryError::ImproperRotation {
                orthogonality: defect.to_f64_lossy(),
                determinant: det.to_f64_lossy(),
            });
        }
        Ok(())
    }

    pub fn apply_point(&self, point: &Vector3<T>) -> Vector3<T> {
        self.rotation * point + self.translation
    }

    pub fn apply_vector(&self, vector: &Vector3<T>) -> Vector3<T> {
        self.rotation * vector
    }

    /// `self ∘ inner`: applies `inner` first.
    pub fn compose(&self, inner: &Self) -> Self {
        Self {
            rotation: self.rotation * inner.rotation,
            translation: self.rotation * inner.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Angle of the relative rotation between the two transforms, in `[0, π]`.
    pub fn rotation_distance(&self, other: &Self) -> T {
        geodesic_angle(&(self.rotation.transpose() * other.rotation))
    }

    pub fn translation_distance(&self, other: &Self) -> T {
        (self.translation - other.translation).norm()
    }

    /// Re-orthonormalizes the rotation through a quaternion round trip.
    pub fn renormalized(&self) -> Self {
        let q = UnitQuaternion::from_matrix(&self.rotation);
        Self {
            rotation: q.to_rotation_matrix().into_inner(),
            translation: self.translation,
        }
    }

    pub fn cast<U: Real>(&self) -> RigidTransform<U> {
        RigidTransform {
            rotation: self.rotation.map(|c| U::lit(c.to_f64_lossy())),
            translation: self.translation.map(|c| U::lit(c.to_f64_lossy())),
        }
    }
}

/// Rotation angle of a rotation matrix, clamped against round-off.
pub fn geodesic_angle<T: Real>(rotation: &Matrix3<T>) -> T {
    let two = T::lit(2.0);
    let cos = ((rotation.trace() - T::one()) / two).clamp(-T::one(), T::one());
    cos.acos()
}

/// Lexicographically smallest unit vector orthogonal to `v`.
///
/// On the great circle orthogonal to `v` the smallest x-component is unique
/// unless `v` is parallel to the x axis, in which case the circle lies in the
/// y-z plane and its lexicographic minimum is `(0, -1, 0)`.
pub fn lexicographic_perpendicular<T: Real>(v: &Vector3<T>) -> Vector3<T> {
    let v = v.normalize();
    let ex = Vector3::x();
    let residual = ex - v * v.x;
    let norm = residual.norm();
    if norm > T::unit_tolerance().sqrt() {
        -residual / norm
    } else {
        -Vector3::y()
    }
}

/// Smallest-angle rotation taking unit vector `from` onto unit vector `to`.
/// Antiparallel inputs rotate by π about [`lexicographic_perpendicular`].
pub fn minimal_rotation<T: Real>(from: &Vector3<T>, to: &Vector3<T>) -> Matrix3<T> {
    let from = from.normalize();
    let to = to.normalize();
    let cross = from.cross(&to);
    let sin = cross.norm();
    let cos = from.dot(&to).clamp(-T::one(), T::one());
    let tol = T::unit_tolerance();
    if sin <= tol {
        if cos > T::zero() {
            return Matrix3::identity();
        }
        let axis = lexicographic_perpendicular(&from);
        // Rotation by π about a unit axis: 2·aaᵀ − I.
        return axis * axis.transpose() * T::lit(2.0) - Matrix3::identity();
    }
    let angle = sin.atan2(cos);
    Rotation3::from_axis_angle(&Unit::new_unchecked(cross / sin), angle).into_inner()
}

/// Uniformly distributed rotation (Shoemake's subgroup algorithm).
pub fn random_rotation<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Matrix3<T> {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let u3: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = nalgebra::Quaternion::new(b * u3.cos(), a * u2.sin(), a * u2.cos(), b * u3.sin());
    UnitQuaternion::from_quaternion(q)
        .to_rotation_matrix()
        .into_inner()
        .map(T::lit)
}

/// Rotation about the unit `axis` (swing-twist decomposition).
pub fn twist_angle<T: Real>(rotation: &Matrix3<T>, axis: &Vector3<T>) -> T {
    let q = UnitQuaternion::from_matrix(rotation);
    let v = q.imag();
    let proj = axis * axis.dot(&v);
    let twist = nalgebra::Quaternion::from_parts(q.scalar(), proj);
    let norm = twist.norm();
    if norm <= T::default_epsilon() {
        return T::pi();
    }
    T::lit(2.0) * (twist.w.abs() / norm).clamp(T::zero(), T::one()).acos()
}

/// Angle between `rotation·axis` and `axis`: the part of the rotation that
/// tilts the axis, ignoring spin about it.
pub fn swing_angle<T: Real>(rotation: &Matrix3<T>, axis: &Vector3<T>) -> T {
    let moved = rotation * axis;
    moved.dot(axis).clamp(-T::one(), T::one()).acos()
}

#[derive(Serialize, Deserialize)]
struct FeatureWire<T> {
    position: [T; 3],
    normal: [T; 3],
}

impl<T: Real + Serialize> Serialize for AttachmentFeature<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        FeatureWire {
            position: self.position.into(),
            normal: self.normal.into(),
        }
        .serialize(serializer)
    }
}

impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for AttachmentFeature<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = FeatureWire::<T>::deserialize(deserializer)?;
        Ok(Self {
            position: Vector3::from(wire.position),
            normal: Vector3::from(wire.normal),
        })
    }
}

/// Rotation is written row-major as three 3-element arrays.
#[derive(Serialize, Deserialize)]
struct TransformWire<T> {
    rotation: [[T; 3]; 3],
    translation: [T; 3],
}

impl<T: Real + Serialize> Serialize for RigidTransform<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let r = &self.rotation;
        let row = |i: usize| [r[(i, 0)], r[(i, 1)], r[(i, 2)]];
        TransformWire {
            rotation: [row(0), row(1), row(2)],
            translation: self.translation.into(),
        }
        .serialize(serializer)
    }
}

impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for RigidTransform<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = TransformWire::<T>::deserialize(deserializer)?;
        let r = wire.rotation;
        let rotation = Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        );
        RigidTransform::new(rotation, Vector3::from(wire.translation)).map_err(serde::de::Error::custom)
    }
}
