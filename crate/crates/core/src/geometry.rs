//! Imaging geometry of a 2D forward-looking sonar.
//!
//! A forward-looking sonar measures range and bearing but loses elevation,
//! so a 3D point maps onto the imaging plane along an arc of constant range.
//! This module holds the spherical/Cartesian conversions, the exact arc
//! projection, its orthographic approximation, field-of-view predicates, and
//! rigid transforms.
//!
//! Conventions: the sonar looks along `+y`; bearing `theta = atan2(x, y)` is
//! zero straight ahead and positive toward `+x`; elevation `phi = asin(z/r)`
//! is positive toward `+z`. Angles are radians everywhere inside the library;
//! degrees appear only at CLI/report boundaries.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A 3D point or vector in meters.
pub type Point3 = Vector3<f64>;
/// A 2D sonar measurement `[u, v]` on the imaging plane, in meters.
pub type Measurement = Vector2<f64>;

/// Errors from geometric operations.
#[derive(Debug, Error)]
pub enum GeometryError {
    /// Input point has (near-)zero norm, so angles are undefined.
    #[error("degenerate input: point norm {0:.3e} too small for angular decomposition")]
    DegenerateInput(f64),
    /// Rotation matrix fails the SO(3) invariants.
    #[error("matrix is not a rotation: orthogonality defect {defect:.3e}, det {det:.6}")]
    InvalidRotation { defect: f64, det: f64 },
    /// Field-of-view bounds are empty or reversed.
    #[error("invalid field of view: {0}")]
    InvalidFov(String),
    /// Projection linearization constant outside (0, 1].
    #[error("projection alpha {0} outside (0, 1]")]
    InvalidAlpha(f64),
}

const ZERO_NORM_TOL: f64 = 1e-300;
/// Frobenius tolerance for the SO(3) membership checks on [`Pose`].
pub const ROTATION_TOL: f64 = 1e-9;

/// Range, bearing, elevation of a point in the sonar frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalCoord {
    /// Range in meters, `>= 0`.
    pub r: f64,
    /// Bearing angle in radians.
    pub theta: f64,
    /// Elevation angle in radians.
    pub phi: f64,
}

impl SphericalCoord {
    pub fn new(r: f64, theta: f64, phi: f64) -> Self {
        Self { r, theta, phi }
    }
}

/// Converts spherical sonar coordinates to a Cartesian point.
///
/// `[r·cosφ·sinθ, r·cosφ·cosθ, r·sinφ]` — the sonar looks along `+y`.
pub fn spherical_to_cartesian(s: SphericalCoord) -> Point3 {
    let (sin_t, cos_t) = s.theta.sin_cos();
    let (sin_p, cos_p) = s.phi.sin_cos();
    Vector3::new(s.r * cos_p * sin_t, s.r * cos_p * cos_t, s.r * sin_p)
}

/// Inverse of [`spherical_to_cartesian`] on the open domain `phi ∈ (-π/2, π/2)`.
pub fn cartesian_to_spherical(p: &Point3) -> Result<SphericalCoord, GeometryError> {
    let r = p.norm();
    if r <= ZERO_NORM_TOL {
        return Err(GeometryError::DegenerateInput(r));
    }
    let theta = p.x.atan2(p.y);
    let phi = (p.z / r).clamp(-1.0, 1.0).asin();
    Ok(SphericalCoord { r, theta, phi })
}

/// Exact arc projection: `m = [r·sinθ, r·cosθ]`, equivalently `p_xy / cosφ`.
///
/// Preserves range: `‖m‖ = ‖p‖`.
pub fn project_arc(p: &Point3) -> Result<Measurement, GeometryError> {
    let s = cartesian_to_spherical(p)?;
    let (sin_t, cos_t) = s.theta.sin_cos();
    Ok(Vector2::new(s.r * sin_t, s.r * cos_t))
}

/// Orthographic projection: drops the `z` component.
pub fn project_orthographic(p: &Point3) -> Measurement {
    Vector2::new(p.x, p.y)
}

/// Which projection a model applies and, for the linearized one, the constant
/// that stands in for `cos φ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectionKind {
    /// Exact range-preserving arc projection.
    Arc,
    /// Parallel projection onto the imaging plane (`cos φ ≈ alpha`).
    Orthographic,
}

/// Sonar projection model: exact arc or the linearized orthographic form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionModel {
    pub kind: ProjectionKind,
    /// Linearization constant for `cos φ`, in `(0, 1]`. Pure orthographic
    /// projection uses `alpha = 1`.
    pub alpha: f64,
}

impl ProjectionModel {
    pub fn arc() -> Self {
        Self {
            kind: ProjectionKind::Arc,
            alpha: 1.0,
        }
    }

    pub fn orthographic() -> Self {
        Self {
            kind: ProjectionKind::Orthographic,
            alpha: 1.0,
        }
    }

    /// Orthographic model with a non-unit linearization constant.
    pub fn linearized(alpha: f64) -> Result<Self, GeometryError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(GeometryError::InvalidAlpha(alpha));
        }
        Ok(Self {
            kind: ProjectionKind::Orthographic,
            alpha,
        })
    }

    /// Projects a sonar-frame point onto the imaging plane under this model.
    pub fn project(&self, p: &Point3) -> Result<Measurement, GeometryError> {
        match self.kind {
            ProjectionKind::Arc => project_arc(p),
            ProjectionKind::Orthographic => Ok(project_orthographic(p) / self.alpha),
        }
    }
}

/// Rigid transform from the world frame into the sonar frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    /// Builds a pose, checking the SO(3) invariants on `rotation`.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let defect = rotation_defect(&rotation);
        let det = rotation.determinant();
        if defect > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(GeometryError::InvalidRotation { defect, det });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Builds without validation. Caller guarantees `rotation ∈ SO(3)`.
    pub fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Maps a world-frame point into the sonar frame: `R·p + t`.
    pub fn transform(&self, p_world: &Point3) -> Point3 {
        self.rotation * p_world + self.translation
    }

    /// Composition: `(self ∘ other)(p) = self(other(p))`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Inverse transform.
    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Frobenius orthogonality defect plus determinant deviation.
    pub fn rotation_defect(&self) -> f64 {
        rotation_defect(&self.rotation)
    }

    /// True when the rotation satisfies the SO(3) invariants to `tol`.
    pub fn is_valid_rotation(&self, tol: f64) -> bool {
        self.rotation_defect() <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }
}

/// `‖RᵀR − I‖_F` for a candidate rotation matrix.
pub fn rotation_defect(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).norm()
}

/// Nearest rotation in Frobenius norm (orthogonal Procrustes), determinant
/// forced to +1.
pub fn project_to_so3(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("3x3 svd always yields u");
    let v_t = svd.v_t.expect("3x3 svd always yields v_t");
    let det = (u * v_t).determinant();
    let d = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, det.signum()));
    u * d * v_t
}

/// Sensor field of view as a box in `(r, θ, φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FovSpec {
    pub r_min: f64,
    pub r_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

impl FovSpec {
    pub fn new(
        r: (f64, f64),
        theta: (f64, f64),
        phi: (f64, f64),
    ) -> Result<Self, GeometryError> {
        if !(r.0 < r.1) {
            return Err(GeometryError::InvalidFov(format!(
                "r_min {} >= r_max {}",
                r.0, r.1
            )));
        }
        if !(theta.0 < theta.1) {
            return Err(GeometryError::InvalidFov(format!(
                "theta_min {} >= theta_max {}",
                theta.0, theta.1
            )));
        }
        if !(phi.0 < phi.1) {
            return Err(GeometryError::InvalidFov(format!(
                "phi_min {} >= phi_max {}",
                phi.0, phi.1
            )));
        }
        Ok(Self {
            r_min: r.0,
            r_max: r.1,
            theta_min: theta.0,
            theta_max: theta.1,
            phi_min: phi.0,
            phi_max: phi.1,
        })
    }

    /// The full field of view used throughout the benchmark protocol:
    /// `r ∈ [0, 6] m`, `θ ∈ [-30°, 30°]`, `φ ∈ [-10°, 10°]`.
    pub fn benchmark_default() -> Self {
        let d30 = 30f64.to_radians();
        let d10 = 10f64.to_radians();
        Self {
            r_min: 0.0,
            r_max: 6.0,
            theta_min: -d30,
            theta_max: d30,
            phi_min: -d10,
            phi_max: d10,
        }
    }

    /// True iff the sonar-frame point falls inside the `(r, θ, φ)` box.
    pub fn contains(&self, p_sonar: &Point3) -> Result<bool, GeometryError> {
        let s = cartesian_to_spherical(p_sonar)?;
        Ok(s.r >= self.r_min
            && s.r <= self.r_max
            && s.theta >= self.theta_min
            && s.theta <= self.theta_max
            && s.phi >= self.phi_min
            && s.phi <= self.phi_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};

    #[test]
    fn spherical_on_axis() {
        let p = spherical_to_cartesian(SphericalCoord::new(2.0, 0.0, 0.0));
        assert_relative_eq!(p, Vector3::new(0.0, 2.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn spherical_ninety_degree_bearing() {
        let p = spherical_to_cartesian(SphericalCoord::new(1.0, FRAC_PI_2, 0.0));
        assert_relative_eq!(p, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn spherical_thirty_degree_elevation() {
        let p = spherical_to_cartesian(SphericalCoord::new(2.0, 0.0, FRAC_PI_6));
        assert_relative_eq!(p, Vector3::new(0.0, 3f64.sqrt(), 1.0), epsilon = 1e-12);
    }

    #[test]
    fn cartesian_to_spherical_examples() {
        let s = cartesian_to_spherical(&Vector3::new(0.0, 2.0, 0.0)).unwrap();
        assert_relative_eq!(s.r, 2.0, epsilon = 1e-15);
        assert_relative_eq!(s.theta, 0.0, epsilon = 1e-15);
        assert_relative_eq!(s.phi, 0.0, epsilon = 1e-15);

        let s = cartesian_to_spherical(&Vector3::new(0.0, 3f64.sqrt(), 1.0)).unwrap();
        assert_relative_eq!(s.r, 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.phi, PI / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_norm_is_degenerate() {
        assert!(matches!(
            cartesian_to_spherical(&Vector3::zeros()),
            Err(GeometryError::DegenerateInput(_))
        ));
        assert!(project_arc(&Vector3::zeros()).is_err());
    }

    #[test]
    fn arc_projection_folds_elevation_into_range() {
        let m = project_arc(&Vector3::new(0.0, 3f64.sqrt(), 1.0)).unwrap();
        assert_relative_eq!(m, Vector2::new(0.0, 2.0), epsilon = 1e-12);
        // phi = 0 ⇒ arc and orthographic agree exactly.
        let p = Vector3::new(0.0, 2.0, 0.0);
        assert_eq!(project_arc(&p).unwrap(), project_orthographic(&p));
    }

    #[test]
    fn orthographic_examples() {
        assert_eq!(
            project_orthographic(&Vector3::new(0.0, 3f64.sqrt(), 1.0)),
            Vector2::new(0.0, 3f64.sqrt())
        );
        assert_eq!(
            project_orthographic(&Vector3::new(0.5, 3.0, 0.0)),
            Vector2::new(0.5, 3.0)
        );
    }

    #[test]
    fn orthographic_error_at_fifteen_degrees() {
        // At phi = 15° the relative projection discrepancy is 1 - cos 15°,
        // the worst case for sensors with cos φ ∈ [0.9659, 1].
        let phi = 15f64.to_radians();
        let p = spherical_to_cartesian(SphericalCoord::new(3.0, 0.2, phi));
        let arc = project_arc(&p).unwrap();
        let ortho = project_orthographic(&p);
        let rel = (arc - ortho).norm() / arc.norm();
        assert_relative_eq!(rel, 1.0 - phi.cos(), epsilon = 1e-12);
        assert!((0.0341 - rel).abs() < 1e-4);
        assert!(phi.cos() > 0.9659 && phi.cos() < 0.9660);
    }

    #[test]
    fn transform_examples() {
        let p = Vector3::new(0.3, 1.2, -0.4);
        assert_eq!(Pose::identity().transform(&p), p);

        let t = Pose::from_parts_unchecked(Matrix3::identity(), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(t.transform(&Vector3::zeros()), Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn pose_validation_rejects_reflection() {
        let mut m = Matrix3::identity();
        m[(2, 2)] = -1.0;
        assert!(Pose::new(m, Vector3::zeros()).is_err());
        assert!(Pose::new(Matrix3::identity(), Vector3::zeros()).is_ok());
    }

    #[test]
    fn in_fov_examples() {
        let fov = FovSpec::benchmark_default();
        assert!(fov.contains(&Vector3::new(0.0, 3.0, 0.0)).unwrap());
        assert!(!fov.contains(&Vector3::new(0.0, 7.0, 0.0)).unwrap());
        // phi ≈ 26.6° exceeds the ±10° elevation band.
        assert!(!fov.contains(&Vector3::new(0.0, 2.0, 1.0)).unwrap());
    }

    #[test]
    fn fov_validation() {
        assert!(FovSpec::new((1.0, 0.5), (-0.1, 0.1), (-0.1, 0.1)).is_err());
        assert!(FovSpec::new((0.0, 6.0), (0.1, -0.1), (-0.1, 0.1)).is_err());
    }

    #[test]
    fn projection_model_dispatch() {
        let p = spherical_to_cartesian(SphericalCoord::new(2.0, 0.1, 0.1));
        let arc = ProjectionModel::arc().project(&p).unwrap();
        assert_relative_eq!(arc.norm(), 2.0, epsilon = 1e-12);
        let ortho = ProjectionModel::orthographic().project(&p).unwrap();
        assert_eq!(ortho, Vector2::new(p.x, p.y));
        assert!(ProjectionModel::linearized(0.0).is_err());
        assert!(ProjectionModel::linearized(1.5).is_err());
        let lin = ProjectionModel::linearized(0.99).unwrap();
        assert_relative_eq!(
            lin.project(&p).unwrap(),
            Vector2::new(p.x / 0.99, p.y / 0.99),
            epsilon = 1e-15
        );
    }

    fn arb_point() -> impl Strategy<Value = Point3> {
        // Radius in [0.1, 10], angles spanning the open elevation domain.
        (
            0.1f64..10.0,
            -PI + 1e-6..PI - 1e-6,
            -FRAC_PI_2 + 1e-3..FRAC_PI_2 - 1e-3,
        )
            .prop_map(|(r, t, p)| spherical_to_cartesian(SphericalCoord::new(r, t, p)))
    }

    proptest! {
        #[test]
        fn round_trip_identity(p in arb_point()) {
            let s = cartesian_to_spherical(&p).unwrap();
            let q = spherical_to_cartesian(s);
            prop_assert!((p - q).norm() <= 1e-12 * p.norm());
        }

        #[test]
        fn arc_preserves_range(p in arb_point()) {
            let m = project_arc(&p).unwrap();
            prop_assert!((m.norm() - p.norm()).abs() <= 1e-12 * p.norm());
        }

        #[test]
        fn orthographic_bound_in_elevation_band(
            r in 0.5f64..6.0,
            theta in -0.5f64..0.5,
            phi in -0.174f64..0.174,
        ) {
            let p = spherical_to_cartesian(SphericalCoord::new(r, theta, phi));
            let arc = project_arc(&p).unwrap();
            let ortho = project_orthographic(&p);
            let bound = (1.0 - 0.174f64.cos()) * p.norm();
            prop_assert!((arc - ortho).norm() <= bound + 1e-12);
        }

        #[test]
        fn transform_composition(
            p in arb_point(),
            ax1 in -1.0f64..1.0, ay1 in -1.0f64..1.0, az1 in -1.0f64..1.0,
            ax2 in -1.0f64..1.0, ay2 in -1.0f64..1.0, az2 in -1.0f64..1.0,
            tx in -2.0f64..2.0, ty in -2.0f64..2.0, tz in -2.0f64..2.0,
        ) {
            let r1 = nalgebra::Rotation3::from_scaled_axis(Vector3::new(ax1, ay1, az1));
            let r2 = nalgebra::Rotation3::from_scaled_axis(Vector3::new(ax2, ay2, az2));
            let t1 = Pose::from_parts_unchecked(*r1.matrix(), Vector3::new(tx, ty, tz));
            let t2 = Pose::from_parts_unchecked(*r2.matrix(), Vector3::new(ty, tz, tx));
            let a = t1.transform(&t2.transform(&p));
            let b = t1.compose(&t2).transform(&p);
            prop_assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
        }
    }
}
