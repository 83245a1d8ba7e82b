//! Unit-quaternion rotation algebra.
//!
//! Every rotation convention used by the crate is pinned here, once:
//!
//! * A [`UnitQuat`] stores its vector part first and scalar part last, and an
//!   attitude quaternion `q` represents the rotation **from the world frame to
//!   the body frame**: [`UnitQuat::rotation_matrix`] returns the matrix `C(q)`
//!   with `x_body = C(q) · x_world`.
//! * The product is defined so that rotation matrices compose in the same
//!   order: `C(a ⊗ b) = C(a) · C(b)`.
//! * [`UnitQuat::exp`] maps a full rotation vector `φ` (axis · angle, rad) to
//!   a quaternion; callers integrating a rate supply the whole increment,
//!   e.g. `UnitQuat::exp(&(dt * w))`. Composing on the left, `exp(φ) ⊗ q`,
//!   applies the increment in the **body** frame, which is the form used by
//!   the gyro integration step and by error-state retraction.
//! * [`UnitQuat::log`] is the inverse on the principal branch: it returns the
//!   rotation vector of minimum angle (`‖log‖ ≤ π`), resolving the double
//!   cover by negating quaternions with a negative scalar part.
//!
//! For small `φ` the linearization is `C(exp(φ)) ≈ I − ⌊φ⌋`, i.e. the
//! world→body matrix of a body-frame increment is the *transpose* of the
//! usual Rodrigues rotation of world vectors; [`rodrigues`] provides the
//! latter for code which moves vectors in the world frame. Keeping both next
//! to each other (and tested against each other) is deliberate — the pair is
//! where sign mistakes in filter code usually start.

use nalgebra::{Matrix3, Vector3};

/// Angle threshold below which `exp`/`log` switch to their Taylor branches.
const SMALL_ANGLE: f64 = 1e-8;

/// Cross-product matrix: `skew(a) * b == a × b`.
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Rodrigues rotation of **world** vectors: rotates by angle `‖φ‖` about the
/// axis `φ/‖φ‖`, right-handed. Satisfies
/// `rodrigues(φ) == UnitQuat::exp(φ).rotation_matrix().transpose()`.
pub fn rodrigues(phi: &Vector3<f64>) -> Matrix3<f64> {
    let angle = phi.norm();
    if angle < SMALL_ANGLE {
        return Matrix3::identity() + skew(phi);
    }
    let axis = phi / angle;
    let k = skew(&axis);
    Matrix3::identity() + angle.sin() * k + (1.0 - angle.cos()) * k * k
}

/// Unit quaternion, vector part first, scalar part last.
///
/// Constructors normalize unless explicitly `_unchecked`; the arithmetic here
/// keeps `‖q‖ = 1` to well below 1e-9 across repeated composition, and
/// [`UnitQuat::mul`] renormalizes to stop drift from accumulating over the
/// hundreds of thousands of products a long filter run performs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuat {
    /// Vector (imaginary) part.
    pub xyz: Vector3<f64>,
    /// Scalar (real) part, stored last.
    pub w: f64,
}

impl UnitQuat {
    /// The identity rotation.
    pub fn identity() -> Self {
        Self { xyz: Vector3::zeros(), w: 1.0 }
    }

    /// Builds from parts and normalizes.
    pub fn from_parts(xyz: Vector3<f64>, w: f64) -> Self {
        Self { xyz, w }.normalized()
    }

    /// Builds from parts that are already unit-norm (not checked).
    pub fn new_unchecked(xyz: Vector3<f64>, w: f64) -> Self {
        Self { xyz, w }
    }

    /// Builds from a `[x, y, z, w]` array, normalizing.
    pub fn from_array(a: [f64; 4]) -> Self {
        Self::from_parts(Vector3::new(a[0], a[1], a[2]), a[3])
    }

    /// Returns `[x, y, z, w]`.
    pub fn to_array(&self) -> [f64; 4] {
        [self.xyz.x, self.xyz.y, self.xyz.z, self.w]
    }

    pub fn norm(&self) -> f64 {
        (self.xyz.norm_squared() + self.w * self.w).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self { xyz: self.xyz / n, w: self.w / n }
    }

    /// Quaternion dot product (used for double-cover comparisons).
    pub fn dot(&self, other: &Self) -> f64 {
        self.xyz.dot(&other.xyz) + self.w * other.w
    }

    /// Inverse rotation; for a unit quaternion this is the conjugate.
    pub fn inverse(&self) -> Self {
        Self { xyz: -self.xyz, w: self.w }
    }

    /// Exponential map: rotation vector (axis · angle) to quaternion.
    ///
    /// `exp(φ) = (sin(‖φ‖/2) · φ/‖φ‖,  cos(‖φ‖/2))`, with a second-order
    /// Taylor branch below the small-angle threshold so `exp(0)` is exactly
    /// the identity and gradients stay smooth through zero.
    pub fn exp(phi: &Vector3<f64>) -> Self {
        let angle = phi.norm();
        if angle < SMALL_ANGLE {
            let a2 = angle * angle;
            // sin(x/2)/x = 1/2 · (1 − x²/24 + …), cos(x/2) = 1 − x²/8 + …
            let xyz = phi * (0.5 * (1.0 - a2 / 24.0));
            let w = 1.0 - a2 / 8.0;
            return Self { xyz, w }.normalized();
        }
        let half = 0.5 * angle;
        Self { xyz: phi * (half.sin() / angle), w: half.cos() }
    }

    /// Logarithm map: principal rotation vector, `‖log‖ ≤ π`.
    ///
    /// The sign ambiguity of the double cover is resolved by negating the
    /// quaternion when its scalar part is negative, so antipodal inputs map
    /// to the same rotation vector.
    pub fn log(&self) -> Vector3<f64> {
        let (xyz, w) = if self.w < 0.0 { (-self.xyz, -self.w) } else { (self.xyz, self.w) };
        let n = xyz.norm();
        if n < SMALL_ANGLE {
            // 2·atan(n/w)/n = 2/w · (1 − n²/(3w²) + …)
            return xyz * ((2.0 / w) * (1.0 - n * n / (3.0 * w * w)));
        }
        xyz * (2.0 * n.atan2(w) / n)
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.xyz.norm().atan2(self.w.abs())
    }

    /// Quaternion product with `C(a ⊗ b) = C(a) · C(b)`.
    pub fn mul(&self, rhs: &Self) -> Self {
        let xyz = self.w * rhs.xyz + rhs.w * self.xyz - self.xyz.cross(&rhs.xyz);
        let w = self.w * rhs.w - self.xyz.dot(&rhs.xyz);
        Self { xyz, w }.normalized()
    }

    /// The world→body direction-cosine matrix `C(q)`.
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let v = self.xyz;
        let w = self.w;
        (2.0 * w * w - 1.0) * Matrix3::identity() - 2.0 * w * skew(&v)
            + 2.0 * v * v.transpose()
    }

    /// Applies the rotation: `C(q) · x` (world coordinates to body coordinates
    /// for an attitude quaternion).
    pub fn rotate(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * x
    }

    /// Attitude from intrinsic Z-Y-X (yaw-pitch-roll) Euler angles of the
    /// body relative to the world: the body→world matrix is
    /// `Rz(yaw)·Ry(pitch)·Rx(roll)`.
    pub fn from_euler_zyx(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::exp(&Vector3::new(roll, 0.0, 0.0))
            .mul(&Self::exp(&Vector3::new(0.0, pitch, 0.0)))
            .mul(&Self::exp(&Vector3::new(0.0, 0.0, yaw)))
    }

    /// Z-Y-X (yaw-pitch-roll) Euler angles of the body relative to the world,
    /// returned as `(roll, pitch, yaw)`. Pitch is clamped into `±π/2`.
    pub fn euler_zyx(&self) -> (f64, f64, f64) {
        let r_wb = self.rotation_matrix().transpose();
        let pitch = (-r_wb[(2, 0)]).clamp(-1.0, 1.0).asin();
        let roll = r_wb[(2, 1)].atan2(r_wb[(2, 2)]);
        let yaw = r_wb[(1, 0)].atan2(r_wb[(0, 0)]);
        (roll, pitch, yaw)
    }
}

impl std::ops::Mul for UnitQuat {
    type Output = UnitQuat;
    fn mul(self, rhs: UnitQuat) -> UnitQuat {
        UnitQuat::mul(&self, &rhs)
    }
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::identity()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_rotvec(rng: &mut ChaCha8Rng, max_angle: f64) -> Vector3<f64> {
        let dir = Vector3::new(
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
        );
        let dir = if dir.norm() < 1e-12 { Vector3::x() } else { dir.normalize() };
        dir * (rng.random::<f64>() * max_angle)
    }

    #[test]
    fn exp_of_zero_is_identity_exactly() {
        let q = UnitQuat::exp(&Vector3::zeros());
        assert_eq!(q.xyz, Vector3::zeros());
        assert_eq!(q.w, 1.0);
        assert_eq!(UnitQuat::identity().log(), Vector3::zeros());
    }

    #[test]
    fn exp_half_turn_about_x() {
        let q = UnitQuat::exp(&Vector3::new(PI, 0.0, 0.0));
        assert_relative_eq!(q.xyz.x, 1.0, epsilon = 1e-15);
        assert_relative_eq!(q.w, 0.0, epsilon = 1e-15);
        let c = q.rotation_matrix();
        let expected = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0));
        assert_relative_eq!(c, expected, epsilon = 1e-12);
    }

    #[test]
    fn log_exp_roundtrip_up_to_pi() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10_000 {
            let phi = random_rotvec(&mut rng, PI - 1e-6);
            let back = UnitQuat::exp(&phi).log();
            assert!(
                (back - phi).norm() <= 1e-12,
                "roundtrip failed for phi = {phi:?}: got {back:?}"
            );
        }
    }

    #[test]
    fn log_returns_principal_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2_000 {
            let q = UnitQuat::exp(&random_rotvec(&mut rng, PI - 1e-9));
            let neg = UnitQuat::new_unchecked(-q.xyz, -q.w);
            assert!(q.log().norm() <= PI + 1e-12);
            assert_relative_eq!(q.log(), neg.log(), epsilon = 1e-12);
        }
    }

    #[test]
    fn product_matches_rotation_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1_000 {
            let a = UnitQuat::exp(&random_rotvec(&mut rng, PI - 0.1));
            let b = UnitQuat::exp(&random_rotvec(&mut rng, PI - 0.1));
            let lhs = a.mul(&b).rotation_matrix();
            let rhs = a.rotation_matrix() * b.rotation_matrix();
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn products_stay_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut q = UnitQuat::identity();
        for _ in 0..10_000 {
            q = q.mul(&UnitQuat::exp(&random_rotvec(&mut rng, 0.3)));
            assert!((q.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn inverse_is_two_sided() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let q = UnitQuat::exp(&random_rotvec(&mut rng, 3.0));
            assert!(q.mul(&q.inverse()).log().norm() < 1e-12);
            assert!(q.inverse().mul(&q).log().norm() < 1e-12);
        }
    }

    #[test]
    fn small_angle_linearization_of_rotation_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1_000 {
            let phi = random_rotvec(&mut rng, 1e-5);
            let x = random_rotvec(&mut rng, 2.0);
            let rotated = UnitQuat::exp(&phi).rotate(&x);
            let linear = x - phi.cross(&x);
            assert!((rotated - linear).norm() <= 1e-9);
        }
    }

    #[test]
    fn taylor_and_closed_form_agree_at_the_branch() {
        // Evaluate both branches just either side of the threshold; they have
        // to agree far below the roundtrip tolerance.
        for scale in [1e-9, 9.9e-9, 1.01e-8, 5e-8] {
            let phi = Vector3::new(0.6, -0.7, 0.38).normalize() * scale;
            let q = UnitQuat::exp(&phi);
            let angle = phi.norm();
            let exact = UnitQuat::new_unchecked(
                phi * ((0.5 * angle).sin() / angle),
                (0.5 * angle).cos(),
            );
            assert!((q.xyz - exact.xyz).norm() < 1e-18);
            assert!((q.w - exact.w).abs() < 1e-16);
        }
    }

    #[test]
    fn body_frame_increment_composes_on_the_left() {
        // exp(φ) ⊗ q must equal the attitude whose matrix is C(exp(φ))·C(q):
        // the increment acts in the body frame.
        let q = UnitQuat::from_euler_zyx(0.2, -0.4, 1.1);
        let phi = Vector3::new(0.05, -0.02, 0.03);
        let stepped = UnitQuat::exp(&phi).mul(&q);
        let expected = UnitQuat::exp(&phi).rotation_matrix() * q.rotation_matrix();
        assert!((stepped.rotation_matrix() - expected).norm() < 1e-12);
    }

    #[test]
    fn rodrigues_is_transpose_of_exp_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let phi = random_rotvec(&mut rng, 3.0);
            let r = rodrigues(&phi);
            let c = UnitQuat::exp(&phi).rotation_matrix();
            assert!((r - c.transpose()).norm() < 1e-12);
        }
    }

    #[test]
    fn euler_zyx_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..2_000 {
            let roll = (rng.random::<f64>() - 0.5) * 2.0;
            let pitch = (rng.random::<f64>() - 0.5) * 2.8; // stay off gimbal lock
            let yaw = (rng.random::<f64>() - 0.5) * 6.0;
            let q = UnitQuat::from_euler_zyx(roll, pitch, yaw);
            let (r, p, y) = q.euler_zyx();
            assert_relative_eq!(r, roll, epsilon = 1e-10);
            assert_relative_eq!(p, pitch, epsilon = 1e-10);
            assert_relative_eq!(y, yaw, epsilon = 1e-10);
        }
    }

    #[test]
    fn skew_matches_cross_product() {
        let a = Vector3::new(0.3, -1.2, 2.5);
        let b = Vector3::new(-0.7, 0.1, 0.9);
        assert_relative_eq!(skew(&a) * b, a.cross(&b), epsilon = 1e-15);
    }
}
