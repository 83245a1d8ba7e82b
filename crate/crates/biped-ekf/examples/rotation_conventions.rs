//! Worked numbers pinning the rotation conventions used across the crate.
//!
//! Run with `cargo run --example rotation_conventions`. Everything printed
//! here is asserted, so the example doubles as a smoke check of the algebra.

use biped_ekf::so3::{rodrigues, UnitQuat};
use nalgebra::Vector3;

fn main() {
    // Storage order is [x, y, z, w]: the scalar part comes last.
    let q = UnitQuat::from_array([0.0, 0.0, 0.0, 1.0]);
    assert_eq!(q.to_array(), [0.0, 0.0, 0.0, 1.0]);
    println!("identity quaternion stored as {:?} (scalar last)", q.to_array());

    // from_euler_zyx takes (roll, pitch, yaw) and builds the body-to-world
    // rotation Rz(yaw) * Ry(pitch) * Rx(roll). rotation_matrix() is the
    // world-to-body direction, so a pure +90 degree yaw sends the world x
    // axis to the body's -y axis.
    let yaw90 = UnitQuat::from_euler_zyx(0.0, 0.0, std::f64::consts::FRAC_PI_2);
    let ex_in_body = yaw90.rotation_matrix() * Vector3::x();
    println!(
        "world +x seen from a body yawed +90 deg: [{:+.3} {:+.3} {:+.3}]",
        ex_in_body.x, ex_in_body.y, ex_in_body.z
    );
    assert!((ex_in_body - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-12);

    // Euler extraction inverts construction away from the pitch singularity.
    let q = UnitQuat::from_euler_zyx(0.3, -0.4, 1.2);
    let (roll, pitch, yaw) = q.euler_zyx();
    println!("euler roundtrip: roll {roll:+.6}, pitch {pitch:+.6}, yaw {yaw:+.6}");
    assert!((roll - 0.3).abs() + (pitch + 0.4).abs() + (yaw - 1.2).abs() < 1e-12);

    // exp maps a rotation vector to a quaternion; log inverts it. The matrix
    // of exp(phi) is the transpose of the Rodrigues matrix of phi because
    // rotation_matrix() is world-to-body while rodrigues() is the usual
    // axis-angle (body-to-world) form.
    let phi = Vector3::new(0.2, -0.1, 0.4);
    let q = UnitQuat::exp(&phi);
    assert!((q.log() - phi).norm() < 1e-14);
    assert!((q.rotation_matrix() - rodrigues(&phi).transpose()).norm() < 1e-14);
    println!("exp/log roundtrip error: {:.2e}", (q.log() - phi).norm());

    // Composition: C(a * b) = C(a) C(b), matrices in the same order as
    // quaternions.
    let a = UnitQuat::exp(&Vector3::new(0.1, 0.2, -0.3));
    let b = UnitQuat::exp(&Vector3::new(-0.4, 0.0, 0.25));
    let err = (a.mul(&b).rotation_matrix() - a.rotation_matrix() * b.rotation_matrix()).norm();
    println!("C(a*b) vs C(a)C(b): {err:.2e}");
    assert!(err < 1e-14);

    // The filters attach the attitude error on the left in the body frame:
    // q_true = exp(dphi) * q_est. A small dphi therefore perturbs the
    // world-to-body matrix to C(q_est) * C(exp(dphi))^T ... to first order
    // C(dphi)^T approximately I - skew(dphi), acting in body coordinates.
    let q_est = UnitQuat::from_euler_zyx(0.1, 0.2, 0.3);
    let dphi = Vector3::new(1e-6, -2e-6, 3e-6);
    let q_true = UnitQuat::exp(&dphi).mul(&q_est);
    let recovered = q_true.mul(&q_est.inverse()).log();
    println!(
        "recovered attitude error: [{:+.3e} {:+.3e} {:+.3e}]",
        recovered.x, recovered.y, recovered.z
    );
    assert!((recovered - dphi).norm() < 1e-12);

    println!("all convention checks passed");
}
