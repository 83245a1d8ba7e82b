//! Walk a filter through a liftoff / touchdown cycle by hand.
//!
//! Shows the two halves of contact switching: liftoff inflates the process
//! noise on the swing foothold so the filter stops trusting it, touchdown
//! re-seats the foothold from the kinematic measurement and rebuilds its
//! covariance from the current base uncertainty.

use biped_ekf::filter::{BipedFilter, FilterConfig};
use biped_ekf::model::{FilterMode, FootKinematics, ImuSample};
use biped_ekf::so3::UnitQuat;
use nalgebra::Vector3;

fn foot_block_trace(filter: &BipedFilter, foot: usize) -> f64 {
    let idx = filter.model().idx_foot_pos(foot);
    filter.covariance().view((idx, idx), (3, 3)).trace()
}

fn main() {
    let dt = 1e-3;
    let mut filter = BipedFilter::new(FilterMode::PointFoot, 2, FilterConfig::default(), dt);

    // Standing still: gravity on the accelerometer, zero rate, both feet
    // planted under the hips.
    let imu = ImuSample {
        f: Vector3::new(0.0, 0.0, 9.81),
        omega: Vector3::zeros(),
    };
    let left = FootKinematics {
        pos: Vector3::new(0.0, 0.1, -0.8),
        rot: UnitQuat::identity(),
    };
    let right = FootKinematics {
        pos: Vector3::new(0.0, -0.1, -0.8),
        rot: UnitQuat::identity(),
    };
    filter.initialize_at_rest(&imu.f, &[(0, left.clone()), (1, right.clone())]);
    println!(
        "initialized at rest, base height {:.3} m, contact = {:?}",
        filter.state().r.z,
        filter.in_contact()
    );

    let settle = |f: &mut BipedFilter, steps: usize, kin: &[(usize, FootKinematics)]| {
        for _ in 0..steps {
            f.predict(&imu);
            f.update(kin).unwrap();
        }
    };

    let both = [(0, left.clone()), (1, right.clone())];
    settle(&mut filter, 500, &both);
    let planted = foot_block_trace(&filter, 1);
    println!("\nafter 0.5 s of double support:");
    println!("  right foothold cov trace {planted:.3e}");

    // Liftoff: the foothold state stays put but its process noise is
    // inflated, so uncertainty grows while the foot swings. Updates now
    // only use the stance foot.
    filter.on_liftoff(1);
    let stance_only = [(0, left.clone())];
    settle(&mut filter, 500, &stance_only);
    let swinging = foot_block_trace(&filter, 1);
    println!("\nafter 0.5 s of swing:");
    println!("  right foothold cov trace {swinging:.3e}  ({:.0}x the planted level)", swinging / planted);
    assert!(swinging > 50.0 * planted);

    // Touchdown 20 cm ahead: the foothold is reset from the measured leg
    // kinematics, covariance rebuilt from base position and attitude
    // uncertainty plus the measurement noise. The swing-time inflation is
    // gone immediately.
    let new_right = FootKinematics {
        pos: Vector3::new(0.2, -0.1, -0.8),
        rot: UnitQuat::identity(),
    };
    filter.on_touchdown(1, &new_right);
    let reset = foot_block_trace(&filter, 1);
    println!("\nat touchdown:");
    println!("  right foothold cov trace {reset:.3e}");
    assert!(reset < 0.01 * swinging);

    // The reset writes exactly r + C^T s_p into the foothold state.
    let expected = filter.state().r
        + filter.state().q.rotation_matrix().transpose() * new_right.pos;
    let actual = filter.state().feet[1].p;
    println!(
        "  foothold re-seated at [{:+.4} {:+.4} {:+.4}], reset residual {:.1e}",
        actual.x,
        actual.y,
        actual.z,
        (actual - expected).norm()
    );
    assert!((actual - expected).norm() < 1e-12);

    let both_again = [(0, left), (1, new_right)];
    settle(&mut filter, 500, &both_again);
    println!(
        "\nback in double support, right foothold cov trace {:.3e}",
        foot_block_trace(&filter, 1)
    );
}
