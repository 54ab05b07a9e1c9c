//! Generates every movement kind in both directions around a subject and
//! writes the trajectories as JSON.
//!
//! cargo run -p cinectx --example trajectories [out_dir]

use cinectx::geometry::{geodesic_angle, Vec3};
use cinectx::trajectory_gen::{factor_range, generate, start_pose_at, MovementKind, MovementSpec};

fn main() -> cinectx::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("cinectx-trajectories"));
    std::fs::create_dir_all(&out).map_err(|e| cinectx::Error::io(&out, e))?;

    let subject = Vec3::new(0.0, 3.0, 0.0);
    let start = start_pose_at(subject, &Vec3::z(), 20.0, 4.0)?;
    for kind in MovementKind::ALL {
        for direction in kind.directions() {
            let magnitude = match factor_range(kind, direction) {
                Some((lo, hi)) => 0.5 * (lo + hi),
                None => 30.0,
            };
            let spec = MovementSpec::new(kind, direction, magnitude, start.clone()).with_subject(subject);
            let traj = generate(&spec)?;
            let (first, last) = (traj.first(), &traj.poses()[traj.frame_count() - 1]);
            println!(
                "{kind:>15} {direction:<8} magnitude {magnitude:5.2}: rotates {:6.2}°, eye moves {:5.2}",
                geodesic_angle(first.rotation(), last.rotation())?.to_degrees(),
                (last.eye() - first.eye()).norm()
            );
            traj.write(out.join(format!("{kind}_{direction}.json")))?;
        }
    }
    println!("wrote trajectories to {}", out.display());
    Ok(())
}
