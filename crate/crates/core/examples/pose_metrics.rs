//! RotErr, TransErr and CamMC between a reference orbit and perturbed copies.

use cinectx::geometry::{normalize_trajectory, pose_error, pose_error_scaled, rot_y, CameraPose, Trajectory, TranslationScale, Vec3};

fn orbit(frames: usize, step_deg: f64, radius: f64) -> Trajectory {
    let poses = (0..frames)
        .map(|i| {
            let a = (i as f64 * step_deg).to_radians();
            let eye = Vec3::new(radius * a.sin(), 1.5, radius * a.cos());
            CameraPose::from_eye(rot_y(a), eye).unwrap()
        })
        .collect();
    Trajectory::new(poses).unwrap()
}

fn main() -> cinectx::Result<()> {
    let reference = normalize_trajectory(&orbit(25, 3.0, 4.0));
    let cases = [
        ("identical", orbit(25, 3.0, 4.0)),
        ("slower orbit", orbit(25, 2.5, 4.0)),
        ("wider orbit", orbit(25, 3.0, 5.0)),
    ];
    for (name, traj) in cases {
        let traj = normalize_trajectory(&traj);
        let raw = pose_error(&traj, &reference)?;
        let scaled = pose_error_scaled(&traj, &reference, TranslationScale::ReferencePathLength)?;
        println!(
            "{name:>12}: RotErr {:7.3}°  TransErr {:7.4}  CamMC {:7.4}  (path-scaled TransErr {:.4})",
            raw.rot_err, raw.trans_err, raw.cam_mc, scaled.trans_err
        );
    }
    Ok(())
}
