//! Renders a scene panorama, cuts 20 context views out of it and checks the
//! first view against a direct render.
//!
//! cargo run -p cinectx --example panorama_context [out_dir]

use cinectx::geometry::{look_at, Vec3};
use cinectx::io::write_png;
use cinectx::panorama::{perspective_to_equirect_accumulate, scene_context_from_panorama};
use cinectx::scene::{build_scene, render_frame, render_panorama};

fn main() -> cinectx::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("cinectx-panorama"));
    std::fs::create_dir_all(&out).map_err(|e| cinectx::Error::io(&out, e))?;

    let scene = build_scene(5);
    let eye = scene.subject.focus() + Vec3::new(0.0, 0.0, 4.0);
    let pano = render_panorama(&scene, &eye, 256)?;
    write_png(out.join("panorama.png"), pano.image())?;

    let views = scene_context_from_panorama(&pano, 0.0, 20, 96, 96)?;
    for (i, v) in views.views.iter().enumerate() {
        write_png(out.join(format!("view_{i:02}.png")), &v.image)?;
    }

    // View 0 looks down -z, as does a camera at `eye` aimed along -z.
    let pose = look_at(eye, eye - Vec3::z(), Vec3::y())?;
    let direct = render_frame(&scene, &pose, 0, false, 96, 96, 90.0)?;
    let err = views.views[0].image.mean_abs_diff(&direct.image)?;
    println!("view 0 vs direct render: mean abs error {:.2}/255", err * 255.0);

    let back = perspective_to_equirect_accumulate(&views, 128)?;
    let covered = back.coverage.iter().filter(|c| **c).count();
    println!(
        "20 views cover {:.1}% of the panorama",
        100.0 * covered as f64 / back.coverage.len() as f64
    );
    write_png(out.join("reprojected.png"), back.panorama.image())?;
    println!("wrote views to {}", out.display());
    Ok(())
}
