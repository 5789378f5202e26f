//! Save a scene as a KITTI scan with JSON labels, then load it back.

use ffam::io::{load_scene_dir, save_scene};
use ffam::scene::{synthetic_dataset, SceneConfig};

fn main() -> ffam::Result<()> {
    let dir = std::env::temp_dir().join("ffam-kitti-example");
    std::fs::create_dir_all(&dir)?;
    for scene in synthetic_dataset(20, 3, &SceneConfig::default()) {
        save_scene(&dir, &scene)?;
    }
    for scene in load_scene_dir(&dir)? {
        println!(
            "{}: {} points, {} labels",
            scene.scene_id,
            scene.cloud.len(),
            scene.ground_truth.len()
        );
        for g in &scene.ground_truth {
            let b = &g.bbox;
            println!(
                "  {:?} center ({:.2}, {:.2}, {:.2}) size ({:.2}, {:.2}, {:.2}) yaw {:.2}",
                g.class, b.center[0], b.center[1], b.center[2], b.size[0], b.size[1], b.size[2], b.yaw
            );
        }
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
