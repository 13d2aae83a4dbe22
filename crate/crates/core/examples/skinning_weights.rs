//! Builds the diffused skinning-weight field for the cylinder rig, checks
//! partition of unity and bends the arm with linear blend skinning.
//!
//! cargo run --release --example skinning_weights

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surfel_avatar::geometry::Vec3;
use surfel_avatar::skinning::{build_weight_field_with, pose_to_joint_transforms, query_weights, skin_point, FieldConfig};
use surfel_avatar::synthetic::{bend_pose, rig_template};

fn main() -> surfel_avatar::Result<()> {
    let template = rig_template();
    let config = FieldConfig { resolution: [48; 3], ..FieldConfig::default() };
    let t = std::time::Instant::now();
    let mut first = 0.0;
    let field = build_weight_field_with(&template, &config, |it, r| {
        if it == 0 {
            first = r;
        }
    })?;
    println!(
        "{} voxels built in {:?}, roughness {:.3e} -> {:.3e}",
        field.voxel_count(),
        t.elapsed(),
        first,
        field.roughness()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (lo, hi) = template.bounds();
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let p = Vec3::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y), rng.random_range(lo.z..hi.z));
        worst = worst.max((query_weights(&field, &p).sum() - 1.0).abs());
    }
    println!("partition of unity over 1e5 random points: max |sum - 1| = {worst:.2e}");

    for x in [-0.4, -0.1, 0.0, 0.1, 0.4] {
        let row = query_weights(&field, &Vec3::new(x, 0.15, 0.0));
        println!("x = {x:+.1}: weight on the elbow joint {:.3}", row.weight_of(1));
    }

    let transforms = pose_to_joint_transforms(&template, &bend_pose(90.0, 0.0))?;
    for x in [-0.5, 0.0, 0.5] {
        let p = Vec3::new(x, 0.0, 0.0);
        let q = skin_point(&p, &query_weights(&field, &p), &transforms);
        println!("axis point {p:?} -> {q:?}");
    }
    Ok(())
}
