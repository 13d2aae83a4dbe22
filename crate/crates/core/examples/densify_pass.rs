//! One densify-and-prune pass with hand-made gradient statistics, under
//! both eccentricity definitions and with the filter disabled.
//!
//! cargo run --release --example densify_pass

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use surfel_avatar::density::{densify_and_prune, eccentricity_with, DensifyConfig, DensifyStats, EccentricityDefinition};
use surfel_avatar::geometry::{Surfel, Vec3};

fn main() -> surfel_avatar::Result<()> {
    let surfels = vec![
        Surfel::flat(Vec3::new(0.0, 0.0, 0.0), [0.005, 0.005], 0.8, 0),
        Surfel::flat(Vec3::new(0.3, 0.0, 0.0), [0.05, 0.04], 0.8, 0),
        Surfel::flat(Vec3::new(0.0, 0.3, 0.0), [0.02, 0.02], 0.001, 0),
        Surfel::flat(Vec3::new(0.0, 0.0, 0.3), [0.091, 0.01], 0.9, 0),
        Surfel::flat(Vec3::new(0.3, 0.3, 0.0), [0.089, 0.01], 0.9, 0),
    ];
    let mut stats = DensifyStats::new(surfels.len());
    let screen = [[3e-4, 0.0], [0.0, 5e-4], [0.0; 2], [0.0; 2], [0.0; 2]];
    let center = vec![Vec3::x(); surfels.len()];
    stats.record(&screen, &center, &[true; 5]);

    for s in &surfels {
        println!(
            "scale {:?}: axis ratio {:.2}, focal ratio {:.2}",
            s.scale(),
            eccentricity_with(s, EccentricityDefinition::AxisRatio),
            eccentricity_with(s, EccentricityDefinition::FocalRatio)
        );
    }
    for (name, config) in [
        ("axis ratio > 9", DensifyConfig::default()),
        (
            "focal ratio > 9",
            DensifyConfig { eccentricity_definition: EccentricityDefinition::FocalRatio, ..DensifyConfig::default() },
        ),
        ("filter off", DensifyConfig { eccentricity_threshold: f64::INFINITY, ..DensifyConfig::default() }),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = densify_and_prune(&surfels, &stats, &config, 1.0, 500, &mut rng)?;
        println!("{name:16} {:?}", out.event);
    }
    Ok(())
}
