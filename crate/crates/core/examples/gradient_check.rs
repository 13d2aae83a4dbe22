//! Compares analytic gradients of the full loss with central differences
//! on a small skinned scene.
//!
//! cargo run --release --example gradient_check -- [seed]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use surfel_avatar::gradients::check::ParamKind;
use surfel_avatar::gradients::{compare_gradients, ParamLayout};
use surfel_avatar::losses::{GradientMagnitudeProxy, LossWeights};
use surfel_avatar::scenes::GradientScene;

fn main() -> surfel_avatar::Result<()> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse().expect("seed")).unwrap_or(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = GradientScene::random(&mut rng, 8, 16, 16, 1);
    let weights = LossWeights { perceptual: 0.1, area: 0.5, opacity: 0.5, ..LossWeights::default() };
    let proxy = GradientMagnitudeProxy::default();
    let problem = scene.problem(weights, &proxy, 1);

    let (eval, grads) = problem.loss_and_gradients(&scene.surfels)?;
    println!("loss breakdown {:?}", eval.loss);

    let report = compare_gradients(&problem, &scene.surfels, 1e-6, 1e-3)?;
    println!(
        "checked {} parameters ({} excluded at truncation boundaries): {:.1}% within 1e-3, worst relative error {:.2e}",
        report.checked,
        report.excluded,
        100.0 * report.pass_fraction(),
        report.worst_relative
    );

    let layout = ParamLayout::new(&scene.surfels);
    let flat = grads.flatten();
    let mut largest: Vec<(usize, f64)> = flat.iter().cloned().enumerate().collect();
    largest.sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).unwrap());
    for (i, g) in largest.into_iter().take(5) {
        let (surfel, kind): (usize, ParamKind) = layout.locate(i);
        println!("  surfel {surfel} {kind:?}: {g:+.4e}");
    }
    Ok(())
}
