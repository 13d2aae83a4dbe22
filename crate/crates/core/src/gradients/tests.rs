use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::check::{param_mut, structure_signature};
use super::*;
use crate::losses::{GradientMagnitudeProxy, NoPerceptual};
use crate::scenes::GradientScene;

fn all_terms() -> LossWeights {
    // heavier auxiliary weights so every term is visible above FD noise
    LossWeights { dssim: 0.2, perceptual: 0.1, normal: 0.5, self_supervised: 1.0, area: 0.5, opacity: 0.2, mask: 0.3 }
}

#[test]
fn central_difference_of_square() {
    assert!((central_difference(|x| x * x, 3.0, 1e-4) - 6.0).abs() < 1e-6);
}

#[test]
fn full_jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let proxy = GradientMagnitudeProxy::default();
    let mut total = GradientReport::default();
    for _ in 0..3 {
        let scene = GradientScene::random(&mut rng, 8, 16, 16, 2);
        let problem = scene.problem(all_terms(), &proxy, 2);
        let r = compare_gradients(&problem, &scene.surfels, 1e-4, 1e-3).unwrap();
        total.merge(&r);
    }
    assert!(total.pass_fraction() >= 0.95, "{total:?}");
    assert!(total.worst_relative <= 1e-2, "{total:?}");
}

#[test]
fn identical_image_fixture_has_zero_image_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let scene = GradientScene::random(&mut rng, 6, 16, 16, 1);
    let w = LossWeights { dssim: 0.0, perceptual: 0.0, normal: 0.0, self_supervised: 0.0, area: 0.0, opacity: 0.0, mask: 0.0 };
    let problem = scene.problem(w, &NoPerceptual, 1);
    let (posed, _) = problem.pose(&scene.surfels).unwrap();
    let render = crate::raster::render_tiled(&posed, &scene.camera, 1, 8);
    let fixture = GradientScene { target: render.color, ..scene };
    let problem = fixture.problem(w, &NoPerceptual, 1);
    let (ev, g) = problem.loss_and_gradients(&fixture.surfels).unwrap();
    assert_eq!(ev.loss.total, 0.0);
    assert!(g.flatten().iter().all(|v| *v == 0.0));
}

#[test]
fn darker_target_gives_positive_dc_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut scene = GradientScene::random(&mut rng, 1, 16, 16, 0);
    scene.surfels[0].center = crate::geometry::Vec3::zeros();
    scene.surfels[0].sh[0] = crate::geometry::Vec3::repeat(0.5);
    scene.target = crate::geometry::ImagePlane::filled(16, 16, crate::geometry::Vec3::zeros());
    let w = LossWeights { dssim: 0.0, perceptual: 0.0, normal: 0.0, self_supervised: 0.0, area: 0.0, opacity: 0.0, mask: 0.0 };
    let problem = scene.problem(w, &NoPerceptual, 0);
    let (_, g) = problem.loss_and_gradients(&scene.surfels).unwrap();
    for c in 0..3 {
        assert!(g.sh[0][0][c] > 0.0);
        let fd = fd_gradient_oracle(&problem, &scene.surfels, FIXED + c, 1e-4).unwrap();
        assert!(fd > 0.0);
    }
}

const FIXED: usize = super::check::FIXED_PARAMS;

#[test]
fn gradients_are_linear_in_the_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let scene = GradientScene::random(&mut rng, 8, 16, 16, 1);
    let base = all_terms();
    let zero = LossWeights { dssim: 0.0, perceptual: 0.0, normal: 0.0, self_supervised: 0.0, area: 0.0, opacity: 0.0, mask: 0.0 };
    let proxy = GradientMagnitudeProxy::default();
    let g_all = scene.problem(base, &proxy, 1).loss_and_gradients(&scene.surfels).unwrap().1.flatten();
    let mut sum = scene.problem(zero, &proxy, 1).loss_and_gradients(&scene.surfels).unwrap().1.flatten();
    let singles = [
        LossWeights { dssim: base.dssim, ..zero },
        LossWeights { perceptual: base.perceptual, ..zero },
        LossWeights { normal: base.normal, ..zero },
        LossWeights { self_supervised: 1.0, area: base.area, ..zero },
        LossWeights { self_supervised: 1.0, opacity: base.opacity, ..zero },
        LossWeights { mask: base.mask, ..zero },
    ];
    let g0 = sum.clone();
    for w in singles {
        let g = scene.problem(w, &proxy, 1).loss_and_gradients(&scene.surfels).unwrap().1.flatten();
        for (s, (a, b)) in sum.iter_mut().zip(g.iter().zip(&g0)) {
            *s += a - b;
        }
    }
    for (a, b) in g_all.iter().zip(&sum) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}

#[test]
fn disabled_area_term_has_no_influence() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let scene = GradientScene::random(&mut rng, 8, 16, 16, 1);
    let w = all_terms();
    let off = LossWeights { area: 0.0, ..w };
    let mut varied = scene.surfels.clone();
    varied[0].log_scale[0] += 0.001;
    let p = scene.problem(off, &NoPerceptual, 1);
    let a = p.loss_and_gradients(&scene.surfels).unwrap().0.loss.total;
    let b = p.loss(&scene.surfels).unwrap();
    assert_eq!(a, b);
    // area loss is the only term that changes with scales of invisible surfels
    let mut hidden = scene.surfels.clone();
    hidden[0].center += crate::geometry::Vec3::new(100.0, 0.0, 0.0);
    let p_off = scene.problem(off, &NoPerceptual, 1);
    let (_, g) = p_off.loss_and_gradients(&hidden).unwrap();
    assert_eq!(g.log_scale[0], [0.0, 0.0]);
    let p_on = scene.problem(w, &NoPerceptual, 1);
    let (_, g) = p_on.loss_and_gradients(&hidden).unwrap();
    assert!(g.log_scale[0][0] != 0.0);
}

#[test]
fn offscreen_surfels_get_zero_image_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut scene = GradientScene::random(&mut rng, 5, 16, 16, 1);
    let back = scene.camera.center() * 3.0;
    scene.surfels[2].center = back;
    let w = LossWeights { self_supervised: 0.0, ..all_terms() };
    let (_, g) = scene.problem(w, &NoPerceptual, 1).loss_and_gradients(&scene.surfels).unwrap();
    assert!(!g.visible[2]);
    assert_eq!(g.center[2], crate::geometry::Vec3::zeros());
    assert_eq!(g.opacity_logit[2], 0.0);
    assert!(g.sh[2].iter().all(|c| c.norm() == 0.0));
}

#[test]
fn missing_records_is_a_contract_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let scene = GradientScene::random(&mut rng, 3, 16, 16, 0);
    let (posed, frames) = scene.problem(all_terms(), &NoPerceptual, 0).pose(&scene.surfels).unwrap();
    let out = crate::raster::render_tiled(&posed, &scene.camera, 0, 8);
    let lg = crate::losses::total_loss_with_grad(
        &out,
        &crate::losses::LossTargets { image: &scene.target, mask: &scene.mask, normals: None },
        &scene.surfels,
        &all_terms(),
        &NoPerceptual,
    )
    .unwrap()
    .1;
    let r = backward(&BackwardInputs {
        canonical: &scene.surfels,
        posed: &posed,
        frames: &frames,
        camera: &scene.camera,
        outputs: &out,
        loss_grads: &lg,
        sh_degree: 0,
        normal_depth_path: true,
    });
    assert!(matches!(r, Err(crate::Error::Contract(_))));
}

#[test]
fn richardson_convergence_on_smooth_parameter() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let scene = GradientScene::random(&mut rng, 4, 16, 16, 1);
    let problem = scene.problem(all_terms(), &NoPerceptual, 1);
    let (_, g) = problem.loss_and_gradients(&scene.surfels).unwrap();
    let a = g.flatten();
    // a parameter with a clear gradient, stable structure over the FD
    // stencil and a visible truncation error
    let layout = ParamLayout::new(&scene.surfels);
    let base = structure_signature(&problem, &scene.surfels).unwrap();
    let err = |i: usize, eps: f64| (fd_gradient_oracle(&problem, &scene.surfels, i, eps).unwrap() - a[i]).abs();
    let idx = (0..layout.len())
        .find(|&i| {
            a[i].abs() > 1e-3
                && [-0.011, -0.005, 0.005, 0.011].iter().all(|d| {
                    let mut s = scene.surfels.clone();
                    *param_mut(&mut s, &layout, i) += d;
                    structure_signature(&problem, &s).unwrap() == base
                })
                && err(i, 1e-2) > 1e-7
        })
        .expect("a smooth parameter");
    let (e1, e2) = (err(idx, 1e-2), err(idx, 5e-3));
    // second-order: halving eps quarters the error
    assert!(e2 < e1 * 0.4, "{e1} {e2}");
}

#[test]
fn flat_layout_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let scene = GradientScene::random(&mut rng, 3, 8, 8, 2);
    let layout = ParamLayout::new(&scene.surfels);
    assert_eq!(layout.len(), 3 * (FIXED + 27));
    let mut s = scene.surfels.clone();
    *param_mut(&mut s, &layout, 3) += 1.0;
    assert_eq!(s[0].rotation.w, scene.surfels[0].rotation.w + 1.0);
    *param_mut(&mut s, &layout, FIXED + 27 + 9) += 1.0;
    assert_eq!(s[1].opacity_logit, scene.surfels[1].opacity_logit + 1.0);
}
