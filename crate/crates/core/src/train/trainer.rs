//! The optimization loop.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{flatten_surfels, surfel_from_params, Adam, GroupRates};
use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::dataset::{load_dataset, load_or_build_weight_field, Dataset};
use crate::density::{densify_and_prune, DensifyEvent, DensifyStats};
use crate::error::{Error, Result};
use crate::geometry::sh::coeff_count;
use crate::geometry::{Surfel, Vec3};
use crate::gradients::Problem;
use crate::losses::{psnr, LossBreakdown, LossTargets, PerceptualProvider};
use crate::raster::RenderSettings;
use crate::skinning::kdtree::KdTree;
use crate::skinning::{pose_to_joint_transforms, query_weights, JointTransforms, SkinnedTemplate, WeightField, WeightRow};

pub const INITIAL_OPACITY: f64 = 0.1;

/// One surfel per template vertex, tangent to the vertex normal, sized by
/// the mean distance to the three nearest neighbours.
pub fn initial_surfels(template: &SkinnedTemplate, sh_degree: usize) -> Result<Vec<Surfel>> {
    let verts = &template.rest_vertices;
    if verts.is_empty() {
        return Err(Error::Training { iteration: 0, reason: "template has no vertices to seed surfels".into() });
    }
    let normals = template.vertex_normals();
    let tree = KdTree::new(verts);
    let n_sh = coeff_count(sh_degree);
    Ok(verts
        .iter()
        .zip(&normals)
        .enumerate()
        .map(|(i, (p, n))| {
            let nn = tree.k_nearest(p, 3, Some(i));
            let mut scale = if nn.is_empty() {
                0.01
            } else {
                nn.iter().map(|(_, d2)| d2.sqrt()).sum::<f64>() / nn.len() as f64
            };
            if !(scale > 1e-7) {
                scale = 1e-7;
            }
            let normal = if n.norm() > 0.5 { *n } else { Vec3::z() };
            let helper = if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let tu = helper.cross(&normal).normalize();
            let tv = normal.cross(&tu);
            Surfel::from_frame(*p, tu, tv, [scale, scale], INITIAL_OPACITY, vec![Vec3::zeros(); n_sh])
        })
        .collect())
}

/// Bounding-sphere radius of the template, used to scale center rates and
/// densification thresholds.
pub fn scene_extent(template: &SkinnedTemplate) -> f64 {
    let (lo, hi) = template.bounds();
    (0.5 * (hi - lo).norm()).max(1e-6)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainLogRow {
    pub iteration: usize,
    pub view: String,
    pub frame: String,
    pub loss: LossBreakdown,
    pub psnr: f64,
    pub surfels: usize,
    pub densify: Option<DensifyEvent>,
}

pub const TRAIN_LOG_HEADER: &str = "iteration,view,frame,l1,dssim,perceptual,photometric,normal,area,opacity,mask,total,psnr,surfels,clones,splits,prunes_opacity,prunes_size,prunes_eccentricity,total_surfels";

pub fn format_train_log(rows: &[TrainLogRow]) -> String {
    let mut out = String::from(TRAIN_LOG_HEADER);
    out.push('\n');
    for r in rows {
        let l = &r.loss;
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.iteration,
            r.view,
            r.frame,
            l.l1,
            l.dssim,
            l.perceptual,
            l.photometric,
            l.normal,
            l.area,
            l.opacity,
            l.mask,
            l.total,
            r.psnr,
            r.surfels
        );
        match &r.densify {
            Some(e) => {
                let _ = writeln!(
                    out,
                    ",{},{},{},{},{},{}",
                    e.clones, e.splits, e.prunes_opacity, e.prunes_size, e.prunes_eccentricity, e.total_surfels
                );
            }
            None => out.push_str(",,,,,,\n"),
        }
    }
    out
}

pub struct Trainer<'a> {
    pub config: TrainConfig,
    dataset: &'a Dataset,
    field: &'a WeightField,
    perceptual: Box<dyn PerceptualProvider>,
    surfels: Vec<Surfel>,
    optimizer: Adam,
    stats: DensifyStats,
    extent: f64,
    transforms: BTreeMap<String, JointTransforms>,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
    iteration: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, dataset: &'a Dataset, field: &'a WeightField) -> Result<Self> {
        config.validate()?;
        let surfels = initial_surfels(&dataset.template, config.sh_degree)?;
        let order = dataset
            .split_samples("train")?
            .iter()
            .map(|s| dataset.samples.iter().position(|x| std::ptr::eq(x, *s)).expect("sample from dataset"))
            .collect::<Vec<_>>();
        if order.is_empty() {
            return Err(Error::Config("training split is empty".into()));
        }
        let mut transforms = BTreeMap::new();
        for (name, pose) in &dataset.poses {
            transforms.insert(name.clone(), pose_to_joint_transforms(&dataset.template, pose)?);
        }
        Ok(Trainer {
            perceptual: config.perceptual.provider(),
            optimizer: Adam::new(surfels.len(), config.sh_degree),
            stats: DensifyStats::new(surfels.len()),
            extent: scene_extent(&dataset.template),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            surfels,
            transforms,
            cursor: order.len(),
            order,
            config,
            dataset,
            field,
            iteration: 0,
        })
    }

    pub fn surfels(&self) -> &[Surfel] {
        &self.surfels
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn active_sh_degree(&self) -> usize {
        (self.iteration / self.config.sh_warmup_interval).min(self.config.sh_degree)
    }

    fn weight_rows(&self) -> Vec<WeightRow> {
        self.surfels.iter().map(|s| query_weights(self.field, &s.center)).collect()
    }

    fn next_sample(&mut self) -> usize {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    fn rates(&self) -> GroupRates {
        let lr = &self.config.learning_rates;
        GroupRates {
            center: lr.center_at(self.iteration, self.config.iterations) * self.extent,
            rotation: lr.rotation,
            scale: lr.scale,
            opacity: lr.opacity,
            sh_dc: lr.sh_dc,
            sh_rest: lr.sh_rest,
        }
    }

    /// One optimization step on the next sampled frame.
    pub fn step(&mut self) -> Result<TrainLogRow> {
        let sample = &self.dataset.samples[self.next_sample()];
        let camera = self.dataset.camera(&sample.view)?;
        let transforms = &self.transforms[&sample.frame];
        let rows = self.weight_rows();
        let problem = Problem {
            camera,
            weight_rows: &rows,
            transforms,
            targets: LossTargets { image: &sample.rgb, mask: &sample.mask, normals: sample.normals.as_ref() },
            loss_weights: self.config.loss,
            settings: RenderSettings {
                sh_degree: self.active_sh_degree(),
                tile_size: self.config.tile_size,
                precision: self.config.precision,
                keep_records: true,
                ..RenderSettings::default()
            },
            perceptual: self.perceptual.as_ref(),
            normal_depth_path: self.config.normal_depth_path,
        };
        let (eval, grads) = problem.loss_and_gradients(&self.surfels)?;
        let it = self.iteration + 1;
        let l = &eval.loss;
        for (name, v) in [
            ("l1", l.l1),
            ("dssim", l.dssim),
            ("perceptual", l.perceptual),
            ("normal", l.normal),
            ("area", l.area),
            ("opacity", l.opacity),
            ("mask", l.mask),
            ("total", l.total),
        ] {
            if !v.is_finite() {
                return Err(Error::Training { iteration: it, reason: format!("{name} loss is {v}") });
            }
        }
        if !grads.is_finite() {
            return Err(Error::Training { iteration: it, reason: "non-finite gradient".into() });
        }
        let train_psnr = psnr(&eval.outputs.color, &sample.rgb)?;

        self.stats.record(&grads.screen, &grads.center, &grads.visible);
        let mut params = flatten_surfels(&self.surfels);
        let rates = self.rates();
        self.optimizer.update(&mut params, &grads.flatten(), &rates)?;
        let stride = self.optimizer.stride();
        for (s, p) in self.surfels.iter_mut().zip(params.chunks_exact(stride)) {
            *s = surfel_from_params(p);
            s.normalize_rotation();
        }
        self.iteration = it;

        let mut densify = None;
        if self.config.densify.is_due(it) {
            let out = densify_and_prune(&self.surfels, &self.stats, &self.config.densify, self.extent, it, &mut self.rng)?;
            self.optimizer.remap(&out.origin);
            self.surfels = out.surfels;
            self.stats = DensifyStats::new(self.surfels.len());
            densify = Some(out.event);
        }
        Ok(TrainLogRow {
            iteration: it,
            view: sample.view.clone(),
            frame: sample.frame.clone(),
            loss: eval.loss,
            psnr: train_psnr,
            surfels: self.surfels.len(),
            densify,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let t = &self.dataset.template;
        Checkpoint {
            iteration: self.iteration as u64,
            config_hash: self.config.hash(),
            surfels: self.surfels.clone(),
            optimizer: self.optimizer.clone(),
            joint_parents: t.joint_parents.clone(),
            rest_joint_transforms: t.rest_joint_transforms.clone(),
            weight_rows: self.weight_rows(),
        }
    }
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<TrainLogRow>,
}

/// Trains in memory. `observe` sees every log row as it is produced.
pub fn train_on(
    config: &TrainConfig,
    dataset: &Dataset,
    field: &WeightField,
    mut observe: impl FnMut(&TrainLogRow),
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone(), dataset, field)?;
    let mut log = Vec::with_capacity(config.iterations);
    let interval = config.checkpoint_interval;
    for _ in 0..config.iterations {
        let row = trainer.step()?;
        observe(&row);
        if interval > 0 && row.iteration % interval == 0 && row.iteration < config.iterations {
            let path = config.output.join(format!("checkpoint-{:06}.bin", row.iteration));
            trainer.checkpoint().save(&path)?;
        }
        log.push(row);
    }
    Ok(TrainOutcome { checkpoint: trainer.checkpoint(), log })
}

/// Loads the dataset named in `config`, trains and writes
/// `checkpoint.bin`, `train_log.csv` and `config.toml` into the output
/// directory.
pub fn train(config: &TrainConfig, observe: impl FnMut(&TrainLogRow)) -> Result<TrainOutcome> {
    config.validate()?;
    let dataset = load_dataset(&config.dataset)?;
    let (field, _) = load_or_build_weight_field(&config.dataset, &dataset.template, &config.weight_field.field_config())?;
    fs::create_dir_all(&config.output)?;
    fs::write(config.output.join("config.toml"), config.to_toml())?;
    let outcome = train_on(config, &dataset, &field, observe)?;
    write_outputs(&config.output, &outcome)?;
    Ok(outcome)
}

pub fn write_outputs(dir: &Path, outcome: &TrainOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    outcome.checkpoint.save(&dir.join("checkpoint.bin"))?;
    fs::write(dir.join("train_log.csv"), format_train_log(&outcome.log))?;
    Ok(())
}
