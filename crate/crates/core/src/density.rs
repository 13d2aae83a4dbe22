//! Adaptive density control: clone and split where the screen-space
//! positional gradient is large, then prune transparent, oversized and
//! elongated surfels.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Surfel, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EccentricityDefinition {
    /// `s_max / s_min`.
    #[default]
    AxisRatio,
    /// `sqrt(s_max^2 - s_min^2) / s_min`, focal distance over minor axis.
    FocalRatio,
}

impl std::str::FromStr for EccentricityDefinition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "axis-ratio" => Ok(Self::AxisRatio),
            "focal-ratio" => Ok(Self::FocalRatio),
            _ => Err(Error::Config(format!(
                "unknown eccentricity definition '{s}' (expected axis-ratio or focal-ratio)"
            ))),
        }
    }
}

pub fn eccentricity(surfel: &Surfel) -> f64 {
    eccentricity_with(surfel, EccentricityDefinition::AxisRatio)
}

pub fn eccentricity_with(surfel: &Surfel, def: EccentricityDefinition) -> f64 {
    let [a, b] = surfel.scale();
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    match def {
        EccentricityDefinition::AxisRatio => hi / lo,
        EccentricityDefinition::FocalRatio => (hi * hi - lo * lo).max(0.0).sqrt() / lo,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensifyConfig {
    /// Mean screen-space gradient norm (normalized device units) that triggers densification.
    pub grad_threshold: f64,
    /// Fraction of the scene extent separating clone (below) from split.
    pub split_scale_threshold: f64,
    pub opacity_prune_threshold: f64,
    /// Fraction of the scene extent above which a surfel is pruned as too large.
    pub max_world_size: f64,
    pub eccentricity_filter: bool,
    pub eccentricity_threshold: f64,
    pub eccentricity_definition: EccentricityDefinition,
    pub interval: usize,
    pub start_iteration: usize,
    pub stop_iteration: usize,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        DensifyConfig {
            grad_threshold: 2e-4,
            split_scale_threshold: 0.01,
            opacity_prune_threshold: 0.005,
            max_world_size: 0.1,
            eccentricity_filter: true,
            eccentricity_threshold: 9.0,
            eccentricity_definition: EccentricityDefinition::AxisRatio,
            interval: 100,
            start_iteration: 500,
            stop_iteration: 15000,
        }
    }
}

impl DensifyConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grad_threshold", self.grad_threshold),
            ("split_scale_threshold", self.split_scale_threshold),
            ("opacity_prune_threshold", self.opacity_prune_threshold),
            ("max_world_size", self.max_world_size),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("densify.{name} must be positive, got {v}")));
            }
        }
        if !(self.eccentricity_threshold > 1.0) {
            return Err(Error::Config(format!(
                "densify.eccentricity_threshold must exceed 1, got {}",
                self.eccentricity_threshold
            )));
        }
        if self.interval == 0 {
            return Err(Error::Config("densify.interval must be positive".into()));
        }
        Ok(())
    }

    /// Whether a densify pass runs after `iteration` (1-based count of completed steps).
    pub fn is_due(&self, iteration: usize) -> bool {
        iteration >= self.start_iteration && iteration < self.stop_iteration && iteration % self.interval == 0
    }

    fn filter_threshold(&self) -> Option<f64> {
        (self.eccentricity_filter && self.eccentricity_threshold.is_finite()).then_some(self.eccentricity_threshold)
    }
}

/// Gradient statistics accumulated between densify passes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DensifyStats {
    pub grad_norm_sum: Vec<f64>,
    pub count: Vec<u32>,
    /// Summed canonical-space center gradient, used as the clone direction.
    pub center_grad_sum: Vec<Vec3>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        DensifyStats {
            grad_norm_sum: vec![0.0; n],
            count: vec![0; n],
            center_grad_sum: vec![Vec3::zeros(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.count.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count.is_empty()
    }

    /// Adds one view's gradients for the surfels that were visible in it.
    pub fn record(&mut self, screen: &[[f64; 2]], center: &[Vec3], visible: &[bool]) {
        for (i, &vis) in visible.iter().enumerate() {
            if vis {
                let [x, y] = screen[i];
                self.grad_norm_sum[i] += (x * x + y * y).sqrt();
                self.count[i] += 1;
                self.center_grad_sum[i] += center[i];
            }
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.grad_norm_sum[i] / self.count[i] as f64
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DensifyEvent {
    pub iteration: usize,
    pub clones: usize,
    pub splits: usize,
    pub prunes_opacity: usize,
    pub prunes_size: usize,
    pub prunes_eccentricity: usize,
    pub total_surfels: usize,
}

impl DensifyEvent {
    pub fn prunes(&self) -> usize {
        self.prunes_opacity + self.prunes_size + self.prunes_eccentricity
    }
}

#[derive(Clone, Debug)]
pub struct DensifyOutcome {
    pub surfels: Vec<Surfel>,
    /// For each output surfel, the input surfel whose optimizer state it
    /// inherits; `None` for new surfels.
    pub origin: Vec<Option<usize>>,
    pub event: DensifyEvent,
}

/// Why a surfel would be pruned, in priority order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PruneReason {
    Opacity,
    Size,
    Eccentricity,
}

pub fn prune_reason(surfel: &Surfel, config: &DensifyConfig, extent: f64) -> Option<PruneReason> {
    if surfel.opacity() < config.opacity_prune_threshold {
        return Some(PruneReason::Opacity);
    }
    if surfel.max_scale() > config.max_world_size * extent {
        return Some(PruneReason::Size);
    }
    if let Some(t) = config.filter_threshold() {
        if eccentricity_with(surfel, config.eccentricity_definition) > t {
            return Some(PruneReason::Eccentricity);
        }
    }
    None
}

/// One densify-and-prune pass. `extent` is the scene bounding-sphere radius.
pub fn densify_and_prune<R: Rng + ?Sized>(
    surfels: &[Surfel],
    stats: &DensifyStats,
    config: &DensifyConfig,
    extent: f64,
    iteration: usize,
    rng: &mut R,
) -> Result<DensifyOutcome> {
    if stats.len() != surfels.len() {
        return Err(Error::Contract(format!(
            "densify stats cover {} surfels, set has {}",
            stats.len(),
            surfels.len()
        )));
    }
    let mut event = DensifyEvent { iteration, ..Default::default() };
    let split_limit = config.split_scale_threshold * extent;
    let mut out: Vec<(Surfel, Option<usize>)> = Vec::with_capacity(surfels.len());
    let mut added: Vec<Surfel> = Vec::new();
    for (i, s) in surfels.iter().enumerate() {
        let hot = stats.mean(i) > config.grad_threshold;
        if !hot {
            out.push((s.clone(), Some(i)));
            continue;
        }
        if s.max_scale() < split_limit {
            event.clones += 1;
            out.push((s.clone(), Some(i)));
            let mut copy = s.clone();
            let g = stats.center_grad_sum[i];
            if g.norm() > 0.0 {
                copy.center -= g.normalize() * (0.5 * s.max_scale());
            }
            added.push(copy);
        } else {
            event.splits += 1;
            let r = s.rotation_matrix();
            let [su, sv] = s.scale();
            for _ in 0..2 {
                let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                let mut child = s.clone();
                child.center = s.center + r.column(0) * (a * su) + r.column(1) * (b * sv);
                child.log_scale = [s.log_scale[0] - 1.6f64.ln(), s.log_scale[1] - 1.6f64.ln()];
                added.push(child);
            }
        }
    }
    out.extend(added.into_iter().map(|s| (s, None)));

    let mut surv = Vec::with_capacity(out.len());
    let mut origin = Vec::with_capacity(out.len());
    for (s, o) in out {
        match prune_reason(&s, config, extent) {
            Some(PruneReason::Opacity) => event.prunes_opacity += 1,
            Some(PruneReason::Size) => event.prunes_size += 1,
            Some(PruneReason::Eccentricity) => event.prunes_eccentricity += 1,
            None => {
                surv.push(s);
                origin.push(o);
            }
        }
    }
    event.total_surfels = surv.len();
    if surv.is_empty() {
        return Err(Error::Training {
            iteration,
            reason: "every surfel was pruned".into(),
        });
    }
    Ok(DensifyOutcome { surfels: surv, origin, event })
}
