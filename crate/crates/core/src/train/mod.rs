//! Dataset loading, configuration, the optimization loop, checkpoints,
//! pose-driven rendering and evaluation.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod render;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use config::{LearningRates, PerceptualKind, TrainConfig};
pub use dataset::{load_dataset, load_or_build_weight_field, Dataset, FrameSample, Split, SplitPart};
pub use eval::{evaluate, normal_map_error, EvalReport};
pub use render::{render_pose, RenderedSequence};
pub use trainer::{train, train_on, TrainLogRow, TrainOutcome, Trainer};
