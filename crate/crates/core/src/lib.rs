//! Amodal instance segmentation by composing a visible and an occluded
//! mask branch through a learned per-category channel mixer.
//!
//! The crate is organised bottom-up: [`mask`] (set algebra and RLE),
//! [`scene`] (synthetic layered scenes with known occlusion order),
//! [`heads`] (simulated noisy branch outputs), [`jigsaw`] (the composition
//! head, its gradient and trainer), [`eval`] (COCO-style AP/AR),
//! [`relation`] (reading occlusion order from trained weights) and
//! [`pipeline`] (config-driven glue used by the command-line tool).

pub mod chart;
pub mod error;
pub mod eval;
pub mod heads;
pub mod io;
pub mod jigsaw;
pub mod loss;
pub mod mask;
pub mod pipeline;
pub mod relation;
mod rng;
pub mod scene;

pub use error::{Error, Result};
pub use eval::{evaluate, Detection, EvalReport, MaskTarget};
pub use heads::{corrupt, corrupt_in_scene, ContextMode, MaskStack, NoiseModel, Window};
pub use jigsaw::{add_baseline, forward, predict_amodal, train, CompositionWeights, Init, TrainConfig};
pub use mask::{intersect, iou, subtract, union, BinaryMask, InstanceRecord, RleMask};
pub use relation::{analyze, prior_agreement, Direction, RelationFinding};
pub use scene::{pairwise_occlusion_probability, sample_scene, CategorySpec, OcclusionPriorSpec, Scene, SceneConfig, Shape};
