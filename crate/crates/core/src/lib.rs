//! Evaluation and benchmarking engine for volumetric object detection.
//!
//! The pipeline reads NIfTI volumes ([`nifti`]), optionally resamples and
//! normalizes them ([`preprocessing`]), turns label masks into box-shaped
//! reference objects ([`geometry`]), post-processes predictions
//! ([`postprocess`]), matches them to the reference ([`matching`]) and scores
//! the result with mAP and FROC ([`metrics`], [`evaluation`]). Multiple methods
//! are compared with a paired image-level bootstrap ([`ranking`]).

pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod manifest;
pub mod matching;
pub mod metrics;
pub mod nifti;
pub mod postprocess;
pub mod preprocessing;
pub mod ranking;
pub mod synthetic;
pub mod volume;

pub use error::{Error, ErrorCategory, Result};
pub use evaluation::{evaluate, EvalSettings, EvaluationResult, GroundTruthSet};
pub use geometry::{box_center, box_iou, connected_components, instances_to_objects, BoundingBox3D, Connectivity, GroundTruthObject, InstanceMap};
pub use manifest::{load_manifest, load_predictions, DatasetManifest, PredictionFile, Strictness};
pub use matching::{match_image, Detection, DuplicatePolicy, MatchCriterion, MatchResult, OfficialProtocol, RadiusSource};
pub use metrics::{average_precision, froc, mean_average_precision, pr_curve, ApInterpolation, EvalConfig, PrCurve};
pub use nifti::{read_volume, write_volume};
pub use postprocess::{apply_postprocess, nms, PostprocessConfig};
pub use preprocessing::{clip_percentiles, preprocess, resample, zscore_normalize, Interpolation, PreprocessConfig};
pub use ranking::{bootstrap_rank, delta_vs_baseline, BootstrapOptions, MethodRun, RankMetric, RankingDistribution, TieMode};
pub use volume::{ElementKind, Volume, VoxelData};
