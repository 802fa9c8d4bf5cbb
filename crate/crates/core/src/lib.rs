//! Evaluation engine for controllable multi-person video generation.
//!
//! Three benchmark tracks score a generated clip against its reference:
//! identity consistency ([`tracking`]), interaction coherence ([`pose`]) and
//! video quality ([`quality`]). [`curation`] holds the clip selection chain
//! used to build the benchmark data, [`formats`] the on-disk schemas,
//! [`eval`] the corpus driver and [`report`] the score tables.

pub mod assignment;
pub mod config;
pub mod curation;
pub mod eval;
pub mod formats;
pub mod gaussian;
pub mod geometry;
pub mod pose;
pub mod quality;
pub mod report;
pub mod sigmas;
pub mod ssim;
pub mod synth;
pub mod tracking;

pub use assignment::{solve_assignment, CostMatrix, Matching};
pub use config::{EngineConfig, ReportFormat};
pub use curation::{ClipVerdict, CurationOutcome, Detection, FilterRule, Track};
pub use eval::{evaluate_clip, evaluate_corpus, CorpusOptions, TrackSelection};
pub use formats::{ClipManifest, CurationManifest, FormatError};
pub use gaussian::{frechet_distance, GaussianSummary};
pub use geometry::{BinaryMask, BoundingBox, KeypointSet, MaskSequence, Point2, SimilarityTransform};
pub use pose::PoseSequence;
pub use quality::{FeatureSet, FrameSequence, LayerFeatureMaps};
pub use report::{ClipReport, CorpusReport};
pub use tracking::{TrackSet, TrackedBox};
