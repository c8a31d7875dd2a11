//! Synthetic stand-in for real videos: feature timelines with planted
//! actions, a simulated annotator and a segment classifier.

pub mod annotator;
pub mod classifier;
pub mod io;
pub mod video;

pub use annotator::{
    history_observed_fraction, observed_fraction, simulate_annotator, AnnotatorConfig,
    HistorySource, SearchHistory,
};
pub use classifier::{classify_segment, train_classifier, ClassifierConfig, ClassifierScores, SegmentClassifier};
pub use io::GroundTruth;
pub use video::{generate_video, ActionInstance, FeatureTimeline, World, WorldConfig};
