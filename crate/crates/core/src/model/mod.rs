//! Keyframe feature extractor, oracle detector, trajectory head and trainer.

pub mod detector;
pub mod feature;
pub mod io;
pub mod network;
pub mod train;

pub use detector::{jitter_box, oracle_detect, KeyframeDetection, OracleDetectorConfig};
pub use feature::{extract_feature, FeatureVector, FEATURE_LEN};
pub use io::{load_model, model_from_json, model_to_json, save_model, ModelFile};
pub use network::{forward, Dense, ForwardCache, KeyframeCorrection, ModelConfig, OutputParam, TrajectoryModel};
pub use train::{
    batch_loss_and_grad, predict_trajectories, predict_trajectory, train, train_step, LossKind, TrainConfig, TrainOutput,
    TrainingSample,
};
