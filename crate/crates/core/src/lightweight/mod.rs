//! Lightweight deployment: compressed networks and partial sampling.

pub mod compress;
pub mod patches;
pub mod sampling;

pub use compress::{finetune_pruned, max_code, prune, prune_codec, prune_jointly, quantize, quantize_tensor, PruneMask, QuantizedMlp, QuantizedTensor};
pub use patches::{edge_select_initial, patch_variance, resize_bilinear, PatchGrid};
pub use sampling::{
    evaluate_sessions, patch_codec, patch_crops, receiver_feedback, run_session, source_at, train_classifier,
    train_patch_codec, ClassifierTrainConfig, FeedbackMessage, MaskedClassifier, SamplingSummary, SessionConfig,
    SessionOutcome, STOP_CONFIDENCE,
};
