//! Trainable scorers: linear models over hashed text features for the
//! feasibility (Can) and payoff (Pay) heads, a softmax proposal policy
//! (Say) with a token-level view, and a client for external proposers.

mod adapter;
mod features;
mod linear;
mod loss;
mod say;
mod set;
mod train;

pub use adapter::{ExternalCandidate, ExternalSay};
pub use features::{
    action_features, bucket, context_features, featurize, featurize_with_seed, hash_parts, FeatureVector, FEATURE_BITS,
    FEATURE_DIM, HASH_SEED, HISTORY_WINDOW,
};
pub use linear::{can_score, pay_score, Head, LinearScorer, ModelKind};
pub use loss::{infonce_loss, mse_loss, sigmoid, softmax, softmax_cross_entropy};
pub use say::{argmax_token, perfect_say, rank, say_top_m, token_distribution, SayPolicy, TokenTrie, EOS};
pub use set::{model_path, ModelSet};
pub use train::{
    contrastive_f1, platt_scale, split_trajectories, train_can, train_pay, train_say, AdamW, TrainConfig, TrainRecord,
};
