//! Representation- and reward-learning objectives and their training loops:
//! temporal cycle-consistency (plain and bucketed), end-to-end preference
//! reward learning, preference learning over distance-to-goal scores with
//! static or periodically refreshed goal embeddings, triplet ranking, and
//! the goal-frame classifier.

mod losses;
mod train;

pub use losses::{
    classifier_loss, embed_trajectory, rlhf_pref_prob, soft_nearest_neighbor, tcc_pair_loss,
    triplet_loss, xprefs_prob, EmbeddedVideo,
};
pub use train::{
    prepare_batch, preference_accuracy, train_goal_classifier, train_representation,
    train_reward_model, DatasetView, LossReport, Method, PreparedBatch, TrainInputs, TrainSpec,
};
