//! SAC task policy, safety critic, recovery policy and the training loop.

mod agent;
mod buffer;
mod config;
mod dataset;
mod eval;
pub mod nets;
mod sac;
mod safety;
mod train;

pub use agent::{select_action, Agent, Decision, Policy, Provenance};
pub use buffer::{ReplayBuffer, Transition};
pub use config::TrainConfig;
pub use dataset::{collect_offline, random_action, Dataset, DatasetMeta, DATASET_MAGIC, DATASET_VERSION};
pub use eval::{evaluate, record_episode, EvalEpisode, EvalSummary, Evaluated, StepTrace};
pub use nets::Architecture;
pub use sac::{Sac, SacLosses};
pub use safety::{auc, SafetyLosses, SafetyModels};
pub use train::{episode_seed, pretrain_safety, train, EpisodeLog, PretrainReport, TrainResult};
