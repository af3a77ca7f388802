//! Experiment orchestration, artifact formats, replay and aggregation.

mod checkpoint;
mod compare;
mod config;
mod logs;
mod plan;
mod replay;
mod run;

pub use checkpoint::{load_policy, load_safety, save_checkpoint, save_safety, CONFIG_FILE, WEIGHT_EXT};
pub use compare::{compare, mean_std, CompareReport, TableRow, TraceRow, TraceSelection, TrajectoryRow, TABLE_CSV, TRACE_CSV, TRAJECTORY_CSV};
pub use config::{EvalConfig, ExperimentConfig};
pub use logs::{read_csv, tick_rows, write_csv, ArtifactHeader, EnergyRow, EvalRow, TickRow, TimingRow, TrainRow};
pub use plan::{output_root, prepare_output, ExperimentPlan, OUT_ENV};
pub use replay::{replay_episode, ReplayReport};
pub use run::{
    collect, episode_file, eval_run, pretrain, train_run, CollectRow, PretrainRow, CHECKPOINT_DIR, COLLECT_CSV,
    DATASET_FILE, ENERGY_CSV, EPISODE_DIR, EVAL_CSV, PERIODIC_DIR, PRETRAIN_CSV, TIMING_CSV, TRAIN_CSV,
};
