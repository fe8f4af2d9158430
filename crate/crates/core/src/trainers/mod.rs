//! Joint, MAML and curriculum-MAML training.

mod adam;
mod meta;
mod run;

pub use adam::AdamState;
pub use meta::{
    adapt, adapt_on, meta_gradient, meta_objective, meta_step, task_meta_gradient, Episode, MetaGradient,
    MetaOrder,
};
pub use run::{
    read_history, train, train_cmaml, train_joint, train_joint_observed, train_maml, validation_metrics,
    write_history, EpochObserver, EpochRecord, Method, TrainOutcome, TrainRunConfig,
};
