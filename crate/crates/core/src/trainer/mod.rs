//! Two-stage semi-supervised training: unsupervised cycle steps on unpaired
//! samples, then supervised steps on paired samples, every epoch.

mod adam;
mod models;
mod plan;
mod run;
pub mod synthetic;

pub use adam::Adam;
pub use models::{
    parameter_gradient, Checkpoint, Discriminator, Generator, ModelBundle, ToyAffineGenerator,
    ToyStatDiscriminator,
};
pub use plan::{
    build_epoch_plan, Direction, EpochPlan, FreezeMode, PlanStep, Stage, StageSelection,
    TrainingSchedule,
};
pub use run::{
    run_step, train, train_with_observer, Component, Domain, EpochSummary, FileSource,
    ImageSource, InMemorySource, OptimizerState, StepLog, StepOutcome, TrainingLog,
};
