//! Mixing experiments, saturated disks, and the transitivity pipeline.

mod balls;
mod disks;
mod experiment;
mod pipeline;

pub use balls::{stream_rng, OpenBall};
pub use disks::{saturated_disk_pair, DiskOptions, SaturatedDisk};
pub use experiment::{
    mixing_experiment, random_ball_pairs, verify_witness, HitWitness, MixingOptions, MixingReport, PairResult, PairStatus,
    TorusMap,
};
pub use pipeline::{
    perturbation_sweep, transitivity_pipeline, DegreeCheck, FiberStep, PipelineOptions, PipelineReport, ShSummary,
    StepStatus, StepVerdict, SweepEntry, SweepOptions, SweepReport, LAMBDA_LABEL,
};
