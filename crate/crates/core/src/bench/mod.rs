//! Evaluation harness: datasets, experiment files, transfer matrices,
//! parameter sweeps and result files.

mod dataset;
mod matrix;
mod results;
mod spec;
mod zoo;

pub use dataset::{
    encode_idx, gen_blobs, gen_blobs_with, load_idx, parse_idx, write_idx, BlobParams, Dataset,
    IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use matrix::{
    ablation_sweep, ablation_sweep_experiment, build_provider, eligible_images, image_rng,
    run_experiment, run_matrix, Crafted, MatrixRun, Outcome, SweepParam, SWEEP_FIXED_BETA,
    SWEEP_FIXED_SAMPLES,
};
pub use results::{
    write_results, ResultFormat, ResultRow, ResultTable, SweepEntry, SweepTable, CSV_HEADER,
};
pub use spec::{
    AttackPlan, AttackSpec, DataSpec, Experiment, ExperimentSpec, Source, SourceEntry, Target,
    TransformSpec, DEFAULT_N_IMAGES, EVAL_DATA_SEED,
};
pub use zoo::train_model;
