//! Synthetic tasks, the toy trainer, gradient checks, scaling benchmarks
//! and the spanning-tree ablation.

mod bench;
mod checks;
mod gradcheck;
mod task;
mod timing;
mod train;
mod trees;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use bench::{
    ablate_mst, bench_scaling, per_doubling, AblationConfig, AblationReport, AblationRow, OracleRow, ScalingConfig,
    ScalingReport, ScalingRow, StateDimRow, REPORT_SCHEMA_VERSION,
};
pub use checks::{
    check_chain_reduction, check_gradients, check_mst_optimality, check_oracle_equivalence, check_parallel_equivalence,
    check_root_invariance, check_serialization, check_soft_heap, rel_sup_error, selftest, CheckOutcome, SelftestReport,
    CHAIN_TOL, ORACLE_TOL, ROOT_TOL, STATE_DIMS,
};
pub use gradcheck::{
    check_head, check_scan, gradcheck_suite, rel_error, GradcheckReport, TrialResult, FD_STEP, GRADCHECK_FLOOR,
    GRADCHECK_TOL, MIN_HIDDEN_RMS,
};
pub use task::{
    gen_task, gen_tree_task, teacher_targets, Sample, SyntheticTask, TaskKind, DIFFUSION_STEP, TRAIN_SAMPLES,
    VALIDATION_SAMPLES,
};
pub use timing::{interleaved_medians, median_time, millis, MIN_REPEATS, WARMUP};
pub use train::{train_from, train_toy, Metrics, TrainConfig, TreeSource, DIVERGENCE_LOSS};
pub use trees::{prufer_decode, random_tree_pairs, TreeShape};

/// The generator behind every seeded harness operation.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
