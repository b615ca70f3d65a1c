//! Loss, exact gradients, optimizer, schedule, training loop and cost accounting.

mod backward;
mod complexity;
mod gradcheck;
mod loss;
mod schedule;
mod sgd;
mod train;

pub use backward::gcf_backward;
pub use complexity::{count_flops, count_params, measure_counts, FlopCount, MeasuredCounts, REFERENCE_BACKBONE_PARAMS};
pub use gradcheck::{default_grid, gradcheck, GradCheckReport, FD_STEP, REL_ERR_FLOOR};
pub use loss::{cross_entropy, sparsity_loss, total_loss, LossConfig, PROB_FLOOR};
pub use schedule::{PlateauAction, PlateauScheduler};
pub use sgd::{sgd_step, SgdConfig, SgdState};
pub use train::{evaluate, train, ClipObjective, EpochRecord, GcfObjective, Objective, Sample, Trainer};
