//! Moldable task scheduling for MIG-style reconfigurable GPU partitions.
//!
//! A batch of tasks, each with a known execution time per instance size, is
//! placed on a GPU whose slices can be dynamically regrouped into instances.
//! The scheduler works in three phases: a family of candidate slice
//! allocations, list scheduling with LPT over the repartitioning tree, and
//! local-search refinement. Streams of batches are concatenated with time
//! reversal and slice-wise overlap. Baseline schedulers, an exhaustive
//! oracle, a synthetic workload generator, feasibility validation and an
//! experiment harness round out the library.

pub mod allocation;
pub mod baselines;
pub mod error;
pub mod experiments;
pub mod gantt;
pub mod io;
pub mod metrics;
pub mod model;
pub mod multibatch;
pub mod oracle;
pub mod refine;
pub mod sched;
pub mod validate;
pub mod workload;

pub use allocation::{allocation_family, Allocation, AllocationFamily};
pub use error::{Error, Result};
pub use model::{
    builtin_model, enumerate_partitions, is_feasible_instance_set, GpuModel, Instance,
    PartitionSlot,
};
pub use multibatch::{concat, reverse_schedule, run_stream, ConcatOptions, StreamOptions};
pub use oracle::{brute_force_optimal, lower_bound, lower_bound_multibatch, OracleOptions};
pub use refine::{refine, RefineOptions, RefineReport};
pub use sched::{
    far_schedule, schedule_allocation, FarOptions, FarReport, ReconfigEvent, ReconfigKind,
    Schedule, ScheduleOptions, ScheduledTask,
};
pub use validate::{validate, ValidationReport};
pub use workload::{generate_synthetic, size_counts, SyntheticConfig, Task};
