//! Load- and correctness-testing harness for the sieve broker.
//!
//! The pieces compose into a pipeline:
//!
//! 1. [`profile`] — declarative description of a workload (sizes, ranges,
//!    target selectivity, seed).
//! 2. [`generate`] — deterministic expansion of a profile into a concrete
//!    [`workload::Workload`]: subscriptions calibrated to the selectivity
//!    target, policies, group assignments, and a publication plan.
//! 3. [`runner`] — drives the workload against a live cluster on an
//!    open-loop schedule and records every acknowledgement and delivery.
//! 4. [`oracle`] — recomputes, from scratch, which deliveries the run
//!    should have produced, and diffs that against what was observed.
//! 5. [`report`] — percentile summaries plus JSON/CSV serialization.
//! 6. [`sweep`] — saturation search over one dimension (matchers, workers,
//!    subscriptions, …), one CSV row per point.
//!
//! [`local`] boots an in-process cluster so tests and single-host
//! measurements need no external orchestration; the `cluster` binary does
//! the same with separate OS processes.

pub mod generate;
pub mod local;
pub mod oracle;
pub mod profile;
pub mod report;
pub mod runner;
pub mod sweep;
pub mod trace;
pub mod workload;

pub use generate::{gen_workload, GenerateError};
pub use local::{ClusterSpec, LocalCluster};
pub use profile::{AttributeSpec, GroupsSpec, ProfileError, WorkloadProfile};
pub use report::{BenchReport, LatencySummary, CSV_HEADER};
pub use runner::{run_load, RunConfig, RunError, RunOutcome};
pub use sweep::{
    find_saturation, sweep, Dimension, SaturationResult, SweepConfig, SweepError, SweepOutcome,
    SweepPoint,
};
pub use trace::{CorrectnessRecord, Trace};
pub use workload::Workload;
