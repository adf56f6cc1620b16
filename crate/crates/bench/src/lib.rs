//! Seeded benchmark sweeps: shared warm starts, paired solver runs and CSV output.

mod output;
mod run;
mod spec;

pub use output::{aggregate, emit_csv, parse_csv, read_aggregate, AggregateRow, Agreement, RunRecord, OutputPaths};
pub use run::{initial_point, instance_seed, run_experiment, run_instance, AGREEMENT_DIST2, SOC_TARGET_SLACK, SUBGRAD_TARGET_SLACK};
pub use spec::{ExperimentSpec, ProblemKind, SolverKind, SpecOverrides};
