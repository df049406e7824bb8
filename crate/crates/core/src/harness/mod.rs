//! Experiment harness: TOML configuration with presets, single runs,
//! convergence studies, λ-sweeps, the perturbation probe, the operator
//! suite, and deterministic CSV/JSON output.

pub mod config;
pub mod output;
pub mod run;
pub mod studies;
pub mod validate;

pub use config::{
    load_config, parse_config, Coefficient, InitialData, OutputSpec, Preset, SimConfig, SolverChoice,
    SolverKind,
};
pub use output::{emit_csv, emit_json, format_csv};
pub use run::{run, RunReport, RunStatus, SolverReport};
pub use studies::{convergence_study, lambda_sweep, perturbation_probe, ConvergenceTable, PerturbReport, SweepRow};
pub use validate::{operator_suite, OpCheck};
