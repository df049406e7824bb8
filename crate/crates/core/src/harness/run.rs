//! Single-run orchestration: solvers, diagnostics, outputs and the report.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{SimConfig, SolverKind};
use super::output::{emit_csv, emit_json, thin_records};
use crate::diagnostics::{
    certify_global_bound, detect_blowup, eulerian_records, lagrangian_records, logistic_predict,
    BlowupPrediction, DiagnosticsRecord, GlobalBound,
};
use crate::error::{MudpError, Result};
use crate::eulerian::{evolve_guarded, EulerianRun};
use crate::integrator::{first_crossing, BlowupGuard, OutcomeKind, RunOutcome, StopTrigger};
use crate::lagrangian::{evolve_particles_guarded, init_particles_with_lambda, spectral_velocity, LagrangianRun};
use crate::spectral::{mean, Quadrature, RealField};

/// Slope floors at which detection times are reported.
pub const SENSITIVITY_FLOORS: [f64; 3] = [-1e3, -1e4, -1e5];

/// Fraction of the stop time (or of the predicted blow-up time) that
/// pre-blow-up checks are restricted to.
pub const PRE_BLOWUP_FRACTION: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloorCrossing {
    pub floor: f64,
    /// First step time with `min u_x` below `floor`; `None` when not reached
    /// before the run stopped.
    pub t_detect: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub solver: SolverKind,
    pub outcome: RunOutcome,
    pub steps: usize,
    pub samples: usize,
    /// Time at which the run was stopped as blow-up; present exactly when
    /// the outcome is not `COMPLETED`.
    pub t_detect: Option<f64>,
    pub detected_by: Option<StopTrigger>,
    /// First sampled record with `min_slope` below the configured floor.
    pub t_slope_floor: Option<f64>,
    pub sensitivity: Vec<FloorCrossing>,
    pub mean_decay_residual: f64,
    pub mean_decay_tolerance: f64,
    /// Upper end of the time window the mean-decay check covers.
    pub mean_decay_window: f64,
    pub mean_decay_ok: bool,
    pub max_h1_balance_residual: Option<f64>,
    pub max_transport_drift: Option<f64>,
    pub global_bound: GlobalBound,
    pub min_y: f64,
    pub max_y: f64,
    pub sup_abs_u: f64,
    #[serde(skip)]
    pub records: Vec<DiagnosticsRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    /// Largest sample time compared.
    pub t_max: f64,
    pub samples: usize,
    /// `max_t ‖u_E − u_L‖_∞` on the Eulerian grid.
    pub linf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the resolved configuration.
    pub config_hash: String,
    pub n_points: usize,
    pub m_particles: usize,
    pub wall_time_s: f64,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: RunStatus,
    pub failures: Vec<String>,
    /// The earliest-stopping solver's outcome.
    pub outcome: RunOutcome,
    pub t_detect: Option<f64>,
    pub prediction: BlowupPrediction,
    pub lambda: f64,
    pub initial_mean: f64,
    pub solvers: Vec<SolverReport>,
    pub cross_solver: Option<CrossCheck>,
    pub provenance: Provenance,
}

impl RunReport {
    pub fn solver(&self, kind: SolverKind) -> Option<&SolverReport> {
        self.solvers.iter().find(|s| s.solver == kind)
    }
}

pub fn config_hash(cfg: &SimConfig) -> String {
    Sha256::digest(cfg.to_toml().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn guard(cfg: &SimConfig) -> BlowupGuard {
    BlowupGuard {
        slope_floor: cfg.slope_floor,
        resolution_tol: cfg.resolution_tol,
        ..BlowupGuard::default()
    }
}

pub fn run_eulerian(cfg: &SimConfig) -> Result<EulerianRun> {
    evolve_guarded(&cfg.initial_field(), cfg.lambda, &cfg.integrator, &guard(cfg))
}

pub fn run_lagrangian(cfg: &SimConfig) -> Result<LagrangianRun> {
    let ens = init_particles_with_lambda(&cfg.initial_field(), cfg.m_particles, cfg.lambda)?;
    evolve_particles_guarded(&ens, &cfg.integrator, &guard(cfg), Quadrature::default())
}

/// Executes the configured solvers and diagnostics. With `out_dir`, writes
/// the configured CSV files (paths relative to it), `summary.json` and the
/// resolved configuration `config.toml`.
pub fn run(cfg: &SimConfig, out_dir: Option<&Path>) -> Result<RunReport> {
    let start = Instant::now();
    let u0 = cfg.initial_field();
    let prediction = logistic_predict(&u0, cfg.lambda)?;
    let (eul, lag) = rayon::join(
        || cfg.solver.runs_eulerian().then(|| run_eulerian(cfg)).transpose(),
        || cfg.solver.runs_lagrangian().then(|| run_lagrangian(cfg)).transpose(),
    );
    let (eul, lag) = (eul?, lag?);

    let mut solvers = Vec::new();
    if let Some(run) = &eul {
        let records = eulerian_records(&run.samples);
        solvers.push(summarize(cfg, &u0, SolverKind::Eulerian, &run.outcome, run.steps, &run.slope_trace, records)?);
    }
    if let Some(run) = &lag {
        let records = lagrangian_records(&run.samples, cfg.grid());
        solvers.push(summarize(cfg, &u0, SolverKind::Lagrangian, &run.outcome, run.steps, &run.slope_trace, records)?);
    }
    let cross_solver = match (&eul, &lag) {
        (Some(e), Some(l)) => cross_check(e, l, &prediction),
        _ => None,
    };

    let first = solvers
        .iter()
        .min_by(|a, b| a.outcome.t_stop.total_cmp(&b.outcome.t_stop))
        .expect("at least one solver runs");
    let outcome = first.outcome.clone();
    let t_detect = first.t_detect;
    let failures: Vec<String> = solvers
        .iter()
        .filter(|s| !s.mean_decay_ok)
        .map(|s| {
            format!(
                "{:?} mean-decay residual {:.3e} exceeds {:.1e} on t ≤ {:.6}",
                s.solver, s.mean_decay_residual, s.mean_decay_tolerance, s.mean_decay_window
            )
        })
        .collect();

    let mut report = RunReport {
        status: if failures.is_empty() { RunStatus::Ok } else { RunStatus::Failed },
        failures,
        outcome,
        t_detect,
        prediction,
        lambda: cfg.lambda,
        initial_mean: mean(&u0),
        solvers,
        cross_solver,
        provenance: Provenance {
            config_hash: config_hash(cfg),
            n_points: cfg.n_points,
            m_particles: cfg.m_particles,
            wall_time_s: 0.0,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        for o in &cfg.outputs {
            let kind = o.source.unwrap_or(if cfg.solver.runs_eulerian() {
                SolverKind::Eulerian
            } else {
                SolverKind::Lagrangian
            });
            let records = &report.solver(kind).expect("validated source").records;
            let records = match o.sample_interval {
                Some(si) => thin_records(records, si),
                None => records.clone(),
            };
            emit_csv(&records, &o.fields, dir.join(&o.csv_path))?;
        }
        std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
        report.provenance.wall_time_s = start.elapsed().as_secs_f64();
        emit_json(&report, dir.join("summary.json"))?;
    } else {
        report.provenance.wall_time_s = start.elapsed().as_secs_f64();
    }
    Ok(report)
}

fn summarize(
    cfg: &SimConfig,
    u0: &RealField,
    solver: SolverKind,
    outcome: &RunOutcome,
    steps: usize,
    slope_trace: &[(f64, f64)],
    records: Vec<DiagnosticsRecord>,
) -> Result<SolverReport> {
    let stopped = outcome.kind != OutcomeKind::Completed;
    let alive = |r: &DiagnosticsRecord| !stopped || r.t < outcome.t_stop;
    if let Some(r) = records.iter().filter(|r| alive(r)).find(|r| !record_is_finite(r)) {
        return Err(MudpError::Invariant(format!(
            "{solver:?} diagnostics not finite at t = {} while the run is alive",
            r.t
        )));
    }
    let window = if stopped {
        PRE_BLOWUP_FRACTION * outcome.t_stop
    } else {
        outcome.t_stop
    };
    let mean_decay_residual = records
        .iter()
        .filter(|r| r.t <= window)
        .map(|r| r.mean_residual)
        .fold(0.0, f64::max);
    let mean_decay_tolerance = if cfg.lambda == 0.0 { 1e-12 } else { 1e-8 };
    let max_opt = |f: fn(&DiagnosticsRecord) -> Option<f64>| {
        records
            .iter()
            .filter(|r| r.t <= window)
            .filter_map(f)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
    };
    let pre: Vec<DiagnosticsRecord> = records.iter().filter(|r| r.t <= window).cloned().collect();
    Ok(SolverReport {
        solver,
        outcome: outcome.clone(),
        steps,
        samples: records.len(),
        t_detect: stopped.then_some(outcome.t_stop),
        detected_by: outcome.trigger,
        t_slope_floor: detect_blowup(&records, cfg.slope_floor).map(|(t, _)| t),
        sensitivity: SENSITIVITY_FLOORS
            .iter()
            .map(|&floor| FloorCrossing {
                floor,
                t_detect: first_crossing(slope_trace, floor),
            })
            .collect(),
        mean_decay_residual,
        mean_decay_tolerance,
        mean_decay_window: window,
        mean_decay_ok: mean_decay_residual <= mean_decay_tolerance,
        max_h1_balance_residual: max_opt(|r| r.h1_balance_residual),
        max_transport_drift: max_opt(|r| r.transport_drift),
        global_bound: certify_global_bound(&pre, u0),
        min_y: pre.iter().map(|r| r.y_min).fold(f64::INFINITY, f64::min),
        max_y: pre.iter().map(|r| r.y_max).fold(f64::NEG_INFINITY, f64::max),
        sup_abs_u: records.iter().map(|r| r.sup_abs_u).fold(0.0, f64::max),
        records,
    })
}

fn record_is_finite(r: &DiagnosticsRecord) -> bool {
    DiagnosticsRecord::FIELDS
        .iter()
        .filter_map(|f| r.field(f).flatten())
        .all(f64::is_finite)
}

/// `max_t ‖u_E − u_L‖_∞` over common samples with `t ≤ 0.8τ` (when a
/// blow-up is predicted) and before either run stopped.
fn cross_check(e: &EulerianRun, l: &LagrangianRun, prediction: &BlowupPrediction) -> Option<CrossCheck> {
    let mut t_max = f64::INFINITY;
    for o in [&e.outcome, &l.outcome] {
        if o.kind != OutcomeKind::Completed {
            t_max = t_max.min(PRE_BLOWUP_FRACTION * o.t_stop);
        }
    }
    if let Some(tau) = prediction.tau {
        t_max = t_max.min(PRE_BLOWUP_FRACTION * tau);
    }
    let mut linf: f64 = 0.0;
    let mut count = 0;
    let mut last = 0.0;
    for es in &e.samples {
        if es.t > t_max {
            continue;
        }
        if let Some(ls) = l.samples.iter().find(|ls| ls.t == es.t) {
            let ul = spectral_velocity(ls, es.u.grid());
            linf = linf.max(ul.max_abs_diff(&es.u));
            count += 1;
            last = es.t;
        }
    }
    (count > 0).then_some(CrossCheck {
        t_max: last,
        samples: count,
        linf,
    })
}
