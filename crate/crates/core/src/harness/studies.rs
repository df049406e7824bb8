//! Multi-run studies: grid convergence, λ-sweeps and the perturbation probe.
//! Member simulations run concurrently.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{field_from_modes, Coefficient, SimConfig, SolverKind};
use super::run::{run, RunReport};
use crate::diagnostics::{logistic_predict, zero_mean_characteristic, BlowupPrediction};
use crate::error::{MudpError, Result};
use crate::eulerian::evolve_guarded;
use crate::integrator::{BlowupGuard, IntegratorConfig, OutcomeKind, RunOutcome};
use crate::lagrangian::{evolve_particles_guarded, init_particles_with_lambda, velocity_at};
use crate::spectral::{mean, GridSpec, Quadrature, RealField, SpectralField};

/// Fraction of the predicted blow-up time beyond which studies refuse to run.
pub const STUDY_HORIZON: f64 = 0.95;

/// Velocity at time `t` as an evaluable function.
enum Snapshot {
    Spectral(SpectralField),
    Particles(crate::lagrangian::ParticleEnsemble),
}

impl Snapshot {
    fn at(&self, x: f64) -> f64 {
        match self {
            Snapshot::Spectral(c) => c.evaluate_at(x),
            Snapshot::Particles(ens) => velocity_at(ens, x),
        }
    }
}

fn integrator_to(base: &IntegratorConfig, t: f64, dt: f64) -> IntegratorConfig {
    IntegratorConfig {
        t_end: t,
        sample_interval: t,
        dt_init: dt,
        dt_min: base.dt_min.min(0.5 * dt),
        ..base.clone()
    }
}

/// Runs one solver from `modes` to time `t` with the given resolution and
/// step; errors if the run stops early.
fn solve_to(
    solver: SolverKind,
    modes: &[Coefficient],
    lambda: f64,
    n: usize,
    dt: f64,
    t: f64,
    base: &SimConfig,
) -> Result<Snapshot> {
    let grid = GridSpec::new(n)?;
    let u0 = field_from_modes(modes, grid);
    let integ = integrator_to(&base.integrator, t, dt);
    let guard = BlowupGuard {
        slope_floor: base.slope_floor,
        resolution_tol: base.resolution_tol,
        ..BlowupGuard::default()
    };
    let check = |o: &RunOutcome| -> Result<()> {
        if o.kind == OutcomeKind::Completed {
            Ok(())
        } else {
            Err(MudpError::InvalidArgument(format!(
                "{solver:?} run at N = {n} stopped at t = {} before t = {t}: {}",
                o.t_stop, o.detail
            )))
        }
    };
    match solver {
        SolverKind::Eulerian => {
            let r = evolve_guarded(&u0, lambda, &integ, &guard)?;
            check(&r.outcome)?;
            Ok(Snapshot::Spectral(r.last().u.to_spectral()))
        }
        SolverKind::Lagrangian => {
            let ens = init_particles_with_lambda(&u0, n, lambda)?;
            let r = evolve_particles_guarded(&ens, &integ, &guard, Quadrature::default())?;
            check(&r.outcome)?;
            Ok(Snapshot::Particles(r.last().clone()))
        }
    }
}

fn refuse_past_horizon(prediction: &BlowupPrediction, times: &[f64]) -> Result<()> {
    if let Some(tau) = prediction.tau {
        if let Some(&t) = times.iter().find(|&&t| t > STUDY_HORIZON * tau) {
            return Err(MudpError::InvalidArgument(format!(
                "time {t} lies past {STUDY_HORIZON}·τ = {:.6} of the predicted blow-up",
                STUDY_HORIZON * tau
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub n: usize,
    pub dt: f64,
    /// `‖u_k − u_{k+1}‖_∞` against the next finer level.
    pub diff_to_next: Option<f64>,
    /// Error against the exact characteristic solution (zero-mean data).
    pub exact_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointTable {
    pub t: f64,
    pub levels: Vec<LevelRow>,
    /// `log(d_k / d_{k+1}) / log(N_{k+1} / N_k)` for consecutive differences.
    pub observed_orders: Vec<f64>,
    /// Same, from the exact errors.
    pub exact_orders: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub solver: SolverKind,
    /// Number of uniform points the differences are measured on.
    pub comparison_points: usize,
    pub checkpoints: Vec<CheckpointTable>,
}

fn orders(values: &[Option<f64>], ns: &[usize]) -> Vec<f64> {
    values
        .windows(2)
        .zip(ns.windows(2))
        .filter_map(|(v, n)| match (v[0], v[1]) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).ln() / (n[1] as f64 / n[0] as f64).ln()),
            _ => None,
        })
        .collect()
}

/// Runs each `(N, dt)` level of `cfg.convergence` to each checkpoint
/// (particle levels use `M = N`) and compares the levels on the finest grid.
pub fn convergence_study(cfg: &SimConfig, solver: SolverKind) -> Result<ConvergenceTable> {
    let levels = &cfg.convergence.levels;
    if levels.len() < 3 {
        return Err(MudpError::InvalidArgument(format!(
            "a convergence study needs at least 3 levels, got {}",
            levels.len()
        )));
    }
    let checkpoints = &cfg.convergence.checkpoints;
    if checkpoints.is_empty() {
        return Err(MudpError::InvalidArgument("no checkpoints given".into()));
    }
    let u0 = cfg.initial_field();
    let prediction = logistic_predict(&u0, cfg.lambda)?;
    refuse_past_horizon(&prediction, checkpoints)?;

    let modes = cfg.initial_data.modes(cfg.seed);
    let zero_mean = mean(&u0).abs() <= 1e-14 * u0.max_abs().max(1.0);
    let n_cmp = levels.iter().map(|l| l.0).max().expect("nonempty");
    let xs = GridSpec::new(n_cmp)?.nodes();

    let jobs: Vec<(usize, usize)> = (0..checkpoints.len())
        .flat_map(|c| (0..levels.len()).map(move |k| (c, k)))
        .collect();
    let values: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(c, k)| {
            let (n, dt) = levels[k];
            let snap = solve_to(solver, &modes, cfg.lambda, n, dt, checkpoints[c], cfg)?;
            Ok(xs.iter().map(|&x| snap.at(x)).collect())
        })
        .collect::<Result<_>>()?;

    let u0_fine = field_from_modes(&modes, GridSpec::new(4 * n_cmp)?);
    let ns: Vec<usize> = levels.iter().map(|l| l.0).collect();
    let mut tables = Vec::new();
    for (c, &t) in checkpoints.iter().enumerate() {
        let vals = &values[c * levels.len()..(c + 1) * levels.len()];
        let exact: Option<Vec<f64>> = zero_mean
            .then(|| GridSpec::new(n_cmp).map(|g| exact_zero_mean(&u0_fine, cfg.lambda, t, g).into_values()))
            .transpose()?;
        let linf = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        let rows: Vec<LevelRow> = (0..levels.len())
            .map(|k| LevelRow {
                n: levels[k].0,
                dt: levels[k].1,
                diff_to_next: (k + 1 < levels.len()).then(|| linf(&vals[k], &vals[k + 1])),
                exact_error: exact.as_ref().map(|e| linf(&vals[k], e)),
            })
            .collect();
        let diffs: Vec<Option<f64>> = rows.iter().map(|r| r.diff_to_next).collect();
        let errs: Vec<Option<f64>> = rows.iter().map(|r| r.exact_error).collect();
        tables.push(CheckpointTable {
            t,
            observed_orders: orders(&diffs[..diffs.len() - 1], &ns[..ns.len() - 1]),
            exact_orders: orders(&errs, &ns),
            levels: rows,
        });
    }
    Ok(ConvergenceTable {
        solver,
        comparison_points: n_cmp,
        checkpoints: tables,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub prediction: BlowupPrediction,
    /// Present when the sweep also simulates.
    pub report: Option<RunReport>,
}

/// Blow-up prediction (and optionally a full run without file output) for
/// each λ in `cfg.sweep.lambdas`.
pub fn lambda_sweep(cfg: &SimConfig) -> Result<Vec<SweepRow>> {
    let u0 = cfg.initial_field();
    cfg.sweep
        .lambdas
        .par_iter()
        .map(|&lambda| {
            let prediction = logistic_predict(&u0, lambda)?;
            let report = if cfg.sweep.simulate {
                let mut member = cfg.clone();
                member.lambda = lambda;
                member.outputs.clear();
                Some(run(&member, None)?)
            } else {
                None
            };
            Ok(SweepRow {
                lambda,
                prediction,
                report,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbRow {
    pub epsilon: f64,
    /// `‖u_ε(t) − u(t)‖_∞`.
    pub change: f64,
    /// `change / ε`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbSolver {
    pub solver: SolverKind,
    pub rows: Vec<PerturbRow>,
    /// Largest over smallest ratio.
    pub ratio_spread: f64,
    pub bounded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbReport {
    pub time: f64,
    pub mode: i64,
    pub solvers: Vec<PerturbSolver>,
}

/// Bound on the spread of `change / ε` across ε levels.
pub const PERTURB_RATIO_BOUND: f64 = 10.0;

/// Adds `ε` to the real part of Fourier mode `cfg.perturb.mode` of `u₀` and
/// measures the change of `u` in `L∞` at the probe time (default `τ/2`).
pub fn perturbation_probe(cfg: &SimConfig) -> Result<PerturbReport> {
    let u0 = cfg.initial_field();
    let prediction = logistic_predict(&u0, cfg.lambda)?;
    let time = match (cfg.perturb.time, prediction.tau) {
        (Some(t), _) => t,
        (None, Some(tau)) => 0.5 * tau,
        (None, None) => {
            return Err(MudpError::InvalidArgument(
                "no blow-up is predicted; set perturb.time explicitly".into(),
            ))
        }
    };
    refuse_past_horizon(&prediction, &[time])?;
    let base = cfg.initial_data.modes(cfg.seed);
    let perturbed = |eps: f64| {
        let mut modes = base.clone();
        match modes.iter_mut().find(|c| c.n == cfg.perturb.mode) {
            Some(c) => c.re += eps,
            None => modes.push(Coefficient {
                n: cfg.perturb.mode,
                re: eps,
                im: 0.0,
            }),
        }
        modes
    };
    let mut kinds = Vec::new();
    if cfg.solver.runs_eulerian() {
        kinds.push(SolverKind::Eulerian);
    }
    if cfg.solver.runs_lagrangian() {
        kinds.push(SolverKind::Lagrangian);
    }
    let xs = cfg.grid().nodes();
    let dt = cfg.integrator.dt_init;
    let solvers = kinds
        .par_iter()
        .map(|&kind| {
            let size = match kind {
                SolverKind::Eulerian => cfg.n_points,
                SolverKind::Lagrangian => cfg.m_particles,
            };
            let mut sets = vec![base.clone()];
            sets.extend(cfg.perturb.epsilons.iter().map(|&e| perturbed(e)));
            let fields: Vec<Vec<f64>> = sets
                .par_iter()
                .map(|modes| {
                    let snap = solve_to(kind, modes, cfg.lambda, size, dt, time, cfg)?;
                    Ok(xs.iter().map(|&x| snap.at(x)).collect())
                })
                .collect::<Result<_>>()?;
            let rows: Vec<PerturbRow> = cfg
                .perturb
                .epsilons
                .iter()
                .zip(&fields[1..])
                .map(|(&epsilon, f)| {
                    let change = f.iter().zip(&fields[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    PerturbRow {
                        epsilon,
                        change,
                        ratio: change / epsilon,
                    }
                })
                .collect();
            let hi = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
            let lo = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
            let ratio_spread = hi / lo;
            Ok(PerturbSolver {
                solver: kind,
                rows,
                ratio_spread,
                bounded: ratio_spread.is_finite() && ratio_spread <= PERTURB_RATIO_BOUND,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PerturbReport {
        time,
        mode: cfg.perturb.mode,
        solvers,
    })
}

/// Exact zero-mean solution at time `t` on `grid`.
pub fn exact_zero_mean(u0: &RealField, lambda: f64, t: f64, grid: GridSpec) -> RealField {
    let c = u0.to_spectral();
    let cx = c.apply_symbol(|n| Complex64::new(0.0, 2.0 * std::f64::consts::PI * n as f64));
    RealField::from_fn(grid, |x| {
        zero_mean_characteristic(
            &|s| c.evaluate_at(s.rem_euclid(1.0)),
            &|s| cx.evaluate_at(s.rem_euclid(1.0)),
            lambda,
            t,
            x,
        )
    })
}
