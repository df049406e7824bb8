//! `mudp`: command-line driver for the solvers and studies.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mudp_core::harness::config::{load_config, SimConfig, SolverChoice, SolverKind};
use mudp_core::harness::output::emit_json;
use mudp_core::harness::run::{run, RunReport, RunStatus};
use mudp_core::harness::studies::{convergence_study, lambda_sweep, perturbation_probe};
use mudp_core::harness::validate::{format_table, operator_suite};
use mudp_core::integrator::OutcomeKind;

#[derive(Parser)]
#[command(name = "mudp", version, about = "Weakly dissipative μDP numerical lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured solvers and diagnostics.
    Run(Common),
    /// Blow-up prediction (and optional runs) over the configured λ values.
    Sweep(Common),
    /// Convergence study over the configured (N, dt) levels.
    Converge(Common),
    /// Continuity probe: perturb one Fourier mode of u₀ by each ε.
    Perturb(Common),
    /// Operator identity suite as a pass/fail table.
    ValidateOps {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Directory for `validate_ops.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; nothing is written without it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Eulerian,
    Lagrangian,
    Both,
}

impl Common {
    fn resolve(&self) -> Result<SimConfig> {
        let mut cfg = load_config(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(s) = self.solver {
            cfg.solver = match s {
                SolverArg::Eulerian => SolverChoice::Eulerian,
                SolverArg::Lagrangian => SolverChoice::Lagrangian,
                SolverArg::Both => SolverChoice::Both,
            };
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        println!("# resolved configuration");
        print!("{}", cfg.to_toml());
        println!();
        Ok(cfg)
    }

    fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> Result<()> {
        if let Some(dir) = &self.out {
            let path = dir.join(name);
            emit_json(value, &path).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn solvers(choice: SolverChoice) -> Vec<SolverKind> {
    let mut out = Vec::new();
    if choice.runs_eulerian() {
        out.push(SolverKind::Eulerian);
    }
    if choice.runs_lagrangian() {
        out.push(SolverKind::Lagrangian);
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"))
}

fn print_report(r: &RunReport) {
    let p = &r.prediction;
    println!(
        "prediction: applicable={} x*={:.6} u0x(x*)={:.6} tau={}{}",
        p.applicable,
        p.x_star,
        p.u0x_star,
        opt(p.tau),
        if p.nonzero_mean { " (nonzero mean, heuristic)" } else { "" }
    );
    for s in &r.solvers {
        println!(
            "{:?}: {:?} at t={:.6} after {} steps ({})",
            s.solver, s.outcome.kind, s.outcome.t_stop, s.steps, s.outcome.detail
        );
        println!(
            "  mean decay {:.3e} (tol {:.0e}, t ≤ {:.4}) {}",
            s.mean_decay_residual,
            s.mean_decay_tolerance,
            s.mean_decay_window,
            if s.mean_decay_ok { "ok" } else { "FAILED" }
        );
        println!(
            "  H1 balance {}  transport drift {}  y in [{:.4e}, {:.4e}]",
            opt(s.max_h1_balance_residual),
            opt(s.max_transport_drift),
            s.min_y,
            s.max_y
        );
        for c in &s.sensitivity {
            println!("  floor {:.0e}: t_detect {}", c.floor, opt(c.t_detect));
        }
    }
    if let Some(c) = &r.cross_solver {
        println!("cross-solver L∞ {:.3e} over {} samples up to t={:.4}", c.linf, c.samples, c.t_max);
    }
    println!("status: {:?}", r.status);
    for f in &r.failures {
        eprintln!("check failed: {f}");
    }
}

fn cmd_run(args: &Common) -> Result<ExitCode> {
    let cfg = args.resolve()?;
    let report = run(&cfg, args.out.as_deref())?;
    print_report(&report);
    if let Some(dir) = &args.out {
        println!("wrote {}", dir.join("summary.json").display());
    }
    if report.status == RunStatus::Failed {
        eprintln!("run finished with failed checks");
    }
    Ok(match report.outcome.kind {
        OutcomeKind::Completed | OutcomeKind::Blowup => ExitCode::SUCCESS,
        OutcomeKind::DtUnderflow => {
            eprintln!("time step underflow: {}", report.outcome.detail);
            ExitCode::from(3)
        }
    })
}

fn cmd_sweep(args: &Common) -> Result<ExitCode> {
    let cfg = args.resolve()?;
    let rows = lambda_sweep(&cfg)?;
    println!("{:>14}  {:>10}  {:>14}  {:>14}", "lambda", "applicable", "tau", "t_detect");
    for r in &rows {
        let detect = r.report.as_ref().and_then(|rep| rep.t_detect);
        println!(
            "{:>14.6}  {:>10}  {:>14}  {:>14}",
            r.lambda,
            r.prediction.applicable,
            opt(r.prediction.tau),
            opt(detect)
        );
    }
    args.write_json("sweep.json", &rows)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_converge(args: &Common) -> Result<ExitCode> {
    let cfg = args.resolve()?;
    let mut tables = Vec::new();
    for kind in solvers(cfg.solver) {
        let table = convergence_study(&cfg, kind)?;
        println!("{kind:?} (differences on {} points)", table.comparison_points);
        for cp in &table.checkpoints {
            println!("  t = {}", cp.t);
            for l in &cp.levels {
                println!(
                    "    N={:<6} dt={:<10.3e} diff-to-next {}  exact {}",
                    l.n,
                    l.dt,
                    opt(l.diff_to_next),
                    opt(l.exact_error)
                );
            }
            println!("    observed orders {:?}", cp.observed_orders);
            if !cp.exact_orders.is_empty() {
                println!("    exact-error orders {:?}", cp.exact_orders);
            }
        }
        tables.push(table);
    }
    args.write_json("converge.json", &tables)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_perturb(args: &Common) -> Result<ExitCode> {
    let cfg = args.resolve()?;
    let report = perturbation_probe(&cfg)?;
    println!("mode {} perturbed, compared at t = {:.6}", report.mode, report.time);
    for s in &report.solvers {
        for r in &s.rows {
            println!("  {:?} eps {:.0e}: change {:.4e}, ratio {:.4}", s.solver, r.epsilon, r.change, r.ratio);
        }
        println!(
            "  {:?} ratio spread {:.4} {}",
            s.solver,
            s.ratio_spread,
            if s.bounded { "bounded" } else { "UNBOUNDED" }
        );
    }
    args.write_json("perturb.json", &report)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(seed: u64, out: Option<&Path>) -> Result<ExitCode> {
    let checks = operator_suite(seed);
    print!("{}", format_table(&checks));
    if let Some(dir) = out {
        let path = dir.join("validate_ops.json");
        emit_json(&checks, &path)?;
        println!("wrote {}", path.display());
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        println!("{failed} of {} checks failed", checks.len());
        return Ok(ExitCode::FAILURE);
    }
    println!("all {} checks passed", checks.len());
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Converge(a) => cmd_converge(&a),
        Command::Perturb(a) => cmd_perturb(&a),
        Command::ValidateOps { seed, out } => cmd_validate(seed, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
