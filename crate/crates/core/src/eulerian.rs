//! Pseudospectral method-of-lines solver for
//!
//! ```text
//! u_t = −u u_x − 3 μ(u) ∂ₓΛ_μ^{−2} u − λ u
//! ```
//!
//! with classical RK4 in time and a CFL step tied to `max |u|`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{MudpError, Result};
use crate::integrator::{BlowupGuard, IntegratorConfig, RunOutcome, SampleClock, StopTrigger};
use crate::spectral::{derivative, RealField, SpectralField};

#[derive(Clone, Debug, PartialEq)]
pub struct EulerianState {
    pub t: f64,
    pub u: RealField,
    pub lambda: f64,
}

impl EulerianState {
    pub fn new(u: RealField, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(MudpError::InvalidArgument(format!("lambda must be ≥ 0, got {lambda}")));
        }
        Ok(Self { t: 0.0, u, lambda })
    }
}

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Right-hand side of the semi-discrete system.
///
/// Every term except `−λu` has an identically zero mode 0, so the mean of
/// the result is `−λ μ(u)` up to round-off.
pub fn rhs(state: &EulerianState, dealias: bool) -> RealField {
    rhs_spectral(&state.u, state.lambda, dealias).to_grid()
}

fn rhs_spectral(u: &RealField, lambda: f64, dealias: bool) -> SpectralField {
    let grid = u.grid();
    let n = grid.n_points() as i64;
    let nyq = grid.nyquist();
    let u_hat = u.to_spectral();
    let mu = u_hat.coeff(0).re;

    // u u_x = ∂ₓ(u²/2), with the 2/3 rule: truncate u, square, truncate.
    let cutoff = n / 3;
    let squared = if dealias {
        let trunc = u_hat.apply_symbol(|k| {
            if k.abs() <= cutoff {
                Complex64::new(1.0, 0.0)
            } else {
                zero()
            }
        });
        trunc.to_grid().map(|v| 0.5 * v * v).to_spectral()
    } else {
        u.map(|v| 0.5 * v * v).to_spectral()
    };

    let mut out = SpectralField::zeros(grid);
    for (k, slot) in out.slots_mut().iter_mut().enumerate() {
        let m = grid.wavenumber(k);
        if m == 0 {
            *slot = Complex64::new(-lambda * mu, 0.0);
            continue;
        }
        let uk = u_hat.slots()[k];
        let mut acc = -lambda * uk;
        if m != nyq {
            let ik = Complex64::new(0.0, 2.0 * PI * m as f64);
            if !dealias || m.abs() <= cutoff {
                acc -= ik * squared.slots()[k];
            }
            // ∂ₓΛ_μ^{−2}: 2πim / (4π²m²) = i / (2πm)
            acc -= 3.0 * mu * uk * Complex64::new(0.0, 1.0 / (2.0 * PI * m as f64));
        }
        *slot = acc;
    }
    out
}

/// One classical RK4 step.
pub fn step(state: &EulerianState, dt: f64, dealias: bool) -> Result<EulerianState> {
    if !(dt > 0.0) {
        return Err(MudpError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let lam = state.lambda;
    let u = &state.u;
    let eval = |v: &RealField| -> Result<RealField> {
        let r = rhs_spectral(v, lam, dealias).to_grid();
        if r.is_finite() {
            Ok(r)
        } else {
            Err(MudpError::Overflow { t: state.t })
        }
    };
    let k1 = eval(u)?;
    let k2 = eval(&u.axpy(0.5 * dt, &k1))?;
    let k3 = eval(&u.axpy(0.5 * dt, &k2))?;
    let k4 = eval(&u.axpy(dt, &k3))?;
    let values: Vec<f64> = (0..u.values().len())
        .map(|j| {
            u.values()[j]
                + dt / 6.0
                    * (k1.values()[j] + 2.0 * k2.values()[j] + 2.0 * k3.values()[j] + k4.values()[j])
        })
        .collect();
    let next = RealField::new_unchecked(u.grid(), values);
    if !next.is_finite() {
        return Err(MudpError::Overflow { t: state.t + dt });
    }
    Ok(EulerianState {
        t: state.t + dt,
        u: next,
        lambda: lam,
    })
}

/// `(min_x u_x, x at the minimum)` on the grid.
pub fn min_slope(u: &RealField) -> (f64, f64) {
    let ux = derivative(u, 1).expect("order 1 is valid");
    let (m, j) = ux.min_with_index();
    (m, u.grid().node(j))
}

/// CFL step `min(dt_init, cfl / (N max|u|))`.
pub fn cfl_dt(u: &RealField, cfg: &IntegratorConfig) -> f64 {
    let speed = u.max_abs() * u.grid().n_points() as f64;
    if speed > 0.0 {
        cfg.dt_init.min(cfg.cfl_number / speed)
    } else {
        cfg.dt_init
    }
}

/// Fraction of the non-mean amplitude carried by the upper half of the
/// retained band, `(Σ_{K/2<|n|≤K} |û|² / Σ_{n≠0} |û|²)^{1/2}` with `K = N/3`
/// when dealiasing and `N/2` otherwise. Grows rapidly once a steepening
/// front is no longer resolved.
pub fn spectral_tail(u: &RealField, dealias: bool) -> f64 {
    let n = u.grid().n_points() as i64;
    let k = if dealias { n / 3 } else { n / 2 };
    let (mut tail, mut total) = (0.0, 0.0);
    for (m, c) in u.to_spectral().modes() {
        if m == 0 {
            continue;
        }
        let e = c.norm_sqr();
        total += e;
        if 2 * m.abs() > k && m.abs() <= k {
            tail += e;
        }
    }
    if total > 0.0 {
        (tail / total).sqrt()
    } else {
        0.0
    }
}

#[derive(Clone, Debug)]
pub struct EulerianRun {
    /// States at `t = k·sample_interval`, plus the final state when the run
    /// stops between samples.
    pub samples: Vec<EulerianState>,
    pub outcome: RunOutcome,
    pub steps: usize,
    /// `(t, min u_x)` after every accepted step, starting at `t = 0`.
    pub slope_trace: Vec<(f64, f64)>,
}

impl EulerianRun {
    pub fn last(&self) -> &EulerianState {
        self.samples.last().expect("a run always holds its initial state")
    }
}

pub fn evolve(u0: &RealField, lambda: f64, cfg: &IntegratorConfig) -> Result<EulerianRun> {
    evolve_guarded(u0, lambda, cfg, &BlowupGuard::default())
}

/// Integrates to `t_end` or until the guard fires. Blow-up is an outcome,
/// not an error; errors are reserved for invalid input.
pub fn evolve_guarded(
    u0: &RealField,
    lambda: f64,
    cfg: &IntegratorConfig,
    guard: &BlowupGuard,
) -> Result<EulerianRun> {
    cfg.validate()?;
    if !u0.is_finite() {
        return Err(MudpError::InvalidArgument("initial data is not finite".into()));
    }
    let mut state = EulerianState::new(u0.clone(), lambda)?;
    let mut samples = vec![state.clone()];
    let mut clock = SampleClock::new(cfg);
    let mut steps = 0;
    let mut slope_trace = vec![(0.0, min_slope(u0).0)];

    let outcome = loop {
        if clock.done(state.t) {
            break RunOutcome::completed(state.t);
        }
        let dt_cfl = cfl_dt(&state.u, cfg);
        if dt_cfl < cfg.dt_min {
            break RunOutcome::stopped(
                StopTrigger::StepUnderflow,
                state.t,
                format!("CFL step {dt_cfl:.3e} below dt_min {:.3e}", cfg.dt_min),
            );
        }
        let (dt, lands) = clock.clip(state.t, dt_cfl);
        let mut next = match step(&state, dt, cfg.dealias) {
            Ok(s) => s,
            Err(_) => {
                break RunOutcome::stopped(
                    StopTrigger::NonFinite,
                    state.t,
                    "non-finite Runge-Kutta stage".into(),
                )
            }
        };
        steps += 1;
        if lands {
            next.t = clock.next_time();
            clock.advance();
        }
        let (slope, at) = min_slope(&next.u);
        slope_trace.push((next.t, slope));
        state = next;
        if slope < guard.slope_floor {
            samples.push(state.clone());
            break RunOutcome::stopped(
                StopTrigger::SlopeFloor,
                state.t,
                format!("min u_x = {slope:.6e} at x = {at:.6} below floor {:.1e}", guard.slope_floor),
            );
        }
        if guard.resolution_tol.is_finite() {
            let tail = spectral_tail(&state.u, cfg.dealias);
            if tail > guard.resolution_tol {
                samples.push(state.clone());
                break RunOutcome::stopped(
                    StopTrigger::Resolution,
                    state.t,
                    format!(
                        "spectral tail {tail:.3e} above {:.1e} (min u_x = {slope:.6e} at x = {at:.6})",
                        guard.resolution_tol
                    ),
                );
            }
        }
        if lands {
            samples.push(state.clone());
        }
    };
    if samples.last().map(|s| s.t) != Some(state.t) {
        samples.push(state);
    }
    Ok(EulerianRun {
        samples,
        outcome,
        steps,
        slope_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::OutcomeKind;
    use crate::spectral::{mean, GridSpec};

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    #[test]
    fn rhs_of_constant_is_pure_decay() {
        let s = EulerianState::new(RealField::constant(grid(32), 1.3), 0.7).unwrap();
        for dealias in [true, false] {
            let r = rhs(&s, dealias);
            assert!(r.max_abs_diff(&RealField::constant(grid(32), -0.7 * 1.3)) < 1e-14);
        }
    }

    #[test]
    fn rhs_mean_matches_decay_law() {
        let g = grid(64);
        let u = RealField::from_fn(g, |x| {
            0.8 + (2.0 * PI * x).sin() + 0.3 * (6.0 * PI * x).cos() - 0.1 * (10.0 * PI * x).sin()
        });
        let s = EulerianState::new(u.clone(), 1.9).unwrap();
        for dealias in [true, false] {
            let r = rhs(&s, dealias);
            assert!((mean(&r) + 1.9 * mean(&u)).abs() <= 1e-14);
        }
        let zero_mean = EulerianState::new(u.map(|v| v - 0.8), 1.9).unwrap();
        let r = rhs_spectral(&zero_mean.u, 1.9, true);
        assert!(r.coeff(0).norm() < 1e-15);
    }

    #[test]
    fn rhs_nonlocal_term_against_real_space_route() {
        // Independent check: build −u u_x − 3μ ∂ₓΛ^{−2}u − λu from the
        // operator primitives.
        use crate::spectral::{apply_lambda_mu2_inv_spectral, derivative};
        let g = grid(128);
        let u = RealField::from_fn(g, |x| 0.5 + 0.2 * (2.0 * PI * x).cos() + 0.1 * (4.0 * PI * x).sin());
        let lam = 0.4;
        let ux = derivative(&u, 1).unwrap();
        let nonlocal = derivative(&apply_lambda_mu2_inv_spectral(&u), 1).unwrap();
        let mu = mean(&u);
        let want: Vec<f64> = (0..128)
            .map(|j| {
                -u.values()[j] * ux.values()[j] - 3.0 * mu * nonlocal.values()[j] - lam * u.values()[j]
            })
            .collect();
        let got = rhs(&EulerianState::new(u, lam).unwrap(), false);
        assert!(got.max_abs_diff(&RealField::new(g, want).unwrap()) < 1e-12);
    }

    #[test]
    fn step_of_constant_follows_rk4_decay() {
        let c = 2.0;
        let lam = 1.5;
        let dt = 0.01;
        let s = EulerianState::new(RealField::constant(grid(16), c), lam).unwrap();
        let next = step(&s, dt, true).unwrap();
        let z = -lam * dt;
        let rk4 = c * (1.0 + z + z * z / 2.0 + z.powi(3) / 6.0 + z.powi(4) / 24.0);
        assert!(next.u.max_abs_diff(&RealField::constant(grid(16), rk4)) < 1e-14);
        // local error against the exact decay is O(dt⁵)
        assert!((rk4 - c * (-lam * dt).exp()).abs() < (lam * dt).powi(5));
    }

    #[test]
    fn step_rejects_non_positive_dt() {
        let s = EulerianState::new(RealField::zeros(grid(16)), 0.0).unwrap();
        assert!(step(&s, 0.0, true).is_err());
    }

    #[test]
    fn step_has_fifth_order_local_error() {
        // Richardson self-convergence on one step: halving dt divides the
        // one-step difference from a fine reference by ~32.
        let g = grid(64);
        let u = RealField::from_fn(g, |x| (2.0 * PI * x).sin());
        let s = EulerianState::new(u, 0.0).unwrap();
        let reference = |dt: f64| {
            let mut st = s.clone();
            for _ in 0..64 {
                st = step(&st, dt / 64.0, true).unwrap();
            }
            st.u
        };
        let err = |dt: f64| step(&s, dt, true).unwrap().u.max_abs_diff(&reference(dt));
        let ratio = err(0.02) / err(0.01);
        assert!(ratio > 25.0 && ratio < 40.0, "ratio {ratio}");
    }

    #[test]
    fn evolve_constant_decays_exactly() {
        let g = grid(32);
        let cfg = IntegratorConfig {
            t_end: 1.0,
            sample_interval: 0.25,
            ..Default::default()
        };
        let run = evolve(&RealField::constant(g, 0.9), 1.0, &cfg).unwrap();
        assert_eq!(run.outcome.kind, OutcomeKind::Completed);
        assert_eq!(run.samples.len(), 5);
        let last = run.last();
        assert!((last.t - 1.0).abs() < 1e-15);
        assert!(last.u.max_abs_diff(&RealField::constant(g, 0.9 * (-1.0f64).exp())) < 1e-10);
    }

    #[test]
    fn evolve_zero_stays_zero() {
        let g = grid(32);
        let cfg = IntegratorConfig {
            t_end: 0.5,
            ..Default::default()
        };
        let run = evolve(&RealField::zeros(g), 2.0, &cfg).unwrap();
        assert_eq!(run.outcome.kind, OutcomeKind::Completed);
        assert!(run.samples.iter().all(|s| s.u.max_abs() == 0.0));
    }
}
