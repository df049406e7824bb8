//! Particle method on the characteristics `φ_t = u(t, φ)`.
//!
//! Each particle carries its label `ξ_i = i/M`, position `φ_i`, stretch
//! `φ′_i = ∂_ξ φ` and initial momentum `y₀(ξ_i)`. Momentum is transported as
//! `y(t, φ) φ′³ = y₀ e^{−λt}`, so the velocity is recovered from
//! `u = Λ_μ^{−2} y` by a change of variables `x′ = φ(ξ)`:
//!
//! ```text
//! u(t, z)   = e^{−λt} (1/M) Σ_j g (z − φ_j) y₀_j / φ′_j²
//! u_x(t, z) = e^{−λt} (1/M) Σ_j g′(z − φ_j) y₀_j / φ′_j²
//! ```
//!
//! Positions are stored unwrapped (`φ_i − ξ_i` is periodic); the kernel
//! reduces its argument modulo 1.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{MudpError, Result};
use crate::spectral::{derivative_symbol, lambda_mu2_symbol};
use crate::integrator::{BlowupGuard, IntegratorConfig, RunOutcome, SampleClock, StopTrigger};
use crate::spectral::{
    apply_lambda_mu2, fd4_derivative, green_derivative, green_function, GridSpec, Quadrature,
    RealField, SpectralField,
};

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    pub positions: Vec<f64>,
    pub stretches: Vec<f64>,
    pub initial_momenta: Vec<f64>,
    pub t: f64,
    pub lambda: f64,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn label(&self, i: usize) -> f64 {
        i as f64 / self.len() as f64
    }

    pub fn label_spacing(&self) -> f64 {
        1.0 / self.len() as f64
    }

    /// Quadrature weights `e^{−λt} y₀_j / φ′_j²` (without the `1/M`).
    pub fn weights(&self) -> Vec<f64> {
        let decay = (-self.lambda * self.t).exp();
        self.initial_momenta
            .iter()
            .zip(&self.stretches)
            .map(|(y0, s)| decay * y0 / (s * s))
            .collect()
    }

    /// Momentum carried by particle `i`, `y(t, φ_i) = e^{−λt} y₀_i / φ′_i³`.
    pub fn momentum(&self, i: usize) -> f64 {
        let s = self.stretches[i];
        (-self.lambda * self.t).exp() * self.initial_momenta[i] / (s * s * s)
    }

    pub fn min_stretch(&self) -> f64 {
        self.stretches.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Whether consecutive positions increase strictly around the circle.
    pub fn is_ordered(&self) -> bool {
        let m = self.len();
        let gaps_ok = self.positions.windows(2).all(|w| w[1] > w[0]);
        gaps_ok && self.positions[0] + 1.0 > self.positions[m - 1]
    }
}

/// Places particles on the labels with `φ = id`, `φ′ = 1`, and samples
/// `y₀ = Λ_μ² u₀` there through its trigonometric interpolant.
pub fn init_particles(u0: &RealField, m_particles: usize) -> Result<ParticleEnsemble> {
    init_particles_with_lambda(u0, m_particles, 0.0)
}

pub fn init_particles_with_lambda(
    u0: &RealField,
    m_particles: usize,
    lambda: f64,
) -> Result<ParticleEnsemble> {
    if m_particles < 16 {
        return Err(MudpError::TooFewParticles(m_particles));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(MudpError::InvalidArgument(format!("lambda must be ≥ 0, got {lambda}")));
    }
    let y0 = apply_lambda_mu2(u0).to_spectral();
    let positions: Vec<f64> = (0..m_particles).map(|i| i as f64 / m_particles as f64).collect();
    let initial_momenta = positions.iter().map(|&x| y0.evaluate_at(x)).collect();
    Ok(ParticleEnsemble {
        positions,
        stretches: vec![1.0; m_particles],
        initial_momenta,
        t: 0.0,
        lambda,
    })
}

/// Reconstructed velocity `u(t, z)`.
pub fn velocity_at(ens: &ParticleEnsemble, z: f64) -> f64 {
    velocity_at_with(ens, z, Quadrature::default())
}

/// Reconstructed slope `u_x(t, z)`; self-terms use `g′(0) = 0`.
pub fn slope_at(ens: &ParticleEnsemble, z: f64) -> f64 {
    slope_at_with(ens, z, Quadrature::default())
}

pub fn velocity_at_with(ens: &ParticleEnsemble, z: f64, rule: Quadrature) -> f64 {
    let kd = KernelData::new(ens, rule);
    let q = kernel_sum(ens, &kd.weights, z, green_function);
    match rule {
        Quadrature::Trapezoid => q,
        Quadrature::KinkCorrected => {
            let (k, theta) = locate(ens, z, &kd.ds[1]);
            q + kd.velocity_correction(k, theta)
        }
    }
}

pub fn slope_at_with(ens: &ParticleEnsemble, z: f64, rule: Quadrature) -> f64 {
    let kd = KernelData::new(ens, rule);
    let q = kernel_sum(ens, &kd.weights, z, green_derivative);
    match rule {
        Quadrature::Trapezoid => q,
        Quadrature::KinkCorrected => {
            let (k, theta) = locate(ens, z, &kd.ds[1]);
            q + kd.slope_correction(k, theta)
        }
    }
}

fn kernel_sum(ens: &ParticleEnsemble, weights: &[f64], z: f64, kernel: fn(f64) -> f64) -> f64 {
    let acc: f64 = ens
        .positions
        .iter()
        .zip(weights)
        .map(|(&p, &w)| kernel(z - p) * w)
        .sum();
    acc / ens.len() as f64
}

/// Highest Euler–Maclaurin term removed by the kink corrections.
const CORRECTION_ORDER: usize = 6;

fn bernoulli(m: usize, x: f64) -> f64 {
    let x2 = x * x;
    match m {
        1 => x - 0.5,
        2 => x2 - x + 1.0 / 6.0,
        3 => x * (x2 - 1.5 * x + 0.5),
        4 => x2 * (x2 - 2.0 * x + 1.0) - 1.0 / 30.0,
        5 => x * (x2 * (x2 - 2.5 * x + 5.0 / 3.0) - 1.0 / 6.0),
        6 => x2 * (x2 * (x2 - 3.0 * x + 2.5) - 0.5) + 1.0 / 42.0,
        _ => unreachable!(),
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Label-space data for the kink corrections. In `ξ` the integrands
/// `g(z − φ(ξ)) w(ξ)` and `g′(z − φ(ξ)) w(ξ)` are smooth except at the
/// label `ξ* = ξ_k + θh` with `φ(ξ*) = z`, where `g′` jumps by +1. The
/// trapezoid rule then errs by `−Σ_m h^m B_m(1−θ)/m! · Δ_{m−1}` with
/// `Δ_{m−1}` the jump of the `(m−1)`-th derivative; terms up to
/// `m = CORRECTION_ORDER` are removed. For the slope integrand
/// `Δ_k = w^{(k)}`; for the velocity integrand
/// `Δ_k = −Σ_{j=1}^{k} C(k, j) w^{(k−j)} φ^{(j)}`.
struct KernelData {
    weights: Vec<f64>,
    /// `w^{(k)}` for `k = 0..=CORRECTION_ORDER`.
    dw: Vec<Vec<f64>>,
    /// `φ^{(k+1)}` for `k = 0..CORRECTION_ORDER`.
    ds: Vec<Vec<f64>>,
    h: f64,
}

/// Label derivatives of orders `0..=count-1`: spectral for even `M`,
/// repeated fourth-order differences otherwise.
fn label_derivatives(v: &[f64], count: usize, h: f64) -> Vec<Vec<f64>> {
    let mut out = vec![v.to_vec()];
    match GridSpec::new(v.len()) {
        Ok(grid) => {
            let spec = RealField::new_unchecked(grid, v.to_vec()).to_spectral();
            for k in 1..count {
                let d = spec.apply_symbol(derivative_symbol(grid.nyquist(), k as u32));
                out.push(d.to_grid().into_values());
            }
        }
        Err(_) => {
            for _ in 1..count {
                let next = fd4_derivative(out.last().expect("nonempty"), h);
                out.push(next);
            }
        }
    }
    out
}

impl KernelData {
    fn new(ens: &ParticleEnsemble, rule: Quadrature) -> Self {
        let weights = ens.weights();
        let h = ens.label_spacing();
        if rule == Quadrature::Trapezoid {
            return Self {
                weights,
                dw: vec![],
                ds: vec![],
                h,
            };
        }
        let dw = label_derivatives(&weights, CORRECTION_ORDER + 1, h);
        let ds = label_derivatives(&ens.stretches, CORRECTION_ORDER, h);
        Self { weights, dw, ds, h }
    }

    /// Order-`k` entry of a derivative table at `ξ_i + θh`: cubic Hermite
    /// from the order-`k` and order-`k+1` tables, linear for the top order.
    fn interp(table: &[Vec<f64>], k: usize, i: usize, theta: f64, h: f64) -> f64 {
        let v = &table[k];
        let j = (i + 1) % v.len();
        if theta == 0.0 {
            return v[i];
        }
        match table.get(k + 1) {
            Some(d) => hermite(v[i], h * d[i], v[j], h * d[j], theta),
            None => v[i] + theta * (v[j] - v[i]),
        }
    }

    fn velocity_correction(&self, k: usize, theta: f64) -> f64 {
        let h = self.h;
        let w: Vec<f64> = (0..CORRECTION_ORDER).map(|o| Self::interp(&self.dw, o, k, theta, h)).collect();
        let phi: Vec<f64> = (0..CORRECTION_ORDER).map(|o| Self::interp(&self.ds, o, k, theta, h)).collect();
        let r = 1.0 - theta;
        let mut total = 0.0;
        let mut scale = h;
        for m in 2..=CORRECTION_ORDER {
            scale *= h / m as f64;
            let order = m - 1;
            let jump: f64 = -(1..=order)
                .map(|j| binomial(order, j) * w[order - j] * phi[j - 1])
                .sum::<f64>();
            total += scale * bernoulli(m, r) * jump;
        }
        total
    }

    fn slope_correction(&self, k: usize, theta: f64) -> f64 {
        let h = self.h;
        let r = 1.0 - theta;
        // at θ = 0 the g′(0) = 0 convention already averages the jump
        let mut total = if theta == 0.0 {
            0.0
        } else {
            h * bernoulli(1, r) * Self::interp(&self.dw, 0, k, theta, h)
        };
        let mut scale = h;
        for m in 2..=CORRECTION_ORDER {
            scale *= h / m as f64;
            total += scale * bernoulli(m, r) * Self::interp(&self.dw, m - 1, k, theta, h);
        }
        total
    }
}

fn hermite(p0: f64, m0: f64, p1: f64, m1: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * p0
        + (s3 - 2.0 * s2 + s) * m0
        + (-2.0 * s3 + 3.0 * s2) * p1
        + (s3 - s2) * m1
}

/// Quintic Hermite basis on `[0, 1]` for value, slope and curvature at
/// both ends, and its derivative.
fn quintic(s: f64) -> ([f64; 6], [f64; 6]) {
    let (s2, s3) = (s * s, s * s * s);
    let (s4, s5) = (s3 * s, s3 * s2);
    (
        [
            1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5,
            s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5,
            0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5),
            10.0 * s3 - 15.0 * s4 + 6.0 * s5,
            -4.0 * s3 + 7.0 * s4 - 3.0 * s5,
            0.5 * (s3 - 2.0 * s4 + s5),
        ],
        [
            -30.0 * s2 + 60.0 * s3 - 30.0 * s4,
            1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4,
            0.5 * (2.0 * s - 9.0 * s2 + 12.0 * s3 - 5.0 * s4),
            30.0 * s2 - 60.0 * s3 + 30.0 * s4,
            -12.0 * s2 + 28.0 * s3 - 15.0 * s4,
            0.5 * (3.0 * s2 - 8.0 * s3 + 5.0 * s4),
        ],
    )
}

/// Finds `(k, θ)` with `φ(ξ_k + θh) ≡ z (mod 1)`, `θ ∈ [0, 1)`, inverting
/// the quintic Hermite interpolant of `φ` built from positions, stretches
/// and the curvature table `φ″`.
fn locate(ens: &ParticleEnsemble, z: f64, curvature: &[f64]) -> (usize, f64) {
    let m = ens.len();
    let h = ens.label_spacing();
    let p = &ens.positions;
    let zz = p[0] + (z - p[0]).rem_euclid(1.0);
    let k = p.partition_point(|&v| v <= zz).saturating_sub(1);
    let k1 = (k + 1) % m;
    let p1 = if k + 1 < m { p[k + 1] } else { p[0] + 1.0 };
    let nodes = [
        p[k],
        h * ens.stretches[k],
        h * h * curvature[k],
        p1,
        h * ens.stretches[k1],
        h * h * curvature[k1],
    ];
    if zz == p[k] {
        return (k, 0.0);
    }
    let mut theta = ((zz - p[k]) / (p1 - p[k])).clamp(0.0, 1.0);
    for _ in 0..8 {
        let (b, db) = quintic(theta);
        let f: f64 = b.iter().zip(&nodes).map(|(b, n)| b * n).sum::<f64>() - zz;
        let df: f64 = db.iter().zip(&nodes).map(|(b, n)| b * n).sum();
        if df <= 0.0 {
            break;
        }
        let next = (theta - f / df).clamp(0.0, 1.0);
        let done = (next - theta).abs() < 1e-15;
        theta = next;
        if done {
            break;
        }
    }
    if theta >= 1.0 {
        (k1, 0.0)
    } else {
        (k, theta)
    }
}

/// Time derivatives of the particle state.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleRates {
    /// `dφ_i/dt = u(t, φ_i)`.
    pub velocity: Vec<f64>,
    /// `dφ′_i/dt = u_x(t, φ_i) φ′_i`.
    pub stretch_rate: Vec<f64>,
    /// `u_x(t, φ_i)`.
    pub slope: Vec<f64>,
}

impl ParticleRates {
    pub fn min_slope(&self) -> (f64, usize) {
        self.slope
            .iter()
            .enumerate()
            .fold((f64::INFINITY, 0), |(m, k), (i, &s)| if s < m { (s, i) } else { (m, k) })
    }
}

pub fn particle_rhs(ens: &ParticleEnsemble) -> ParticleRates {
    particle_rhs_with(ens, Quadrature::default())
}

/// Velocity and slope at every particle, i.e. `velocity_at` and `slope_at`
/// at `z = φ_i` where the kink sits on the label (`θ = 0`).
pub fn particle_rhs_with(ens: &ParticleEnsemble, rule: Quadrature) -> ParticleRates {
    let m = ens.len();
    let h = ens.label_spacing();
    let kd = KernelData::new(ens, rule);
    let weights = &kd.weights;
    let pos = &ens.positions;
    let pairs: Vec<(f64, f64)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let zi = pos[i];
            let mut v = 0.0;
            let mut s = 0.0;
            for j in 0..m {
                let d = zi - pos[j];
                let r = d - d.floor();
                let w = weights[j];
                v += (0.5 * r * r - 0.5 * r + 13.0 / 12.0) * w;
                if r != 0.0 {
                    s += (r - 0.5) * w;
                }
            }
            v *= h;
            s *= h;
            if rule == Quadrature::KinkCorrected {
                v += kd.velocity_correction(i, 0.0);
                s += kd.slope_correction(i, 0.0);
            }
            (v, s)
        })
        .collect();
    let (velocity, slope): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let stretch_rate = slope.iter().zip(&ens.stretches).map(|(s, p)| s * p).collect();
    ParticleRates {
        velocity,
        stretch_rate,
        slope,
    }
}

fn advance(ens: &ParticleEnsemble, rates: &ParticleRates, dt: f64) -> ParticleEnsemble {
    ParticleEnsemble {
        positions: ens
            .positions
            .iter()
            .zip(&rates.velocity)
            .map(|(p, v)| p + dt * v)
            .collect(),
        stretches: ens
            .stretches
            .iter()
            .zip(&rates.stretch_rate)
            .map(|(p, r)| p + dt * r)
            .collect(),
        initial_momenta: ens.initial_momenta.clone(),
        t: ens.t + dt,
        lambda: ens.lambda,
    }
}

/// One RK4 step given the rates at the current state.
pub fn step_particles(
    ens: &ParticleEnsemble,
    k1: &ParticleRates,
    dt: f64,
    rule: Quadrature,
) -> ParticleEnsemble {
    let k2 = particle_rhs_with(&advance(ens, k1, 0.5 * dt), rule);
    let k3 = particle_rhs_with(&advance(ens, &k2, 0.5 * dt), rule);
    let k4 = particle_rhs_with(&advance(ens, &k3, dt), rule);
    let combine = |base: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        (0..base.len())
            .map(|i| base[i] + dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
            .collect()
    };
    ParticleEnsemble {
        positions: combine(
            &ens.positions,
            &k1.velocity,
            &k2.velocity,
            &k3.velocity,
            &k4.velocity,
        ),
        stretches: combine(
            &ens.stretches,
            &k1.stretch_rate,
            &k2.stretch_rate,
            &k3.stretch_rate,
            &k4.stretch_rate,
        ),
        initial_momenta: ens.initial_momenta.clone(),
        t: ens.t + dt,
        lambda: ens.lambda,
    }
}

/// Step size `min(dt_init, cfl / max|u_x|)`: the particle system has no
/// advective CFL limit, only the stretching rate.
pub fn particle_dt(rates: &ParticleRates, cfg: &IntegratorConfig) -> f64 {
    let rate = rates.slope.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    if rate > 0.0 {
        cfg.dt_init.min(cfg.cfl_number / rate)
    } else {
        cfg.dt_init
    }
}

#[derive(Clone, Debug)]
pub struct LagrangianRun {
    pub samples: Vec<ParticleEnsemble>,
    pub outcome: RunOutcome,
    pub steps: usize,
    /// `(t, min u_x)` over the particles at every step, starting at `t = 0`.
    pub slope_trace: Vec<(f64, f64)>,
}

impl LagrangianRun {
    pub fn last(&self) -> &ParticleEnsemble {
        self.samples.last().expect("a run always holds its initial state")
    }
}

pub fn evolve_particles(ens0: &ParticleEnsemble, cfg: &IntegratorConfig) -> Result<LagrangianRun> {
    evolve_particles_guarded(ens0, cfg, &BlowupGuard::default(), Quadrature::default())
}

/// RK4 on `(φ, φ′)` until `t_end` or until the guard fires (`min φ′` below
/// the Jacobian floor, `min u_x` below the slope floor, lost ordering or a
/// non-finite state).
pub fn evolve_particles_guarded(
    ens0: &ParticleEnsemble,
    cfg: &IntegratorConfig,
    guard: &BlowupGuard,
    rule: Quadrature,
) -> Result<LagrangianRun> {
    cfg.validate()?;
    if ens0.t != 0.0 {
        return Err(MudpError::InvalidArgument("ensemble must start at t = 0".into()));
    }
    let mut state = ens0.clone();
    let mut samples = vec![state.clone()];
    let mut clock = SampleClock::new(cfg);
    let mut steps = 0;
    let mut slope_trace = Vec::new();

    let outcome = loop {
        let rates = particle_rhs_with(&state, rule);
        slope_trace.push((state.t, rates.min_slope().0));
        if let Some(reason) = breakdown(&state, &rates, guard) {
            if samples.last().map(|s| s.t) != Some(state.t) {
                samples.push(state.clone());
            }
            break RunOutcome::stopped(reason.0, state.t, reason.1);
        }
        if clock.done(state.t) {
            break RunOutcome::completed(state.t);
        }
        let dt_rate = particle_dt(&rates, cfg);
        if dt_rate < cfg.dt_min {
            break RunOutcome::stopped(
                StopTrigger::StepUnderflow,
                state.t,
                format!("step {dt_rate:.3e} below dt_min {:.3e}", cfg.dt_min),
            );
        }
        let (dt, lands) = clock.clip(state.t, dt_rate);
        let mut next = step_particles(&state, &rates, dt, rule);
        steps += 1;
        if lands {
            next.t = clock.next_time();
            clock.advance();
        }
        state = next;
        if lands {
            samples.push(state.clone());
        }
    };
    if samples.last().map(|s| s.t) != Some(state.t) {
        samples.push(state);
    }
    Ok(LagrangianRun {
        samples,
        outcome,
        steps,
        slope_trace,
    })
}

fn breakdown(
    ens: &ParticleEnsemble,
    rates: &ParticleRates,
    guard: &BlowupGuard,
) -> Option<(StopTrigger, String)> {
    let finite = ens.positions.iter().chain(&ens.stretches).all(|v| v.is_finite())
        && rates.slope.iter().all(|v| v.is_finite());
    if !finite {
        return Some((StopTrigger::NonFinite, "non-finite particle state".into()));
    }
    let min_stretch = ens.min_stretch();
    if min_stretch < guard.jacobian_floor {
        return Some((StopTrigger::Jacobian, format!(
            "min φ′ = {min_stretch:.3e} below Jacobian floor {:.1e}",
            guard.jacobian_floor
        )));
    }
    let (slope, i) = rates.min_slope();
    if slope < guard.slope_floor {
        return Some((StopTrigger::SlopeFloor, format!(
            "min u_x = {slope:.6e} at particle {i} (φ = {:.6}) below floor {:.1e}",
            ens.positions[i].rem_euclid(1.0),
            guard.slope_floor
        )));
    }
    if !ens.is_ordered() {
        return Some((StopTrigger::Ordering, "particle ordering lost".into()));
    }
    None
}

/// Samples the reconstructed velocity on a uniform grid.
pub fn reconstruct_velocity(ens: &ParticleEnsemble, grid: GridSpec) -> RealField {
    let values = (0..grid.n_points())
        .into_par_iter()
        .map(|j| velocity_at(ens, grid.node(j)))
        .collect();
    RealField::new_unchecked(grid, values)
}

/// Fourier coefficients of the momentum carried by the particles,
/// `ŷ(n) = ∫ w(ξ) e^{−2πinφ(ξ)} dξ`, the change of variables of
/// `∫ y(x) e^{−2πinx} dx`. The displacement `φ − ξ` and the weights `w` are
/// smooth and periodic in `ξ`; for even `M` they are Fourier-refined to
/// `max(M, 2N)` labels before the trapezoid sum so that modes up to the
/// Nyquist of `grid` are integrated without label aliasing.
pub fn momentum_spectrum(ens: &ParticleEnsemble, grid: GridSpec) -> SpectralField {
    let m = ens.len();
    let (displacement, weights) = refined_labels(ens, (2 * grid.n_points()).max(m));
    let l = weights.len();
    let phases: Vec<Complex64> = displacement
        .iter()
        .enumerate()
        .map(|(i, &d)| Complex64::from_polar(1.0, -2.0 * PI * (i as f64 / l as f64 + d)))
        .collect();
    let half = grid.n_points() as i64 / 2;
    // fixed chunks summed in order keep the result independent of threading
    let partials: Vec<Vec<Complex64>> = phases
        .par_chunks(256)
        .zip(weights.par_chunks(256))
        .map(|(ph, ws)| {
            let mut acc = vec![Complex64::new(0.0, 0.0); half as usize + 1];
            for (&z, &w) in ph.iter().zip(ws) {
                let mut p = Complex64::new(w, 0.0);
                for a in acc.iter_mut() {
                    *a += p;
                    p *= z;
                }
            }
            acc
        })
        .collect();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); half as usize + 1];
    for part in &partials {
        for (c, p) in coeffs.iter_mut().zip(part) {
            *c += p;
        }
    }
    for c in coeffs.iter_mut() {
        *c /= l as f64;
    }
    let mut out = SpectralField::zeros(grid);
    for n in 0..half {
        out.set_coeff(n, coeffs[n as usize]).expect("mode is resolved");
        if n > 0 {
            out.set_coeff(-n, coeffs[n as usize].conj()).expect("mode is resolved");
        }
    }
    out.set_coeff(-half, Complex64::new(coeffs[half as usize].re, 0.0))
        .expect("Nyquist is resolved");
    out
}

/// Displacement `φ − ξ` and weights on `target` labels. Displacement,
/// stretch and `y₀` are Fourier-refined separately and the weights formed
/// on the fine labels, since `y₀/φ′²` is far less resolved than its factors
/// once the flow compresses.
fn refined_labels(ens: &ParticleEnsemble, target: usize) -> (Vec<f64>, Vec<f64>) {
    let m = ens.len();
    let displacement: Vec<f64> = (0..m).map(|i| ens.positions[i] - ens.label(i)).collect();
    let coarse = match GridSpec::new(m) {
        Ok(g) if target > m && target % 2 == 0 => g,
        _ => return (displacement, ens.weights()),
    };
    let fine = GridSpec::new(target).expect("target is even and above M");
    let refine = |v: Vec<f64>| {
        RealField::new_unchecked(coarse, v)
            .to_spectral()
            .resample(fine)
            .to_grid()
            .into_values()
    };
    let decay = (-ens.lambda * ens.t).exp();
    let stretches = refine(ens.stretches.clone());
    let momenta = refine(ens.initial_momenta.clone());
    let weights = momenta.iter().zip(&stretches).map(|(y0, s)| decay * y0 / (s * s)).collect();
    (refine(displacement), weights)
}

/// Velocity on the grid from the momentum spectrum, `û = ŷ / (Λ_μ² symbol)`.
/// Independent of the kernel sums used by the dynamics.
pub fn spectral_velocity(ens: &ParticleEnsemble, grid: GridSpec) -> RealField {
    momentum_spectrum(ens, grid)
        .apply_symbol(|n| Complex64::new(1.0 / lambda_mu2_symbol(n), 0.0))
        .to_grid()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::OutcomeKind;
    use crate::spectral::{apply_lambda_mu2_inv_spectral, derivative, mean};

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    fn sine(n: usize) -> RealField {
        RealField::from_fn(grid(n), |x| (2.0 * PI * x).sin())
    }

    #[test]
    fn rejects_too_few_particles() {
        assert!(matches!(
            init_particles(&sine(32), 15),
            Err(MudpError::TooFewParticles(15))
        ));
    }

    #[test]
    fn init_examples() {
        let c = init_particles(&RealField::constant(grid(32), 0.7), 32).unwrap();
        assert!(c.initial_momenta.iter().all(|&y| (y - 0.7).abs() < 1e-13));
        assert!(c.stretches.iter().all(|&s| s == 1.0));

        let e = init_particles(&sine(64), 64).unwrap();
        for i in 0..64 {
            let want = 4.0 * PI * PI * (2.0 * PI * e.label(i)).sin();
            assert!((e.initial_momenta[i] - want).abs() <= 1e-11);
        }
    }

    #[test]
    fn mean_of_initial_momentum_is_mean_of_u0() {
        let u0 = RealField::from_fn(grid(64), |x| 0.3 + (2.0 * PI * x).cos() - 0.2 * (8.0 * PI * x).sin());
        let e = init_particles(&u0, 48).unwrap();
        let avg = e.initial_momenta.iter().sum::<f64>() / 48.0;
        assert!((avg - mean(&u0)).abs() <= 1e-12);
    }

    #[test]
    fn velocity_at_reproduces_constant() {
        let e = init_particles(&RealField::constant(grid(32), 1.25), 64).unwrap();
        for &z in &[0.0, 0.123, 0.5, 0.999, -0.3] {
            assert!((velocity_at(&e, z) - 1.25).abs() <= 1e-10);
            // plain sum errs by c·h²·B₂(θ)/2
            let plain = velocity_at_with(&e, z, Quadrature::Trapezoid);
            assert!((plain - 1.25).abs() <= 1.25 / (12.0 * 64.0 * 64.0) + 1e-12);
        }
    }

    #[test]
    fn velocity_at_matches_u0_at_start() {
        let u0 = RealField::from_fn(grid(64), |x| 0.2 + (2.0 * PI * x).sin() + 0.3 * (4.0 * PI * x).cos());
        let e = init_particles(&u0, 256).unwrap();
        let spec = u0.to_spectral();
        for &z in &[0.01, 0.3, 0.5, 0.77] {
            assert!((velocity_at(&e, z) - spec.evaluate_at(z)).abs() <= 1e-4);
        }
    }

    #[test]
    fn slope_examples_at_start() {
        let c = init_particles(&RealField::constant(grid(32), 2.0), 64).unwrap();
        for &z in &[0.0, 0.25, 0.6] {
            assert!(slope_at(&c, z).abs() <= 1e-10);
        }
        let e = init_particles(&sine(64), 256).unwrap();
        for &z in &[0.0, 0.1, 0.37, 0.5] {
            assert!((slope_at(&e, z) - 2.0 * PI * (2.0 * PI * z).cos()).abs() <= 1e-3);
        }
    }

    #[test]
    fn slope_at_matches_difference_of_velocity() {
        let u0 = RealField::from_fn(grid(64), |x| (2.0 * PI * x).sin() + 0.4 * (6.0 * PI * x).cos());
        let e = init_particles(&u0, 512).unwrap();
        let d = 1e-4;
        for &z in &[0.0031, 0.2717, 0.6021] {
            let fd = (velocity_at(&e, z + d) - velocity_at(&e, z - d)) / (2.0 * d);
            // kernel quadrature is O(h²) and slightly non-smooth in z
            assert!((fd - slope_at(&e, z)).abs() < 5e-3, "{z}: {fd} vs {}", slope_at(&e, z));
        }
    }

    #[test]
    fn kink_corrected_rates_are_fourth_order_at_start() {
        // At t = 0 the labels form a grid, so the exact rates are
        // Λ_μ^{−2} y₀ = u₀ and its derivative.
        let errs = |m: usize, rule: Quadrature| {
            let u0 = RealField::from_fn(grid(m), |x| 0.4 + (2.0 * PI * x).sin() + 0.3 * (6.0 * PI * x).cos());
            let e = init_particles(&u0, m).unwrap();
            let r = particle_rhs_with(&e, rule);
            let ux = derivative(&u0, 1).unwrap();
            let ev = (0..m).map(|i| (r.velocity[i] - u0.values()[i]).abs()).fold(0.0, f64::max);
            let es = (0..m).map(|i| (r.slope[i] - ux.values()[i]).abs()).fold(0.0, f64::max);
            (ev, es)
        };
        let (pv1, ps1) = errs(64, Quadrature::Trapezoid);
        let (pv2, ps2) = errs(128, Quadrature::Trapezoid);
        assert!(((pv1 / pv2).log2() - 2.0).abs() < 0.1);
        assert!(((ps1 / ps2).log2() - 2.0).abs() < 0.1);
        let (cv1, cs1) = errs(64, Quadrature::KinkCorrected);
        let (cv2, cs2) = errs(128, Quadrature::KinkCorrected);
        assert!((cv1 / cv2).log2() > 3.5, "{cv1} {cv2}");
        assert!((cs1 / cs2).log2() > 3.5, "{cs1} {cs2}");
        // next Euler–Maclaurin term is h⁴ B₄/24 times jumps of w″, large here
        assert!(cv2 < 1e-6 && cs2 < 1e-5, "{cv1} {cv2} {cs1} {cs2}");
    }

    fn deformed(m: usize) -> ParticleEnsemble {
        let u0 = RealField::from_fn(grid(64), |x| 0.3 + (2.0 * PI * x).sin() + 0.2 * (4.0 * PI * x).cos());
        let mut e = init_particles_with_lambda(&u0, m, 0.5).unwrap();
        e.t = 0.2;
        for i in 0..m {
            let xi = e.label(i);
            e.positions[i] = xi + 0.1 * (2.0 * PI * xi).sin();
            e.stretches[i] = 1.0 + 0.2 * PI * (2.0 * PI * xi).cos();
        }
        e
    }

    #[test]
    fn corrected_kernel_sums_converge_off_labels_on_deformed_ensembles() {
        // φ = ξ + 0.1 sin(2πξ), referenced against the spectral reconstruction
        // of a much finer ensemble carrying the same momentum.
        let g = grid(256);
        let u = spectral_velocity(&deformed(2048), g);
        let ux = derivative(&u, 1).unwrap().to_spectral();
        let u = u.to_spectral();
        let zs = [0.0123, 0.2517, 0.5, 0.731, 0.9];
        let errs = |m: usize, rule: Quadrature| {
            let e = deformed(m);
            let ev = zs.iter().map(|&z| (velocity_at_with(&e, z, rule) - u.evaluate_at(z)).abs()).fold(0.0, f64::max);
            let es = zs.iter().map(|&z| (slope_at_with(&e, z, rule) - ux.evaluate_at(z)).abs()).fold(0.0, f64::max);
            (ev, es)
        };
        let (pv, ps) = errs(512, Quadrature::Trapezoid);
        let (cv1, cs1) = errs(256, Quadrature::KinkCorrected);
        let (cv2, cs2) = errs(512, Quadrature::KinkCorrected);
        assert!(ps > 1e-3 && pv > 1e-5, "{pv} {ps}");
        assert!(cv2 < 1e-8 && cs2 < 1e-7, "{cv2} {cs2}");
        let converges = |e1: f64, e2: f64| (e1 / e2).log2() > 3.5 || e1.max(e2) < 1e-12;
        assert!(converges(cv1, cv2) && converges(cs1, cs2), "{cv1} {cv2} {cs1} {cs2}");
    }

    #[test]
    fn particle_rhs_agrees_with_pointwise_evaluation() {
        let u0 = RealField::from_fn(grid(64), |x| 0.3 + (2.0 * PI * x).sin());
        let mut e = init_particles_with_lambda(&u0, 64, 0.5).unwrap();
        for i in 0..64 {
            let xi = e.label(i);
            e.positions[i] = xi + 0.05 * (2.0 * PI * xi).sin();
            e.stretches[i] = 1.0 + 0.1 * PI * (2.0 * PI * xi).cos();
        }
        let r = particle_rhs(&e);
        for i in (0..64).step_by(7) {
            assert!((r.velocity[i] - velocity_at(&e, e.positions[i])).abs() < 1e-13);
            assert!((r.slope[i] - slope_at(&e, e.positions[i])).abs() < 1e-13);
        }
    }

    #[test]
    fn particle_rhs_examples() {
        let z = init_particles(&RealField::zeros(grid(32)), 32).unwrap();
        let r = particle_rhs(&z);
        assert!(r.velocity.iter().chain(&r.stretch_rate).all(|&v| v == 0.0));

        let e = init_particles_with_lambda(&sine(64), 128, 1.0).unwrap();
        let r = particle_rhs(&e);
        for i in 0..128 {
            assert!((r.velocity[i] - (2.0 * PI * e.label(i)).sin()).abs() < 1e-6);
        }
        // ∫ u_x(φ(ξ)) φ′ dξ = ∫ u_x dx = 0
        let weighted = r.slope.iter().zip(&e.stretches).map(|(s, p)| s * p).sum::<f64>() / 128.0;
        assert!(weighted.abs() < 1e-8);
    }

    #[test]
    fn constant_field_translates_uniformly() {
        let c = 0.8;
        let lam = 1.5;
        let e = init_particles_with_lambda(&RealField::constant(grid(32), c), 64, lam).unwrap();
        let cfg = IntegratorConfig {
            t_end: 1.0,
            sample_interval: 0.25,
            dt_init: 0.01,
            ..Default::default()
        };
        let run = evolve_particles(&e, &cfg).unwrap();
        assert_eq!(run.outcome.kind, OutcomeKind::Completed);
        let last = run.last();
        let shift = c * (1.0 - (-lam * 1.0f64).exp()) / lam;
        for i in 0..64 {
            assert!((last.positions[i] - (last.label(i) + shift)).abs() < 1e-8);
            assert!((last.stretches[i] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn burgers_characteristics_without_damping() {
        let u0 = RealField::from_fn(grid(64), |x| 0.1 * (2.0 * PI * x).sin());
        let e = init_particles(&u0, 128).unwrap();
        let cfg = IntegratorConfig {
            t_end: 0.5,
            sample_interval: 0.25,
            dt_init: 0.01,
            ..Default::default()
        };
        let run = evolve_particles(&e, &cfg).unwrap();
        let last = run.last();
        for i in 0..128 {
            let xi = last.label(i);
            let want = xi + 0.5 * 0.1 * (2.0 * PI * xi).sin();
            assert!((last.positions[i] - want).abs() < 1e-7);
        }
    }

    #[test]
    fn spectral_velocity_matches_u0_at_start() {
        let u0 = RealField::from_fn(grid(64), |x| 0.2 + (2.0 * PI * x).sin() - 0.1 * (10.0 * PI * x).cos());
        let e = init_particles(&u0, 128).unwrap();
        let rec = spectral_velocity(&e, grid(64));
        assert!(rec.max_abs_diff(&u0) < 1e-12);
        let via_inverse = apply_lambda_mu2_inv_spectral(&apply_lambda_mu2(&u0));
        assert!(rec.max_abs_diff(&via_inverse) < 1e-12);
    }

    #[test]
    fn reconstruct_velocity_on_grid() {
        let u0 = RealField::from_fn(grid(64), |x| 0.5 * (2.0 * PI * x).cos());
        let e = init_particles(&u0, 256).unwrap();
        assert!(reconstruct_velocity(&e, grid(64)).max_abs_diff(&u0) < 1e-4);
    }
}
