//! Checkable laws along computed trajectories: mean decay, the logistic
//! blow-up prediction, blow-up detection, the `H¹` energy balance of the
//! momentum, the global-existence bound and momentum transport.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eulerian::EulerianState;
use crate::error::{MudpError, Result};
use crate::lagrangian::{momentum_spectrum, particle_rhs, spectral_velocity, ParticleEnsemble};
use crate::spectral::{apply_lambda_mu2, derivative, derivative_symbol, mean, GridSpec, RealField};

/// Per-sample diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mean_u: f64,
    /// `|μ(u)(t) − μ(u)(0) e^{−λt}|`.
    pub mean_residual: f64,
    pub min_slope: f64,
    pub argmin_x: f64,
    pub max_abs_slope: f64,
    pub sup_abs_u: f64,
    /// `‖Λ_μ² u‖_{L¹}`.
    pub y_l1: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// `‖y‖²_{H¹} = ∫ y² + y_x²`.
    pub h1_y_sq: f64,
    /// `−7∫y_x²u_x − 5∫u_x y² − 2λ‖y‖²_{H¹}`.
    pub h1_rhs: f64,
    /// `7|∫y_x²u_x| + 5|∫u_x y²| + 2λ‖y‖²_{H¹}`, the size of the balance terms.
    pub h1_rhs_scale: f64,
    pub h1_balance_residual: Option<f64>,
    pub transport_drift: Option<f64>,
}

impl DiagnosticsRecord {
    /// Column names accepted by [`DiagnosticsRecord::field`], in declaration order.
    pub const FIELDS: [&'static str; 15] = [
        "t",
        "mean_u",
        "mean_residual",
        "min_slope",
        "argmin_x",
        "max_abs_slope",
        "sup_abs_u",
        "y_l1",
        "y_min",
        "y_max",
        "h1_y_sq",
        "h1_rhs",
        "h1_rhs_scale",
        "h1_balance_residual",
        "transport_drift",
    ];

    /// Value of a named column; `Some(None)` for an absent optional value
    /// and `None` for an unknown name.
    pub fn field(&self, name: &str) -> Option<Option<f64>> {
        Some(match name {
            "t" => Some(self.t),
            "mean_u" => Some(self.mean_u),
            "mean_residual" => Some(self.mean_residual),
            "min_slope" => Some(self.min_slope),
            "argmin_x" => Some(self.argmin_x),
            "max_abs_slope" => Some(self.max_abs_slope),
            "sup_abs_u" => Some(self.sup_abs_u),
            "y_l1" => Some(self.y_l1),
            "y_min" => Some(self.y_min),
            "y_max" => Some(self.y_max),
            "h1_y_sq" => Some(self.h1_y_sq),
            "h1_rhs" => Some(self.h1_rhs),
            "h1_rhs_scale" => Some(self.h1_rhs_scale),
            "h1_balance_residual" => self.h1_balance_residual,
            "transport_drift" => self.transport_drift,
            _ => return None,
        })
    }
}

/// Grid-based quantities of a velocity snapshot.
struct FieldMeasures {
    mean_u: f64,
    min_slope: f64,
    argmin_x: f64,
    max_abs_slope: f64,
    sup_abs_u: f64,
    y_l1: f64,
    y_min: f64,
    y_max: f64,
    h1_y_sq: f64,
    h1_rhs: f64,
    h1_rhs_scale: f64,
}

fn measure(u: &RealField, lambda: f64) -> FieldMeasures {
    let grid = u.grid();
    let ux = derivative(u, 1).expect("order 1 is valid");
    let y = apply_lambda_mu2(u);
    let yx = derivative(&y, 1).expect("order 1 is valid");
    let (min_slope, j) = ux.min_with_index();
    let n = grid.n_points() as f64;
    let (uv, uxv, yv, yxv) = (u.values(), ux.values(), y.values(), yx.values());
    let mut y_l1 = 0.0;
    let mut h1 = 0.0;
    let mut cubic_x = 0.0;
    let mut cubic = 0.0;
    for k in 0..uv.len() {
        y_l1 += yv[k].abs();
        h1 += yv[k] * yv[k] + yxv[k] * yxv[k];
        cubic_x += yxv[k] * yxv[k] * uxv[k];
        cubic += uxv[k] * yv[k] * yv[k];
    }
    let h1_y_sq = h1 / n;
    FieldMeasures {
        mean_u: mean(u),
        min_slope,
        argmin_x: grid.node(j),
        max_abs_slope: ux.max_abs(),
        sup_abs_u: u.max_abs(),
        y_l1: y_l1 / n,
        y_min: y.min_with_index().0,
        y_max: y.values().iter().copied().fold(f64::NEG_INFINITY, f64::max),
        h1_y_sq,
        h1_rhs: -7.0 * cubic_x / n - 5.0 * cubic / n - 2.0 * lambda * h1_y_sq,
        h1_rhs_scale: 7.0 * (cubic_x / n).abs() + 5.0 * (cubic / n).abs() + 2.0 * lambda * h1_y_sq,
    }
}

fn record(t: f64, m: FieldMeasures) -> DiagnosticsRecord {
    DiagnosticsRecord {
        t,
        mean_u: m.mean_u,
        mean_residual: 0.0,
        min_slope: m.min_slope,
        argmin_x: m.argmin_x,
        max_abs_slope: m.max_abs_slope,
        sup_abs_u: m.sup_abs_u,
        y_l1: m.y_l1,
        y_min: m.y_min,
        y_max: m.y_max,
        h1_y_sq: m.h1_y_sq,
        h1_rhs: m.h1_rhs,
        h1_rhs_scale: m.h1_rhs_scale,
        h1_balance_residual: None,
        transport_drift: None,
    }
}

fn finish(records: &mut [DiagnosticsRecord], lambda: f64) {
    if let Some(first) = records.first() {
        let mean0 = first.mean_u;
        for r in records.iter_mut() {
            r.mean_residual = (r.mean_u - mean0 * (-lambda * r.t).exp()).abs();
        }
    }
    let residuals = h1_balance_residual(records);
    for (r, res) in records.iter_mut().zip(residuals) {
        r.h1_balance_residual = res;
    }
}

pub fn eulerian_records(samples: &[EulerianState]) -> Vec<DiagnosticsRecord> {
    let lambda = samples.first().map_or(0.0, |s| s.lambda);
    let mut out: Vec<DiagnosticsRecord> = samples
        .par_iter()
        .map(|s| record(s.t, measure(&s.u, s.lambda)))
        .collect();
    finish(&mut out, lambda);
    out
}

/// Records for a particle run. Slopes are the particle slopes; the other
/// field quantities come from the spectral reconstruction on `grid`.
pub fn lagrangian_records(samples: &[ParticleEnsemble], grid: GridSpec) -> Vec<DiagnosticsRecord> {
    let lambda = samples.first().map_or(0.0, |s| s.lambda);
    let mut out: Vec<DiagnosticsRecord> = samples
        .iter()
        .map(|ens| {
            let u = spectral_velocity(ens, grid);
            let mut m = measure(&u, ens.lambda);
            let rates = particle_rhs(ens);
            let (slope, i) = rates.min_slope();
            m.min_slope = slope;
            m.argmin_x = ens.positions[i].rem_euclid(1.0);
            m.max_abs_slope = rates.slope.iter().fold(0.0_f64, |a, s| a.max(s.abs()));
            let mut r = record(ens.t, m);
            r.transport_drift = Some(transport_drift(ens));
            r
        })
        .collect();
    finish(&mut out, lambda);
    out
}

/// Largest `|μ(u)(t) − μ(u)(0) e^{−λt}|` over the records.
pub fn mean_decay_residual(records: &[DiagnosticsRecord]) -> f64 {
    records.iter().map(|r| r.mean_residual).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupPrediction {
    /// Whether `0 < 1 + λ/u₀ₓ(x*) < 1`.
    pub applicable: bool,
    pub x_star: f64,
    pub u0x_star: f64,
    /// Predicted blow-up time; `None` when not applicable.
    pub tau: Option<f64>,
    /// `Γ = −λ`.
    pub gamma: f64,
    /// Set when `μ(u₀) ≠ 0`: the slope equation then has an extra forcing
    /// term and `tau` is only a heuristic.
    pub nonzero_mean: bool,
}

/// Blow-up time from the logistic law `w_t = w(Γ − w)` for the slope
/// `w = u_x∘φ` at the steepest point of `u₀`:
/// `τ = −(1/λ) ln(1 + λ/u₀ₓ(x*))`, and `τ = −1/u₀ₓ(x*)` when `λ = 0`.
pub fn logistic_predict(u0: &RealField, lambda: f64) -> Result<BlowupPrediction> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(MudpError::InvalidArgument(format!("lambda must be ≥ 0, got {lambda}")));
    }
    if !u0.is_finite() {
        return Err(MudpError::InvalidArgument("initial data is not finite".into()));
    }
    let (x_star, u0x_star) = steepest_point(u0);
    let scale = u0.max_abs().max(1.0);
    let nonzero_mean = mean(u0).abs() > 1e-12 * scale;
    let applicable = u0x_star < 0.0 && -u0x_star > lambda;
    let tau = applicable.then(|| {
        if lambda == 0.0 {
            -1.0 / u0x_star
        } else {
            -(lambda / u0x_star).ln_1p() / lambda
        }
    });
    Ok(BlowupPrediction {
        applicable,
        x_star,
        u0x_star,
        tau,
        gamma: -lambda,
        nonzero_mean,
    })
}

/// Minimizer of `u₀ₓ`: grid argmin, moved to the vertex of the parabola
/// through it and its neighbours, then valued on the trigonometric
/// interpolant. Modes below the transform round-off level are dropped
/// first, since differentiation amplifies them by up to `πN`.
fn steepest_point(u0: &RealField) -> (f64, f64) {
    let grid = u0.grid();
    let n = grid.n_points();
    let spec = u0.to_spectral();
    let cut = 64.0 * f64::EPSILON * spec.modes().map(|(_, c)| c.norm()).fold(0.0, f64::max);
    let d = derivative_symbol(grid.nyquist(), 1);
    let cx = spec.apply_symbol(|k| if spec.coeff(k).norm() < cut { Complex64::new(0.0, 0.0) } else { d(k) });
    let ux = cx.to_grid();
    let (_, j) = ux.min_with_index();
    let v = ux.values();
    let (a, b, c) = (v[(j + n - 1) % n], v[j], v[(j + 1) % n]);
    let curvature = a - 2.0 * b + c;
    let offset = if curvature > 0.0 {
        (0.5 * (a - c) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let x = (grid.node(j) + offset * grid.spacing()).rem_euclid(1.0);
    let value = cx.evaluate_at(x);
    if value <= b {
        (x, value)
    } else {
        (grid.node(j), b)
    }
}

/// First record with `min_slope < slope_floor`, as `(t_detect, min_slope)`.
pub fn detect_blowup(records: &[DiagnosticsRecord], slope_floor: f64) -> Option<(f64, f64)> {
    records
        .iter()
        .find(|r| r.min_slope < slope_floor)
        .map(|r| (r.t, r.min_slope))
}

/// `|d/dt ‖y‖²_{H¹} − RHS| / max(1, S)` per record, where `S` is the sum of
/// the magnitudes of the three balance terms (the RHS itself changes sign
/// along typical trajectories). The time derivative
/// uses centered differences inside the uniformly sampled prefix and
/// second-order one-sided differences at its ends; records off that prefix,
/// or prefixes shorter than five samples, get `None`.
pub fn h1_balance_residual(records: &[DiagnosticsRecord]) -> Vec<Option<f64>> {
    let mut out = vec![None; records.len()];
    if records.len() < 5 {
        return out;
    }
    let t0 = records[0].t;
    let dt = records[1].t - t0;
    if dt <= 0.0 {
        return out;
    }
    let uniform = records
        .iter()
        .enumerate()
        .take_while(|(k, r)| (r.t - t0 - *k as f64 * dt).abs() <= 1e-9 * dt.max(r.t.abs()))
        .count();
    if uniform < 5 {
        return out;
    }
    let e: Vec<f64> = records[..uniform].iter().map(|r| r.h1_y_sq).collect();
    for k in 0..uniform {
        let lhs = if k == 0 {
            (-3.0 * e[0] + 4.0 * e[1] - e[2]) / (2.0 * dt)
        } else if k == uniform - 1 {
            (3.0 * e[k] - 4.0 * e[k - 1] + e[k - 2]) / (2.0 * dt)
        } else {
            (e[k + 1] - e[k - 1]) / (2.0 * dt)
        };
        let rhs = records[k].h1_rhs;
        out[k] = Some((lhs - rhs).abs() / records[k].h1_rhs_scale.max(1.0));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalBound {
    /// Whether `y₀` and `μ(u₀)` have the required matching signs.
    pub applicable: bool,
    /// `y₀ ≤ 0`, `μ(u₀) < 0`: the bound is checked with absolute values.
    pub mirrored: bool,
    pub holds: bool,
    /// `C |μ(u₀)| − sup_t ‖u_x‖_∞`.
    pub margin: f64,
    pub bound: f64,
    pub sup_slope: f64,
}

/// Constant in `‖u_x‖_∞ ≤ C ∫ Λ_μ² u` for sign-definite momentum: the
/// kernel slope satisfies `|g′| ≤ 1/2`.
pub const SLOPE_BOUND_CONSTANT: f64 = 0.5;

/// Checks `sup_t ‖u_x‖_∞ ≤ ½ |μ(u₀)|` along the records when `y₀ ≥ 0` and
/// `μ(u₀) > 0` (or the mirrored signs).
pub fn certify_global_bound(records: &[DiagnosticsRecord], u0: &RealField) -> GlobalBound {
    let y0 = apply_lambda_mu2(u0);
    let mu0 = mean(u0);
    let tol = 1e-12 * y0.max_abs().max(1.0);
    let positive = mu0 > 0.0 && y0.values().iter().all(|&v| v >= -tol);
    let negative = mu0 < 0.0 && y0.values().iter().all(|&v| v <= tol);
    let sup_slope = records.iter().map(|r| r.max_abs_slope).fold(0.0, f64::max);
    let bound = SLOPE_BOUND_CONSTANT * mu0.abs();
    let applicable = positive || negative;
    GlobalBound {
        applicable,
        mirrored: negative,
        holds: applicable && sup_slope <= bound,
        margin: bound - sup_slope,
        bound,
        sup_slope,
    }
}

/// Largest `|e^{λt} y(φ_i) φ′_i³ − y₀_i| / (1 + |y₀_i|)` over the particles,
/// with `y` reconstructed spectrally from the particle momentum and
/// evaluated at the particle positions. The reconstruction grid starts at
/// `4M` points and doubles, up to `16M`, until the top sixteenth of the
/// spectrum is below `1e-10` of the largest coefficient.
pub fn transport_drift(ens: &ParticleEnsemble) -> f64 {
    let mut n = 4 * ens.len();
    let y = loop {
        let y = momentum_spectrum(ens, GridSpec::new(n).expect("4M is even and at least 64"));
        let half = n as i64 / 2;
        let peak = y.modes().map(|(_, c)| c.norm()).fold(0.0, f64::max);
        let tail = (half - half / 8..half).map(|k| y.coeff(k).norm()).fold(0.0, f64::max);
        if tail <= 1e-10 * peak || n >= 16 * ens.len() {
            break y;
        }
        n *= 2;
    };
    let growth = (ens.lambda * ens.t).exp();
    (0..ens.len())
        .into_par_iter()
        .map(|i| {
            let s = ens.stretches[i];
            let y0 = ens.initial_momenta[i];
            let carried = growth * y.evaluate_at(ens.positions[i].rem_euclid(1.0)) * s * s * s;
            (carried - y0).abs() / (1.0 + y0.abs())
        })
        .reduce(|| 0.0, f64::max)
}

/// Exact zero-mean solution `u(t, x)`, found by inverting
/// `x = ξ + u₀(ξ)(1 − e^{−λt})/λ` (with `(1 − e^{−λt})/λ → t` as `λ → 0`)
/// and returning `u₀(ξ) e^{−λt}`. Valid before the characteristics cross.
pub fn zero_mean_characteristic(u0: &impl Fn(f64) -> f64, u0x: &impl Fn(f64) -> f64, lambda: f64, t: f64, x: f64) -> f64 {
    let k = characteristic_factor(lambda, t);
    let mut xi = x;
    for _ in 0..100 {
        let f = xi + k * u0(xi) - x;
        let step = f / (1.0 + k * u0x(xi));
        xi -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    u0(xi) * (-lambda * t).exp()
}

/// `(1 − e^{−λt})/λ`, or `t` when `λ = 0`.
pub fn characteristic_factor(lambda: f64, t: f64) -> f64 {
    if lambda == 0.0 {
        t
    } else {
        -(-lambda * t).exp_m1() / lambda
    }
}
