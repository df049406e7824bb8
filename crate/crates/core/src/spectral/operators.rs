use std::f64::consts::PI;

use num_complex::Complex64;

use super::{RealField, SobolevOrder, SpectralField};
use crate::error::{MudpError, Result};

/// Grid mean `μ(f) = (1/N) Σ f_j`, the periodic trapezoid rule.
pub fn mean(f: &RealField) -> f64 {
    f.values().iter().sum::<f64>() / f.values().len() as f64
}

/// Spectral symbol of `∂ₓ^order`; the Nyquist mode is dropped for odd orders.
pub(crate) fn derivative_symbol(nyquist: i64, order: u32) -> impl Fn(i64) -> Complex64 {
    move |n| {
        if order % 2 == 1 && n == nyquist {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(0.0, 2.0 * PI * n as f64).powu(order)
    }
}

pub fn derivative(f: &RealField, order: u32) -> Result<RealField> {
    if !(1..=3).contains(&order) {
        return Err(MudpError::InvalidOrder(order));
    }
    let spec = f.to_spectral();
    let nyq = f.grid().nyquist();
    Ok(spec.apply_symbol(derivative_symbol(nyq, order)).to_grid())
}

/// Symbol of `Λ_μ²`: 1 on mode 0, `4π²n²` elsewhere.
pub(crate) fn lambda_mu2_symbol(n: i64) -> f64 {
    if n == 0 {
        1.0
    } else {
        4.0 * PI * PI * (n * n) as f64
    }
}

pub fn apply_lambda_mu2(f: &RealField) -> RealField {
    f.to_spectral()
        .apply_symbol(|n| Complex64::new(lambda_mu2_symbol(n), 0.0))
        .to_grid()
}

pub fn apply_lambda_mu2_inv_spectral(f: &RealField) -> RealField {
    f.to_spectral()
        .apply_symbol(|n| Complex64::new(1.0 / lambda_mu2_symbol(n), 0.0))
        .to_grid()
}

/// `‖f‖_s = (Σ (1+4π²n²)^s |ĉ(n)|²)^{1/2}` over the resolved modes.
pub fn sobolev_norm(f: &RealField, s: SobolevOrder) -> f64 {
    sobolev_norm_spectral(&f.to_spectral(), s)
}

pub fn sobolev_norm_spectral(c: &SpectralField, s: SobolevOrder) -> f64 {
    c.modes()
        .map(|(n, c)| (1.0 + 4.0 * PI * PI * (n * n) as f64).powf(s.value()) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}
