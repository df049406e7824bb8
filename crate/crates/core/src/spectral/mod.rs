//! Periodic fields on the unit circle `[0, 1)` and the spatial operators of
//! the μ-family: the mean `μ`, spectral derivatives, `Λ_μ² = μ − ∂ₓ²` and
//! three independent realizations of its inverse.
//!
//! Fourier convention: `f(x) = Σ ĉ(n) e^{2πinx}` with the forward transform
//! scaled by `1/N`, so that mode 0 is exactly the grid mean.

mod green;
mod operators;

pub use green::{
    apply_lambda_mu2_inv_closedform, apply_lambda_mu2_inv_closedform_with,
    apply_lambda_mu2_inv_green, apply_lambda_mu2_inv_green_with, fd4_derivative, green_derivative,
    green_function, Quadrature,
};
pub use operators::{
    apply_lambda_mu2, apply_lambda_mu2_inv_spectral, derivative, mean, sobolev_norm,
    sobolev_norm_spectral,
};
pub(crate) use operators::{derivative_symbol, lambda_mu2_symbol};

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{MudpError, Result};

/// Uniform grid `x_j = j/N` on the unit circle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridSpec {
    n_points: usize,
}

impl GridSpec {
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < 8 || n_points % 2 != 0 {
            return Err(MudpError::InvalidGrid(n_points));
        }
        Ok(Self { n_points })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n_points as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 / self.n_points as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.node(j)).collect()
    }

    /// Signed wavenumber stored at FFT slot `k` (range `−N/2..N/2−1`).
    pub fn wavenumber(&self, k: usize) -> i64 {
        let n = self.n_points as i64;
        let k = k as i64;
        if k < n / 2 {
            k
        } else {
            k - n
        }
    }

    /// FFT slot holding wavenumber `n`, if it is resolved on this grid.
    pub fn slot(&self, n: i64) -> Option<usize> {
        let big_n = self.n_points as i64;
        if n < -big_n / 2 || n >= big_n / 2 {
            return None;
        }
        Some(n.rem_euclid(big_n) as usize)
    }

    /// Wavenumber of the unpaired Nyquist mode, `−N/2`.
    pub fn nyquist(&self) -> i64 {
        -(self.n_points as i64) / 2
    }
}

/// Samples of a periodic real function on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl RealField {
    /// Builds a field, rejecting wrong lengths and non-finite samples.
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(MudpError::LengthMismatch {
                expected: grid.n_points(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(MudpError::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    /// Builds a field without the finiteness check. Used for post-blow-up
    /// output and for intermediate solver stages.
    pub fn new_unchecked(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_points());
        Self { grid, values }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n_points()).map(|j| f(grid.node(j))).collect();
        Self { grid, values }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.n_points()],
        }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Smallest sample and its index.
    pub fn min_with_index(&self) -> (f64, usize) {
        self.values
            .iter()
            .enumerate()
            .fold((f64::INFINITY, 0), |(m, i), (j, &v)| if v < m { (v, j) } else { (m, i) })
    }

    /// `max_j |self_j − other_j|`.
    pub fn max_abs_diff(&self, other: &RealField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealField {
        RealField::new_unchecked(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, a: f64) -> RealField {
        self.map(|v| a * v)
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &RealField) -> RealField {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| x + a * y)
            .collect();
        RealField::new_unchecked(self.grid, values)
    }

    pub fn to_spectral(&self) -> SpectralField {
        let n = self.grid.n_points();
        let mut buf: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        with_plans(n, |fwd, _| fwd.process(&mut buf));
        let scale = 1.0 / n as f64;
        for c in &mut buf {
            *c *= scale;
        }
        SpectralField {
            grid: self.grid,
            coeffs: buf,
        }
    }
}

/// Fourier coefficients `ĉ(n)`, `n = −N/2..N/2−1`, stored in FFT slot order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.n_points()],
        }
    }

    pub fn from_slots(grid: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.n_points() {
            return Err(MudpError::LengthMismatch {
                expected: grid.n_points(),
                got: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn slots(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn slots_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient of wavenumber `n`; zero for unresolved modes.
    pub fn coeff(&self, n: i64) -> Complex64 {
        self.grid
            .slot(n)
            .map(|k| self.coeffs[k])
            .unwrap_or_else(|| Complex64::new(0.0, 0.0))
    }

    pub fn set_coeff(&mut self, n: i64, c: Complex64) -> Result<()> {
        let k = self
            .grid
            .slot(n)
            .ok_or_else(|| MudpError::InvalidArgument(format!("mode {n} is not resolved")))?;
        self.coeffs[k] = c;
        Ok(())
    }

    /// `(n, ĉ(n))` pairs in slot order.
    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(k, &c)| (self.grid.wavenumber(k), c))
    }

    /// Multiplies every coefficient by `symbol(n)`.
    pub fn apply_symbol(&self, symbol: impl Fn(i64) -> Complex64) -> SpectralField {
        let coeffs = self.modes().map(|(n, c)| c * symbol(n)).collect();
        SpectralField {
            grid: self.grid,
            coeffs,
        }
    }

    /// Trigonometric interpolant moved to another grid: modes are copied,
    /// zero-padded or truncated, and Nyquist terms are split or folded so the
    /// real interpolant is preserved whenever it is representable.
    pub fn resample(&self, grid: GridSpec) -> SpectralField {
        let mut out = SpectralField::zeros(grid);
        let old = self.grid.n_points() as i64 / 2;
        let new = grid.n_points() as i64 / 2;
        let keep = old.min(new);
        for n in (1 - keep)..keep {
            out.coeffs[grid.slot(n).expect("mode below both Nyquists")] = self.coeff(n);
        }
        let edge = if old <= new {
            self.coeff(-old).re
        } else {
            (self.coeff(new) + self.coeff(-new)).re
        };
        if old < new {
            out.coeffs[grid.slot(old).expect("resolved")] = Complex64::new(0.5 * edge, 0.0);
            out.coeffs[grid.slot(-old).expect("resolved")] = Complex64::new(0.5 * edge, 0.0);
        } else {
            out.coeffs[grid.slot(-new).expect("resolved")] = Complex64::new(edge, 0.0);
        }
        out
    }

    /// Largest violation of `ĉ(−n) = conj ĉ(n)` over the paired modes.
    pub fn hermitian_defect(&self) -> f64 {
        let half = self.grid.n_points() as i64 / 2;
        (1..half)
            .map(|n| (self.coeff(-n) - self.coeff(n).conj()).norm())
            .chain(std::iter::once(self.coeff(0).im.abs()))
            .fold(0.0, f64::max)
    }

    /// Inverse transform; the imaginary residue is discarded.
    pub fn to_grid(&self) -> RealField {
        let n = self.grid.n_points();
        let mut buf = self.coeffs.clone();
        with_plans(n, |_, inv| inv.process(&mut buf));
        RealField::new_unchecked(self.grid, buf.iter().map(|c| c.re).collect())
    }

    /// Real trigonometric interpolant evaluated at an arbitrary point. The
    /// Nyquist mode contributes `Re ĉ(−N/2) cos(πNx)`.
    pub fn evaluate_at(&self, x: f64) -> f64 {
        let big_n = self.grid.n_points() as i64;
        let x = x.rem_euclid(1.0);
        let step = Complex64::from_polar(1.0, 2.0 * PI * x);
        let mut rot = step;
        let mut acc = 0.0;
        for n in 1..big_n / 2 {
            // ĉ(n)e^{iθ} + conj = 2 Re(ĉ(n) e^{iθ})
            acc += (self.coeff(n) * rot).re;
            rot *= step;
            if n % 64 == 0 {
                // re-anchor the recurrence to keep round-off at O(64 ε)
                rot = Complex64::from_polar(1.0, 2.0 * PI * ((n + 1) as f64 * x).rem_euclid(1.0));
            }
        }
        let nyq = self.coeff(-big_n / 2);
        self.coeff(0).re + 2.0 * acc + nyq.re * (PI * big_n as f64 * x).cos()
    }
}

/// Exponent `s` of the periodic Sobolev space `H^s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SobolevOrder(f64);

impl SobolevOrder {
    pub fn new(s: f64) -> Result<Self> {
        if !s.is_finite() || s < 0.0 {
            return Err(MudpError::InvalidSobolevOrder(s));
        }
        Ok(Self(s))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<usize, PlanPair>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

/// Runs `f` with this thread's cached forward/inverse plans for size `n`.
pub(crate) fn with_plans<R>(n: usize, f: impl FnOnce(&dyn Fft<f64>, &dyn Fft<f64>) -> R) -> R {
    let (fwd, inv) = PLANS.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        if let Some(pair) = cache.get(&n) {
            return pair.clone();
        }
        let pair = (planner.plan_fft_forward(n), planner.plan_fft_inverse(n));
        cache.insert(n, pair.clone());
        pair
    });
    f(fwd.as_ref(), inv.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_preserves_the_interpolant() {
        let coarse = GridSpec::new(16).unwrap();
        let fine = GridSpec::new(40).unwrap();
        let f = RealField::from_fn(coarse, |x| 0.3 + (2.0 * PI * x).sin() + 0.7 * (16.0 * PI * x).cos());
        let c = f.to_spectral();
        let up = c.resample(fine);
        for &x in &[0.0, 0.1, 0.37, 0.8] {
            assert!((up.evaluate_at(x) - c.evaluate_at(x)).abs() < 1e-13);
        }
        let back = up.resample(coarse).to_grid();
        assert!(back.max_abs_diff(&f) < 1e-13);
        assert!(up.hermitian_defect() < 1e-15);
    }

    #[test]
    fn grid_rejects_odd_and_small_sizes() {
        assert!(GridSpec::new(6).is_err());
        assert!(GridSpec::new(15).is_err());
        assert!(GridSpec::new(8).is_ok());
    }

    #[test]
    fn wavenumber_and_slot_are_inverse() {
        let g = GridSpec::new(16).unwrap();
        for k in 0..16 {
            assert_eq!(g.slot(g.wavenumber(k)), Some(k));
        }
        assert_eq!(g.wavenumber(8), -8);
        assert_eq!(g.slot(8), None);
    }

    #[test]
    fn field_rejects_nan_and_bad_length() {
        let g = GridSpec::new(8).unwrap();
        assert!(matches!(
            RealField::new(g, vec![0.0; 7]),
            Err(MudpError::LengthMismatch { .. })
        ));
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(matches!(RealField::new(g, v), Err(MudpError::NonFinite { index: 3 })));
    }

    #[test]
    fn mode_zero_is_the_mean() {
        let g = GridSpec::new(32).unwrap();
        let f = RealField::from_fn(g, |x| 2.0 + (2.0 * PI * x).sin());
        let c = f.to_spectral();
        assert!((c.coeff(0).re - 2.0).abs() < 1e-15);
        assert!((c.coeff(1) - Complex64::new(0.0, -0.5)).norm() < 1e-15);
        assert!(c.hermitian_defect() < 1e-15);
    }

    #[test]
    fn evaluate_at_reproduces_band_limited_function() {
        let g = GridSpec::new(32).unwrap();
        let f = |x: f64| 0.3 + (2.0 * PI * x).cos() - 0.2 * (6.0 * PI * x).sin();
        let c = RealField::from_fn(g, f).to_spectral();
        for &x in &[0.013, 0.4, 0.777] {
            assert!((c.evaluate_at(x) - f(x)).abs() < 1e-13);
        }
    }
}
