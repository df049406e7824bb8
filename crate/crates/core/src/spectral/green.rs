//! Real-space realizations of `Λ_μ^{−2}`: convolution with the periodic
//! Green's kernel, and the explicit four-term antiderivative formula.

use rayon::prelude::*;

use super::RealField;

/// Green's kernel of `Λ_μ²` on the circle, `g(r) = r²/2 − r/2 + 13/12` with
/// `r = x − ⌊x⌋`. Continuous, with a kink at integers.
pub fn green_function(x: f64) -> f64 {
    let r = x - x.floor();
    0.5 * r * r - 0.5 * r + 13.0 / 12.0
}

/// `g′(x) = r − 1/2` for `r ∈ (0, 1)`, and `0` at the kink (mean of the
/// one-sided limits).
pub fn green_derivative(x: f64) -> f64 {
    let r = x - x.floor();
    if r == 0.0 {
        0.0
    } else {
        r - 0.5
    }
}

/// Quadrature rule for the kernel integrals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Quadrature {
    /// Uniform trapezoid rule; second order because the kernel is only C⁰.
    Trapezoid,
    /// Trapezoid plus the leading Euler–Maclaurin term at the kink (or at the
    /// interval ends for cumulative sums); fourth order.
    #[default]
    KinkCorrected,
}

/// Fourth-order centered difference on a periodic grid of spacing `h`.
pub fn fd4_derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|j| {
            let at = |k: isize| values[(j as isize + k).rem_euclid(n as isize) as usize];
            (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * h)
        })
        .collect()
}

pub fn apply_lambda_mu2_inv_green(f: &RealField) -> RealField {
    apply_lambda_mu2_inv_green_with(f, Quadrature::default())
}

/// `(Λ_μ^{−2} f)(x_i) ≈ h Σ_j g(x_i − x_j) f_j`.
///
/// The integrand's kink sits on the node `x_i`, so the trapezoid error is
/// `h²/12 · f(x_i)` to leading order; `KinkCorrected` subtracts it.
pub fn apply_lambda_mu2_inv_green_with(f: &RealField, rule: Quadrature) -> RealField {
    let grid = f.grid();
    let n = grid.n_points();
    let h = grid.spacing();
    let kernel: Vec<f64> = (0..n).map(|k| green_function(grid.node(k))).collect();
    let fv = f.values();
    let out: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for (j, &fj) in fv.iter().enumerate() {
                acc += kernel[(i + n - j) % n] * fj;
            }
            let u = h * acc;
            match rule {
                Quadrature::Trapezoid => u,
                Quadrature::KinkCorrected => u - h * h / 12.0 * fv[i],
            }
        })
        .collect();
    RealField::new_unchecked(grid, out)
}

pub fn apply_lambda_mu2_inv_closedform(f: &RealField) -> RealField {
    apply_lambda_mu2_inv_closedform_with(f, Quadrature::default())
}

/// Cumulative trapezoid `F(x_j) = ∫₀^{x_j} v` on nodes `0..=N`. With a
/// derivative table the Euler–Maclaurin end correction
/// `−h²/12 (v′(x_j) − v′(0))` is applied.
fn cumulative(v: &[f64], dv: Option<&[f64]>, h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in v.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    if let Some(dv) = dv {
        let d0 = dv[0];
        for (o, d) in out.iter_mut().zip(dv) {
            *o -= h * h / 12.0 * (d - d0);
        }
    }
    out
}

/// Evaluates
///
/// ```text
/// (Λ_μ^{−2} f)(x) = (x²/2 − x/2 + 13/12) ∫₀¹f + (x − 1/2) ∫₀¹∫₀ᵃf
///                   − ∫₀ˣ∫₀ᵃf + ∫₀¹∫₀ᵃ∫₀ᵇf
/// ```
///
/// with the iterated integrals computed as cumulative sums over the closed
/// grid `x_0..=x_N` (the last node is the periodic copy of `x_0`).
pub fn apply_lambda_mu2_inv_closedform_with(f: &RealField, rule: Quadrature) -> RealField {
    let grid = f.grid();
    let n = grid.n_points();
    let h = grid.spacing();
    let mut fe = f.values().to_vec();
    fe.push(fe[0]);

    let (f1, f2, f3) = match rule {
        Quadrature::Trapezoid => {
            let f1 = cumulative(&fe, None, h);
            let f2 = cumulative(&f1, None, h);
            let f3 = cumulative(&f2, None, h);
            (f1, f2, f3)
        }
        Quadrature::KinkCorrected => {
            let mut df = fd4_derivative(f.values(), h);
            df.push(df[0]);
            let f1 = cumulative(&fe, Some(&df), h);
            let f2 = cumulative(&f1, Some(&fe), h);
            let f3 = cumulative(&f2, Some(&f1), h);
            (f1, f2, f3)
        }
    };

    let total = f1[n];
    let double_total = f2[n];
    let triple_total = f3[n];
    let out = (0..n)
        .map(|j| {
            let x = grid.node(j);
            (0.5 * x * x - 0.5 * x + 13.0 / 12.0) * total + (x - 0.5) * double_total - f2[j]
                + triple_total
        })
        .collect();
    RealField::new_unchecked(grid, out)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::spectral::{apply_lambda_mu2_inv_spectral, mean, GridSpec};

    #[test]
    fn green_function_values() {
        assert_eq!(green_function(0.0), 13.0 / 12.0);
        assert!((green_function(0.5) - 23.0 / 24.0).abs() < 1e-15);
        // −0.25 reduces to r = 0.75: 0.28125 − 0.375 + 13/12
        assert!((green_function(-0.25) - (0.28125 - 0.375 + 13.0 / 12.0)).abs() < 1e-15);
        assert!((green_function(3.5) - green_function(0.5)).abs() < 1e-15);
    }

    #[test]
    fn green_function_has_unit_mass() {
        // ∫₀¹ (r²/2 − r/2 + 13/12) dr = 1/6 − 1/4 + 13/12 = 1
        let g = GridSpec::new(4096).unwrap();
        let samples = RealField::from_fn(g, green_function);
        let h = g.spacing();
        // trapezoid error for the kink at 0 is h²/12
        assert!((mean(&samples) - h * h / 12.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn green_derivative_values() {
        assert_eq!(green_derivative(0.75), 0.25);
        assert_eq!(green_derivative(0.0), 0.0);
        assert_eq!(green_derivative(0.25), -0.25);
        assert_eq!(green_derivative(-1.0), 0.0);
    }

    #[test]
    fn green_derivative_matches_difference_quotient() {
        for &x in &[0.1, 0.3, 0.62, 0.9] {
            let d = 1e-6;
            let fd = (green_function(x + d) - green_function(x - d)) / (2.0 * d);
            assert!((fd - green_derivative(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn green_route_reproduces_constants() {
        let g = GridSpec::new(64).unwrap();
        let c = RealField::constant(g, 2.25);
        let u = apply_lambda_mu2_inv_green(&c);
        assert!(u.max_abs_diff(&c) < 1e-10);
    }

    #[test]
    fn green_route_on_single_mode() {
        let g = GridSpec::new(256).unwrap();
        let f = RealField::from_fn(g, |x| 4.0 * PI * PI * (2.0 * PI * x).sin());
        let want = RealField::from_fn(g, |x| (2.0 * PI * x).sin());
        for rule in [Quadrature::Trapezoid, Quadrature::KinkCorrected] {
            let u = apply_lambda_mu2_inv_green_with(&f, rule);
            assert!(u.max_abs_diff(&want) <= 1e-4, "{rule:?}");
        }
    }

    #[test]
    fn green_route_unit_impulse_samples_kernel() {
        let g = GridSpec::new(128).unwrap();
        let j = 37;
        let mut v = vec![0.0; 128];
        v[j] = 128.0;
        let u = apply_lambda_mu2_inv_green_with(&RealField::new(g, v).unwrap(), Quadrature::Trapezoid);
        for i in 0..128 {
            let want = green_function(g.node(i) - g.node(j));
            assert!((u.values()[i] - want).abs() < 1e-13);
        }
    }

    #[test]
    fn green_route_within_1e6_of_spectral_at_128() {
        let g = GridSpec::new(128).unwrap();
        let f = RealField::from_fn(g, |x| {
            0.4 + (2.0 * PI * x).cos() - 0.5 * (6.0 * PI * x).sin() + 0.1 * (10.0 * PI * x).cos()
        });
        let spec = apply_lambda_mu2_inv_spectral(&f);
        assert!(apply_lambda_mu2_inv_green(&f).max_abs_diff(&spec) <= 1e-6);
    }

    #[test]
    fn plain_trapezoid_error_is_h2_over_12_times_f() {
        let g = GridSpec::new(256).unwrap();
        let f = RealField::from_fn(g, |x| (2.0 * PI * x).cos());
        let spec = apply_lambda_mu2_inv_spectral(&f);
        let plain = apply_lambda_mu2_inv_green_with(&f, Quadrature::Trapezoid);
        let h = g.spacing();
        let predicted = spec.axpy(h * h / 12.0, &f);
        assert!(plain.max_abs_diff(&predicted) < 1e-9);
    }

    #[test]
    fn closed_form_reproduces_constants() {
        // (x²/2 − x/2 + 13/12)c + (x − 1/2)(c/2) − c x²/2 + c/6 = c
        let g = GridSpec::new(64).unwrap();
        let c = RealField::constant(g, -1.5);
        let u = apply_lambda_mu2_inv_closedform(&c);
        assert!(u.max_abs_diff(&c) < 1e-10);
    }

    #[test]
    fn closed_form_on_single_mode() {
        let g = GridSpec::new(256).unwrap();
        let f = RealField::from_fn(g, |x| 4.0 * PI * PI * (2.0 * PI * x).cos());
        let spec = apply_lambda_mu2_inv_spectral(&f);
        assert!(apply_lambda_mu2_inv_closedform(&f).max_abs_diff(&spec) <= 1e-5);
    }

    #[test]
    fn fd4_is_fourth_order() {
        let errs: Vec<f64> = [64usize, 128]
            .iter()
            .map(|&n| {
                let g = GridSpec::new(n).unwrap();
                let f = RealField::from_fn(g, |x| (2.0 * PI * x).sin());
                let d = fd4_derivative(f.values(), g.spacing());
                d.iter()
                    .enumerate()
                    .map(|(j, v)| (v - 2.0 * PI * (2.0 * PI * g.node(j)).cos()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 3.8, "observed order {order}");
    }
}
