//! Operator identity suite on seeded band-limited fields.

use serde::{Deserialize, Serialize};

use super::config::{InitialData, Preset};
use crate::spectral::{
    apply_lambda_mu2, apply_lambda_mu2_inv_closedform_with, apply_lambda_mu2_inv_green_with,
    apply_lambda_mu2_inv_spectral, derivative, mean, sobolev_norm, GridSpec, Quadrature, RealField,
    SobolevOrder,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpCheck {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub threshold: f64,
    pub pass: bool,
}

impl OpCheck {
    fn new(name: &str, value: f64, bound: Bound, threshold: f64) -> Self {
        let pass = match bound {
            Bound::AtMost => value <= threshold,
            Bound::AtLeast => value >= threshold,
        };
        Self {
            name: name.to_string(),
            value,
            bound,
            threshold,
            pass,
        }
    }
}

pub const SUITE_FIELDS: usize = 50;
pub const SUITE_POINTS: usize = 256;
pub const ROUTE_GRIDS: [usize; 3] = [128, 256, 512];
/// Required observed decay order of the route discrepancy.
pub const ROUTE_ORDER: f64 = 1.9;

/// The `k`-th test field: seeded random modes up to `N/8` with a nonzero mean.
pub fn test_field(grid: GridSpec, seed: u64, max_mode: usize) -> RealField {
    InitialData::Preset(Preset::RandomBandlimited {
        amplitude: 1.0,
        offset: 0.5,
        max_mode,
    })
    .field(grid, seed)
}

fn linf(a: &RealField, b: &RealField) -> f64 {
    a.max_abs_diff(b)
}

/// Largest pairwise discrepancy of the three `Λ_μ^{−2}` routes.
pub fn route_discrepancy(f: &RealField) -> f64 {
    route_discrepancy_with(f, Quadrature::default())
}

pub fn route_discrepancy_with(f: &RealField, rule: Quadrature) -> f64 {
    let s = apply_lambda_mu2_inv_spectral(f);
    let g = apply_lambda_mu2_inv_green_with(f, rule);
    let c = apply_lambda_mu2_inv_closedform_with(f, rule);
    linf(&s, &g).max(linf(&s, &c)).max(linf(&g, &c))
}

/// Smallest observed order of the route discrepancy over `ROUTE_GRIDS`.
pub fn route_order(seed: u64, rule: Quadrature) -> (Vec<f64>, f64) {
    let discrepancies: Vec<f64> = ROUTE_GRIDS
        .iter()
        .map(|&n| {
            let g = GridSpec::new(n).expect("valid grid");
            (0..5)
                .map(|k| route_discrepancy_with(&test_field(g, seed.wrapping_add(k), 16), rule))
                .fold(0.0, f64::max)
        })
        .collect();
    let order = discrepancies
        .windows(2)
        .zip(ROUTE_GRIDS.windows(2))
        .map(|(d, n)| (d[0] / d[1]).ln() / (n[1] as f64 / n[0] as f64).ln())
        .fold(f64::INFINITY, f64::min);
    (discrepancies, order)
}

/// Identity checks and the route checks.
pub fn operator_suite(seed: u64) -> Vec<OpCheck> {
    let mut checks = identity_checks(seed);
    checks.extend(route_checks(seed));
    checks
}

fn suite_fields(seed: u64) -> Vec<RealField> {
    let grid = GridSpec::new(SUITE_POINTS).expect("valid grid");
    (0..SUITE_FIELDS as u64)
        .map(|k| test_field(grid, seed.wrapping_add(k), SUITE_POINTS / 8))
        .collect()
}

/// Inverse, commutator, second-derivative, zero-mean and norm-bound checks
/// over `SUITE_FIELDS` fields at `N = SUITE_POINTS` seeded from `seed`.
pub fn identity_checks(seed: u64) -> Vec<OpCheck> {
    let mut inverse: f64 = 0.0;
    let mut commutator: f64 = 0.0;
    let mut second: f64 = 0.0;
    let mut zero_mean: f64 = 0.0;
    let mut norm_ratio: f64 = 0.0;
    for f in &suite_fields(seed) {
        let scale = f.max_abs().max(1.0);
        let inv = apply_lambda_mu2_inv_spectral(f);
        inverse = inverse.max(linf(&apply_lambda_mu2(&inv), f) / scale);
        let d_inv = derivative(&inv, 1).expect("order 1");
        let inv_d = apply_lambda_mu2_inv_spectral(&derivative(f, 1).expect("order 1"));
        commutator = commutator.max(linf(&d_inv, &inv_d) / scale);
        let dd_inv = derivative(&inv, 2).expect("order 2");
        let mu = mean(f);
        second = second.max(linf(&dd_inv, &f.map(|v| mu - v)) / scale);
        zero_mean = zero_mean.max(mean(&d_inv).abs() / scale);
        let y = apply_lambda_mu2(f);
        for s in [2.0, 3.0] {
            let lhs = sobolev_norm(&y, SobolevOrder::new(s - 2.0).expect("s ≥ 2")).powi(2);
            let rhs = sobolev_norm(f, SobolevOrder::new(s).expect("s ≥ 0")).powi(2);
            norm_ratio = norm_ratio.max(lhs / rhs);
        }
    }
    vec![
        OpCheck::new("inverse identity Λ²Λ⁻² = id", inverse, Bound::AtMost, 1e-12),
        OpCheck::new("commutator [∂ₓ, Λ⁻²] = 0", commutator, Bound::AtMost, 1e-12),
        OpCheck::new("second derivative ∂ₓ²Λ⁻² = μ − 1", second, Bound::AtMost, 1e-11),
        OpCheck::new("zero mean of ∂ₓΛ⁻²f", zero_mean, Bound::AtMost, 1e-13),
        OpCheck::new("norm bound ‖Λ²f‖²ₛ₋₂ / ‖f‖²ₛ", norm_ratio, Bound::AtMost, 2.0),
    ]
}

/// Pairwise agreement of the spectral, Green and closed-form `Λ_μ^{−2}` on
/// the suite fields, and the decay order of the discrepancy over
/// `ROUTE_GRIDS` on five fixed fields with modes up to 16, for both rules.
pub fn route_checks(seed: u64) -> Vec<OpCheck> {
    let routes = suite_fields(seed).iter().map(route_discrepancy).fold(0.0, f64::max);
    let (_, order) = route_order(seed, Quadrature::default());
    let (_, trapezoid_order) = route_order(seed, Quadrature::Trapezoid);
    vec![
        OpCheck::new("three-route Λ⁻² agreement at N=256", routes, Bound::AtMost, 1e-5),
        OpCheck::new("three-route discrepancy decay order", order, Bound::AtLeast, ROUTE_ORDER),
        OpCheck::new("three-route decay order, plain trapezoid", trapezoid_order, Bound::AtLeast, ROUTE_ORDER),
    ]
}

/// Fixed-width pass/fail table.
pub fn format_table(checks: &[OpCheck]) -> String {
    let width = checks.iter().map(|c| c.name.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    for c in checks {
        let op = match c.bound {
            Bound::AtMost => "≤",
            Bound::AtLeast => "≥",
        };
        let pad = width - c.name.chars().count();
        out.push_str(&format!(
            "{}  {}{}  {:>12.3e} {} {:.1e}\n",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            " ".repeat(pad),
            c.value,
            op,
            c.threshold
        ));
    }
    out
}
