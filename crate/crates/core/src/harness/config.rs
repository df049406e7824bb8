//! Experiment configuration in TOML.
//!
//! ```toml
//! preset = "zero_mean_sine"   # or: coefficients = [{ n = 1, re = 0.0, im = -0.5 }]
//! amplitude = 1.0
//! lambda = 3.141592653589793
//! solver = "both"
//! n_points = 256
//! m_particles = 512
//!
//! [integrator]
//! t_end = 0.3
//! sample_interval = 0.01
//!
//! [[outputs]]
//! csv_path = "eulerian.csv"
//! source = "eulerian"
//! fields = ["t", "mean_u", "min_slope"]
//! ```

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{MudpError, Result};
use crate::integrator::IntegratorConfig;
use crate::spectral::{GridSpec, RealField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    Eulerian,
    Lagrangian,
    Both,
}

impl SolverChoice {
    pub fn runs_eulerian(self) -> bool {
        matches!(self, Self::Eulerian | Self::Both)
    }

    pub fn runs_lagrangian(self) -> bool {
        matches!(self, Self::Lagrangian | Self::Both)
    }
}

/// A single solver, used to tag outputs and reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Eulerian,
    Lagrangian,
}

/// One Fourier mode `ĉ(n) = re + i·im` of the initial velocity, `n ≥ 0`.
/// The field is `Re ĉ(0) + Σ_{n>0} 2 Re(ĉ(n) e^{2πinx})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficient {
    pub n: i64,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Preset {
    /// `a sin(2πx)`.
    ZeroMeanSine { amplitude: f64 },
    /// `c + a cos(2πx)` with `c ≥ 4π²|a|`, so `y₀ ≥ 0`.
    PositiveMomentum { amplitude: f64, offset: f64 },
    /// `−(c + a cos(2πx))`.
    NegativeMomentum { amplitude: f64, offset: f64 },
    /// `c + a sin(2πx)` without dissipation.
    MudpReduction { amplitude: f64, offset: f64 },
    /// `c + Σ_{1≤n≤K} 2 Re(ĉ(n) e^{2πinx})`, `Re ĉ, Im ĉ ~ U(−a, a)/n²`.
    RandomBandlimited { amplitude: f64, offset: f64, max_mode: usize },
}

pub const PRESET_NAMES: [&str; 5] = [
    "zero_mean_sine",
    "positive_momentum",
    "negative_momentum",
    "mudp_reduction",
    "random_bandlimited",
];

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ZeroMeanSine { .. } => "zero_mean_sine",
            Self::PositiveMomentum { .. } => "positive_momentum",
            Self::NegativeMomentum { .. } => "negative_momentum",
            Self::MudpReduction { .. } => "mudp_reduction",
            Self::RandomBandlimited { .. } => "random_bandlimited",
        }
    }

    pub fn default_lambda(&self) -> f64 {
        match self {
            Self::ZeroMeanSine { .. } => PI,
            Self::PositiveMomentum { .. } | Self::NegativeMomentum { .. } => 1.0,
            Self::MudpReduction { .. } => 0.0,
            Self::RandomBandlimited { .. } => 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialData {
    Preset(Preset),
    Coefficients(Vec<Coefficient>),
}

impl InitialData {
    /// Nonnegative-wavenumber coefficients of `u₀`.
    pub fn modes(&self, seed: u64) -> Vec<Coefficient> {
        let c = |n, re, im| Coefficient { n, re, im };
        match self {
            InitialData::Coefficients(list) => list.clone(),
            InitialData::Preset(p) => match *p {
                Preset::ZeroMeanSine { amplitude } => vec![c(1, 0.0, -0.5 * amplitude)],
                Preset::PositiveMomentum { amplitude, offset } => {
                    vec![c(0, offset, 0.0), c(1, 0.5 * amplitude, 0.0)]
                }
                Preset::NegativeMomentum { amplitude, offset } => {
                    vec![c(0, -offset, 0.0), c(1, -0.5 * amplitude, 0.0)]
                }
                Preset::MudpReduction { amplitude, offset } => {
                    vec![c(0, offset, 0.0), c(1, 0.0, -0.5 * amplitude)]
                }
                Preset::RandomBandlimited {
                    amplitude,
                    offset,
                    max_mode,
                } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let mut out = vec![c(0, offset, 0.0)];
                    for n in 1..=max_mode {
                        let scale = amplitude / (n * n) as f64;
                        let re = scale * rng.gen_range(-1.0..1.0);
                        let im = scale * rng.gen_range(-1.0..1.0);
                        out.push(c(n as i64, re, im));
                    }
                    out
                }
            },
        }
    }

    /// Samples `u₀` on `grid` by direct summation of its modes.
    pub fn field(&self, grid: GridSpec, seed: u64) -> RealField {
        field_from_modes(&self.modes(seed), grid)
    }
}

pub fn field_from_modes(modes: &[Coefficient], grid: GridSpec) -> RealField {
    RealField::from_fn(grid, |x| {
        modes
            .iter()
            .map(|m| {
                if m.n == 0 {
                    m.re
                } else {
                    let th = 2.0 * PI * (m.n as f64 * x).rem_euclid(1.0);
                    2.0 * (m.re * th.cos() - m.im * th.sin())
                }
            })
            .sum()
    })
}

/// Output CSV: diagnostics records of one solver, optionally thinned to
/// multiples of `sample_interval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub csv_path: String,
    #[serde(default = "all_fields")]
    pub fields: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_interval: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SolverKind>,
}

fn all_fields() -> Vec<String> {
    DiagnosticsRecord::FIELDS.iter().map(|s| s.to_string()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    /// Run the solvers for each λ, not just the predictor.
    pub simulate: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.0, 1.0, PI, 2.0 * PI, 4.0 * PI],
            simulate: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    /// `(N, dt_init)` per level; particle levels use `M = N`.
    pub levels: Vec<(usize, f64)>,
    pub checkpoints: Vec<f64>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            levels: vec![(128, 1e-3), (256, 5e-4), (512, 2.5e-4)],
            checkpoints: vec![0.1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbConfig {
    /// Wavenumber whose real part is perturbed.
    pub mode: i64,
    pub epsilons: Vec<f64>,
    /// Comparison time; defaults to half the predicted blow-up time.
    pub time: Option<f64>,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            mode: 2,
            epsilons: vec![1e-3, 1e-4],
            time: None,
        }
    }
}

/// Validated experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub initial_data: InitialData,
    pub lambda: f64,
    pub solver: SolverChoice,
    pub n_points: usize,
    pub m_particles: usize,
    pub integrator: IntegratorConfig,
    pub slope_floor: f64,
    pub resolution_tol: f64,
    pub outputs: Vec<OutputSpec>,
    pub seed: u64,
    pub sweep: SweepConfig,
    pub convergence: ConvergenceConfig,
    pub perturb: PerturbConfig,
}

/// File layout; every field optional so that defaults can be resolved
/// against the chosen preset.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_mode: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver: Option<SolverChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m_particles: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slope_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    resolution_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coefficients: Option<Vec<Coefficient>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    integrator: Option<IntegratorConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    convergence: Option<ConvergenceConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    perturb: Option<PerturbConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    outputs: Option<Vec<OutputSpec>>,
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> MudpError {
    MudpError::Config {
        path: path.into(),
        line: None,
        message: message.into(),
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_config(&text)
}

/// Parses and validates a configuration document. Errors carry the dotted
/// field path and, where it can be found, the 1-based line.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(text, s.start));
        let path = line.and_then(|l| path_at_line(text, l)).unwrap_or_else(|| "<document>".into());
        MudpError::Config {
            path,
            line,
            message: e.message().trim().to_string(),
        }
    })?;
    resolve(raw).map_err(|e| match e {
        MudpError::Config { path, message, .. } => MudpError::Config {
            line: line_of_path(text, &path),
            path,
            message,
        },
        other => other,
    })
}

fn resolve(raw: RawConfig) -> Result<SimConfig> {
    let n_points = raw.n_points.unwrap_or(256);
    GridSpec::new(n_points).map_err(|_| config_error("n_points", format!("n_points must be even and ≥ 8, got {n_points}")))?;
    let m_particles = raw.m_particles.unwrap_or(512);
    if m_particles < 16 {
        return Err(config_error("m_particles", format!("m_particles must be ≥ 16, got {m_particles}")));
    }

    let initial_data = match (&raw.preset, &raw.coefficients) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(config_error(
                "preset",
                "exactly one initial_data form (preset or coefficients) must be given",
            ))
        }
        (Some(name), None) => InitialData::Preset(resolve_preset(name, &raw, n_points)?),
        (None, Some(list)) => {
            for key in ["amplitude", "offset", "margin", "max_mode"] {
                if raw_param_present(&raw, key) {
                    return Err(config_error(key, format!("`{key}` only applies to presets")));
                }
            }
            validate_coefficients(list, n_points)?;
            InitialData::Coefficients(list.clone())
        }
    };

    let lambda = match (&initial_data, raw.lambda) {
        (_, Some(l)) if !(l.is_finite() && l >= 0.0) => {
            return Err(config_error("lambda", format!("lambda must be ≥ 0, got {l}")))
        }
        (InitialData::Preset(Preset::MudpReduction { .. }), Some(l)) if l != 0.0 => {
            return Err(config_error("lambda", "preset `mudp_reduction` requires lambda = 0"))
        }
        (_, Some(l)) => l,
        (InitialData::Preset(p), None) => p.default_lambda(),
        (InitialData::Coefficients(_), None) => {
            return Err(config_error("lambda", "lambda is required with explicit coefficients"))
        }
    };

    let integrator = raw.integrator.clone().unwrap_or_default();
    integrator.validate()?;

    let slope_floor = raw.slope_floor.unwrap_or(-1e4);
    if !(slope_floor < 0.0 && slope_floor.is_finite()) {
        return Err(config_error("slope_floor", format!("slope_floor must be negative, got {slope_floor}")));
    }
    let resolution_tol = raw.resolution_tol.unwrap_or(1e-3);
    if resolution_tol.is_nan() || resolution_tol <= 0.0 {
        return Err(config_error(
            "resolution_tol",
            format!("resolution_tol must be positive (inf disables it), got {resolution_tol}"),
        ));
    }

    let solver = raw.solver.unwrap_or(SolverChoice::Both);
    let outputs = raw.outputs.clone().unwrap_or_default();
    validate_outputs(&outputs, solver, &integrator)?;

    let sweep = raw.sweep.clone().unwrap_or_default();
    if sweep.lambdas.is_empty() || sweep.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(config_error("sweep.lambdas", "sweep.lambdas must be a nonempty list of values ≥ 0"));
    }
    let convergence = raw.convergence.clone().unwrap_or_default();
    for (k, &(n, dt)) in convergence.levels.iter().enumerate() {
        if GridSpec::new(n).is_err() || n < 16 || !(dt > 0.0 && dt.is_finite()) {
            return Err(config_error(
                format!("convergence.levels[{k}]"),
                format!("level ({n}, {dt}) needs an even N ≥ 16 and dt > 0"),
            ));
        }
    }
    if convergence.checkpoints.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(config_error("convergence.checkpoints", "checkpoints must be positive"));
    }
    let perturb = raw.perturb.clone().unwrap_or_default();
    if perturb.mode < 0 || perturb.mode >= n_points as i64 / 2 {
        return Err(config_error("perturb.mode", format!("mode {} is not resolved on {n_points} points", perturb.mode)));
    }
    if perturb.epsilons.len() < 2 || perturb.epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(config_error("perturb.epsilons", "at least two positive epsilons are required"));
    }

    Ok(SimConfig {
        initial_data,
        lambda,
        solver,
        n_points,
        m_particles,
        integrator,
        slope_floor,
        resolution_tol,
        outputs,
        seed: raw.seed.unwrap_or(0),
        sweep,
        convergence,
        perturb,
    })
}

fn raw_param_present(raw: &RawConfig, key: &str) -> bool {
    match key {
        "amplitude" => raw.amplitude.is_some(),
        "offset" => raw.offset.is_some(),
        "margin" => raw.margin.is_some(),
        "max_mode" => raw.max_mode.is_some(),
        _ => false,
    }
}

fn resolve_preset(name: &str, raw: &RawConfig, n_points: usize) -> Result<Preset> {
    let allowed: &[&str] = match name {
        "zero_mean_sine" => &["amplitude"],
        "positive_momentum" | "negative_momentum" => &["amplitude", "offset", "margin"],
        "mudp_reduction" => &["amplitude", "offset"],
        "random_bandlimited" => &["amplitude", "offset", "max_mode"],
        other => {
            return Err(config_error(
                "preset",
                format!("unknown preset `{other}`; expected one of {}", PRESET_NAMES.join(", ")),
            ))
        }
    };
    for key in ["amplitude", "offset", "margin", "max_mode"] {
        if raw_param_present(raw, key) && !allowed.contains(&key) {
            return Err(config_error(key, format!("`{key}` does not apply to preset `{name}`")));
        }
    }
    let finite = |key: &str, v: Option<f64>, default: f64| -> Result<f64> {
        let v = v.unwrap_or(default);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(config_error(key, format!("{key} must be finite")))
        }
    };
    Ok(match name {
        "zero_mean_sine" => Preset::ZeroMeanSine {
            amplitude: finite("amplitude", raw.amplitude, 1.0)?,
        },
        "positive_momentum" | "negative_momentum" => {
            let amplitude = finite("amplitude", raw.amplitude, 0.01)?;
            let floor = 4.0 * PI * PI * amplitude.abs();
            let offset = match (raw.offset, raw.margin) {
                (Some(_), Some(_)) => {
                    return Err(config_error("margin", "give either offset or margin, not both"))
                }
                (Some(c), None) => c,
                (None, m) => {
                    let m = finite("margin", m, 1.0)?;
                    if m < 0.0 {
                        return Err(config_error("margin", "margin must be ≥ 0"));
                    }
                    floor + m
                }
            };
            if !(offset.is_finite() && offset >= floor && offset > 0.0) {
                return Err(config_error(
                    "offset",
                    format!("offset must be positive and ≥ 4π²|amplitude| = {floor} for sign-definite momentum"),
                ));
            }
            if name == "positive_momentum" {
                Preset::PositiveMomentum { amplitude, offset }
            } else {
                Preset::NegativeMomentum { amplitude, offset }
            }
        }
        "mudp_reduction" => Preset::MudpReduction {
            amplitude: finite("amplitude", raw.amplitude, 0.02)?,
            offset: finite("offset", raw.offset, 1.0)?,
        },
        _ => {
            let max_mode = raw.max_mode.unwrap_or(n_points / 8);
            if max_mode == 0 || max_mode >= n_points / 2 {
                return Err(config_error(
                    "max_mode",
                    format!("max_mode must lie in 1..{} for n_points = {n_points}", n_points / 2),
                ));
            }
            Preset::RandomBandlimited {
                amplitude: finite("amplitude", raw.amplitude, 0.2)?,
                offset: finite("offset", raw.offset, 0.2)?,
                max_mode,
            }
        }
    })
}

fn validate_coefficients(list: &[Coefficient], n_points: usize) -> Result<()> {
    if list.is_empty() {
        return Err(config_error("coefficients", "coefficients must not be empty"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for (k, c) in list.iter().enumerate() {
        let path = format!("coefficients[{k}]");
        if c.n < 0 || c.n >= n_points as i64 / 2 {
            return Err(config_error(
                path,
                format!("wavenumber {} must lie in 0..{} (nonnegative half, below Nyquist)", c.n, n_points / 2),
            ));
        }
        if !(c.re.is_finite() && c.im.is_finite()) {
            return Err(config_error(path, "coefficient must be finite"));
        }
        if c.n == 0 && c.im != 0.0 {
            return Err(config_error(path, "mode 0 must be real"));
        }
        if !seen.insert(c.n) {
            return Err(config_error(path, format!("wavenumber {} given twice", c.n)));
        }
    }
    Ok(())
}

fn validate_outputs(outputs: &[OutputSpec], solver: SolverChoice, integrator: &IntegratorConfig) -> Result<()> {
    let mut paths = std::collections::BTreeSet::new();
    for (k, o) in outputs.iter().enumerate() {
        let at = |field: &str| format!("outputs[{k}].{field}");
        if o.csv_path.trim().is_empty() {
            return Err(config_error(at("csv_path"), "csv_path must not be empty"));
        }
        if !paths.insert(o.csv_path.clone()) {
            return Err(config_error(at("csv_path"), format!("`{}` is written twice", o.csv_path)));
        }
        if o.fields.is_empty() {
            return Err(config_error(at("fields"), "fields must not be empty"));
        }
        for f in &o.fields {
            if !DiagnosticsRecord::FIELDS.contains(&f.as_str()) {
                return Err(config_error(
                    at("fields"),
                    format!("unknown field `{f}`; expected any of {}", DiagnosticsRecord::FIELDS.join(", ")),
                ));
            }
        }
        if let Some(si) = o.sample_interval {
            let ratio = si / integrator.sample_interval;
            if !(si.is_finite() && si > 0.0) || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
                return Err(config_error(
                    at("sample_interval"),
                    format!(
                        "sample_interval must be a positive multiple of integrator.sample_interval ({})",
                        integrator.sample_interval
                    ),
                ));
            }
        }
        match o.source {
            Some(SolverKind::Eulerian) if !solver.runs_eulerian() => {
                return Err(config_error(at("source"), "source `eulerian` is not run by this config"))
            }
            Some(SolverKind::Lagrangian) if !solver.runs_lagrangian() => {
                return Err(config_error(at("source"), "source `lagrangian` is not run by this config"))
            }
            _ => {}
        }
    }
    Ok(())
}

impl SimConfig {
    /// The resolved configuration as TOML, with every default written out.
    pub fn to_toml(&self) -> String {
        let mut raw = RawConfig {
            lambda: Some(self.lambda),
            solver: Some(self.solver),
            n_points: Some(self.n_points),
            m_particles: Some(self.m_particles),
            slope_floor: Some(self.slope_floor),
            resolution_tol: Some(self.resolution_tol),
            seed: Some(self.seed),
            integrator: Some(self.integrator.clone()),
            sweep: Some(self.sweep.clone()),
            convergence: Some(self.convergence.clone()),
            perturb: Some(self.perturb.clone()),
            outputs: Some(self.outputs.clone()),
            ..RawConfig::default()
        };
        match &self.initial_data {
            InitialData::Coefficients(list) => raw.coefficients = Some(list.clone()),
            InitialData::Preset(p) => {
                raw.preset = Some(p.name().to_string());
                match *p {
                    Preset::ZeroMeanSine { amplitude } => raw.amplitude = Some(amplitude),
                    Preset::PositiveMomentum { amplitude, offset }
                    | Preset::NegativeMomentum { amplitude, offset }
                    | Preset::MudpReduction { amplitude, offset } => {
                        raw.amplitude = Some(amplitude);
                        raw.offset = Some(offset);
                    }
                    Preset::RandomBandlimited {
                        amplitude,
                        offset,
                        max_mode,
                    } => {
                        raw.amplitude = Some(amplitude);
                        raw.offset = Some(offset);
                        raw.max_mode = Some(max_mode);
                    }
                }
            }
        }
        toml::to_string(&raw).expect("resolved configs serialize")
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.n_points).expect("validated")
    }

    pub fn initial_field(&self) -> RealField {
        self.initial_data.field(self.grid(), self.seed)
    }

    /// A config with a different preset and default parameters, keeping the
    /// numerical settings.
    pub fn with_preset(&self, name: &str) -> Result<SimConfig> {
        let raw = RawConfig {
            preset: Some(name.to_string()),
            ..RawConfig::default()
        };
        let preset = resolve_preset(name, &raw, self.n_points)?;
        let mut out = self.clone();
        out.lambda = preset.default_lambda();
        out.initial_data = InitialData::Preset(preset);
        Ok(out)
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// `section.key` (or `key`) for the assignment on `line`.
fn path_at_line(text: &str, line: usize) -> Option<String> {
    let mut section = String::new();
    for (k, l) in text.lines().enumerate() {
        let t = l.trim();
        if let Some(h) = t.strip_prefix("[[").and_then(|h| h.strip_suffix("]]")) {
            section = h.trim().to_string();
        } else if let Some(h) = t.strip_prefix('[').and_then(|h| h.strip_suffix(']')) {
            section = h.trim().to_string();
        }
        if k + 1 == line {
            let key = t.split('=').next().map(str::trim).filter(|k| !k.is_empty() && !k.starts_with('['));
            return Some(match (section.is_empty(), key) {
                (true, Some(key)) => key.to_string(),
                (false, Some(key)) => format!("{section}.{key}"),
                (false, None) => section,
                (true, None) => return None,
            });
        }
    }
    None
}

/// Line of the assignment named by a dotted path such as `lambda`,
/// `integrator.dt_init` or `outputs[1].fields`; falls back to the section
/// header when the key itself is absent.
fn line_of_path(text: &str, path: &str) -> Option<usize> {
    let (section, index, key) = match path.split_once('.') {
        None => (None, 0, path),
        Some((head, key)) => match head.split_once('[') {
            Some((name, rest)) => (Some(name), rest.trim_end_matches(']').parse().unwrap_or(0), key),
            None => (Some(head), 0, key),
        },
    };
    let key = key.split('[').next().unwrap_or(key);
    let mut current: Option<String> = None;
    let mut seen = 0usize;
    let mut header_line = None;
    for (k, l) in text.lines().enumerate() {
        let t = l.trim();
        if t.starts_with('[') {
            let name = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if Some(name.as_str()) == section {
                if seen == index {
                    header_line = Some(k + 1);
                }
                seen += 1;
                current = (seen - 1 == index).then_some(name);
            } else {
                current = None;
                if section.is_none() {
                    break;
                }
            }
            continue;
        }
        let in_scope = match section {
            None => true,
            Some(s) => current.as_deref() == Some(s),
        };
        if in_scope {
            let lhs = t.split('=').next().unwrap_or("").trim();
            if t.contains('=') && lhs == key {
                return Some(k + 1);
            }
        }
    }
    header_line
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err_of(text: &str) -> (String, Option<usize>, String) {
        match parse_config(text) {
            Err(MudpError::Config { path, line, message }) => (path, line, message),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config(
            "preset = \"zero_mean_sine\"\namplitude = 1.0\nlambda = 3.14159\nn_points = 256\n",
        )
        .unwrap();
        assert_eq!(cfg.initial_data, InitialData::Preset(Preset::ZeroMeanSine { amplitude: 1.0 }));
        assert_eq!(cfg.lambda, 3.14159);
        assert_eq!(cfg.m_particles, 512);
        assert_eq!(cfg.solver, SolverChoice::Both);
        assert_eq!(cfg.slope_floor, -1e4);
        assert_eq!(cfg.integrator, IntegratorConfig::default());
        // the echo parses back to the same config
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn negative_lambda_is_rejected_with_line() {
        let (path, line, message) = err_of("preset = \"zero_mean_sine\"\nlambda = -1\n");
        assert_eq!(path, "lambda");
        assert_eq!(line, Some(2));
        assert!(message.contains("lambda must be ≥ 0"));
    }

    #[test]
    fn both_initial_data_forms_are_rejected() {
        let (_, _, message) = err_of(
            "preset = \"zero_mean_sine\"\nlambda = 1.0\ncoefficients = [{ n = 1, re = 0.5 }]\n",
        );
        assert!(message.contains("exactly one initial_data form"));
        let (_, _, message) = err_of("lambda = 1.0\n");
        assert!(message.contains("exactly one initial_data form"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let (path, line, message) = err_of("preset = \"zero_mean_sine\"\n\n[integrator]\nt_end = 1.0\nbogus = 2\n");
        assert_eq!(line, Some(5));
        assert_eq!(path, "integrator.bogus");
        assert!(message.contains("bogus"), "{message}");
        let (_, line, _) = err_of("preset = \"zero_mean_sine\"\ncolour = 1\n");
        assert_eq!(line, Some(2));
    }

    #[test]
    fn nested_validation_errors_point_at_their_line() {
        let (path, line, _) = err_of("preset = \"zero_mean_sine\"\n[integrator]\ncfl_number = 2.0\n");
        assert_eq!(path, "integrator.cfl_number");
        assert_eq!(line, Some(3));
        let text = "preset = \"zero_mean_sine\"\n[[outputs]]\ncsv_path = \"a.csv\"\n[[outputs]]\ncsv_path = \"b.csv\"\nfields = [\"t\", \"nope\"]\n";
        let (path, line, _) = err_of(text);
        assert_eq!(path, "outputs[1].fields");
        assert_eq!(line, Some(6));
    }

    #[test]
    fn preset_parameter_checks() {
        assert!(err_of("preset = \"zero_mean_sine\"\nmargin = 1.0\n").2.contains("does not apply"));
        assert!(err_of("preset = \"warp_drive\"\n").2.contains("unknown preset"));
        assert!(err_of("preset = \"positive_momentum\"\noffset = 0.1\n").2.contains("sign-definite"));
        assert!(err_of("preset = \"mudp_reduction\"\nlambda = 0.5\n").2.contains("lambda = 0"));
        let cfg = parse_config("preset = \"positive_momentum\"\namplitude = 0.01\n").unwrap();
        match cfg.initial_data {
            InitialData::Preset(Preset::PositiveMomentum { offset, .. }) => {
                assert!((offset - (4.0 * PI * PI * 0.01 + 1.0)).abs() < 1e-15)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coefficient_checks() {
        let ok = parse_config("lambda = 1.0\ncoefficients = [{ n = 0, re = 0.5 }, { n = 3, re = 0.1, im = -0.2 }]\n");
        assert!(ok.is_ok());
        assert!(err_of("lambda = 1.0\ncoefficients = [{ n = 200, re = 0.5 }]\n").2.contains("below Nyquist"));
        assert!(err_of("lambda = 1.0\ncoefficients = [{ n = 2, re = 0.5 }, { n = 2, re = 0.1 }]\n").2.contains("twice"));
        assert!(err_of("coefficients = [{ n = 1, re = 0.5 }]\n").2.contains("lambda is required"));
    }

    #[test]
    fn preset_fields() {
        let g = GridSpec::new(64).unwrap();
        let sine = InitialData::Preset(Preset::ZeroMeanSine { amplitude: 0.7 }).field(g, 0);
        let want = RealField::from_fn(g, |x| 0.7 * (2.0 * PI * x).sin());
        assert!(sine.max_abs_diff(&want) < 1e-14);
        let neg = InitialData::Preset(Preset::NegativeMomentum { amplitude: 0.1, offset: 5.0 }).field(g, 0);
        let want = RealField::from_fn(g, |x| -(5.0 + 0.1 * (2.0 * PI * x).cos()));
        assert!(neg.max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn random_preset_is_seeded_and_bandlimited() {
        let g = GridSpec::new(128).unwrap();
        let p = InitialData::Preset(Preset::RandomBandlimited {
            amplitude: 0.2,
            offset: 0.3,
            max_mode: 16,
        });
        let a = p.field(g, 7);
        assert_eq!(a, p.field(g, 7));
        assert_ne!(a, p.field(g, 8));
        let spec = a.to_spectral();
        assert!((spec.coeff(0).re - 0.3).abs() < 1e-14);
        assert!(spec.modes().filter(|(n, _)| n.abs() > 16).all(|(_, c)| c.norm() < 1e-14));
    }
}
