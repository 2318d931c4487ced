//! JSON experiment configuration.
//!
//! Parsing happens in two passes: serde for shape and types, then
//! [`ExperimentConfig::validate`] for the model invariants. Both report the
//! line of the offending entry.

use std::fmt;
use std::path::{Path, PathBuf};

use facetsolve_core::grid::{BallRegion, Grid, ScalarField};
use facetsolve_core::integrand::{Epsilon, ModelParams, Point};
use facetsolve_core::solver::{ContinuationSchedule, LinearSolver, SolveOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::csv_io;

/// A configuration problem with the 1-based line it was found on.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Exponent that may be `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent(pub f64);

impl Serialize for Exponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Exponent(v)),
            Raw::Text(t) if t == "inf" || t == "infinity" => Ok(Exponent(f64::INFINITY)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got \"{t}\""
            ))),
        }
    }
}

/// Named builtin fields used for the source and the Dirichlet data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant { value: f64 },
    /// `amplitude · Π sin(π (x_i − o_i)/L)`.
    SineProduct { amplitude: f64 },
    /// `low` for `x < at`, `high` otherwise, along the first axis.
    Step { low: f64, high: f64, at: f64 },
    /// Node values read from a CSV file; see [`csv_io::read_node_field`].
    Csv { path: PathBuf },
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Constant { value: 0.0 }
    }
}

impl FieldSpec {
    pub fn build(&self, grid: Grid, base: &Path) -> anyhow::Result<ScalarField> {
        let o = grid.origin();
        let side = grid.side();
        let field = match self {
            FieldSpec::Constant { value } => ScalarField::constant(grid, *value),
            FieldSpec::SineProduct { amplitude } => ScalarField::from_fn(grid, |x: Point| {
                let mut v = *amplitude;
                for i in 0..grid.dim() {
                    v *= (std::f64::consts::PI * (x.get(i) - o[i]) / side).sin();
                }
                v
            })?,
            FieldSpec::Step { low, high, at } => {
                ScalarField::from_fn(grid, |x: Point| if x.get(0) < *at { *low } else { *high })?
            }
            FieldSpec::Csv { path } => {
                let p = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                csv_io::read_node_field(&p, grid)?
            }
        };
        Ok(field)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsSchedule {
    pub start: f64,
    pub end: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
}

fn default_rho() -> f64 {
    0.1
}

impl Default for EpsSchedule {
    fn default() -> Self {
        Self {
            start: 0.1,
            end: 1e-4,
            rho: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolverName {
    Auto,
    JacobiCg,
    IncompleteCholeskyCg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub grad_tol: f64,
    pub max_iters: usize,
    pub cg_tol: f64,
    pub linear_solver: LinearSolverName,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolveOptions::default();
        Self {
            grad_tol: o.grad_tol,
            max_iters: o.max_iters,
            cg_tol: o.cg_tol,
            linear_solver: LinearSolverName::Auto,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolveOptions {
        SolveOptions {
            grad_tol: self.grad_tol,
            max_iters: self.max_iters,
            cg_tol: self.cg_tol,
            linear_solver: match self.linear_solver {
                LinearSolverName::Auto => LinearSolver::Auto,
                LinearSolverName::JacobiCg => LinearSolver::JacobiCg,
                LinearSolverName::IncompleteCholeskyCg => LinearSolver::IncompleteCholeskyCg,
            },
            ..SolveOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub enabled: bool,
    pub theta: f64,
    /// Ball radius as a fraction of the domain side.
    pub radius: f64,
    pub chi: f64,
    pub moser_steps: usize,
    pub levels: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            theta: 0.5,
            radius: 0.4,
            chi: 2.0,
            moser_steps: 8,
            levels: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Random samples per `(ε)` cell of the integrand battery.
    pub samples: usize,
    pub battery_eps: Vec<f64>,
    pub perturbations: usize,
    pub perturbation_magnitudes: Vec<f64>,
    /// Source factors of the stability pairs, relative to the configured
    /// source.
    pub stability_factors: Vec<f64>,
    /// Allowed growth of the Lipschitz ratio from the largest to the smallest
    /// ε at each amplitude.
    pub lipschitz_growth: f64,
    /// Test hook: multiplies the extracted `Z` before the checks.
    pub inject_z_scale: Option<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            samples: 2000,
            battery_eps: vec![1e-6, 1e-3, 1.0],
            perturbations: 100,
            perturbation_magnitudes: vec![1e-3, 1e-1],
            stability_factors: vec![1.1, 1.5],
            lipschitz_growth: 10.0,
            inject_z_scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub eps: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub n: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            eps: vec![1e-1, 1e-2, 1e-3],
            amplitude: vec![1.0, 10.0, 100.0],
            n: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub n: usize,
    pub p: f64,
    pub beta: f64,
    #[serde(default = "default_q")]
    pub q: Exponent,
    #[serde(default)]
    pub eps: EpsSchedule,
    #[serde(default = "default_source")]
    pub source: FieldSpec,
    #[serde(default)]
    pub boundary: FieldSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_q() -> Exponent {
    Exponent(f64::INFINITY)
}

fn default_source() -> FieldSpec {
    FieldSpec::Constant { value: 1.0 }
}

impl Default for ExperimentConfig {
    /// The 1D facet problem: `f ≡ 1`, zero data, `p = 3`, `β = 0.1`.
    fn default() -> Self {
        Self {
            dim: 1,
            n: 256,
            p: 3.0,
            beta: 0.1,
            q: default_q(),
            eps: EpsSchedule::default(),
            source: default_source(),
            boundary: FieldSpec::default(),
            solver: SolverConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            verify: VerifyConfig::default(),
            sweep: SweepConfig::default(),
            seed: 0,
            output_dir: None,
        }
    }
}

/// A validated configuration together with the text it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// Directory relative paths are resolved against.
    pub base: PathBuf,
    pub hash: String,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError {
            line: (e.line() > 0).then_some(e.line()),
            message: e.to_string(),
        })?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let config = Self::from_json(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let grid = config.grid().expect("validated");
        for (key, spec) in [("source", &config.source), ("boundary", &config.boundary)] {
            if let Err(e) = spec.build(grid, &base) {
                return Err(ConfigError {
                    line: locate(&text, key),
                    message: format!("{key}: {e:#}"),
                });
            }
        }
        let hash = config.hash();
        Ok(LoadedConfig { config, base, hash })
    }

    /// First 16 hex digits of the SHA-256 of the normalized JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn params(&self) -> facetsolve_core::Result<ModelParams> {
        ModelParams::canonical(self.p, self.beta, self.q.0)
    }

    pub fn grid(&self) -> facetsolve_core::Result<Grid> {
        Grid::unit(self.dim, self.n)
    }

    pub fn schedule(&self) -> facetsolve_core::Result<ContinuationSchedule> {
        ContinuationSchedule::new(self.eps.start, self.eps.end, self.eps.rho)
    }

    /// Schedule ending at `eps`, starting no lower than the configured start.
    pub fn schedule_to(&self, eps: f64) -> facetsolve_core::Result<ContinuationSchedule> {
        ContinuationSchedule::new(self.eps.start.max(eps), eps, self.eps.rho)
    }

    pub fn region(&self, grid: &Grid) -> facetsolve_core::Result<BallRegion> {
        BallRegion::new(
            grid.center(),
            self.diagnostics.radius * grid.side(),
            Some(self.diagnostics.theta),
        )
    }

    /// Checks every model and grid invariant; `text` locates the entry.
    pub fn validate(&self, text: &str) -> Result<(), ConfigError> {
        let at = |key: &str, message: String| ConfigError {
            line: locate(text, key),
            message,
        };
        let core = |key: &'static str| move |e: facetsolve_core::Error| at(key, e.to_string());
        let at_in = |section: &str, key: &str, message: String| ConfigError {
            line: locate_in(text, section, key),
            message,
        };

        if !(self.p > 1.0) {
            return Err(at("p", format!("p must satisfy p > 1 (got {})", self.p)));
        }
        self.params().map_err(|e| {
            let key = if !(self.beta >= 0.0) { "beta" } else { "q" };
            at(key, e.to_string())
        })?;
        if self.dim != 1 && self.dim != 2 {
            return Err(at("dim", format!("dim must be 1 or 2 (got {})", self.dim)));
        }
        let grid = self.grid().map_err(core("n"))?;
        self.schedule().map_err(core("eps"))?;
        let s = &self.solver;
        self.solver.options().validate().map_err(|e| {
            let key = if !(s.grad_tol > 0.0) {
                "grad_tol"
            } else if s.max_iters == 0 {
                "max_iters"
            } else {
                "cg_tol"
            };
            at(key, e.to_string())
        })?;

        let d = &self.diagnostics;
        if !(d.theta > 0.0 && d.theta < 1.0) {
            return Err(at_in("diagnostics", "theta", format!("theta must lie in (0, 1) (got {})", d.theta)));
        }
        if !(d.radius > 0.0 && d.radius <= 0.5) {
            return Err(at(
                "radius",
                format!("radius must lie in (0, 0.5] of the side (got {})", d.radius),
            ));
        }
        self.region(&grid).map_err(|e| at_in("diagnostics", "radius", e.to_string()))?;
        if !(d.chi > 1.0) {
            return Err(at_in("diagnostics", "chi", format!("chi must satisfy chi > 1 (got {})", d.chi)));
        }
        if self.q.0 <= self.dim as f64 && d.enabled {
            return Err(at(
                "q",
                format!("diagnostics need q > dim (got q={}, dim={})", self.q.0, self.dim),
            ));
        }

        let v = &self.verify;
        if v.battery_eps.is_empty() {
            return Err(at_in("verify", "battery_eps", "battery_eps must not be empty".into()));
        }
        for &e in &v.battery_eps {
            Epsilon::new(e).map_err(|e| at_in("verify", "battery_eps", e.to_string()))?;
        }
        if v.perturbation_magnitudes.is_empty() {
            return Err(at(
                "perturbation_magnitudes",
                "perturbation_magnitudes must not be empty".into(),
            ));
        }
        if v.perturbation_magnitudes.iter().any(|m| !(*m > 0.0)) {
            return Err(at(
                "perturbation_magnitudes",
                "perturbation magnitudes must be positive".into(),
            ));
        }
        if v.stability_factors.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(at_in("verify", "stability_factors", "stability factors must be positive".into()));
        }
        if !(v.lipschitz_growth >= 1.0) {
            return Err(at(
                "lipschitz_growth",
                format!("lipschitz_growth must be >= 1 (got {})", v.lipschitz_growth),
            ));
        }
        if let Some(s) = v.inject_z_scale {
            if !(s > 0.0) || !s.is_finite() {
                return Err(at_in("verify", "inject_z_scale", format!("inject_z_scale must be positive (got {s})")));
            }
        }

        let sw = &self.sweep;
        if sw.eps.is_empty() {
            return Err(at_in("sweep", "eps", "sweep eps list must not be empty".into()));
        }
        for &e in &sw.eps {
            Epsilon::new(e).map_err(|e| at_in("sweep", "eps", e.to_string()))?;
        }
        if sw.amplitude.is_empty() {
            return Err(at_in("sweep", "amplitude", "sweep amplitude list must not be empty".into()));
        }
        if sw.amplitude.iter().any(|a| !a.is_finite()) {
            return Err(at_in("sweep", "amplitude", "sweep amplitudes must be finite".into()));
        }
        for &n in &sw.n {
            Grid::unit(self.dim, n).map_err(|e| at_in("sweep", "n", e.to_string()))?;
        }
        for (key, spec) in [("source", &self.source), ("boundary", &self.boundary)] {
            match spec {
                FieldSpec::Constant { value } if !value.is_finite() => {
                    return Err(at(key, format!("{key} value must be finite")));
                }
                FieldSpec::SineProduct { amplitude } if !amplitude.is_finite() => {
                    return Err(at(key, format!("{key} amplitude must be finite")));
                }
                FieldSpec::Step { low, high, at: x } if !(low.is_finite() && high.is_finite() && x.is_finite()) => {
                    return Err(at(key, format!("{key} step parameters must be finite")));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Line of the first `"key"` occurrence in `text` (1-based).
fn locate(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

/// Like [`locate`], searching from the line that opens `section`. Falls back
/// to the section line itself.
fn locate_in(text: &str, section: &str, key: &str) -> Option<usize> {
    let start = locate(text, section)?;
    let needle = format!("\"{key}\"");
    let line = &text.lines().nth(start - 1)?;
    let after_section = line
        .find(&format!("\"{section}\""))
        .map_or("", |i| &line[i + section.len() + 2..]);
    if after_section.contains(&needle) {
        return Some(start);
    }
    text.lines()
        .skip(start)
        .position(|l| l.contains(&needle))
        .map_or(Some(start), |i| Some(start + i + 1))
}

/// Drops repeated values, keeping first occurrences in order, and returns the
/// dropped ones.
pub fn dedup_axis<T: PartialEq + Copy>(values: &[T]) -> (Vec<T>, Vec<T>) {
    let mut kept: Vec<T> = Vec::with_capacity(values.len());
    let mut dropped = Vec::new();
    for &v in values {
        if kept.contains(&v) {
            dropped.push(v);
        } else {
            kept.push(v);
        }
    }
    (kept, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        "{\n  \"dim\": 1,\n  \"n\": 64,\n  \"p\": 3,\n  \"beta\": 0.1\n}\n".to_string()
    }

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_json(&minimal()).unwrap();
        assert_eq!(c.q.0, f64::INFINITY);
        assert_eq!(c.eps, EpsSchedule::default());
        assert_eq!(c.source, FieldSpec::Constant { value: 1.0 });
        assert!(ExperimentConfig::default().validate("").is_ok());
    }

    #[test]
    fn invalid_p_names_invariant_and_line() {
        let text = minimal().replace("\"p\": 3", "\"p\": 0.5");
        let e = ExperimentConfig::from_json(&text).unwrap_err();
        assert_eq!(e.line, Some(4));
        assert!(e.message.contains("p > 1"), "{e}");
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let text = minimal().replace("\"beta\": 0.1", "\"beta\": ,");
        let e = ExperimentConfig::from_json(&text).unwrap_err();
        assert_eq!(e.line, Some(5));
        let text = minimal().replace("\"beta\"", "\"betta\"");
        let e = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(e.message.contains("betta"));
    }

    #[test]
    fn empty_sweep_rejected() {
        let text = minimal().replace("\"beta\": 0.1", "\"beta\": 0.1,\n  \"sweep\": {\"eps\": []}");
        let e = ExperimentConfig::from_json(&text).unwrap_err();
        assert_eq!(e.line, Some(6));
        assert!(e.message.contains("empty"));
    }

    #[test]
    fn q_accepts_inf_text() {
        let text = minimal().replace("\"beta\": 0.1", "\"beta\": 0.1, \"q\": \"inf\"");
        assert_eq!(ExperimentConfig::from_json(&text).unwrap().q.0, f64::INFINITY);
        let text = minimal().replace("\"beta\": 0.1", "\"beta\": 0.1, \"q\": 1.0");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::from_json(&minimal()).unwrap();
        let b = ExperimentConfig::from_json(&minimal().replace("  ", " ")).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        let mut c = a.clone();
        c.seed = 1;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        let (k, d) = dedup_axis(&[1.0, 10.0, 1.0, 100.0, 10.0]);
        assert_eq!(k, vec![1.0, 10.0, 100.0]);
        assert_eq!(d, vec![1.0, 10.0]);
    }

    #[test]
    fn builtin_fields() {
        let g = Grid::unit(2, 8).unwrap();
        let f = FieldSpec::SineProduct { amplitude: 2.0 }.build(g, Path::new(".")).unwrap();
        let mid = g.node_index(4, 4);
        assert!((f.values()[mid] - 2.0).abs() < 1e-12);
        assert_eq!(f.values()[0], 0.0);
        let s = FieldSpec::Step { low: -1.0, high: 1.0, at: 0.5 }.build(g, Path::new(".")).unwrap();
        assert_eq!(s.values()[g.node_index(1, 3)], -1.0);
        assert_eq!(s.values()[g.node_index(5, 3)], 1.0);
    }
}
