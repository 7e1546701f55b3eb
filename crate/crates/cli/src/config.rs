//! Run configuration: strict JSON with defaults for everything except the
//! experiment block.

use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use dgl_core::integrator::BLOWUP_THRESHOLD;
use dgl_core::ModelParams;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("at `{key}`: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.into(),
            message: message.into(),
        }
    }

    /// The offending key, when the error points at one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { key, .. } => Some(key),
            ConfigError::Io { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub forcing: ForcingConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub experiment: Experiment,
    #[serde(default)]
    pub output: OutputConfig,
    /// Seed for randomized studies.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub gamma: f64,
    pub mu: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            delta: 2.0,
            gamma: 1.0,
            mu: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn params(&self) -> ModelParams {
        ModelParams::new(self.alpha, self.beta, self.delta, self.gamma, self.mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub window_half_width: usize,
    pub blowup_threshold: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            window_half_width: 256,
            blowup_threshold: BLOWUP_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema, Default)]
#[serde(rename_all = "snake_case")]
pub enum ForcingKind {
    #[default]
    SingleSite,
    ProfileFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingConfig {
    pub kind: ForcingKind,
    /// `‖g‖²`. Required in effect for `single_site` (normalized to 0 when
    /// absent); for `profile_file` the profile is rescaled to it when given.
    pub target_norm2: Option<f64>,
    /// Site of the single-site forcing.
    pub site: i64,
    /// Three-column `index re im` file, relative to the config file.
    pub profile_file: Option<PathBuf>,
}

impl Default for ForcingConfig {
    fn default() -> Self {
        Self {
            kind: ForcingKind::SingleSite,
            target_norm2: None,
            site: 0,
            profile_file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub sample_stride: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            sample_stride: 0.1,
        }
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema, PartialOrd, Ord,
)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Dat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output directory; falls back to the environment default.
    pub directory: Option<PathBuf>,
    /// Extra formats next to the JSON report.
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: None,
            formats: vec![Format::Csv, Format::Dat],
        }
    }
}

/// Starting state of a single-trajectory study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `√norm2 · e_site`.
    ScaledUnit {
        norm2: f64,
        #[serde(default)]
        site: i64,
    },
    /// Profile read from a three-column file, optionally rescaled.
    ProfileFile {
        path: PathBuf,
        #[serde(default)]
        norm2: Option<f64>,
    },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::ScaledUnit {
            norm2: 1.0,
            site: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Simulate(SimulateConfig),
    Classify(ClassifyConfig),
    Closeness(ClosenessConfig),
    Congruence(CongruenceConfig),
    Tail(TailConfig),
    RegimeVerify(RegimeVerifyConfig),
    IdentityCheck(IdentityConfig),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Simulate(_) => "simulate",
            Experiment::Classify(_) => "classify",
            Experiment::Closeness(_) => "closeness",
            Experiment::Congruence(_) => "congruence",
            Experiment::Tail(_) => "tail",
            Experiment::RegimeVerify(_) => "regime_verify",
            Experiment::IdentityCheck(_) => "identity_check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub horizon: f64,
    pub initial: InitialSpec,
    /// Keep every k-th sample as a full snapshot.
    pub snapshot_every: Option<usize>,
    /// Treat blow-up as an outcome instead of a numerical failure.
    pub allow_blowup: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            initial: InitialSpec::default(),
            snapshot_every: None,
            allow_blowup: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub v0_norm2: Option<f64>,
    pub capture_radius: Option<f64>,
    pub absorb_margin: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            v0_norm2: None,
            capture_radius: None,
            absorb_margin: 1.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyConfig {
    pub c0: f64,
    pub cu0: f64,
    pub cv0: f64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            c0: 1.0,
            cu0: 1.0,
            cv0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ClosenessConfig {
    pub epsilon_grid: Vec<f64>,
    pub family: FamilyConfig,
    pub horizon: f64,
}

impl Default for ClosenessConfig {
    fn default() -> Self {
        Self {
            epsilon_grid: vec![0.1],
            family: FamilyConfig::default(),
            horizon: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct CongruenceConfig {
    pub epsilon_grid: Vec<f64>,
    pub family: FamilyConfig,
    pub transient_cut: f64,
    pub stride: f64,
    pub horizon: f64,
    pub absorb_margin: f64,
}

impl Default for CongruenceConfig {
    fn default() -> Self {
        Self {
            epsilon_grid: vec![0.2, 0.1, 0.05],
            family: FamilyConfig::default(),
            transient_cut: 20.0,
            stride: 0.5,
            horizon: 40.0,
            absorb_margin: 1.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct TailConfig {
    pub horizon: f64,
    pub xi: f64,
    pub k_grid: Vec<u64>,
    pub initial: InitialSpec,
    pub absorb_margin: f64,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            horizon: 30.0,
            xi: 1e-8,
            k_grid: (0..=64).collect(),
            initial: InitialSpec::default(),
            absorb_margin: 1.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeVerifyConfig {
    pub chi0_grid: Vec<f64>,
    pub horizon: f64,
    /// Also run the local-lattice Gronwall check from this `χ(0)`.
    pub local_gronwall_chi0: Option<f64>,
    pub absorb_margin: f64,
}

impl Default for RegimeVerifyConfig {
    fn default() -> Self {
        Self {
            chi0_grid: vec![0.1, 0.5, 0.97],
            horizon: 30.0,
            local_gronwall_chi0: None,
            absorb_margin: 1.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct IdentityConfig {
    pub samples: usize,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        Self { samples: 1000 }
    }
}

/// Parses a config, reporting the path of the first offending key.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        ConfigError::invalid(
            if key == "." {
                "<root>".to_string()
            } else {
                key
            },
            e.inner().to_string(),
        )
    })?;
    Ok(cfg)
}

/// Reads, parses, normalizes and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = parse_config(&text)?;
    cfg.normalize();
    cfg.validate()?;
    Ok(cfg)
}

fn check(ok: bool, key: &str, message: impl FnOnce() -> String) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, message()))
    }
}

fn finite(key: &str, v: f64) -> Result<(), ConfigError> {
    check(v.is_finite(), key, || format!("must be finite, got {v}"))
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    check(v > 0.0 && v.is_finite(), key, || {
        format!("must be positive, got {v}")
    })
}

fn non_negative(key: &str, v: f64) -> Result<(), ConfigError> {
    check(v >= 0.0 && v.is_finite(), key, || {
        format!("must be non-negative, got {v}")
    })
}

fn margin(key: &str, v: f64) -> Result<(), ConfigError> {
    check(v > 1.0 && v.is_finite(), key, || {
        format!("must exceed 1, got {v}")
    })
}

fn non_empty<T>(key: &str, v: &[T]) -> Result<(), ConfigError> {
    check(!v.is_empty(), key, || "must not be empty".into())
}

impl RunConfig {
    /// Fills implied values so that the echoed config is explicit.
    pub fn normalize(&mut self) {
        if self.forcing.kind == ForcingKind::SingleSite && self.forcing.target_norm2.is_none() {
            self.forcing.target_norm2 = Some(0.0);
        }
        self.output.formats.sort();
        self.output.formats.dedup();
        match &mut self.experiment {
            Experiment::Tail(t) => {
                t.k_grid.sort_unstable();
                t.k_grid.dedup();
            }
            Experiment::Simulate(s) => {
                if let Some(k) = s.snapshot_every.as_mut() {
                    *k = (*k).max(1);
                }
            }
            _ => {}
        }
    }

    /// Checks every numeric field against the preconditions of the
    /// operation it feeds. Regime hypotheses (such as δ > 1) are checked by
    /// the studies themselves.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        for (k, v) in [
            ("model.alpha", m.alpha),
            ("model.beta", m.beta),
            ("model.delta", m.delta),
            ("model.gamma", m.gamma),
            ("model.mu", m.mu),
        ] {
            finite(k, v)?;
        }
        check(
            self.lattice.window_half_width >= 1,
            "lattice.window_half_width",
            || "must be at least 1".into(),
        )?;
        positive("lattice.blowup_threshold", self.lattice.blowup_threshold)?;
        positive("integrator.abs_tol", self.integrator.abs_tol)?;
        positive("integrator.rel_tol", self.integrator.rel_tol)?;
        positive("integrator.sample_stride", self.integrator.sample_stride)?;

        let n = self.lattice.window_half_width as i64;
        if let Some(g) = self.forcing.target_norm2 {
            non_negative("forcing.target_norm2", g)?;
        }
        match self.forcing.kind {
            ForcingKind::SingleSite => {
                check(self.forcing.site.abs() <= n, "forcing.site", || {
                    format!(
                        "site {} lies outside the window [-{n}, {n}]",
                        self.forcing.site
                    )
                })?;
                check(
                    self.forcing.profile_file.is_none(),
                    "forcing.profile_file",
                    || "only allowed with kind = profile_file".into(),
                )?;
            }
            ForcingKind::ProfileFile => {
                check(
                    self.forcing.profile_file.is_some(),
                    "forcing.profile_file",
                    || "required with kind = profile_file".into(),
                )?;
            }
        }

        let initial = |key: &str, spec: &InitialSpec| -> Result<(), ConfigError> {
            match spec {
                InitialSpec::ScaledUnit { norm2, site } => {
                    non_negative(&format!("{key}.scaled_unit.norm2"), *norm2)?;
                    check(site.abs() <= n, &format!("{key}.scaled_unit.site"), || {
                        format!("site {site} lies outside the window [-{n}, {n}]")
                    })
                }
                InitialSpec::ProfileFile { norm2, .. } => match norm2 {
                    Some(v) => non_negative(&format!("{key}.profile_file.norm2"), *v),
                    None => Ok(()),
                },
            }
        };
        let family = |key: &str, f: &FamilyConfig| -> Result<(), ConfigError> {
            non_negative(&format!("{key}.c0"), f.c0)?;
            non_negative(&format!("{key}.cu0"), f.cu0)?;
            non_negative(&format!("{key}.cv0"), f.cv0)
        };
        let eps = |key: &str, grid: &[f64]| -> Result<(), ConfigError> {
            non_empty(key, grid)?;
            for (i, e) in grid.iter().enumerate() {
                non_negative(&format!("{key}[{i}]"), *e)?;
            }
            Ok(())
        };

        match &self.experiment {
            Experiment::Simulate(s) => {
                positive("experiment.simulate.horizon", s.horizon)?;
                initial("experiment.simulate.initial", &s.initial)?;
            }
            Experiment::Classify(c) => {
                if let Some(v) = c.v0_norm2 {
                    non_negative("experiment.classify.v0_norm2", v)?;
                }
                if let Some(r) = c.capture_radius {
                    non_negative("experiment.classify.capture_radius", r)?;
                }
                margin("experiment.classify.absorb_margin", c.absorb_margin)?;
            }
            Experiment::Closeness(c) => {
                eps("experiment.closeness.epsilon_grid", &c.epsilon_grid)?;
                family("experiment.closeness.family", &c.family)?;
                positive("experiment.closeness.horizon", c.horizon)?;
            }
            Experiment::Congruence(c) => {
                eps("experiment.congruence.epsilon_grid", &c.epsilon_grid)?;
                family("experiment.congruence.family", &c.family)?;
                non_negative("experiment.congruence.transient_cut", c.transient_cut)?;
                positive("experiment.congruence.stride", c.stride)?;
                positive("experiment.congruence.horizon", c.horizon)?;
                check(
                    c.horizon > c.transient_cut + c.stride,
                    "experiment.congruence.horizon",
                    || "must leave at least one stride after transient_cut".into(),
                )?;
                margin("experiment.congruence.absorb_margin", c.absorb_margin)?;
            }
            Experiment::Tail(t) => {
                positive("experiment.tail.horizon", t.horizon)?;
                positive("experiment.tail.xi", t.xi)?;
                non_empty("experiment.tail.k_grid", &t.k_grid)?;
                initial("experiment.tail.initial", &t.initial)?;
                margin("experiment.tail.absorb_margin", t.absorb_margin)?;
            }
            Experiment::RegimeVerify(r) => {
                non_empty("experiment.regime_verify.chi0_grid", &r.chi0_grid)?;
                for (i, c) in r.chi0_grid.iter().enumerate() {
                    non_negative(&format!("experiment.regime_verify.chi0_grid[{i}]"), *c)?;
                }
                positive("experiment.regime_verify.horizon", r.horizon)?;
                if let Some(c) = r.local_gronwall_chi0 {
                    non_negative("experiment.regime_verify.local_gronwall_chi0", c)?;
                }
                margin("experiment.regime_verify.absorb_margin", r.absorb_margin)?;
            }
            Experiment::IdentityCheck(i) => {
                check(i.samples >= 1, "experiment.identity_check.samples", || {
                    "must be at least 1".into()
                })?;
            }
        }
        Ok(())
    }
}
