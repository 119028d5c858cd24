//! Run configuration: a TOML file, `CHIRAL_*` environment variables and
//! command-line flags, merged with precedence flags > env > file.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::MAX_ATOMS;
use crate::model::{linspace, ChiralCoupling, FluctuationSpec};

pub const ENV_PREFIX: &str = "CHIRAL_";

pub const DEFAULT_RABI: f64 = 0.01;
pub const DEFAULT_SAMPLES: usize = 200;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_T_FINAL: f64 = 50.0;
pub const DEFAULT_N_STEPS: usize = 500;
pub const DEFAULT_RABI_LIST: [f64; 3] = [1e-3, 1e-2, 1e-1];

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Sweep,
    Fluctuate,
    Validate,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulate" => Ok(Mode::Simulate),
            "sweep" => Ok(Mode::Sweep),
            "fluctuate" => Ok(Mode::Fluctuate),
            "validate" => Ok(Mode::Validate),
            _ => Err(config_err(format!(
                "unknown mode '{s}' (expected simulate, sweep, fluctuate or validate)"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Simulate => "simulate",
            Mode::Sweep => "sweep",
            Mode::Fluctuate => "fluctuate",
            Mode::Validate => "validate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(config_err(format!(
                "unknown format '{s}' (expected csv or json)"
            ))),
        }
    }
}

/// Either one detuning for every atom or one per atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DetuningSpec {
    Uniform(f64),
    PerAtom(Vec<f64>),
}

impl DetuningSpec {
    pub fn resolve(&self, n_atoms: usize) -> Result<Vec<f64>> {
        match self {
            DetuningSpec::Uniform(d) => Ok(vec![*d; n_atoms]),
            DetuningSpec::PerAtom(v) if v.len() == n_atoms => Ok(v.clone()),
            DetuningSpec::PerAtom(v) => Err(config_err(format!(
                "delta lists {} values but N = {n_atoms}",
                v.len()
            ))),
        }
    }
}

impl FromStr for DetuningSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let v = parse_f64_list("delta", s)?;
        if v.len() == 1 && !s.contains(',') {
            Ok(DetuningSpec::Uniform(v[0]))
        } else {
            Ok(DetuningSpec::PerAtom(v))
        }
    }
}

/// Directional coupling as the user gave it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingSpec {
    Directionality(f64),
    GammaL(f64),
}

impl CouplingSpec {
    pub fn coupling(&self) -> Result<ChiralCoupling> {
        match *self {
            CouplingSpec::Directionality(d) => ChiralCoupling::from_directionality(d),
            CouplingSpec::GammaL(g) => ChiralCoupling::from_gamma_l(g),
        }
        .map_err(|e| config_err(e.to_string()))
    }

    pub fn directionality(&self) -> f64 {
        match *self {
            CouplingSpec::Directionality(d) => d,
            CouplingSpec::GammaL(g) => 1.0 - 2.0 * g,
        }
    }
}

/// Evenly spaced axis written as `start:stop:count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.start, self.stop, self.count)
    }

    pub fn default_xi() -> Self {
        Self {
            start: 0.0,
            stop: 2.0 * PI,
            count: 401,
        }
    }
}

impl FromStr for GridSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let bad = || config_err(format!("grid '{s}' is not start:stop:count"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let start: f64 = parts[0].parse().map_err(|_| bad())?;
        let stop: f64 = parts[1].parse().map_err(|_| bad())?;
        let count: usize = parts[2].parse().map_err(|_| bad())?;
        if !(start.is_finite() && stop.is_finite()) || count == 0 {
            return Err(config_err(format!(
                "grid '{s}' needs finite bounds and at least one point"
            )));
        }
        Ok(Self { start, stop, count })
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // f64 Display is the shortest string that parses back exactly.
        write!(f, "{}:{}:{}", self.start, self.stop, self.count)
    }
}

fn parse_f64_list(key: &str, s: &str) -> Result<Vec<f64>> {
    let v: std::result::Result<Vec<f64>, _> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect();
    match v {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(config_err(format!(
            "{key}: '{s}' is not a comma-separated list of numbers"
        ))),
    }
}

fn parse_usize_list(key: &str, s: &str) -> Result<Vec<usize>> {
    let v: std::result::Result<Vec<usize>, _> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect();
    match v {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(config_err(format!(
            "{key}: '{s}' is not a comma-separated list of integers"
        ))),
    }
}

fn parse_scalar<T: FromStr>(key: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| config_err(format!("{key}: cannot parse '{s}'")))
}

/// One source of settings. Every field is optional; layers are merged and
/// then resolved into a [`RunConfig`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_atoms: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<DetuningSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directionality: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rabi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_grid: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directionality_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fluctuation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rabi_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

/// Keys accepted in files, as `CHIRAL_<KEY>` variables and as flags.
pub const KEYS: [&str; 20] = [
    "mode",
    "n_atoms",
    "xi",
    "delta",
    "directionality",
    "gamma_l",
    "rabi",
    "xi_grid",
    "delta_grid",
    "directionality_grid",
    "n_grid",
    "fluctuation",
    "samples",
    "seed",
    "t_final",
    "n_steps",
    "rabi_list",
    "out",
    "format",
    "threads",
];

impl ConfigLayer {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| config_err(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    /// Layer from `CHIRAL_*` variables. Unrecognized `CHIRAL_*` names are
    /// rejected so that typos do not pass silently.
    pub fn from_env_vars<I>(vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut layer = Self::default();
        for (name, value) in vars {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = key.to_ascii_lowercase();
            if !KEYS.contains(&key.as_str()) {
                return Err(config_err(format!("unknown environment variable {name}")));
            }
            layer
                .set(&key, &value)
                .map_err(|e| config_err(format!("{name}: {e}")))?;
        }
        Ok(layer)
    }

    pub fn from_env() -> Result<Self> {
        Self::from_env_vars(std::env::vars())
    }

    /// Set one key from its textual form. Lists are comma-separated.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mode" => self.mode = Some(value.trim().parse()?),
            "n_atoms" => self.n_atoms = Some(parse_scalar(key, value)?),
            "xi" => self.xi = Some(parse_scalar(key, value)?),
            "delta" => self.delta = Some(value.parse()?),
            "directionality" => self.directionality = Some(parse_scalar(key, value)?),
            "gamma_l" => self.gamma_l = Some(parse_scalar(key, value)?),
            "rabi" => self.rabi = Some(parse_scalar(key, value)?),
            "xi_grid" => {
                value.parse::<GridSpec>()?;
                self.xi_grid = Some(value.trim().to_string());
            }
            "delta_grid" => self.delta_grid = Some(parse_f64_list(key, value)?),
            "directionality_grid" => self.directionality_grid = Some(parse_f64_list(key, value)?),
            "n_grid" => self.n_grid = Some(parse_usize_list(key, value)?),
            "fluctuation" => self.fluctuation = Some(parse_scalar(key, value)?),
            "samples" => self.samples = Some(parse_scalar(key, value)?),
            "seed" => self.seed = Some(parse_scalar(key, value)?),
            "t_final" => self.t_final = Some(parse_scalar(key, value)?),
            "n_steps" => self.n_steps = Some(parse_scalar(key, value)?),
            "rabi_list" => self.rabi_list = Some(parse_f64_list(key, value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            "format" => self.format = Some(value.trim().parse()?),
            "threads" => self.threads = Some(parse_scalar(key, value)?),
            _ => return Err(config_err(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Overlay `top` on `self`. Giving either coupling parameter in `top`
    /// replaces both from the lower layer.
    pub fn merged(mut self, top: ConfigLayer) -> Result<Self> {
        top.check_coupling()?;
        if top.directionality.is_some() || top.gamma_l.is_some() {
            self.directionality = None;
            self.gamma_l = None;
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if top.$f.is_some() { self.$f = top.$f; } )* };
        }
        take!(
            mode,
            n_atoms,
            xi,
            delta,
            directionality,
            gamma_l,
            rabi,
            xi_grid,
            delta_grid,
            directionality_grid,
            n_grid,
            fluctuation,
            samples,
            seed,
            t_final,
            n_steps,
            rabi_list,
            out,
            format,
            threads
        );
        Ok(self)
    }

    fn check_coupling(&self) -> Result<()> {
        if self.directionality.is_some() && self.gamma_l.is_some() {
            return Err(config_err(
                "give either directionality or gamma_l, not both",
            ));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        RunConfig::from_layer(self)
    }
}

/// Fully validated run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    /// Chain length for simulate/validate; default axis for sweep/fluctuate.
    pub n_atoms: Option<usize>,
    /// Lattice phase for simulate/validate.
    pub xi: Option<f64>,
    pub delta: DetuningSpec,
    pub coupling: CouplingSpec,
    pub rabi: f64,
    pub xi_grid: GridSpec,
    pub delta_grid: Option<Vec<f64>>,
    pub directionality_grid: Option<Vec<f64>>,
    pub n_grid: Option<Vec<usize>>,
    pub fluctuation: f64,
    pub samples: usize,
    pub seed: u64,
    pub t_final: f64,
    pub n_steps: usize,
    pub rabi_list: Vec<f64>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_layer(l: &ConfigLayer) -> Result<Self> {
        l.check_coupling()?;
        let mode = l.mode.ok_or_else(|| config_err("mode is required"))?;
        let coupling = match (l.directionality, l.gamma_l) {
            (Some(d), None) => CouplingSpec::Directionality(d),
            (None, Some(g)) => CouplingSpec::GammaL(g),
            (None, None) if l.directionality_grid.is_some() && mode_uses_grid(mode) => {
                // The grid supplies D; this value is unused.
                CouplingSpec::Directionality(l.directionality_grid.as_ref().unwrap()[0])
            }
            _ => return Err(config_err("one of directionality or gamma_l is required")),
        };
        coupling.coupling()?;

        let cfg = RunConfig {
            mode,
            n_atoms: l.n_atoms,
            xi: l.xi,
            delta: l.delta.clone().unwrap_or(DetuningSpec::Uniform(0.0)),
            coupling,
            rabi: l.rabi.unwrap_or(DEFAULT_RABI),
            xi_grid: match &l.xi_grid {
                Some(s) => s.parse()?,
                None => GridSpec::default_xi(),
            },
            delta_grid: l.delta_grid.clone(),
            directionality_grid: l.directionality_grid.clone(),
            n_grid: l.n_grid.clone(),
            fluctuation: l.fluctuation.unwrap_or(0.0),
            samples: l.samples.unwrap_or(DEFAULT_SAMPLES),
            seed: l.seed.unwrap_or(DEFAULT_SEED),
            t_final: l.t_final.unwrap_or(DEFAULT_T_FINAL),
            n_steps: l.n_steps.unwrap_or(DEFAULT_N_STEPS),
            rabi_list: l
                .rabi_list
                .clone()
                .unwrap_or_else(|| DEFAULT_RABI_LIST.to_vec()),
            out: l.out.clone(),
            format: l.format.unwrap_or_default(),
            threads: l.threads,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(config_err(m));
        if let Some(n) = self.n_atoms {
            if n < 1 {
                return bad("n_atoms must be at least 1".into());
            }
        }
        if let Some(ns) = &self.n_grid {
            if ns.is_empty() || ns.contains(&0) {
                return bad("n_grid entries must be at least 1".into());
            }
        }
        if let Some(x) = self.xi {
            if !(x.is_finite() && x >= 0.0) {
                return bad(format!("xi must be finite and >= 0, got {x}"));
            }
        }
        if self.xi_grid.start < 0.0 || self.xi_grid.stop < 0.0 {
            return bad("xi_grid bounds must be >= 0".into());
        }
        if let Some(ds) = &self.directionality_grid {
            if let Some(d) = ds.iter().find(|d| !(-1.0..=1.0).contains(*d)) {
                return bad(format!("directionality {d} outside [-1, 1]"));
            }
        }
        if !(self.rabi.is_finite() && self.rabi != 0.0) {
            return bad(format!(
                "rabi must be finite and non-zero, got {}",
                self.rabi
            ));
        }
        if !(self.fluctuation.is_finite() && self.fluctuation >= 0.0) {
            return bad(format!(
                "fluctuation must be >= 0, got {}",
                self.fluctuation
            ));
        }
        if self.samples < 2 {
            return bad(format!("samples must be at least 2, got {}", self.samples));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return bad(format!("t_final must be > 0, got {}", self.t_final));
        }
        if self.n_steps == 0 {
            return bad("n_steps must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        match &self.delta {
            DetuningSpec::Uniform(d) if !d.is_finite() => return bad("delta must be finite".into()),
            DetuningSpec::PerAtom(v) if v.iter().any(|d| !d.is_finite()) => {
                return bad("delta entries must be finite".into())
            }
            _ => {}
        }

        match self.mode {
            Mode::Simulate | Mode::Validate => {
                let n = self
                    .n_atoms
                    .ok_or_else(|| config_err(format!("{} needs n_atoms", self.mode)))?;
                if self.xi.is_none() {
                    return bad(format!("{} needs xi", self.mode));
                }
                self.delta.resolve(n)?;
                if self.mode == Mode::Validate {
                    if n > MAX_ATOMS {
                        return bad(format!("validate supports at most {MAX_ATOMS} atoms"));
                    }
                    if self.rabi_list.len() < 2
                        || self.rabi_list.iter().any(|r| !(r.is_finite() && *r != 0.0))
                    {
                        return bad("rabi_list needs at least two finite non-zero values".into());
                    }
                }
            }
            Mode::Sweep | Mode::Fluctuate => {
                if self.n_atoms.is_none() && self.n_grid.is_none() {
                    return bad(format!("{} needs n_atoms or n_grid", self.mode));
                }
                if matches!(self.delta, DetuningSpec::PerAtom(_)) {
                    return bad(format!(
                        "{} uses uniform detuning; give delta as a scalar or use delta_grid",
                        self.mode
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn fluctuation_spec(&self) -> Result<FluctuationSpec> {
        FluctuationSpec::new(self.fluctuation, self.seed)
    }

    /// Axis of chain lengths for sweep and fluctuate.
    pub fn n_axis(&self) -> Vec<usize> {
        self.n_grid
            .clone()
            .unwrap_or_else(|| vec![self.n_atoms.unwrap_or(1)])
    }

    pub fn delta_axis(&self) -> Vec<f64> {
        self.delta_grid
            .clone()
            .unwrap_or_else(|| match &self.delta {
                DetuningSpec::Uniform(d) => vec![*d],
                DetuningSpec::PerAtom(v) => vec![v[0]],
            })
    }

    pub fn directionality_axis(&self) -> Vec<f64> {
        self.directionality_grid
            .clone()
            .unwrap_or_else(|| vec![self.coupling.directionality()])
    }

    /// The fully specified layer that resolves back to this configuration.
    pub fn to_layer(&self) -> ConfigLayer {
        let (directionality, gamma_l) = match self.coupling {
            CouplingSpec::Directionality(d) => (Some(d), None),
            CouplingSpec::GammaL(g) => (None, Some(g)),
        };
        ConfigLayer {
            mode: Some(self.mode),
            n_atoms: self.n_atoms,
            xi: self.xi,
            delta: Some(self.delta.clone()),
            directionality,
            gamma_l,
            rabi: Some(self.rabi),
            xi_grid: Some(self.xi_grid.to_string()),
            delta_grid: self.delta_grid.clone(),
            directionality_grid: self.directionality_grid.clone(),
            n_grid: self.n_grid.clone(),
            fluctuation: Some(self.fluctuation),
            samples: Some(self.samples),
            seed: Some(self.seed),
            t_final: Some(self.t_final),
            n_steps: Some(self.n_steps),
            rabi_list: Some(self.rabi_list.clone()),
            out: self.out.clone(),
            format: Some(self.format),
            threads: self.threads,
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        self.to_layer().to_toml_string()
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        ConfigLayer::from_toml_str(s)?.resolve()
    }

    /// Key/value view for metadata echo.
    pub fn echo(&self) -> BTreeMap<String, serde_json::Value> {
        match serde_json::to_value(self.to_layer()) {
            Ok(serde_json::Value::Object(m)) => m.into_iter().collect(),
            _ => BTreeMap::new(),
        }
    }
}

fn mode_uses_grid(mode: Mode) -> bool {
    matches!(mode, Mode::Sweep | Mode::Fluctuate)
}

/// Merge file, environment and flag layers (lowest to highest) and resolve.
pub fn load(file: Option<&Path>, env: ConfigLayer, flags: ConfigLayer) -> Result<RunConfig> {
    let base = match file {
        Some(p) => ConfigLayer::from_file(p)?,
        None => ConfigLayer::default(),
    };
    base.check_coupling()?;
    base.merged(env)?.merged(flags)?.resolve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sweep_layer() -> ConfigLayer {
        ConfigLayer {
            mode: Some(Mode::Sweep),
            n_atoms: Some(10),
            directionality: Some(1.0),
            ..Default::default()
        }
    }

    #[test]
    fn coupling_conversions() {
        let d1 = CouplingSpec::Directionality(1.0).coupling().unwrap();
        assert_eq!((d1.gamma_l(), d1.gamma_r()), (0.0, 1.0));
        let d0 = CouplingSpec::Directionality(0.0).coupling().unwrap();
        assert_eq!((d0.gamma_l(), d0.gamma_r()), (0.5, 0.5));
        let g = CouplingSpec::GammaL(0.25);
        assert_eq!(g.coupling().unwrap().directionality(), 0.5);
        assert_eq!(g.directionality(), 0.5);
    }

    #[test]
    fn defaults() {
        let c = sweep_layer().resolve().unwrap();
        assert_eq!(c.rabi, 0.01);
        assert_eq!(c.xi_grid, GridSpec::default_xi());
        assert_eq!(c.samples, 200);
        assert_eq!(c.format, Format::Csv);
        assert_eq!(c.delta, DetuningSpec::Uniform(0.0));
    }

    #[test]
    fn rejects_bad_values() {
        let mut l = sweep_layer();
        l.directionality = Some(1.5);
        assert!(l.resolve().is_err());

        let mut l = sweep_layer();
        l.n_atoms = Some(0);
        assert!(l.resolve().is_err());

        let mut l = sweep_layer();
        l.fluctuation = Some(-0.01);
        assert!(l.resolve().is_err());

        let mut l = sweep_layer();
        l.gamma_l = Some(0.5);
        assert!(l.resolve().unwrap_err().to_string().contains("not both"));

        assert!(ConfigLayer::default().resolve().is_err());
    }

    #[test]
    fn unknown_file_key_is_rejected() {
        let err = ConfigLayer::from_toml_str("mode = \"sweep\"\nnatoms = 3\n").unwrap_err();
        assert!(err.to_string().contains("natoms"));
    }

    #[test]
    fn detuning_scalar_or_list() {
        let l = ConfigLayer::from_toml_str("delta = 0.5").unwrap();
        assert_eq!(l.delta, Some(DetuningSpec::Uniform(0.5)));
        let l = ConfigLayer::from_toml_str("delta = [0.0, 0.5]").unwrap();
        assert_eq!(l.delta, Some(DetuningSpec::PerAtom(vec![0.0, 0.5])));
        assert_eq!(
            "0.5".parse::<DetuningSpec>().unwrap(),
            DetuningSpec::Uniform(0.5)
        );
        assert_eq!(
            "0,0.5".parse::<DetuningSpec>().unwrap(),
            DetuningSpec::PerAtom(vec![0.0, 0.5])
        );
        assert!(DetuningSpec::PerAtom(vec![0.0]).resolve(2).is_err());
    }

    #[test]
    fn per_atom_detuning_needs_single_point_mode() {
        let mut l = sweep_layer();
        l.delta = Some(DetuningSpec::PerAtom(vec![0.0; 10]));
        assert!(l.resolve().is_err());
        l.mode = Some(Mode::Simulate);
        l.xi = Some(1.0);
        assert!(l.resolve().is_ok());
    }

    #[test]
    fn grid_spec_parsing() {
        let g: GridSpec = "0:6.283185307179586:401".parse().unwrap();
        assert_eq!(g, GridSpec::default_xi());
        assert!("0:1".parse::<GridSpec>().is_err());
        assert!("0:1:0".parse::<GridSpec>().is_err());
        assert!("a:1:3".parse::<GridSpec>().is_err());
    }

    #[test]
    fn precedence_flags_over_env_over_file() {
        let file = ConfigLayer {
            rabi: Some(0.02),
            seed: Some(1),
            samples: Some(50),
            ..sweep_layer()
        };
        let env = ConfigLayer::from_env_vars([
            ("CHIRAL_SEED".to_string(), "2".to_string()),
            ("CHIRAL_SAMPLES".to_string(), "60".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ])
        .unwrap();
        let flags = ConfigLayer {
            seed: Some(3),
            ..Default::default()
        };
        let c = file
            .merged(env)
            .unwrap()
            .merged(flags)
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!((c.rabi, c.samples, c.seed), (0.02, 60, 3));
    }

    #[test]
    fn higher_layer_coupling_replaces_lower() {
        let flags = ConfigLayer {
            gamma_l: Some(0.25),
            ..Default::default()
        };
        let c = sweep_layer().merged(flags).unwrap().resolve().unwrap();
        assert_eq!(c.coupling, CouplingSpec::GammaL(0.25));
    }

    #[test]
    fn unknown_env_var_is_rejected() {
        let r = ConfigLayer::from_env_vars([("CHIRAL_SEEDS".to_string(), "1".to_string())]);
        assert!(r.unwrap_err().to_string().contains("CHIRAL_SEEDS"));
    }

    #[test]
    fn every_key_is_settable() {
        let samples = [
            ("mode", "validate"),
            ("n_atoms", "3"),
            ("xi", "1.5"),
            ("delta", "0.1"),
            ("directionality", "0.5"),
            ("gamma_l", "0.25"),
            ("rabi", "0.02"),
            ("xi_grid", "0:1:3"),
            ("delta_grid", "0,1"),
            ("directionality_grid", "0,1"),
            ("n_grid", "2,3"),
            ("fluctuation", "0.01"),
            ("samples", "10"),
            ("seed", "9"),
            ("t_final", "5"),
            ("n_steps", "20"),
            ("rabi_list", "0.001,0.01"),
            ("out", "x.csv"),
            ("format", "json"),
            ("threads", "2"),
        ];
        assert_eq!(samples.len(), KEYS.len());
        for (k, v) in samples {
            assert!(KEYS.contains(&k));
            ConfigLayer::default().set(k, v).unwrap();
        }
        assert!(ConfigLayer::default().set("bogus", "1").is_err());
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            prop_oneof![
                Just(Mode::Simulate),
                Just(Mode::Sweep),
                Just(Mode::Fluctuate),
                Just(Mode::Validate)
            ],
            1usize..=8,
            0.0f64..20.0,
            prop_oneof![(-3.0f64..3.0).prop_map(DetuningSpec::Uniform),],
            prop_oneof![
                (-1.0f64..=1.0).prop_map(CouplingSpec::Directionality),
                (0.0f64..=1.0).prop_map(CouplingSpec::GammaL),
            ],
            (1e-4f64..1.0, any::<u64>(), 0.0f64..0.1, 2usize..500),
            (0.0f64..3.0, 0.1f64..7.0, 1usize..1000),
            proptest::option::of(proptest::collection::vec(-2.0f64..2.0, 1..4)),
            proptest::option::of(1usize..16),
        )
            .prop_map(
                |(
                    mode,
                    n,
                    xi,
                    delta,
                    coupling,
                    (rabi, seed, f, samples),
                    (a, b, cnt),
                    dg,
                    threads,
                )| {
                    RunConfig {
                        mode,
                        n_atoms: Some(n),
                        xi: Some(xi),
                        delta,
                        coupling,
                        rabi,
                        xi_grid: GridSpec {
                            start: a,
                            stop: b,
                            count: cnt,
                        },
                        delta_grid: dg,
                        directionality_grid: None,
                        n_grid: None,
                        fluctuation: f,
                        samples,
                        seed,
                        t_final: 12.5,
                        n_steps: 100,
                        rabi_list: vec![1e-3, 3e-2, 1e-1],
                        out: Some(PathBuf::from("out/result.csv")),
                        format: Format::Json,
                        threads,
                    }
                },
            )
    }

    proptest! {
        #[test]
        fn toml_round_trip(cfg in arb_config()) {
            let text = cfg.to_toml_string().unwrap();
            let back = RunConfig::from_toml_str(&text).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
