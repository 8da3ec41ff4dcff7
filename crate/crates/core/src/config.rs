//! Experiment configuration files (TOML).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::maps::{make_family, Branch, Correction, Family};
use crate::verify::jacobian::JacobianOptions;
use crate::verify::observable::{Profile, PwcRule};
use crate::verify::tails::TailOptions;

/// Errors reading or validating a configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), reason: reason.into() }
}

/// Map family and parameters; which fields apply depends on `family`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cuts: Option<Vec<f64>>,
    /// Coefficient of the higher-order term `c·x^{1+κ}` (lsv2 only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Branch table of a custom map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branches: Option<Vec<Branch>>,
}

impl MapSpec {
    fn need<T: Copy>(v: Option<T>, field: &str, family: &str) -> Result<T, ConfigError> {
        v.ok_or_else(|| invalid(format!("map.{field}"), format!("required for family {family}")))
    }

    fn alpha(&self) -> Result<f64, ConfigError> {
        let a = Self::need(self.alpha, "alpha", &self.family)?;
        if a > 0.0 && a <= 1.0 {
            Ok(a)
        } else {
            Err(invalid("map.alpha", format!("{a} is outside (0, 1]")))
        }
    }

    fn b(&self) -> Result<f64, ConfigError> {
        let b = Self::need(self.b, "b", &self.family)?;
        if b > 0.0 && b.is_finite() {
            Ok(b)
        } else {
            Err(invalid("map.b", format!("{b} must be positive")))
        }
    }

    fn eta(&self) -> Result<f64, ConfigError> {
        let eta = self.eta.unwrap_or(1.0);
        if eta > 0.0 && eta <= 1.0 {
            Ok(eta)
        } else {
            Err(invalid("map.eta", format!("{eta} is outside (0, 1]")))
        }
    }

    fn cuts(&self) -> Result<Vec<f64>, ConfigError> {
        self.cuts.clone().ok_or_else(|| invalid("map.cuts", format!("required for family {}", self.family)))
    }

    /// The family this map table describes.
    pub fn to_family(&self) -> Result<Family, ConfigError> {
        let f = match self.family.as_str() {
            "lsv" => Family::Lsv { alpha: self.alpha()? },
            "lsv2" => {
                let correction = match (self.c, self.kappa) {
                    (Some(c), Some(kappa)) => Some(Correction { c, kappa }),
                    (None, None) => None,
                    _ => return Err(invalid("map.kappa", "c and kappa must be given together")),
                };
                Family::Lsv2 { alpha: self.alpha()?, b: self.b()?, eta: self.eta()?, correction }
            }
            "qbranch" => {
                let q = Self::need(self.q, "q", "qbranch")?;
                let b = match self.b {
                    Some(_) => self.b()?,
                    None => 2f64.powf(1.0 / self.alpha()?),
                };
                Family::Qbranch { alpha: self.alpha()?, b, eta: self.eta()?, q, cuts: self.cuts.clone() }
            }
            "qbranch_linear" => match (&self.cuts, self.q) {
                (None, Some(q)) if q >= 2 => Family::QbranchLinear { cuts: (1..q).map(|k| k as f64 / q as f64).collect() },
                (None, Some(q)) => return Err(invalid("map.q", format!("{q} must be at least 2"))),
                _ => Family::QbranchLinear { cuts: self.cuts()? },
            },
            "pm_mod1" => Family::PmMod1 { alpha: self.alpha()?, b: self.b()? },
            "farey" => Family::Farey,
            "two_sided" => {
                let b = match self.b {
                    Some(_) => self.b()?,
                    None => 2f64.powf(1.0 / self.alpha()?),
                };
                Family::TwoSided { alpha: self.alpha()?, b }
            }
            "thaler_d" => Family::ThalerD { alpha: self.alpha()?, cuts: self.cuts()? },
            "custom" => Family::Custom {
                eta: self.eta()?,
                branches: self.branches.clone().ok_or_else(|| invalid("map.branches", "required for family custom"))?,
            },
            other => return Err(invalid("map.family", format!("unknown family `{other}`; see list-families"))),
        };
        Ok(f)
    }
}

/// Maps a construction error to a configuration error on the `map` table.
pub fn map_error(e: Error) -> ConfigError {
    match e {
        Error::InvalidParameter { field, reason } => invalid(format!("map.{field}"), reason),
        other => invalid("map", other.to_string()),
    }
}

/// Depths and discretization sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Depths {
    /// Depth `N` of the tail check.
    pub tail: usize,
    /// Ulam cells on `Y`.
    pub ulam_cells: usize,
    /// Return times above this are lumped in the Ulam matrix.
    pub tau_cap: usize,
    /// Trap depth of the operator grid; chosen from the leak tolerance when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operator: Option<usize>,
    /// Pullback sub-cells per trap cell.
    pub subcells: usize,
    /// Explicit preimage depth of the entry columns.
    pub entry_depth: usize,
    /// Operator steps.
    pub n_max: usize,
}

impl Default for Depths {
    fn default() -> Self {
        Depths { tail: 10_000, ulam_cells: 4096, tau_cap: 2000, operator: None, subcells: 2, entry_depth: 1000, n_max: 2000 }
    }
}

/// Parameters of the Jacobian check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JacobianConfig {
    pub js: Vec<usize>,
    /// Window parameters; the first one decides pass/fail.
    pub eps: Vec<f64>,
    /// Series truncation `ℓ_max = series_factor·j`.
    pub series_factor: usize,
}

impl Default for JacobianConfig {
    fn default() -> Self {
        let d = JacobianOptions::default();
        JacobianConfig { js: d.js, eps: d.eps, series_factor: d.series_factor }
    }
}

/// Pass/fail thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub oscillation: f64,
    pub additivity: f64,
    pub identity: f64,
    pub jacobian: f64,
    pub spread: f64,
    pub cauchy: f64,
    pub leak: f64,
    pub glocal: f64,
    pub centring: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            oscillation: 0.03,
            additivity: 0.01,
            identity: 1e-4,
            jacobian: 0.05,
            spread: 0.05,
            cauchy: 0.03,
            leak: 1e-3,
            glocal: 0.02,
            centring: 0.05,
        }
    }
}

/// One observable of the mixing experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    /// `pwc`, `meanzero` or `indicator_y`.
    pub kind: String,
    /// For `pwc`: `zero`, `alternating`, `block`, `constant` or `custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    /// For `meanzero`: `left_right`, `constant` or `table`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    /// For `pwc`: fail unless the centring condition holds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centred: Option<bool>,
    /// Multiplies the observable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

/// Resolved observable request.
#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    Pwc { rule: PwcRule, centred: bool },
    Meanzero { profile: Profile },
    IndicatorY,
}

impl ObservableSpec {
    pub fn resolve(&self, index: usize) -> Result<Observable, ConfigError> {
        let field = |f: &str| format!("observables[{index}].{f}");
        let values = || self.values.clone().ok_or_else(|| invalid(field("values"), "required"));
        let value = || self.value.ok_or_else(|| invalid(field("value"), "required"));
        match self.kind.as_str() {
            "pwc" => {
                let rule = match self.rule.as_deref().unwrap_or("alternating") {
                    "zero" => PwcRule::Zero,
                    "alternating" => PwcRule::Alternating,
                    "block" => {
                        let length = self.length.ok_or_else(|| invalid(field("length"), "required for block"))?;
                        if length == 0 {
                            return Err(invalid(field("length"), "must be at least 1"));
                        }
                        PwcRule::Block { length }
                    }
                    "constant" => PwcRule::Constant { value: value()? },
                    "custom" => {
                        let v = values()?;
                        if v.is_empty() {
                            return Err(invalid(field("values"), "must not be empty"));
                        }
                        PwcRule::Custom { values: v }
                    }
                    other => return Err(invalid(field("rule"), format!("unknown rule `{other}`"))),
                };
                Ok(Observable::Pwc { rule, centred: self.centred.unwrap_or(false) })
            }
            "meanzero" => {
                let profile = match self.profile.as_deref().unwrap_or("left_right") {
                    "left_right" => Profile::LeftRight,
                    "constant" => Profile::Constant { value: value()? },
                    "table" => Profile::Table { values: values()? },
                    other => return Err(invalid(field("profile"), format!("unknown profile `{other}`"))),
                };
                Ok(Observable::Meanzero { profile })
            }
            "indicator_y" => Ok(Observable::IndicatorY),
            other => Err(invalid(field("kind"), format!("unknown kind `{other}`"))),
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale.unwrap_or(1.0)
    }
}

/// Output settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: String,
}

impl Default for Output {
    fn default() -> Self {
        Output { dir: "out".into() }
    }
}

/// Checks a run can perform.
pub const CHECKS: [&str; 4] = ["eqY", "eqJ", "eqK", "glocal"];

/// A full experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Enabled checks; the defaults depend on the map (see [`ExperimentConfig::enabled_checks`]).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<String>>,
    pub map: MapSpec,
    #[serde(default)]
    pub depths: Depths,
    #[serde(default)]
    pub jacobian: JacobianConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: Output,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observables: Vec<ObservableSpec>,
}

impl ExperimentConfig {
    /// Parses and validates TOML text.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is serializable")
    }

    /// A config with defaults for the given map.
    pub fn for_map(map: MapSpec) -> Self {
        ExperimentConfig {
            checks: None,
            map,
            depths: Depths::default(),
            jacobian: JacobianConfig::default(),
            tolerances: Tolerances::default(),
            output: Output::default(),
            observables: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        make_family(self.map.to_family()?).map_err(map_error)?;
        let d = &self.depths;
        for (name, v) in [
            ("tail", d.tail),
            ("ulam_cells", d.ulam_cells),
            ("tau_cap", d.tau_cap),
            ("subcells", d.subcells),
            ("entry_depth", d.entry_depth),
            ("n_max", d.n_max),
        ] {
            if v == 0 {
                return Err(invalid(format!("depths.{name}"), "must be positive"));
            }
        }
        if d.tail < 20 {
            return Err(invalid("depths.tail", "must be at least 20"));
        }
        if d.ulam_cells < 100 {
            return Err(invalid("depths.ulam_cells", "must be at least 100"));
        }
        if d.tau_cap < 2 {
            return Err(invalid("depths.tau_cap", "must be at least 2"));
        }
        if d.operator.is_some_and(|n| n < 2) {
            return Err(invalid("depths.operator", "must be at least 2"));
        }
        let j = &self.jacobian;
        if j.js.is_empty() || j.js.contains(&0) {
            return Err(invalid("jacobian.js", "must be a non-empty list of positive integers"));
        }
        if j.js.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("jacobian.js", "must be strictly increasing"));
        }
        if j.eps.is_empty() || j.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(invalid("jacobian.eps", "values must lie in (0, 1)"));
        }
        if j.series_factor == 0 {
            return Err(invalid("jacobian.series_factor", "must be positive"));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("oscillation", t.oscillation),
            ("additivity", t.additivity),
            ("identity", t.identity),
            ("jacobian", t.jacobian),
            ("spread", t.spread),
            ("cauchy", t.cauchy),
            ("leak", t.leak),
            ("glocal", t.glocal),
            ("centring", t.centring),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(format!("tolerances.{name}"), format!("{v} is outside (0, 1)")));
            }
        }
        for (i, o) in self.observables.iter().enumerate() {
            o.resolve(i)?;
        }
        if let Some(checks) = &self.checks {
            for c in checks {
                if !CHECKS.contains(&c.as_str()) {
                    return Err(invalid("checks", format!("unknown check `{c}`; expected one of {CHECKS:?}")));
                }
            }
        }
        Ok(())
    }

    /// Enabled checks: the configured list, or all four for maps with a
    /// neutral fixed point and `glocal` alone for uniformly expanding maps.
    pub fn enabled_checks(&self, neutral: bool) -> Vec<String> {
        match &self.checks {
            Some(c) => c.clone(),
            None if neutral => CHECKS.iter().map(|s| s.to_string()).collect(),
            None => vec!["glocal".into()],
        }
    }

    pub fn tail_options(&self) -> TailOptions {
        let t = &self.tolerances;
        TailOptions { oscillation: t.oscillation, additivity: t.additivity, identity: t.identity }
    }

    pub fn jacobian_options(&self) -> JacobianOptions {
        JacobianOptions {
            js: self.jacobian.js.clone(),
            eps: self.jacobian.eps.clone(),
            series_factor: self.jacobian.series_factor,
            tolerance: self.tolerances.jacobian,
        }
    }
}
