//! The system configuration file (JSON, `schema_version` 1) and the four
//! builtin systems.

use std::path::{Path, PathBuf};

use lyapgen_core::dynamics::DEFAULT_STEP;
use lyapgen_core::lift::{LiftConfig, DEFAULT_QUAD_N};
use lyapgen_core::transition::{DEFAULT_PADDING, DEFAULT_SAMPLES};
use lyapgen_core::{
    build_grid, parse_expression, BoxGrid, EllMode, Rect, SemiflowSystem, TransitionSettings,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const BUILTIN_NAMES: [&str; 4] = ["linear1d", "doublewell", "hopf", "halfmap"];
pub const DEFAULT_DEPTH: u32 = 8;
/// Padding used by the ODE builtins.
pub const ODE_BUILTIN_PADDING: f64 = 0.125;
pub const DEFAULT_SEED: u64 = 0x05ee_d1a9_u64;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Syntax {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
}

impl ConfigError {
    fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Field {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Ode,
    Map,
    Builtin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EllModeName {
    Constant,
    Interpolated,
}

impl From<EllModeName> for EllMode {
    fn from(m: EllModeName) -> Self {
        match m {
            EllModeName::Constant => EllMode::Constant,
            EllModeName::Interpolated => EllMode::Interpolated,
        }
    }
}

/// The config file as written. Every field except `schema_version`, `name`
/// and `mode` is optional; builtins supply their own system and defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub schema_version: Option<u32>,
    pub name: Option<String>,
    pub mode: Option<ModeName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell_mode: Option<EllModeName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<bool>,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub depth: Option<u32>,
    pub samples: Option<usize>,
    pub padding: Option<f64>,
    pub quad_n: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Ode,
    Map,
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub name: String,
    pub kind: Kind,
    pub builtin: Option<&'static str>,
    pub expressions: Vec<String>,
    pub domain: Vec<(f64, f64)>,
    pub depth: u32,
    pub transition: TransitionSettings,
    pub h: f64,
    pub lift: LiftConfig,
    pub ell_mode: EllMode,
    pub lattice: usize,
    pub out: PathBuf,
    pub seed: u64,
    pub edges: bool,
}

struct Builtin {
    kind: Kind,
    expressions: &'static [&'static str],
    domain: &'static [(f64, f64)],
    depth: u32,
    padding: f64,
}

fn builtin(name: &str) -> Option<(&'static str, Builtin)> {
    let (key, b) = match name {
        "linear1d" => (
            "linear1d",
            Builtin {
                kind: Kind::Ode,
                expressions: &["-x1"],
                domain: &[(-1.0, 1.0)],
                depth: 8,
                padding: ODE_BUILTIN_PADDING,
            },
        ),
        "doublewell" => (
            "doublewell",
            Builtin {
                kind: Kind::Ode,
                expressions: &["x1 - x1^3"],
                domain: &[(-2.0, 2.0)],
                depth: 8,
                padding: ODE_BUILTIN_PADDING,
            },
        ),
        "hopf" => (
            "hopf",
            Builtin {
                kind: Kind::Ode,
                expressions: &["-x2 + x1*(1 - x1^2 - x2^2)", "x1 + x2*(1 - x1^2 - x2^2)"],
                domain: &[(-2.0, 2.0), (-2.0, 2.0)],
                depth: 6,
                padding: ODE_BUILTIN_PADDING,
            },
        ),
        "halfmap" => (
            "halfmap",
            Builtin {
                kind: Kind::Map,
                expressions: &["x1/2"],
                domain: &[(-1.0, 1.0)],
                depth: 3,
                padding: DEFAULT_PADDING,
            },
        ),
        _ => return None,
    };
    Some((key, b))
}

/// A config file that selects one of the builtin systems.
pub fn builtin_config(name: &str) -> SystemConfig {
    SystemConfig {
        schema_version: Some(SCHEMA_VERSION),
        name: Some(name.to_string()),
        mode: Some(ModeName::Builtin),
        ..SystemConfig::default()
    }
}

impl SystemConfig {
    pub fn from_json(text: &str, path: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
            path: path.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: shown.clone(),
            source,
        })?;
        Self::from_json(&text, &shown)
    }

    pub fn resolve(&self, overrides: &Overrides) -> Result<Resolved, ConfigError> {
        match self.schema_version {
            Some(SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(ConfigError::field(
                    "schema_version",
                    format!("unsupported version {v}, expected {SCHEMA_VERSION}"),
                ))
            }
            None => return Err(ConfigError::field("schema_version", "missing")),
        }
        let name = self
            .name
            .clone()
            .ok_or_else(|| ConfigError::field("name", "missing"))?;
        let mode = self
            .mode
            .ok_or_else(|| ConfigError::field("mode", "missing"))?;

        let (kind, builtin_key, expressions, domain, default_depth, default_padding) = match mode {
            ModeName::Builtin => {
                let (field, which) = match &self.builtin {
                    Some(b) => ("builtin", b.as_str()),
                    None => ("name", name.as_str()),
                };
                let (key, b) = builtin(which).ok_or_else(|| {
                    ConfigError::field(
                        field,
                        format!(
                            "unknown builtin `{which}`, expected one of {}",
                            BUILTIN_NAMES.join(", ")
                        ),
                    )
                })?;
                for (f, present) in [
                    ("rhs", self.rhs.is_some()),
                    ("update", self.update.is_some()),
                    ("domain", self.domain.is_some()),
                    ("dimension", self.dimension.is_some()),
                ] {
                    if present {
                        return Err(ConfigError::field(f, "not allowed with mode \"builtin\""));
                    }
                }
                (
                    b.kind,
                    Some(key),
                    b.expressions.iter().map(|s| s.to_string()).collect(),
                    b.domain.to_vec(),
                    b.depth,
                    b.padding,
                )
            }
            ModeName::Ode | ModeName::Map => {
                if let Some(b) = &self.builtin {
                    return Err(ConfigError::field(
                        "builtin",
                        format!("`{b}` given but mode is not \"builtin\""),
                    ));
                }
                let (kind, field, other) = if mode == ModeName::Ode {
                    (Kind::Ode, "rhs", ("update", self.update.is_some()))
                } else {
                    (Kind::Map, "update", ("rhs", self.rhs.is_some()))
                };
                if other.1 {
                    return Err(ConfigError::field(
                        other.0,
                        format!("not allowed with mode \"{}\"", kind_str(kind)),
                    ));
                }
                let exprs = if kind == Kind::Ode {
                    &self.rhs
                } else {
                    &self.update
                };
                let exprs = exprs
                    .clone()
                    .ok_or_else(|| ConfigError::field(field, "missing"))?;
                let dim = self
                    .dimension
                    .ok_or_else(|| ConfigError::field("dimension", "missing"))?;
                if dim == 0 {
                    return Err(ConfigError::field("dimension", "must be at least 1"));
                }
                if exprs.len() != dim {
                    return Err(ConfigError::field(
                        field,
                        format!("{} expressions for dimension {dim}", exprs.len()),
                    ));
                }
                let domain = self
                    .domain
                    .as_ref()
                    .ok_or_else(|| ConfigError::field("domain", "missing"))?;
                if domain.len() != dim {
                    return Err(ConfigError::field(
                        "domain",
                        format!("{} intervals for dimension {dim}", domain.len()),
                    ));
                }
                let domain: Vec<(f64, f64)> = domain.iter().map(|&[a, b]| (a, b)).collect();
                (kind, None, exprs, domain, DEFAULT_DEPTH, DEFAULT_PADDING)
            }
        };

        for (i, &(lo, hi)) in domain.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(ConfigError::field(
                    format!("domain[{i}]"),
                    format!("need finite lo < hi, got [{lo}, {hi}]"),
                ));
            }
        }

        let depth = overrides.depth.or(self.depth).unwrap_or(default_depth);
        let transition = TransitionSettings {
            samples_per_axis: overrides
                .samples
                .or(self.samples)
                .unwrap_or(DEFAULT_SAMPLES),
            padding: overrides
                .padding
                .or(self.padding)
                .unwrap_or(default_padding),
        };
        if transition.samples_per_axis == 0 {
            return Err(ConfigError::field("samples", "must be at least 1"));
        }
        if !(transition.padding.is_finite() && transition.padding >= 0.0) {
            return Err(ConfigError::field(
                "padding",
                "must be finite and non-negative",
            ));
        }
        let h = self.h.unwrap_or(DEFAULT_STEP);
        if lyapgen_core::dynamics::steps_per_unit(h).is_none() {
            return Err(ConfigError::field(
                "h",
                format!("{h} is not the reciprocal of a positive integer"),
            ));
        }
        let lift = LiftConfig {
            quad_n: overrides.quad_n.or(self.quad_n).unwrap_or(DEFAULT_QUAD_N),
        };
        lift.validate()
            .map_err(|e| ConfigError::field("quad_n", e.to_string()))?;
        let lattice = self
            .lattice
            .unwrap_or(if domain.len() == 1 { 512 } else { 64 });
        if lattice < 2 {
            return Err(ConfigError::field("lattice", "must be at least 2"));
        }
        let out = overrides
            .out
            .clone()
            .or_else(|| self.out.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(format!("out/{name}")));

        let resolved = Resolved {
            name,
            kind,
            builtin: builtin_key,
            expressions,
            domain,
            depth,
            transition,
            h,
            lift,
            ell_mode: self.ell_mode.map(EllMode::from).unwrap_or_default(),
            lattice,
            out,
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            edges: self.edges.unwrap_or(false),
        };
        // surface expression and grid errors now, with field names
        resolved.system()?;
        resolved.grid()?;
        Ok(resolved)
    }
}

fn kind_str(k: Kind) -> &'static str {
    match k {
        Kind::Ode => "ode",
        Kind::Map => "map",
    }
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        kind_str(self)
    }
}

impl Resolved {
    pub fn dim(&self) -> usize {
        self.domain.len()
    }

    fn expression_field(&self) -> &'static str {
        match self.kind {
            Kind::Ode => "rhs",
            Kind::Map => "update",
        }
    }

    pub fn rect(&self) -> Result<Rect, ConfigError> {
        Rect::new(&self.domain).map_err(|e| ConfigError::field("domain", e.to_string()))
    }

    pub fn system(&self) -> Result<SemiflowSystem, ConfigError> {
        let field = self.expression_field();
        let exprs = self
            .expressions
            .iter()
            .enumerate()
            .map(|(i, src)| {
                parse_expression(src, self.dim()).map_err(|e| {
                    ConfigError::field(format!("{field}[{i}]"), format!("{e} in \"{src}\""))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rect = self.rect()?;
        let sys = match self.kind {
            Kind::Ode => SemiflowSystem::continuous(exprs, rect, self.h),
            Kind::Map => SemiflowSystem::discrete(exprs, rect),
        };
        sys.map_err(|e| ConfigError::field(field, e.to_string()))
    }

    pub fn grid(&self) -> Result<BoxGrid, ConfigError> {
        build_grid(self.rect()?, self.depth).map_err(|e| ConfigError::field("depth", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Resolved, ConfigError> {
        SystemConfig::from_json(s, "t.json")?.resolve(&Overrides::default())
    }

    #[test]
    fn builtin_by_name() {
        let r = parse(r#"{"schema_version":1,"name":"doublewell","mode":"builtin"}"#).unwrap();
        assert_eq!(r.kind, Kind::Ode);
        assert_eq!(r.depth, 8);
        assert_eq!(r.transition.samples_per_axis, 3);
        assert_eq!(r.lift.quad_n, 256);
        assert_eq!(r.out, PathBuf::from("out/doublewell"));
    }

    #[test]
    fn builtin_field_overrides_name() {
        let r = parse(r#"{"schema_version":1,"name":"w","mode":"builtin","builtin":"halfmap"}"#)
            .unwrap();
        assert_eq!(r.kind, Kind::Map);
        assert_eq!(r.builtin, Some("halfmap"));
    }

    #[test]
    fn unknown_builtin() {
        let e = parse(r#"{"schema_version":1,"name":"lorenz","mode":"builtin"}"#).unwrap_err();
        assert!(e.to_string().contains("unknown builtin `lorenz`"), "{e}");
    }

    #[test]
    fn expression_count_must_match_dimension() {
        let e = parse(
            r#"{"schema_version":1,"name":"a","mode":"ode","dimension":2,
                "rhs":["x1"],"domain":[[0,1],[0,1]]}"#,
        )
        .unwrap_err();
        assert!(e.to_string().starts_with("field `rhs`"), "{e}");
    }

    #[test]
    fn malformed_expression_cites_offset() {
        let e = parse(
            r#"{"schema_version":1,"name":"a","mode":"ode","dimension":1,
                "rhs":["x1 * (2 +"],"domain":[[0,1]]}"#,
        )
        .unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("rhs[0]") && msg.contains("offset"), "{msg}");
    }

    #[test]
    fn json_errors_have_line_and_column() {
        let e = parse("{\n  \"schema_version\": 1,\n  \"nmae\": \"x\"\n}").unwrap_err();
        match e {
            ConfigError::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn overrides_win() {
        let cfg = SystemConfig::from_json(
            r#"{"schema_version":1,"name":"linear1d","mode":"builtin","depth":5}"#,
            "t",
        )
        .unwrap();
        let r = cfg
            .resolve(&Overrides {
                depth: Some(4),
                samples: Some(2),
                padding: Some(0.0),
                quad_n: Some(64),
                out: Some("x".into()),
            })
            .unwrap();
        assert_eq!(
            (
                r.depth,
                r.transition.samples_per_axis,
                r.transition.padding,
                r.lift.quad_n
            ),
            (4, 2, 0.0, 64)
        );
        assert_eq!(r.out, PathBuf::from("x"));
    }

    #[test]
    fn bad_values_are_rejected() {
        for (extra, field) in [
            (r#","h":0.3"#, "h"),
            (r#","quad_n":4"#, "quad_n"),
            (r#","depth":40"#, "depth"),
            (r#","padding":-1"#, "padding"),
            (r#","samples":0"#, "samples"),
            (r#","lattice":1"#, "lattice"),
        ] {
            let src =
                format!(r#"{{"name":"linear1d","mode":"builtin","schema_version":1{extra}}}"#);
            match parse(&src) {
                Err(ConfigError::Field { field: f, .. }) => assert_eq!(f, field, "{src}"),
                other => panic!("{src}: {other:?}"),
            }
        }
        let e = parse(r#"{"name":"linear1d","mode":"builtin","schema_version":2}"#).unwrap_err();
        assert!(e.to_string().contains("schema_version"), "{e}");
        let e = parse(r#"{"name":"linear1d","mode":"builtin","rhs":["x1"],"schema_version":1}"#)
            .unwrap_err();
        assert!(e.to_string().contains("`rhs`"), "{e}");
    }

    #[test]
    fn map_mode_rejects_rhs() {
        let e = parse(
            r#"{"schema_version":1,"name":"m","mode":"map","dimension":1,
                "update":["x1/2"],"rhs":["x1"],"domain":[[-1,1]]}"#,
        )
        .unwrap_err();
        assert!(e.to_string().starts_with("field `rhs`"), "{e}");
    }
}
