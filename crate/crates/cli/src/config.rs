//! Experiment configuration: the JSON file format and its resolution into
//! concrete bundles, operators, weights and functions.

use std::fs;
use std::path::{Path, PathBuf};

use erglab_core::engine::CheckKind;
use erglab_core::rng::{derive_seed, stream};
use erglab_core::{Bundle, BundleFunction, FiberedOperator, OperatorKind, WeightSequence, WeightSpec};
use serde::{Deserialize, Serialize};

use crate::ConfigError;

/// Default dyadic horizon cap, `2^14`.
pub const DEFAULT_HORIZON_MAX: u64 = 1 << 14;

/// A config file as written by the user.
///
/// ```json
/// {"seed": 7, "bundle": {"uniform": [2, 3]}, "operators": [{"kind": "identity"}],
///  "p": 2.0, "horizons": {"max": 1024}, "checks": ["cesaro"]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub bundle: BundleSource,
    pub operators: Vec<OperatorSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<FunctionSource>,
    pub p: f64,
    #[serde(default = "one")]
    pub d: usize,
    #[serde(default)]
    pub horizons: Horizons,
    pub checks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BundleSource {
    File { file: PathBuf },
    /// Random masses with the given atom counts.
    Random { random: Vec<usize> },
    /// Unit base masses and uniform fiber masses.
    Uniform { uniform: Vec<usize> },
    Inline(Bundle),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorSource {
    File { file: PathBuf },
    Kind(OperatorKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSource {
    File { file: PathBuf },
    Spec(WeightSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionSource {
    File { file: PathBuf },
    Random { random: Range },
    Inline { values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Range {
    fn default() -> Self {
        Self { lo: -1.0, hi: 1.0 }
    }
}

/// Dyadic schedule spec; each check picks its own dyadic schedule up to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizons {
    pub max: u64,
}

impl Default for Horizons {
    fn default() -> Self {
        Self { max: DEFAULT_HORIZON_MAX }
    }
}

impl ExperimentConfig {
    /// Parses a config; the error names the path of the offending field.
    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(s);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.to_string();
            // serde reports a missing field at the parent's path; name the field itself.
            let field = match msg.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
                Some(name) if path == "." => name.to_string(),
                Some(name) => format!("{path}.{name}"),
                None => path,
            };
            ConfigError::new(field, msg)
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// A requested check with its verdict name.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRequest {
    pub kind: CheckKind,
    pub label: String,
}

/// A config with every source loaded and every random draw made.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub seed: u64,
    pub bundle: Bundle,
    pub operators: Vec<FiberedOperator>,
    pub weight: Option<WeightSequence>,
    pub f: BundleFunction,
    pub p: f64,
    pub d: usize,
    pub horizon_max: u64,
    pub checks: Vec<CheckRequest>,
    pub tail_tolerance: Option<f64>,
}

fn read(base: &Path, file: &Path, field: &str) -> Result<String, ConfigError> {
    let path = base.join(file);
    fs::read_to_string(&path).map_err(|e| ConfigError::new(field, format!("{}: {e}", path.display())))
}

fn field_err(field: impl Into<String>) -> impl FnOnce(erglab_core::Error) -> ConfigError {
    let field = field.into();
    move |e| ConfigError::new(field, e.to_string())
}

impl Experiment {
    /// Resolves `cfg`; relative file references are taken from `base`.
    pub fn resolve(cfg: &ExperimentConfig, base: &Path) -> Result<Self, ConfigError> {
        if !(cfg.p >= 1.0) {
            return Err(ConfigError::new("p", format!("p = {} must be at least 1", cfg.p)));
        }
        if cfg.d == 0 {
            return Err(ConfigError::new("d", "d must be at least 1"));
        }
        if cfg.horizons.max < 2 {
            return Err(ConfigError::new("horizons.max", "horizon cap must be at least 2"));
        }
        if let Some(t) = cfg.tail_tolerance {
            if !(t >= 0.0) {
                return Err(ConfigError::new("tail_tolerance", format!("{t} is not a nonnegative number")));
            }
        }
        let bundle = match &cfg.bundle {
            BundleSource::File { file } => Bundle::from_json(&read(base, file, "bundle.file")?).map_err(field_err("bundle.file"))?,
            BundleSource::Random { random } => {
                Bundle::random(&mut stream(cfg.seed, "cli/bundle"), random).map_err(field_err("bundle.random"))?
            }
            BundleSource::Uniform { uniform } => Bundle::uniform(uniform).map_err(field_err("bundle.uniform"))?,
            BundleSource::Inline(b) => b.clone(),
        };

        let checks = parse_checks(cfg)?;
        let needs_d = checks.iter().any(|c| c.kind.is_multiparameter());
        let count = if needs_d { cfg.d } else { 1 };
        if cfg.operators.is_empty() {
            return Err(ConfigError::new("operators", "at least one operator is needed"));
        }
        if cfg.operators.len() != 1 && cfg.operators.len() != cfg.d {
            return Err(ConfigError::new(
                "operators",
                format!("{} operators given; expected 1 or d = {}", cfg.operators.len(), cfg.d),
            ));
        }
        let count = count.max(cfg.operators.len());
        let mut operators = Vec::with_capacity(count);
        for i in 0..count {
            let j = if cfg.operators.len() == 1 { 0 } else { i };
            let field = format!("operators[{j}]");
            let t = match &cfg.operators[j] {
                OperatorSource::File { file } => {
                    FiberedOperator::from_json(&read(base, file, &field)?, &bundle).map_err(field_err(&field))?
                }
                OperatorSource::Kind(kind) => {
                    let seed = derive_seed(cfg.seed, &format!("cli/operator{i}"));
                    erglab_core::generate(kind, seed, &bundle).map_err(field_err(&field))?
                }
            };
            operators.push(t);
        }

        let weight = match &cfg.weight {
            None => None,
            Some(WeightSource::Spec(spec)) => Some(spec.build().map_err(field_err("weight"))?),
            Some(WeightSource::File { file }) => {
                let spec: WeightSpec = serde_json::from_str(&read(base, file, "weight.file")?)
                    .map_err(|e| ConfigError::new("weight.file", e.to_string()))?;
                Some(spec.build().map_err(field_err("weight.file"))?)
            }
        };

        let f = match cfg.function.as_ref().unwrap_or(&FunctionSource::Random { random: Range::default() }) {
            FunctionSource::File { file } => {
                let f = BundleFunction::from_json(&read(base, file, "function.file")?).map_err(field_err("function.file"))?;
                f.check_shape(&bundle).map_err(field_err("function.file"))?;
                f
            }
            FunctionSource::Random { random } => {
                if !(random.lo < random.hi) || !random.lo.is_finite() || !random.hi.is_finite() {
                    return Err(ConfigError::new("function.random", "need finite lo < hi"));
                }
                BundleFunction::random(&bundle, &mut stream(cfg.seed, "cli/function"), random.lo, random.hi)
            }
            FunctionSource::Inline { values } => {
                BundleFunction::new(&bundle, values.clone()).map_err(field_err("function.values"))?
            }
        };

        Ok(Self {
            seed: cfg.seed,
            bundle,
            operators,
            weight,
            f,
            p: cfg.p,
            d: cfg.d,
            horizon_max: cfg.horizons.max,
            checks,
            tail_tolerance: cfg.tail_tolerance,
        })
    }
}

fn parse_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRequest>, ConfigError> {
    if cfg.checks.is_empty() {
        return Err(ConfigError::new("checks", "no checks requested"));
    }
    let mut out: Vec<CheckRequest> = Vec::with_capacity(cfg.checks.len());
    for (i, name) in cfg.checks.iter().enumerate() {
        let field = format!("checks[{i}]");
        let (kind, d, p) = CheckKind::parse_label(name).map_err(field_err(&field))?;
        if let Some(d) = d.filter(|&d| d != cfg.d) {
            return Err(ConfigError::new(field, format!("{name:?} asks for d = {d} but the config has d = {}", cfg.d)));
        }
        if let Some(p) = p.filter(|&p| p != cfg.p) {
            return Err(ConfigError::new(field, format!("{name:?} asks for p = {p} but the config has p = {}", cfg.p)));
        }
        let label = kind.label(cfg.p, if kind.is_multiparameter() { cfg.d } else { 1 });
        if out.iter().any(|c| c.label == label) {
            return Err(ConfigError::new(field, format!("check {label} requested twice")));
        }
        out.push(CheckRequest { kind, label });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"seed": 1, "bundle": {"uniform": [2]}, "operators": [{"kind": "identity"}],
        "p": 2.0, "checks": ["cesaro"]}"#;

    #[test]
    fn minimal_config_resolves() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.horizons.max, DEFAULT_HORIZON_MAX);
        let e = Experiment::resolve(&cfg, Path::new(".")).unwrap();
        assert_eq!(e.operators.len(), 1);
        assert_eq!(e.checks[0].label, "cesaro-p2");
    }

    #[test]
    fn missing_field_is_named() {
        let e = ExperimentConfig::from_json(&MINIMAL.replace(r#""p": 2.0,"#, "")).unwrap_err();
        assert_eq!(e.field, "p");
    }

    #[test]
    fn nested_type_error_is_located() {
        let e = ExperimentConfig::from_json(&MINIMAL.replace(r#""p": 2.0"#, r#""p": 2.0, "horizons": {"max": -3}"#))
            .unwrap_err();
        assert_eq!(e.field, "horizons.max");
        let e = ExperimentConfig::from_json(&MINIMAL.replace("seed", "sede")).unwrap_err();
        assert!(e.message.contains("sede"), "{e}");
    }

    #[test]
    fn check_names_must_agree_with_p_and_d() {
        let cfg = ExperimentConfig::from_json(&MINIMAL.replace(r#"["cesaro"]"#, r#"["cesaro", "cesaro-p4"]"#)).unwrap();
        assert_eq!(Experiment::resolve(&cfg, Path::new(".")).unwrap_err().field, "checks[1]");
        let cfg = ExperimentConfig::from_json(&MINIMAL.replace(r#"["cesaro"]"#, r#"["cesaro", "cesaro-p2"]"#)).unwrap();
        assert!(Experiment::resolve(&cfg, Path::new(".")).unwrap_err().message.contains("twice"));
        let cfg = ExperimentConfig::from_json(&MINIMAL.replace(r#"["cesaro"]"#, r#"["ergodic"]"#)).unwrap();
        assert_eq!(Experiment::resolve(&cfg, Path::new(".")).unwrap_err().field, "checks[0]");
    }

    #[test]
    fn one_operator_spec_is_drawn_per_axis() {
        let s = MINIMAL.replace(r#"{"kind": "identity"}"#, r#"{"kind": "random_strict"}"#).replace(
            r#""checks": ["cesaro"]"#,
            r#""d": 2, "checks": ["multi"], "bundle": {"uniform": [3]}"#,
        );
        let s = s.replace(r#""bundle": {"uniform": [2]}, "#, "");
        let e = Experiment::resolve(&ExperimentConfig::from_json(&s).unwrap(), Path::new(".")).unwrap();
        assert_eq!(e.operators.len(), 2);
        assert_ne!(e.operators[0], e.operators[1]);
        let again = Experiment::resolve(&ExperimentConfig::from_json(&s).unwrap(), Path::new(".")).unwrap();
        assert_eq!(e.operators, again.operators);
        assert_eq!(e.f, again.f);
    }
}
