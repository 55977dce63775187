//! The `validate`, `run` and `gen` commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use erglab_core::engine::{theorem_check, trace_header, CheckInputs, CheckKind, OracleConfig, Verdict};
use erglab_core::rng::stream;
use erglab_core::{
    generate, validate as validate_operator, Bundle, BundleFunction, OperatorKind, TrigTerm, ValidationMode,
    ValidationReport, WeightSpec,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Experiment;
use crate::output::{csv_bytes, json_bytes, write_atomic};
use crate::CliError;

/// Certificate report for every operator in an experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationSummary {
    pub valid: bool,
    pub mode: ValidationMode,
    pub base_points: usize,
    pub atoms: Vec<usize>,
    pub operators: Vec<ValidationReport>,
    pub weight_bound: Option<f64>,
    pub weight_dim: Option<usize>,
}

/// Validates every operator: the full L_1–L_∞ certificate when any
/// requested check needs it, otherwise positivity, `T𝟙 ≤ 𝟙` and the `L_p` probe.
pub fn validate(exp: &Experiment) -> Result<ValidationSummary, CliError> {
    let mode = if exp.checks.iter().all(|c| c.kind == CheckKind::Cesaro) {
        ValidationMode::POnly
    } else {
        ValidationMode::DunfordSchwartz
    };
    let operators = exp
        .operators
        .iter()
        .map(|t| validate_operator(t, &exp.bundle, exp.p, mode))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ValidationSummary {
        valid: operators.iter().all(|r| r.valid),
        mode,
        base_points: exp.bundle.base_points(),
        atoms: exp.bundle.atom_counts(),
        operators,
        weight_bound: exp.weight.as_ref().map(|w| w.bound()),
        weight_dim: exp.weight.as_ref().map(|w| w.dim()),
    })
}

pub fn write_validation(summary: &ValidationSummary, out: &Path) -> Result<PathBuf, CliError> {
    let path = out.join("validation.json");
    write_atomic(&path, &json_bytes(summary))?;
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct RunSettings {
    pub out: PathBuf,
    /// Worker cap; `None` lets the pool choose.
    pub threads: Option<usize>,
    pub oracle: OracleConfig,
}

impl RunSettings {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self { out: out.into(), threads: None, oracle: OracleConfig::default() }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub validation: ValidationSummary,
    pub verdicts: Vec<Verdict>,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Runs every requested check and writes `validation.json`, one
/// `<check>.csv` trace per check and `verdicts.json`.
pub fn run(exp: &Experiment, settings: &RunSettings) -> Result<RunReport, CliError> {
    let validation = validate(exp)?;
    let workers = settings.threads.map_or(0, |t| t.min(exp.checks.len()).max(1));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let verdicts: Vec<Verdict> = pool.install(|| {
        exp.checks
            .par_iter()
            .map(|c| {
                let inputs = CheckInputs {
                    bundle: &exp.bundle,
                    operators: &exp.operators,
                    f: &exp.f,
                    weight: exp.weight.as_ref(),
                    p: exp.p,
                    horizon_max: exp.horizon_max,
                    tail_tolerance: exp.tail_tolerance,
                    seed: exp.seed,
                    oracle: settings.oracle.clone(),
                };
                theorem_check(c.kind, &inputs)
            })
            .collect()
    });

    let mut files = vec![write_validation(&validation, &settings.out)?];
    for (c, v) in exp.checks.iter().zip(&verdicts) {
        let bytes = match &v.trace {
            Some(t) => csv_bytes(&t.csv_header(), &t.csv_records()),
            None => {
                let d = if c.kind.is_multiparameter() { exp.operators.len() } else { 1 };
                csv_bytes(&trace_header(d), &[])
            }
        };
        let path = settings.out.join(format!("{}.csv", c.label));
        write_atomic(&path, &bytes)?;
        files.push(path);
    }
    let path = settings.out.join("verdicts.json");
    write_atomic(&path, &json_bytes(&verdicts))?;
    files.push(path);
    Ok(RunReport { validation, verdicts, files })
}

/// What `erglab gen` can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GenKind {
    Bundle,
    Operator,
    #[value(alias = "weight")]
    Weights,
    Function,
}

#[derive(Debug, Clone)]
pub struct GenOutput {
    pub file_name: &'static str,
    pub contents: Vec<u8>,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

struct Params {
    map: BTreeMap<String, String>,
}

impl Params {
    fn parse(raw: &[String], allowed: &[&str]) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for item in raw {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("parameter {item:?} is not key=value")))?;
            if !allowed.contains(&k) {
                return Err(CliError::Usage(format!("unknown parameter {k:?}; expected one of {}", allowed.join(", "))));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::Usage(format!("parameter {k:?} given twice")));
            }
        }
        Ok(Self { map })
    }

    fn get(&self, k: &str) -> Option<&str> {
        self.map.get(k).map(String::as_str)
    }

    fn require(&self, k: &str) -> Result<&str, CliError> {
        self.get(k).ok_or_else(|| CliError::Usage(format!("missing parameter {k}=...")))
    }

    fn num<T: FromStr>(&self, k: &str, default: T) -> Result<T, CliError> {
        match self.get(k) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| CliError::Usage(format!("{k}={v} is not a valid number"))),
        }
    }

    /// `2,3,4`, `(2,3,4)` or `[2,3,4]`.
    fn list<T: FromStr>(&self, k: &str) -> Result<Option<Vec<T>>, CliError> {
        let Some(v) = self.get(k) else { return Ok(None) };
        let inner = v.trim().trim_start_matches(['(', '[']).trim_end_matches([')', ']']);
        inner
            .split(',')
            .map(|x| x.trim().parse().map_err(|_| CliError::Usage(format!("{k}={v}: cannot parse {x:?}"))))
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    fn freqs(&self) -> Result<Vec<f64>, CliError> {
        match self.require("freq")? {
            "golden" | "golden-ratio" => Ok(vec![GOLDEN]),
            _ => Ok(self.list("freq")?.expect("present")),
        }
    }

    /// The bundle to shape a generated object: `bundle=FILE` or uniform `fibers=...`.
    fn bundle(&self) -> Result<Bundle, CliError> {
        match (self.get("bundle"), self.list::<usize>("fibers")?) {
            (Some(file), None) => {
                let text = std::fs::read_to_string(file).map_err(|e| CliError::Usage(format!("bundle={file}: {e}")))?;
                Ok(Bundle::from_json(&text)?)
            }
            (None, Some(atoms)) => Ok(Bundle::uniform(&atoms)?),
            _ => Err(CliError::Usage("give exactly one of bundle=FILE or fibers=...".into())),
        }
    }
}

fn text(s: String) -> Vec<u8> {
    let mut b = s.into_bytes();
    b.push(b'\n');
    b
}

/// Emits a bundle, operator, weight or function file. Deterministic in `seed`.
pub fn gen(kind: GenKind, seed: u64, raw: &[String]) -> Result<GenOutput, CliError> {
    match kind {
        GenKind::Bundle => {
            let p = Params::parse(raw, &["B", "fibers", "masses"])?;
            let atoms: Vec<usize> = p.list("fibers")?.ok_or_else(|| CliError::Usage("missing parameter fibers=...".into()))?;
            if let Some(b) = p.get("B") {
                if b.parse::<usize>().ok() != Some(atoms.len()) {
                    return Err(CliError::Usage(format!("B={b} but fibers lists {} fibers", atoms.len())));
                }
            }
            let b = match p.get("masses").unwrap_or("random") {
                "random" => Bundle::random(&mut stream(seed, "cli/gen/bundle"), &atoms)?,
                "uniform" => Bundle::uniform(&atoms)?,
                m => return Err(CliError::Usage(format!("masses={m}: expected random or uniform"))),
            };
            Ok(GenOutput { file_name: "bundle.json", contents: text(b.to_json()?) })
        }
        GenKind::Operator => {
            let p = Params::parse(raw, &["kind", "bundle", "fibers"])?;
            let kind = match p.require("kind")? {
                "identity" => OperatorKind::Identity,
                "cyclic" => OperatorKind::Cyclic,
                "random_markov" | "random-markov" => OperatorKind::RandomMarkov,
                "random_strict" | "random-strict" => OperatorKind::RandomStrict,
                k => return Err(CliError::Usage(format!("kind={k}: expected identity, cyclic, random_markov or random_strict"))),
            };
            let t = generate(&kind, seed, &p.bundle()?)?;
            Ok(GenOutput { file_name: "operator.json", contents: text(t.to_json()?) })
        }
        GenKind::Weights => {
            let p = Params::parse(raw, &["kind", "freq", "amp", "phase", "value", "dim", "step", "offset", "len"])?;
            let spec = match p.require("kind")? {
                "trig" => {
                    let freq = p.freqs()?;
                    let phase = p.list("phase")?.unwrap_or_else(|| vec![0.0; freq.len()]);
                    if phase.len() != freq.len() {
                        return Err(CliError::Usage("phase and freq need the same length".into()));
                    }
                    WeightSpec::Trig { terms: vec![TrigTerm::new(p.num("amp", 1.0)?, freq, phase)] }
                }
                "constant" => WeightSpec::Constant { value: p.num("value", 1.0)?, dim: p.num("dim", 1)? },
                "subsequence" => {
                    let step: u64 = p.num("step", 2)?;
                    let offset: u64 = p.num("offset", 0)?;
                    let len: u64 = p.num("len", 1 << 14)?;
                    WeightSpec::Subsequence { j: (1..=len).map(|k| step * k + offset).collect() }
                }
                k => return Err(CliError::Usage(format!("kind={k}: expected trig, constant or subsequence"))),
            };
            spec.build()?;
            let json = serde_json::to_string_pretty(&spec).map_err(erglab_core::Error::from)?;
            Ok(GenOutput { file_name: "weights.json", contents: text(json) })
        }
        GenKind::Function => {
            let p = Params::parse(raw, &["bundle", "fibers", "lo", "hi"])?;
            let (lo, hi): (f64, f64) = (p.num("lo", -1.0)?, p.num("hi", 1.0)?);
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(CliError::Usage("need finite lo < hi".into()));
            }
            let f = BundleFunction::random(&p.bundle()?, &mut stream(seed, "cli/gen/function"), lo, hi);
            Ok(GenOutput { file_name: "function.json", contents: text(f.to_json()?) })
        }
    }
}
