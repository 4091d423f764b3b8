//! Run configuration files.
//!
//! Configs are TOML documents. Grammar, version 1:
//!
//! ```toml
//! schema_version = 1      # required, must be 1
//! seed = 0                # parameter init and minibatch order (default 0)
//! t_max = 2000            # steps per optimizer run, >= 1
//! cadence = 10            # record every `cadence` steps (and the last step)
//! threshold = 1e-3        # optional loss threshold for steps-to-threshold
//! output = "out/run"      # optional default output directory
//!
//! [problem]
//! kind = "rosenbrock"     # "rosenbrock" | "quadratic" | "mlp"
//! start = [-1.5, 2.0]
//!
//! # kind = "quadratic": spectrum = [..], start = [..]
//! # kind = "mlp": widths = [..], activation = "tanh" | "relu",
//! #               label_smoothing = 0.1, batch_size = 64 (0 = full batch),
//! #               [problem.dataset] n, d, classes, separation, seed (default: run seed)
//!
//! [[optimizers]]
//! preset = "adamw"        # "adamw" | "ranger21"
//! name = "adamw"          # optional, defaults to the preset name; must be unique
//! lr = 3e-3               # optional, default 3e-3
//! weight_decay = 1e-4
//! beta1 = 0.9
//! beta2 = 0.999
//! eps = 1e-8
//!
//! [[optimizers]]
//! preset = "ranger21"
//! # every adamw key plus: beta0, eps_clipping, tau, k_lookahead,
//! # beta_lookahead, t_warmup, t_warmdown and a [optimizers.toggles] table
//! # with agc, centralization, pnm, norm_loss, stable_decay, warmup,
//! # warmdown, lookahead (all default true)
//! ```
//!
//! Unspecified hyperparameters take the Ranger21 defaults. Unknown keys are
//! rejected with their line and column.

use std::collections::HashSet;
use std::path::PathBuf;

use ranger21::problems::Activation;
use ranger21::{AdamWConfig, Preset, Ranger21Config, Toggles};
use serde::Deserialize;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_LR: f64 = 3e-3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Syntax(String),
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub t_max: u64,
    pub cadence: u64,
    pub threshold: Option<f64>,
    pub output: Option<PathBuf>,
    pub problem: ProblemSpec,
    pub optimizers: Vec<OptimizerSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Rosenbrock {
        start: [f64; 2],
    },
    Quadratic {
        spectrum: Vec<f64>,
        start: Vec<f64>,
    },
    Mlp {
        widths: Vec<usize>,
        activation: Activation,
        label_smoothing: f64,
        batch_size: usize,
        dataset: BlobsSpec,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlobsSpec {
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    pub separation: f64,
    /// Falls back to the run seed when absent.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSpec {
    pub name: String,
    pub preset: Preset,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    #[serde(default)]
    seed: u64,
    t_max: i64,
    #[serde(default = "default_cadence")]
    cadence: i64,
    threshold: Option<f64>,
    output: Option<PathBuf>,
    problem: Option<RawProblem>,
    #[serde(default)]
    optimizers: Vec<RawOptimizer>,
}

fn default_cadence() -> i64 {
    1
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawProblem {
    Rosenbrock {
        start: [f64; 2],
    },
    Quadratic {
        spectrum: Vec<f64>,
        start: Vec<f64>,
    },
    Mlp {
        widths: Vec<usize>,
        #[serde(default = "default_activation")]
        activation: Activation,
        #[serde(default = "default_smoothing")]
        label_smoothing: f64,
        #[serde(default)]
        batch_size: usize,
        dataset: RawBlobs,
    },
}

fn default_activation() -> Activation {
    Activation::Tanh
}

fn default_smoothing() -> f64 {
    0.1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlobs {
    n: usize,
    d: usize,
    classes: usize,
    separation: f64,
    seed: Option<u64>,
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum PresetName {
    AdamW,
    Ranger21,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimizer {
    preset: PresetName,
    name: Option<String>,
    lr: Option<f64>,
    weight_decay: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    eps: Option<f64>,
    beta0: Option<f64>,
    eps_clipping: Option<f64>,
    tau: Option<f64>,
    k_lookahead: Option<i64>,
    beta_lookahead: Option<f64>,
    t_warmup: Option<i64>,
    t_warmdown: Option<i64>,
    toggles: Option<Toggles>,
}

fn positive_int(field: &str, value: i64) -> Result<u64, ConfigError> {
    if value >= 1 {
        Ok(value as u64)
    } else {
        Err(invalid(field, format!("must be >= 1, got {value}")))
    }
}

impl RawOptimizer {
    fn ranger_only_keys(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        let mut check = |present: bool, key: &'static str| {
            if present {
                keys.push(key);
            }
        };
        check(self.beta0.is_some(), "beta0");
        check(self.eps_clipping.is_some(), "eps_clipping");
        check(self.tau.is_some(), "tau");
        check(self.k_lookahead.is_some(), "k_lookahead");
        check(self.beta_lookahead.is_some(), "beta_lookahead");
        check(self.t_warmup.is_some(), "t_warmup");
        check(self.t_warmdown.is_some(), "t_warmdown");
        check(self.toggles.is_some(), "toggles");
        keys
    }

    fn resolve(&self, path: &str, t_max: u64) -> Result<Preset, ConfigError> {
        let preset = match self.preset {
            PresetName::AdamW => {
                if let Some(key) = self.ranger_only_keys().first() {
                    return Err(invalid(
                        format!("{path}.{key}"),
                        "only applies to the ranger21 preset",
                    ));
                }
                let d = AdamWConfig::default();
                Preset::AdamW(AdamWConfig {
                    lr: self.lr.unwrap_or(DEFAULT_LR),
                    weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
                    beta1: self.beta1.unwrap_or(d.beta1),
                    beta2: self.beta2.unwrap_or(d.beta2),
                    eps: self.eps.unwrap_or(d.eps),
                })
            }
            PresetName::Ranger21 => {
                let mut c = Ranger21Config::new(self.lr.unwrap_or(DEFAULT_LR), t_max);
                if let Some(v) = self.weight_decay {
                    c.weight_decay = v;
                }
                if let Some(v) = self.beta0 {
                    c.moments.beta0 = v;
                }
                if let Some(v) = self.beta1 {
                    c.moments.beta1 = v;
                }
                if let Some(v) = self.beta2 {
                    c.moments.beta2 = v;
                }
                if let Some(v) = self.eps {
                    c.moments.eps = v;
                }
                if let Some(v) = self.eps_clipping {
                    c.clip.eps_clipping = v;
                }
                if let Some(v) = self.tau {
                    c.clip.tau = v;
                }
                if let Some(v) = self.k_lookahead {
                    c.k_lookahead = positive_int(&format!("{path}.k_lookahead"), v)?;
                }
                if let Some(v) = self.beta_lookahead {
                    c.beta_lookahead = v;
                }
                if let Some(v) = self.t_warmup {
                    c.t_warmup = positive_int(&format!("{path}.t_warmup"), v)?;
                }
                if let Some(v) = self.t_warmdown {
                    c.t_warmdown = positive_int(&format!("{path}.t_warmdown"), v)?;
                }
                if let Some(t) = self.toggles {
                    c.toggles = t;
                }
                Preset::Ranger21(c)
            }
        };
        preset.validate().map_err(|e| match e {
            ranger21::Error::InvalidConfig { field, reason } => {
                invalid(format!("{path}.{field}"), reason)
            }
            other => invalid(path, other.to_string()),
        })?;
        Ok(preset)
    }
}

impl RawProblem {
    fn resolve(self) -> Result<ProblemSpec, ConfigError> {
        Ok(match self {
            RawProblem::Rosenbrock { start } => {
                if start.iter().any(|x| !x.is_finite()) {
                    return Err(invalid("problem.start", "must be finite"));
                }
                ProblemSpec::Rosenbrock { start }
            }
            RawProblem::Quadratic { spectrum, start } => {
                if spectrum.is_empty() || spectrum.len() != start.len() {
                    return Err(invalid(
                        "problem.spectrum",
                        "must be non-empty and as long as problem.start",
                    ));
                }
                if spectrum.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                    return Err(invalid("problem.spectrum", "entries must be positive"));
                }
                if start.iter().any(|x| !x.is_finite()) {
                    return Err(invalid("problem.start", "must be finite"));
                }
                ProblemSpec::Quadratic { spectrum, start }
            }
            RawProblem::Mlp {
                widths,
                activation,
                label_smoothing,
                batch_size,
                dataset,
            } => {
                if widths.len() < 2 || widths.contains(&0) {
                    return Err(invalid(
                        "problem.widths",
                        "need at least input and output widths, all >= 1",
                    ));
                }
                if !(0.0..1.0).contains(&label_smoothing) {
                    return Err(invalid(
                        "problem.label_smoothing",
                        format!("must be in [0, 1), got {label_smoothing}"),
                    ));
                }
                if dataset.classes < 2 || dataset.n < dataset.classes {
                    return Err(invalid("problem.dataset.classes", "need n >= classes >= 2"));
                }
                if dataset.d != widths[0] {
                    return Err(invalid(
                        "problem.dataset.d",
                        format!("must equal the input width {}", widths[0]),
                    ));
                }
                if *widths.last().unwrap() != dataset.classes {
                    return Err(invalid(
                        "problem.widths",
                        format!(
                            "output width must equal dataset.classes = {}",
                            dataset.classes
                        ),
                    ));
                }
                if !(dataset.separation >= 0.0 && dataset.separation.is_finite()) {
                    return Err(invalid(
                        "problem.dataset.separation",
                        "must be finite and >= 0",
                    ));
                }
                ProblemSpec::Mlp {
                    widths,
                    activation,
                    label_smoothing,
                    batch_size,
                    dataset: BlobsSpec {
                        n: dataset.n,
                        d: dataset.d,
                        classes: dataset.classes,
                        separation: dataset.separation,
                        seed: dataset.seed,
                    },
                }
            }
        })
    }
}

/// Parse and fully resolve a config document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    if raw.schema_version != SCHEMA_VERSION {
        return Err(invalid(
            "schema_version",
            format!(
                "unsupported version {}, expected {SCHEMA_VERSION}",
                raw.schema_version
            ),
        ));
    }
    let t_max = positive_int("t_max", raw.t_max)?;
    let cadence = positive_int("cadence", raw.cadence)?;
    if let Some(th) = raw.threshold {
        if !th.is_finite() {
            return Err(invalid("threshold", "must be finite"));
        }
    }
    let problem = raw
        .problem
        .ok_or_else(|| invalid("problem", "missing [problem] table"))?
        .resolve()?;
    if raw.optimizers.is_empty() {
        return Err(invalid(
            "optimizers",
            "at least one [[optimizers]] entry is required",
        ));
    }
    let mut names = HashSet::new();
    let mut optimizers = Vec::with_capacity(raw.optimizers.len());
    for (i, o) in raw.optimizers.iter().enumerate() {
        let path = format!("optimizers[{i}]");
        let preset = o.resolve(&path, t_max)?;
        let name = o.name.clone().unwrap_or_else(|| match o.preset {
            PresetName::AdamW => "adamw".into(),
            PresetName::Ranger21 => "ranger21".into(),
        });
        if name.is_empty() || name.contains([',', '"', '\n']) {
            return Err(invalid(
                format!("{path}.name"),
                "must be non-empty without commas or quotes",
            ));
        }
        if !names.insert(name.clone()) {
            return Err(invalid(
                format!("{path}.name"),
                format!("duplicate optimizer name `{name}`"),
            ));
        }
        optimizers.push(OptimizerSpec { name, preset });
    }
    Ok(RunConfig {
        seed: raw.seed,
        t_max,
        cadence,
        threshold: raw.threshold,
        output: raw.output,
        problem,
        optimizers,
    })
}

impl RunConfig {
    /// Human-readable warnings about legal but unusual settings.
    pub fn warnings(&self) -> Vec<String> {
        self.optimizers
            .iter()
            .filter_map(|o| match &o.preset {
                Preset::Ranger21(c) if c.schedule().phases_overlap() => Some(format!(
                    "optimizer `{}`: t_warmup ({}) + t_warmdown ({}) exceeds t_max ({}); there is no flat phase",
                    o.name, c.t_warmup, c.t_warmdown, c.t_max
                )),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
schema_version = 1
t_max = 1000

[problem]
kind = "rosenbrock"
start = [-1.5, 2.0]
"#;

    fn with(extra: &str) -> String {
        format!("{BASE}\n{extra}")
    }

    #[test]
    fn empty_overrides_take_defaults() {
        let cfg = parse_config(&with("[[optimizers]]\npreset = \"ranger21\"\n")).unwrap();
        let Preset::Ranger21(c) = cfg.optimizers[0].preset else {
            panic!("expected ranger21");
        };
        assert_eq!(c.weight_decay, 1e-4);
        assert_eq!(
            (
                c.moments.beta0,
                c.moments.beta1,
                c.moments.beta2,
                c.beta_lookahead
            ),
            (0.9, 0.9, 0.999, 0.5)
        );
        assert_eq!(
            (c.moments.eps, c.clip.eps_clipping, c.clip.tau),
            (1e-8, 1e-3, 1e-2)
        );
        assert_eq!(c.k_lookahead, 5);
        assert_eq!((c.t_warmup, c.t_warmdown), (220, 280));
        assert_eq!(c.toggles, Toggles::ALL_ON);
        assert_eq!(c.lr, DEFAULT_LR);
        assert_eq!(cfg.cadence, 1);
        assert_eq!(cfg.optimizers[0].name, "ranger21");
    }

    #[test]
    fn negative_learning_rate_names_the_field() {
        let err =
            parse_config(&with("[[optimizers]]\npreset = \"adamw\"\nlr = -0.1\n")).unwrap_err();
        assert!(err.to_string().starts_with("optimizers[0].lr:"), "{err}");
    }

    #[test]
    fn unknown_keys_report_their_line() {
        let err = parse_config(&with(
            "[[optimizers]]\npreset = \"adamw\"\nlearning_rate = 0.1\n",
        ))
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("learning_rate"), "{msg}");
        assert!(msg.contains("line 11"), "{msg}");
    }

    #[test]
    fn unknown_problem_key_is_rejected() {
        let text = "schema_version = 1\nt_max = 10\n[problem]\nkind = \"rosenbrock\"\nstart = [0.0, 0.0]\nfoo = 1\n[[optimizers]]\npreset = \"adamw\"\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("foo"), "{err}");
    }

    #[test]
    fn missing_problem_is_rejected() {
        let err =
            parse_config("schema_version = 1\nt_max = 10\n[[optimizers]]\npreset = \"adamw\"\n")
                .unwrap_err();
        assert!(err.to_string().starts_with("problem:"), "{err}");
    }

    #[test]
    fn ranger_keys_are_rejected_for_adamw() {
        let err =
            parse_config(&with("[[optimizers]]\npreset = \"adamw\"\ntau = 0.1\n")).unwrap_err();
        assert!(err.to_string().starts_with("optimizers[0].tau:"), "{err}");
    }

    #[test]
    fn range_checks() {
        for (extra, field) in [
            (
                "[[optimizers]]\npreset = \"ranger21\"\nbeta2 = 1.0\n",
                "optimizers[0].beta2",
            ),
            (
                "[[optimizers]]\npreset = \"ranger21\"\nt_warmup = 0\n",
                "optimizers[0].t_warmup",
            ),
            (
                "[[optimizers]]\npreset = \"ranger21\"\nt_warmdown = 5000\n",
                "optimizers[0].t_warmdown",
            ),
            (
                "[[optimizers]]\npreset = \"ranger21\"\nk_lookahead = 0\n",
                "optimizers[0].k_lookahead",
            ),
            (
                "[[optimizers]]\npreset = \"ranger21\"\ntau = 0.0\n",
                "optimizers[0].tau",
            ),
            (
                "[[optimizers]]\npreset = \"adamw\"\nweight_decay = -1.0\n",
                "optimizers[0].weight_decay",
            ),
        ] {
            let err = parse_config(&with(extra)).unwrap_err();
            assert!(err.to_string().starts_with(field), "{field}: {err}");
        }
        let err = parse_config(&with("cadence = 0\n[[optimizers]]\npreset = \"adamw\"\n"));
        // `cadence` placed after a table header belongs to that table.
        assert!(err.is_err());
    }

    #[test]
    fn top_level_ranges() {
        let text = "schema_version = 1\nt_max = 0\n[problem]\nkind = \"rosenbrock\"\nstart = [0.0, 0.0]\n[[optimizers]]\npreset = \"adamw\"\n";
        assert!(parse_config(text)
            .unwrap_err()
            .to_string()
            .starts_with("t_max:"));
        let text = "schema_version = 2\nt_max = 5\n[problem]\nkind = \"rosenbrock\"\nstart = [0.0, 0.0]\n[[optimizers]]\npreset = \"adamw\"\n";
        assert!(parse_config(text)
            .unwrap_err()
            .to_string()
            .starts_with("schema_version:"));
        let text = "schema_version = 1\nt_max = 5\ncadence = 0\n[problem]\nkind = \"rosenbrock\"\nstart = [0.0, 0.0]\n[[optimizers]]\npreset = \"adamw\"\n";
        assert!(parse_config(text)
            .unwrap_err()
            .to_string()
            .starts_with("cadence:"));
    }

    #[test]
    fn at_least_one_optimizer() {
        let err = parse_config(BASE).unwrap_err();
        assert!(err.to_string().starts_with("optimizers:"), "{err}");
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let err = parse_config(&with(
            "[[optimizers]]\npreset = \"adamw\"\n[[optimizers]]\npreset = \"adamw\"\n",
        ))
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn toggles_and_mlp_problem() {
        let text = r#"
schema_version = 1
t_max = 100
seed = 3

[problem]
kind = "mlp"
widths = [4, 8, 3]
batch_size = 16

[problem.dataset]
n = 60
d = 4
classes = 3
separation = 5.0

[[optimizers]]
preset = "ranger21"
name = "no-lookahead"

[optimizers.toggles]
lookahead = false
"#;
        let cfg = parse_config(text).unwrap();
        let Preset::Ranger21(c) = cfg.optimizers[0].preset else {
            panic!()
        };
        assert!(!c.toggles.lookahead && c.toggles.agc && c.toggles.pnm);
        match &cfg.problem {
            ProblemSpec::Mlp {
                activation,
                label_smoothing,
                dataset,
                ..
            } => {
                assert_eq!(*activation, Activation::Tanh);
                assert_eq!(*label_smoothing, 0.1);
                assert_eq!(dataset.seed, None);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overlapping_schedule_warns() {
        let cfg = parse_config(&with(
            "[[optimizers]]\npreset = \"ranger21\"\nt_warmup = 800\nt_warmdown = 800\n",
        ))
        .unwrap();
        assert_eq!(cfg.warnings().len(), 1);
    }
}
