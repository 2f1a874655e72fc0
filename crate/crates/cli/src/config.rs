//! Run configuration: TOML schema, presets, overrides and validation.

use std::fmt;

use anyhow::{anyhow, bail, Context, Result};
use savif::Scheme;
use serde::{Deserialize, Serialize};
use toml::Value;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub io: IoConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "C0", default = "one")]
    pub c0: f64,
    pub domain: DomainConfig,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default)]
    pub initial: InitialData,
    #[serde(default)]
    pub source: SourceConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub x_lower: f64,
    pub y_lower: f64,
    pub x_extent: f64,
    pub y_extent: f64,
}

impl DomainConfig {
    fn square(half: f64) -> Self {
        Self {
            x_lower: -half,
            y_lower: -half,
            x_extent: 2.0 * half,
            y_extent: 2.0 * half,
        }
    }
}

/// Initial data for `simulate` and `energy` runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialData {
    /// `sech(x² + y²)` with the matching velocity.
    Example1,
    /// `(1 + i)(x + y) exp(−10 (1 − x − y)²)` at rest.
    #[default]
    Example2,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceConfig {
    #[default]
    None,
    /// Closed-form manufactured forcing.
    Manufactured,
    /// Manufactured forcing with the spectral Laplacian.
    ManufacturedGrid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    #[serde(with = "scheme_name")]
    pub name: Scheme,
    #[serde(default)]
    pub predictor: PredictorConfig,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            name: Scheme::SavIf,
            predictor: PredictorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Sweep cap; order + 2 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub strict: bool,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: None,
            strict: false,
        }
    }
}

impl PredictorConfig {
    pub fn options(&self) -> savif::PredictorOptions<f64> {
        savif::PredictorOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            strict: self.strict,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub tau: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Simulate,
    TemporalSweep,
    SpatialSweep,
    Energy,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::TemporalSweep => "temporal_sweep",
            ExperimentKind::SpatialSweep => "spatial_sweep",
            ExperimentKind::Energy => "energy",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kind: ExperimentKind,
    /// Step sizes of a temporal sweep.
    #[serde(default)]
    pub taus: Vec<f64>,
    /// Grid sizes of a spatial sweep.
    #[serde(default, rename = "Ns")]
    pub ns: Vec<usize>,
    /// Temporal sweeps force with the spectral-Laplacian source, which
    /// removes the spatial error.
    #[serde(default = "yes")]
    pub grid_source: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Simulate,
            taus: Vec::new(),
            ns: Vec::new(),
            grid_source: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    #[serde(default = "default_output")]
    pub output_dir: String,
    /// Write `checkpoint.csv` every this many steps; 0 writes only the final state.
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Reserved for randomized tests; the solvers are deterministic.
    #[serde(default)]
    pub seed: u64,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            output_dir: default_output(),
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_tol() -> f64 {
    1e-13
}

fn default_output() -> String {
    "savif-out".into()
}

mod scheme_name {
    use savif::Scheme;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: &Scheme, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(s.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Scheme, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub const PRESETS: [&str; 3] = ["example1_beta_plus", "example1_beta_minus", "example2"];

/// Built-in parameter sets at desk scale.
pub fn preset(name: &str) -> Result<RunConfig> {
    let example1 = |beta: f64| RunConfig {
        problem: ProblemConfig {
            alpha: 1.0,
            beta,
            c0: 1.0,
            domain: DomainConfig::square(8.0),
            n: 64,
            initial: InitialData::Example1,
            source: SourceConfig::Manufactured,
        },
        scheme: SchemeConfig::default(),
        time: TimeConfig {
            tau: 0.01,
            t_final: 1.0,
        },
        experiment: ExperimentConfig {
            kind: ExperimentKind::Simulate,
            taus: (0..5).map(|k| 0.1 / f64::powi(2.0, k)).collect(),
            ns: vec![16, 24, 32, 48, 64],
            grid_source: true,
        },
        io: IoConfig::default(),
    };
    match name {
        "example1_beta_plus" => Ok(example1(1.0)),
        "example1_beta_minus" => Ok(example1(-1.0)),
        "example2" => Ok(RunConfig {
            problem: ProblemConfig {
                alpha: 1.0,
                beta: 1.0,
                c0: 1.0,
                domain: DomainConfig::square(32.0),
                n: 128,
                initial: InitialData::Example2,
                source: SourceConfig::None,
            },
            scheme: SchemeConfig::default(),
            time: TimeConfig {
                tau: 0.05,
                t_final: 5.0,
            },
            experiment: ExperimentConfig {
                kind: ExperimentKind::Energy,
                ..ExperimentConfig::default()
            },
            io: IoConfig::default(),
        }),
        other => bail!("unknown preset `{other}` (available: {})", PRESETS.join(", ")),
    }
}

/// Parses a `KEY=VALUE` override; the value is read as a TOML literal and
/// falls back to a bare string.
fn parse_override(spec: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{spec}` is not of the form KEY=VALUE"))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        bail!("override `{spec}` has an empty key segment");
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((path, value))
}

fn set_path(root: &mut toml::Table, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = root;
    for (i, seg) in parents.iter().enumerate() {
        let entry = table
            .entry(seg.clone())
            .or_insert_with(|| Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("`{}` is not a table", path[..=i].join(".")))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Resolves preset → config text → overrides, then validates.
pub fn resolve(preset_name: Option<&str>, text: Option<&str>, overrides: &[String]) -> Result<RunConfig> {
    let mut table = match preset_name {
        Some(name) => toml::Table::try_from(preset(name)?).context("serializing preset")?,
        None => toml::Table::new(),
    };
    if let Some(text) = text {
        let top: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        merge(&mut table, top);
    }
    for spec in overrides {
        let (path, value) = parse_override(spec)?;
        set_path(&mut table, &path, value)?;
    }
    let cfg: RunConfig = RunConfig::deserialize(Value::Table(table)).map_err(|e| anyhow!("invalid config: {e}"))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        let fail = |key: &str, msg: String| -> Result<()> { bail!("{key}: {msg}") };
        if p.alpha == 0.0 || !p.alpha.is_finite() {
            fail("problem.alpha", format!("must be finite and nonzero (got {})", p.alpha))?;
        }
        if p.beta == 0.0 || !p.beta.is_finite() {
            fail("problem.beta", format!("must be finite and nonzero (got {})", p.beta))?;
        }
        if !(p.c0 > 0.0) || !p.c0.is_finite() {
            fail("problem.C0", format!("must be finite and positive (got {})", p.c0))?;
        }
        if p.n < 4 || p.n % 2 != 0 {
            fail("problem.N", format!("must be even and at least 4 (got {})", p.n))?;
        }
        let d = &p.domain;
        if !(d.x_extent > 0.0 && d.y_extent > 0.0) || !d.x_lower.is_finite() || !d.y_lower.is_finite() {
            fail("problem.domain", "extents must be positive and bounds finite".into())?;
        }
        let t = &self.time;
        if !(t.tau > 0.0) || !t.tau.is_finite() {
            fail("time.tau", format!("must be finite and positive (got {})", t.tau))?;
        }
        if !(t.t_final >= t.tau) || !t.t_final.is_finite() {
            fail(
                "time.T",
                format!("must be at least tau = {} (got {})", t.tau, t.t_final),
            )?;
        }
        if !(self.scheme.predictor.tol > 0.0) {
            fail(
                "scheme.predictor.tol",
                format!("must be positive (got {})", self.scheme.predictor.tol),
            )?;
        }
        if self.scheme.predictor.max_iter == Some(0) {
            fail("scheme.predictor.max_iter", "must be at least 1".into())?;
        }
        let e = &self.experiment;
        match e.kind {
            ExperimentKind::TemporalSweep => {
                if e.taus.is_empty() {
                    fail("experiment.taus", "must be non-empty for a temporal sweep".into())?;
                }
                if let Some(bad) = e.taus.iter().find(|&&x| !(x > 0.0) || x > t.t_final) {
                    fail("experiment.taus", format!("entries must lie in (0, T], got {bad}"))?;
                }
            }
            ExperimentKind::SpatialSweep => {
                if e.ns.is_empty() {
                    fail("experiment.Ns", "must be non-empty for a spatial sweep".into())?;
                }
                if let Some(bad) = e.ns.iter().find(|&&n| n < 4 || n % 2 != 0) {
                    fail(
                        "experiment.Ns",
                        format!("entries must be even and at least 4, got {bad}"),
                    )?;
                }
            }
            ExperimentKind::Energy => {
                if p.source != SourceConfig::None {
                    fail("problem.source", "an energy run needs source = \"none\"".into())?;
                }
            }
            ExperimentKind::Simulate => {}
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
