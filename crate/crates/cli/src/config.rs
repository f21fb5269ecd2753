//! Flat key-value run configuration.
//!
//! A config file is a single TOML table. Protocol parameters (`beta`,
//! `chi_db`, `n`, ...) and run keys (`sweep_variable`, `grid`, `optimize`,
//! ...) share the same level.

use std::collections::BTreeSet;

use dpsk_keyrate::engine::{EngineConfig, ModulationSearch};
use dpsk_keyrate::params::ProtocolParams;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("field `{field}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Field {
        field: String,
        line: Option<usize>,
        message: String,
    },
    #[error("unknown preset `{0}`; available: fig1, fig2, fig3, fig4")]
    UnknownPreset(String),
    #[error("invalid override `{0}`; expected key=value")]
    Override(String),
}

impl ConfigError {
    fn field(field: &str, text: &str, message: impl Into<String>) -> Self {
        ConfigError::Field {
            field: field.to_string(),
            line: find_line(text, field),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    ChiDb,
    Alpha,
    PD,
    GammaMod,
    N,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::ChiDb => "chi_db",
            SweepVariable::Alpha => "alpha",
            SweepVariable::PD => "p_d",
            SweepVariable::GammaMod => "gamma_mod",
            SweepVariable::N => "n",
        }
    }

    pub fn get(self, params: &ProtocolParams) -> f64 {
        match self {
            SweepVariable::ChiDb => params.chi_db,
            SweepVariable::Alpha => params.alpha,
            SweepVariable::PD => params.p_d,
            SweepVariable::GammaMod => params.gamma_mod,
            SweepVariable::N => params.n,
        }
    }

    pub fn apply(self, params: &mut ProtocolParams, value: f64) {
        match self {
            SweepVariable::ChiDb => {
                params.chi_db = value;
                params.eta = None;
            }
            SweepVariable::Alpha => params.alpha = value,
            SweepVariable::PD => params.p_d = value,
            SweepVariable::GammaMod => params.gamma_mod = value,
            SweepVariable::N => params.n = value,
        }
    }
}

/// Parameters that may be optimized per point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Alpha,
    Beta,
    PK,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: ProtocolParams,
    pub sweep_variable: Option<SweepVariable>,
    pub grid: Vec<f64>,
    pub optimize: BTreeSet<Param>,
    pub output_path: Option<String>,
    pub workers: Option<usize>,
    pub seed: u64,
    pub search: ModulationSearch,
    pub engine: EngineConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunKeys {
    sweep_variable: Option<SweepVariable>,
    #[serde(default)]
    grid: Vec<f64>,
    #[serde(default)]
    optimize: Vec<Param>,
    output_path: Option<String>,
    workers: Option<usize>,
    seed: Option<u64>,
    max_evaluations: Option<usize>,
    beta_range: Option<(f64, f64)>,
    p_k_range: Option<(f64, f64)>,
    alpha_excess_min: Option<f64>,
    alpha_excess_max: Option<f64>,
    alpha_grid: Option<usize>,
    golden_iterations: Option<usize>,
    gap_tol: Option<f64>,
}

const RUN_KEYS: [&str; 15] = [
    "sweep_variable",
    "grid",
    "optimize",
    "output_path",
    "workers",
    "seed",
    "max_evaluations",
    "beta_range",
    "p_k_range",
    "alpha_excess_min",
    "alpha_excess_max",
    "alpha_grid",
    "golden_iterations",
    "gap_tol",
    "preset",
];

/// 1-based line where `key` is assigned, if any.
fn find_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        l.trim_start()
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

/// First backtick-quoted name in a deserializer message.
fn quoted_field(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(&message[start..start + len])
}

pub fn parse_table(text: &str) -> Result<Table, ConfigError> {
    text.parse::<Table>().map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
            .unwrap_or(1);
        ConfigError::Syntax {
            line,
            message: e.message().to_string(),
        }
    })
}

/// Parses `key=value` into a table entry; values that are not TOML
/// literals are taken as strings.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(assignment.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(assignment.to_string()));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.trim().to_string()));
    table.insert(key.to_string(), value);
    Ok(())
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::from_table(parse_table(text)?, text)
    }

    /// `text` is only used to locate fields for diagnostics.
    pub fn from_table(table: Table, text: &str) -> Result<Self, ConfigError> {
        let (mut run, mut params) = (Table::new(), Table::new());
        for (k, v) in table {
            if RUN_KEYS.contains(&k.as_str()) {
                run.insert(k, v);
            } else {
                params.insert(k, v);
            }
        }
        run.remove("preset");
        let keys: RunKeys = Value::Table(run).try_into().map_err(|e: toml::de::Error| {
            let msg = e.message().to_string();
            let field = quoted_field(&msg).unwrap_or("config").to_string();
            ConfigError::field(&field, text, msg)
        })?;
        let base: ProtocolParams = Value::Table(params).try_into().map_err(|e: toml::de::Error| {
            let msg = e.message().to_string();
            let field = quoted_field(&msg).unwrap_or("config").to_string();
            ConfigError::field(&field, text, msg)
        })?;
        if let Err(e) = base.validate() {
            let field = match &e {
                dpsk_keyrate::Error::InvalidParameter { name, .. } => name,
                _ => "config",
            };
            return Err(ConfigError::field(field, text, e.to_string()));
        }

        let mut search = ModulationSearch::default();
        let mut engine = EngineConfig::default();
        if let Some(m) = keys.max_evaluations {
            search.max_evaluations = m;
        }
        if let Some(r) = keys.beta_range {
            search.beta = r;
        }
        if let Some(r) = keys.p_k_range {
            search.p_k = r;
        }
        if let Some(v) = keys.alpha_excess_min {
            engine.alpha_excess_min = v;
        }
        if let Some(v) = keys.alpha_excess_max {
            engine.alpha_excess_max = v;
        }
        if let Some(v) = keys.alpha_grid {
            engine.alpha_grid = v;
        }
        if let Some(v) = keys.golden_iterations {
            engine.golden_iterations = v;
        }
        if let Some(v) = keys.gap_tol {
            engine.solver.gap_tol = v;
        }
        let optimize: BTreeSet<Param> = keys.optimize.into_iter().collect();
        search.optimize_beta = optimize.contains(&Param::Beta);
        search.optimize_p_k = optimize.contains(&Param::PK);

        let config = SweepConfig {
            base,
            sweep_variable: keys.sweep_variable,
            grid: keys.grid,
            optimize,
            output_path: keys.output_path,
            workers: keys.workers,
            seed: keys.seed.unwrap_or(0),
            search,
            engine,
        };
        config.check(text)?;
        Ok(config)
    }

    fn check(&self, text: &str) -> Result<(), ConfigError> {
        let err = |f: &str, m: &str| Err(ConfigError::field(f, text, m));
        if self.workers == Some(0) {
            return err("workers", "must be positive");
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) && self.grid.windows(2).any(|w| !(w[0] > w[1])) {
            return err("grid", "must be strictly monotone");
        }
        if self.grid.iter().any(|g| !g.is_finite()) {
            return err("grid", "must be finite");
        }
        if self.sweep_variable.is_some() != !self.grid.is_empty() {
            return err("grid", "sweep_variable and a nonempty grid go together");
        }
        if self.sweep_variable == Some(SweepVariable::Alpha) && self.optimize.contains(&Param::Alpha) {
            return err("optimize", "cannot optimize alpha while sweeping it");
        }
        let modulation = self.search.optimize_beta || self.search.optimize_p_k;
        if modulation && !self.optimize.contains(&Param::Alpha) {
            return err("optimize", "optimizing beta or p_k also requires alpha");
        }
        for (name, (lo, hi), x, on) in [
            ("beta_range", self.search.beta, self.base.beta, self.search.optimize_beta),
            ("p_k_range", self.search.p_k, self.base.p_k, self.search.optimize_p_k),
        ] {
            if on && !(lo < hi && lo <= x && x <= hi) {
                return err(name, "must be an increasing pair containing the base value");
            }
        }
        let e = &self.engine;
        if !(e.alpha_excess_min > 0.0 && e.alpha_excess_min < e.alpha_excess_max && e.alpha_excess_max < 1.0) {
            return err("alpha_excess_min", "need 0 < alpha_excess_min < alpha_excess_max < 1");
        }
        if e.alpha_grid < 3 {
            return err("alpha_grid", "need at least 3 points");
        }
        Ok(())
    }

    /// Parameters at each grid value, in grid order.
    pub fn points(&self) -> Vec<(f64, ProtocolParams)> {
        match self.sweep_variable {
            Some(var) => self
                .grid
                .iter()
                .map(|&g| {
                    let mut p = self.base.clone();
                    var.apply(&mut p, g);
                    (g, p)
                })
                .collect(),
            None => Vec::new(),
        }
    }

    /// The resolved configuration in the input format.
    pub fn to_toml(&self) -> String {
        let mut t = Table::try_from(&self.base).expect("parameters serialize");
        if let Some(v) = self.sweep_variable {
            t.insert("sweep_variable".into(), v.name().into());
            t.insert("grid".into(), Value::Array(self.grid.iter().map(|&g| g.into()).collect()));
        }
        let opt: Vec<Value> = self
            .optimize
            .iter()
            .map(|p| Value::try_from(p).expect("enum serializes"))
            .collect();
        t.insert("optimize".into(), Value::Array(opt));
        if let Some(o) = &self.output_path {
            t.insert("output_path".into(), o.clone().into());
        }
        if let Some(w) = self.workers {
            t.insert("workers".into(), (w as i64).into());
        }
        t.insert("seed".into(), (self.seed as i64).into());
        t.insert("max_evaluations".into(), (self.search.max_evaluations as i64).into());
        let pair = |(a, b): (f64, f64)| Value::Array(vec![a.into(), b.into()]);
        t.insert("beta_range".into(), pair(self.search.beta));
        t.insert("p_k_range".into(), pair(self.search.p_k));
        t.insert("alpha_excess_min".into(), self.engine.alpha_excess_min.into());
        t.insert("alpha_excess_max".into(), self.engine.alpha_excess_max.into());
        t.insert("alpha_grid".into(), (self.engine.alpha_grid as i64).into());
        t.insert("golden_iterations".into(), (self.engine.golden_iterations as i64).into());
        t.insert("gap_tol".into(), self.engine.solver.gap_tol.into());
        toml::to_string(&t).expect("table serializes")
    }
}
