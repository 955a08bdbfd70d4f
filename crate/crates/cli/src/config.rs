//! Experiment configuration: a TOML document with a schema version.
//!
//! Every problem found while loading is collected with its key path, so a
//! single run reports all of them.

use std::fmt;
use std::path::{Path, PathBuf};

use invlab_core::demand::{DemandModel, MixtureComponent};
use invlab_core::sim::PolicyFamily;
use invlab_core::solver::{SolverOptions, StateGrid};
use invlab_core::{DemandSpec, Error as CoreError, ModelParams};
use toml::{Table, Value};

pub const SCHEMA_VERSION: i64 = 1;
pub const DEFAULT_REPLICATIONS: usize = 1000;
pub const DEFAULT_DIRECTORY: &str = "invlab-out";

/// Text appended to `--help`.
pub const CONFIG_HELP: &str = "\
Configuration file (TOML):

  schema_version = 1                 required

  [params]
  c, c_h, c_p, q                     required; 0 < c < c_p, c_h > 0, q in [0, 1]
  x0 = 0.0                           initial inventory
  unchecked = false                  admit c >= c_p

  [demand]
  family                             uniform | triangular | bump | mixture
  support = [a, b]                   required except for mixtures
  shape = { mode = .. }              triangular; bump takes { power = .. }
  M = 512 * ceil(J)                  density grid intervals, at least 64
  [[demand.components]]              mixtures: weight, family, support, shape

  [run]
  n                                  required horizon
  horizons = [n]                     strictly increasing, used by `clt`
  replications = 1000
  master_seed = 0                    integer or \"0x..\" string; INVLAB_SEED overrides
  grid_step = J / 256
  retain = 0                         trajectories written by `simulate`

  [output]
  directory = \"invlab-out\"           --out overrides
  formats = [\"csv\", \"json\"]

  [compare]
  alternatives = [{ kind = \"never_order\" }, { kind = \"myopic\" }]
                                     kinds: optimal, never_order, myopic,
                                     fixed_base_stock (with level)";

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{} problem(s) in configuration:\n{}", .0.len(), list(.0))]
    Invalid(Vec<ConfigIssue>),
}

fn list(issues: &[ConfigIssue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub horizons: Vec<usize>,
    pub replications: usize,
    pub master_seed: u64,
    pub grid_step: Option<f64>,
    pub retain: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Parameters with the horizon set to `run.n`.
    pub params: ModelParams,
    pub demand: DemandSpec,
    pub demand_points: usize,
    pub run: RunConfig,
    pub directory: PathBuf,
    pub formats: Formats,
    pub alternatives: Vec<PolicyFamily>,
}

impl ExperimentConfig {
    pub fn demand_model(&self) -> DemandModel {
        DemandModel::new(self.demand.clone(), self.demand_points).expect("validated at load")
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            step: self.run.grid_step,
            ..Default::default()
        }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| {
        let offset = e.span().map_or(0, |s| s.start);
        let (line, column) = line_column(text, offset);
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let mut w = Walker::default();
    let cfg = w.document(&root);
    match cfg {
        Some(cfg) if w.issues.is_empty() => Ok(cfg),
        _ => Err(ConfigError::Invalid(w.issues)),
    }
}

/// One-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

#[derive(Default)]
struct Walker {
    issues: Vec<ConfigIssue>,
}

impl Walker {
    fn issue(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            path: path.into(),
            message: message.into(),
        });
    }

    fn unknown(&mut self, t: &Table, path: &str, allowed: &[&str]) {
        for key in t.keys() {
            if !allowed.contains(&key.as_str()) {
                self.issue(join(path, key), format!("unknown key (expected one of: {})", allowed.join(", ")));
            }
        }
    }

    fn table<'a>(&mut self, t: &'a Table, path: &str, key: &str, required: bool) -> Option<&'a Table> {
        match t.get(key) {
            Some(Value::Table(inner)) => Some(inner),
            Some(other) => {
                self.issue(join(path, key), format!("expected a table, found {}", other.type_str()));
                None
            }
            None => {
                if required {
                    self.issue(join(path, key), "missing required table");
                }
                None
            }
        }
    }

    fn float(&mut self, t: &Table, path: &str, key: &str) -> Option<f64> {
        let v = t.get(key)?;
        match v {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            other => {
                self.issue(join(path, key), format!("expected a number, found {}", other.type_str()));
                None
            }
        }
    }

    fn required_float(&mut self, t: &Table, path: &str, key: &str) -> Option<f64> {
        if !t.contains_key(key) {
            self.issue(join(path, key), "missing required key");
        }
        self.float(t, path, key)
    }

    fn count(&mut self, v: &Value, path: &str, min: usize) -> Option<usize> {
        match v {
            Value::Integer(i) if *i >= min as i64 => Some(*i as usize),
            Value::Integer(i) => {
                self.issue(path, format!("must be at least {min}, got {i}"));
                None
            }
            other => {
                self.issue(path, format!("expected an integer, found {}", other.type_str()));
                None
            }
        }
    }

    fn string<'a>(&mut self, t: &'a Table, path: &str, key: &str) -> Option<&'a str> {
        match t.get(key)? {
            Value::String(s) => Some(s),
            other => {
                self.issue(join(path, key), format!("expected a string, found {}", other.type_str()));
                None
            }
        }
    }

    fn document(&mut self, root: &Table) -> Option<ExperimentConfig> {
        self.unknown(root, "", &["schema_version", "params", "demand", "run", "output", "compare"]);
        match root.get("schema_version") {
            Some(Value::Integer(SCHEMA_VERSION)) => {}
            Some(v) => self.issue("schema_version", format!("unsupported schema version {v}; expected {SCHEMA_VERSION}")),
            None => self.issue("schema_version", "missing required key"),
        }
        let params = self.table(root, "", "params", true).map(|t| self.params(t));
        let demand = self.table(root, "", "demand", true).map(|t| self.demand_block(t));
        let run = self.table(root, "", "run", true).and_then(|t| self.run(t));
        let empty = Table::new();
        let output = self.table(root, "", "output", false).unwrap_or(&empty);
        let (directory, formats) = self.output(output);
        let compare = self.table(root, "", "compare", false).unwrap_or(&empty);
        let alternatives = self.compare(compare);

        // Model checks run even when another block failed, so one pass lists
        // everything. A broken horizon has been reported already.
        let params = params.flatten().map(|raw| ModelParams {
            n: run.as_ref().map_or(1, |r| r.n),
            ..raw
        });
        for e in params.iter().flat_map(|p| p.violations()) {
            self.core_issue(e, "params");
        }
        let (Some(params), Some(Some((demand, points))), Some(run)) = (params, demand, run) else {
            return None;
        };
        let model = match DemandModel::new(demand.clone(), points) {
            Ok(m) => Some(m),
            Err(e) => {
                self.issue("demand", e.to_string());
                None
            }
        };
        if let Some(step) = run.grid_step {
            if !(step.is_finite() && step > 0.0) {
                self.issue("run.grid_step", "must be positive and finite");
            }
        }
        if let (Some(model), true) = (&model, self.issues.is_empty()) {
            if let Err(e) = StateGrid::for_model(&params, model, run.grid_step) {
                self.core_issue(e, "params");
            }
        }
        Some(ExperimentConfig {
            params,
            demand,
            demand_points: points,
            run,
            directory: directory?,
            formats: formats?,
            alternatives: alternatives?,
        })
    }

    fn core_issue(&mut self, e: CoreError, section: &str) {
        match e {
            CoreError::Invalid { field, reason } => {
                let path = if field == "n" { "run.n".to_string() } else { join(section, &field) };
                self.issue(path, reason);
            }
            other => self.issue(section, other.to_string()),
        }
    }

    fn params(&mut self, t: &Table) -> Option<ModelParams> {
        let path = "params";
        self.unknown(t, path, &["c", "c_h", "c_p", "q", "x0", "unchecked"]);
        let c = self.required_float(t, path, "c");
        let c_h = self.required_float(t, path, "c_h");
        let c_p = self.required_float(t, path, "c_p");
        let q = self.required_float(t, path, "q");
        let x0 = if t.contains_key("x0") { self.float(t, path, "x0") } else { Some(0.0) };
        let unchecked = match t.get("unchecked") {
            None => Some(false),
            Some(Value::Boolean(b)) => Some(*b),
            Some(other) => {
                self.issue("params.unchecked", format!("expected a boolean, found {}", other.type_str()));
                None
            }
        };
        if x0.is_some_and(|x| x < 0.0) {
            self.issue("params.x0", "initial inventory must be non-negative");
        }
        Some(ModelParams {
            c: c?,
            c_h: c_h?,
            c_p: c_p?,
            q: q?,
            n: 1,
            x0: x0?,
            unchecked: unchecked?,
        })
    }

    fn demand_block(&mut self, t: &Table) -> Option<(DemandSpec, usize)> {
        let family = self.string(t, "demand", "family");
        let allowed: &[&str] = if family == Some("mixture") {
            &["family", "components", "M"]
        } else {
            &["family", "support", "shape", "M"]
        };
        self.unknown(t, "demand", allowed);
        let spec = self.density(t, "demand")?;
        let upper = spec.upper();
        let points = match t.get("M") {
            Some(v) => self.count(v, "demand.M", invlab_core::demand::MIN_POINTS)?,
            None => 512 * (upper.ceil().max(1.0) as usize),
        };
        for v in spec.violations() {
            self.issue("demand", v);
        }
        Some((spec, points))
    }

    fn density(&mut self, t: &Table, path: &str) -> Option<DemandSpec> {
        let Some(family) = self.string(t, path, "family") else {
            if !t.contains_key("family") {
                self.issue(join(path, "family"), "missing required key");
            }
            return None;
        };
        if family == "mixture" {
            return self.mixture(t, path);
        }
        let (a, b) = self.support(t, path)?;
        let empty = Table::new();
        let shape = self.table(t, path, "shape", false).unwrap_or(&empty);
        let shape_path = join(path, "shape");
        let spec = match family {
            "uniform" => {
                self.unknown(shape, &shape_path, &[]);
                DemandSpec::uniform(a, b)
            }
            "triangular" => {
                self.unknown(shape, &shape_path, &["mode"]);
                DemandSpec::triangular(a, self.required_float(shape, &shape_path, "mode")?, b)
            }
            "bump" => {
                self.unknown(shape, &shape_path, &["power"]);
                DemandSpec::bump(a, b, self.required_float(shape, &shape_path, "power")?)
            }
            other => {
                self.issue(
                    join(path, "family"),
                    format!("unknown family `{other}` (expected uniform, triangular, bump or mixture)"),
                );
                return None;
            }
        };
        Some(spec)
    }

    fn support(&mut self, t: &Table, path: &str) -> Option<(f64, f64)> {
        let key = join(path, "support");
        match t.get("support") {
            Some(Value::Array(xs)) if xs.len() == 2 => {
                let num = |v: &Value| match v {
                    Value::Float(f) => Some(*f),
                    Value::Integer(i) => Some(*i as f64),
                    _ => None,
                };
                match (num(&xs[0]), num(&xs[1])) {
                    (Some(a), Some(b)) => Some((a, b)),
                    _ => {
                        self.issue(key, "support endpoints must be numbers");
                        None
                    }
                }
            }
            Some(_) => {
                self.issue(key, "expected an array [a, b]");
                None
            }
            None => {
                self.issue(key, "missing required key");
                None
            }
        }
    }

    fn mixture(&mut self, t: &Table, path: &str) -> Option<DemandSpec> {
        let key = join(path, "components");
        let Some(Value::Array(items)) = t.get("components") else {
            self.issue(key, "mixtures need an array of component tables");
            return None;
        };
        let mut parts = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            let at = format!("{key}[{i}]");
            let Value::Table(c) = item else {
                self.issue(at, "expected a table");
                ok = false;
                continue;
            };
            self.unknown(c, &at, &["weight", "family", "support", "shape"]);
            let weight = self.required_float(c, &at, "weight");
            if c.get("family").and_then(Value::as_str) == Some("mixture") {
                self.issue(join(&at, "family"), "components cannot be mixtures");
                ok = false;
                continue;
            }
            match (weight, self.density(c, &at)) {
                (Some(weight), Some(density)) => parts.push(MixtureComponent { weight, density }),
                _ => ok = false,
            }
        }
        ok.then_some(DemandSpec::Mixture { components: parts })
    }

    fn run(&mut self, t: &Table) -> Option<RunConfig> {
        let path = "run";
        self.unknown(t, path, &["n", "horizons", "replications", "master_seed", "grid_step", "retain"]);
        let n = match t.get("n") {
            Some(v) => self.count(v, "run.n", 1),
            None => {
                self.issue("run.n", "missing required key");
                None
            }
        };
        let horizons = match t.get("horizons") {
            None => n.map(|n| vec![n]),
            Some(Value::Array(xs)) => {
                let hs: Vec<Option<usize>> = xs
                    .iter()
                    .enumerate()
                    .map(|(i, v)| self.count(v, &format!("run.horizons[{i}]"), 1))
                    .collect();
                let hs: Option<Vec<usize>> = hs.into_iter().collect();
                match hs {
                    Some(hs) if hs.is_empty() => {
                        self.issue("run.horizons", "must not be empty");
                        None
                    }
                    Some(hs) if hs.windows(2).any(|w| w[0] >= w[1]) => {
                        self.issue("run.horizons", "must be strictly increasing");
                        None
                    }
                    other => other,
                }
            }
            Some(other) => {
                self.issue("run.horizons", format!("expected an array, found {}", other.type_str()));
                None
            }
        };
        let replications = match t.get("replications") {
            Some(v) => self.count(v, "run.replications", 1),
            None => Some(DEFAULT_REPLICATIONS),
        };
        let master_seed = match t.get("master_seed") {
            None => Some(0),
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
            Some(Value::String(s)) => match parse_seed(s) {
                Some(v) => Some(v),
                None => {
                    self.issue("run.master_seed", format!("`{s}` is not a 64-bit unsigned integer"));
                    None
                }
            },
            Some(other) => {
                self.issue(
                    "run.master_seed",
                    format!("expected a non-negative integer or string, found {other}"),
                );
                None
            }
        };
        let grid_step = self.float(t, path, "grid_step");
        if t.contains_key("grid_step") && grid_step.is_none() {
            return None;
        }
        let retain = match t.get("retain") {
            Some(v) => self.count(v, "run.retain", 0),
            None => Some(0),
        };
        if let (Some(r), Some(k)) = (replications, retain) {
            if k > r {
                self.issue("run.retain", format!("cannot retain {k} of {r} replications"));
            }
        }
        Some(RunConfig {
            n: n?,
            horizons: horizons?,
            replications: replications?,
            master_seed: master_seed?,
            grid_step,
            retain: retain?,
        })
    }

    fn output(&mut self, t: &Table) -> (Option<PathBuf>, Option<Formats>) {
        self.unknown(t, "output", &["directory", "formats"]);
        let directory = if t.contains_key("directory") {
            self.string(t, "output", "directory").map(PathBuf::from)
        } else {
            Some(PathBuf::from(DEFAULT_DIRECTORY))
        };
        let formats = match t.get("formats") {
            None => Some(Formats { csv: true, json: true }),
            Some(Value::Array(xs)) => {
                let mut f = Formats { csv: false, json: false };
                let mut ok = true;
                for (i, x) in xs.iter().enumerate() {
                    match x.as_str() {
                        Some("csv") => f.csv = true,
                        Some("json") => f.json = true,
                        _ => {
                            self.issue(format!("output.formats[{i}]"), format!("unknown format {x} (expected \"csv\" or \"json\")"));
                            ok = false;
                        }
                    }
                }
                if ok && !(f.csv || f.json) {
                    self.issue("output.formats", "must list at least one format");
                    ok = false;
                }
                ok.then_some(f)
            }
            Some(other) => {
                self.issue("output.formats", format!("expected an array, found {}", other.type_str()));
                None
            }
        };
        (directory, formats)
    }

    fn compare(&mut self, t: &Table) -> Option<Vec<PolicyFamily>> {
        self.unknown(t, "compare", &["alternatives"]);
        let Some(v) = t.get("alternatives") else {
            return Some(vec![PolicyFamily::NeverOrder, PolicyFamily::Myopic]);
        };
        let Value::Array(items) = v else {
            self.issue("compare.alternatives", "expected an array of tables");
            return None;
        };
        let mut out = Vec::new();
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            let at = format!("compare.alternatives[{i}]");
            let parsed = item
                .clone()
                .try_into::<PolicyFamily>()
                .map_err(|e| e.message().to_string());
            match parsed {
                Ok(PolicyFamily::FixedBaseStock { level }) if !level.is_finite() => {
                    self.issue(join(&at, "level"), "must be finite");
                    ok = false;
                }
                Ok(f) => out.push(f),
                Err(msg) => {
                    self.issue(at, msg);
                    ok = false;
                }
            }
        }
        ok.then_some(out)
    }
}

/// Decimal or `0x`-prefixed hexadecimal.
pub fn parse_seed(s: &str) -> Option<u64> {
    let s = s.trim();
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}
