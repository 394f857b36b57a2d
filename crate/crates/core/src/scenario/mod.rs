//! Scenario files: a TOML description of a metric, a seed, and the checks to
//! run on them.
//!
//! Loading is two-stage. Deserialization reports the failing field path;
//! [`Scenario::validate`] then checks cross-field constraints and builds the
//! metric and seed.

mod catalog;
mod run;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::congruence::{CongruenceOptions, Generator, Orientation, SeedSurface};
use crate::dsl::{Expression, Scope};
use crate::energy::Sampler;
use crate::error::Error;
use crate::geometry::builtins::{self, ParamValue};
use crate::geometry::{MetricSource, MetricSpec, DEFAULT_NULL_TOL};
use crate::quadrature::{AxisRule, RuleKind};
use crate::transport::{uniform_grid, DEFAULT_GRID_POINTS};

pub use catalog::{canned, canned_by_name, CannedScenario};
pub use run::{execute, exit_code, output_dir, run_file, Category, RunReport, TaskRecord};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "NULLFLOW_THREADS";

/// Applies [`THREADS_ENV`] to the global worker pool. Returns the cap, if any.
pub fn apply_thread_limit() -> std::result::Result<Option<usize>, String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got '{raw}'"))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())?;
    Ok(Some(n))
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("task {task}: {source}")]
    Runtime {
        task: String,
        #[source]
        source: Error,
    },
    #[error("writing output: {0}")]
    Output(String),
}

impl ScenarioError {
    fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    fn at(path: impl Into<String>) -> impl FnOnce(Error) -> Self {
        let path = path.into();
        move |e| ScenarioError::config(path, e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Holds,
    Violated,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub metric: MetricConfig,
    pub exponents: Exponents,
    pub seed: Option<SeedConfig>,
    #[serde(default)]
    pub congruence: CongruenceConfig,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub tasks: Vec<TaskConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub i: usize,
    pub j: usize,
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub builtin: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
    pub dim: Option<usize>,
    #[serde(default)]
    pub components: Vec<ComponentConfig>,
    pub reference: Option<Vec<String>>,
    pub domain: Option<String>,
    pub weight: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exponents {
    /// The dimension parameter `N`.
    pub n: f64,
    /// Entropy exponents `N'`; each above `N`.
    pub n_prime: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    /// Number or constant expression (`"2*pi"`).
    pub lo: ParamValue,
    pub hi: ParamValue,
    pub nodes: usize,
    #[serde(default = "gauss")]
    pub kind: RuleKind,
}

fn gauss() -> RuleKind {
    RuleKind::Gauss
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub map: Vec<String>,
    pub axes: Vec<AxisConfig>,
    #[serde(default)]
    pub orientation: Orientation,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CongruenceConfig {
    pub generator: Generator,
    pub span: f64,
    pub t_max: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for CongruenceConfig {
    fn default() -> Self {
        CongruenceConfig {
            generator: Generator::L,
            span: 1.0,
            t_max: 1.0,
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    /// Unnormalized density over the seed parameters; uniform when absent.
    pub density: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub points: Option<usize>,
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub null: f64,
    pub gap: f64,
    pub focal: f64,
    pub y: f64,
    pub blowup: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            null: DEFAULT_NULL_TOL,
            gap: 1e-6,
            focal: 1e-8,
            y: 1e-10,
            blowup: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonSource {
    /// Minimum of `H_{V,w}` for the congruence's own generator `w`.
    #[default]
    Generator,
    /// Minimum over both null normals.
    Both,
}

fn eight() -> usize {
    8
}
fn tenth() -> f64 {
    0.1
}
fn twelve() -> usize {
    12
}
fn five() -> usize {
    5
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    CurvatureScan {
        sampler: Sampler,
        #[serde(default = "eight")]
        directions: usize,
        #[serde(default)]
        rng_seed: u64,
        n_prime: Option<f64>,
        expect: Option<Expectation>,
    },
    Convexity {
        n_prime: Option<f64>,
        expect: Option<Expectation>,
    },
    Witness {
        point: Vec<f64>,
        direction: Vec<f64>,
        exponent: Option<f64>,
        lambda: Option<f64>,
        #[serde(default = "tenth")]
        delta: f64,
        #[serde(default = "tenth")]
        span: f64,
        #[serde(default = "twelve")]
        max_halvings: usize,
        #[serde(default = "five")]
        nodes_per_axis: usize,
        expect: Option<Expectation>,
    },
    Hawking {
        #[serde(default)]
        t0: f64,
        t1: f64,
        subset: Option<Vec<usize>>,
        expect: Option<Expectation>,
    },
    Trapped {
        #[serde(default = "yes")]
        cap_check: bool,
        expect: Option<Expectation>,
    },
    Penrose {
        n_prime: Option<f64>,
        #[serde(default)]
        epsilon: EpsilonSource,
        expect: Option<Expectation>,
    },
}

impl TaskConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            TaskConfig::CurvatureScan { .. } => "curvature_scan",
            TaskConfig::Convexity { .. } => "convexity",
            TaskConfig::Witness { .. } => "witness",
            TaskConfig::Hawking { .. } => "hawking",
            TaskConfig::Trapped { .. } => "trapped",
            TaskConfig::Penrose { .. } => "penrose",
        }
    }

    pub fn expect(&self) -> Option<Expectation> {
        match self {
            TaskConfig::CurvatureScan { expect, .. }
            | TaskConfig::Convexity { expect, .. }
            | TaskConfig::Witness { expect, .. }
            | TaskConfig::Hawking { expect, .. }
            | TaskConfig::Trapped { expect, .. }
            | TaskConfig::Penrose { expect, .. } => *expect,
        }
    }

    fn needs_congruence(&self) -> bool {
        matches!(
            self,
            TaskConfig::Convexity { .. } | TaskConfig::Hawking { .. } | TaskConfig::Penrose { .. }
        )
    }

    fn needs_seed(&self) -> bool {
        self.needs_congruence() || matches!(self, TaskConfig::Trapped { .. })
    }
}

/// Parses TOML text; errors carry the failing field path.
pub fn parse_str(text: &str) -> Result<Scenario, ScenarioError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ScenarioError::config("<document>", e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "<document>".to_string() } else { path };
        ScenarioError::config(path, e.into_inner().message().to_string())
    })
}

pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_str(&text)
}

/// A validated scenario with its metric and seed built.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub metric: MetricSpec,
    pub seed: Option<SeedSurface>,
    pub grid: Vec<f64>,
    pub congruence: CongruenceOptions,
}

fn build_metric(s: &Scenario) -> Result<MetricSpec, ScenarioError> {
    let m = &s.metric;
    let metric = match (&m.builtin, m.dim) {
        (Some(_), Some(_)) => {
            return Err(ScenarioError::config("metric", "give either 'builtin' or 'dim' with 'components', not both"))
        }
        (Some(name), None) => {
            if !m.components.is_empty() || m.reference.is_some() || m.domain.is_some() {
                return Err(ScenarioError::config(
                    "metric",
                    "'components', 'reference' and 'domain' apply to user metrics only",
                ));
            }
            let built = builtins::build(name, &m.params).map_err(ScenarioError::at("metric.builtin"))?;
            if m.weight.is_some() {
                if built.has_weight() {
                    return Err(ScenarioError::config("metric.weight", "this built-in already takes its weight as parameter 'V'"));
                }
                built
                    .with_weight(m.weight.as_deref())
                    .map_err(ScenarioError::at("metric.weight"))?
            } else {
                built
            }
        }
        (None, Some(dim)) => {
            if m.components.is_empty() {
                return Err(ScenarioError::config("metric.components", "a user metric needs components"));
            }
            let mut params = BTreeMap::new();
            for (k, v) in &m.params {
                match v {
                    ParamValue::Number(x) => {
                        params.insert(k.clone(), *x);
                    }
                    ParamValue::Expr(_) => {
                        return Err(ScenarioError::config(format!("metric.params.{k}"), "user metric parameters must be numbers"))
                    }
                }
            }
            let src = MetricSource {
                name: s.name.clone(),
                dim,
                components: m.components.iter().map(|c| (c.i, c.j, c.expr.clone())).collect(),
                weight: m.weight.clone(),
                domain: m.domain.clone(),
                reference: m.reference.clone(),
                params,
            };
            MetricSpec::from_source(src).map_err(ScenarioError::at("metric"))?
        }
        (None, None) => return Err(ScenarioError::config("metric", "give 'builtin' or 'dim' with 'components'")),
    };
    Ok(metric.with_null_tol(s.tolerances.null))
}

fn axis_bound(v: &ParamValue, constants: &BTreeMap<String, f64>, path: String) -> Result<f64, ScenarioError> {
    match v {
        ParamValue::Number(x) => Ok(*x),
        ParamValue::Expr(src) => {
            let scope = Scope::params(0).with_constants(constants);
            let e = Expression::parse(src, &scope).map_err(|e| ScenarioError::config(&path, e.to_string()))?;
            e.eval(&[]).map_err(|e| ScenarioError::config(&path, e.to_string()))
        }
    }
}

fn build_seed(cfg: &SeedConfig, metric: &MetricSpec) -> Result<SeedSurface, ScenarioError> {
    let dim = metric.dim();
    if cfg.map.len() != dim {
        return Err(ScenarioError::config(
            "seed.map",
            format!("needs {dim} components, got {}", cfg.map.len()),
        ));
    }
    if cfg.axes.len() != dim - 2 {
        return Err(ScenarioError::config(
            "seed.axes",
            format!("needs {} axes, got {}", dim - 2, cfg.axes.len()),
        ));
    }
    let mut constants = metric.params().clone();
    constants.extend(cfg.constants.iter().map(|(k, v)| (k.clone(), *v)));
    let mut axes = Vec::new();
    for (i, a) in cfg.axes.iter().enumerate() {
        let lo = axis_bound(&a.lo, &constants, format!("seed.axes[{i}].lo"))?;
        let hi = axis_bound(&a.hi, &constants, format!("seed.axes[{i}].hi"))?;
        if !(hi > lo) {
            return Err(ScenarioError::config(format!("seed.axes[{i}]"), "need lo < hi"));
        }
        if a.nodes == 0 {
            return Err(ScenarioError::config(format!("seed.axes[{i}].nodes"), "must be positive"));
        }
        axes.push(AxisRule {
            lo,
            hi,
            nodes: a.nodes,
            kind: a.kind,
        });
    }
    SeedSurface::new(&cfg.map, dim, &constants, axes, cfg.orientation).map_err(|e| match e {
        Error::Parse { field, source } => ScenarioError::config(field, source.to_string()),
        other => ScenarioError::config("seed", other.to_string()),
    })
}

fn build_grid(g: &GridConfig) -> Result<Vec<f64>, ScenarioError> {
    match (&g.points, &g.values) {
        (Some(_), Some(_)) => Err(ScenarioError::config("grid", "give 'points' or 'values', not both")),
        (Some(n), None) => {
            if *n < 2 {
                return Err(ScenarioError::config("grid.points", "need at least 2 points"));
            }
            Ok(uniform_grid(*n))
        }
        (None, Some(v)) => {
            if v.len() < 2 {
                return Err(ScenarioError::config("grid.values", "need at least 2 values"));
            }
            for (i, t) in v.iter().enumerate() {
                if !(0.0..=1.0).contains(t) {
                    return Err(ScenarioError::config(format!("grid.values[{i}]"), format!("t = {t} lies outside [0, 1]")));
                }
                if i > 0 && !(*t > v[i - 1]) {
                    return Err(ScenarioError::config(format!("grid.values[{i}]"), "values must increase strictly"));
                }
            }
            if v[0] != 0.0 || v[v.len() - 1] != 1.0 {
                return Err(ScenarioError::config("grid.values", "must start at 0 and end at 1"));
            }
            Ok(v.clone())
        }
        (None, None) => Ok(uniform_grid(DEFAULT_GRID_POINTS)),
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<Prepared, ScenarioError> {
        let metric = build_metric(self)?;
        let dim = metric.dim();
        let n_min = (dim - 2) as f64;
        let ex = &self.exponents;
        if !(ex.n >= n_min) {
            return Err(ScenarioError::config("exponents.n", format!("N must be at least n - 1 = {n_min}")));
        }
        if ex.n_prime.is_empty() {
            return Err(ScenarioError::config("exponents.n_prime", "give at least one exponent"));
        }
        for (i, np) in ex.n_prime.iter().enumerate() {
            if !(*np > ex.n) || !np.is_finite() {
                return Err(ScenarioError::config(format!("exponents.n_prime[{i}]"), format!("N' = {np} must exceed N = {}", ex.n)));
            }
        }
        let grid = build_grid(&self.grid)?;
        let tol = &self.tolerances;
        for (name, v) in [("null", tol.null), ("gap", tol.gap), ("focal", tol.focal), ("y", tol.y), ("blowup", tol.blowup)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ScenarioError::config(format!("tolerances.{name}"), "must be positive"));
            }
        }
        let c = &self.congruence;
        if !(c.t_max > 0.0) || !c.t_max.is_finite() {
            return Err(ScenarioError::config("congruence.t_max", "must be positive"));
        }
        if !(c.span > 0.0) || !c.span.is_finite() {
            return Err(ScenarioError::config("congruence.span", "must be positive"));
        }
        if !(c.rtol > 0.0) || !(c.atol > 0.0) {
            return Err(ScenarioError::config("congruence", "rtol and atol must be positive"));
        }
        if self.tasks.is_empty() {
            return Err(ScenarioError::config("tasks", "no tasks"));
        }
        let needs_seed = self.tasks.iter().any(TaskConfig::needs_seed);
        let seed = match (&self.seed, needs_seed) {
            (Some(cfg), _) => Some(build_seed(cfg, &metric)?),
            (None, true) => return Err(ScenarioError::config("seed", "required by the requested tasks")),
            (None, false) => None,
        };
        if self.measure.density.is_some() && seed.is_none() {
            return Err(ScenarioError::config("measure.density", "a density needs a seed"));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            self.validate_task(i, t, dim, n_min)?;
        }
        let mut congruence = CongruenceOptions::new(c.t_max)
            .with_generator(c.generator)
            .with_span(c.span);
        congruence.ray.ode.rtol = c.rtol;
        congruence.ray.ode.atol = c.atol;
        congruence.ray.focal_tol = tol.focal;
        congruence.ray.y_tol = tol.y;
        congruence.ray.blowup = tol.blowup;
        Ok(Prepared {
            scenario: self.clone(),
            metric,
            seed,
            grid,
            congruence,
        })
    }

    fn check_n_prime(&self, n_prime: &Option<f64>, path: &str) -> Result<(), ScenarioError> {
        match n_prime {
            Some(np) if !(*np > self.exponents.n) => {
                Err(ScenarioError::config(path, format!("N' = {np} must exceed N = {}", self.exponents.n)))
            }
            _ => Ok(()),
        }
    }

    /// Exponents a task runs with: its own, or every scenario `N'`.
    pub fn exponents_for(&self, n_prime: Option<f64>) -> Vec<f64> {
        match n_prime {
            Some(np) => vec![np],
            None => self.exponents.n_prime.clone(),
        }
    }

    fn validate_task(&self, i: usize, t: &TaskConfig, dim: usize, n_min: f64) -> Result<(), ScenarioError> {
        let p = |f: &str| format!("tasks[{i}].{f}");
        let t_max = self.congruence.t_max;
        match t {
            TaskConfig::CurvatureScan { sampler, n_prime, .. } => {
                self.check_n_prime(n_prime, &p("n_prime"))?;
                sampler.points(dim).map_err(ScenarioError::at(p("sampler")))?;
            }
            TaskConfig::Convexity { n_prime, .. } => {
                self.check_n_prime(n_prime, &p("n_prime"))?;
                if t_max < 1.0 {
                    return Err(ScenarioError::config("congruence.t_max", "convexity needs the congruence on [0, 1]"));
                }
            }
            TaskConfig::Witness { point, direction, exponent, delta, span, nodes_per_axis, .. } => {
                if point.len() != dim {
                    return Err(ScenarioError::config(p("point"), format!("needs {dim} entries")));
                }
                if direction.len() != dim {
                    return Err(ScenarioError::config(p("direction"), format!("needs {dim} entries")));
                }
                if let Some(e) = exponent {
                    if !(*e > n_min) {
                        return Err(ScenarioError::config(p("exponent"), format!("must exceed n - 1 = {n_min}")));
                    }
                } else if !(self.exponents.n > n_min) {
                    return Err(ScenarioError::config(p("exponent"), format!("N = {} does not exceed n - 1; give an exponent", self.exponents.n)));
                }
                if !(*delta > 0.0) || !(*span > 0.0) {
                    return Err(ScenarioError::config(p("delta"), "delta and span must be positive"));
                }
                if *nodes_per_axis == 0 {
                    return Err(ScenarioError::config(p("nodes_per_axis"), "must be positive"));
                }
            }
            TaskConfig::Hawking { t0, t1, .. } => {
                if !(*t0 >= 0.0 && t0 < t1) {
                    return Err(ScenarioError::config(p("t1"), "need 0 <= t0 < t1"));
                }
                if *t1 > t_max {
                    return Err(ScenarioError::config(p("t1"), format!("exceeds congruence.t_max = {t_max}")));
                }
            }
            TaskConfig::Trapped { .. } => {}
            TaskConfig::Penrose { n_prime, .. } => self.check_n_prime(n_prime, &p("n_prime"))?,
        }
        Ok(())
    }
}
