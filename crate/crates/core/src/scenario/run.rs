//! Task execution, verdict categories, and report files.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use super::{load, EpsilonSource, Expectation, Prepared, ScenarioError, TaskConfig, Tolerances};
use crate::congruence::{Congruence, Generator};
use crate::energy::{
    converging_test, hawking_check, nec_scan, penrose_bound, witness_violation, CapOptions, HawkingVerdict,
    Lambda, PenroseVerdict, ScanOptions, ScanReport, ScanVerdict, TrappedReport, TrappedVerdict, WitnessOptions,
    WitnessOutcome,
};
use crate::error::Error;
use crate::transport::{convexity_report, ConvexityVerdict, DensitySpec, InterpolationReport, Measure};

/// What a task found, in the vocabulary of the `expect` field.
pub type Category = Expectation;

const ASSUMPTIONS: [&str; 3] = [
    "completeness: a ray counts as complete when it reaches congruence.t_max with no focal point, chart exit, or curvature blowup",
    "acausality: cross-sections are images of a spacelike seed under the transport map before any focal point, hence acausal by construction",
    "discretization: measures and areas are quadrature sums over the seed nodes",
];

#[derive(Debug, Clone, Serialize)]
pub struct TaskRecord {
    pub index: usize,
    pub kind: &'static str,
    pub expect: Option<Expectation>,
    pub category: Category,
    pub matches: bool,
    pub summary: String,
    pub files: Vec<String>,
    pub details: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub description: String,
    pub version: &'static str,
    pub metric: Value,
    pub exponents: Value,
    pub congruence: Option<Value>,
    pub grid_points: usize,
    pub tolerances: Tolerances,
    pub assumptions: Vec<&'static str>,
    pub tasks: Vec<TaskRecord>,
    pub exit_code: i32,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

fn worst(categories: impl IntoIterator<Item = Category>) -> Category {
    let mut out = Category::Holds;
    for c in categories {
        match c {
            Category::Violated => return Category::Violated,
            Category::Inconclusive => out = Category::Inconclusive,
            Category::Holds => {}
        }
    }
    out
}

/// 0 when every task matches its expectation (or holds, without one); else
/// 1 if some mismatched task found a violation, 2 otherwise.
pub fn exit_code(tasks: &[TaskRecord]) -> i32 {
    let bad: Vec<_> = tasks.iter().filter(|t| !t.matches).collect();
    if bad.is_empty() {
        0
    } else if bad.iter().any(|t| t.category == Category::Violated) {
        1
    } else {
        2
    }
}

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// `name` for a single report, `name` with an index suffix otherwise.
fn suffixed(stem: &str, j: usize, count: usize) -> String {
    if count == 1 {
        format!("{stem}.csv")
    } else {
        format!("{stem}_{j}.csv")
    }
}

struct Files {
    dir: PathBuf,
}

impl Files {
    fn csv(&self, name: String, header: &[&str], rows: &[Vec<String>]) -> Result<String, ScenarioError> {
        let path = self.dir.join(&name);
        let out = |e: &dyn std::fmt::Display| ScenarioError::Output(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(|e| out(&e))?;
        w.write_record(header).map_err(|e| out(&e))?;
        for r in rows {
            w.write_record(r).map_err(|e| out(&e))?;
        }
        w.flush().map_err(|e| out(&e))?;
        Ok(name)
    }

    fn entropy(&self, name: String, r: &InterpolationReport) -> Result<String, ScenarioError> {
        let n = r.t_grid.len();
        let mut rows = Vec::new();
        for (i, s) in r.entropy.iter().enumerate() {
            let interior = i > 0 && i + 1 < n;
            let tail = if !interior {
                vec![f(*s), f(0.0), f(0.0)]
            } else if let Some(sl) = r.slack.get(i - 1) {
                let local = r
                    .local_slack
                    .iter()
                    .filter(|row| !row.is_empty())
                    .map(|row| row[i - 1])
                    .fold(f64::INFINITY, f64::min);
                vec![f(r.chord[i - 1]), f(*sl), f(local)]
            } else {
                vec![String::new(); 3]
            };
            let mut row = vec![f(r.t_grid[i]), f(*s)];
            row.extend(tail);
            rows.push(row);
        }
        self.csv(name, &["t", "S", "chord", "slack", "min_ray_slack"], &rows)
    }

    fn rays(&self, name: String, mu: &Measure, grid: &[f64]) -> Result<String, ScenarioError> {
        let c = mu.congruence();
        let mut rows = Vec::new();
        for (k, ray) in c.rays.iter().enumerate() {
            for &t in grid {
                if !ray.is_alive(t) {
                    break;
                }
                let (Ok(s), Ok(rho)) = (c.sample(k, t), mu.pushforward_density(k, t)) else {
                    break;
                };
                rows.push(vec![k.to_string(), f(t), f(s.tr_u), f(s.y), f(s.z), f(rho)]);
            }
        }
        self.csv(name, &["ray", "t", "trU", "y", "z", "rho"], &rows)
    }

    fn scan(&self, name: String, r: &ScanReport, dim: usize) -> Result<String, ScenarioError> {
        let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
        header.push("min_gap".into());
        header.extend((0..dim).map(|i| format!("v{i}")));
        let rows: Vec<Vec<String>> = r
            .per_point
            .iter()
            .map(|p| {
                let mut row: Vec<String> = p.point.iter().map(|x| f(*x)).collect();
                row.push(f(p.min_gap));
                row.extend(p.direction.iter().map(|x| f(*x)));
                row
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        self.csv(name, &header, &rows)
    }
}

fn convexity_category(v: ConvexityVerdict) -> Category {
    match v {
        ConvexityVerdict::Consistent => Category::Holds,
        ConvexityVerdict::Violated => Category::Violated,
        ConvexityVerdict::Marginal | ConvexityVerdict::Incomplete => Category::Inconclusive,
    }
}

fn convexity_line(r: &InterpolationReport) -> String {
    let tail = match (&r.incomplete, r.min_slack, r.argmin_t) {
        (Some(inc), _, _) => format!("ray {} dies at t = {:.6}", inc.ray, inc.t),
        (None, Some(s), Some(t)) => format!("min slack {s:.6e} at t = {t:.6}"),
        _ => "no interior grid points".to_string(),
    };
    format!("N' = {}: {:?}, {tail}", r.n_prime, r.verdict)
}

struct Outcome {
    category: Category,
    summary: String,
    files: Vec<String>,
    details: Value,
}

struct Context<'a> {
    prepared: &'a Prepared,
    congruence: Option<&'a Congruence>,
    measure: Option<&'a Measure<'a>>,
    trapped: Option<TrappedReport>,
    files: Files,
}

impl Context<'_> {
    fn congruence(&self) -> &Congruence {
        self.congruence.expect("built when a task needs it")
    }

    fn run(&mut self, idx: usize, task: &TaskConfig) -> Result<Outcome, ScenarioError> {
        let rt = |e: Error| ScenarioError::Runtime {
            task: format!("tasks[{idx}] ({})", task.kind()),
            source: e,
        };
        let p = self.prepared;
        let s = &p.scenario;
        match task {
            TaskConfig::CurvatureScan { sampler, directions, rng_seed, n_prime, .. } => {
                let exps = s.exponents_for(*n_prime);
                let mut reports = Vec::new();
                let mut files = Vec::new();
                let mut lines = Vec::new();
                for (j, np) in exps.iter().enumerate() {
                    let opts = ScanOptions {
                        n_prime: *np,
                        random_directions: *directions,
                        rng_seed: *rng_seed,
                        gap_tol: s.tolerances.gap,
                    };
                    let r = nec_scan(&p.metric, sampler, &opts).map_err(rt)?;
                    files.push(self.files.scan(suffixed(&format!("task{idx}_scan"), j, exps.len()), &r, p.metric.dim())?);
                    lines.push(format!(
                        "N' = {}: min gap {:.6e} at {} along {} over {} samples ({} skipped)",
                        r.n_prime,
                        r.min_gap,
                        fmt_vec(&r.argmin_point),
                        fmt_vec(&r.argmin_direction),
                        r.samples,
                        r.skipped
                    ));
                    reports.push(r);
                }
                Ok(Outcome {
                    category: worst(reports.iter().map(|r| match r.verdict {
                        ScanVerdict::Holds => Category::Holds,
                        ScanVerdict::Violated => Category::Violated,
                    })),
                    summary: lines.join("; "),
                    files,
                    details: to_json(&reports),
                })
            }
            TaskConfig::Convexity { n_prime, .. } => {
                let mu = self.measure.expect("built when a task needs it");
                let exps = s.exponents_for(*n_prime);
                let mut reports = Vec::new();
                let mut files = Vec::new();
                for (j, np) in exps.iter().enumerate() {
                    let r = convexity_report(mu, *np, &p.grid).map_err(rt)?;
                    files.push(self.files.entropy(suffixed(&format!("task{idx}_entropy"), j, exps.len()), &r)?);
                    reports.push(r);
                }
                files.push(self.files.rays(format!("task{idx}_rays.csv"), mu, &p.grid)?);
                Ok(Outcome {
                    category: worst(reports.iter().map(|r| convexity_category(r.verdict))),
                    summary: reports.iter().map(convexity_line).collect::<Vec<_>>().join("; "),
                    files,
                    details: to_json(&reports),
                })
            }
            TaskConfig::Witness {
                point,
                direction,
                exponent,
                lambda,
                delta,
                span,
                max_halvings,
                nodes_per_axis,
                ..
            } => {
                let mut opts = WitnessOptions::new(exponent.unwrap_or(s.exponents.n));
                opts.lambda = lambda.map_or(Lambda::Auto, Lambda::Value);
                opts.delta = *delta;
                opts.span = *span;
                opts.max_halvings = *max_halvings;
                opts.nodes_per_axis = *nodes_per_axis;
                opts.grid_points = p.grid.len();
                let r = witness_violation(&p.metric, point, direction, &opts).map_err(rt)?;
                let file = self.files.entropy(format!("task{idx}_entropy.csv"), &r.report)?;
                let last = r.attempts.last().expect("at least one attempt");
                let slack = match (r.report.min_slack, r.report.argmin_t) {
                    (Some(s), Some(t)) => format!("min slack {s:.6e} at t = {t:.6}"),
                    _ => format!("{:?}", r.report.verdict),
                };
                let summary = format!(
                    "{:?} at point {} along {}: gap {:.6e}, {slack} (delta {:.3e}, span {:.3e}, {} attempts)",
                    r.outcome,
                    fmt_vec(&r.point),
                    fmt_vec(&r.direction),
                    r.gap,
                    last.delta,
                    last.span,
                    r.attempts.len()
                );
                Ok(Outcome {
                    category: match r.outcome {
                        WitnessOutcome::Violation => Category::Violated,
                        WitnessOutcome::Inconclusive => Category::Inconclusive,
                    },
                    summary,
                    files: vec![file],
                    details: to_json(&r),
                })
            }
            TaskConfig::Hawking { t0, t1, subset, .. } => {
                let r = hawking_check(self.congruence(), *t0, *t1, subset.as_deref()).map_err(rt)?;
                let m1 = r.m1.map_or("n/a".to_string(), |m| format!("{m:.10e}"));
                let (category, what) = match r.verdict {
                    HawkingVerdict::Monotone => (Category::Holds, "monotone".to_string()),
                    HawkingVerdict::NonMonotoneIncomplete { focal_at } => {
                        (Category::Violated, format!("decreasing, focal point at t = {focal_at:.8}"))
                    }
                    HawkingVerdict::NonMonotoneComplete => (Category::Violated, "decreasing with no focal point".to_string()),
                    HawkingVerdict::InconclusiveIncomplete { dead_at } => {
                        (Category::Inconclusive, format!("a ray dies at t = {dead_at:.8}"))
                    }
                };
                Ok(Outcome {
                    category,
                    summary: format!("m({}) = {:.10e}, m({}) = {m1}: {what}", r.t0, r.m0, r.t1),
                    files: Vec::new(),
                    details: to_json(&r),
                })
            }
            TaskConfig::Trapped { cap_check, .. } => {
                let seed = p.seed.as_ref().expect("validated");
                let cap = cap_check.then(CapOptions::default);
                let r = converging_test(&p.metric, seed, cap).map_err(rt)?;
                let summary = format!(
                    "{:?}: min H_L = {:.6e}, min H_Lbar = {:.6e}, epsilon = {:.6e}",
                    r.verdict, r.min_h_l, r.min_h_lbar, r.epsilon
                );
                let out = Outcome {
                    category: match r.verdict {
                        TrappedVerdict::Trapped => Category::Holds,
                        TrappedVerdict::NotTrapped => Category::Violated,
                    },
                    summary,
                    files: Vec::new(),
                    details: to_json(&r),
                };
                self.trapped = Some(r);
                Ok(out)
            }
            TaskConfig::Penrose { n_prime, epsilon, .. } => {
                if self.trapped.is_none() {
                    let seed = p.seed.as_ref().expect("validated");
                    self.trapped = Some(converging_test(&p.metric, seed, None).map_err(rt)?);
                }
                let t = self.trapped.as_ref().expect("set above");
                let eps = match epsilon {
                    EpsilonSource::Generator => t.epsilon_for(p.congruence.generator),
                    EpsilonSource::Both => t.epsilon,
                };
                if !(eps > 0.0) {
                    return Ok(Outcome {
                        category: Category::Inconclusive,
                        summary: format!("epsilon = {eps:.6e} is not positive; no focal bound applies"),
                        files: Vec::new(),
                        details: json!({ "epsilon": eps }),
                    });
                }
                let mut reports = Vec::new();
                for np in s.exponents_for(*n_prime) {
                    reports.push(penrose_bound(self.congruence(), eps, np).map_err(rt)?);
                }
                let lines: Vec<String> = reports
                    .iter()
                    .map(|r| {
                        let focal = r.max_focal_time.map_or("none".to_string(), |t| format!("{t:.8}"));
                        format!(
                            "N' = {}: {:?}, bound {:.8}, unit bound {:.8}, latest focal time {focal}",
                            r.n_prime, r.verdict, r.bound, r.unit_bound
                        )
                    })
                    .collect();
                Ok(Outcome {
                    category: worst(reports.iter().map(|r| match r.verdict {
                        PenroseVerdict::IncompletenessForced => Category::Holds,
                        PenroseVerdict::NotForced => Category::Violated,
                        PenroseVerdict::Inconclusive => Category::Inconclusive,
                    })),
                    summary: format!("epsilon = {eps:.6e}; {}", lines.join("; ")),
                    files: Vec::new(),
                    details: to_json(&reports),
                })
            }
        }
    }
}

/// Runs every task and writes `report.json` plus CSV tables into `out_dir`.
pub fn execute(prepared: &Prepared, out_dir: &Path) -> Result<RunReport, ScenarioError> {
    std::fs::create_dir_all(out_dir).map_err(|e| ScenarioError::Output(format!("{}: {e}", out_dir.display())))?;
    let s = &prepared.scenario;
    let needs_congruence = s.tasks.iter().any(TaskConfig::needs_congruence);
    let congruence = match (needs_congruence, &prepared.seed) {
        (true, Some(seed)) => Some(Congruence::build(&prepared.metric, seed, prepared.congruence).map_err(|e| {
            ScenarioError::Runtime {
                task: "congruence".into(),
                source: e,
            }
        })?),
        _ => None,
    };
    let measure = match (&congruence, s.tasks.iter().any(|t| matches!(t, TaskConfig::Convexity { .. }))) {
        (Some(c), true) => {
            let spec = match &s.measure.density {
                Some(d) => DensitySpec::Expr(d.clone()),
                None => DensitySpec::Uniform,
            };
            let constants = s.seed.as_ref().map(|sd| sd.constants.clone()).unwrap_or_default();
            Some(Measure::build(c, &spec, &constants).map_err(|e| ScenarioError::config("measure", e.to_string()))?)
        }
        _ => None,
    };
    let mut ctx = Context {
        prepared,
        congruence: congruence.as_ref(),
        measure: measure.as_ref(),
        trapped: None,
        files: Files { dir: out_dir.to_path_buf() },
    };
    let mut tasks = Vec::new();
    for (i, task) in s.tasks.iter().enumerate() {
        let o = ctx.run(i, task)?;
        let matches = match task.expect() {
            Some(e) => e == o.category,
            None => o.category == Category::Holds,
        };
        tasks.push(TaskRecord {
            index: i,
            kind: task.kind(),
            expect: task.expect(),
            category: o.category,
            matches,
            summary: o.summary,
            files: o.files,
            details: o.details,
        });
    }
    let m = &prepared.metric;
    let congruence_info = congruence.as_ref().map(|c| {
        json!({
            "generator": match c.options.generator { Generator::L => "l", Generator::LBar => "lbar" },
            "span": c.options.span,
            "t_max": c.options.t_max,
            "rays": c.len(),
            "rtol": c.options.ray.ode.rtol,
            "atol": c.options.ray.ode.atol,
            "first_focal": c.first_focal().map(|(k, t)| json!({ "ray": k, "t": t })),
            "max_gram_drift": c.rays.iter().map(|r| r.max_gram_drift).fold(0.0, f64::max),
            "max_null_drift": c.rays.iter().map(|r| r.max_null_drift).fold(0.0, f64::max),
        })
    });
    let report = RunReport {
        scenario: s.name.clone(),
        description: s.description.clone(),
        version: env!("CARGO_PKG_VERSION"),
        metric: json!({
            "name": m.name(),
            "dim": m.dim(),
            "weighted": m.has_weight(),
            "params": m.params(),
        }),
        exponents: json!({ "n": s.exponents.n, "n_prime": s.exponents.n_prime }),
        congruence: congruence_info,
        grid_points: prepared.grid.len(),
        tolerances: s.tolerances.clone(),
        assumptions: ASSUMPTIONS.to_vec(),
        exit_code: exit_code(&tasks),
        tasks,
        out_dir: out_dir.to_path_buf(),
    };
    let path = out_dir.join("report.json");
    let text = serde_json::to_string_pretty(&report).map_err(|e| ScenarioError::Output(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| ScenarioError::Output(format!("{}: {e}", path.display())))?;
    Ok(report)
}

/// Output directory: the override, else `output.dir`, else `nullflow-out/<name>`.
pub fn output_dir(prepared: &Prepared, out: Option<&Path>) -> PathBuf {
    match (out, &prepared.scenario.output.dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => Path::new("nullflow-out").join(&prepared.scenario.name),
    }
}

/// Loads, validates, and executes a scenario file.
pub fn run_file(path: &Path, out: Option<&Path>) -> Result<RunReport, ScenarioError> {
    let prepared = load(path)?.validate()?;
    execute(&prepared, &output_dir(&prepared, out))
}
