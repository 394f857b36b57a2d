//! Converse direction: build a small seed whose congruence breaks entropy
//! convexity where the null curvature gap is negative.
//!
//! The seed is a box patch `u in [-delta, delta]^m` mapped by a second-order
//! exponential map at `p` into the spacelike hyperplane orthogonal to `e0`,
//! bent along `e1` so that its second fundamental form along `e0 + e1` is
//! `lambda` times the identity at `p`. Here `v = a (e0 + e1)`.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::Serialize;

use crate::congruence::{null_normals, Congruence, CongruenceOptions, Generator, Orientation, SeedSurface};
use crate::error::{Error, Result};
use crate::geometry::{gram_schmidt_step, quad_v, MetricSpec};
use crate::quadrature::{AxisRule, RuleKind};
use crate::transport::{convexity_report, uniform_grid, ConvexityVerdict, InterpolationReport, Measure};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    /// `0` without a weight, `-dV(e0 + e1) / (N - n + 1)` with one.
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessOptions {
    /// Entropy exponent `N`.
    pub exponent: f64,
    pub lambda: Lambda,
    pub delta: f64,
    pub span: f64,
    pub max_halvings: usize,
    pub nodes_per_axis: usize,
    pub grid_points: usize,
}

impl WitnessOptions {
    pub fn new(exponent: f64) -> Self {
        WitnessOptions {
            exponent,
            lambda: Lambda::Auto,
            delta: 0.1,
            span: 0.1,
            max_halvings: 12,
            nodes_per_axis: 5,
            grid_points: crate::transport::DEFAULT_GRID_POINTS,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessAttempt {
    pub delta: f64,
    pub span: f64,
    pub min_slack: Option<f64>,
    pub margin: f64,
    pub verdict: ConvexityVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessOutcome {
    Violation,
    /// Shrink limit reached without a violation.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessReport {
    pub point: Vec<f64>,
    pub direction: Vec<f64>,
    pub exponent: f64,
    /// Bakry-Emery null gap at `(p, v)` with the entropy exponent.
    pub gap: f64,
    pub lambda: f64,
    pub attempts: Vec<WitnessAttempt>,
    pub outcome: WitnessOutcome,
    /// Report of the violating attempt, or of the last one.
    pub report: InterpolationReport,
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Seed map strings over `u0..u{m-1}` plus the constants they use.
fn seed_map(
    p: &[f64],
    e1: &DVector<f64>,
    rest: &[DVector<f64>],
    gamma: &[f64],
    lambda: f64,
) -> (Vec<String>, BTreeMap<String, f64>) {
    let d = p.len();
    let m = rest.len();
    let mut c = BTreeMap::new();
    let h = if lambda == 0.0 {
        "0".to_string()
    } else {
        c.insert("c_s".to_string(), -lambda.signum());
        c.insert("c_r".to_string(), 1.0 / lambda.abs());
        let r2: Vec<String> = (0..m).map(|i| format!("u{i}^2")).collect();
        format!("c_s*(c_r - sqrt(c_r^2 - ({})))", r2.join(" + "))
    };
    let x: Vec<String> = (0..d)
        .map(|mu| {
            c.insert(format!("c_a{mu}"), e1[mu]);
            let mut terms = vec![format!("({h})*c_a{mu}")];
            for (i, b) in rest.iter().enumerate() {
                c.insert(format!("c_b{i}_{mu}"), b[mu]);
                terms.push(format!("u{i}*c_b{i}_{mu}"));
            }
            format!("({})", terms.join(" + "))
        })
        .collect();
    let map = (0..d)
        .map(|mu| {
            c.insert(format!("c_p{mu}"), p[mu]);
            let mut s = format!("c_p{mu} + {}", x[mu]);
            for a in 0..d {
                for b in 0..d {
                    let g = gamma[(mu * d + a) * d + b];
                    if g != 0.0 {
                        s.push_str(&format!(" - 0.5*{}*{}*{}", num(g), x[a], x[b]));
                    }
                }
            }
            s
        })
        .collect();
    (map, c)
}

/// Searches for an entropy convexity violation near `(p, v)`.
pub fn witness_violation(metric: &MetricSpec, p: &[f64], v: &[f64], opts: &WitnessOptions) -> Result<WitnessReport> {
    let d = metric.dim();
    let n = (d - 1) as f64;
    if v.len() != d || p.len() != d {
        return Err(Error::Invalid(format!("point and direction must have {d} entries")));
    }
    let class = metric.classify_vector(p, v, metric.null_tol())?;
    if !class.is_future_null() {
        return Err(Error::Precondition("witness direction must be future-directed null".into()));
    }
    let pack = metric.curvature_at(p)?;
    let gap = metric.be_null_gap_with(&pack, v, opts.exponent)?;
    let g = &pack.metric;
    let frame = metric.orthonormal_frame(p)?;
    let e0 = frame[0].clone();
    let vv = DVector::from_row_slice(v);
    let a = -quad_v(g, &vv, &e0);
    let e1 = &vv / a - &e0;
    let mut basis = vec![e0.clone(), e1.clone()];
    for f in &frame[1..] {
        if basis.len() == d {
            break;
        }
        if let Some(u) = gram_schmidt_step(g, &basis, f.clone()) {
            basis.push(u);
        }
    }
    let rest: Vec<DVector<f64>> = basis[2..].to_vec();

    let lambda = match opts.lambda {
        Lambda::Value(l) => l,
        Lambda::Auto if !metric.has_weight() => 0.0,
        Lambda::Auto => {
            let denom = opts.exponent - n + 1.0;
            if !(denom > 0.0) {
                return Err(Error::Precondition(format!(
                    "weighted witness needs N > n - 1, got N = {}",
                    opts.exponent
                )));
            }
            let w = &e0 + &e1;
            -pack.dv(w.as_slice()) / denom
        }
    };
    let (map, constants) = seed_map(p, &e1, &rest, &pack.gamma, lambda);

    let grid = uniform_grid(opts.grid_points);
    let mut delta = opts.delta;
    let mut span = opts.span;
    let mut attempts = Vec::new();
    let mut last = None;
    for _ in 0..=opts.max_halvings {
        if lambda != 0.0 && delta * (rest.len() as f64).sqrt() >= 1.0 / lambda.abs() {
            delta *= 0.5;
            span *= 0.5;
            continue;
        }
        let axes = vec![
            AxisRule {
                lo: -delta,
                hi: delta,
                nodes: opts.nodes_per_axis,
                kind: RuleKind::Gauss,
            };
            rest.len()
        ];
        let seed = SeedSurface::new(&map, d, &constants, axes, Orientation::Standard)?;
        let centre = vec![0.0; rest.len()];
        let (l, lb) = null_normals(metric, &seed, &centre)?;
        let generator = if quad_v(g, &l, &vv).abs() <= quad_v(g, &lb, &vv).abs() {
            Generator::L
        } else {
            Generator::LBar
        };
        let opts_c = CongruenceOptions::new(1.0).with_generator(generator).with_span(span);
        let c = Congruence::build(metric, &seed, opts_c)?;
        let mu = Measure::uniform(&c)?;
        let report = convexity_report(&mu, opts.exponent, &grid)?;
        attempts.push(WitnessAttempt {
            delta,
            span,
            min_slack: report.min_slack,
            margin: report.margin,
            verdict: report.verdict,
        });
        let found = report.verdict == ConvexityVerdict::Violated;
        last = Some(report);
        if found {
            break;
        }
        delta *= 0.5;
        span *= 0.5;
    }
    let report = last.ok_or_else(|| {
        Error::Precondition("no admissible seed radius for the requested curvature".into())
    })?;
    let outcome = if report.verdict == ConvexityVerdict::Violated {
        WitnessOutcome::Violation
    } else {
        WitnessOutcome::Inconclusive
    };
    Ok(WitnessReport {
        point: p.to_vec(),
        direction: v.to_vec(),
        exponent: opts.exponent,
        gap,
        lambda,
        attempts,
        outcome,
        report,
    })
}
