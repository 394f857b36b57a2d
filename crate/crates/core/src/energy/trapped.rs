//! Weighted mean curvature of seeds, trapped-surface verdicts and the
//! focal-time bound they force.
//!
//! Sign convention: `H_{V,w} = -theta_w + dV(w)` where `theta_w` is the
//! expansion (trace of the second fundamental form along `w`). Positive
//! means the weighted area shrinks initially along `w`.

use serde::Serialize;

use crate::congruence::{
    node_geometry, Congruence, CongruenceOptions, FocalKind, Generator, RayExit, SeedSurface,
};
use crate::error::{Error, Result};
use crate::geometry::MetricSpec;
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, Serialize)]
pub struct NodeConvergence {
    pub theta: Vec<f64>,
    pub h_l: f64,
    pub h_lbar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrappedVerdict {
    Trapped,
    NotTrapped,
}

/// Mean curvature against the log-derivative of a small cap's measure.
#[derive(Debug, Clone, Serialize)]
pub struct CapCheck {
    pub node: usize,
    pub generator: Generator,
    pub mean_curvature: f64,
    /// `-(d/dt) log m(T_t(cap))` at `t = 0` by finite differences.
    pub measure_rate: f64,
    pub signs_agree: bool,
    pub difference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapOptions {
    pub node: Option<usize>,
    /// Half-width of the cap as a fraction of each parameter interval.
    pub relative_radius: f64,
    pub nodes_per_axis: usize,
    pub step: f64,
}

impl Default for CapOptions {
    fn default() -> Self {
        CapOptions {
            node: None,
            relative_radius: 1e-3,
            nodes_per_axis: 3,
            step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrappedReport {
    pub nodes: Vec<NodeConvergence>,
    pub min_h_l: f64,
    pub min_h_lbar: f64,
    pub epsilon: f64,
    pub verdict: TrappedVerdict,
    pub cap_checks: Vec<CapCheck>,
}

impl TrappedReport {
    /// `min` over nodes of `H_{V,w}` for one direction.
    pub fn epsilon_for(&self, generator: Generator) -> f64 {
        match generator {
            Generator::L => self.min_h_l,
            Generator::LBar => self.min_h_lbar,
        }
    }
}

fn weighted_h(metric: &MetricSpec, seed: &SeedSurface, theta: &[f64]) -> Result<(f64, f64)> {
    let ng = node_geometry(metric, seed, theta)?;
    let pack = metric.curvature_at(&ng.point.x)?;
    let h_l = -ng.expansion_l() + pack.dv(ng.l.as_slice());
    let h_lbar = -ng.expansion_lbar() + pack.dv(ng.lbar.as_slice());
    Ok((h_l, h_lbar))
}

fn cap_check(metric: &MetricSpec, seed: &SeedSurface, node: usize, gen: Generator, h: f64, o: &CapOptions) -> Result<CapCheck> {
    let theta = &seed.nodes()[node];
    let (x, w) = gauss_legendre(o.nodes_per_axis);
    let mut nodes = vec![vec![]];
    let mut weights = vec![1.0];
    for (a, ax) in seed.axes().iter().enumerate() {
        let r = o.relative_radius * (ax.hi - ax.lo) * 0.5;
        let mut nn = Vec::new();
        let mut nw = Vec::new();
        for (p, pw) in nodes.iter().zip(&weights) {
            for (xi, wi) in x.iter().zip(&w) {
                let mut q: Vec<f64> = p.clone();
                q.push(theta[a] + r * xi);
                nn.push(q);
                nw.push(pw * wi * r);
            }
        }
        nodes = nn;
        weights = nw;
    }
    let cap = seed.clone().with_nodes(nodes, weights);
    let dt = o.step;
    let c = Congruence::build(metric, &cap, CongruenceOptions::new(2.0 * dt).with_generator(gen))?;
    let m0 = c.cross_section_measure(0.0, true)?;
    let m1 = c.cross_section_measure(dt, true)?;
    let m2 = c.cross_section_measure(2.0 * dt, true)?;
    let rate = -(-3.0 * m0 + 4.0 * m1 - m2) / (2.0 * dt * m0);
    let difference = (rate - h).abs();
    Ok(CapCheck {
        node,
        generator: gen,
        mean_curvature: h,
        measure_rate: rate,
        signs_agree: rate.signum() == h.signum() || difference <= 1e-5 * (1.0 + h.abs()),
        difference,
    })
}

/// Weighted mean curvatures at every seed node, the trapped verdict and an
/// optional measure-derivative cross-check at one node.
pub fn converging_test(metric: &MetricSpec, seed: &SeedSurface, cap: Option<CapOptions>) -> Result<TrappedReport> {
    let nodes = seed
        .nodes()
        .iter()
        .map(|th| {
            let (h_l, h_lbar) = weighted_h(metric, seed, th)?;
            Ok(NodeConvergence {
                theta: th.clone(),
                h_l,
                h_lbar,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if nodes.is_empty() {
        return Err(Error::Invalid("seed has no nodes".into()));
    }
    let min_h_l = nodes.iter().map(|n| n.h_l).fold(f64::INFINITY, f64::min);
    let min_h_lbar = nodes.iter().map(|n| n.h_lbar).fold(f64::INFINITY, f64::min);
    let verdict = if min_h_l > 0.0 && min_h_lbar > 0.0 {
        TrappedVerdict::Trapped
    } else {
        TrappedVerdict::NotTrapped
    };
    let mut cap_checks = Vec::new();
    if let Some(o) = cap {
        let k = o.node.unwrap_or(nodes.len() / 2);
        if k >= nodes.len() {
            return Err(Error::Invalid(format!("cap node {k} out of range")));
        }
        cap_checks.push(cap_check(metric, seed, k, Generator::L, nodes[k].h_l, &o)?);
        cap_checks.push(cap_check(metric, seed, k, Generator::LBar, nodes[k].h_lbar, &o)?);
    }
    Ok(TrappedReport {
        nodes,
        min_h_l,
        min_h_lbar,
        epsilon: min_h_l.min(min_h_lbar),
        verdict,
        cap_checks,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PenroseRay {
    pub ray: usize,
    pub focal_time: Option<f64>,
    pub focal_kind: Option<FocalKind>,
    pub exit: RayExit,
    pub t_end: f64,
    /// `Some(true)` focal within `N'/eps`, `Some(false)` survived past it,
    /// `None` ended before the bound without focusing.
    pub within_bound: Option<bool>,
    pub within_unit_bound: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PenroseVerdict {
    /// Every ray focuses within `N'/eps`.
    IncompletenessForced,
    /// Some ray passes the bound without focusing.
    NotForced,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct PenroseReport {
    pub epsilon: f64,
    pub n_prime: f64,
    /// `N' / (eps span)` in the congruence's affine parameter.
    pub bound: f64,
    /// `1 / (eps span)`.
    pub unit_bound: f64,
    pub max_focal_time: Option<f64>,
    pub rays: Vec<PenroseRay>,
    pub verdict: PenroseVerdict,
    pub unit_bound_holds: bool,
}

/// Relative slack on the focal comparison.
const BOUND_RTOL: f64 = 1e-6;

fn within(t: Option<f64>, t_end: f64, bound: f64) -> Option<bool> {
    match t {
        Some(t) => Some(t <= bound * (1.0 + BOUND_RTOL)),
        None if t_end >= bound => Some(false),
        None => None,
    }
}

/// Checks each ray's focal time against `N'/eps` and `1/eps`.
pub fn penrose_bound(c: &Congruence, epsilon: f64, n_prime: f64) -> Result<PenroseReport> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Precondition(format!(
            "focal bound needs a converging seed (eps > 0), got eps = {epsilon}"
        )));
    }
    let n = (c.metric.dim() - 1) as f64;
    if !(n_prime >= n - 1.0) {
        return Err(Error::Precondition(format!("N' must be at least {}", n - 1.0)));
    }
    let span = c.options.span;
    let bound = n_prime / (epsilon * span);
    let unit_bound = 1.0 / (epsilon * span);
    let rays: Vec<PenroseRay> = c
        .rays
        .iter()
        .map(|r| {
            let ft = r.focal_time();
            PenroseRay {
                ray: r.node,
                focal_time: ft,
                focal_kind: r.focal.map(|f| f.kind),
                exit: r.exit,
                t_end: r.t_end(),
                within_bound: within(ft, r.t_end(), bound),
                within_unit_bound: within(ft, r.t_end(), unit_bound),
            }
        })
        .collect();
    let verdict = if rays.iter().any(|r| r.within_bound == Some(false)) {
        PenroseVerdict::NotForced
    } else if rays.iter().all(|r| r.within_bound == Some(true)) {
        PenroseVerdict::IncompletenessForced
    } else {
        PenroseVerdict::Inconclusive
    };
    let max_focal_time = rays.iter().filter_map(|r| r.focal_time).reduce(f64::max);
    let unit_bound_holds = rays.iter().all(|r| r.within_unit_bound == Some(true));
    Ok(PenroseReport {
        epsilon,
        n_prime,
        bound,
        unit_bound,
        max_focal_time,
        rays,
        verdict,
        unit_bound_holds,
    })
}
