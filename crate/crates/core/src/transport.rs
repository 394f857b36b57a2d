//! Measures on seed cross-sections, their pushforwards along the null flow,
//! and Renyi entropy convexity.
//!
//! Everything is a quadrature over seed nodes. The reference measure on the
//! seed is `m_H = e^{-V} vol`, so node `k` carries mass weight
//! `W_k = w_k e^{-V(x_k)} J_k` and the density satisfies `sum W_k rho_k = 1`.
//! Transport along ray `k` gives `rho_t = rho_0 e^{V_t - V_0} / det A`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::congruence::Congruence;
use crate::dsl::{Expression, Scope};
use crate::error::{Error, Result};

/// Probability measure on the seed, absolutely continuous w.r.t. `m_H`.
#[derive(Debug, Clone)]
pub struct Measure<'c> {
    congruence: &'c Congruence,
    rho0: Vec<f64>,
    mass_weights: Vec<f64>,
    normalization: f64,
}

/// How to build the initial density.
#[derive(Debug, Clone, PartialEq)]
pub enum DensitySpec {
    Uniform,
    /// Unnormalized density over the seed parameters `u0, u1, ...`.
    Expr(String),
}

impl<'c> Measure<'c> {
    /// From unnormalized nonnegative node values.
    pub fn from_values(congruence: &'c Congruence, values: Vec<f64>) -> Result<Self> {
        if values.len() != congruence.len() {
            return Err(Error::Invalid(format!(
                "{} density values for {} nodes",
                values.len(),
                congruence.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Invalid(format!("density must be finite and nonnegative, got {v}")));
        }
        let area = congruence.area_weights();
        let mass_weights = congruence
            .nodes
            .iter()
            .zip(area)
            .map(|(n, a)| Ok(a * (-congruence.metric.weight_at(&n.point.x)?).exp()))
            .collect::<Result<Vec<_>>>()?;
        let total: f64 = mass_weights.iter().zip(&values).map(|(w, r)| w * r).sum();
        if !(total > 0.0) {
            return Err(Error::Invalid("density has zero total mass".into()));
        }
        let rho0 = values.iter().map(|r| r / total).collect();
        Ok(Measure {
            congruence,
            rho0,
            mass_weights,
            normalization: total,
        })
    }

    pub fn uniform(congruence: &'c Congruence) -> Result<Self> {
        Self::from_values(congruence, vec![1.0; congruence.len()])
    }

    pub fn from_density(
        congruence: &'c Congruence,
        density: &str,
        constants: &BTreeMap<String, f64>,
    ) -> Result<Self> {
        let scope = Scope::params(congruence.seed.param_dim()).with_constants(constants);
        let e = Expression::parse(density, &scope).map_err(|e| Error::parse("measure.density", e))?;
        let values = congruence
            .nodes
            .iter()
            .map(|n| e.eval(&n.point.theta).map_err(Error::from))
            .collect::<Result<Vec<_>>>()?;
        Self::from_values(congruence, values)
    }

    pub fn build(congruence: &'c Congruence, spec: &DensitySpec, constants: &BTreeMap<String, f64>) -> Result<Self> {
        match spec {
            DensitySpec::Uniform => Self::uniform(congruence),
            DensitySpec::Expr(s) => Self::from_density(congruence, s, constants),
        }
    }

    pub fn congruence(&self) -> &Congruence {
        self.congruence
    }

    /// Normalized node densities relative to `m_H`.
    pub fn rho0(&self) -> &[f64] {
        &self.rho0
    }

    /// `W_k = w_k e^{-V} J_k` on the seed.
    pub fn mass_weights(&self) -> &[f64] {
        &self.mass_weights
    }

    /// The factor the raw density was divided by.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// `m_H` of the nodes carrying mass.
    pub fn support_measure(&self) -> f64 {
        self.mass_weights
            .iter()
            .zip(&self.rho0)
            .filter(|(_, r)| **r > 0.0)
            .map(|(w, _)| w)
            .sum()
    }

    fn carries_mass(&self, k: usize) -> bool {
        self.rho0[k] > 0.0
    }

    /// Density of the transported measure at `T_t(x_k)` relative to `m_H`.
    pub fn pushforward_density(&self, k: usize, t: f64) -> Result<f64> {
        let c = self.congruence;
        let ray = c.rays.get(k).ok_or_else(|| Error::Invalid(format!("no ray {k}")))?;
        let dead = |reason: String| Error::DeadRay { ray: k, t, reason };
        if !ray.is_alive(t) {
            return Err(dead(match ray.focal {
                Some(f) => format!("focal point at t = {}", f.t),
                None => format!("{:?} at t = {}", ray.exit, ray.t_end()),
            }));
        }
        let (a, _) = ray.jacobi(t).ok_or_else(|| dead("outside the integrated range".into()))?;
        let y = a.determinant();
        if !(y > c.options.ray.y_tol) {
            return Err(dead(format!("area density {y:e} at or below threshold")));
        }
        let d = c.metric.dim();
        let st = ray.raw_state(t).expect("alive");
        let v_t = c.metric.weight_at(&st[..d])?;
        let v_0 = c.metric.weight_at(&c.nodes[k].point.x)?;
        Ok(self.rho0[k] * (v_t - v_0).exp() / y)
    }

    /// `sum_k w_k rho_t(T_t x_k) e^{-V(T_t x_k)} y_k(t) J_k`; equals one.
    pub fn mass_at(&self, t: f64) -> Result<f64> {
        let c = self.congruence;
        let d = c.metric.dim();
        let area = c.area_weights();
        let mut total = 0.0;
        for k in 0..c.len() {
            if !self.carries_mass(k) {
                continue;
            }
            let rho = self.pushforward_density(k, t)?;
            let ray = &c.rays[k];
            let st = ray.raw_state(t).expect("alive");
            let y = ray.jacobi(t).expect("alive").0.determinant();
            total += area[k] * rho * (-c.metric.weight_at(&st[..d])?).exp() * y;
        }
        Ok(total)
    }

    /// `f_k(t) = rho_t(T_t x_k)^{-1/N'}`.
    pub fn ray_profile(&self, k: usize, t: f64, n_prime: f64) -> Result<f64> {
        Ok(self.pushforward_density(k, t)?.powf(-1.0 / n_prime))
    }

    /// `S_{N'}(mu_t) = -sum_k W_k rho_0,k f_k(t)`.
    pub fn renyi_entropy(&self, t: f64, n_prime: f64) -> Result<f64> {
        check_exponent(self.congruence, n_prime)?;
        let mut s = 0.0;
        for k in 0..self.rho0.len() {
            if self.carries_mass(k) {
                s -= self.mass_weights[k] * self.rho0[k] * self.ray_profile(k, t, n_prime)?;
            }
        }
        Ok(s)
    }
}

fn check_exponent(c: &Congruence, n_prime: f64) -> Result<()> {
    let n = (c.metric.dim() - 1) as f64;
    if !(n_prime >= n - 1.0) || !n_prime.is_finite() {
        return Err(Error::Precondition(format!(
            "entropy exponent must be at least {} (got {n_prime})",
            n - 1.0
        )));
    }
    Ok(())
}

/// Uniform grid of `n` points on `[0, 1]`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

pub const DEFAULT_GRID_POINTS: usize = 33;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexityVerdict {
    /// Every slack is at least `-slack_tol`.
    Consistent,
    /// Some slack is below `-100 slack_tol`.
    Violated,
    /// The smallest slack lies between the two thresholds.
    Marginal,
    /// A mass-carrying ray focuses inside `[0, 1]`.
    Incomplete,
}

#[derive(Debug, Clone, Serialize)]
pub struct Incompleteness {
    pub ray: usize,
    pub t: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InterpolationReport {
    pub n_prime: f64,
    pub t_grid: Vec<f64>,
    /// Entropy at each grid point (a prefix of the grid when incomplete).
    pub entropy: Vec<f64>,
    /// Chord `(1-t) S_0 + t S_1` on the interior grid.
    pub chord: Vec<f64>,
    /// `chord - S` on the interior grid.
    pub slack: Vec<f64>,
    /// `f_k(t)` per ray, row per ray (empty rows for massless rays).
    pub ray_profile: Vec<Vec<f64>>,
    /// Per-ray localized slack `f_k(t) - (1-t) f_k(0) - t f_k(1)` on the interior grid.
    pub local_slack: Vec<Vec<f64>>,
    pub min_slack: Option<f64>,
    pub argmin_t: Option<f64>,
    pub min_local_slack: Option<f64>,
    pub slack_tol: f64,
    pub margin: f64,
    pub mass_error: f64,
    pub verdict: ConvexityVerdict,
    pub incomplete: Option<Incompleteness>,
}

impl InterpolationReport {
    pub fn interior_t(&self) -> &[f64] {
        let n = self.t_grid.len();
        if n < 2 {
            &[]
        } else {
            &self.t_grid[1..n - 1]
        }
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::Invalid("t-grid needs at least two points".into()));
    }
    if grid[0] != 0.0 || *grid.last().unwrap() != 1.0 {
        return Err(Error::Invalid("t-grid must start at 0 and end at 1".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid("t-grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Entropies along the interpolation, chord slacks and per-ray slacks.
pub fn convexity_report(m: &Measure, n_prime: f64, grid: &[f64]) -> Result<InterpolationReport> {
    check_grid(grid)?;
    let c = m.congruence;
    check_exponent(c, n_prime)?;
    let nrays = c.len();

    // First mass-carrying focal point inside the interpolation.
    let mut incomplete: Option<Incompleteness> = None;
    for k in 0..nrays {
        if !m.carries_mass(k) {
            continue;
        }
        let ray = &c.rays[k];
        let t_dead = match ray.focal {
            Some(f) => Some(f.t),
            None if ray.t_end() < 1.0 => Some(ray.t_end()),
            None => None,
        };
        if let Some(t) = t_dead.filter(|t| *t <= 1.0) {
            if incomplete.as_ref().is_none_or(|i| t < i.t) {
                incomplete = Some(Incompleteness { ray: k, t });
            }
        }
    }
    let valid: Vec<f64> = match &incomplete {
        Some(i) => grid.iter().copied().take_while(|t| *t < i.t).collect(),
        None => grid.to_vec(),
    };

    let mut profile = vec![Vec::new(); nrays];
    let mut entropy = Vec::with_capacity(valid.len());
    let mut mass_error: f64 = 0.0;
    for &t in &valid {
        let mut s = 0.0;
        for k in 0..nrays {
            if !m.carries_mass(k) {
                continue;
            }
            let f = match m.ray_profile(k, t, n_prime) {
                Ok(f) => f,
                // A ray can die between grid points without a detected focus.
                Err(Error::DeadRay { ray, t, .. }) if incomplete.is_none() => {
                    incomplete = Some(Incompleteness { ray, t });
                    break;
                }
                Err(e) => return Err(e),
            };
            profile[k].push(f);
            s -= m.mass_weights[k] * m.rho0[k] * f;
        }
        if incomplete.as_ref().is_some_and(|i| i.t <= t) {
            break;
        }
        mass_error = mass_error.max((m.mass_at(t)? - 1.0).abs());
        entropy.push(s);
    }

    if let Some(inc) = incomplete {
        for p in &mut profile {
            p.truncate(entropy.len());
        }
        return Ok(InterpolationReport {
            n_prime,
            t_grid: grid.to_vec(),
            entropy,
            chord: vec![],
            slack: vec![],
            ray_profile: profile,
            local_slack: vec![Vec::new(); nrays],
            min_slack: None,
            argmin_t: None,
            min_local_slack: None,
            slack_tol: 0.0,
            margin: 0.0,
            mass_error,
            verdict: ConvexityVerdict::Incomplete,
            incomplete: Some(inc),
        });
    }

    let n = grid.len();
    let (s0, s1) = (entropy[0], entropy[n - 1]);
    let slack_tol = 1e-8 * (1.0 + s0.abs() + s1.abs());
    let margin = 100.0 * slack_tol;
    let mut chord = Vec::with_capacity(n - 2);
    let mut slack = Vec::with_capacity(n - 2);
    for j in 1..n - 1 {
        let t = grid[j];
        let ch = (1.0 - t) * s0 + t * s1;
        chord.push(ch);
        slack.push(ch - entropy[j]);
    }
    let local_slack: Vec<Vec<f64>> = profile
        .iter()
        .map(|p| {
            if p.is_empty() {
                return Vec::new();
            }
            (1..n - 1)
                .map(|j| p[j] - (1.0 - grid[j]) * p[0] - grid[j] * p[n - 1])
                .collect()
        })
        .collect();
    let (argmin, min_slack) = slack
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(j, s)| (grid[j + 1], *s))
        .unzip();
    let min_local_slack = local_slack.iter().flatten().copied().reduce(f64::min);
    let verdict = match min_slack {
        None => ConvexityVerdict::Consistent,
        Some(s) if s >= -slack_tol => ConvexityVerdict::Consistent,
        Some(s) if s < -margin => ConvexityVerdict::Violated,
        Some(_) => ConvexityVerdict::Marginal,
    };
    Ok(InterpolationReport {
        n_prime,
        t_grid: grid.to_vec(),
        entropy,
        chord,
        slack,
        ray_profile: profile,
        local_slack,
        min_slack,
        argmin_t: argmin,
        min_local_slack,
        slack_tol,
        margin,
        mass_error,
        verdict,
        incomplete: None,
    })
}

/// Global slack against the mass-weighted sum of per-ray slacks.
#[derive(Debug, Clone, Serialize)]
pub struct LocalizationCheck {
    pub global: Vec<f64>,
    pub integrated: Vec<f64>,
    pub max_difference: f64,
    /// Whether every per-ray slack is at least `-slack_tol`.
    pub local_holds: bool,
}

pub fn localized_implies_global(m: &Measure, report: &InterpolationReport) -> Result<LocalizationCheck> {
    if report.verdict == ConvexityVerdict::Incomplete {
        return Err(Error::Precondition(
            "interpolation is incomplete; per-ray slacks are undefined".into(),
        ));
    }
    let nint = report.slack.len();
    let mut integrated = vec![0.0; nint];
    for (k, ls) in report.local_slack.iter().enumerate() {
        for (j, s) in ls.iter().enumerate() {
            integrated[j] += m.mass_weights[k] * m.rho0[k] * s;
        }
    }
    let max_difference = report
        .slack
        .iter()
        .zip(&integrated)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let local_holds = report
        .local_slack
        .iter()
        .flatten()
        .all(|s| *s >= -report.slack_tol);
    Ok(LocalizationCheck {
        global: report.slack.clone(),
        integrated,
        max_difference,
        local_holds,
    })
}
