//! One generator: geodesic, parallel frame, Jacobi matrix.
//!
//! State vector, with `d` the chart dimension and `m = d - 2`:
//! `x`, `k`, the parallel frame `E_1..E_m`, the parallel transverse null
//! vector `lbar`, the Jacobi matrix `A` and `A'`, and the `k`-components
//! `c`, `c'` of the Jacobi fields. Each Jacobi field is
//! `J_j = sum_i A_ij E_i + c_j k`.
//!
//! The screen frame reported to callers is `E_i + beta_i k` with
//! `beta = A^{-T} c`, which is orthogonal to both `k` and the transverse
//! null vector of the evolved cross-section.

use std::cell::Cell;
use std::ops::ControlFlow;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{quad_v, MetricSpec};
use crate::ode::{dopri5, DenseSolution, DenseStep, OdeExit, OdeOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub d: usize,
    pub m: usize,
}

impl Layout {
    pub fn new(d: usize) -> Self {
        Layout { d, m: d - 2 }
    }
    pub fn len(&self) -> usize {
        3 * self.d + self.m * self.d + 2 * self.m * self.m + 2 * self.m
    }
    fn x(&self) -> usize {
        0
    }
    fn k(&self) -> usize {
        self.d
    }
    fn e(&self, i: usize) -> usize {
        2 * self.d + i * self.d
    }
    fn lbar(&self) -> usize {
        2 * self.d + self.m * self.d
    }
    fn a(&self) -> usize {
        3 * self.d + self.m * self.d
    }
    fn ad(&self) -> usize {
        self.a() + self.m * self.m
    }
    fn c(&self) -> usize {
        self.ad() + self.m * self.m
    }
    fn cd(&self) -> usize {
        self.c() + self.m
    }

    fn mat(&self, y: &[f64], off: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.m, self.m, &y[off..off + self.m * self.m])
    }
    fn vec(&self, y: &[f64], off: usize, n: usize) -> DVector<f64> {
        DVector::from_row_slice(&y[off..off + n])
    }
}

/// Why the right-hand side could not be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum RayFault {
    OutsideChart,
    Blowup,
    Eval(String),
}

/// How integration of a ray ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RayExit {
    Completed,
    Focal,
    ChartExit,
    CurvatureBlowup,
    StepUnderflow,
    MaxSteps,
}

impl RayExit {
    pub fn is_singular(self) -> bool {
        matches!(self, RayExit::CurvatureBlowup | RayExit::StepUnderflow)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FocalKind {
    /// Smallest singular value of `A` reached the focal tolerance.
    Detected,
    /// The ray ended at a singularity with `A` collapsing; the focal time is
    /// `t_end - m / trU`, exact when `A` is linear in `t` near the end.
    Extrapolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FocalEvent {
    pub t: f64,
    pub kind: FocalKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayOptions {
    pub t_max: f64,
    pub ode: OdeOptions,
    /// A focal point is declared when the smallest singular value of `A`
    /// drops to this value.
    pub focal_tol: f64,
    /// Rays are dead (density undefined) where `det A <= y_tol`.
    pub y_tol: f64,
    /// `max |Gamma|` beyond which the RHS reports a blow-up.
    pub blowup: f64,
    /// Largest `|det A|^(1/m)` at a singular end that still counts as focusing.
    pub extrapolate_w: f64,
}

impl RayOptions {
    pub fn new(t_max: f64) -> Self {
        RayOptions {
            t_max,
            ode: OdeOptions {
                h_max: t_max / 32.0,
                ..OdeOptions::default()
            },
            focal_tol: 1e-8,
            y_tol: 1e-10,
            blowup: 1e6,
            extrapolate_w: 1e-2,
        }
    }
}

/// Initial data of one ray.
#[derive(Debug, Clone)]
pub struct RayInit {
    pub x: Vec<f64>,
    pub k: DVector<f64>,
    pub frame: Vec<DVector<f64>>,
    pub lbar: DVector<f64>,
    pub u0: DMatrix<f64>,
    pub cd0: DVector<f64>,
}

/// An integrated generator.
#[derive(Debug, Clone)]
pub struct RaySolution {
    pub node: usize,
    pub generator: DVector<f64>,
    pub solution: DenseSolution,
    pub exit: RayExit,
    pub focal: Option<FocalEvent>,
    /// `max |<k,k>| / |k|^2` (chart norm) over monitored samples.
    pub max_null_drift: f64,
    /// `max |<E_i,E_j> - delta_ij|` of the parallel frame.
    pub max_gram_drift: f64,
    /// `max |<E_i, k>|`.
    pub max_orth_drift: f64,
    pub accepted_steps: usize,
    layout: Layout,
}

/// State of a ray at one parameter value.
#[derive(Debug, Clone)]
pub struct RaySample {
    pub t: f64,
    pub x: Vec<f64>,
    pub k: DVector<f64>,
    /// Screen frame tangent to the evolved cross-section.
    pub frame: Vec<DVector<f64>>,
    /// Transverse null vector of the evolved cross-section, `<lbar, k> = -1`.
    pub lbar: DVector<f64>,
    pub a: DMatrix<f64>,
    pub ad: DMatrix<f64>,
    pub y: f64,
    pub u: DMatrix<f64>,
    pub tr_u: f64,
    pub weight: f64,
    pub z: f64,
}

fn rhs(metric: &MetricSpec, lay: Layout, blowup: f64, y: &[f64], dy: &mut [f64]) -> Result<(), RayFault> {
    let (d, m) = (lay.d, lay.m);
    let x = &y[lay.x()..lay.x() + d];
    let pack = metric.curvature_at(x).map_err(|e| match e {
        Error::OutsideChart { .. } => RayFault::OutsideChart,
        other => RayFault::Eval(other.to_string()),
    })?;
    if pack.max_abs_gamma() > blowup {
        return Err(RayFault::Blowup);
    }
    let k = &y[lay.k()..lay.k() + d];
    dy[lay.x()..lay.x() + d].copy_from_slice(k);
    let acc = pack.christoffel_contract(k, k);
    for l in 0..d {
        dy[lay.k() + l] = -acc[l];
    }
    for i in 0..m {
        let e = &y[lay.e(i)..lay.e(i) + d];
        let v = pack.christoffel_contract(k, e);
        for l in 0..d {
            dy[lay.e(i) + l] = -v[l];
        }
    }
    let lb = &y[lay.lbar()..lay.lbar() + d];
    let v = pack.christoffel_contract(k, lb);
    for l in 0..d {
        dy[lay.lbar() + l] = -v[l];
    }

    let tidal = pack.tidal(k);
    let te: Vec<DVector<f64>> = (0..m)
        .map(|j| &tidal * lay.vec(y, lay.e(j), d))
        .collect();
    let mut rhat = DMatrix::zeros(m, m);
    let mut q = vec![0.0; m];
    for i in 0..m {
        let ei = &y[lay.e(i)..lay.e(i) + d];
        for j in 0..m {
            rhat[(i, j)] = pack.inner(ei, te[j].as_slice());
        }
        q[i] = pack.inner(lb, te[i].as_slice());
    }
    let a = lay.mat(y, lay.a());
    let add = -(&rhat * &a);
    for i in 0..m * m {
        dy[lay.a() + i] = y[lay.ad() + i];
    }
    for i in 0..m {
        for j in 0..m {
            dy[lay.ad() + i * m + j] = add[(i, j)];
        }
    }
    for j in 0..m {
        dy[lay.c() + j] = y[lay.cd() + j];
        let mut s = 0.0;
        for i in 0..m {
            s += a[(i, j)] * q[i];
        }
        dy[lay.cd() + j] = s;
    }
    Ok(())
}

fn sigma_min(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 1 {
        return a[(0, 0)].abs();
    }
    a.clone().svd(false, false).singular_values.min()
}

struct Monitor<'a> {
    metric: &'a MetricSpec,
    lay: Layout,
    focal_tol: f64,
    prev: Option<DenseStep>,
    focal: Option<f64>,
    null_drift: f64,
    gram_drift: f64,
    orth_drift: f64,
}

impl Monitor<'_> {
    fn state(&self, cur: &DenseStep, t: f64, buf: &mut [f64]) {
        match &self.prev {
            Some(p) if t < cur.t0 => p.eval_into(t, buf),
            _ => cur.eval_into(t, buf),
        }
    }

    fn sigma(&self, cur: &DenseStep, t: f64, buf: &mut [f64]) -> f64 {
        self.state(cur, t, buf);
        sigma_min(&self.lay.mat(buf, self.lay.a()))
    }

    fn drift(&mut self, y: &[f64]) {
        let (d, m) = (self.lay.d, self.lay.m);
        let x = &y[..d];
        let Ok(g) = self.metric.metric_at(x) else {
            return;
        };
        let k = self.lay.vec(y, self.lay.k(), d);
        let kk = quad_v(&g, &k, &k).abs() / k.norm_squared().max(f64::MIN_POSITIVE);
        self.null_drift = self.null_drift.max(kk);
        for i in 0..m {
            let ei = self.lay.vec(y, self.lay.e(i), d);
            self.orth_drift = self.orth_drift.max(quad_v(&g, &ei, &k).abs());
            for j in 0..m {
                let ej = self.lay.vec(y, self.lay.e(j), d);
                let delta = if i == j { 1.0 } else { 0.0 };
                self.gram_drift = self.gram_drift.max((quad_v(&g, &ei, &ej) - delta).abs());
            }
        }
    }

    fn bisect(&self, cur: &DenseStep, mut lo: f64, mut hi: f64, buf: &mut [f64]) -> f64 {
        for _ in 0..200 {
            if hi - lo <= 1e-13 * hi.abs().max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.sigma(cur, mid, buf) <= self.focal_tol {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    fn golden(&self, cur: &DenseStep, mut a: f64, mut b: f64, buf: &mut [f64]) -> (f64, f64) {
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        let mut fc = self.sigma(cur, c, buf);
        let mut fd = self.sigma(cur, d, buf);
        for _ in 0..200 {
            if b - a <= 1e-13 * b.abs().max(1.0) {
                break;
            }
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - r * (b - a);
                fc = self.sigma(cur, c, buf);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + r * (b - a);
                fd = self.sigma(cur, d, buf);
            }
        }
        if fc < fd {
            (c, fc)
        } else {
            (d, fd)
        }
    }

    /// Samples the step; returns the focal time if one lies inside.
    fn observe(&mut self, cur: &DenseStep) -> Option<f64> {
        const N: usize = 8;
        let mut buf = vec![0.0; self.lay.len()];
        let mut ts = Vec::with_capacity(N + 2);
        if let Some(p) = &self.prev {
            ts.push(p.t0 + p.h * (N - 1) as f64 / N as f64);
        }
        for j in 0..=N {
            ts.push(cur.t0 + cur.h * j as f64 / N as f64);
        }
        let mut sig = Vec::with_capacity(ts.len());
        for &t in &ts {
            self.state(cur, t, &mut buf);
            if t >= cur.t0 {
                let y = buf.clone();
                self.drift(&y);
            }
            sig.push(sigma_min(&self.lay.mat(&buf, self.lay.a())));
        }
        if let Some(j) = sig.iter().position(|s| *s <= self.focal_tol) {
            if j == 0 {
                return Some(ts[0]);
            }
            return Some(self.bisect(cur, ts[j - 1], ts[j], &mut buf));
        }
        for j in 1..ts.len() - 1 {
            if sig[j] < 0.1 && sig[j] <= sig[j - 1] && sig[j] <= sig[j + 1] {
                let (tmin, smin) = self.golden(cur, ts[j - 1], ts[j + 1], &mut buf);
                if smin <= self.focal_tol {
                    return Some(self.bisect(cur, ts[j - 1], tmin, &mut buf));
                }
            }
        }
        None
    }
}

/// Integrates one ray from its initial data.
pub(crate) fn integrate(
    metric: &MetricSpec,
    node: usize,
    init: &RayInit,
    opts: &RayOptions,
) -> RaySolution {
    let d = metric.dim();
    let lay = Layout::new(d);
    let m = lay.m;
    let mut y0 = vec![0.0; lay.len()];
    y0[..d].copy_from_slice(&init.x);
    y0[lay.k()..lay.k() + d].copy_from_slice(init.k.as_slice());
    for (i, e) in init.frame.iter().enumerate() {
        y0[lay.e(i)..lay.e(i) + d].copy_from_slice(e.as_slice());
    }
    y0[lay.lbar()..lay.lbar() + d].copy_from_slice(init.lbar.as_slice());
    for i in 0..m {
        y0[lay.a() + i * m + i] = 1.0;
        for j in 0..m {
            y0[lay.ad() + i * m + j] = init.u0[(i, j)];
        }
        y0[lay.cd() + i] = init.cd0[i];
    }

    let saw_blowup = Cell::new(false);
    let mut mon = Monitor {
        metric,
        lay,
        focal_tol: opts.focal_tol,
        prev: None,
        focal: None,
        null_drift: 0.0,
        gram_drift: 0.0,
        orth_drift: 0.0,
    };
    let result = dopri5(
        |_, y, dy| {
            let r = rhs(metric, lay, opts.blowup, y, dy);
            if r == Err(RayFault::Blowup) {
                saw_blowup.set(true);
            }
            r
        },
        0.0,
        &y0,
        opts.t_max,
        &opts.ode,
        |step| {
            saw_blowup.set(false);
            let hit = mon.observe(step);
            mon.prev = Some(step.clone());
            match hit {
                Some(t) => {
                    mon.focal = Some(t);
                    ControlFlow::Break(t.max(step.t0))
                }
                None => ControlFlow::Continue(()),
            }
        },
    );
    let mut exit = match &result.exit {
        OdeExit::Reached => RayExit::Completed,
        OdeExit::Stopped => RayExit::Focal,
        OdeExit::MaxSteps => RayExit::MaxSteps,
        OdeExit::StepUnderflow { last_error } => {
            if saw_blowup.get() || *last_error == Some(RayFault::Blowup) {
                RayExit::CurvatureBlowup
            } else if *last_error == Some(RayFault::OutsideChart) {
                RayExit::ChartExit
            } else {
                RayExit::StepUnderflow
            }
        }
    };
    let mut focal = mon.focal.map(|t| FocalEvent {
        t,
        kind: FocalKind::Detected,
    });
    if focal.is_none() && exit.is_singular() {
        let sol = &result.solution;
        if let Some(y) = sol.eval(sol.t_end()) {
            let a = lay.mat(&y, lay.a());
            let ad = lay.mat(&y, lay.ad());
            let det = a.determinant();
            let w = det.abs().powf(1.0 / m as f64);
            if w <= opts.extrapolate_w {
                if let Some(inv) = a.clone().try_inverse() {
                    let tr_u = (&ad * inv).trace();
                    if tr_u < 0.0 {
                        focal = Some(FocalEvent {
                            t: sol.t_end() - m as f64 / tr_u,
                            kind: FocalKind::Extrapolated,
                        });
                    }
                }
            }
        }
    }
    if focal.is_some() && exit == RayExit::Completed {
        exit = RayExit::Focal;
    }
    RaySolution {
        node,
        generator: init.k.clone(),
        solution: result.solution,
        exit,
        focal,
        max_null_drift: mon.null_drift,
        max_gram_drift: mon.gram_drift,
        max_orth_drift: mon.orth_drift,
        accepted_steps: result.accepted,
        layout: lay,
    }
}

impl RaySolution {
    /// Last parameter value where the ray's fields are reported.
    pub fn alive_until(&self) -> f64 {
        match self.focal {
            Some(f) if f.kind == FocalKind::Detected => f.t.min(self.solution.t_end()),
            _ => self.solution.t_end(),
        }
    }

    /// True when fields are available at `t` (before any focal point).
    pub fn is_alive(&self, t: f64) -> bool {
        let end = self.alive_until();
        let before_focal = match self.focal {
            Some(f) => t < f.t,
            None => true,
        };
        t >= 0.0 && before_focal && t <= end
    }

    pub fn focal_time(&self) -> Option<f64> {
        self.focal.map(|f| f.t)
    }

    pub fn t_end(&self) -> f64 {
        self.solution.t_end()
    }

    /// Raw interpolated state (parallel frame, unprojected).
    pub fn raw_state(&self, t: f64) -> Option<Vec<f64>> {
        self.solution.eval(t)
    }

    /// Jacobi matrix and derivative.
    pub fn jacobi(&self, t: f64) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let y = self.solution.eval(t)?;
        Some((self.layout.mat(&y, self.layout.a()), self.layout.mat(&y, self.layout.ad())))
    }

    /// `trU` from the interpolated state, without any other processing.
    pub fn tr_u(&self, t: f64) -> Option<f64> {
        let (a, ad) = self.jacobi(t)?;
        let inv = a.try_inverse()?;
        Some((ad * inv).trace())
    }

    /// Full sample, including the projected screen frame.
    pub fn sample(&self, metric: &MetricSpec, t: f64) -> Result<RaySample> {
        if !self.is_alive(t) {
            return Err(Error::DeadRay {
                ray: self.node,
                t,
                reason: match self.focal {
                    Some(f) if t >= f.t => format!("focal point at t = {}", f.t),
                    _ => format!("{:?} at t = {}", self.exit, self.t_end()),
                },
            });
        }
        let lay = self.layout;
        let (d, m) = (lay.d, lay.m);
        let y = self.solution.eval(t).ok_or_else(|| Error::DeadRay {
            ray: self.node,
            t,
            reason: "outside the integrated range".into(),
        })?;
        let x = y[..d].to_vec();
        let k = lay.vec(&y, lay.k(), d);
        let e: Vec<DVector<f64>> = (0..m).map(|i| lay.vec(&y, lay.e(i), d)).collect();
        let lbar_par = lay.vec(&y, lay.lbar(), d);
        let a = lay.mat(&y, lay.a());
        let ad = lay.mat(&y, lay.ad());
        let c = lay.vec(&y, lay.c(), m);
        let det = a.determinant();
        let dead = |reason: &str| Error::DeadRay {
            ray: self.node,
            t,
            reason: reason.into(),
        };
        let inv = a.clone().try_inverse().ok_or_else(|| dead("singular Jacobi matrix"))?;
        let u = &ad * &inv;
        let tr_u = u.trace();
        let beta = inv.transpose() * &c;
        let mut lbar = lbar_par.clone();
        for i in 0..m {
            lbar += &e[i] * beta[i];
        }
        lbar += &k * (0.5 * beta.norm_squared());
        let g = metric.metric_at(&x)?;
        let mut frame: Vec<DVector<f64>> = Vec::with_capacity(m);
        for i in 0..m {
            let v = &e[i] + &k * beta[i];
            // Gram re-orthonormalization among the screen vectors.
            let mut w = v;
            for f in &frame {
                let p = quad_v(&g, f, &w);
                w -= f * p;
            }
            let n2 = quad_v(&g, &w, &w);
            if !(n2 > 1e-12) {
                return Err(Error::DeadRay {
                    ray: self.node,
                    t,
                    reason: "screen frame lost rank".into(),
                });
            }
            frame.push(w / n2.sqrt());
        }
        let weight = metric.weight_at(&x)?;
        Ok(RaySample {
            t,
            x,
            k,
            frame,
            lbar,
            a,
            ad,
            y: det,
            u,
            tr_u,
            weight,
            z: (-weight).exp() * det,
        })
    }
}

/// Trajectory-only geodesic.
#[derive(Debug, Clone)]
pub struct Geodesic {
    pub solution: DenseSolution,
    pub exit: RayExit,
}

impl Geodesic {
    pub fn position(&self, t: f64) -> Option<Vec<f64>> {
        self.solution.eval(t).map(|y| y[..y.len() / 2].to_vec())
    }
    pub fn velocity(&self, t: f64) -> Option<Vec<f64>> {
        self.solution.eval(t).map(|y| y[y.len() / 2..].to_vec())
    }
    pub fn t_end(&self) -> f64 {
        self.solution.t_end()
    }
}

/// Solves `x'' + Gamma(x', x') = 0` from `(x, v)`; `v` must be future null.
pub fn integrate_ray(
    metric: &MetricSpec,
    x: &[f64],
    v: &[f64],
    t_max: f64,
    opts: &RayOptions,
) -> Result<Geodesic> {
    let class = metric.classify_vector(x, v, metric.null_tol())?;
    if !class.is_future_null() {
        return Err(Error::Precondition(format!(
            "initial vector must be future-directed null, got {:?} {:?}",
            class.character, class.orientation
        )));
    }
    let d = metric.dim();
    let mut y0 = x.to_vec();
    y0.extend_from_slice(v);
    let saw_blowup = Cell::new(false);
    let result = dopri5(
        |_, y, dy| {
            let pack = metric.curvature_at(&y[..d]).map_err(|e| match e {
                Error::OutsideChart { .. } => RayFault::OutsideChart,
                other => RayFault::Eval(other.to_string()),
            })?;
            if pack.max_abs_gamma() > opts.blowup {
                saw_blowup.set(true);
                return Err(RayFault::Blowup);
            }
            dy[..d].copy_from_slice(&y[d..]);
            let acc = pack.christoffel_contract(&y[d..], &y[d..]);
            for l in 0..d {
                dy[d + l] = -acc[l];
            }
            Ok(())
        },
        0.0,
        &y0,
        t_max,
        &opts.ode,
        |_| {
            saw_blowup.set(false);
            ControlFlow::Continue(())
        },
    );
    let exit = match result.exit {
        OdeExit::Reached => RayExit::Completed,
        OdeExit::Stopped => RayExit::Completed,
        OdeExit::MaxSteps => RayExit::MaxSteps,
        OdeExit::StepUnderflow { last_error } => {
            if saw_blowup.get() || last_error == Some(RayFault::Blowup) {
                RayExit::CurvatureBlowup
            } else if last_error == Some(RayFault::OutsideChart) {
                RayExit::ChartExit
            } else {
                RayExit::StepUnderflow
            }
        }
    };
    Ok(Geodesic {
        solution: result.solution,
        exit,
    })
}
