//! Codimension-two spacelike seed surfaces: null normals and second
//! fundamental forms.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dsl::{Expression, Scope};
use crate::error::{Error, Result};
use crate::geometry::{quad_v, CurvaturePack, MetricSpec};
use crate::quadrature::{self, AxisRule};

/// Which null normal is called `L`.
///
/// With `Standard`, `L = (tau + nu)/|tau|` where `nu` is the spacelike normal
/// whose lowered form is `det[tau, T_1, ..., T_m, .]`. For the usual sphere
/// parametrization `(theta, phi)` this is the outgoing normal. `Flipped`
/// exchanges `L` and `Lbar`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    Standard,
    Flipped,
}

/// Parametrized seed `phi: box in R^m -> chart`, with `m = dim - 2`.
#[derive(Debug, Clone)]
pub struct SeedSurface {
    map: Vec<Expression>,
    axes: Vec<AxisRule>,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
    orientation: Orientation,
}

/// Position and parameter derivatives of the seed at one parameter point.
#[derive(Debug, Clone)]
pub struct SeedPoint {
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
    /// `T_a = d phi / d u_a`.
    pub tangents: Vec<DVector<f64>>,
    /// `d_a d_b phi`, indexed `[a * m + b]`.
    pub second: Vec<DVector<f64>>,
}

/// Everything the congruence needs at one seed node.
#[derive(Debug, Clone)]
pub struct NodeGeometry {
    pub point: SeedPoint,
    /// Induced metric `h_ab`.
    pub induced: DMatrix<f64>,
    /// `sqrt(det h)`.
    pub jacobian: f64,
    /// Orthonormal tangent frame `e_i = sum_a T_a C_ai`.
    pub frame: Vec<DVector<f64>>,
    pub frame_coeffs: DMatrix<f64>,
    pub l: DVector<f64>,
    pub lbar: DVector<f64>,
    /// `|tau|`, the length of the reference field's normal part.
    pub tau_norm: f64,
    /// Second fundamental forms on the orthonormal frame.
    pub pi_l: DMatrix<f64>,
    pub pi_lbar: DMatrix<f64>,
}

impl NodeGeometry {
    /// Expansion (trace of the second fundamental form) along `L`.
    pub fn expansion_l(&self) -> f64 {
        self.pi_l.trace()
    }

    pub fn expansion_lbar(&self) -> f64 {
        self.pi_lbar.trace()
    }
}

impl SeedSurface {
    /// `map` holds one expression per chart coordinate, over `u0..u{m-1}`.
    pub fn new(
        map: &[String],
        dim: usize,
        constants: &BTreeMap<String, f64>,
        axes: Vec<AxisRule>,
        orientation: Orientation,
    ) -> Result<Self> {
        if map.len() != dim {
            return Err(Error::Invalid(format!(
                "seed map has {} components, the chart has dimension {dim}",
                map.len()
            )));
        }
        let m = dim - 2;
        if axes.len() != m {
            return Err(Error::Invalid(format!(
                "seed quadrature has {} axes, expected {m}",
                axes.len()
            )));
        }
        let scope = Scope::params(m).with_constants(constants);
        let map = map
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Expression::parse(s, &scope).map_err(|e| Error::parse(format!("seed.map[{i}]"), e))
            })
            .collect::<Result<Vec<_>>>()?;
        let (nodes, weights) = quadrature::product(&axes)?;
        Ok(SeedSurface {
            map,
            axes,
            nodes,
            weights,
            orientation,
        })
    }

    /// Replaces the quadrature nodes with an explicit list (weights must be
    /// supplied); used for small sub-patches.
    pub fn with_nodes(mut self, nodes: Vec<Vec<f64>>, weights: Vec<f64>) -> Self {
        self.nodes = nodes;
        self.weights = weights;
        self
    }

    pub fn dim(&self) -> usize {
        self.map.len()
    }

    pub fn param_dim(&self) -> usize {
        self.map.len() - 2
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn axes(&self) -> &[AxisRule] {
        &self.axes
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn map(&self) -> &[Expression] {
        &self.map
    }

    pub fn point(&self, theta: &[f64]) -> Result<SeedPoint> {
        let d = self.dim();
        let m = self.param_dim();
        let mut x = vec![0.0; d];
        let mut tangents = vec![DVector::zeros(d); m];
        let mut second = vec![DVector::zeros(d); m * m];
        for (mu, e) in self.map.iter().enumerate() {
            let j = e.eval_jet2(theta)?;
            x[mu] = j.value;
            for a in 0..m {
                tangents[a][mu] = j.grad[a];
                for b in 0..m {
                    second[a * m + b][mu] = j.hess[a * m + b];
                }
            }
        }
        Ok(SeedPoint {
            theta: theta.to_vec(),
            x,
            tangents,
            second,
        })
    }

    /// Position only.
    pub fn position(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.map
            .iter()
            .map(|e| e.eval(theta).map_err(Error::from))
            .collect()
    }
}

fn degenerate(theta: &[f64], reason: impl Into<String>) -> Error {
    Error::DegenerateSeed {
        theta: theta.to_vec(),
        reason: reason.into(),
    }
}

/// `(L, Lbar, |tau|, induced metric)`.
type Normals = (DVector<f64>, DVector<f64>, f64, DMatrix<f64>);

/// Null normals without curvature data; see [`null_normals`].
fn normals_at(
    metric: &MetricSpec,
    sp: &SeedPoint,
    g: &DMatrix<f64>,
    orientation: Orientation,
) -> Result<Normals> {
    let d = metric.dim();
    let m = sp.tangents.len();
    let mut h = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            h[(a, b)] = quad_v(g, &sp.tangents[a], &sp.tangents[b]);
        }
    }
    let hinv = h
        .clone()
        .cholesky()
        .ok_or_else(|| degenerate(&sp.theta, "induced metric is not positive definite"))?
        .inverse();
    let t_ref = DVector::from_vec(metric.reference_at(&sp.x)?);
    let mut tau = t_ref.clone();
    let proj: Vec<f64> = sp.tangents.iter().map(|t| quad_v(g, t, &t_ref)).collect();
    for a in 0..m {
        for b in 0..m {
            tau -= &sp.tangents[a] * (hinv[(a, b)] * proj[b]);
        }
    }
    let tt = quad_v(g, &tau, &tau);
    let scale = t_ref.norm_squared();
    if !(tt < -1e-14 * scale) {
        return Err(Error::ReferenceNotTimelike {
            point: sp.x.clone(),
        });
    }
    let tau_norm = (-tt).sqrt();
    let tau_hat = &tau / tau_norm;

    // Cofactor covector omega_mu = det[tau_hat, T_1..T_m, e_mu].
    let mut cols = DMatrix::zeros(d, d);
    cols.set_column(0, &tau_hat);
    for a in 0..m {
        cols.set_column(a + 1, &sp.tangents[a]);
    }
    let mut omega = DVector::zeros(d);
    for mu in 0..d {
        let mut mat = cols.clone();
        let mut e = DVector::zeros(d);
        e[mu] = 1.0;
        mat.set_column(d - 1, &e);
        omega[mu] = mat.determinant();
    }
    let ginv = g
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularMetric { point: sp.x.clone() })?;
    let nu = &ginv * omega;
    let nn = quad_v(g, &nu, &nu);
    if !(nn > 0.0) {
        return Err(degenerate(&sp.theta, "tangent space does not have a spacelike normal"));
    }
    let nu = nu / nn.sqrt();
    let l = (&tau_hat + &nu) / tau_norm;
    let lbar = (&tau_hat - &nu) / tau_norm;
    let (l, lbar) = match orientation {
        Orientation::Standard => (l, lbar),
        Orientation::Flipped => (lbar, l),
    };
    Ok((l, lbar, tau_norm, h))
}

/// Future null normals `(L, Lbar)` at `theta`, normalized by `<L, T_ref> = -1`.
pub fn null_normals(
    metric: &MetricSpec,
    seed: &SeedSurface,
    theta: &[f64],
) -> Result<(DVector<f64>, DVector<f64>)> {
    let sp = seed.point(theta)?;
    let g = metric.metric_at(&sp.x)?;
    let (l, lbar, _, _) = normals_at(metric, &sp, &g, seed.orientation)?;
    Ok((l, lbar))
}

/// `Pi_w(T_a, T_b) = -<w, d_a d_b phi + Gamma(T_a, T_b)>` on coordinate tangents.
fn sff_coords(pack: &CurvaturePack, sp: &SeedPoint, w: &DVector<f64>) -> DMatrix<f64> {
    let m = sp.tangents.len();
    let mut pi = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let gam = pack.christoffel_contract(sp.tangents[a].as_slice(), sp.tangents[b].as_slice());
            let acc = &sp.second[a * m + b] + DVector::from_vec(gam);
            let v = -quad_v(&pack.metric, w, &acc);
            pi[(a, b)] = v;
            pi[(b, a)] = v;
        }
    }
    pi
}

fn frame_coeffs(h: &DMatrix<f64>, theta: &[f64]) -> Result<DMatrix<f64>> {
    let chol = h
        .clone()
        .cholesky()
        .ok_or_else(|| degenerate(theta, "induced metric is not positive definite"))?;
    let lt = chol.l().transpose();
    lt.try_inverse()
        .ok_or_else(|| degenerate(theta, "induced metric is singular"))
}

/// Full node data.
pub fn node_geometry(metric: &MetricSpec, seed: &SeedSurface, theta: &[f64]) -> Result<NodeGeometry> {
    let sp = seed.point(theta)?;
    let pack = metric.curvature_at(&sp.x)?;
    let (l, lbar, tau_norm, h) = normals_at(metric, &sp, &pack.metric, seed.orientation)?;
    let c = frame_coeffs(&h, theta)?;
    let m = sp.tangents.len();
    let frame = (0..m)
        .map(|i| {
            let mut e = DVector::zeros(metric.dim());
            for a in 0..m {
                e += &sp.tangents[a] * c[(a, i)];
            }
            e
        })
        .collect();
    let pi_l = c.transpose() * sff_coords(&pack, &sp, &l) * &c;
    let pi_lbar = c.transpose() * sff_coords(&pack, &sp, &lbar) * &c;
    let jacobian = h.determinant().sqrt();
    Ok(NodeGeometry {
        point: sp,
        induced: h,
        jacobian,
        frame,
        frame_coeffs: c,
        l,
        lbar,
        tau_norm,
        pi_l,
        pi_lbar,
    })
}

/// Second fundamental form along an arbitrary null normal `w` on the
/// orthonormal seed frame, and its trace.
pub fn second_fundamental_form(
    metric: &MetricSpec,
    seed: &SeedSurface,
    theta: &[f64],
    w: &[f64],
) -> Result<(DMatrix<f64>, f64)> {
    let sp = seed.point(theta)?;
    let pack = metric.curvature_at(&sp.x)?;
    let w = DVector::from_row_slice(w);
    let scale = w.norm();
    for t in &sp.tangents {
        let ip = quad_v(&pack.metric, &w, t);
        if ip.abs() > 1e-9 * scale * t.norm().max(1.0) {
            return Err(Error::Precondition(format!(
                "vector is not normal to the seed at {theta:?} (<w, T> = {ip:e})"
            )));
        }
    }
    let mut h = DMatrix::zeros(sp.tangents.len(), sp.tangents.len());
    for a in 0..h.nrows() {
        for b in 0..h.ncols() {
            h[(a, b)] = quad_v(&pack.metric, &sp.tangents[a], &sp.tangents[b]);
        }
    }
    let c = frame_coeffs(&h, theta)?;
    let pi = c.transpose() * sff_coords(&pack, &sp, &w) * &c;
    let tr = pi.trace();
    Ok((pi, tr))
}

/// Parameter-space derivative `d_a L` by central differences.
pub(crate) fn normal_derivatives(
    metric: &MetricSpec,
    seed: &SeedSurface,
    theta: &[f64],
    which_l: bool,
) -> Result<Vec<DVector<f64>>> {
    let m = seed.param_dim();
    let step = 1e-5;
    (0..m)
        .map(|a| {
            let mut tp = theta.to_vec();
            let mut tm = theta.to_vec();
            let s = step * (1.0 + theta[a].abs());
            tp[a] += s;
            tm[a] -= s;
            let (lp, lbp) = null_normals(metric, seed, &tp)?;
            let (lm, lbm) = null_normals(metric, seed, &tm)?;
            Ok(if which_l {
                (lp - lm) / (2.0 * s)
            } else {
                (lbp - lbm) / (2.0 * s)
            })
        })
        .collect()
}
