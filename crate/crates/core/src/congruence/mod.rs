//! Null geodesic congruences launched normally from a seed surface.
//!
//! Each seed node carries one ray. Along it the Jacobi matrix `A` solves
//! `A'' = -R A` in a parallel screen frame with `A(0) = I` and
//! `A'(0) = U_0`, the initial shape operator. `y = det A` is the
//! area density and `U = A' A^{-1}` the deformation tensor.

mod ray;
mod seed;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MetricSpec;

pub use ray::{
    integrate_ray, FocalEvent, FocalKind, Geodesic, RayExit, RayFault, RayInit, RayOptions,
    RaySample, RaySolution,
};
pub use seed::{
    node_geometry, null_normals, second_fundamental_form, NodeGeometry, Orientation, SeedPoint,
    SeedSurface,
};

/// Which null normal generates the congruence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    #[default]
    L,
    #[serde(rename = "lbar")]
    LBar,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CongruenceOptions {
    pub t_max: f64,
    /// Initial generator is `span * w` for the chosen null normal `w`.
    pub span: f64,
    pub generator: Generator,
    pub ray: RayOptions,
}

impl CongruenceOptions {
    pub fn new(t_max: f64) -> Self {
        CongruenceOptions {
            t_max,
            span: 1.0,
            generator: Generator::L,
            ray: RayOptions::new(t_max),
        }
    }

    pub fn with_generator(mut self, generator: Generator) -> Self {
        self.generator = generator;
        self
    }

    pub fn with_span(mut self, span: f64) -> Self {
        self.span = span;
        self
    }
}

/// A congruence: seed data plus one integrated ray per node.
#[derive(Debug, Clone)]
pub struct Congruence {
    pub metric: MetricSpec,
    pub seed: SeedSurface,
    pub options: CongruenceOptions,
    pub nodes: Vec<NodeGeometry>,
    pub rays: Vec<RaySolution>,
}

/// Initial data for the ray through node `node`.
pub fn ray_init(
    metric: &MetricSpec,
    seed: &SeedSurface,
    geom: &NodeGeometry,
    generator: Generator,
    span: f64,
) -> Result<RayInit> {
    if !(span > 0.0) || !span.is_finite() {
        return Err(Error::Invalid(format!("span must be positive, got {span}")));
    }
    let (w, wbar, pi) = match generator {
        Generator::L => (&geom.l, &geom.lbar, &geom.pi_l),
        Generator::LBar => (&geom.lbar, &geom.l, &geom.pi_lbar),
    };
    let theta = &geom.point.theta;
    let x = &geom.point.x;
    let m = seed.param_dim();
    let k = w * span;
    let lbar = wbar * (geom.tau_norm * geom.tau_norm / (2.0 * span));
    let u0 = pi * span;

    // c'(0)_j = -<nabla_{e_j} K, lbar_0>.
    let which_l = generator == Generator::L;
    let dw = seed::normal_derivatives(metric, seed, theta, which_l)?;
    let pack = metric.curvature_at(x)?;
    let mut cd0 = DVector::zeros(m);
    for j in 0..m {
        let mut cov = DVector::zeros(metric.dim());
        for a in 0..m {
            let gam = DVector::from_vec(
                pack.christoffel_contract(geom.point.tangents[a].as_slice(), w.as_slice()),
            );
            cov += (&dw[a] + gam) * geom.frame_coeffs[(a, j)];
        }
        cov *= span;
        cd0[j] = -pack.inner(cov.as_slice(), lbar.as_slice());
    }
    Ok(RayInit {
        x: x.clone(),
        k,
        frame: geom.frame.clone(),
        lbar,
        u0,
        cd0,
    })
}

impl Congruence {
    /// Computes node geometry and integrates every ray.
    pub fn build(metric: &MetricSpec, seed: &SeedSurface, options: CongruenceOptions) -> Result<Self> {
        if seed.dim() != metric.dim() {
            return Err(Error::Invalid(format!(
                "seed lives in dimension {}, metric in {}",
                seed.dim(),
                metric.dim()
            )));
        }
        if !(options.t_max > 0.0) {
            return Err(Error::Invalid(format!("t_max must be positive, got {}", options.t_max)));
        }
        let nodes = seed
            .nodes()
            .iter()
            .map(|th| node_geometry(metric, seed, th))
            .collect::<Result<Vec<_>>>()?;
        let inits = nodes
            .iter()
            .map(|g| ray_init(metric, seed, g, options.generator, options.span))
            .collect::<Result<Vec<_>>>()?;
        let mut ropts = options.ray;
        ropts.t_max = options.t_max;
        let rays = crate::par::map(inits.len(), |i| ray::integrate(metric, i, &inits[i], &ropts));
        Ok(Congruence {
            metric: metric.clone(),
            seed: seed.clone(),
            options,
            nodes,
            rays,
        })
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    /// Quadrature weight times seed area element for each node.
    pub fn area_weights(&self) -> Vec<f64> {
        self.seed
            .weights()
            .iter()
            .zip(&self.nodes)
            .map(|(w, n)| w * n.jacobian)
            .collect()
    }

    /// Earliest focal time over all rays.
    pub fn first_focal(&self) -> Option<(usize, f64)> {
        self.rays
            .iter()
            .filter_map(|r| r.focal_time().map(|t| (r.node, t)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Largest `t` at which every ray is alive.
    pub fn common_lifetime(&self) -> f64 {
        self.rays
            .iter()
            .map(|r| match r.focal {
                Some(f) => f.t.min(r.t_end()),
                None => r.t_end(),
            })
            .fold(self.options.t_max, f64::min)
    }

    /// `sum_k w_k y_k(t) e^{-V(gamma_k(t))} J_k`; unweighted when `weighted` is false.
    pub fn cross_section_measure(&self, t: f64, weighted: bool) -> Result<f64> {
        self.cross_section_measure_of(t, weighted, None)
    }

    /// As [`Congruence::cross_section_measure`], restricted to the listed rays.
    pub fn cross_section_measure_of(&self, t: f64, weighted: bool, subset: Option<&[usize]>) -> Result<f64> {
        let aw = self.area_weights();
        let all: Vec<usize>;
        let idx = match subset {
            Some(s) => s,
            None => {
                all = (0..self.len()).collect();
                &all
            }
        };
        let mut total = 0.0;
        for &k in idx {
            let ray = self
                .rays
                .get(k)
                .ok_or_else(|| Error::Invalid(format!("no ray {k}")))?;
            let (a, _) = self.jacobi_checked(ray, t)?;
            let mut y = a.determinant();
            if weighted {
                let st = ray.raw_state(t).expect("checked above");
                y *= (-self.metric.weight_at(&st[..self.metric.dim()])?).exp();
            }
            total += aw[k] * y;
        }
        Ok(total)
    }

    fn jacobi_checked(&self, ray: &RaySolution, t: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if !ray.is_alive(t) {
            return Err(Error::DeadRay {
                ray: ray.node,
                t,
                reason: match ray.focal {
                    Some(f) => format!("focal point at t = {}", f.t),
                    None => format!("{:?} at t = {}", ray.exit, ray.t_end()),
                },
            });
        }
        ray.jacobi(t).ok_or_else(|| Error::DeadRay {
            ray: ray.node,
            t,
            reason: "outside the integrated range".into(),
        })
    }

    pub fn sample(&self, ray: usize, t: f64) -> Result<RaySample> {
        let r = self
            .rays
            .get(ray)
            .ok_or_else(|| Error::Invalid(format!("no ray {ray}")))?;
        r.sample(&self.metric, t)
    }
}
