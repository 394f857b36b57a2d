//! Pointwise geometry of a weighted Lorentzian metric on a single chart.
//!
//! Signature is `(-,+,...,+)`. Curvature follows
//! `R^r_{smn} = d_m G^r_{ns} - d_n G^r_{ms} + G^r_{mk} G^k_{ns} - G^r_{nk} G^k_{ms}`
//! with `Ric_{sn} = R^r_{srn}`, so that `Ric(v,v)` is the trace of
//! `X -> R(X,v)v` and is nonnegative on null vectors exactly when the null
//! energy condition holds.

pub mod builtins;
mod causal;
mod curvature;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::dsl::{Expression, Jet2, Scope};
use crate::error::{Error, Result};

pub use causal::{CausalCharacter, TimeOrientation, VectorClass};
pub use curvature::CurvaturePack;

/// Default relative dead-band for null classification.
pub const DEFAULT_NULL_TOL: f64 = 1e-9;

/// A metric `g`, optional weight `V` and chart description.
#[derive(Debug, Clone)]
pub struct MetricSpec {
    name: String,
    dim: usize,
    /// Upper triangle, row by row.
    components: Vec<Expression>,
    weight: Option<Expression>,
    domain: Option<Expression>,
    reference: Vec<Expression>,
    params: BTreeMap<String, f64>,
    null_tol: f64,
}

/// Builder input for a user metric. All expressions are chart expressions.
#[derive(Debug, Clone, Default)]
pub struct MetricSource {
    pub name: String,
    pub dim: usize,
    /// `(i, j, expression)`; unlisted components are zero. Either triangle.
    pub components: Vec<(usize, usize, String)>,
    pub weight: Option<String>,
    pub domain: Option<String>,
    /// Future-directed timelike reference field; `e0` when absent.
    pub reference: Option<Vec<String>>,
    pub params: BTreeMap<String, f64>,
}

fn sym_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * dim - i * (i + 1) / 2 + j
}

impl MetricSpec {
    pub fn from_source(src: MetricSource) -> Result<Self> {
        let dim = src.dim;
        if dim < 3 {
            return Err(Error::Invalid(format!(
                "metric dimension must be at least 3, got {dim}"
            )));
        }
        let scope = Scope::chart(dim).with_constants(&src.params);
        let parse = |field: String, text: &str| {
            Expression::parse(text, &scope).map_err(|e| Error::parse(field, e))
        };
        let zero = Expression::constant(0.0, &scope);
        let mut components = vec![zero.clone(); dim * (dim + 1) / 2];
        let mut seen = vec![false; components.len()];
        for (i, j, text) in &src.components {
            if *i >= dim || *j >= dim {
                return Err(Error::Invalid(format!(
                    "component g{i}{j} is outside dimension {dim}"
                )));
            }
            let k = sym_index(dim, *i, *j);
            if seen[k] {
                return Err(Error::Invalid(format!("component g{i}{j} given twice")));
            }
            seen[k] = true;
            components[k] = parse(format!("g{i}{j}"), text)?;
        }
        let weight = match &src.weight {
            Some(t) => Some(parse("weight".into(), t)?),
            None => None,
        };
        let domain = match &src.domain {
            Some(t) => Some(parse("domain".into(), t)?),
            None => None,
        };
        let reference = match &src.reference {
            Some(r) => {
                if r.len() != dim {
                    return Err(Error::Invalid(format!(
                        "reference field has {} components, expected {dim}",
                        r.len()
                    )));
                }
                r.iter()
                    .enumerate()
                    .map(|(i, t)| parse(format!("reference[{i}]"), t))
                    .collect::<Result<Vec<_>>>()?
            }
            None => (0..dim)
                .map(|i| Expression::constant(if i == 0 { 1.0 } else { 0.0 }, &scope))
                .collect(),
        };
        Ok(MetricSpec {
            name: src.name,
            dim,
            components,
            weight,
            domain,
            reference,
            params: src.params,
            null_tol: DEFAULT_NULL_TOL,
        })
    }

    /// Replaces (or removes) the weight function.
    pub fn with_weight(mut self, weight: Option<&str>) -> Result<Self> {
        let scope = self.scope();
        self.weight = match weight {
            Some(t) => Some(Expression::parse(t, &scope).map_err(|e| Error::parse("weight", e))?),
            None => None,
        };
        Ok(self)
    }

    pub fn with_null_tol(mut self, tol: f64) -> Self {
        self.null_tol = tol;
        self
    }

    pub fn scope(&self) -> Scope {
        Scope::chart(self.dim).with_constants(&self.params)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Spacetime dimension `n + 1`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn null_tol(&self) -> f64 {
        self.null_tol
    }

    pub fn weight(&self) -> Option<&Expression> {
        self.weight.as_ref()
    }

    pub fn has_weight(&self) -> bool {
        self.weight.is_some()
    }

    pub fn component(&self, i: usize, j: usize) -> &Expression {
        &self.components[sym_index(self.dim, i, j)]
    }

    /// True when the point lies inside the chart domain (predicate > 0).
    pub fn in_domain(&self, x: &[f64]) -> bool {
        match &self.domain {
            None => true,
            Some(p) => matches!(p.eval(x), Ok(v) if v > 0.0),
        }
    }

    pub fn check_domain(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Invalid(format!(
                "point has {} coordinates, expected {}",
                x.len(),
                self.dim
            )));
        }
        if self.in_domain(x) {
            Ok(())
        } else {
            Err(Error::OutsideChart { point: x.to_vec() })
        }
    }

    pub fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_domain(x)?;
        let d = self.dim;
        let mut g = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v = self.component(i, j).eval(x)?;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }

    pub fn inner(&self, x: &[f64], a: &[f64], b: &[f64]) -> Result<f64> {
        let g = self.metric_at(x)?;
        Ok(quad(&g, a, b))
    }

    pub fn weight_at(&self, x: &[f64]) -> Result<f64> {
        match &self.weight {
            Some(w) => Ok(w.eval(x)?),
            None => Ok(0.0),
        }
    }

    pub fn weight_jet(&self, x: &[f64]) -> Result<Jet2> {
        match &self.weight {
            Some(w) => Ok(w.eval_jet2(x)?),
            None => Ok(Jet2::zero(self.dim)),
        }
    }

    pub fn reference_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.reference
            .iter()
            .map(|e| e.eval(x).map_err(Error::from))
            .collect()
    }

    /// Number of negative eigenvalues must be exactly one.
    pub fn check_signature(&self, x: &[f64]) -> Result<()> {
        let g = self.metric_at(x)?;
        let eig = g.symmetric_eigen();
        let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        if eig.eigenvalues.iter().any(|v| v.abs() <= 1e-14 * scale) {
            return Err(Error::SingularMetric { point: x.to_vec() });
        }
        let negative = eig.eigenvalues.iter().filter(|v| **v < 0.0).count();
        if negative != 1 {
            return Err(Error::Signature {
                point: x.to_vec(),
                negative,
            });
        }
        Ok(())
    }

    /// Full curvature data at `x`.
    pub fn curvature_at(&self, x: &[f64]) -> Result<CurvaturePack> {
        curvature::curvature_at(self, x)
    }

    /// Causal character and time orientation of `v` at `x`.
    pub fn classify_vector(&self, x: &[f64], v: &[f64], tol: f64) -> Result<VectorClass> {
        causal::classify(self, x, v, tol)
    }

    /// `(N' - n + 1) (Ric + Hess V)(v,v) - dV(v)^2` for null `v`.
    pub fn be_null_gap(&self, x: &[f64], v: &[f64], n_prime: f64) -> Result<f64> {
        let pack = self.curvature_at(x)?;
        self.be_null_gap_with(&pack, v, n_prime)
    }

    /// As [`MetricSpec::be_null_gap`] with precomputed curvature.
    pub fn be_null_gap_with(&self, pack: &CurvaturePack, v: &[f64], n_prime: f64) -> Result<f64> {
        let n = (self.dim - 1) as f64;
        if n_prime <= n - 1.0 {
            return Err(Error::Precondition(format!(
                "N' = {n_prime} must exceed n - 1 = {}",
                n - 1.0
            )));
        }
        let norm2 = pack.inner(v, v);
        let chart2: f64 = v.iter().map(|c| c * c).sum();
        if chart2 == 0.0 {
            return Err(Error::ZeroVector);
        }
        if norm2.abs() > self.null_tol * chart2 {
            return Err(Error::NotNull {
                norm: norm2,
                tol: self.null_tol * chart2,
            });
        }
        let dv = pack.dv(v);
        Ok((n_prime - n + 1.0) * pack.bakry_emery(v, v) - dv * dv)
    }

    /// Orthonormal frame at `x` with `e0` along the reference field.
    pub fn orthonormal_frame(&self, x: &[f64]) -> Result<Vec<DVector<f64>>> {
        let g = self.metric_at(x)?;
        let t = DVector::from_vec(self.reference_at(x)?);
        let tt = quad_v(&g, &t, &t);
        if tt >= 0.0 {
            return Err(Error::ReferenceNotTimelike { point: x.to_vec() });
        }
        let mut frame = vec![&t / (-tt).sqrt()];
        let d = self.dim;
        for k in 0..d {
            if frame.len() == d {
                break;
            }
            let mut e = DVector::zeros(d);
            e[k] = 1.0;
            if let Some(u) = gram_schmidt_step(&g, &frame, e) {
                frame.push(u);
            }
        }
        if frame.len() != d {
            return Err(Error::SingularMetric { point: x.to_vec() });
        }
        Ok(frame)
    }
}

/// Orthogonalizes `e` against `frame` (first vector timelike) and normalizes
/// it to unit spacelike length; `None` if it collapses.
pub(crate) fn gram_schmidt_step(
    g: &DMatrix<f64>,
    frame: &[DVector<f64>],
    mut e: DVector<f64>,
) -> Option<DVector<f64>> {
    let scale = e.norm();
    for (i, f) in frame.iter().enumerate() {
        let sign = if i == 0 { -1.0 } else { 1.0 };
        let c = quad_v(g, f, &e) * sign;
        e -= f * c;
    }
    let n2 = quad_v(g, &e, &e);
    if n2 <= 1e-12 * scale * scale {
        return None;
    }
    Some(e / n2.sqrt())
}

pub(crate) fn quad(g: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let d = a.len();
    let mut s = 0.0;
    for i in 0..d {
        if a[i] == 0.0 {
            continue;
        }
        for j in 0..d {
            s += a[i] * g[(i, j)] * b[j];
        }
    }
    s
}

pub(crate) fn quad_v(g: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    quad(g, a.as_slice(), b.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_index_is_a_bijection() {
        let d = 5;
        let mut hit = vec![false; d * (d + 1) / 2];
        for i in 0..d {
            for j in i..d {
                let k = sym_index(d, i, j);
                assert!(!hit[k]);
                hit[k] = true;
                assert_eq!(k, sym_index(d, j, i));
            }
        }
        assert!(hit.iter().all(|h| *h));
    }

    #[test]
    fn rejects_low_dimension_and_bad_components() {
        let src = MetricSource {
            name: "m".into(),
            dim: 2,
            ..Default::default()
        };
        assert!(MetricSpec::from_source(src).is_err());
        let src = MetricSource {
            name: "m".into(),
            dim: 3,
            components: vec![(0, 0, "-1".into()), (0, 0, "-1".into())],
            ..Default::default()
        };
        assert!(MetricSpec::from_source(src).is_err());
        let src = MetricSource {
            name: "m".into(),
            dim: 3,
            components: vec![(0, 0, "-1 + x7".into())],
            ..Default::default()
        };
        match MetricSpec::from_source(src).unwrap_err() {
            Error::Parse { field, .. } => assert_eq!(field, "g00"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn signature_check_flags_riemannian_metric() {
        let src = MetricSource {
            name: "euclid".into(),
            dim: 3,
            components: vec![(0, 0, "1".into()), (1, 1, "1".into()), (2, 2, "1".into())],
            ..Default::default()
        };
        let m = MetricSpec::from_source(src).unwrap();
        assert!(matches!(
            m.check_signature(&[0.0; 3]),
            Err(Error::Signature { negative: 0, .. })
        ));
    }

    #[test]
    fn orthonormal_frame_is_orthonormal() {
        let m = builtins::schwarzschild_ef(1.0).unwrap();
        let x = [0.3, 1.5, 1.0, 0.2];
        let g = m.metric_at(&x).unwrap();
        let f = m.orthonormal_frame(&x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i != j {
                    0.0
                } else if i == 0 {
                    -1.0
                } else {
                    1.0
                };
                assert!((quad_v(&g, &f[i], &f[j]) - expect).abs() < 1e-12);
            }
        }
    }
}
