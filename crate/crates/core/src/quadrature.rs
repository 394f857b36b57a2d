//! One-dimensional rules and their tensor products on boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// Gauss–Legendre.
    Gauss,
    /// Midpoint rule; spectrally accurate for periodic integrands.
    Uniform,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Nodes and weights of a rule on `[a, b]`.
pub fn rule(kind: RuleKind, n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let half = 0.5 * (b - a);
    match kind {
        RuleKind::Gauss => {
            let (x, w) = gauss_legendre(n);
            (
                x.iter().map(|x| a + half * (x + 1.0)).collect(),
                w.iter().map(|w| w * half).collect(),
            )
        }
        RuleKind::Uniform => {
            let h = (b - a) / n as f64;
            (
                (0..n).map(|i| a + (i as f64 + 0.5) * h).collect(),
                vec![h; n],
            )
        }
    }
}

/// One axis of a product rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisRule {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
    pub kind: RuleKind,
}

/// Tensor-product nodes and weights, first axis slowest.
pub fn product(axes: &[AxisRule]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut nodes = vec![Vec::new()];
    let mut weights = vec![1.0];
    for (i, ax) in axes.iter().enumerate() {
        if ax.nodes == 0 || !(ax.hi > ax.lo) {
            return Err(Error::Invalid(format!(
                "quadrature axis {i}: need nodes > 0 and hi > lo"
            )));
        }
        let (x, w) = rule(ax.kind, ax.nodes, ax.lo, ax.hi);
        let mut n2 = Vec::with_capacity(nodes.len() * x.len());
        let mut w2 = Vec::with_capacity(nodes.len() * x.len());
        for (p, pw) in nodes.iter().zip(&weights) {
            for (xi, wi) in x.iter().zip(&w) {
                let mut q = p.clone();
                q.push(*xi);
                n2.push(q);
                w2.push(pw * wi);
            }
        }
        nodes = n2;
        weights = w2;
    }
    Ok((nodes, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_polynomials_exactly() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let expect = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - expect).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn sphere_area_by_product_rule() {
        let (nodes, w) = product(&[
            AxisRule { lo: 0.0, hi: std::f64::consts::PI, nodes: 8, kind: RuleKind::Gauss },
            AxisRule { lo: 0.0, hi: 2.0 * std::f64::consts::PI, nodes: 16, kind: RuleKind::Uniform },
        ])
        .unwrap();
        let area: f64 = nodes.iter().zip(&w).map(|(p, w)| w * p[0].sin()).sum();
        assert!((area - 4.0 * std::f64::consts::PI).abs() < 1e-6);
        assert_eq!(nodes.len(), 128);
    }

    #[test]
    fn rejects_empty_axis() {
        assert!(product(&[AxisRule { lo: 0.0, hi: 1.0, nodes: 0, kind: RuleKind::Gauss }]).is_err());
        assert!(product(&[AxisRule { lo: 1.0, hi: 1.0, nodes: 3, kind: RuleKind::Gauss }]).is_err());
    }
}
