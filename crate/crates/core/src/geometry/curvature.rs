use nalgebra::DMatrix;

use super::MetricSpec;
use crate::dsl::Jet2;
use crate::error::{Error, Result};

/// Connection, curvature and weight derivatives at one chart point.
///
/// Flat storage: `gamma[l][m][n]`, `riemann[r][s][m][n]`, `ricci[s][n]`,
/// `hess_v[m][n]`.
#[derive(Debug, Clone)]
pub struct CurvaturePack {
    pub point: Vec<f64>,
    pub dim: usize,
    pub metric: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    pub gamma: Vec<f64>,
    pub riemann: Vec<f64>,
    pub ricci: Vec<f64>,
    pub weight: f64,
    /// Covector `dV`.
    pub dv: Vec<f64>,
    /// Vector `grad V` (index raised).
    pub grad_v: Vec<f64>,
    pub hess_v: Vec<f64>,
}

impl CurvaturePack {
    pub fn gamma(&self, l: usize, m: usize, n: usize) -> f64 {
        let d = self.dim;
        self.gamma[(l * d + m) * d + n]
    }

    pub fn riemann(&self, r: usize, s: usize, m: usize, n: usize) -> f64 {
        let d = self.dim;
        self.riemann[((r * d + s) * d + m) * d + n]
    }

    pub fn ricci(&self, s: usize, n: usize) -> f64 {
        self.ricci[s * self.dim + n]
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        super::quad(&self.metric, a, b)
    }

    fn bilinear(&self, t: &[f64], a: &[f64], b: &[f64]) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += t[i * d + j] * a[i] * b[j];
            }
        }
        s
    }

    pub fn ricci_form(&self, a: &[f64], b: &[f64]) -> f64 {
        self.bilinear(&self.ricci, a, b)
    }

    pub fn hess_v_form(&self, a: &[f64], b: &[f64]) -> f64 {
        self.bilinear(&self.hess_v, a, b)
    }

    /// `(Ric + Hess V)(a, b)`.
    pub fn bakry_emery(&self, a: &[f64], b: &[f64]) -> f64 {
        self.ricci_form(a, b) + self.hess_v_form(a, b)
    }

    /// `dV(v)`.
    pub fn dv(&self, v: &[f64]) -> f64 {
        self.dv.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// `G^l(a, b)` for every `l`.
    pub fn christoffel_contract(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for (l, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for m in 0..d {
                if a[m] == 0.0 {
                    continue;
                }
                for n in 0..d {
                    s += self.gamma[(l * d + m) * d + n] * a[m] * b[n];
                }
            }
            *o = s;
        }
        out
    }

    /// Tidal operator `X -> R(X, k) k`, as the matrix `T^r_m`.
    pub fn tidal(&self, k: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let mut t = DMatrix::zeros(d, d);
        for r in 0..d {
            for m in 0..d {
                let mut s = 0.0;
                for sidx in 0..d {
                    if k[sidx] == 0.0 {
                        continue;
                    }
                    for n in 0..d {
                        s += self.riemann[((r * d + sidx) * d + m) * d + n] * k[sidx] * k[n];
                    }
                }
                t[(r, m)] = s;
            }
        }
        t
    }

    pub fn max_abs_gamma(&self) -> f64 {
        self.gamma.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub(super) fn curvature_at(spec: &MetricSpec, x: &[f64]) -> Result<CurvaturePack> {
    spec.check_domain(x)?;
    let d = spec.dim();
    let mut scratch = Vec::new();
    let mut jet = Jet2::zero(d);
    // g, dg[k][i][j] = d_k g_ij, ddg[k][l][i][j]
    let mut g = DMatrix::zeros(d, d);
    let mut dg = vec![0.0; d * d * d];
    let mut ddg = vec![0.0; d * d * d * d];
    for i in 0..d {
        for j in i..d {
            let e = spec.component(i, j);
            if e.is_constant() {
                let v = e.eval(x)?;
                g[(i, j)] = v;
                g[(j, i)] = v;
                continue;
            }
            e.eval_jet2_into(x, &mut scratch, &mut jet)?;
            g[(i, j)] = jet.value;
            g[(j, i)] = jet.value;
            for k in 0..d {
                dg[(k * d + i) * d + j] = jet.grad[k];
                dg[(k * d + j) * d + i] = jet.grad[k];
                for l in 0..d {
                    let h = jet.hess[k * d + l];
                    ddg[((k * d + l) * d + i) * d + j] = h;
                    ddg[((k * d + l) * d + j) * d + i] = h;
                }
            }
        }
    }
    let inverse = g
        .clone()
        .try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::SingularMetric { point: x.to_vec() })?;

    // Lowered Christoffel symbols G_{s m n} = (d_m g_sn + d_n g_sm - d_s g_mn)/2.
    let at3 = |k: usize, i: usize, j: usize| (k * d + i) * d + j;
    let mut low = vec![0.0; d * d * d];
    for s in 0..d {
        for m in 0..d {
            for n in m..d {
                let v = 0.5 * (dg[at3(m, s, n)] + dg[at3(n, s, m)] - dg[at3(s, m, n)]);
                low[at3(s, m, n)] = v;
                low[at3(s, n, m)] = v;
            }
        }
    }
    let mut gamma = vec![0.0; d * d * d];
    for l in 0..d {
        for m in 0..d {
            for n in m..d {
                let mut v = 0.0;
                for s in 0..d {
                    v += inverse[(l, s)] * low[at3(s, m, n)];
                }
                gamma[at3(l, m, n)] = v;
                gamma[at3(l, n, m)] = v;
            }
        }
    }

    // d_k G^l_{mn} = g^{ls} (d_k G_{smn} - d_k g_{sa} G^a_{mn}).
    let at4 = |a: usize, b: usize, c: usize, e: usize| ((a * d + b) * d + c) * d + e;
    let mut dgamma = vec![0.0; d * d * d * d]; // [k][l][m][n]
    let mut dlow = vec![0.0; d * d * d]; // scratch for fixed k: [s][m][n]
    for k in 0..d {
        for s in 0..d {
            for m in 0..d {
                for n in m..d {
                    let v = 0.5
                        * (ddg[at4(k, m, s, n)] + ddg[at4(k, n, s, m)] - ddg[at4(k, s, m, n)]);
                    let mut corr = 0.0;
                    for a in 0..d {
                        corr += dg[at3(k, s, a)] * gamma[at3(a, m, n)];
                    }
                    dlow[at3(s, m, n)] = v - corr;
                    dlow[at3(s, n, m)] = v - corr;
                }
            }
        }
        for l in 0..d {
            for m in 0..d {
                for n in m..d {
                    let mut v = 0.0;
                    for s in 0..d {
                        v += inverse[(l, s)] * dlow[at3(s, m, n)];
                    }
                    dgamma[at4(k, l, m, n)] = v;
                    dgamma[at4(k, l, n, m)] = v;
                }
            }
        }
    }

    let mut riemann = vec![0.0; d * d * d * d];
    for r in 0..d {
        for s in 0..d {
            for m in 0..d {
                for n in (m + 1)..d {
                    let mut v = dgamma[at4(m, r, n, s)] - dgamma[at4(n, r, m, s)];
                    for k in 0..d {
                        v += gamma[at3(r, m, k)] * gamma[at3(k, n, s)]
                            - gamma[at3(r, n, k)] * gamma[at3(k, m, s)];
                    }
                    riemann[at4(r, s, m, n)] = v;
                    riemann[at4(r, s, n, m)] = -v;
                }
            }
        }
    }
    let mut ricci = vec![0.0; d * d];
    for s in 0..d {
        for n in 0..d {
            let mut v = 0.0;
            for r in 0..d {
                v += riemann[at4(r, s, r, n)];
            }
            ricci[s * d + n] = v;
        }
    }

    let wj = spec.weight_jet(x)?;
    let mut hess_v = vec![0.0; d * d];
    for m in 0..d {
        for n in 0..d {
            let mut v = wj.hess[m * d + n];
            for l in 0..d {
                v -= gamma[at3(l, m, n)] * wj.grad[l];
            }
            hess_v[m * d + n] = v;
        }
    }
    let grad_v = (0..d)
        .map(|i| (0..d).map(|j| inverse[(i, j)] * wj.grad[j]).sum())
        .collect();

    Ok(CurvaturePack {
        point: x.to_vec(),
        dim: d,
        metric: g,
        inverse,
        gamma,
        riemann,
        ricci,
        weight: wj.value,
        dv: wj.grad,
        grad_v,
        hess_v,
    })
}
