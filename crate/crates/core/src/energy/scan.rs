//! Sampled Bakry-Emery null curvature scans.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MetricSpec;

/// Where to sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Sampler {
    /// Tensor grid with `per_axis` points per coordinate, endpoints included.
    Box { lo: Vec<f64>, hi: Vec<f64>, per_axis: usize },
    Points { points: Vec<Vec<f64>> },
}

impl Sampler {
    pub fn points(&self, dim: usize) -> Result<Vec<Vec<f64>>> {
        match self {
            Sampler::Points { points } => {
                if let Some(p) = points.iter().find(|p| p.len() != dim) {
                    return Err(Error::Invalid(format!("sample point {p:?} is not {dim}-dimensional")));
                }
                Ok(points.clone())
            }
            Sampler::Box { lo, hi, per_axis } => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(Error::Invalid(format!("box bounds must have {dim} entries")));
                }
                if *per_axis == 0 {
                    return Err(Error::Invalid("per_axis must be positive".into()));
                }
                let axis = |i: usize| -> Vec<f64> {
                    if *per_axis == 1 {
                        vec![0.5 * (lo[i] + hi[i])]
                    } else {
                        (0..*per_axis)
                            .map(|j| lo[i] + (hi[i] - lo[i]) * j as f64 / (*per_axis - 1) as f64)
                            .collect()
                    }
                };
                let mut out = vec![vec![]];
                for i in 0..dim {
                    let ax = axis(i);
                    out = out
                        .into_iter()
                        .flat_map(|p| {
                            ax.iter().map(move |v| {
                                let mut q = p.clone();
                                q.push(*v);
                                q
                            })
                        })
                        .collect();
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub n_prime: f64,
    /// Random unit spatial directions per point, on top of the `2n` axis ones.
    pub random_directions: usize,
    pub rng_seed: u64,
    pub gap_tol: f64,
}

impl ScanOptions {
    pub fn new(n_prime: f64) -> Self {
        ScanOptions {
            n_prime,
            random_directions: 8,
            rng_seed: 0,
            gap_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanVerdict {
    Holds,
    Violated,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointMinimum {
    pub point: Vec<f64>,
    pub min_gap: f64,
    pub direction: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub n_prime: f64,
    pub samples: usize,
    /// Points skipped because they lie outside the chart.
    pub skipped: usize,
    pub min_gap: f64,
    pub argmin_point: Vec<f64>,
    pub argmin_direction: Vec<f64>,
    pub gap_tol: f64,
    pub verdict: ScanVerdict,
    #[serde(skip_serializing)]
    pub per_point: Vec<PointMinimum>,
}

/// Null vector `e0 + sum_i u_i e_i` for a spatial unit `u` in the frame at `x`.
pub fn null_direction(metric: &MetricSpec, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let frame = metric.orthonormal_frame(x)?;
    if u.len() + 1 != frame.len() {
        return Err(Error::Invalid(format!("spatial direction must have {} entries", frame.len() - 1)));
    }
    let norm = u.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let mut v: DVector<f64> = frame[0].clone();
    for (i, c) in u.iter().enumerate() {
        v += &frame[i + 1] * (c / norm);
    }
    Ok(v.as_slice().to_vec())
}

fn directions(n: usize, random: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * n + random);
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut u = vec![0.0; n];
            u[i] = s;
            out.push(u);
        }
    }
    while out.len() < 2 * n + random {
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r2: f64 = u.iter().map(|c| c * c).sum();
        if r2 > 1e-4 && r2 <= 1.0 {
            out.push(u.iter().map(|c| c / r2.sqrt()).collect());
        }
    }
    out
}

/// Minimum of the Bakry-Emery null gap over sampled points and directions.
pub fn nec_scan(metric: &MetricSpec, sampler: &Sampler, opts: &ScanOptions) -> Result<ScanReport> {
    let d = metric.dim();
    let points = sampler.points(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let dirs = directions(d - 1, opts.random_directions, &mut rng);
    let results = crate::par::map(points.len(), |i| -> Result<Option<PointMinimum>> {
        let x = &points[i];
        if !metric.in_domain(x) {
            return Ok(None);
        }
        let pack = metric.curvature_at(x)?;
        let mut best: Option<PointMinimum> = None;
        for u in &dirs {
            let v = null_direction(metric, x, u)?;
            let gap = metric.be_null_gap_with(&pack, &v, opts.n_prime)?;
            if best.as_ref().is_none_or(|b| gap < b.min_gap) {
                best = Some(PointMinimum {
                    point: x.clone(),
                    min_gap: gap,
                    direction: v,
                });
            }
        }
        Ok(best)
    });
    let mut per_point = Vec::new();
    let mut skipped = 0;
    for r in results {
        match r? {
            Some(p) => per_point.push(p),
            None => skipped += 1,
        }
    }
    let best = per_point
        .iter()
        .min_by(|a, b| a.min_gap.total_cmp(&b.min_gap))
        .ok_or_else(|| Error::Invalid("no sample point lies inside the chart".into()))?;
    let verdict = if best.min_gap < -opts.gap_tol {
        ScanVerdict::Violated
    } else {
        ScanVerdict::Holds
    };
    Ok(ScanReport {
        n_prime: opts.n_prime,
        samples: per_point.len() * dirs.len(),
        skipped,
        min_gap: best.min_gap,
        argmin_point: best.point.clone(),
        argmin_direction: best.direction.clone(),
        gap_tol: opts.gap_tol,
        verdict,
        per_point,
    })
}
