//! Area monotonicity along a null congruence.

use serde::Serialize;

use crate::congruence::Congruence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum HawkingVerdict {
    /// `m0 <= m1 + area_tol`.
    Monotone,
    /// Measure decreased and the congruence focuses at `focal_at`.
    NonMonotoneIncomplete { focal_at: f64 },
    /// Measure decreased with no focal point up to the integration horizon.
    NonMonotoneComplete,
    /// Some ray dies before `t1`.
    InconclusiveIncomplete { dead_at: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct HawkingReport {
    pub t0: f64,
    pub t1: f64,
    pub m0: f64,
    pub m1: Option<f64>,
    pub area_tol: f64,
    pub verdict: HawkingVerdict,
    /// Integration horizon used as the completeness surrogate.
    pub horizon: f64,
}

/// Compares the weighted cross-section measure at `t0` and `t1`.
pub fn hawking_check(c: &Congruence, t0: f64, t1: f64, subset: Option<&[usize]>) -> Result<HawkingReport> {
    if !(t0 < t1) || t0 < 0.0 {
        return Err(Error::Invalid(format!("need 0 <= t0 < t1, got t0 = {t0}, t1 = {t1}")));
    }
    let idx: Vec<usize> = match subset {
        Some(s) => s.to_vec(),
        None => (0..c.len()).collect(),
    };
    let horizon = c.options.t_max;
    let death = |k: usize| {
        let r = &c.rays[k];
        match r.focal {
            Some(f) => f.t,
            None if r.t_end() < horizon => r.t_end(),
            None => f64::INFINITY,
        }
    };
    let mut first_dead = f64::INFINITY;
    for &k in &idx {
        if k >= c.len() {
            return Err(Error::Invalid(format!("no ray {k}")));
        }
        first_dead = first_dead.min(death(k));
    }
    let m0 = c.cross_section_measure_of(t0, true, Some(&idx))?;
    if first_dead <= t1 {
        return Ok(HawkingReport {
            t0,
            t1,
            m0,
            m1: None,
            area_tol: 1e-8 * m0.abs(),
            verdict: HawkingVerdict::InconclusiveIncomplete { dead_at: first_dead },
            horizon,
        });
    }
    let m1 = c.cross_section_measure_of(t1, true, Some(&idx))?;
    let area_tol = 1e-8 * m0.abs().max(m1.abs());
    let verdict = if m0 <= m1 + area_tol {
        HawkingVerdict::Monotone
    } else if first_dead.is_finite() {
        HawkingVerdict::NonMonotoneIncomplete { focal_at: first_dead }
    } else {
        HawkingVerdict::NonMonotoneComplete
    };
    Ok(HawkingReport {
        t0,
        t1,
        m0,
        m1: Some(m1),
        area_tol,
        verdict,
        horizon,
    })
}
