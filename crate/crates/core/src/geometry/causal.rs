use serde::Serialize;

use super::{quad, MetricSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalCharacter {
    Timelike,
    Null,
    Spacelike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeOrientation {
    Future,
    Past,
}

/// Result of [`MetricSpec::classify_vector`].
///
/// `orientation` is `None` for spacelike vectors, and for null vectors that
/// are also orthogonal to the reference field within the dead-band (the
/// boundary case between future and past).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VectorClass {
    pub character: CausalCharacter,
    pub orientation: Option<TimeOrientation>,
    /// `<v, v>`.
    pub norm: f64,
}

impl VectorClass {
    pub fn is_future_null(&self) -> bool {
        self.character == CausalCharacter::Null
            && self.orientation == Some(TimeOrientation::Future)
    }
}

pub(super) fn classify(spec: &MetricSpec, x: &[f64], v: &[f64], tol: f64) -> Result<VectorClass> {
    let chart2: f64 = v.iter().map(|c| c * c).sum();
    if chart2 == 0.0 {
        return Err(Error::ZeroVector);
    }
    let g = spec.metric_at(x)?;
    let norm = quad(&g, v, v);
    let character = if norm.abs() <= tol * chart2 {
        CausalCharacter::Null
    } else if norm < 0.0 {
        CausalCharacter::Timelike
    } else {
        CausalCharacter::Spacelike
    };
    let orientation = if character == CausalCharacter::Spacelike {
        None
    } else {
        let t = spec.reference_at(x)?;
        let tt = quad(&g, &t, &t);
        if tt >= 0.0 {
            return Err(Error::ReferenceNotTimelike { point: x.to_vec() });
        }
        let vt = quad(&g, v, &t);
        let scale = (chart2 * t.iter().map(|c| c * c).sum::<f64>()).sqrt();
        if vt.abs() <= tol * scale {
            None
        } else if vt < 0.0 {
            Some(TimeOrientation::Future)
        } else {
            Some(TimeOrientation::Past)
        }
    };
    Ok(VectorClass {
        character,
        orientation,
        norm,
    })
}
