//! Built-in metrics. Each declares chart `e0`-like future reference field.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MetricSource, MetricSpec};
use crate::error::{Error, Result};

/// A built-in parameter: numeric, or an expression (for `a(t)`, `V`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Expr(String),
}

impl std::fmt::Display for ParamValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamValue::Number(v) => write!(f, "{v}"),
            ParamValue::Expr(s) => write!(f, "\"{s}\""),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamInfo {
    pub name: &'static str,
    pub default: ParamValue,
    pub doc: &'static str,
}

#[derive(Debug, Clone)]
pub struct BuiltinInfo {
    pub name: &'static str,
    pub summary: &'static str,
    pub chart: &'static str,
    pub params: Vec<ParamInfo>,
}

fn num(name: &'static str, v: f64, doc: &'static str) -> ParamInfo {
    ParamInfo {
        name,
        default: ParamValue::Number(v),
        doc,
    }
}

fn expr(name: &'static str, v: &str, doc: &'static str) -> ParamInfo {
    ParamInfo {
        name,
        default: ParamValue::Expr(v.to_string()),
        doc,
    }
}

pub fn catalog() -> Vec<BuiltinInfo> {
    vec![
        BuiltinInfo {
            name: "minkowski",
            summary: "flat spacetime",
            chart: "Cartesian (t, x1, ..., xn); reference field d_t",
            params: vec![num("dim", 4.0, "spacetime dimension n+1 (>= 3)")],
        },
        BuiltinInfo {
            name: "schwarzschild_ef",
            summary: "Schwarzschild black hole, ingoing Eddington-Finkelstein chart (regular across the horizon r = 2M)",
            chart: "(v, r, theta, phi), r > 0, 0 < theta < pi; reference field d_v - (1/2 + M/r) d_r",
            params: vec![num("M", 1.0, "mass")],
        },
        BuiltinInfo {
            name: "schwarzschild",
            summary: "Schwarzschild exterior, static chart",
            chart: "(t, r, theta, phi), r > 2M, 0 < theta < pi; reference field d_t",
            params: vec![num("M", 1.0, "mass")],
        },
        BuiltinInfo {
            name: "flrw",
            summary: "spatially flat FLRW, g = -dt^2 + a(t)^2 |dx|^2",
            chart: "(t, x1, ..., xn); reference field d_t; a must be positive",
            params: vec![
                expr("a", "exp(x0^2)", "scale factor, expression in x0"),
                num("dim", 4.0, "spacetime dimension n+1 (>= 3)"),
            ],
        },
        BuiltinInfo {
            name: "weighted_minkowski",
            summary: "flat spacetime with weight exp(-V)",
            chart: "Cartesian (t, x1, ..., xn); reference field d_t",
            params: vec![
                expr("V", "x1", "weight function, chart expression"),
                num("dim", 4.0, "spacetime dimension n+1 (>= 3)"),
            ],
        },
    ]
}

struct Params<'a> {
    builtin: &'static str,
    given: &'a BTreeMap<String, ParamValue>,
}

impl Params<'_> {
    fn check_known(&self, known: &[&str]) -> Result<()> {
        for k in self.given.keys() {
            if !known.contains(&k.as_str()) {
                return Err(Error::Invalid(format!(
                    "unknown parameter '{k}' for built-in '{}' (expected one of {known:?})",
                    self.builtin
                )));
            }
        }
        Ok(())
    }

    fn number(&self, name: &str, default: f64) -> Result<f64> {
        match self.given.get(name) {
            None => Ok(default),
            Some(ParamValue::Number(v)) => Ok(*v),
            Some(ParamValue::Expr(_)) => Err(Error::Invalid(format!(
                "parameter '{name}' of '{}' must be a number",
                self.builtin
            ))),
        }
    }

    fn dim(&self) -> Result<usize> {
        let d = self.number("dim", 4.0)?;
        if d.fract() != 0.0 || !(3.0..=16.0).contains(&d) {
            return Err(Error::Invalid(format!(
                "parameter 'dim' of '{}' must be an integer in 3..=16, got {d}",
                self.builtin
            )));
        }
        Ok(d as usize)
    }

    fn expr(&self, name: &str, default: &str) -> Result<String> {
        match self.given.get(name) {
            None => Ok(default.to_string()),
            Some(ParamValue::Expr(s)) => Ok(s.clone()),
            Some(ParamValue::Number(v)) => Ok(format!("{v:?}")),
        }
    }
}

/// Builds a built-in metric by name.
pub fn build(name: &str, params: &BTreeMap<String, ParamValue>) -> Result<MetricSpec> {
    let info = catalog().into_iter().find(|b| b.name == name).ok_or_else(|| {
        Error::Invalid(format!(
            "unknown built-in metric '{name}' (known: {})",
            catalog()
                .iter()
                .map(|b| b.name)
                .collect::<Vec<_>>()
                .join(", ")
        ))
    })?;
    let p = Params {
        builtin: info.name,
        given: params,
    };
    let known: Vec<&str> = info.params.iter().map(|q| q.name).collect();
    p.check_known(&known)?;
    match name {
        "minkowski" => minkowski(p.dim()?),
        "schwarzschild_ef" => schwarzschild_ef(p.number("M", 1.0)?),
        "schwarzschild" => schwarzschild_static(p.number("M", 1.0)?),
        "flrw" => flrw(&p.expr("a", "exp(x0^2)")?, p.dim()?),
        "weighted_minkowski" => weighted_minkowski(&p.expr("V", "x1")?, p.dim()?),
        _ => unreachable!("catalog and constructor list agree"),
    }
}

fn diagonal(name: &str, dim: usize, entries: Vec<String>) -> MetricSource {
    MetricSource {
        name: name.to_string(),
        dim,
        components: entries
            .into_iter()
            .enumerate()
            .map(|(i, e)| (i, i, e))
            .collect(),
        ..Default::default()
    }
}

pub fn minkowski(dim: usize) -> Result<MetricSpec> {
    let entries = (0..dim)
        .map(|i| if i == 0 { "-1" } else { "1" }.to_string())
        .collect();
    MetricSpec::from_source(diagonal("minkowski", dim, entries))
}

pub fn weighted_minkowski(v: &str, dim: usize) -> Result<MetricSpec> {
    let entries = (0..dim)
        .map(|i| if i == 0 { "-1" } else { "1" }.to_string())
        .collect();
    let mut src = diagonal("weighted_minkowski", dim, entries);
    src.weight = Some(v.to_string());
    MetricSpec::from_source(src)
}

pub fn flrw(a: &str, dim: usize) -> Result<MetricSpec> {
    let entries = (0..dim)
        .map(|i| {
            if i == 0 {
                "-1".to_string()
            } else {
                format!("({a})^2")
            }
        })
        .collect();
    let mut src = diagonal("flrw", dim, entries);
    src.domain = Some(a.to_string());
    MetricSpec::from_source(src)
}

fn mass(m: f64) -> Result<BTreeMap<String, f64>> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Invalid(format!("mass M must be positive, got {m}")));
    }
    Ok([("M".to_string(), m)].into_iter().collect())
}

pub fn schwarzschild_ef(m: f64) -> Result<MetricSpec> {
    MetricSpec::from_source(MetricSource {
        name: "schwarzschild_ef".into(),
        dim: 4,
        components: vec![
            (0, 0, "-(1 - 2*M/x1)".into()),
            (0, 1, "1".into()),
            (2, 2, "x1^2".into()),
            (3, 3, "x1^2*sin(x2)^2".into()),
        ],
        weight: None,
        domain: Some("x1*sin(x2)".into()),
        reference: Some(vec![
            "1".into(),
            "-(0.5 + M/x1)".into(),
            "0".into(),
            "0".into(),
        ]),
        params: mass(m)?,
    })
}

pub fn schwarzschild_static(m: f64) -> Result<MetricSpec> {
    MetricSpec::from_source(MetricSource {
        name: "schwarzschild".into(),
        dim: 4,
        components: vec![
            (0, 0, "-(1 - 2*M/x1)".into()),
            (1, 1, "1/(1 - 2*M/x1)".into()),
            (2, 2, "x1^2".into()),
            (3, 3, "x1^2*sin(x2)^2".into()),
        ],
        weight: None,
        domain: Some("(x1 - 2*M)*sin(x2)".into()),
        reference: None,
        params: mass(m)?,
    })
}
