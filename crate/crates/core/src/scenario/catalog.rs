//! Scenario files bundled with the library.

use super::{parse_str, Scenario, ScenarioError};

#[derive(Debug, Clone, Copy)]
pub struct CannedScenario {
    pub name: &'static str,
    pub file: &'static str,
    pub summary: &'static str,
    pub text: &'static str,
}

impl CannedScenario {
    pub fn parse(&self) -> Result<Scenario, ScenarioError> {
        parse_str(self.text)
    }
}

macro_rules! canned {
    ($name:literal, $summary:literal) => {
        CannedScenario {
            name: $name,
            file: concat!("scenarios/", $name, ".toml"),
            summary: $summary,
            text: include_str!(concat!("../../scenarios/", $name, ".toml")),
        }
    };
}

pub fn canned() -> Vec<CannedScenario> {
    vec![
        canned!("minkowski_cone", "flat outgoing cone: equality-like convexity, monotone area"),
        canned!("schwarzschild_horizon", "horizon generators: vacuum scan, constant entropy, constant area"),
        canned!("flrw_witness", "a(t) = exp(t^2): negative null gap and an entropy violation (exits 1)"),
        canned!("weighted_witness", "weighted flat space with V = x1: weighted gap -1 and a violation"),
        canned!("trapped_interior", "trapped sphere r = 1.5 inside the horizon: focal bound"),
        canned!("ingoing_cone", "flat ingoing cone: area decreases, focal point at t = 1"),
    ]
}

pub fn canned_by_name(name: &str) -> Option<CannedScenario> {
    canned().into_iter().find(|c| c.name == name)
}
