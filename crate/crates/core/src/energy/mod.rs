//! Scenario-level verdicts built on the congruence and transport layers.

mod hawking;
mod scan;
mod trapped;
mod witness;

pub use hawking::{hawking_check, HawkingReport, HawkingVerdict};
pub use scan::{nec_scan, null_direction, PointMinimum, Sampler, ScanOptions, ScanReport, ScanVerdict};
pub use trapped::{
    converging_test, penrose_bound, CapCheck, CapOptions, NodeConvergence, PenroseRay,
    PenroseReport, PenroseVerdict, TrappedReport, TrappedVerdict,
};
pub use witness::{witness_violation, Lambda, WitnessAttempt, WitnessOptions, WitnessOutcome, WitnessReport};
