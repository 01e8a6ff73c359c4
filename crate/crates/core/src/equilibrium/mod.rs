//! Equilibrium sampling, crossing statistics and exact feasibility of path measures.

mod crossing;
mod feasibility;
mod sampling;
mod simplex;

use serde::{Deserialize, Serialize};

pub use crossing::{crossing, crossing_statistics, total_variation, CrossingCell, CrossingTable, RegionPartition, TrackRegion};
pub use feasibility::{
    atom_values, certify_no_measure, hardy_constraints, rational_string, verify_witness, AtomPattern, BoundCertificate,
    Constraint, FarkasCertificate, FeasibilityProblem, Relation, Term, Verdict, ATOMS, HARDY_BOTH_MINUS_Z,
};
pub use sampling::{sample_equilibrium, EquilibriumSampler, SampleSet};

/// A pair of subsystem times treated as simultaneous.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub label: String,
    pub t_a: f64,
    pub t_b: f64,
}

impl SliceSpec {
    pub fn new(label: impl Into<String>, t_a: f64, t_b: f64) -> Self {
        SliceSpec { label: label.into(), t_a, t_b }
    }

    pub fn offset(&self) -> f64 {
        self.t_b - self.t_a
    }
}
