//! Quasi-static phase-field brittle fracture on unstructured triangle meshes.
//!
//! The mechanics subproblem is discretized with linear (P1) finite elements
//! under plane strain, the phase-field evolution equation with a cell-centered
//! finite volume scheme based on the two-point flux approximation (TPFA), both
//! living on the same simplex mesh. The coupled system is solved by alternate
//! minimization with a cell-wise history field enforcing crack irreversibility.
//!
//! An equal-order P1 finite element discretization of the phase field is also
//! provided for comparison runs on identical meshes.

pub mod constitutive;
pub mod driver;
pub mod fem;
pub mod fvm;
pub mod mesh;
pub mod meshgen;
pub mod oned;
pub mod output;
pub mod problems;
pub mod scenario;
pub mod sparse;

pub use constitutive::{BulkKind, BulkModel, DegradationFn, ElasticModuli, StressEval};
pub use driver::{FieldState, Simulation, SolveReport, Tolerances};
pub use mesh::{Mesh, Topology};
pub use scenario::Scenario;
