//! Scenario configuration: a single JSON document naming the mesh, material,
//! models, boundary conditions, load schedule, solver options and outputs.

use std::path::{Path, PathBuf};

use nalgebra::Point2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constitutive::{make_moduli, BulkKind, BulkModel, DegradationFn};
use crate::driver::{DriverError, FieldState, PhaseDiscretization, Schedule, Simulation, Tolerances};
use crate::fem::{BcValue, DirichletSet};
use crate::fvm::{self, PhaseFieldParams, Segment};
use crate::mesh::{self, Mesh, MeshError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown boundary tag {0:?}")]
    UnknownTag(String),
    #[error("no boundary condition is driven by the load schedule")]
    NoDrivenBc,
    #[error("invalid {field}: {msg}")]
    Invalid { field: String, msg: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Constitutive(#[from] crate::constitutive::ConstitutiveError),
    #[error(transparent)]
    Fem(#[from] crate::fem::FemError),
    #[error(transparent)]
    Fvm(#[from] fvm::FvmError),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    /// Young's modulus (MPa).
    pub youngs_modulus: f64,
    pub poissons_ratio: f64,
    /// Critical energy release rate (N/mm).
    pub toughness: f64,
    /// Phase-field regularization length (mm).
    pub length_scale: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum BulkModelSpec {
    #[default]
    Isotropic,
    Amor,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DegradationSpec {
    #[default]
    Quadratic,
    /// Normalized exponential family; `k` has no default and must be given.
    Exponential { n: f64, k: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum PhaseFieldSpec {
    #[default]
    Fv,
    Fe,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum DrivenKeyword {
    Driven,
}

/// Either a fixed value in mm or the literal string "driven".
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum BcValueSpec {
    Fixed(f64),
    Keyword(DrivenKeyword),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BcSpec {
    /// Physical name (or bare integer tag) of the boundary.
    pub tag: String,
    pub component: Component,
    pub value: BcValueSpec,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSegment {
    pub to: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CrackSpec {
    pub from: [f64; 2],
    pub to: [f64; 2],
}

fn default_max_iterations() -> usize {
    2000
}
fn default_correction_tol() -> f64 {
    1e-6
}
fn default_residual_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum LinearSolverSpec {
    #[default]
    Direct,
    Pcg,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_correction_tol")]
    pub mech_correction_tol: f64,
    #[serde(default = "default_correction_tol")]
    pub phase_correction_tol: f64,
    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub linear_solver: LinearSolverSpec,
    /// Halve non-converging increments (at most four times) instead of
    /// failing fast.
    #[serde(default)]
    pub step_halving: bool,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            mech_correction_tol: default_correction_tol(),
            phase_correction_tol: default_correction_tol(),
            residual_tol: default_residual_tol(),
            max_iterations: default_max_iterations(),
            linear_solver: LinearSolverSpec::Direct,
            step_halving: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Load-displacement CSV path.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    /// Directory for VTK snapshots.
    #[serde(default)]
    pub vtk_dir: Option<PathBuf>,
    /// Write a snapshot every this many steps; 0 writes only the final state.
    #[serde(default)]
    pub vtk_stride: usize,
    /// Run summary JSON path.
    #[serde(default)]
    pub summary: Option<PathBuf>,
}

fn default_crack_phi() -> f64 {
    0.999
}

/// Full problem description, serializable round-trip stable.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub mesh: PathBuf,
    pub material: MaterialSpec,
    #[serde(default)]
    pub bulk_model: BulkModelSpec,
    #[serde(default)]
    pub degradation: DegradationSpec,
    /// Irreversibility threshold phi_c.
    #[serde(default)]
    pub irreversibility_threshold: f64,
    #[serde(default)]
    pub initial_cracks: Vec<CrackSpec>,
    /// Constraint value used when seeding preexisting cracks.
    #[serde(default = "default_crack_phi")]
    pub crack_phi: f64,
    /// Keep crack cells constrained for the whole run instead of
    /// back-calculating the history field.
    #[serde(default)]
    pub retain_crack_constraints: bool,
    #[serde(default)]
    pub phase_field: PhaseFieldSpec,
    pub boundary_conditions: Vec<BcSpec>,
    pub load_schedule: Vec<ScheduleSegment>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        let text = serde_json::to_string_pretty(self).map_err(ScenarioError::Parse)?;
        std::fs::write(path.as_ref(), text).map_err(|source| ScenarioError::Io {
            path: path.as_ref().display().to_string(),
            source,
        })
    }

    pub fn degradation_fn(&self) -> Result<DegradationFn, ScenarioError> {
        Ok(match self.degradation {
            DegradationSpec::Quadratic => DegradationFn::Quadratic,
            DegradationSpec::Exponential { n, k } => DegradationFn::exponential(n, k)?,
        })
    }

    /// Builds the simulation from a pre-loaded mesh (the mesh path in the
    /// config is then informational only).
    pub fn build_with_mesh(
        &self,
        mesh: Mesh,
    ) -> Result<(Simulation, Schedule, FieldState), ScenarioError> {
        let topo = mesh::build_topology(&mesh)?;
        let moduli = make_moduli(self.material.youngs_modulus, self.material.poissons_ratio)?;
        let kind = match self.bulk_model {
            BulkModelSpec::Isotropic => BulkKind::Isotropic,
            BulkModelSpec::Amor => BulkKind::Amor,
        };
        let model = BulkModel::new(kind, moduli);
        let degradation = self.degradation_fn()?;
        if !(self.material.toughness > 0.0 && self.material.length_scale > 0.0) {
            return Err(ScenarioError::Invalid {
                field: "material".into(),
                msg: "toughness and length_scale must be positive".into(),
            });
        }
        if !(0.0..1.0).contains(&self.irreversibility_threshold) {
            return Err(ScenarioError::Invalid {
                field: "irreversibility_threshold".into(),
                msg: format!("{} outside [0, 1)", self.irreversibility_threshold),
            });
        }
        let mut params = PhaseFieldParams::uniform(
            self.material.toughness,
            self.material.length_scale,
            mesh.n_cells(),
        );
        params.phi_c = self.irreversibility_threshold;
        params.phi_init = self.crack_phi;

        let mut dirichlet = DirichletSet::default();
        let mut loaded_tag = None;
        for bc in &self.boundary_conditions {
            let tag = mesh
                .resolve_tag(&bc.tag)
                .filter(|t| topo.boundary_faces.iter().any(|f| f.tag == Some(*t)))
                .ok_or_else(|| ScenarioError::UnknownTag(bc.tag.clone()))?;
            let comp = match bc.component {
                Component::X => 0,
                Component::Y => 1,
            };
            let value = match bc.value {
                BcValueSpec::Fixed(v) => BcValue::Fixed(v),
                BcValueSpec::Keyword(DrivenKeyword::Driven) => {
                    loaded_tag = Some(tag);
                    BcValue::Driven(1.0)
                }
            };
            dirichlet.constrain_tag(&mesh, &topo, tag, comp, value)?;
        }
        let loaded_tag = loaded_tag.ok_or(ScenarioError::NoDrivenBc)?;

        let segments: Vec<(f64, f64)> = self
            .load_schedule
            .iter()
            .map(|s| (s.to, s.step))
            .collect();
        let schedule = Schedule::from_segments(&segments)?;

        let discretization = match self.phase_field {
            PhaseFieldSpec::Fv => PhaseDiscretization::FiniteVolume,
            PhaseFieldSpec::Fe => PhaseDiscretization::FiniteElement,
        };
        let mut sim = Simulation::new(
            mesh,
            topo,
            model,
            degradation,
            params,
            dirichlet,
            loaded_tag,
            discretization,
            matches!(self.solver.linear_solver, LinearSolverSpec::Direct),
        )?;
        sim.tolerances = Tolerances {
            mech_correction: self.solver.mech_correction_tol,
            phase_correction: self.solver.phase_correction_tol,
            mech_residual: self.solver.residual_tol,
            phase_residual: self.solver.residual_tol,
            ..Tolerances::default()
        };
        sim.tolerances.max_iterations = self.solver.max_iterations;
        sim.step_halving = self.solver.step_halving;

        let mut state = sim.pristine_state();
        if !self.initial_cracks.is_empty() {
            if discretization != PhaseDiscretization::FiniteVolume {
                return Err(ScenarioError::Invalid {
                    field: "initial_cracks".into(),
                    msg: "crack seeding requires the finite-volume phase field".into(),
                });
            }
            let segments: Vec<Segment> = self
                .initial_cracks
                .iter()
                .map(|c| Segment {
                    a: Point2::new(c.from[0], c.from[1]),
                    b: Point2::new(c.to[0], c.to[1]),
                })
                .collect();
            let init = fvm::init_history(
                &sim.mesh,
                &sim.topo,
                &sim.params,
                &sim.trans,
                &segments,
                &sim.degradation,
                self.retain_crack_constraints,
            )?;
            state.phi = init.phi;
            state.history = init.history;
            if self.retain_crack_constraints {
                sim.retain_crack_constraints(&init.constrained)?;
            }
        }
        Ok((sim, schedule, state))
    }

    /// Loads the mesh named by the config and builds the simulation.
    pub fn build(&self) -> Result<(Simulation, Schedule, FieldState), ScenarioError> {
        let mesh = mesh::load_gmsh(&self.mesh)?;
        self.build_with_mesh(mesh)
    }
}
