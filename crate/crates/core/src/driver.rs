//! Quasi-static load stepping with alternate minimization.
//!
//! Each staggered iteration solves the mechanics with the phase field frozen,
//! updates the history field from the new strains, then solves the
//! phase-field subsystem with the displacements frozen (a single Newton step
//! for the quadratic degradation, an inner Newton loop otherwise).
//! Convergence requires the corrections of both fields and the freshly
//! assembled residuals of both subsystems to pass their tolerances, so the
//! reported state always satisfies the residual checks as-is.

use std::time::Instant;

use nalgebra::Vector2;
use thiserror::Error;

use crate::constitutive::{update_history, BulkModel, ConstitutiveError, DegradationFn};
use crate::fem::{DirichletSet, FemError, FePhaseSystem, MechanicsSystem};
use crate::fvm::{
    compute_transmissibilities, FvPhaseSystem, FvmError, PhaseFieldParams, Transmissibilities,
};
use crate::mesh::{Mesh, Topology};
use crate::sparse::{LinearSolver, SolverStats, SparseError};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("load step {step} (load {load:.6e}) did not converge within {iterations} iterations")]
    NonConvergence {
        step: usize,
        load: f64,
        iterations: usize,
    },
    #[error("inner phase-field Newton did not converge within {0} iterations")]
    NewtonStalled(usize),
    #[error("load schedule segment {0} is not reachable by its increment")]
    BadSchedule(usize),
    #[error("boundary tag {0} has no driven component")]
    NoDrivenTag(i32),
    #[error("output: {0}")]
    Output(String),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Fvm(#[from] FvmError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Constitutive(#[from] ConstitutiveError),
}

/// Convergence controls for the staggered loop. The residual tolerances are
/// relative to the first-iteration residual of each load step.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub mech_correction: f64,
    pub phase_correction: f64,
    pub mech_residual: f64,
    pub phase_residual: f64,
    pub max_iterations: usize,
    pub newton_residual: f64,
    pub newton_max: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            mech_correction: 1e-6,
            phase_correction: 1e-6,
            mech_residual: 1e-8,
            phase_residual: 1e-8,
            max_iterations: 2000,
            newton_residual: 1e-10,
            newton_max: 50,
        }
    }
}

/// Primary unknowns plus the cell-wise history field.
#[derive(Debug, Clone)]
pub struct FieldState {
    /// Nodal displacements, two per node.
    pub u: Vec<f64>,
    /// Phase field: per cell (FV) or per node (FE comparison mode).
    pub phi: Vec<f64>,
    /// History field, always per cell.
    pub history: Vec<f64>,
    pub load: f64,
}

/// Which discretization carries the phase field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseDiscretization {
    FiniteVolume,
    FiniteElement,
}

enum PhaseBackend {
    Fv(FvPhaseSystem),
    Fe(FePhaseSystem),
}

/// Per-step outcome recorded by [`Simulation::run_schedule`].
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub load: f64,
    pub iterations: usize,
    pub clamp_events: usize,
    /// Resultant on the driven boundary tag.
    pub reaction: Vector2<f64>,
    pub reactions: Vec<(i32, Vector2<f64>)>,
    pub bulk_energy: f64,
    pub surface_energy: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SolveReport {
    pub steps: Vec<StepRecord>,
    pub total_iterations: usize,
    pub total_clamp_events: usize,
    pub peak_load: f64,
    pub peak_load_step: usize,
    pub wall_seconds: f64,
    pub mech_solver: SolverStats,
    pub phase_solver: SolverStats,
}

/// Observer invoked after every converged load step.
pub trait StepSink {
    fn on_step(
        &mut self,
        record: &StepRecord,
        state: &FieldState,
        sim: &Simulation,
    ) -> Result<(), DriverError>;
}

/// Sink that discards everything.
pub struct NoSink;

impl StepSink for NoSink {
    fn on_step(&mut self, _: &StepRecord, _: &FieldState, _: &Simulation) -> Result<(), DriverError> {
        Ok(())
    }
}

/// Expanded load schedule: the absolute prescribed values of every step.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub steps: Vec<f64>,
}

impl Schedule {
    /// Expands (target, increment) segments starting from zero. Targets must
    /// be reachable by whole increments within 1e-12 rounding.
    pub fn from_segments(segments: &[(f64, f64)]) -> Result<Schedule, DriverError> {
        let mut steps = Vec::new();
        let mut start = 0.0;
        for (i, &(target, inc)) in segments.iter().enumerate() {
            if !(inc > 0.0) || target <= start {
                return Err(DriverError::BadSchedule(i));
            }
            let count = ((target - start) / inc).round();
            if count < 1.0 || (start + count * inc - target).abs() > 1e-12 * target.abs().max(1.0)
            {
                return Err(DriverError::BadSchedule(i));
            }
            for s in 1..=(count as usize) {
                steps.push(start + s as f64 * inc);
            }
            start = target;
        }
        Ok(Schedule { steps })
    }
}

/// Assembled problem: mesh, constitutive model, both discretizations and the
/// solvers, ready for load stepping.
pub struct Simulation {
    pub mesh: Mesh,
    pub topo: Topology,
    pub model: BulkModel,
    pub degradation: DegradationFn,
    pub params: PhaseFieldParams,
    pub mech: MechanicsSystem,
    phase: PhaseBackend,
    pub trans: Transmissibilities,
    pub tolerances: Tolerances,
    /// Tag whose reaction resultant is reported as the applied load.
    pub loaded_tag: i32,
    pub step_halving: bool,
    mech_solver: LinearSolver,
    phase_solver: LinearSolver,
    phi_cell_scratch: Vec<f64>,
}

impl Simulation {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mesh: Mesh,
        topo: Topology,
        model: BulkModel,
        degradation: DegradationFn,
        params: PhaseFieldParams,
        dirichlet: DirichletSet,
        loaded_tag: i32,
        discretization: PhaseDiscretization,
        direct_solver: bool,
    ) -> Result<Self, DriverError> {
        let trans = compute_transmissibilities(&topo, &params)?;
        let mech = MechanicsSystem::new(&mesh, dirichlet)?;
        let phase = match discretization {
            PhaseDiscretization::FiniteVolume => PhaseBackend::Fv(FvPhaseSystem::new(&topo)?),
            PhaseDiscretization::FiniteElement => PhaseBackend::Fe(FePhaseSystem::new(&mesh)?),
        };
        let make_solver = || {
            if direct_solver {
                LinearSolver::direct()
            } else {
                LinearSolver::pcg()
            }
        };
        let n_cells = mesh.n_cells();
        Ok(Simulation {
            mesh,
            topo,
            model,
            degradation,
            params,
            mech,
            phase,
            trans,
            tolerances: Tolerances::default(),
            loaded_tag,
            step_halving: false,
            mech_solver: make_solver(),
            phase_solver: make_solver(),
            phi_cell_scratch: vec![0.0; n_cells],
        })
    }

    /// Replaces the FV phase system with one that keeps the given cells
    /// constrained for the whole run.
    pub fn retain_crack_constraints(&mut self, cells: &[usize]) -> Result<(), DriverError> {
        match self.phase {
            PhaseBackend::Fv(_) => {
                self.phase = PhaseBackend::Fv(FvPhaseSystem::with_constraints(&self.topo, cells)?);
                self.phase_solver = match self.phase_solver {
                    LinearSolver::Direct(_) => LinearSolver::direct(),
                    LinearSolver::Pcg(_) => LinearSolver::pcg(),
                };
                Ok(())
            }
            PhaseBackend::Fe(_) => Err(DriverError::Output(
                "crack constraints require the finite-volume phase field".into(),
            )),
        }
    }

    pub fn discretization(&self) -> PhaseDiscretization {
        match self.phase {
            PhaseBackend::Fv(_) => PhaseDiscretization::FiniteVolume,
            PhaseBackend::Fe(_) => PhaseDiscretization::FiniteElement,
        }
    }

    pub fn n_phase_unknowns(&self) -> usize {
        match &self.phase {
            PhaseBackend::Fv(s) => s.n_dof(),
            PhaseBackend::Fe(s) => s.n_dof(),
        }
    }

    /// Length of the phase-field vector in [`FieldState`].
    pub fn phase_field_len(&self) -> usize {
        match self.phase {
            PhaseBackend::Fv(_) => self.mesh.n_cells(),
            PhaseBackend::Fe(_) => self.mesh.n_nodes(),
        }
    }

    pub fn pristine_state(&self) -> FieldState {
        FieldState {
            u: vec![0.0; self.mech.n_dof()],
            phi: vec![0.0; self.phase_field_len()],
            history: vec![0.0; self.mesh.n_cells()],
            load: 0.0,
        }
    }

    pub fn solver_stats(&self) -> (SolverStats, SolverStats) {
        (self.mech_solver.stats(), self.phase_solver.stats())
    }

    /// Upper-triangle density of the phase-field coefficient matrix.
    pub fn phase_matrix_density(&self) -> f64 {
        match &self.phase {
            PhaseBackend::Fv(s) => s.matrix.density(),
            PhaseBackend::Fe(s) => s.matrix.density(),
        }
    }

    pub fn mech_matrix_density(&self) -> f64 {
        self.mech.matrix.density()
    }

    /// Phase field sampled per cell (identity for FV, nodal average for FE).
    pub fn cell_phi<'a>(&'a mut self, phi: &'a [f64]) -> &'a [f64] {
        match self.phase {
            PhaseBackend::Fv(_) => phi,
            PhaseBackend::Fe(_) => {
                for (k, cell) in self.mesh.cells.iter().enumerate() {
                    self.phi_cell_scratch[k] =
                        (phi[cell[0]] + phi[cell[1]] + phi[cell[2]]) / 3.0;
                }
                &self.phi_cell_scratch
            }
        }
    }

    fn cell_phi_owned(&mut self, phi: &[f64]) -> Vec<f64> {
        self.cell_phi(phi).to_vec()
    }

    /// 2-norm of the mechanics residual at the given state.
    pub fn mech_residual_norm(&mut self, state: &FieldState) -> Result<f64, DriverError> {
        let phi_cell = self.cell_phi_owned(&state.phi);
        let evals = self.mech.evaluate_cells(
            &self.mesh,
            &state.u,
            &phi_cell,
            &self.model,
            &self.degradation,
        )?;
        let r = self.mech.residual(&self.mesh, &self.topo, &state.u, &evals);
        Ok(norm2(&r))
    }

    /// 2-norm of the phase-field residual at the given state.
    pub fn phase_residual_norm(&mut self, state: &FieldState) -> Result<f64, DriverError> {
        let r = match &mut self.phase {
            PhaseBackend::Fv(s) => s.assemble(
                &state.phi,
                &state.history,
                &self.params,
                &self.topo,
                &self.trans,
                &self.degradation,
            )?,
            PhaseBackend::Fe(s) => s.assemble(
                &self.mesh,
                &self.mech.kernels,
                &state.phi,
                &state.history,
                &self.params.gc,
                &self.params.ell,
                &self.degradation,
            )?,
        };
        Ok(norm2(&r))
    }

    /// One phase-field subsolve with the mechanics frozen. Returns the
    /// infinity-norm of the phase correction and the number of clamped values.
    pub fn solve_phase(&mut self, state: &mut FieldState) -> Result<(f64, usize), DriverError> {
        let quadratic = matches!(self.degradation, DegradationFn::Quadratic);
        let before = state.phi.clone();
        let mut clamps = 0usize;
        let mut r0: Option<f64> = None;
        for _ in 0..self.tolerances.newton_max {
            let r = match &mut self.phase {
                PhaseBackend::Fv(s) => s.assemble(
                    &state.phi,
                    &state.history,
                    &self.params,
                    &self.topo,
                    &self.trans,
                    &self.degradation,
                )?,
                PhaseBackend::Fe(s) => s.assemble(
                    &self.mesh,
                    &self.mech.kernels,
                    &state.phi,
                    &state.history,
                    &self.params.gc,
                    &self.params.ell,
                    &self.degradation,
                )?,
            };
            let rnorm = norm2(&r);
            let r0v = *r0.get_or_insert(rnorm);
            if rnorm <= self.tolerances.newton_residual * r0v.max(1.0) {
                break;
            }
            let minus_r: Vec<f64> = r.iter().map(|v| -v).collect();
            let (matrix, dx) = match &mut self.phase {
                PhaseBackend::Fv(s) => (&s.matrix, self.phase_solver.solve(&s.matrix, &minus_r)?),
                PhaseBackend::Fe(s) => (&s.matrix, self.phase_solver.solve(&s.matrix, &minus_r)?),
            };
            let _ = matrix;
            match &self.phase {
                PhaseBackend::Fv(s) => s.apply_correction(&mut state.phi, &dx),
                PhaseBackend::Fe(_) => {
                    for (p, d) in state.phi.iter_mut().zip(&dx) {
                        *p += d;
                    }
                }
            }
            for p in state.phi.iter_mut() {
                let clamped = p.clamp(0.0, 1.0);
                if clamped != *p {
                    clamps += 1;
                    *p = clamped;
                }
            }
            if quadratic {
                // g'' is constant: the subsystem is linear and one step exact.
                break;
            }
        }
        let corr = state
            .phi
            .iter()
            .zip(&before)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        Ok((corr, clamps))
    }

    /// Updates the history field from the strains of the current
    /// displacement, using the current per-cell phase field for the
    /// irreversibility threshold test.
    fn update_history_field(&mut self, state: &mut FieldState) -> Result<(), DriverError> {
        let phi_cell = self.cell_phi_owned(&state.phi);
        for k in 0..self.mesh.n_cells() {
            let eps = self.mech.cell_strain(&self.mesh, k, &state.u);
            let ev =
                crate::constitutive::eval_stress(&self.model, &self.degradation, &eps, 0.0)?;
            state.history[k] = update_history(
                state.history[k],
                ev.psi_plus,
                phi_cell[k],
                self.params.phi_c,
            );
        }
        Ok(())
    }

    /// Alternate minimization at a fixed load factor. Returns the iteration
    /// count and the number of clamped phase values.
    pub fn alternate_minimization(
        &mut self,
        state: &mut FieldState,
        load: f64,
    ) -> Result<(usize, usize), DriverError> {
        state.load = load;
        self.mech.apply_dirichlet(&mut state.u, load);
        let tol = self.tolerances;
        let mut ref_mech = None;
        let mut ref_phase = None;
        let mut last_corr: Option<(f64, f64)> = None;
        let mut clamps_total = 0usize;

        for iter in 0..=tol.max_iterations {
            // Fresh residuals of the current state; on exit these are the
            // final-state residuals, so reassembly reproduces the check.
            let r_u = self.mech_residual_norm(state)?;
            let r_phi = self.phase_residual_norm(state)?;
            let ru_ref = *ref_mech.get_or_insert(r_u);
            let rp_ref = *ref_phase.get_or_insert(r_phi);
            if let Some((cu, cp)) = last_corr {
                let mech_ok = r_u <= tol.mech_residual * ru_ref + 1e-30;
                let phase_ok = r_phi <= tol.phase_residual * rp_ref + 1e-30;
                if mech_ok && phase_ok && cu <= tol.mech_correction && cp <= tol.phase_correction
                {
                    return Ok((iter, clamps_total));
                }
            }
            if iter == tol.max_iterations {
                break;
            }

            // Mechanics with the phase field frozen.
            let phi_cell = self.cell_phi_owned(&state.phi);
            let evals = self.mech.evaluate_cells(
                &self.mesh,
                &state.u,
                &phi_cell,
                &self.model,
                &self.degradation,
            )?;
            let rhs = self.mech.assemble(&self.mesh, &self.topo, &state.u, &evals);
            let dx = self.mech_solver.solve(&self.mech.matrix, &rhs)?;
            self.mech.apply_correction(&mut state.u, &dx);
            let unorm = norm2(&state.u);
            let corr_u = if unorm > 0.0 {
                norm2(&dx) / unorm
            } else {
                norm2(&dx)
            };

            // History from the new strains, then the phase subsystem.
            self.update_history_field(state)?;
            let (corr_phi, clamps) = self.solve_phase(state)?;
            clamps_total += clamps;
            last_corr = Some((corr_u, corr_phi));
        }
        Err(DriverError::NonConvergence {
            step: 0,
            load,
            iterations: tol.max_iterations,
        })
    }

    /// Bulk and crack surface energy of a state.
    pub fn total_energy(&mut self, state: &FieldState) -> Result<(f64, f64), DriverError> {
        let phi_cell = self.cell_phi_owned(&state.phi);
        let mut bulk = 0.0;
        for k in 0..self.mesh.n_cells() {
            let eps = self.mech.cell_strain(&self.mesh, k, &state.u);
            let ev = crate::constitutive::eval_stress(
                &self.model,
                &self.degradation,
                &eps,
                phi_cell[k],
            )?;
            let (g, _, _) = self.degradation.eval(phi_cell[k])?;
            bulk += self.topo.cell_area[k] * (g * ev.psi_plus + ev.psi_minus);
        }
        let surface = match &self.phase {
            PhaseBackend::Fv(_) => {
                let mut s = 0.0;
                for k in 0..self.mesh.n_cells() {
                    s += self.topo.cell_area[k] * self.params.gc[k] * state.phi[k]
                        * state.phi[k]
                        / (2.0 * self.params.ell[k]);
                }
                for (i, e) in self.topo.interior_edges.iter().enumerate() {
                    let d = state.phi[e.cells[0]] - state.phi[e.cells[1]];
                    s += 0.5 * self.trans.edge_m[i] * d * d;
                }
                s
            }
            PhaseBackend::Fe(s) => s.surface_energy(
                &self.mesh,
                &self.mech.kernels,
                &state.phi,
                &self.params.gc,
                &self.params.ell,
            ),
        };
        Ok((bulk, surface))
    }

    fn record_step(
        &mut self,
        step: usize,
        state: &FieldState,
        iterations: usize,
        clamp_events: usize,
    ) -> Result<StepRecord, DriverError> {
        let phi_cell = self.cell_phi_owned(&state.phi);
        let evals = self.mech.evaluate_cells(
            &self.mesh,
            &state.u,
            &phi_cell,
            &self.model,
            &self.degradation,
        )?;
        let f_int = self.mech.internal_forces(&self.mesh, &evals);
        let reactions = self.mech.reactions(&f_int);
        let reaction = reactions
            .iter()
            .find(|(t, _)| *t == self.loaded_tag)
            .map(|(_, r)| *r)
            .ok_or(DriverError::NoDrivenTag(self.loaded_tag))?;
        let (bulk_energy, surface_energy) = self.total_energy(state)?;
        Ok(StepRecord {
            step,
            load: state.load,
            iterations,
            clamp_events,
            reaction,
            reactions,
            bulk_energy,
            surface_energy,
        })
    }

    /// Runs one load step, optionally retrying with halved increments
    /// (at most four halvings) when the staggered loop stalls.
    fn run_step(
        &mut self,
        state: &mut FieldState,
        from: f64,
        to: f64,
        depth: usize,
    ) -> Result<(usize, usize), DriverError> {
        match self.alternate_minimization(state, to) {
            Ok(ok) => Ok(ok),
            Err(DriverError::NonConvergence { .. }) if self.step_halving && depth < 4 => {
                let mid = 0.5 * (from + to);
                let (i1, c1) = self.run_step(state, from, mid, depth + 1)?;
                let (i2, c2) = self.run_step(state, mid, to, depth + 1)?;
                Ok((i1 + i2, c1 + c2))
            }
            Err(e) => Err(e),
        }
    }

    /// Executes every increment of the schedule in order, reporting each
    /// converged step to the sink. The critical load is the maximum reaction
    /// magnitude on the loaded tag over the trajectory.
    pub fn run_schedule(
        &mut self,
        state: &mut FieldState,
        schedule: &Schedule,
        sink: &mut dyn StepSink,
    ) -> Result<SolveReport, DriverError> {
        let start = Instant::now();
        let mut report = SolveReport::default();
        let mut prev = state.load;
        for (i, &load) in schedule.steps.iter().enumerate() {
            let backup = if self.step_halving {
                Some(state.clone())
            } else {
                None
            };
            let step_result = self.run_step(state, prev, load, 0);
            let (iterations, clamp_events) = match step_result {
                Ok(v) => v,
                Err(DriverError::NonConvergence { load, iterations, .. }) => {
                    if let Some(b) = backup {
                        *state = b;
                    }
                    report.wall_seconds = start.elapsed().as_secs_f64();
                    let (ms, ps) = self.solver_stats();
                    report.mech_solver = ms;
                    report.phase_solver = ps;
                    return Err(DriverError::NonConvergence {
                        step: i,
                        load,
                        iterations,
                    });
                }
                Err(e) => return Err(e),
            };
            let record = self.record_step(i, state, iterations, clamp_events)?;
            report.total_iterations += iterations;
            report.total_clamp_events += clamp_events;
            let mag = record.reaction.norm();
            if mag > report.peak_load {
                report.peak_load = mag;
                report.peak_load_step = i;
            }
            sink.on_step(&record, state, self)?;
            report.steps.push(record);
            prev = load;
        }
        report.wall_seconds = start.elapsed().as_secs_f64();
        let (ms, ps) = self.solver_stats();
        report.mech_solver = ms;
        report.phase_solver = ps;
        Ok(report)
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::{make_moduli, BulkKind};
    use crate::fem::BcValue;
    use crate::meshgen;
    use approx::assert_relative_eq;

    fn small_tension_sim(gc: f64) -> Simulation {
        let mesh = meshgen::uniform_square(0.25).unwrap();
        let topo = crate::mesh::build_topology(&mesh).unwrap();
        let model = BulkModel::new(BulkKind::Isotropic, make_moduli(210_000.0, 0.3).unwrap());
        let params = PhaseFieldParams::uniform(gc, 0.1, mesh.n_cells());
        let mut dirichlet = DirichletSet::default();
        dirichlet
            .constrain_tag(&mesh, &topo, meshgen::TAG_BOTTOM, 0, BcValue::Fixed(0.0))
            .unwrap();
        dirichlet
            .constrain_tag(&mesh, &topo, meshgen::TAG_BOTTOM, 1, BcValue::Fixed(0.0))
            .unwrap();
        dirichlet
            .constrain_tag(&mesh, &topo, meshgen::TAG_TOP, 0, BcValue::Fixed(0.0))
            .unwrap();
        dirichlet
            .constrain_tag(&mesh, &topo, meshgen::TAG_TOP, 1, BcValue::Driven(1.0))
            .unwrap();
        Simulation::new(
            mesh,
            topo,
            model,
            DegradationFn::Quadratic,
            params,
            dirichlet,
            meshgen::TAG_TOP,
            PhaseDiscretization::FiniteVolume,
            true,
        )
        .unwrap()
    }

    #[test]
    fn zero_load_converges_in_one_iteration() {
        let mut sim = small_tension_sim(2.7);
        let mut state = sim.pristine_state();
        let (iters, clamps) = sim.alternate_minimization(&mut state, 0.0).unwrap();
        assert_eq!(iters, 1);
        assert_eq!(clamps, 0);
        assert!(state.u.iter().all(|&v| v == 0.0));
        assert!(state.phi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn elastic_range_reaction_scales_linearly() {
        let mut sim = small_tension_sim(1e9);
        let mut state = sim.pristine_state();
        let schedule = Schedule::from_segments(&[(2e-4, 1e-4)]).unwrap();
        let report = sim.run_schedule(&mut state, &schedule, &mut NoSink).unwrap();
        assert_eq!(report.steps.len(), 2);
        let r1 = report.steps[0].reaction[1];
        let r2 = report.steps[1].reaction[1];
        assert!(r1 > 0.0);
        assert_relative_eq!(r2 / r1, 2.0, max_relative = 1e-3);
        // Essentially no damage at this toughness.
        assert!(state.phi.iter().all(|&p| p < 1e-6));
    }

    #[test]
    fn staggered_residuals_hold_at_convergence() {
        let mut sim = small_tension_sim(0.01);
        let mut state = sim.pristine_state();
        sim.alternate_minimization(&mut state, 5e-4).unwrap();
        let r_u = sim.mech_residual_norm(&state).unwrap();
        let r_p = sim.phase_residual_norm(&state).unwrap();
        // Residual tolerances are relative to the step's first iterate;
        // recompute that scale here the same way.
        let mut fresh = sim.pristine_state();
        sim.mech.apply_dirichlet(&mut fresh.u, 5e-4);
        let ref_u = sim.mech_residual_norm(&fresh).unwrap();
        assert!(r_u <= 1e-8 * ref_u, "mech residual {r_u} vs ref {ref_u}");
        assert!(r_p <= 1e-6, "phase residual {r_p}");
        assert!(state.phi.iter().all(|&p| (0.0..=1.0).contains(&p)));
        assert!(state.phi.iter().any(|&p| p > 1e-4));
    }

    #[test]
    fn schedule_expansion_and_validation() {
        let s = Schedule::from_segments(&[(5e-4, 1e-4), (6e-4, 1e-5)]).unwrap();
        assert_eq!(s.steps.len(), 5 + 10);
        assert_relative_eq!(s.steps[4], 5e-4, max_relative = 1e-12);
        assert_relative_eq!(*s.steps.last().unwrap(), 6e-4, max_relative = 1e-12);
        assert!(Schedule::from_segments(&[(5e-4, 3e-4)]).is_err());
        assert!(Schedule::from_segments(&[(1e-4, -1e-5)]).is_err());
    }

    #[test]
    fn single_trivial_step_schedule() {
        let mut sim = small_tension_sim(2.7);
        let mut state = sim.pristine_state();
        let schedule = Schedule::from_segments(&[(1e-9, 1e-9)]).unwrap();
        let report = sim.run_schedule(&mut state, &schedule, &mut NoSink).unwrap();
        assert_eq!(report.steps.len(), 1);
        assert!(report.peak_load >= 0.0);
        assert_eq!(report.total_iterations, report.steps[0].iterations);
    }

    #[test]
    fn energies_of_uniform_phase_field() {
        let mut sim = small_tension_sim(2.7);
        let mut state = sim.pristine_state();
        let c = 0.3;
        state.phi.fill(c);
        let (bulk, surface) = sim.total_energy(&state).unwrap();
        assert_relative_eq!(bulk, 0.0);
        // Uniform field kills the gradient term: sum A Gc c^2 / (2 ell).
        let expect: f64 = (0..sim.mesh.n_cells())
            .map(|k| sim.topo.cell_area[k] * sim.params.gc[k] * c * c / (2.0 * sim.params.ell[k]))
            .sum();
        assert_relative_eq!(surface, expect, max_relative = 1e-12);
    }

    #[test]
    fn irreversibility_history_monotone_under_growing_load() {
        let mut sim = small_tension_sim(0.05);
        let mut state = sim.pristine_state();
        let schedule = Schedule::from_segments(&[(1e-3, 1e-4)]).unwrap();
        struct Monotone {
            prev: Vec<f64>,
            ok: bool,
        }
        impl StepSink for Monotone {
            fn on_step(
                &mut self,
                _: &StepRecord,
                state: &FieldState,
                _: &Simulation,
            ) -> Result<(), DriverError> {
                for (h, p) in state.history.iter().zip(&self.prev) {
                    if *h < *p - 1e-12 {
                        self.ok = false;
                    }
                }
                self.prev = state.history.clone();
                Ok(())
            }
        }
        let mut sink = Monotone {
            prev: vec![0.0; sim.mesh.n_cells()],
            ok: true,
        };
        sim.run_schedule(&mut state, &schedule, &mut sink).unwrap();
        assert!(sink.ok, "history decreased during a monotone pull");
    }
}
