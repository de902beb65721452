//! Output writers: legacy ASCII VTK snapshots, the load-displacement CSV and
//! the JSON run summary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::driver::{DriverError, FieldState, SolveReport, StepRecord, StepSink, Simulation};
use crate::mesh::Mesh;

fn io_err(e: std::io::Error) -> DriverError {
    DriverError::Output(e.to_string())
}

/// Writes a legacy ASCII VTK unstructured grid: points, triangle cells, the
/// displacement as point-data vectors and per-cell "phi" and "history"
/// scalars. Values carry 17 significant digits.
pub fn write_vtk(
    mesh: &Mesh,
    u: &[f64],
    phi_cell: &[f64],
    history: &[f64],
    path: impl AsRef<Path>,
) -> Result<(), DriverError> {
    let file = File::create(path.as_ref()).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "phase-field fracture state")?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(w, "POINTS {} double", mesh.n_nodes())?;
        for p in &mesh.nodes {
            writeln!(w, "{:.16e} {:.16e} 0", p.x, p.y)?;
        }
        writeln!(w, "CELLS {} {}", mesh.n_cells(), 4 * mesh.n_cells())?;
        for c in &mesh.cells {
            writeln!(w, "3 {} {} {}", c[0], c[1], c[2])?;
        }
        writeln!(w, "CELL_TYPES {}", mesh.n_cells())?;
        for _ in 0..mesh.n_cells() {
            writeln!(w, "5")?;
        }
        writeln!(w, "POINT_DATA {}", mesh.n_nodes())?;
        writeln!(w, "VECTORS displacement double")?;
        for n in 0..mesh.n_nodes() {
            writeln!(w, "{:.16e} {:.16e} 0", u[2 * n], u[2 * n + 1])?;
        }
        writeln!(w, "CELL_DATA {}", mesh.n_cells())?;
        writeln!(w, "SCALARS phi double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in phi_cell {
            writeln!(w, "{:.16e}", v)?;
        }
        writeln!(w, "SCALARS history double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in history {
            writeln!(w, "{:.16e}", v)?;
        }
        Ok(())
    })();
    res.map_err(io_err)
}

/// CSV sink: one row per converged step, header row, '.' decimal separator.
pub struct CsvSink {
    writer: BufWriter<File>,
}

impl CsvSink {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, DriverError> {
        if let Some(dir) = path.as_ref().parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir).map_err(io_err)?;
            }
        }
        let mut writer = BufWriter::new(File::create(path.as_ref()).map_err(io_err)?);
        writeln!(
            writer,
            "step,load_factor,prescribed_displacement_mm,reaction_fx,reaction_fy,iterations,clamp_events,bulk_energy,surface_energy"
        )
        .map_err(io_err)?;
        Ok(CsvSink { writer })
    }
}

impl StepSink for CsvSink {
    fn on_step(
        &mut self,
        r: &StepRecord,
        _state: &FieldState,
        _sim: &Simulation,
    ) -> Result<(), DriverError> {
        writeln!(
            self.writer,
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{},{},{:.17e},{:.17e}",
            r.step,
            r.load,
            r.load,
            r.reaction[0],
            r.reaction[1],
            r.iterations,
            r.clamp_events,
            r.bulk_energy,
            r.surface_energy
        )
        .map_err(io_err)?;
        self.writer.flush().map_err(io_err)
    }
}

/// VTK snapshot sink; writes every `stride` steps, or only the final step
/// when `stride` is 0.
pub struct VtkSink {
    dir: PathBuf,
    stride: usize,
    total_steps: usize,
}

impl VtkSink {
    pub fn create(
        dir: impl AsRef<Path>,
        stride: usize,
        total_steps: usize,
    ) -> Result<Self, DriverError> {
        fs::create_dir_all(dir.as_ref()).map_err(io_err)?;
        Ok(VtkSink {
            dir: dir.as_ref().to_path_buf(),
            stride,
            total_steps,
        })
    }
}

impl StepSink for VtkSink {
    fn on_step(
        &mut self,
        r: &StepRecord,
        state: &FieldState,
        sim: &Simulation,
    ) -> Result<(), DriverError> {
        let last = r.step + 1 == self.total_steps;
        let due = self.stride > 0 && r.step % self.stride == 0;
        if !(due || last) {
            return Ok(());
        }
        let path = self.dir.join(format!("state_{:06}.vtk", r.step));
        // Cell-sampled phase field regardless of discretization.
        let phi_cell: Vec<f64> = match sim.discretization() {
            crate::driver::PhaseDiscretization::FiniteVolume => state.phi.clone(),
            crate::driver::PhaseDiscretization::FiniteElement => sim
                .mesh
                .cells
                .iter()
                .map(|c| (state.phi[c[0]] + state.phi[c[1]] + state.phi[c[2]]) / 3.0)
                .collect(),
        };
        write_vtk(&sim.mesh, &state.u, &phi_cell, &state.history, path)
    }
}

/// Progress lines on stderr.
pub struct ProgressSink {
    pub every: usize,
    pub total: usize,
}

impl StepSink for ProgressSink {
    fn on_step(
        &mut self,
        r: &StepRecord,
        _state: &FieldState,
        _sim: &Simulation,
    ) -> Result<(), DriverError> {
        if self.every > 0 && (r.step % self.every == 0 || r.step + 1 == self.total) {
            eprintln!(
                "step {:>5}/{} load {:.6e} reaction ({:+.4e}, {:+.4e}) N iters {:>4} clamps {}",
                r.step + 1,
                self.total,
                r.load,
                r.reaction[0],
                r.reaction[1],
                r.iterations,
                r.clamp_events
            );
        }
        Ok(())
    }
}

/// Fans a step out to several sinks.
pub struct MultiSink {
    pub sinks: Vec<Box<dyn StepSink>>,
}

impl StepSink for MultiSink {
    fn on_step(
        &mut self,
        r: &StepRecord,
        state: &FieldState,
        sim: &Simulation,
    ) -> Result<(), DriverError> {
        for s in &mut self.sinks {
            s.on_step(r, state, sim)?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct SolverSummary {
    symbolic_factorizations: usize,
    numeric_factorizations: usize,
    solves: usize,
}

/// JSON run summary with iteration totals, the peak load and timings.
#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub steps: usize,
    pub total_iterations: usize,
    pub total_clamp_events: usize,
    pub peak_load: f64,
    pub peak_load_step: usize,
    pub wall_seconds: f64,
    pub displacement_unknowns: usize,
    pub phase_unknowns: usize,
    pub mech_matrix_density: f64,
    pub phase_matrix_density: f64,
    /// Factorization backend; the fill-reducing ordering is fixed per pattern.
    pub linear_solver: &'static str,
    mech_solver: SolverSummary,
    phase_solver: SolverSummary,
}

impl RunSummary {
    pub fn new(report: &SolveReport, sim: &Simulation) -> RunSummary {
        RunSummary {
            steps: report.steps.len(),
            total_iterations: report.total_iterations,
            total_clamp_events: report.total_clamp_events,
            peak_load: report.peak_load,
            peak_load_step: report.peak_load_step,
            wall_seconds: report.wall_seconds,
            displacement_unknowns: sim.mech.matrix.dim(),
            phase_unknowns: sim.n_phase_unknowns(),
            mech_matrix_density: sim.mech_matrix_density(),
            phase_matrix_density: sim.phase_matrix_density(),
            linear_solver: "sparse-cholesky-amd",
            mech_solver: SolverSummary {
                symbolic_factorizations: report.mech_solver.symbolic_factorizations,
                numeric_factorizations: report.mech_solver.numeric_factorizations,
                solves: report.mech_solver.solves,
            },
            phase_solver: SolverSummary {
                symbolic_factorizations: report.phase_solver.symbolic_factorizations,
                numeric_factorizations: report.phase_solver.numeric_factorizations,
                solves: report.phase_solver.solves,
            },
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), DriverError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| DriverError::Output(e.to_string()))?;
        fs::write(path.as_ref(), text).map_err(io_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;
    use nalgebra::Point2;

    #[test]
    fn vtk_single_triangle_zero_state() {
        let mesh = Mesh {
            nodes: vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(0.0, 1.0),
            ],
            cells: vec![[0, 1, 2]],
            boundary_edges: vec![],
            physical_names: BTreeMap::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.vtk");
        write_vtk(&mesh, &[0.0; 6], &[0.0], &[0.0], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("POINTS 3 double"));
        assert!(text.contains("CELLS 1 4"));
        assert!(text.contains("SCALARS phi double 1"));
        assert!(text.contains("SCALARS history double 1"));
        assert!(text.contains("VECTORS displacement double"));
    }

    #[test]
    fn vtk_round_trips_values_at_printed_precision() {
        let mesh = Mesh {
            nodes: vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(0.0, 1.0),
            ],
            cells: vec![[0, 1, 2]],
            boundary_edges: vec![],
            physical_names: BTreeMap::new(),
        };
        let phi = [0.123456789012345678_f64];
        let hist = [9.87654321e4_f64];
        let u = [1e-7, -2e-7, 3.3e-5, 0.0, -1.25e-9, 4.0];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vals.vtk");
        write_vtk(&mesh, &u, &phi, &hist, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let phi_idx = lines.iter().position(|l| *l == "SCALARS phi double 1").unwrap() + 2;
        let parsed: f64 = lines[phi_idx].parse().unwrap();
        assert_eq!(parsed, phi[0]);
        let h_idx = lines
            .iter()
            .position(|l| *l == "SCALARS history double 1")
            .unwrap()
            + 2;
        let parsed: f64 = lines[h_idx].parse().unwrap();
        assert_eq!(parsed, hist[0]);
    }
}
