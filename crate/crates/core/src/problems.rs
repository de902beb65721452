//! Built-in benchmark problems: the notched tension and shear tests and the
//! multi-crack stretching specimen, on generated meshes.

use nalgebra::Point2;

use crate::constitutive::{make_moduli, BulkKind, BulkModel, DegradationFn};
use crate::driver::{FieldState, PhaseDiscretization, Schedule, Simulation};
use crate::fem::{BcValue, DirichletSet};
use crate::fvm::{self, PhaseFieldParams, Segment};
use crate::mesh::{build_topology, Mesh};
use crate::meshgen::{self, MeshGenError, TAG_BOTTOM, TAG_LEFT, TAG_RIGHT, TAG_TOP};
use crate::scenario::ScenarioError;

/// Steel-like parameters shared by all benchmarks: E = 210000 MPa, nu = 0.3,
/// Gc = 2.7 N/mm.
pub const YOUNGS: f64 = 210_000.0;
pub const POISSON: f64 = 0.3;
pub const TOUGHNESS: f64 = 2.7;
/// Regularization length of the notched tests (mm).
pub const NOTCHED_ELL: f64 = 0.0075;
/// Regularization length of the multi-crack test (mm).
pub const MULTICRACK_ELL: f64 = 0.025;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Tension,
    Shear,
    Multicrack,
}

/// A fully assembled benchmark: simulation, schedule and the initial state.
pub struct Problem {
    pub sim: Simulation,
    pub schedule: Schedule,
    pub state: FieldState,
    /// Realized fine mesh size.
    pub fine_h: f64,
}

fn build_sim(
    mesh: Mesh,
    model_kind: BulkKind,
    degradation: DegradationFn,
    ell: f64,
    bcs: &[(i32, u8, BcValue)],
    loaded_tag: i32,
    fe_fe: bool,
) -> Result<Simulation, ScenarioError> {
    let topo = build_topology(&mesh)?;
    let model = BulkModel::new(model_kind, make_moduli(YOUNGS, POISSON)?);
    let params = PhaseFieldParams::uniform(TOUGHNESS, ell, mesh.n_cells());
    let mut dirichlet = DirichletSet::default();
    for &(tag, comp, value) in bcs {
        dirichlet.constrain_tag(&mesh, &topo, tag, comp, value)?;
    }
    let discretization = if fe_fe {
        PhaseDiscretization::FiniteElement
    } else {
        PhaseDiscretization::FiniteVolume
    };
    Ok(Simulation::new(
        mesh,
        topo,
        model,
        degradation,
        params,
        dirichlet,
        loaded_tag,
        discretization,
        true,
    )?)
}

/// Mode-I tension of the notched square: bottom fully fixed, top held
/// horizontally and pulled vertically, isotropic bulk with quadratic
/// degradation. Increments 1e-4 mm up to 0.00525, then 1e-5 mm to 0.00575.
pub fn tension(lh: f64, fe_fe: bool) -> Result<Problem, ScenarioError> {
    let g = meshgen::tension_mesh(NOTCHED_ELL, lh).map_err(meshgen_err)?;
    let bcs = [
        (TAG_BOTTOM, 0, BcValue::Fixed(0.0)),
        (TAG_BOTTOM, 1, BcValue::Fixed(0.0)),
        (TAG_TOP, 0, BcValue::Fixed(0.0)),
        (TAG_TOP, 1, BcValue::Driven(1.0)),
    ];
    let sim = build_sim(
        g.mesh,
        BulkKind::Isotropic,
        DegradationFn::Quadratic,
        NOTCHED_ELL,
        &bcs,
        TAG_TOP,
        fe_fe,
    )?;
    let schedule = Schedule::from_segments(&[(0.00525, 1e-4), (0.00575, 1e-5)])?;
    let state = sim.pristine_state();
    Ok(Problem {
        sim,
        schedule,
        state,
        fine_h: g.fine_h,
    })
}

/// Shear of the same notched square: bottom fully fixed, top sheared
/// horizontally with its vertical motion blocked, left/right traction free.
/// Amor split so no crack grows under the compressive lobe. Increments 1e-4
/// up to 0.0092, then 1e-5 up to `final_ux` (the full run ends at 0.015).
pub fn shear(lh: f64, fe_fe: bool, final_ux: f64) -> Result<Problem, ScenarioError> {
    let g = meshgen::shear_mesh(NOTCHED_ELL, lh).map_err(meshgen_err)?;
    let bcs = [
        (TAG_BOTTOM, 0, BcValue::Fixed(0.0)),
        (TAG_BOTTOM, 1, BcValue::Fixed(0.0)),
        (TAG_TOP, 0, BcValue::Driven(1.0)),
        (TAG_TOP, 1, BcValue::Fixed(0.0)),
    ];
    let sim = build_sim(
        g.mesh,
        BulkKind::Amor,
        DegradationFn::Quadratic,
        NOTCHED_ELL,
        &bcs,
        TAG_TOP,
        fe_fe,
    )?;
    let schedule = Schedule::from_segments(&[(0.0092, 1e-4), (final_ux, 1e-5)])?;
    let state = sim.pristine_state();
    Ok(Problem {
        sim,
        schedule,
        state,
        fine_h: g.fine_h,
    })
}

/// Vertical preexisting cracks of the stretching specimen: all 0.08 mm long,
/// one intersecting the top boundary and one the bottom.
pub fn multicrack_segments() -> Vec<Segment> {
    let seg = |x: f64, y0: f64, y1: f64| Segment {
        a: Point2::new(x, y0),
        b: Point2::new(x, y1),
    };
    vec![
        seg(0.72, 0.00, 0.08),
        seg(0.45, 0.92, 1.00),
        seg(0.20, 0.18, 0.26),
        seg(0.55, 0.10, 0.18),
        seg(0.84, 0.24, 0.32),
        seg(0.12, 0.44, 0.52),
        seg(0.38, 0.40, 0.48),
        seg(0.64, 0.46, 0.54),
        seg(0.90, 0.55, 0.63),
        seg(0.26, 0.66, 0.74),
        seg(0.58, 0.72, 0.80),
    ]
}

/// Stretching of a uniformly meshed square with preexisting cracks seeded
/// through the history field: left edge fixed, right edge driven horizontally
/// with its vertical motion blocked. Amor split with the single-parameter
/// exponential degradation (n = 2; the calibration constant k is an input).
/// Increments 1e-4 to 0.0057, 1e-5 to 0.0069, then 1e-4 to 0.01.
pub fn multicrack(lh: f64, k: f64, retain_constraints: bool) -> Result<Problem, ScenarioError> {
    let h = MULTICRACK_ELL / lh;
    let mesh = meshgen::uniform_square(h).map_err(meshgen_err)?;
    let bcs = [
        (TAG_LEFT, 0, BcValue::Fixed(0.0)),
        (TAG_LEFT, 1, BcValue::Fixed(0.0)),
        (TAG_RIGHT, 0, BcValue::Driven(1.0)),
        (TAG_RIGHT, 1, BcValue::Fixed(0.0)),
    ];
    let mut sim = build_sim(
        mesh,
        BulkKind::Amor,
        DegradationFn::exponential(2.0, k)?,
        MULTICRACK_ELL,
        &bcs,
        TAG_RIGHT,
        false,
    )?;
    let mut state = sim.pristine_state();
    let segments = multicrack_segments();
    let init = fvm::init_history(
        &sim.mesh,
        &sim.topo,
        &sim.params,
        &sim.trans,
        &segments,
        &sim.degradation,
        retain_constraints,
    )?;
    state.phi = init.phi;
    state.history = init.history;
    if retain_constraints {
        sim.retain_crack_constraints(&init.constrained)?;
    }
    let schedule = Schedule::from_segments(&[(0.0057, 1e-4), (0.0069, 1e-5), (0.01, 1e-4)])?;
    let fine_h = h;
    Ok(Problem {
        sim,
        schedule,
        state,
        fine_h,
    })
}

fn meshgen_err(e: MeshGenError) -> ScenarioError {
    ScenarioError::Invalid {
        field: "mesh".into(),
        msg: e.to_string(),
    }
}

/// A scenario document equivalent to a benchmark run, for use with `run`
/// after saving the mesh with [`crate::mesh::write_msh`].
pub fn scenario_for(
    benchmark: Benchmark,
    mesh_path: std::path::PathBuf,
    fe_fe: bool,
    k: f64,
) -> crate::scenario::Scenario {
    use crate::scenario::*;
    let (ell, bulk, deg, bcs, schedule, cracks) = match benchmark {
        Benchmark::Tension => (
            NOTCHED_ELL,
            BulkModelSpec::Isotropic,
            DegradationSpec::Quadratic,
            vec![
                ("bottom", Component::X, BcValueSpec::Fixed(0.0)),
                ("bottom", Component::Y, BcValueSpec::Fixed(0.0)),
                ("top", Component::X, BcValueSpec::Fixed(0.0)),
                ("top", Component::Y, BcValueSpec::Keyword(DrivenKeyword::Driven)),
            ],
            vec![
                ScheduleSegment { to: 0.00525, step: 1e-4 },
                ScheduleSegment { to: 0.00575, step: 1e-5 },
            ],
            vec![],
        ),
        Benchmark::Shear => (
            NOTCHED_ELL,
            BulkModelSpec::Amor,
            DegradationSpec::Quadratic,
            vec![
                ("bottom", Component::X, BcValueSpec::Fixed(0.0)),
                ("bottom", Component::Y, BcValueSpec::Fixed(0.0)),
                ("top", Component::X, BcValueSpec::Keyword(DrivenKeyword::Driven)),
                ("top", Component::Y, BcValueSpec::Fixed(0.0)),
            ],
            vec![
                ScheduleSegment { to: 0.0092, step: 1e-4 },
                ScheduleSegment { to: 0.015, step: 1e-5 },
            ],
            vec![],
        ),
        Benchmark::Multicrack => (
            MULTICRACK_ELL,
            BulkModelSpec::Amor,
            DegradationSpec::Exponential { n: 2.0, k },
            vec![
                ("left", Component::X, BcValueSpec::Fixed(0.0)),
                ("left", Component::Y, BcValueSpec::Fixed(0.0)),
                ("right", Component::X, BcValueSpec::Keyword(DrivenKeyword::Driven)),
                ("right", Component::Y, BcValueSpec::Fixed(0.0)),
            ],
            vec![
                ScheduleSegment { to: 0.0057, step: 1e-4 },
                ScheduleSegment { to: 0.0069, step: 1e-5 },
                ScheduleSegment { to: 0.01, step: 1e-4 },
            ],
            multicrack_segments()
                .iter()
                .map(|s| CrackSpec {
                    from: [s.a.x, s.a.y],
                    to: [s.b.x, s.b.y],
                })
                .collect(),
        ),
    };
    Scenario {
        mesh: mesh_path,
        material: MaterialSpec {
            youngs_modulus: YOUNGS,
            poissons_ratio: POISSON,
            toughness: TOUGHNESS,
            length_scale: ell,
        },
        bulk_model: bulk,
        degradation: deg,
        irreversibility_threshold: 0.0,
        initial_cracks: cracks,
        crack_phi: 0.999,
        retain_crack_constraints: false,
        phase_field: if fe_fe { PhaseFieldSpec::Fe } else { PhaseFieldSpec::Fv },
        boundary_conditions: bcs
            .into_iter()
            .map(|(tag, component, value)| BcSpec {
                tag: tag.to_string(),
                component,
                value,
            })
            .collect(),
        load_schedule: schedule,
        solver: SolverSpec::default(),
        output: OutputSpec::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tension_problem_assembles() {
        let p = tension(1.0, false).unwrap();
        assert!(p.sim.mesh.n_cells() > 4000);
        assert_eq!(p.schedule.steps.len(), 53 + 50);
        assert!(p.state.phi.iter().all(|&v| v == 0.0));
        assert!((p.fine_h - NOTCHED_ELL).abs() / NOTCHED_ELL < 0.05);
    }

    #[test]
    fn shear_problem_assembles() {
        let p = shear(1.0, false, 0.015).unwrap();
        assert_eq!(p.schedule.steps.len(), 92 + 580);
        assert_eq!(
            p.sim.discretization(),
            crate::driver::PhaseDiscretization::FiniteVolume
        );
    }

    #[test]
    fn multicrack_problem_seeds_bands() {
        // Coarse resolution to stay fast; the seeding still has to mark the
        // eleven cracks and back-calculate a positive history there.
        let p = multicrack(2.0, 25.0, false).unwrap();
        let damaged = p.state.phi.iter().filter(|&&v| v > 0.9).count();
        assert!(damaged >= 11, "only {damaged} crack cells");
        let h_max = p.state.history.iter().cloned().fold(0.0, f64::max);
        assert!(h_max > 0.0);
    }

    #[test]
    fn benchmark_scenarios_serialize() {
        for b in [Benchmark::Tension, Benchmark::Shear, Benchmark::Multicrack] {
            let s = scenario_for(b, "mesh.msh".into(), false, 25.0);
            let text = serde_json::to_string(&s).unwrap();
            let back: crate::scenario::Scenario = serde_json::from_str(&text).unwrap();
            assert_eq!(s, back);
        }
    }
}
