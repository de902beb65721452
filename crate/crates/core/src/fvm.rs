//! Cell-centered TPFA finite volume kernel for the phase-field equation.
//!
//! The flux across an interior edge is the transmissibility times the jump of
//! the cell-center values; boundary edges carry no flux (homogeneous natural
//! condition). Preexisting cracks are seeded by a two-step initialization
//! that first solves for the phase field with crack cells constrained and
//! then back-calculates the history field cell by cell.

use nalgebra::Point2;
use thiserror::Error;

use crate::constitutive::{ConstitutiveError, DegradationFn};
use crate::mesh::{Mesh, Topology};
use crate::sparse::{SparseError, SparseSym};

#[derive(Debug, Error)]
pub enum FvmError {
    #[error("phase-field parameters must be positive (cell {0})")]
    NonPositiveParams(usize),
    #[error("interior edge {0} has a non-positive center distance")]
    BadEdgeGeometry(usize),
    #[error("crack segment {0} does not intersect any cell")]
    CrackOutsideMesh(usize),
    #[error("crack constraint value must lie strictly inside (0, 1), got {0}")]
    BadConstraintValue(f64),
    #[error(transparent)]
    Constitutive(#[from] ConstitutiveError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Per-cell phase-field parameters and the irreversibility/crack settings.
#[derive(Debug, Clone)]
pub struct PhaseFieldParams {
    /// Critical energy release rate per cell (N/mm).
    pub gc: Vec<f64>,
    /// Regularization length per cell (mm).
    pub ell: Vec<f64>,
    /// Irreversibility threshold; 0 recovers the monotone history field.
    pub phi_c: f64,
    /// Constraint value for preexisting cracks (strictly below 1).
    pub phi_init: f64,
}

impl PhaseFieldParams {
    pub fn uniform(gc: f64, ell: f64, n_cells: usize) -> Self {
        PhaseFieldParams {
            gc: vec![gc; n_cells],
            ell: vec![ell; n_cells],
            phi_c: 0.0,
            phi_init: 0.999,
        }
    }

    fn validate(&self) -> Result<(), FvmError> {
        for k in 0..self.gc.len() {
            if !(self.gc[k] > 0.0 && self.ell[k] > 0.0) {
                return Err(FvmError::NonPositiveParams(k));
            }
        }
        Ok(())
    }
}

/// Edge transmissibilities, one scalar per interior edge in topology order.
#[derive(Debug, Clone)]
pub struct Transmissibilities {
    pub edge_m: Vec<f64>,
}

/// M = L / (d_K / (Gc_K ell_K) + d_K' / (Gc_K' ell_K')), the harmonic
/// combination of Gc*ell over the center-to-midpoint distances.
pub fn compute_transmissibilities(
    topo: &Topology,
    params: &PhaseFieldParams,
) -> Result<Transmissibilities, FvmError> {
    params.validate()?;
    let mut edge_m = Vec::with_capacity(topo.interior_edges.len());
    for (i, e) in topo.interior_edges.iter().enumerate() {
        if e.dist[0] <= 0.0 || e.dist[1] <= 0.0 {
            return Err(FvmError::BadEdgeGeometry(i));
        }
        let [k0, k1] = e.cells;
        let m = e.length
            / (e.dist[0] / (params.gc[k0] * params.ell[k0])
                + e.dist[1] / (params.gc[k1] * params.ell[k1]));
        edge_m.push(m);
    }
    Ok(Transmissibilities { edge_m })
}

/// r_K = A_K [g'(phi_K) H_K + (Gc_K/ell_K) phi_K] + sum_i M_K^i (phi_K - phi_K^i),
/// the flux sum running over the interior edges of K only.
pub fn cell_residual(
    cell: usize,
    phi: &[f64],
    history: f64,
    params: &PhaseFieldParams,
    topo: &Topology,
    trans: &Transmissibilities,
    degradation: &DegradationFn,
) -> Result<f64, FvmError> {
    let (_, gp, _) = degradation.eval(phi[cell].clamp(0.0, 1.0))?;
    let a = topo.cell_area[cell];
    let mut r = a * (gp * history + params.gc[cell] / params.ell[cell] * phi[cell]);
    for &(edge, neighbor) in &topo.cell_neighbors[cell] {
        r += trans.edge_m[edge] * (phi[cell] - phi[neighbor]);
    }
    Ok(r)
}

/// Diagonal and per-neighbor off-diagonal entries of the phase-field Jacobian
/// row for one cell.
pub fn jacobian_row(
    cell: usize,
    phi_cell: f64,
    history: f64,
    params: &PhaseFieldParams,
    topo: &Topology,
    trans: &Transmissibilities,
    degradation: &DegradationFn,
) -> Result<(f64, Vec<(usize, f64)>), FvmError> {
    let (_, _, gpp) = degradation.eval(phi_cell.clamp(0.0, 1.0))?;
    let a = topo.cell_area[cell];
    let mut diag = a * (gpp * history + params.gc[cell] / params.ell[cell]);
    let mut off = Vec::with_capacity(topo.cell_neighbors[cell].len());
    for &(edge, neighbor) in &topo.cell_neighbors[cell] {
        diag += trans.edge_m[edge];
        off.push((neighbor, -trans.edge_m[edge]));
    }
    Ok((diag, off))
}

/// Global TPFA phase-field system with its frozen pattern (diagonal plus one
/// entry per interior edge). Cells carrying a retained crack constraint are
/// eliminated from the solved system; their fixed values enter through the
/// residual fluxes.
pub struct FvPhaseSystem {
    pub matrix: SparseSym,
    reduced: Vec<Option<usize>>,
    n_red: usize,
}

impl FvPhaseSystem {
    pub fn new(topo: &Topology) -> Result<Self, FvmError> {
        Self::with_constraints(topo, &[])
    }

    pub fn with_constraints(topo: &Topology, constrained: &[usize]) -> Result<Self, FvmError> {
        let n = topo.cell_area.len();
        let mut fixed = vec![false; n];
        for &c in constrained {
            fixed[c] = true;
        }
        let mut reduced = vec![None; n];
        let mut n_red = 0;
        for (k, slot) in reduced.iter_mut().enumerate() {
            if !fixed[k] {
                *slot = Some(n_red);
                n_red += 1;
            }
        }
        let cliques: Vec<Vec<usize>> = topo
            .interior_edges
            .iter()
            .filter_map(|e| match (reduced[e.cells[0]], reduced[e.cells[1]]) {
                (Some(a), Some(b)) => Some(vec![a, b]),
                _ => None,
            })
            .collect();
        let matrix = SparseSym::build_pattern(n_red, cliques)?;
        Ok(FvPhaseSystem {
            matrix,
            reduced,
            n_red,
        })
    }

    pub fn n_dof(&self) -> usize {
        self.n_red
    }

    /// Assembles the Jacobian into the matrix and returns the residual over
    /// the unconstrained cells; `phi` stays full-length.
    pub fn assemble(
        &mut self,
        phi: &[f64],
        history: &[f64],
        params: &PhaseFieldParams,
        topo: &Topology,
        trans: &Transmissibilities,
        degradation: &DegradationFn,
    ) -> Result<Vec<f64>, FvmError> {
        self.matrix.zero_values();
        let mut r = vec![0.0; self.n_red];
        for k in 0..phi.len() {
            if let Some(rk) = self.reduced[k] {
                r[rk] = cell_residual(k, phi, history[k], params, topo, trans, degradation)?;
                let (_, _, gpp) = degradation.eval(phi[k].clamp(0.0, 1.0))?;
                let a = topo.cell_area[k];
                self.matrix
                    .add(rk, rk, a * (gpp * history[k] + params.gc[k] / params.ell[k]));
            }
        }
        for (i, e) in topo.interior_edges.iter().enumerate() {
            let m = trans.edge_m[i];
            match (self.reduced[e.cells[0]], self.reduced[e.cells[1]]) {
                (Some(a), Some(b)) => {
                    self.matrix.add(a, a, m);
                    self.matrix.add(b, b, m);
                    self.matrix.add(a, b, -m);
                }
                (Some(a), None) => self.matrix.add(a, a, m),
                (None, Some(b)) => self.matrix.add(b, b, m),
                (None, None) => {}
            }
        }
        Ok(r)
    }

    /// Adds the reduced correction into the full phase field.
    pub fn apply_correction(&self, phi: &mut [f64], dx: &[f64]) {
        for (k, slot) in self.reduced.iter().enumerate() {
            if let Some(rk) = *slot {
                phi[k] += dx[rk];
            }
        }
    }

    pub fn is_constrained(&self, cell: usize) -> bool {
        self.reduced[cell].is_none()
    }
}

/// 2D line segment, used for preexisting crack geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point2<f64>,
    pub b: Point2<f64>,
}

const GEOM_TOL: f64 = 1e-12;

fn cross(o: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn point_in_triangle(p: &Point2<f64>, t: &[Point2<f64>; 3], scale: f64) -> bool {
    // Closed triangle with a small tolerance; cells are CCW.
    let tol = GEOM_TOL * scale * scale;
    cross(&t[0], &t[1], p) >= -tol && cross(&t[1], &t[2], p) >= -tol && cross(&t[2], &t[0], p) >= -tol
}

fn segments_intersect(
    p1: &Point2<f64>,
    p2: &Point2<f64>,
    q1: &Point2<f64>,
    q2: &Point2<f64>,
    scale: f64,
) -> bool {
    let tol = GEOM_TOL * scale * scale;
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > tol && d2 < -tol) || (d1 < -tol && d2 > tol))
        && ((d3 > tol && d4 < -tol) || (d3 < -tol && d4 > tol))
    {
        return true;
    }
    let on = |d: f64, a: &Point2<f64>, b: &Point2<f64>, p: &Point2<f64>| -> bool {
        d.abs() <= tol
            && p.x >= a.x.min(b.x) - GEOM_TOL * scale
            && p.x <= a.x.max(b.x) + GEOM_TOL * scale
            && p.y >= a.y.min(b.y) - GEOM_TOL * scale
            && p.y <= a.y.max(b.y) + GEOM_TOL * scale
    };
    on(d1, q1, q2, p1) || on(d2, q1, q2, p2) || on(d3, p1, p2, q1) || on(d4, p1, p2, q2)
}

/// A cell is marked when the crack segment touches its closed triangle.
pub fn segment_intersects_cell(mesh: &Mesh, cell: usize, seg: &Segment) -> bool {
    let t = mesh.cell_coords(cell);
    let scale = t
        .iter()
        .flat_map(|p| [p.x.abs(), p.y.abs()])
        .fold(1.0_f64, f64::max);
    if point_in_triangle(&seg.a, &t, scale) || point_in_triangle(&seg.b, &t, scale) {
        return true;
    }
    for e in 0..3 {
        if segments_intersect(&seg.a, &seg.b, &t[e], &t[(e + 1) % 3], scale) {
            return true;
        }
    }
    false
}

/// Result of the two-step crack seeding.
#[derive(Debug, Clone)]
pub struct HistoryInit {
    pub phi: Vec<f64>,
    pub history: Vec<f64>,
    /// Cells that were constrained in step (a).
    pub constrained: Vec<usize>,
}

/// Initializes the phase and history fields for preexisting cracks.
///
/// Step (a) constrains phi on every cell a crack segment touches and solves
/// the homogeneous phase-field system for the rest. Step (b) releases the
/// constraints and back-calculates the history field on the previously
/// constrained cells; everywhere else the residual already vanishes, so the
/// history is zero. With `retain_constraints` step (b) is skipped and the
/// caller must keep the constraints active for the whole run.
pub fn init_history(
    mesh: &Mesh,
    topo: &Topology,
    params: &PhaseFieldParams,
    trans: &Transmissibilities,
    cracks: &[Segment],
    degradation: &DegradationFn,
    retain_constraints: bool,
) -> Result<HistoryInit, FvmError> {
    let n = mesh.n_cells();
    if cracks.is_empty() {
        return Ok(HistoryInit {
            phi: vec![0.0; n],
            history: vec![0.0; n],
            constrained: Vec::new(),
        });
    }
    if !(params.phi_init > 0.0 && params.phi_init < 1.0) {
        return Err(FvmError::BadConstraintValue(params.phi_init));
    }

    let mut marked = vec![false; n];
    for (i, seg) in cracks.iter().enumerate() {
        let mut hit = false;
        for k in 0..n {
            if segment_intersects_cell(mesh, k, seg) {
                marked[k] = true;
                hit = true;
            }
        }
        if !hit {
            return Err(FvmError::CrackOutsideMesh(i));
        }
    }

    // Reduced system over unconstrained cells; constrained values enter the
    // right-hand side through the edge fluxes. No history term: homogeneous
    // right-hand side apart from the constraints.
    let reduced: Vec<Option<usize>> = {
        let mut map = vec![None; n];
        let mut next = 0;
        for (k, slot) in map.iter_mut().enumerate() {
            if !marked[k] {
                *slot = Some(next);
                next += 1;
            }
        }
        map
    };
    let n_red = reduced.iter().flatten().count();
    let cliques: Vec<Vec<usize>> = topo
        .interior_edges
        .iter()
        .filter_map(|e| {
            match (reduced[e.cells[0]], reduced[e.cells[1]]) {
                (Some(a), Some(b)) => Some(vec![a, b]),
                _ => None,
            }
        })
        .collect();
    let mut mat = SparseSym::build_pattern(n_red, cliques)?;
    let mut rhs = vec![0.0; n_red];
    for k in 0..n {
        if let Some(rk) = reduced[k] {
            mat.add(rk, rk, topo.cell_area[k] * params.gc[k] / params.ell[k]);
        }
    }
    for (i, e) in topo.interior_edges.iter().enumerate() {
        let m = trans.edge_m[i];
        let [k0, k1] = e.cells;
        match (reduced[k0], reduced[k1]) {
            (Some(a), Some(b)) => {
                mat.add(a, a, m);
                mat.add(b, b, m);
                mat.add(a, b, -m);
            }
            (Some(a), None) => {
                mat.add(a, a, m);
                rhs[a] += m * params.phi_init;
            }
            (None, Some(b)) => {
                mat.add(b, b, m);
                rhs[b] += m * params.phi_init;
            }
            (None, None) => {}
        }
    }
    let x = crate::sparse::DirectSolver::new().solve(&mat, &rhs)?;
    let mut phi = vec![0.0; n];
    for k in 0..n {
        phi[k] = match reduced[k] {
            Some(rk) => x[rk],
            None => params.phi_init,
        };
    }

    let constrained: Vec<usize> = (0..n).filter(|&k| marked[k]).collect();
    let mut history = vec![0.0; n];
    if !retain_constraints {
        for &k in &constrained {
            let (_, gp, _) = degradation.eval(params.phi_init)?;
            let mut flux = 0.0;
            for &(edge, neighbor) in &topo.cell_neighbors[k] {
                flux += trans.edge_m[edge] * (phi[k] - phi[neighbor]);
            }
            history[k] = -1.0 / gp
                * (flux / topo.cell_area[k] + params.gc[k] / params.ell[k] * phi[k]);
        }
    }
    Ok(HistoryInit {
        phi,
        history,
        constrained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_topology, Mesh};
    use approx::assert_relative_eq;
    use nalgebra::Point2;
    use std::collections::BTreeMap;

    /// Degenerate 1D mode of the kernel: a chain of cells with unit cross
    /// section, realized as a synthetic topology.
    fn chain_topology(n: usize, h: f64) -> Topology {
        let mut topo = Topology {
            cell_area: vec![h; n],
            cell_centroid: (0..n)
                .map(|i| Point2::new((i as f64 + 0.5) * h, 0.0))
                .collect(),
            interior_edges: Vec::new(),
            boundary_faces: Vec::new(),
            cell_neighbors: vec![Vec::new(); n],
            total_area: h * n as f64,
        };
        for i in 0..n - 1 {
            let idx = topo.interior_edges.len();
            topo.interior_edges.push(crate::mesh::InteriorEdge {
                cells: [i, i + 1],
                local: [0, 0],
                nodes: [i, i + 1],
                length: 1.0,
                midpoint: Point2::new((i as f64 + 1.0) * h, 0.0),
                dist: [h / 2.0, h / 2.0],
            });
            topo.cell_neighbors[i].push((idx, i + 1));
            topo.cell_neighbors[i + 1].push((idx, i));
        }
        topo
    }

    #[test]
    fn chain_transmissibility_is_gc_ell_over_h() {
        let (gc, ell, h) = (2.7, 0.25, 0.1);
        let topo = chain_topology(5, h);
        let params = PhaseFieldParams::uniform(gc, ell, 5);
        let t = compute_transmissibilities(&topo, &params).unwrap();
        for m in &t.edge_m {
            assert_relative_eq!(*m, gc * ell / h, max_relative = 1e-14);
        }
    }

    #[test]
    fn equilateral_pair_transmissibility() {
        let l = 1.3;
        let h = l * 3.0_f64.sqrt() / 2.0;
        let mesh = Mesh {
            nodes: vec![
                Point2::new(0.0, 0.0),
                Point2::new(l, 0.0),
                Point2::new(l / 2.0, h),
                Point2::new(l * 1.5, h),
            ],
            cells: vec![[0, 1, 2], [1, 3, 2]],
            boundary_edges: vec![],
            physical_names: BTreeMap::new(),
        };
        let topo = build_topology(&mesh).unwrap();
        let (gc, ell) = (2.0, 0.5);
        let params = PhaseFieldParams::uniform(gc, ell, 2);
        let t = compute_transmissibilities(&topo, &params).unwrap();
        // d = L/(2 sqrt(3)) on both sides gives M = sqrt(3) Gc ell.
        assert_relative_eq!(t.edge_m[0], 3.0_f64.sqrt() * gc * ell, max_relative = 1e-13);
    }

    #[test]
    fn heterogeneous_edge_is_harmonic_combination() {
        let topo = chain_topology(2, 0.2);
        let mut params = PhaseFieldParams::uniform(1.0, 1.0, 2);
        params.gc = vec![3.0, 5.0];
        params.ell = vec![0.1, 0.7];
        let t = compute_transmissibilities(&topo, &params).unwrap();
        let (a, b) = (3.0 * 0.1, 5.0 * 0.7);
        let d = 0.1;
        let expect = 1.0 / (d / a + d / b);
        assert_relative_eq!(t.edge_m[0], expect, max_relative = 1e-14);
    }

    #[test]
    fn residual_zero_for_pristine_field() {
        let topo = chain_topology(7, 0.3);
        let params = PhaseFieldParams::uniform(1.5, 0.4, 7);
        let t = compute_transmissibilities(&topo, &params).unwrap();
        let phi = vec![0.0; 7];
        for k in 0..7 {
            let r = cell_residual(k, &phi, 0.0, &params, &topo, &t, &DegradationFn::Quadratic)
                .unwrap();
            assert_relative_eq!(r, 0.0);
        }
    }

    #[test]
    fn uniform_field_kills_fluxes() {
        let topo = chain_topology(5, 0.25);
        let params = PhaseFieldParams::uniform(2.0, 0.5, 5);
        let t = compute_transmissibilities(&topo, &params).unwrap();
        let c = 0.37;
        let phi = vec![c; 5];
        // Interior cell, H = 0: residual reduces to the reaction term.
        let r = cell_residual(2, &phi, 0.0, &params, &topo, &t, &DegradationFn::Quadratic)
            .unwrap();
        assert_relative_eq!(r, 0.25 * (2.0 / 0.5) * c, max_relative = 1e-14);
    }

    #[test]
    fn broken_cell_residual_by_direct_substitution() {
        let topo = chain_topology(3, 0.5);
        let params = PhaseFieldParams::uniform(2.0, 0.25, 3);
        let t = compute_transmissibilities(&topo, &params).unwrap();
        let phi = vec![0.0, 1.0, 0.0];
        let h_k = 11.0; // arbitrary; g'(1) = 0 kills the driving term
        let r = cell_residual(1, &phi, h_k, &params, &topo, &t, &DegradationFn::Quadratic)
            .unwrap();
        let a = 0.5;
        let m = 2.0 * 0.25 / 0.5;
        assert_relative_eq!(r, a * (2.0 / 0.25) + 2.0 * m, max_relative = 1e-14);
    }

    #[test]
    fn isolated_cell_jacobian_diagonal() {
        let topo = chain_topology(1, 0.5);
        let params = PhaseFieldParams::uniform(3.0, 0.2, 1);
        let t = Transmissibilities { edge_m: vec![] };
        let (diag, off) =
            jacobian_row(0, 0.4, 0.0, &params, &topo, &t, &DegradationFn::Quadratic).unwrap();
        assert!(off.is_empty());
        assert_relative_eq!(diag, 0.5 * 3.0 / 0.2, max_relative = 1e-14);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let topo = chain_topology(6, 0.2);
        let params = PhaseFieldParams::uniform(1.7, 0.3, 6);
        let t = compute_transmissibilities(&topo, &params).unwrap();
        for deg in [
            DegradationFn::Quadratic,
            DegradationFn::exponential(2.0, 8.0).unwrap(),
        ] {
            let phi: Vec<f64> = (0..6).map(|i| 0.1 + 0.12 * i as f64).collect();
            let hist: Vec<f64> = (0..6).map(|i| 0.5 + 0.3 * i as f64).collect();
            let fd = 1e-7;
            for k in 0..6 {
                let (diag, off) =
                    jacobian_row(k, phi[k], hist[k], &params, &topo, &t, &deg).unwrap();
                // Diagonal.
                let mut pp = phi.clone();
                let mut pm = phi.clone();
                pp[k] += fd;
                pm[k] -= fd;
                let rp = cell_residual(k, &pp, hist[k], &params, &topo, &t, &deg).unwrap();
                let rm = cell_residual(k, &pm, hist[k], &params, &topo, &t, &deg).unwrap();
                let d_fd = (rp - rm) / (2.0 * fd);
                assert_relative_eq!(diag, d_fd, max_relative = 1e-8, epsilon = 1e-8);
                // Off-diagonals.
                for (nb, val) in off {
                    let mut pp = phi.clone();
                    let mut pm = phi.clone();
                    pp[nb] += fd;
                    pm[nb] -= fd;
                    let rp = cell_residual(k, &pp, hist[k], &params, &topo, &t, &deg).unwrap();
                    let rm = cell_residual(k, &pm, hist[k], &params, &topo, &t, &deg).unwrap();
                    let o_fd = (rp - rm) / (2.0 * fd);
                    assert_relative_eq!(val, o_fd, max_relative = 1e-8, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn flux_terms_cancel_in_residual_sum() {
        let topo = chain_topology(9, 0.15);
        let params = PhaseFieldParams::uniform(2.2, 0.4, 9);
        let t = compute_transmissibilities(&topo, &params).unwrap();
        let deg = DegradationFn::Quadratic;
        let phi: Vec<f64> = (0..9).map(|i| (0.13 * i as f64).sin().abs() * 0.8).collect();
        let hist: Vec<f64> = (0..9).map(|i| 0.7 * i as f64).collect();
        let mut total = 0.0;
        let mut bulk_only = 0.0;
        for k in 0..9 {
            total += cell_residual(k, &phi, hist[k], &params, &topo, &t, &deg).unwrap();
            let (_, gp, _) = deg.eval(phi[k]).unwrap();
            bulk_only += topo.cell_area[k] * (gp * hist[k] + params.gc[k] / params.ell[k] * phi[k]);
        }
        assert_relative_eq!(total, bulk_only, max_relative = 1e-13);
    }

    #[test]
    fn no_cracks_gives_zero_fields() {
        let mesh = two_cell_square();
        let topo = build_topology(&mesh).unwrap();
        let params = PhaseFieldParams::uniform(1.0, 0.5, 2);
        let trans = compute_transmissibilities(&topo, &params).unwrap();
        let init = init_history(
            &mesh,
            &topo,
            &params,
            &trans,
            &[],
            &DegradationFn::Quadratic,
            false,
        )
        .unwrap();
        assert!(init.phi.iter().all(|&v| v == 0.0));
        assert!(init.history.iter().all(|&v| v == 0.0));
    }

    fn two_cell_square() -> Mesh {
        Mesh {
            nodes: vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
            cells: vec![[0, 1, 2], [0, 2, 3]],
            boundary_edges: vec![],
            physical_names: BTreeMap::new(),
        }
    }

    #[test]
    fn crack_outside_mesh_rejected() {
        let mesh = two_cell_square();
        let topo = build_topology(&mesh).unwrap();
        let params = PhaseFieldParams::uniform(1.0, 0.5, 2);
        let trans = compute_transmissibilities(&topo, &params).unwrap();
        let seg = Segment {
            a: Point2::new(5.0, 5.0),
            b: Point2::new(6.0, 5.0),
        };
        match init_history(
            &mesh,
            &topo,
            &params,
            &trans,
            &[seg],
            &DegradationFn::Quadratic,
            false,
        ) {
            Err(FvmError::CrackOutsideMesh(0)) => {}
            other => panic!("expected crack outside mesh, got {other:?}"),
        }
    }

    #[test]
    fn unit_constraint_value_rejected() {
        let mesh = two_cell_square();
        let topo = build_topology(&mesh).unwrap();
        let mut params = PhaseFieldParams::uniform(1.0, 0.5, 2);
        params.phi_init = 1.0;
        let trans = compute_transmissibilities(&topo, &params).unwrap();
        let seg = Segment {
            a: Point2::new(0.4, 0.4),
            b: Point2::new(0.6, 0.6),
        };
        match init_history(
            &mesh,
            &topo,
            &params,
            &trans,
            &[seg],
            &DegradationFn::Quadratic,
            false,
        ) {
            Err(FvmError::BadConstraintValue(_)) => {}
            other => panic!("expected bad constraint value, got {other:?}"),
        }
    }

    #[test]
    fn chain_profile_matches_tridiagonal_elimination() {
        // Middle cell of a 1D chain constrained; compare against a direct
        // elimination of the reduced tridiagonal system.
        let n = 21;
        let h = 20.0 / n as f64;
        let topo = chain_topology(n, h);
        let params = PhaseFieldParams::uniform(1.0, 1.0, n);
        let trans = compute_transmissibilities(&topo, &params).unwrap();
        let mid = n / 2;
        let m = 1.0 / h;
        let diag_c = h + m; // end cells: one flux
        let diag_i = h + 2.0 * m;

        // Direct elimination oracle on the left half [0, mid): unknowns
        // phi_0..phi_{mid-1}, with phi_mid = phi_init known.
        let phi_init = 0.999;
        let mut sub = vec![0.0; mid];
        let mut diag = vec![0.0; mid];
        let mut rhs = vec![0.0; mid];
        for i in 0..mid {
            diag[i] = if i == 0 { diag_c } else { diag_i };
            sub[i] = -m;
            rhs[i] = if i == mid - 1 { m * phi_init } else { 0.0 };
        }
        for i in 1..mid {
            let f = sub[i] / diag[i - 1];
            diag[i] -= f * -m;
            rhs[i] -= f * rhs[i - 1];
        }
        let mut oracle = vec![0.0; mid];
        oracle[mid - 1] = rhs[mid - 1] / diag[mid - 1];
        for i in (0..mid - 1).rev() {
            oracle[i] = (rhs[i] + m * oracle[i + 1]) / diag[i];
        }

        // The kernel under test, driven through a fake single-cell "mesh"
        // marking: reuse init_history machinery by marking the middle cell
        // manually via the reduced solve in a real square mesh is exercised
        // elsewhere; here assemble the constrained chain directly.
        let reduced: Vec<Option<usize>> = (0..n)
            .map(|k| if k == mid { None } else { Some(if k < mid { k } else { k - 1 }) })
            .collect();
        let n_red = n - 1;
        let cliques: Vec<Vec<usize>> = topo
            .interior_edges
            .iter()
            .filter_map(|e| match (reduced[e.cells[0]], reduced[e.cells[1]]) {
                (Some(a), Some(b)) => Some(vec![a, b]),
                _ => None,
            })
            .collect();
        let mut mat = SparseSym::build_pattern(n_red, cliques).unwrap();
        let mut rhs2 = vec![0.0; n_red];
        for k in 0..n {
            if let Some(rk) = reduced[k] {
                mat.add(rk, rk, topo.cell_area[k] * params.gc[k] / params.ell[k]);
            }
        }
        for (i, e) in topo.interior_edges.iter().enumerate() {
            let mv = trans.edge_m[i];
            match (reduced[e.cells[0]], reduced[e.cells[1]]) {
                (Some(a), Some(b)) => {
                    mat.add(a, a, mv);
                    mat.add(b, b, mv);
                    mat.add(a, b, -mv);
                }
                (Some(a), None) => {
                    mat.add(a, a, mv);
                    rhs2[a] += mv * phi_init;
                }
                (None, Some(b)) => {
                    mat.add(b, b, mv);
                    rhs2[b] += mv * phi_init;
                }
                (None, None) => {}
            }
        }
        let x = crate::sparse::DirectSolver::new().solve(&mat, &rhs2).unwrap();
        for i in 0..mid {
            assert_relative_eq!(x[i], oracle[i], max_relative = 1e-11, epsilon = 1e-13);
        }
        // Decay away from the crack, peak adjacent to the constrained cell.
        assert!(x[mid - 1] > x[mid - 2]);
        assert!(x[0] < x[mid - 1]);
    }

    #[test]
    fn history_fixed_point_on_a_small_mesh() {
        // After seeding, the unconstrained nonlinear system must have the
        // seeded phi as an exact root: one Newton pass changes nothing.
        let mesh = crate::meshgen::uniform_square(0.125).unwrap();
        let topo = build_topology(&mesh).unwrap();
        let n = mesh.n_cells();
        let params = PhaseFieldParams::uniform(1.3, 0.25, n);
        let trans = compute_transmissibilities(&topo, &params).unwrap();
        for deg in [
            DegradationFn::Quadratic,
            DegradationFn::exponential(2.0, 10.0).unwrap(),
        ] {
            let cracks = [
                Segment {
                    a: Point2::new(0.3, 0.5),
                    b: Point2::new(0.7, 0.5),
                },
                Segment {
                    a: Point2::new(0.5, 0.2),
                    b: Point2::new(0.5, 0.45),
                },
            ];
            let init =
                init_history(&mesh, &topo, &params, &trans, &cracks, &deg, false).unwrap();
            assert!(!init.constrained.is_empty());
            for &k in &init.constrained {
                assert!(init.history[k] > 0.0);
                assert_relative_eq!(init.phi[k], params.phi_init);
            }
            let mut sys = FvPhaseSystem::new(&topo).unwrap();
            let r = sys
                .assemble(&init.phi, &init.history, &params, &topo, &trans, &deg)
                .unwrap();
            let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(rnorm < 1e-9, "seeded state residual {rnorm}");
        }
    }
}
