//! P1 finite element kernel for the linear momentum equation, plus the
//! equal-order P1 phase-field assembly used by comparison runs.
//!
//! The damaged stress is constant per element and integrated with a single
//! Gauss point at the centroid. Dirichlet constraints are eliminated from the
//! solved system; the full displacement vector keeps the prescribed values so
//! reactions can be read back from the internal forces.

use nalgebra::{Matrix4, Point2, SMatrix, Vector2, Vector4};
use thiserror::Error;

use crate::constitutive::{eval_stress, BulkModel, ConstitutiveError, DegradationFn, StressEval};
use crate::mesh::{Mesh, Topology};
use crate::sparse::{SparseError, SparseSym};

#[derive(Debug, Error)]
pub enum FemError {
    #[error("cell {0} is degenerate")]
    DegenerateCell(usize),
    #[error("conflicting dirichlet values for node {node} component {comp}")]
    ConflictingBc { node: usize, comp: u8 },
    #[error(transparent)]
    Constitutive(#[from] ConstitutiveError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Strain-displacement data of one element: constant shape gradients and the
/// per-node 4x2 B matrices in Voigt order (eps_xx, eps_yy, eps_zz, gamma_xy);
/// the third row is identically zero under plane strain.
#[derive(Debug, Clone)]
pub struct ElementKernel {
    pub cell: usize,
    pub area: f64,
    pub coords: [Point2<f64>; 3],
    pub grad: [Vector2<f64>; 3],
    pub b: [SMatrix<f64, 4, 2>; 3],
}

/// Builds the constant P1 shape gradients and B matrices for one cell.
pub fn shape_gradients(cell: usize, coords: [Point2<f64>; 3]) -> Result<ElementKernel, FemError> {
    let [a, b, c] = coords;
    let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    if det <= 0.0 {
        return Err(FemError::DegenerateCell(cell));
    }
    let inv = 1.0 / det;
    let grad = [
        Vector2::new((b.y - c.y) * inv, (c.x - b.x) * inv),
        Vector2::new((c.y - a.y) * inv, (a.x - c.x) * inv),
        Vector2::new((a.y - b.y) * inv, (b.x - a.x) * inv),
    ];
    let mut bm = [SMatrix::<f64, 4, 2>::zeros(); 3];
    for i in 0..3 {
        bm[i][(0, 0)] = grad[i].x;
        bm[i][(1, 1)] = grad[i].y;
        bm[i][(3, 0)] = grad[i].y;
        bm[i][(3, 1)] = grad[i].x;
    }
    Ok(ElementKernel {
        cell,
        area: 0.5 * det,
        coords,
        grad,
        b: bm,
    })
}

impl ElementKernel {
    /// Constant strain from the element displacement (3 nodes x 2 components).
    pub fn strain(&self, u: &[Vector2<f64>; 3]) -> Vector4<f64> {
        let mut eps = Vector4::zeros();
        for i in 0..3 {
            eps += self.b[i] * u[i];
        }
        eps
    }
}

/// Element residual contributions r_I = A B_I^T sigma - A N_I^T b - traction
/// integrals. Tractions are constant per edge and integrated exactly over the
/// two edge nodes.
pub fn element_residual(
    kernel: &ElementKernel,
    sigma: &Vector4<f64>,
    body: &Vector2<f64>,
    tractions: &[(u8, Vector2<f64>)],
) -> [Vector2<f64>; 3] {
    let mut r = [Vector2::zeros(); 3];
    for i in 0..3 {
        r[i] = kernel.area * (kernel.b[i].transpose() * sigma) - kernel.area / 3.0 * body;
    }
    for &(edge, t) in tractions {
        let (i, j) = (edge as usize, (edge as usize + 1) % 3);
        let len = (kernel.coords[j] - kernel.coords[i]).norm();
        r[i] -= 0.5 * len * t;
        r[j] -= 0.5 * len * t;
    }
    r
}

/// Element stiffness K_IJ = A B_I^T C B_J. Symmetric for both bulk models
/// because the third row of B is zero.
pub fn element_stiffness(kernel: &ElementKernel, tangent: &Matrix4<f64>) -> SMatrix<f64, 6, 6> {
    let mut k = SMatrix::<f64, 6, 6>::zeros();
    for i in 0..3 {
        let bti = kernel.b[i].transpose() * tangent;
        for j in 0..3 {
            let block = kernel.area * (bti * kernel.b[j]);
            for a in 0..2 {
                for b in 0..2 {
                    k[(2 * i + a, 2 * j + b)] = block[(a, b)];
                }
            }
        }
    }
    k
}

/// One prescribed displacement component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BcValue {
    Fixed(f64),
    /// Scales the current load factor (usually 1.0).
    Driven(f64),
}

impl BcValue {
    pub fn at(&self, load: f64) -> f64 {
        match *self {
            BcValue::Fixed(v) => v,
            BcValue::Driven(s) => s * load,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DirichletEntry {
    pub node: usize,
    pub comp: u8,
    pub value: BcValue,
}

/// Dirichlet constraints grouped per boundary tag for reaction reporting.
#[derive(Debug, Clone, Default)]
pub struct DirichletSet {
    pub entries: Vec<DirichletEntry>,
    pub tags: Vec<(i32, Vec<usize>)>,
}

impl DirichletSet {
    /// Adds all nodes on boundary faces carrying `tag`. Duplicate
    /// (node, component) pairs with the same value are kept once; conflicting
    /// values are an error.
    pub fn constrain_tag(
        &mut self,
        mesh: &Mesh,
        topo: &Topology,
        tag: i32,
        comp: u8,
        value: BcValue,
    ) -> Result<(), FemError> {
        let mut nodes: Vec<usize> = topo
            .boundary_faces
            .iter()
            .filter(|f| f.tag == Some(tag))
            .flat_map(|f| f.nodes)
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        let _ = mesh;
        let mut indices = Vec::with_capacity(nodes.len());
        'next: for node in nodes {
            for (i, e) in self.entries.iter().enumerate() {
                if e.node == node && e.comp == comp {
                    if e.value != value {
                        return Err(FemError::ConflictingBc { node, comp });
                    }
                    indices.push(i);
                    continue 'next;
                }
            }
            indices.push(self.entries.len());
            self.entries.push(DirichletEntry { node, comp, value });
        }
        match self.tags.iter_mut().find(|(t, _)| *t == tag) {
            Some((_, idx)) => idx.extend(indices),
            None => self.tags.push((tag, indices)),
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Global mechanics system: kernels, free-DOF numbering, frozen stiffness
/// pattern and assembly scatter. DOF (node, comp) maps to 2*node + comp.
pub struct MechanicsSystem {
    pub kernels: Vec<ElementKernel>,
    pub dirichlet: DirichletSet,
    free: Vec<Option<usize>>,
    constrained: Vec<(usize, usize)>,
    n_free: usize,
    pub matrix: SparseSym,
    pub body_force: Vector2<f64>,
    /// Constant traction per boundary tag.
    pub tractions: Vec<(i32, Vector2<f64>)>,
}

impl MechanicsSystem {
    pub fn new(mesh: &Mesh, dirichlet: DirichletSet) -> Result<Self, FemError> {
        let n_dof = 2 * mesh.n_nodes();
        let mut kernels = Vec::with_capacity(mesh.n_cells());
        for k in 0..mesh.n_cells() {
            kernels.push(shape_gradients(k, mesh.cell_coords(k))?);
        }
        let mut free = vec![None; n_dof];
        let mut constrained_mask = vec![false; n_dof];
        let mut constrained = Vec::new();
        for (i, e) in dirichlet.entries.iter().enumerate() {
            let dof = 2 * e.node + e.comp as usize;
            constrained_mask[dof] = true;
            constrained.push((dof, i));
        }
        let mut n_free = 0;
        for (dof, slot) in free.iter_mut().enumerate() {
            if !constrained_mask[dof] {
                *slot = Some(n_free);
                n_free += 1;
            }
        }
        let cliques = mesh.cells.iter().map(|cell| {
            let mut c: Vec<usize> = Vec::with_capacity(6);
            for &node in cell {
                for comp in 0..2 {
                    if let Some(f) = free[2 * node + comp] {
                        c.push(f);
                    }
                }
            }
            c
        });
        let matrix = SparseSym::build_pattern(n_free, cliques)?;
        Ok(MechanicsSystem {
            kernels,
            dirichlet,
            free,
            constrained,
            n_free,
            matrix,
            body_force: Vector2::zeros(),
            tractions: Vec::new(),
        })
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn n_dof(&self) -> usize {
        self.free.len()
    }

    /// Writes the prescribed values for the given load factor into the full
    /// displacement vector.
    pub fn apply_dirichlet(&self, u: &mut [f64], load: f64) {
        for &(dof, entry) in &self.constrained {
            u[dof] = self.dirichlet.entries[entry].value.at(load);
        }
    }

    fn element_u(&self, cell: &[usize; 3], u: &[f64]) -> [Vector2<f64>; 3] {
        [
            Vector2::new(u[2 * cell[0]], u[2 * cell[0] + 1]),
            Vector2::new(u[2 * cell[1]], u[2 * cell[1] + 1]),
            Vector2::new(u[2 * cell[2]], u[2 * cell[2] + 1]),
        ]
    }

    pub fn cell_strain(&self, mesh: &Mesh, cell: usize, u: &[f64]) -> Vector4<f64> {
        self.kernels[cell].strain(&self.element_u(&mesh.cells[cell], u))
    }

    fn cell_tractions(&self, topo: &Topology, cell: usize) -> Vec<(u8, Vector2<f64>)> {
        if self.tractions.is_empty() {
            return Vec::new();
        }
        topo.boundary_faces
            .iter()
            .filter(|f| f.cell == cell)
            .filter_map(|f| {
                let tag = f.tag?;
                self.tractions
                    .iter()
                    .find(|(t, _)| *t == tag)
                    .map(|(_, tr)| (f.local, *tr))
            })
            .collect()
    }

    /// Evaluates stress at every cell for the current displacement and
    /// phase field.
    pub fn evaluate_cells(
        &self,
        mesh: &Mesh,
        u: &[f64],
        phi_cell: &[f64],
        model: &BulkModel,
        degradation: &DegradationFn,
    ) -> Result<Vec<StressEval>, FemError> {
        let mut out = Vec::with_capacity(mesh.n_cells());
        for k in 0..mesh.n_cells() {
            let eps = self.cell_strain(mesh, k, u);
            out.push(eval_stress(model, degradation, &eps, phi_cell[k])?);
        }
        Ok(out)
    }

    /// Residual at the free DOFs (internal minus external forces).
    pub fn residual(
        &self,
        mesh: &Mesh,
        topo: &Topology,
        u: &[f64],
        evals: &[StressEval],
    ) -> Vec<f64> {
        let mut r = vec![0.0; self.n_free];
        for k in 0..mesh.n_cells() {
            let kernel = &self.kernels[k];
            let tr = self.cell_tractions(topo, k);
            let re = element_residual(kernel, &evals[k].sigma, &self.body_force, &tr);
            let _ = u;
            for i in 0..3 {
                let node = mesh.cells[k][i];
                for comp in 0..2 {
                    if let Some(f) = self.free[2 * node + comp] {
                        r[f] += re[i][comp];
                    }
                }
            }
        }
        r
    }

    /// Assembles the tangent stiffness over the free DOFs and returns the
    /// negative residual as the Newton right-hand side.
    pub fn assemble(
        &mut self,
        mesh: &Mesh,
        topo: &Topology,
        u: &[f64],
        evals: &[StressEval],
    ) -> Vec<f64> {
        self.matrix.zero_values();
        let mut rhs = vec![0.0; self.n_free];
        for k in 0..mesh.n_cells() {
            let kernel = &self.kernels[k];
            let ke = element_stiffness(kernel, &evals[k].tangent);
            let tr = self.cell_tractions(topo, k);
            let re = element_residual(kernel, &evals[k].sigma, &self.body_force, &tr);
            let cell = &mesh.cells[k];
            let gdof = |li: usize| 2 * cell[li / 2] + li % 2;
            for li in 0..6 {
                let gi = gdof(li);
                let Some(fi) = self.free[gi] else { continue };
                rhs[fi] -= re[li / 2][li % 2];
                for lj in 0..6 {
                    let gj = gdof(lj);
                    if let Some(fj) = self.free[gj] {
                        if fi <= fj {
                            self.matrix.add(fi, fj, ke[(li, lj)]);
                        }
                    }
                }
            }
        }
        let _ = u;
        rhs
    }

    /// Adds the free-DOF correction into the full displacement vector.
    pub fn apply_correction(&self, u: &mut [f64], dx: &[f64]) {
        for (dof, slot) in self.free.iter().enumerate() {
            if let Some(f) = *slot {
                u[dof] += dx[f];
            }
        }
    }

    /// Internal nodal forces from the stress term at every DOF.
    pub fn internal_forces(&self, mesh: &Mesh, evals: &[StressEval]) -> Vec<f64> {
        let mut f = vec![0.0; self.n_dof()];
        for k in 0..mesh.n_cells() {
            let kernel = &self.kernels[k];
            for i in 0..3 {
                let fi = kernel.area * (kernel.b[i].transpose() * evals[k].sigma);
                let node = mesh.cells[k][i];
                f[2 * node] += fi[0];
                f[2 * node + 1] += fi[1];
            }
        }
        f
    }

    /// Force resultants exerted by the supports on the specimen, summed per
    /// boundary tag; this is the applied load on a driven boundary.
    pub fn reactions(&self, f_int: &[f64]) -> Vec<(i32, Vector2<f64>)> {
        let mut out = Vec::new();
        for (tag, entries) in &self.dirichlet.tags {
            let mut sum = Vector2::zeros();
            for &e in entries {
                let entry = &self.dirichlet.entries[e];
                sum[entry.comp as usize] += f_int[2 * entry.node + entry.comp as usize];
            }
            out.push((*tag, sum));
        }
        out
    }
}

/// Equal-order P1 phase-field system for FE-FE comparison runs: consistent
/// 3x3 mass matrices for the reaction term, constant gradients for the
/// Laplacian, and the cell-wise history field applied through a mid-edge
/// quadrature of g'(phi).
pub struct FePhaseSystem {
    pub matrix: SparseSym,
    n_nodes: usize,
}

const MIDEDGE: [[f64; 3]; 3] = [
    [0.5, 0.5, 0.0],
    [0.0, 0.5, 0.5],
    [0.5, 0.0, 0.5],
];

impl FePhaseSystem {
    pub fn new(mesh: &Mesh) -> Result<Self, FemError> {
        let matrix = SparseSym::build_pattern(mesh.n_nodes(), mesh.cells.iter())?;
        Ok(FePhaseSystem {
            matrix,
            n_nodes: mesh.n_nodes(),
        })
    }

    pub fn n_dof(&self) -> usize {
        self.n_nodes
    }

    /// Assembles the Jacobian into the matrix and returns the residual.
    pub fn assemble(
        &mut self,
        mesh: &Mesh,
        kernels: &[ElementKernel],
        phi: &[f64],
        history: &[f64],
        gc: &[f64],
        ell: &[f64],
        degradation: &DegradationFn,
    ) -> Result<Vec<f64>, FemError> {
        self.matrix.zero_values();
        let mut r = vec![0.0; self.n_nodes];
        for k in 0..mesh.n_cells() {
            let kernel = &kernels[k];
            let cell = &mesh.cells[k];
            let a = kernel.area;
            let (gck, ellk, hk) = (gc[k], ell[k], history[k]);
            let p = [phi[cell[0]], phi[cell[1]], phi[cell[2]]];
            for i in 0..3 {
                let gi = cell[i];
                let mut ri = 0.0;
                // Driving term with a 3-point mid-edge rule (exact for the
                // quadratic degradation).
                for q in 0..3 {
                    let phi_q = MIDEDGE[q][0] * p[0] + MIDEDGE[q][1] * p[1] + MIDEDGE[q][2] * p[2];
                    let (_, gp, _) = degradation.eval(phi_q.clamp(0.0, 1.0))?;
                    ri += hk * a / 3.0 * gp * MIDEDGE[q][i];
                }
                for j in 0..3 {
                    let gj = cell[j];
                    let mass = a / 12.0 * if i == j { 2.0 } else { 1.0 };
                    let stiff = gck * ellk * a * kernel.grad[i].dot(&kernel.grad[j]);
                    ri += (gck / ellk) * mass * p[j] + stiff * p[j];
                    if gi <= gj {
                        let mut kij = (gck / ellk) * mass + stiff;
                        for q in 0..3 {
                            let phi_q = MIDEDGE[q][0] * p[0]
                                + MIDEDGE[q][1] * p[1]
                                + MIDEDGE[q][2] * p[2];
                            let (_, _, gpp) = degradation.eval(phi_q.clamp(0.0, 1.0))?;
                            kij += hk * a / 3.0 * gpp * MIDEDGE[q][i] * MIDEDGE[q][j];
                        }
                        self.matrix.add(gi, gj, kij);
                    }
                }
                r[gi] += ri;
            }
        }
        Ok(r)
    }

    /// Crack surface energy of the nodal field: Gc (phi^2/(2 ell) +
    /// (ell/2)|grad phi|^2) integrated with the consistent mass and the
    /// constant element gradients.
    pub fn surface_energy(
        &self,
        mesh: &Mesh,
        kernels: &[ElementKernel],
        phi: &[f64],
        gc: &[f64],
        ell: &[f64],
    ) -> f64 {
        let mut e = 0.0;
        for k in 0..mesh.n_cells() {
            let kernel = &kernels[k];
            let cell = &mesh.cells[k];
            let a = kernel.area;
            let p = [phi[cell[0]], phi[cell[1]], phi[cell[2]]];
            let mut mass = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    mass += p[i] * p[j] * a / 12.0 * if i == j { 2.0 } else { 1.0 };
                }
            }
            let grad = p[0] * kernel.grad[0] + p[1] * kernel.grad[1] + p[2] * kernel.grad[2];
            e += gc[k] * (mass / (2.0 * ell[k]) + 0.5 * ell[k] * a * grad.norm_squared());
        }
        e
    }
}
