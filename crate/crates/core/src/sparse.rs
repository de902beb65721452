//! Symmetric sparse storage and linear solution with pattern reuse.
//!
//! Only the upper triangle is assembled and stored (compressed sparse row).
//! The pattern is built once from connectivity cliques and frozen; value
//! refills never change it, so the direct solver runs its symbolic analysis
//! a single time per pattern and only refactorizes numerically afterwards.

use std::sync::atomic::{AtomicU64, Ordering};

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("index {0} out of range for dimension {1}")]
    IndexOutOfRange(usize, usize),
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("iterative solver did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("solver is bound to a different matrix pattern")]
    PatternMismatch,
    #[error("solution failed the residual tolerance: {0:.3e}")]
    ResidualTooLarge(f64),
    #[error("symbolic factorization failed: {0}")]
    Symbolic(String),
}

static PATTERN_IDS: AtomicU64 = AtomicU64::new(0);

/// Symmetric sparse matrix holding the upper triangle in CSR form.
///
/// The pattern is frozen at construction; `add` only touches values.
#[derive(Debug, Clone)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    pattern_id: u64,
    frozen: bool,
}

impl SparseSym {
    /// Builds the pattern as the union of all cliques' upper-triangle pairs
    /// (diagonal included), with sorted column indices per row.
    pub fn build_pattern<I, S>(n: usize, cliques: I) -> Result<SparseSym, SparseError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[usize]>,
    {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            rows[i].push(i);
        }
        for clique in cliques {
            let c = clique.as_ref();
            for (a, &i) in c.iter().enumerate() {
                if i >= n {
                    return Err(SparseError::IndexOutOfRange(i, n));
                }
                for &j in &c[a..] {
                    if j >= n {
                        return Err(SparseError::IndexOutOfRange(j, n));
                    }
                    let (r, c) = (i.min(j), i.max(j));
                    rows[r].push(c);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Ok(SparseSym {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
            pattern_id: PATTERN_IDS.fetch_add(1, Ordering::Relaxed),
            frozen: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_upper(&self) -> usize {
        self.col_idx.len()
    }

    /// Stored-upper-triangle density, nnz / n^2.
    pub fn density(&self) -> f64 {
        self.nnz_upper() as f64 / (self.n as f64 * self.n as f64)
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn pattern_id(&self) -> u64 {
        self.pattern_id
    }

    pub fn zero_values(&mut self) {
        self.values.fill(0.0);
    }

    /// Adds `v` at (i, j); the pair is mirrored into the upper triangle.
    /// Panics if the entry is not part of the frozen pattern.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = (i.min(j), i.max(j));
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        match self.col_idx[lo..hi].binary_search(&c) {
            Ok(pos) => self.values[lo + pos] += v,
            Err(_) => panic!("entry ({r}, {c}) not in frozen pattern"),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = (i.min(j), i.max(j));
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        match self.col_idx[lo..hi].binary_search(&c) {
            Ok(pos) => self.values[lo + pos],
            Err(_) => 0.0,
        }
    }

    /// y = A x with A expanded to its full symmetric form.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.fill(0.0);
        for r in 0..self.n {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[idx];
                let v = self.values[idx];
                y[r] += v * x[c];
                if c != r {
                    y[c] += v * x[r];
                }
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Relative residual ||Ax - b|| / ||b||.
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.n];
        self.matvec(x, &mut ax);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.n {
            num += (ax[i] - b[i]) * (ax[i] - b[i]);
            den += b[i] * b[i];
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }

    /// The stored upper CSR read column-major is the lower triangle in CSC,
    /// which is what the factorization consumes.
    fn faer_view(&self) -> (SymbolicSparseColMatRef<'_, usize>, SparseColMatRef<'_, usize, f64>) {
        let sym = SymbolicSparseColMatRef::new_checked(
            self.n,
            self.n,
            &self.row_ptr,
            None,
            &self.col_idx,
        );
        (sym, SparseColMatRef::new(sym, &self.values))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolverStats {
    pub symbolic_factorizations: usize,
    pub numeric_factorizations: usize,
    pub solves: usize,
    pub pcg_iterations: usize,
}

/// Direct sparse Cholesky bound to one frozen pattern. Symbolic analysis runs
/// on the first solve and is reused for every refill afterwards.
#[derive(Debug, Default)]
pub struct DirectSolver {
    symbolic: Option<(u64, SymbolicLlt<usize>)>,
    pub stats: SolverStats,
}

impl DirectSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&mut self, mat: &SparseSym, rhs: &[f64]) -> Result<Vec<f64>, SparseError> {
        assert_eq!(rhs.len(), mat.dim());
        let (sym_view, mat_view) = mat.faer_view();
        let symbolic = match &self.symbolic {
            Some((id, s)) if *id == mat.pattern_id() => s.clone(),
            Some(_) => return Err(SparseError::PatternMismatch),
            None => {
                let s = SymbolicLlt::try_new(sym_view, Side::Lower)
                    .map_err(|e| SparseError::Symbolic(format!("{e:?}")))?;
                self.stats.symbolic_factorizations += 1;
                self.symbolic = Some((mat.pattern_id(), s.clone()));
                s
            }
        };
        let llt = Llt::try_new_with_symbolic(symbolic, mat_view, Side::Lower).map_err(|e| {
            match e {
                faer::sparse::linalg::LltError::Numeric(inner) => {
                    let faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot {
                        index,
                    } = inner;
                    SparseError::NotPositiveDefinite { pivot: index }
                }
                other => SparseError::Symbolic(format!("{other:?}")),
            }
        })?;
        self.stats.numeric_factorizations += 1;

        let mut x = rhs.to_vec();
        llt.solve_in_place_with_conj(
            faer::Conj::No,
            MatMut::from_column_major_slice_mut(&mut x, mat.dim(), 1),
        );
        self.stats.solves += 1;

        // One round of iterative refinement if the factorization lost digits.
        let mut rel = mat.relative_residual(&x, rhs);
        if rel > 1e-10 {
            let mut ax = vec![0.0; mat.dim()];
            mat.matvec(&x, &mut ax);
            let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            llt.solve_in_place_with_conj(
                faer::Conj::No,
                MatMut::from_column_major_slice_mut(&mut r, mat.dim(), 1),
            );
            for (xi, ri) in x.iter_mut().zip(&r) {
                *xi += ri;
            }
            rel = mat.relative_residual(&x, rhs);
            if rel > 1e-10 {
                return Err(SparseError::ResidualTooLarge(rel));
            }
        }
        Ok(x)
    }
}

/// Jacobi-preconditioned conjugate gradient fallback.
#[derive(Debug)]
pub struct PcgSolver {
    pub tolerance: f64,
    pub max_iter_factor: usize,
    pub stats: SolverStats,
}

impl Default for PcgSolver {
    fn default() -> Self {
        PcgSolver {
            tolerance: 1e-10,
            max_iter_factor: 10,
            stats: SolverStats::default(),
        }
    }
}

impl PcgSolver {
    pub fn solve(&mut self, mat: &SparseSym, rhs: &[f64]) -> Result<Vec<f64>, SparseError> {
        let n = mat.dim();
        assert_eq!(rhs.len(), n);
        let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            self.stats.solves += 1;
            return Ok(vec![0.0; n]);
        }
        let inv_diag: Vec<f64> = mat
            .diagonal()
            .iter()
            .map(|&d| {
                if d > 0.0 {
                    1.0 / d
                } else {
                    1.0
                }
            })
            .collect();
        let mut x = vec![0.0; n];
        let mut r = rhs.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; n];
        let max_iter = self.max_iter_factor * n;
        for it in 0..max_iter {
            mat.matvec(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                return Err(SparseError::NotPositiveDefinite { pivot: it });
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            self.stats.pcg_iterations += 1;
            if rnorm <= self.tolerance * bnorm {
                self.stats.solves += 1;
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(SparseError::NoConvergence(max_iter))
    }
}

/// Solver selection for the two global systems.
#[derive(Debug)]
pub enum LinearSolver {
    Direct(DirectSolver),
    Pcg(PcgSolver),
}

impl LinearSolver {
    pub fn direct() -> Self {
        LinearSolver::Direct(DirectSolver::new())
    }

    pub fn pcg() -> Self {
        LinearSolver::Pcg(PcgSolver::default())
    }

    pub fn solve(&mut self, mat: &SparseSym, rhs: &[f64]) -> Result<Vec<f64>, SparseError> {
        match self {
            LinearSolver::Direct(s) => s.solve(mat, rhs),
            LinearSolver::Pcg(s) => s.solve(mat, rhs),
        }
    }

    pub fn stats(&self) -> SolverStats {
        match self {
            LinearSolver::Direct(s) => s.stats,
            LinearSolver::Pcg(s) => s.stats,
        }
    }
}
